#pragma once

#include <stdexcept>
#include <string>

namespace bfuse {

// Bad argument: wrong dimensions, out-of-range values, invalid parameters.
struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// EM state that violates its own invariants (e.g. non-positive scales).
struct invalid_state : std::logic_error {
  using std::logic_error::logic_error;
};

// File could not be opened, read or written.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File decoded but holds a layout we do not handle (bit depth, channels).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numeric post-condition failed that no valid input should trigger.
struct internal_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bfuse
