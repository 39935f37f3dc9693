#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "bayesfusion/errors.hpp"
#include "bayesfusion/image_plane.hpp"

namespace bfuse {

// Forward differences with periodic wrap:
//   dx(i,j) = p(i, j+1 mod w) - p(i,j)
//   dy(i,j) = p(i+1 mod h, j) - p(i,j)
inline GradientField gradient(const ImagePlane& p) {
  if (p.height() < 2 || p.width() < 2) throw invalid_input("gradient: plane must be at least 2x2");
  const std::size_t h = p.height(), w = p.width();
  GradientField g(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t inext = (i + 1 == h) ? 0 : i + 1;
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t jnext = (j + 1 == w) ? 0 : j + 1;
      g.dx(i, j) = p(i, jnext) - p(i, j);
      g.dy(i, j) = p(inext, j) - p(i, j);
    }
  }
  return g;
}

/// Adjoint of `gradient` under the periodic boundary, so that
/// <gradient(p), f> == <p, divergence_adjoint(f)> for every p and f.
inline ImagePlane divergence_adjoint(const GradientField& f) {
  if (!f.dx.same_shape(f.dy)) throw invalid_input("divergence_adjoint: channel shapes differ");
  const std::size_t h = f.height(), w = f.width();
  ImagePlane out(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t iprev = (i == 0) ? h - 1 : i - 1;
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t jprev = (j == 0) ? w - 1 : j - 1;
      out(i, j) = (f.dx(i, jprev) - f.dx(i, j)) + (f.dy(iprev, j) - f.dy(i, j));
    }
  }
  return out;
}

/// sign(v) * max(|v| - gamma, 0)
inline double soft_threshold(double v, double gamma) {
  if (!(gamma >= 0.0)) throw invalid_input("soft_threshold: gamma must be nonnegative");
  const double mag = std::abs(v) - gamma;
  if (mag <= 0.0) return 0.0;
  return v > 0.0 ? mag : -mag;
}

inline GradientField soft_threshold(const GradientField& f, double gamma) {
  if (!(gamma >= 0.0)) throw invalid_input("soft_threshold: gamma must be nonnegative");
  GradientField out = f;
  for (double& v : out.dx.values()) v = soft_threshold(v, gamma);
  for (double& v : out.dy.values()) v = soft_threshold(v, gamma);
  return out;
}

namespace detail {

// The FFTW planner is not re-entrant; execution of an existing plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline FftwBuffer fftw_buffer(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer(p);
}

/// Pair of in-place 2D complex plans of one size. Plans are created with
/// FFTW_ESTIMATE on fftw_malloc'd storage, so the chosen algorithm (and
/// therefore every rounding) depends only on the dimensions.
class Fft2d {
 public:
  Fft2d(std::size_t height, std::size_t width)
      : height_(height), width_(width), buffer_(fftw_buffer(height * width)) {
    std::lock_guard lock(fftw_planner_mutex());
    const int h = static_cast<int>(height), w = static_cast<int>(width);
    forward_ = fftw_plan_dft_2d(h, w, buffer_.get(), buffer_.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(h, w, buffer_.get(), buffer_.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    if (forward_ == nullptr || backward_ == nullptr) {
      destroy();
      throw internal_error("FFTW plan creation failed");
    }
  }
  ~Fft2d() { destroy(); }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  std::size_t size() const noexcept { return height_ * width_; }

  // Buffers passed here must come from fftw_buffer(size()).
  void forward(fftw_complex* data) const { fftw_execute_dft(forward_, data, data); }
  // Unnormalized: the caller divides by size().
  void backward(fftw_complex* data) const { fftw_execute_dft(backward_, data, data); }

 private:
  void destroy() noexcept {
    std::lock_guard lock(fftw_planner_mutex());
    if (forward_ != nullptr) fftw_destroy_plan(forward_);
    if (backward_ != nullptr) fftw_destroy_plan(backward_);
    forward_ = backward_ = nullptr;
  }

  std::size_t height_, width_;
  FftwBuffer buffer_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline void load_real(const ImagePlane& p, fftw_complex* dst) {
  const auto v = p.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    dst[k][0] = v[k];
    dst[k][1] = 0.0;
  }
}

}  // namespace detail

/// The two forward-difference kernels embedded in an h x w periodic grid,
/// origin at (0,0), together with their transfer functions.
///
/// kx holds -1 at (0,0) and +1 at (0,w-1); ky holds -1 at (0,0) and +1 at
/// (h-1,0). Circular convolution with these reproduces `gradient` exactly.
class GradientKernels {
 public:
  GradientKernels(std::size_t height, std::size_t width)
      : kx_(height, width), ky_(height, width) {
    kx_(0, 0) = -1.0;
    kx_(0, width - 1) = 1.0;
    ky_(0, 0) = -1.0;
    ky_(height - 1, 0) = 1.0;

    detail::Fft2d fft(height, width);
    auto buf = detail::fftw_buffer(fft.size());
    otf_x_ = transform(fft, kx_, buf.get());
    otf_y_ = transform(fft, ky_, buf.get());

    denominator_.resize(fft.size());
    for (std::size_t k = 0; k < denominator_.size(); ++k)
      denominator_[k] = 1.0 + std::norm(otf_x_[k]) + std::norm(otf_y_[k]);
  }

  std::size_t height() const noexcept { return kx_.height(); }
  std::size_t width() const noexcept { return kx_.width(); }

  const ImagePlane& kx() const noexcept { return kx_; }
  const ImagePlane& ky() const noexcept { return ky_; }
  const std::vector<std::complex<double>>& otf_x() const noexcept { return otf_x_; }
  const std::vector<std::complex<double>>& otf_y() const noexcept { return otf_y_; }
  // 1 + |otf_x|^2 + |otf_y|^2
  const std::vector<double>& denominator() const noexcept { return denominator_; }

 private:
  static std::vector<std::complex<double>> transform(const detail::Fft2d& fft,
                                                     const ImagePlane& k, fftw_complex* buf) {
    detail::load_real(k, buf);
    fft.forward(buf);
    std::vector<std::complex<double>> out(fft.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {buf[i][0], buf[i][1]};
    return out;
  }

  ImagePlane kx_, ky_;
  std::vector<std::complex<double>> otf_x_, otf_y_;
  std::vector<double> denominator_;
};

/// Reusable frequency-domain solver for
///   argmin_H ||H - X||^2 + ||F - grad H||^2
/// i.e. (I + grad^T grad) H = X + grad^T F, diagonalized by the DFT.
/// Owns scratch buffers, so one instance must not be shared across threads.
class HSolver {
 public:
  static constexpr double imag_tolerance = 1e-9;

  explicit HSolver(GradientKernels kernels)
      : kernels_(std::move(kernels)),
        fft_(kernels_.height(), kernels_.width()),
        acc_(detail::fftw_buffer(fft_.size())),
        tmp_(detail::fftw_buffer(fft_.size())) {}

  HSolver(std::size_t height, std::size_t width) : HSolver(GradientKernels(height, width)) {}

  const GradientKernels& kernels() const noexcept { return kernels_; }

  ImagePlane solve(const ImagePlane& x, const GradientField& f) {
    const std::size_t h = kernels_.height(), w = kernels_.width();
    if (x.height() != h || x.width() != w || f.height() != h || f.width() != w ||
        !f.dx.same_shape(f.dy))
      throw invalid_input("solve_h: dimension mismatch between X, F and kernels");

    const std::size_t n = fft_.size();
    fftw_complex* acc = acc_.get();
    fftw_complex* tmp = tmp_.get();

    detail::load_real(x, acc);
    fft_.forward(acc);

    accumulate_conj_product(f.dx, kernels_.otf_x(), acc, tmp);
    accumulate_conj_product(f.dy, kernels_.otf_y(), acc, tmp);

    const auto& den = kernels_.denominator();
    for (std::size_t k = 0; k < n; ++k) {
      acc[k][0] /= den[k];
      acc[k][1] /= den[k];
    }
    fft_.backward(acc);

    ImagePlane out(h, w);
    auto vals = out.values();
    const double inv_n = 1.0 / static_cast<double>(n);
    double max_imag = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      vals[k] = acc[k][0] * inv_n;
      max_imag = std::max(max_imag, std::abs(acc[k][1] * inv_n));
    }
    if (!(max_imag < imag_tolerance))
      throw internal_error("solve_h: imaginary residue " + std::to_string(max_imag) +
                           " exceeds tolerance");
    return out;
  }

 private:
  // acc += conj(otf) * fft(channel)
  void accumulate_conj_product(const ImagePlane& channel,
                               const std::vector<std::complex<double>>& otf,
                               fftw_complex* acc, fftw_complex* tmp) const {
    detail::load_real(channel, tmp);
    fft_.forward(tmp);
    for (std::size_t k = 0; k < otf.size(); ++k) {
      const std::complex<double> prod = std::conj(otf[k]) * std::complex<double>(tmp[k][0], tmp[k][1]);
      acc[k][0] += prod.real();
      acc[k][1] += prod.imag();
    }
  }

  GradientKernels kernels_;
  detail::Fft2d fft_;
  detail::FftwBuffer acc_, tmp_;
};

/// One-shot form of HSolver::solve.
inline ImagePlane solve_h(const ImagePlane& x, const GradientField& f, const GradientKernels& k) {
  HSolver solver(k);
  return solver.solve(x, f);
}

}  // namespace bfuse
