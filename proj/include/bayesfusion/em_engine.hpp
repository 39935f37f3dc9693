#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "bayesfusion/errors.hpp"
#include "bayesfusion/image_plane.hpp"
#include "bayesfusion/numeric_ops.hpp"

namespace bfuse {

struct FusionParams {
  double lambda_g = 0.5;  // gradient (TV) penalty strength
  double rho = 0.001;     // half-quadratic coupling
  int t_out = 15;         // outer EM iterations
  int t_in = 2;           // coordinate sweeps per M-step
  double eps = 1e-6;      // floor on the E-step expectations
  Scale scale = Scale::unit;

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(lambda_g)) throw invalid_input("lambda_g must be positive, got " + std::to_string(lambda_g));
    if (!positive(rho)) throw invalid_input("rho must be positive, got " + std::to_string(rho));
    if (!positive(eps)) throw invalid_input("eps must be positive, got " + std::to_string(eps));
    if (t_out < 1) throw invalid_input("t_out must be >= 1, got " + std::to_string(t_out));
    if (t_in < 1) throw invalid_input("t_in must be >= 1, got " + std::to_string(t_in));
  }
};

/// Everything the EM loop mutates. X is the residual I - V; H and F are the
/// splitting surrogates of X and grad H; alpha/beta are E[1/a], E[1/b] and
/// W1 = sqrt(alpha), W2 = sqrt(beta).
struct EmState {
  ImagePlane X;
  ImagePlane H;
  GradientField F;
  ImagePlane W1;
  ImagePlane W2;
  ImagePlane alpha;
  ImagePlane beta;
  double lambda = 1.0;
  double tau = 1.0;
};

inline EmState init_state(const ImagePlane& y) {
  const std::size_t h = y.height(), w = y.width();
  EmState s;
  s.X = ImagePlane(h, w, 0.0);
  s.H = ImagePlane(h, w, 0.0);
  s.F = GradientField(h, w);
  s.W1 = ImagePlane(h, w, 1.0);
  s.W2 = ImagePlane(h, w, 1.0);
  s.alpha = ImagePlane(h, w, 1.0);
  s.beta = ImagePlane(h, w, 1.0);
  s.lambda = 1.0;
  s.tau = 1.0;
  return s;
}

/// Posterior expectations of the inverse latent variances:
///   alpha = sqrt(2 (y - x)^2 / lambda),  beta = sqrt(2 x^2 / tau),
/// both floored at params.eps.
inline EmState e_step(EmState state, const ImagePlane& y, const FusionParams& params) {
  if (!(state.lambda > 0.0) || !(state.tau > 0.0))
    throw invalid_state("e_step: lambda and tau must be positive (lambda=" +
                        std::to_string(state.lambda) + ", tau=" + std::to_string(state.tau) + ")");
  require_same_shape(state.X, y, "e_step");

  const auto x = state.X.values();
  const auto yv = y.values();
  auto a = state.alpha.values();
  auto b = state.beta.values();
  auto w1 = state.W1.values();
  auto w2 = state.W2.values();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = yv[k] - x[k];
    a[k] = std::max(std::sqrt(2.0 * r * r / state.lambda), params.eps);
    b[k] = std::max(std::sqrt(2.0 * x[k] * x[k] / state.tau), params.eps);
    w1[k] = std::sqrt(a[k]);
    w2[k] = std::sqrt(b[k]);
  }
  return state;
}

/// Empirical-Bayes update. Returns (lambda, tau) where
///   lambda = mean(1/alpha) + lambda_old / 2
/// and likewise for tau with beta. The sums run in row-major order.
inline std::pair<double, double> update_hyperparams(const EmState& state) {
  const auto a = state.alpha.values();
  const auto b = state.beta.values();
  double sa = 0.0, sb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sa += 1.0 / a[k];
    sb += 1.0 / b[k];
  }
  const double n = static_cast<double>(a.size());
  const double lambda_tilde = 2.0 / state.lambda;
  const double tau_tilde = 2.0 / state.tau;
  return {sa / n + 1.0 / lambda_tilde, sb / n + 1.0 / tau_tilde};
}

/// Closed-form X update:
///   X = (2 W1^2 Y + rho H) / (2 W1^2 + 2 W2^2 + rho)
inline ImagePlane update_x(const EmState& state, const ImagePlane& y, const FusionParams& params) {
  require_same_shape(state.W1, y, "update_x");
  require_same_shape(state.W2, y, "update_x");
  require_same_shape(state.H, y, "update_x");
  ImagePlane x(y.height(), y.width());
  auto out = x.values();
  const auto w1 = state.W1.values();
  const auto w2 = state.W2.values();
  const auto hv = state.H.values();
  const auto yv = y.values();
  const double rho = params.rho;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double a = w1[k] * w1[k];
    const double b = w2[k] * w2[k];
    out[k] = (2.0 * a * yv[k] + rho * hv[k]) / (2.0 * a + 2.0 * b + rho);
  }
  return x;
}

/// F = S(grad H, lambda_g / rho), element-wise.
inline GradientField update_f(const ImagePlane& h, const FusionParams& params) {
  return soft_threshold(gradient(h), params.lambda_g / params.rho);
}

/// The half-quadratic splitting objective minimized by the M-step:
///   ||W1 (X-Y)||^2 + ||W2 X||^2 + lambda_g ||F||_1
///     + rho/2 (||F - grad H||^2 + ||H - X||^2)
inline double splitting_objective(const EmState& s, const ImagePlane& y, const FusionParams& params) {
  require_same_shape(s.X, y, "splitting_objective");
  const GradientField gh = gradient(s.H);
  double fit = 0.0, prior = 0.0, l1 = 0.0, couple_f = 0.0, couple_h = 0.0;
  const std::size_t n = y.size();
  const auto x = s.X.values(), yv = y.values(), w1 = s.W1.values(), w2 = s.W2.values();
  const auto hv = s.H.values(), fx = s.F.dx.values(), fy = s.F.dy.values();
  const auto gx = gh.dx.values(), gy = gh.dy.values();
  for (std::size_t k = 0; k < n; ++k) {
    const double r = w1[k] * (x[k] - yv[k]);
    const double p = w2[k] * x[k];
    fit += r * r;
    prior += p * p;
    l1 += std::abs(fx[k]) + std::abs(fy[k]);
    couple_f += (fx[k] - gx[k]) * (fx[k] - gx[k]) + (fy[k] - gy[k]) * (fy[k] - gy[k]);
    couple_h += (hv[k] - x[k]) * (hv[k] - x[k]);
  }
  return fit + prior + params.lambda_g * l1 + 0.5 * params.rho * (couple_f + couple_h);
}

/// t_in coordinate-descent sweeps of X, F, H in that order. The solver must
/// match the plane dimensions.
inline EmState m_step(EmState state, const ImagePlane& y, const FusionParams& params,
                      HSolver& solver) {
  for (int sweep = 0; sweep < params.t_in; ++sweep) {
    state.X = update_x(state, y, params);
    state.F = update_f(state.H, params);
    state.H = solver.solve(state.X, state.F);
  }
  return state;
}

inline EmState m_step(EmState state, const ImagePlane& y, const FusionParams& params) {
  HSolver solver(y.height(), y.width());
  return m_step(std::move(state), y, params, solver);
}

namespace detail {

inline void require_in_range(const ImagePlane& p, Scale scale, const char* name) {
  const double hi = max_intensity(scale);
  for (double v : p.values()) {
    if (!std::isfinite(v) || v < 0.0 || v > hi)
      throw invalid_input(std::string("fuse: ") + name + " has intensity " + std::to_string(v) +
                          " outside [0, " + std::to_string(hi) + "] for " + to_string(scale) +
                          " scale");
  }
}

}  // namespace detail

/// Run the full EM loop and return the final state (before forming I).
/// Each outer iteration is M-step, E-step, then hyperparameter update.
inline EmState run_em(const ImagePlane& y, const FusionParams& params) {
  params.validate();
  EmState state = init_state(y);
  HSolver solver(y.height(), y.width());
  for (int t = 0; t < params.t_out; ++t) {
    state = m_step(std::move(state), y, params, solver);
    state = e_step(std::move(state), y, params);
    std::tie(state.lambda, state.tau) = update_hyperparams(state);
  }
  return state;
}

/// Fuse a registered infrared/visible pair. Works on Y = U - V and returns
/// I = X + V clamped to the intensity range of params.scale.
inline ImagePlane fuse(const ImagePlane& u, const ImagePlane& v, const FusionParams& params = {}) {
  params.validate();
  require_same_shape(u, v, "fuse");
  detail::require_in_range(u, params.scale, "infrared image");
  detail::require_in_range(v, params.scale, "visible image");

  ImagePlane y(u.height(), u.width());
  {
    auto yv = y.values();
    const auto uv = u.values(), vv = v.values();
    for (std::size_t k = 0; k < yv.size(); ++k) yv[k] = uv[k] - vv[k];
  }

  const EmState state = run_em(y, params);

  ImagePlane out(u.height(), u.width());
  auto ov = out.values();
  const auto xv = state.X.values(), vv = v.values();
  const double hi = max_intensity(params.scale);
  for (std::size_t k = 0; k < ov.size(); ++k) ov[k] = std::clamp(xv[k] + vv[k], 0.0, hi);
  if (!out.all_finite()) throw internal_error("fuse: non-finite output");
  return out;
}

}  // namespace bfuse
