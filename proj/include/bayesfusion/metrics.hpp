#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bayesfusion/errors.hpp"
#include "bayesfusion/image_plane.hpp"

namespace bfuse {

/// Table-1 style quality scores for one (infrared, visible, fused) triple.
/// `sd` is always expressed in 8-bit intensity units so that reports from
/// unit- and byte-scale runs are comparable.
struct MetricReport {
  double en = 0.0;
  double mi = 0.0;
  double qabf = 0.0;
  double sd = 0.0;
  double ssim_sum = 0.0;
  double ssim_mean = 0.0;
};

namespace metrics {

inline constexpr std::size_t histogram_bins = 256;
inline constexpr std::size_t ssim_window = 8;

// Xydeas-Petrovic sigmoid constants.
inline constexpr double qabf_gamma_g = 0.9994;
inline constexpr double qabf_kappa_g = -15.0;
inline constexpr double qabf_sigma_g = 0.5;
inline constexpr double qabf_gamma_a = 0.9879;
inline constexpr double qabf_kappa_a = -22.0;
inline constexpr double qabf_sigma_a = 0.8;

/// 8-bit level of every pixel: round-half-away-from-zero of the intensity
/// rescaled to [0,255], clamped.
inline std::vector<std::uint8_t> quantize(const ImagePlane& p, Scale scale) {
  const double k = 255.0 / max_intensity(scale);
  std::vector<std::uint8_t> q(p.size());
  const auto v = p.values();
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = static_cast<std::uint8_t>(std::clamp(std::round(v[i] * k), 0.0, 255.0));
  return q;
}

namespace detail {

inline double entropy_of_counts(std::span<const std::size_t> counts, std::size_t total) {
  const double n = static_cast<double>(total);
  double e = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    e -= p * std::log2(p);
  }
  return e;
}

inline double entropy_of_levels(std::span<const std::uint8_t> q) {
  std::array<std::size_t, histogram_bins> hist{};
  for (auto l : q) ++hist[l];
  return entropy_of_counts(hist, q.size());
}

// MI(a;b) = H(a) + H(b) - H(a,b), clamped at zero against roundoff.
inline double mutual_information_levels(std::span<const std::uint8_t> a,
                                        std::span<const std::uint8_t> b) {
  std::vector<std::size_t> joint(histogram_bins * histogram_bins, 0);
  for (std::size_t k = 0; k < a.size(); ++k) ++joint[a[k] * histogram_bins + b[k]];
  const double h_joint = entropy_of_counts(joint, a.size());
  return std::max(0.0, entropy_of_levels(a) + entropy_of_levels(b) - h_joint);
}

struct EdgeMap {
  std::vector<double> strength;
  std::vector<double> orientation;
};

// 3x3 Sobel on interior pixels only; output is (h-2) x (w-2), row-major.
inline EdgeMap sobel(const ImagePlane& p) {
  const std::size_t h = p.height(), w = p.width();
  EdgeMap m;
  m.strength.reserve((h - 2) * (w - 2));
  m.orientation.reserve((h - 2) * (w - 2));
  for (std::size_t i = 1; i + 1 < h; ++i) {
    for (std::size_t j = 1; j + 1 < w; ++j) {
      const double sx = (p(i - 1, j + 1) + 2.0 * p(i, j + 1) + p(i + 1, j + 1)) -
                        (p(i - 1, j - 1) + 2.0 * p(i, j - 1) + p(i + 1, j - 1));
      const double sy = (p(i + 1, j - 1) + 2.0 * p(i + 1, j) + p(i + 1, j + 1)) -
                        (p(i - 1, j - 1) + 2.0 * p(i - 1, j) + p(i - 1, j + 1));
      m.strength.push_back(std::sqrt(sx * sx + sy * sy));
      m.orientation.push_back(sx == 0.0 ? std::numbers::pi / 2.0 : std::atan(sy / sx));
    }
  }
  return m;
}

// Per-pixel edge preservation Q^{SF} of source edges S in fused edges F.
inline double edge_preservation(double gs, double as, double gf, double af) {
  double g = 0.0;
  if (gs > 0.0 && gf > 0.0) g = gs > gf ? gf / gs : gs / gf;
  const double a = std::abs(std::abs(as - af) - std::numbers::pi / 2.0) * 2.0 / std::numbers::pi;
  const double qg = qabf_gamma_g / (1.0 + std::exp(qabf_kappa_g * (g - qabf_sigma_g)));
  const double qa = qabf_gamma_a / (1.0 + std::exp(qabf_kappa_a * (a - qabf_sigma_a)));
  return qg * qa;
}

// Sums over all 8x8 windows of a per-pixel quantity, via row then column
// passes of exact 8-term sums. Output is (h-7) x (w-7).
inline std::vector<double> window_sums(const std::vector<double>& v, std::size_t h, std::size_t w) {
  const std::size_t n = ssim_window;
  const std::size_t oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += v[i * w + j + k];
      rows[i * ow + j] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += rows[(i + k) * ow + j];
      out[i * ow + j] = s;
    }
  return out;
}

}  // namespace detail

/// Shannon entropy (bits) of the 256-bin histogram of the 8-bit quantized image.
inline double entropy(const ImagePlane& i, Scale scale = Scale::unit) {
  return detail::entropy_of_levels(quantize(i, scale));
}

/// MI(u;i) + MI(v;i) in bits from 256x256 joint histograms.
inline double mutual_information(const ImagePlane& u, const ImagePlane& v, const ImagePlane& i,
                                 Scale scale = Scale::unit) {
  require_same_shape(u, i, "mutual_information");
  require_same_shape(v, i, "mutual_information");
  const auto qu = quantize(u, scale), qv = quantize(v, scale), qi = quantize(i, scale);
  return detail::mutual_information_levels(qu, qi) + detail::mutual_information_levels(qv, qi);
}

/// Xydeas-Petrovic edge-preservation index Q^{AB/F}, evaluated on the
/// interior pixels where the 3x3 Sobel stencil fits. Returns 0 when neither
/// source has any edge. Scale-invariant.
inline double qabf(const ImagePlane& u, const ImagePlane& v, const ImagePlane& i) {
  require_same_shape(u, i, "qabf");
  require_same_shape(v, i, "qabf");
  if (i.height() < 3 || i.width() < 3) throw invalid_input("qabf: images must be at least 3x3");
  const auto eu = detail::sobel(u), ev = detail::sobel(v), ei = detail::sobel(i);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < ei.strength.size(); ++k) {
    const double gu = eu.strength[k], gv = ev.strength[k];
    const double qu = detail::edge_preservation(gu, eu.orientation[k], ei.strength[k], ei.orientation[k]);
    const double qv = detail::edge_preservation(gv, ev.orientation[k], ei.strength[k], ei.orientation[k]);
    num += qu * gu + qv * gv;
    den += gu + gv;
  }
  return den > 0.0 ? num / den : 0.0;
}

/// Population standard deviation, in the plane's own units.
inline double std_dev(const ImagePlane& i) {
  const auto v = i.values();
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n);
}

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights,
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L the dynamic range).
inline double ssim(const ImagePlane& a, const ImagePlane& b, Scale scale = Scale::unit) {
  require_same_shape(a, b, "ssim");
  const std::size_t h = a.height(), w = a.width();
  if (h < ssim_window || w < ssim_window)
    throw invalid_input("ssim: images must be at least 8x8, got " + std::to_string(h) + "x" +
                        std::to_string(w));
  const double range = max_intensity(scale);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  const auto av = a.values(), bv = b.values();
  std::vector<double> xa(av.begin(), av.end()), xb(bv.begin(), bv.end());
  std::vector<double> aa(xa.size()), bb(xa.size()), ab(xa.size());
  for (std::size_t k = 0; k < xa.size(); ++k) {
    aa[k] = xa[k] * xa[k];
    bb[k] = xb[k] * xb[k];
    ab[k] = xa[k] * xb[k];
  }
  const auto sa = detail::window_sums(xa, h, w), sb = detail::window_sums(xb, h, w);
  const auto saa = detail::window_sums(aa, h, w), sbb = detail::window_sums(bb, h, w);
  const auto sab = detail::window_sums(ab, h, w);

  const double n = static_cast<double>(ssim_window * ssim_window);
  double total = 0.0;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    const double ma = sa[k] / n, mb = sb[k] / n;
    const double va = saa[k] / n - ma * ma;
    const double vb = sbb[k] / n - mb * mb;
    const double cov = sab[k] / n - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(sa.size());
}

struct SsimPair {
  double sum;
  double mean;
};

/// SSIM(u,i) + SSIM(v,i) and their average.
inline SsimPair ssim_pair(const ImagePlane& u, const ImagePlane& v, const ImagePlane& i,
                          Scale scale = Scale::unit) {
  require_same_shape(u, i, "ssim_pair");
  require_same_shape(v, i, "ssim_pair");
  const double s = ssim(u, i, scale) + ssim(v, i, scale);
  return {s, s / 2.0};
}

inline MetricReport evaluate(const ImagePlane& u, const ImagePlane& v, const ImagePlane& i,
                             Scale scale = Scale::unit) {
  require_same_shape(u, i, "evaluate");
  require_same_shape(v, i, "evaluate");
  MetricReport r;
  r.en = entropy(i, scale);
  r.mi = mutual_information(u, v, i, scale);
  r.qabf = qabf(u, v, i);
  r.sd = std_dev(i) * (255.0 / max_intensity(scale));
  const auto s = ssim_pair(u, v, i, scale);
  r.ssim_sum = s.sum;
  r.ssim_mean = s.mean;
  return r;
}

/// Field-wise arithmetic mean.
inline MetricReport mean_report(std::span<const MetricReport> reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.en += r.en;
    m.mi += r.mi;
    m.qabf += r.qabf;
    m.sd += r.sd;
    m.ssim_sum += r.ssim_sum;
    m.ssim_mean += r.ssim_mean;
  }
  const double n = static_cast<double>(reports.size());
  m.en /= n;
  m.mi /= n;
  m.qabf /= n;
  m.sd /= n;
  m.ssim_sum /= n;
  m.ssim_mean /= n;
  return m;
}

}  // namespace metrics
}  // namespace bfuse
