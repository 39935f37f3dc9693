#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <system_error>
#include <vector>

#include "bayesfusion/errors.hpp"
#include "bayesfusion/image_plane.hpp"

namespace bfuse {

namespace fs = std::filesystem;

enum class Layout { tno, nir, flat };

inline std::optional<Layout> parse_layout(std::string_view s) {
  if (s == "tno") return Layout::tno;
  if (s == "nir") return Layout::nir;
  if (s == "flat") return Layout::flat;
  return std::nullopt;
}

struct ImagePairRecord {
  std::string id;
  fs::path ir_path;
  fs::path vis_path;
};

/// Something discovery noticed but did not turn into a usable pair.
struct PairIssue {
  enum class Kind {
    orphan,    // one side of a pair is missing
    rejected,  // both sides found but they do not decode or differ in size
  };
  Kind kind;
  std::string id;
  std::string message;
};

struct DiscoveryResult {
  std::vector<ImagePairRecord> pairs;  // sorted by id, dimension-checked
  std::vector<PairIssue> issues;       // sorted by id
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts = {".png", ".bmp", ".pgm", ".ppm", ".pnm", ".tif", ".tiff"};
  return exts.count(lower(p.extension().string())) != 0;
}

inline cv::Mat read_image(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec))
    throw io_error("cannot read '" + path.string() + "': no such file");
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw io_error("cannot decode '" + path.string() + "': " + e.what());
  }
  if (m.empty()) throw io_error("cannot decode '" + path.string() + "'");
  return m;
}

}  // namespace detail

/// Decode an 8- or 16-bit PNG/BMP/PGM (TIFF also accepted) into one
/// channel in the requested scale. Colour is reduced with
/// Y = 0.299 R + 0.587 G + 0.114 B; an alpha channel is ignored.
inline ImagePlane load_grayscale(const fs::path& path, Scale scale = Scale::unit) {
  const cv::Mat m = detail::read_image(path);

  double full;
  switch (m.depth()) {
    case CV_8U: full = 255.0; break;
    case CV_16U: full = 65535.0; break;
    default:
      throw format_error("'" + path.string() + "': unsupported bit depth (only 8 and 16 bit)");
  }
  const int ch = m.channels();
  if (ch < 1 || ch > 4)
    throw format_error("'" + path.string() + "': unsupported channel count " + std::to_string(ch));
  if (m.rows < 2 || m.cols < 2)
    throw format_error("'" + path.string() + "': image must be at least 2x2");

  const double hi = max_intensity(scale);
  ImagePlane out(static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols));
  auto sample = [&](int r, int c, int channel) -> double {
    if (m.depth() == CV_8U) return m.ptr<std::uint8_t>(r)[c * ch + channel];
    return m.ptr<std::uint16_t>(r)[c * ch + channel];
  };
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      double g;
      if (ch <= 2) {
        g = sample(r, c, 0);
      } else {
        // OpenCV stores colour as BGR(A)
        const double b = sample(r, c, 0), gr = sample(r, c, 1), rd = sample(r, c, 2);
        g = (b == gr && gr == rd) ? gr : 0.299 * rd + 0.587 * gr + 0.114 * b;
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = hi == full ? g : g / full * hi;
    }
  }
  return out;
}

/// Write an 8-bit single-channel image (format from the extension: png,
/// pgm, bmp, ...). Levels use round-half-away-from-zero. The file appears
/// atomically: it is written under a temporary name and then renamed.
inline void save_grayscale(const ImagePlane& img, const fs::path& path, Scale scale = Scale::unit) {
  const double hi = max_intensity(scale);
  for (double v : img.values())
    if (!std::isfinite(v) || v < 0.0 || v > hi)
      throw invalid_input("save_grayscale: intensity " + std::to_string(v) + " outside [0, " +
                          std::to_string(hi) + "]");

  const double k = 255.0 / hi;
  cv::Mat m(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC1);
  for (std::size_t i = 0; i < img.height(); ++i) {
    auto* row = m.ptr<std::uint8_t>(static_cast<int>(i));
    for (std::size_t j = 0; j < img.width(); ++j)
      row[j] = static_cast<std::uint8_t>(std::clamp(std::round(img(i, j) * k), 0.0, 255.0));
  }

  fs::path tmp = path;
  tmp.replace_filename("." + path.stem().string() + ".partial" + path.extension().string());
  bool ok = false;
  try {
    ok = cv::imwrite(tmp.string(), m);
  } catch (const cv::Exception& e) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw io_error("cannot write '" + path.string() + "': " + e.what());
  }
  std::error_code ec;
  if (!ok) {
    fs::remove(tmp, ec);
    throw io_error("cannot write '" + path.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw io_error("cannot write '" + path.string() + "': rename failed");
  }
}

namespace detail {

struct Sides {
  std::optional<fs::path> ir;
  std::optional<fs::path> vis;
};

inline std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Pairs by filename suffix: <id><ir_suffix>.ext with <id><vis_suffix>.ext.
inline std::map<std::string, Sides> pair_by_suffix(const fs::path& root, std::string_view ir_suffix,
                                                   std::string_view vis_suffix) {
  std::map<std::string, Sides> sides;
  for (const auto& p : image_files(root)) {
    const std::string stem = p.stem().string();
    const std::string ls = lower(stem);
    auto ends_with = [&](std::string_view suf) {
      return ls.size() > suf.size() && ls.compare(ls.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends_with(ir_suffix))
      sides[stem.substr(0, stem.size() - ir_suffix.size())].ir = p;
    else if (ends_with(vis_suffix))
      sides[stem.substr(0, stem.size() - vis_suffix.size())].vis = p;
  }
  return sides;
}

inline std::optional<fs::path> find_child_dir(const fs::path& root,
                                              std::initializer_list<std::string_view> names) {
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    const std::string n = lower(e.path().filename().string());
    for (auto want : names)
      if (n == want) hits.push_back(e.path());
  }
  if (hits.empty()) return std::nullopt;
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

// TNO convention, either
//   root/{ir,infrared,...}/<id>.ext  +  root/{vis,vi,visible}/<id>.ext
// or one scene per directory holding exactly one IR* and one VIS* image,
// identified by its path relative to root with '/' replaced by '_'.
inline std::map<std::string, Sides> pair_tno(const fs::path& root, std::vector<PairIssue>& issues) {
  std::map<std::string, Sides> sides;
  const auto ir_dir = find_child_dir(root, {"ir", "infrared", "lwir", "thermal"});
  const auto vis_dir = find_child_dir(root, {"vis", "vi", "visible"});
  if (ir_dir && vis_dir) {
    for (const auto& p : image_files(*ir_dir)) sides[p.stem().string()].ir = p;
    for (const auto& p : image_files(*vis_dir)) sides[p.stem().string()].vis = p;
    return sides;
  }

  std::vector<fs::path> dirs{root};
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::vector<fs::path> irs, viss;
    for (const auto& p : image_files(dir)) {
      const std::string n = lower(p.filename().string());
      if (n.rfind("ir", 0) == 0) irs.push_back(p);
      else if (n.rfind("vis", 0) == 0) viss.push_back(p);
    }
    if (irs.empty() && viss.empty()) continue;
    std::string id = fs::relative(dir, root).generic_string();
    if (id == ".") id = root.filename().string();
    std::replace(id.begin(), id.end(), '/', '_');
    if (irs.size() > 1 || viss.size() > 1) {
      issues.push_back({PairIssue::Kind::orphan, id,
                        "ambiguous scene directory '" + dir.string() + "' (" +
                            std::to_string(irs.size()) + " IR, " + std::to_string(viss.size()) +
                            " VIS candidates)"});
      continue;
    }
    auto& s = sides[id];
    if (!irs.empty()) s.ir = irs.front();
    if (!viss.empty()) s.vis = viss.front();
  }
  return sides;
}

inline std::string layout_expectation(Layout layout) {
  switch (layout) {
    case Layout::tno:
      return "tno layout expects IR/ and VIS/ subdirectories with matching file stems, or scene "
             "directories each holding one IR* and one VIS* image";
    case Layout::nir:
      return "nir layout expects <id>_nir.<ext> next to <id>_rgb.<ext>";
    case Layout::flat:
      return "flat layout expects <id>_ir.<ext> next to <id>_vis.<ext>";
  }
  return {};
}

}  // namespace detail

/// Find infrared/visible pairs under `root`. Returned pairs decode and have
/// equal dimensions; everything else lands in `issues`. Throws io_error when
/// the directory is missing or no usable pair exists.
inline DiscoveryResult discover_pairs(const fs::path& root, Layout layout) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw io_error("dataset directory '" + root.string() + "' does not exist");

  DiscoveryResult result;
  std::map<std::string, detail::Sides> sides;
  switch (layout) {
    case Layout::flat: sides = detail::pair_by_suffix(root, "_ir", "_vis"); break;
    case Layout::nir: sides = detail::pair_by_suffix(root, "_nir", "_rgb"); break;
    case Layout::tno: sides = detail::pair_tno(root, result.issues); break;
  }

  for (const auto& [id, s] : sides) {
    if (!s.ir || !s.vis) {
      result.issues.push_back({PairIssue::Kind::orphan, id,
                               std::string("orphan '") + id + "': missing " +
                                   (s.ir ? "visible" : "infrared") + " image"});
      continue;
    }
    try {
      const cv::Mat a = detail::read_image(*s.ir);
      const cv::Mat b = detail::read_image(*s.vis);
      if (a.rows != b.rows || a.cols != b.cols) {
        result.issues.push_back(
            {PairIssue::Kind::rejected, id,
             "pair '" + id + "': dimension mismatch " + std::to_string(a.rows) + "x" +
                 std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                 std::to_string(b.cols)});
        continue;
      }
    } catch (const std::exception& e) {
      result.issues.push_back({PairIssue::Kind::rejected, id, "pair '" + id + "': " + e.what()});
      continue;
    }
    result.pairs.push_back({id, *s.ir, *s.vis});
  }

  std::stable_sort(result.issues.begin(), result.issues.end(),
                   [](const PairIssue& a, const PairIssue& b) { return a.id < b.id; });
  if (result.pairs.empty() &&
      std::none_of(result.issues.begin(), result.issues.end(),
                   [](const PairIssue& i) { return i.kind == PairIssue::Kind::rejected; }))
    throw io_error("no pairs found in '" + root.string() + "': " +
                   detail::layout_expectation(layout));
  return result;
}

/// One id per line; blank lines and lines starting with '#' are skipped.
inline std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read id list '" + path.string() + "'");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(b, e - b + 1));
  }
  return ids;
}

/// Keep only pairs and issues whose id is listed. Ids that match nothing
/// are returned in `missing`.
inline DiscoveryResult filter_by_ids(DiscoveryResult r, const std::vector<std::string>& ids,
                                     std::vector<std::string>* missing = nullptr) {
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::set<std::string> seen;
  std::erase_if(r.pairs, [&](const ImagePairRecord& p) {
    if (!keep.count(p.id)) return true;
    seen.insert(p.id);
    return false;
  });
  std::erase_if(r.issues, [&](const PairIssue& p) {
    if (!keep.count(p.id)) return true;
    seen.insert(p.id);
    return false;
  });
  if (missing != nullptr)
    for (const auto& id : keep)
      if (!seen.count(id)) missing->push_back(id);
  return r;
}

}  // namespace bfuse
