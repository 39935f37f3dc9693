#pragma once

// Command-line front end: `fuse`, `batch` and `metrics` subcommands.
// Kept in a header so the test suite can drive it in-process.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bayesfusion/bayesfusion.hpp"

namespace bfuse::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_input = 2,
  exit_validation = 3,
};

/// Six significant digits, never in exponent notation.
inline std::string format_number(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  if (x == 0.0) return "0.00000";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5e", x);
  const int exponent = std::atoi(std::strchr(buf, 'e') + 1);
  const int decimals = std::max(0, 5 - exponent);
  std::string out(512, '\0');
  const int n = std::snprintf(out.data(), out.size(), "%.*f", decimals, x);
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline const char* const metric_columns[] = {"EN", "MI", "Qabf", "SD", "SSIM_sum", "SSIM_mean"};

inline std::vector<double> metric_values(const MetricReport& r) {
  return {r.en, r.mi, r.qabf, r.sd, r.ssim_sum, r.ssim_mean};
}

/// `EN=... MI=... Qabf=... SD=... SSIM_sum=... SSIM_mean=...`
inline std::string key_value_line(const MetricReport& r) {
  const auto v = metric_values(r);
  std::string line;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) line += ' ';
    line += metric_columns[k];
    line += '=';
    line += format_number(v[k]);
  }
  return line;
}

inline std::string csv_header(bool with_wall_ms) {
  std::string h = "id";
  for (const char* c : metric_columns) h += std::string(",") + c;
  if (with_wall_ms) h += ",wall_ms";
  return h;
}

inline std::string csv_row(const std::string& id, const MetricReport& r,
                           std::optional<double> wall_ms) {
  std::string row = id;
  for (double v : metric_values(r)) row += "," + format_number(v);
  if (wall_ms) row += "," + format_number(*wall_ms);
  return row;
}

inline std::string csv_error_row(const std::string& id, std::optional<double> wall_ms) {
  std::string row = id;
  for (std::size_t k = 0; k < std::size(metric_columns); ++k) row += ",error";
  if (wall_ms) row += "," + format_number(*wall_ms);
  return row;
}

/// Write a whole text file through a temporary sibling and rename.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw io_error("cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw io_error("cannot write '" + path.string() + "': rename failed");
  }
}

/// Runs `body`, mapping library exceptions to exit codes with a one-line
/// diagnostic on `err`.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const io_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_input;
  } catch (const format_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_input;
  } catch (const invalid_input& e) {
    err << "error: " << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return exit_internal;
  }
}

inline int cmd_fuse(const fs::path& ir_path, const fs::path& vis_path, const fs::path& out_path,
                    const FusionParams& params, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    params.validate();
    const ImagePlane u = load_grayscale(ir_path, params.scale);
    const ImagePlane v = load_grayscale(vis_path, params.scale);
    const ImagePlane fused = fuse(u, v, params);
    save_grayscale(fused, out_path, params.scale);
    out << key_value_line(metrics::evaluate(u, v, fused, params.scale)) << '\n';
    return int{exit_ok};
  });
}

inline int cmd_metrics(const fs::path& ir_path, const fs::path& vis_path, const fs::path& fused_path,
                       const std::optional<fs::path>& csv_path, Scale scale, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    const ImagePlane u = load_grayscale(ir_path, scale);
    const ImagePlane v = load_grayscale(vis_path, scale);
    const ImagePlane i = load_grayscale(fused_path, scale);
    const MetricReport r = metrics::evaluate(u, v, i, scale);
    out << key_value_line(r) << '\n';
    if (csv_path)
      write_text_atomic(*csv_path, csv_header(false) + "\n" +
                                       csv_row(fused_path.stem().string(), r, std::nullopt) + "\n");
    return int{exit_ok};
  });
}

struct BatchOptions {
  fs::path dataset;
  Layout layout = Layout::tno;
  fs::path out_dir;
  std::optional<fs::path> csv_path;  // defaults to <out_dir>/metrics.csv
  std::optional<fs::path> ids_path;
  int jobs = 1;
  FusionParams params;
};

namespace detail {

struct BatchRow {
  std::string id;
  std::optional<MetricReport> report;  // empty on failure
  double wall_ms = 0.0;
};

}  // namespace detail

inline int cmd_batch(const BatchOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    opt.params.validate();
    if (opt.jobs < 1) throw invalid_input("--jobs must be >= 1");

    DiscoveryResult found = discover_pairs(opt.dataset, opt.layout);
    if (opt.ids_path) {
      std::vector<std::string> missing;
      found = filter_by_ids(std::move(found), read_id_list(*opt.ids_path), &missing);
      for (const auto& id : missing) err << "warning: id '" << id << "' not found in dataset\n";
      if (found.pairs.empty() && found.issues.empty())
        throw io_error("no pairs left after applying id list '" + opt.ids_path->string() + "'");
    }

    std::vector<detail::BatchRow> rows;
    for (const auto& issue : found.issues) {
      err << "warning: " << issue.message << '\n';
      if (issue.kind == PairIssue::Kind::rejected) rows.push_back({issue.id, std::nullopt, 0.0});
    }

    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw io_error("cannot create output directory '" + opt.out_dir.string() + "'");

    const std::size_t first_job = rows.size();
    for (const auto& p : found.pairs) rows.push_back({p.id, std::nullopt, 0.0});

    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    const std::size_t total = found.pairs.size();
    auto worker = [&] {
      for (std::size_t k = next++; k < total; k = next++) {
        const ImagePairRecord& pair = found.pairs[k];
        detail::BatchRow& row = rows[first_job + k];
        const auto t0 = std::chrono::steady_clock::now();
        std::string failure;
        try {
          const ImagePlane u = load_grayscale(pair.ir_path, opt.params.scale);
          const ImagePlane v = load_grayscale(pair.vis_path, opt.params.scale);
          const ImagePlane fused = fuse(u, v, opt.params);
          save_grayscale(fused, opt.out_dir / (pair.id + "_fused.png"), opt.params.scale);
          row.report = metrics::evaluate(u, v, fused, opt.params.scale);
        } catch (const std::exception& e) {
          failure = e.what();
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lock(log_mutex);
        if (failure.empty())
          err << "[" << pair.id << "] fused in " << format_number(row.wall_ms) << " ms\n";
        else
          err << "[" << pair.id << "] error: " << failure << '\n';
      }
    };
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(opt.jobs), std::max<std::size_t>(total, 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::sort(rows.begin(), rows.end(),
              [](const detail::BatchRow& a, const detail::BatchRow& b) { return a.id < b.id; });

    std::ostringstream csv;
    csv << csv_header(true) << '\n';
    std::vector<MetricReport> ok;
    double wall_sum = 0.0;
    for (const auto& r : rows) {
      if (r.report) {
        csv << csv_row(r.id, *r.report, r.wall_ms) << '\n';
        ok.push_back(*r.report);
        wall_sum += r.wall_ms;
      } else {
        csv << csv_error_row(r.id, r.wall_ms) << '\n';
      }
    }
    if (ok.empty())
      csv << csv_error_row("mean", std::nullopt) << ",\n";
    else
      csv << csv_row("mean", metrics::mean_report(ok), wall_sum / static_cast<double>(ok.size())) << '\n';

    const fs::path csv_path = opt.csv_path.value_or(opt.out_dir / "metrics.csv");
    write_text_atomic(csv_path, csv.str());
    out << "fused " << ok.size() << "/" << rows.size() << " pairs; report written to "
        << csv_path.string() << '\n';
    return ok.empty() ? int{exit_input} : int{exit_ok};
  });
}

/// Parse argv and dispatch. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Bayesian infrared/visible image fusion"};
  app.require_subcommand(1);

  FusionParams params;
  std::string scale_name = "unit";
  auto add_params = [&](CLI::App* sub) {
    sub->add_option("--lambda-g", params.lambda_g, "gradient penalty strength")->capture_default_str();
    sub->add_option("--rho", params.rho, "splitting penalty")->capture_default_str();
    sub->add_option("--t-out", params.t_out, "outer EM iterations")->capture_default_str();
    sub->add_option("--t-in", params.t_in, "M-step sweeps per iteration")->capture_default_str();
    sub->add_option("--eps", params.eps, "floor for the E-step expectations")->capture_default_str();
  };
  auto add_scale = [&](CLI::App* sub) {
    sub->add_option("--scale", scale_name, "intensity scale")
        ->check(CLI::IsMember({"unit", "byte"}))
        ->capture_default_str();
  };

  std::string ir, vis, out_path, fused_path, dataset, out_dir, layout_name = "tno", csv, ids;
  int jobs = 1;

  auto* fuse_cmd = app.add_subcommand("fuse", "fuse one infrared/visible pair");
  fuse_cmd->add_option("--ir", ir, "infrared image")->required();
  fuse_cmd->add_option("--vis", vis, "visible image")->required();
  fuse_cmd->add_option("--out", out_path, "fused image to write")->required();
  add_params(fuse_cmd);
  add_scale(fuse_cmd);

  auto* batch_cmd = app.add_subcommand("batch", "fuse and score every pair of a dataset");
  batch_cmd->add_option("--dataset", dataset, "dataset root directory")->required();
  batch_cmd->add_option("--layout", layout_name, "directory layout")
      ->check(CLI::IsMember({"tno", "nir", "flat"}))
      ->capture_default_str();
  batch_cmd->add_option("--out-dir", out_dir, "directory for fused images")->required();
  batch_cmd->add_option("--csv", csv, "CSV report path (default <out-dir>/metrics.csv)");
  batch_cmd->add_option("--ids", ids, "file listing the pair ids to process");
  batch_cmd->add_option("--jobs", jobs, "parallel workers")->capture_default_str();
  add_params(batch_cmd);
  add_scale(batch_cmd);

  auto* metrics_cmd = app.add_subcommand("metrics", "score an existing fused image");
  metrics_cmd->add_option("--ir", ir, "infrared image")->required();
  metrics_cmd->add_option("--vis", vis, "visible image")->required();
  metrics_cmd->add_option("--fused", fused_path, "fused image")->required();
  metrics_cmd->add_option("--csv", csv, "also write the report as CSV");
  add_scale(metrics_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return exit_input;
  }

  params.scale = scale_name == "byte" ? Scale::byte : Scale::unit;
  try {
    params.validate();
  } catch (const invalid_input& e) {
    err << "error: " << e.what() << '\n';
    return exit_validation;
  }

  if (fuse_cmd->parsed()) return cmd_fuse(ir, vis, out_path, params, out, err);
  if (metrics_cmd->parsed()) {
    std::optional<fs::path> csv_path;
    if (!csv.empty()) csv_path = csv;
    return cmd_metrics(ir, vis, fused_path, csv_path, params.scale, out, err);
  }

  BatchOptions opt;
  opt.dataset = dataset;
  opt.layout = *parse_layout(layout_name);
  opt.out_dir = out_dir;
  if (!csv.empty()) opt.csv_path = csv;
  if (!ids.empty()) opt.ids_path = ids;
  opt.jobs = jobs;
  opt.params = params;
  if (opt.jobs < 1) {
    err << "error: --jobs must be >= 1\n";
    return exit_validation;
  }
  return cmd_batch(opt, out, err);
}

}  // namespace bfuse::cli
