#include "wpca/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csv_util.hpp"
#include "wpca/adacv.hpp"
#include "wpca/common.hpp"
#include "wpca/dataio.hpp"
#include "wpca/estimators.hpp"
#include "wpca/simulate.hpp"
#include "wpca/weights.hpp"

namespace wpca {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// -- shared plumbing ---------------------------------------------------------

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("WPCA_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  const std::string s(v);
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(s.c_str(), &end, 10);
  if (s[0] == '-' || errno != 0 || end == s.c_str() || *end != '\0') {
    throw InvalidArgument(
        "WPCA_SEED must be a base-10 nonnegative integer, got \"" + s + "\"");
  }
  return static_cast<std::uint64_t>(x);
}

// Seed precedence: WPCA_SEED env var > --seed flag > caller's fallback.
std::optional<std::uint64_t> resolve_seed(bool flag_given,
                                          std::uint64_t flag_value) {
  if (auto e = env_seed()) return e;
  if (flag_given) return flag_value;
  return std::nullopt;
}

// Thread precedence for study commands: --threads flag > config file value >
// hardware concurrency (0).
int resolve_threads(bool flag_given, int flag_value, bool config_has,
                    int config_value) {
  if (flag_given) return flag_value;
  if (config_has) return config_value;
  return 0;
}

json load_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("config: cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidArgument("config: " + path.string() +
                          " is not valid JSON: " + e.what());
  }
}

// from_json helpers raise nlohmann exceptions on type mismatches; those are
// validation failures, not runtime ones.
template <typename F>
auto with_config_errors(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InvalidArgument(what + ": malformed config: " + e.what());
  }
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) {
    throw InvalidArgument("out: cannot create directory " + p.string() + ": " +
                          ec.message());
  }
  return p;
}

void write_meta(const fs::path& out_dir, const std::string& command,
                json params, json seed) {
  json meta;
  meta["command"] = command;
  meta["version"] = std::string(kVersion);
  meta["seed"] = std::move(seed);
  meta["params"] = std::move(params);
  const fs::path path = out_dir / "meta.json";
  std::ofstream os(path);
  if (!os) {
    throw Error(command + ": cannot write " + path.string());
  }
  os << meta.dump(2) << '\n';
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// "--gamma 0,1" style weight vectors: nonnegative entries with a positive
// sum, normalized onto the simplex before use.
ToeplitzWeights weights_from_gamma(const std::string& s) {
  const auto fields = split_commas(s);
  Vector g(static_cast<Index>(fields.size()));
  for (std::size_t k = 0; k < fields.size(); ++k) {
    g[static_cast<Index>(k)] =
        csv::parse_double(fields[k], "in --gamma entry " + std::to_string(k));
  }
  const double total = g.sum();
  for (Index k = 0; k < g.size(); ++k) {
    if (!std::isfinite(g[k]) || g[k] < 0.0) {
      throw InvalidArgument("gamma: entries must be finite and >= 0");
    }
  }
  if (!(total > 0.0)) {
    throw InvalidArgument("gamma: entries must have a positive sum");
  }
  return ToeplitzWeights(g / total);
}

std::vector<int> parse_int_list(const std::string& s,
                                const std::string& what) {
  std::vector<int> out;
  for (const auto& field : split_commas(s)) {
    const double v = csv::parse_double(field, "in " + what);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
      throw InvalidArgument(what + ": \"" + field + "\" is not an integer");
    }
    out.push_back(i);
  }
  return out;
}

// -- panel input -------------------------------------------------------------

struct PanelOptions {
  std::string input;
  std::string layout = "time_rows";
  std::vector<std::string> skip_rows;
  bool preprocess = false;
  double max_missing_frac = 0.05;
};

void add_panel_options(CLI::App* cmd, PanelOptions& o) {
  cmd->add_option("--input", o.input, "input panel CSV")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--layout", o.layout,
                  "row orientation of the file (time_rows | unit_rows)")
      ->check(CLI::IsMember({"time_rows", "unit_rows"}))
      ->capture_default_str();
  cmd->add_option("--skip-row", o.skip_rows,
                  "label of a metadata row to drop (repeatable)");
  cmd->add_flag("--preprocess", o.preprocess,
                "balance the panel: drop sparse variables, then keep only "
                "complete time points");
  cmd->add_option("--max-missing-frac", o.max_missing_frac,
                  "missing-fraction cutoff used by --preprocess")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
}

Panel load_panel(const PanelOptions& o) {
  ReadOptions opts;
  opts.skip_row_labels = o.skip_rows;
  const PanelLayout layout = panel_layout_from_string(o.layout);
  const PanelSource src = read_panel_csv(o.input, layout, opts);
  if (o.preprocess) return preprocess_panel(src, o.max_missing_frac);
  if (src.missing_count() > 0) {
    throw InvalidArgument(
        "input: " + o.input + " has " +
        std::to_string(static_cast<long long>(src.missing_count())) +
        " missing cell(s); rerun with --preprocess");
  }
  if (layout == PanelLayout::unit_rows) {
    return Panel(src.values, src.row_labels, src.col_labels);
  }
  return Panel(src.values.transpose(), src.col_labels, src.row_labels);
}

json panel_params(const PanelOptions& o) {
  return json{{"input", o.input},
              {"layout", o.layout},
              {"skip_rows", o.skip_rows},
              {"preprocess", o.preprocess},
              {"max_missing_frac", o.max_missing_frac}};
}

json grid_params(const WeightGrid& g) {
  return json{{"max_lag", g.max_lag}, {"step", g.step}};
}

// -- fit ---------------------------------------------------------------------

struct FitOptions {
  PanelOptions panel;
  std::string gamma = "1";
  int r = 0;
  std::string out;
};

int run_fit(const FitOptions& o) {
  const Panel panel = load_panel(o.panel);
  const ToeplitzWeights w = weights_from_gamma(o.gamma);
  const FactorFit fit = wpca(panel, w, o.r);
  const fs::path out = ensure_out_dir(o.out);
  fit.save(out / "fit");

  json params = panel_params(o.panel);
  params["gamma"] = w.to_json();
  params["r"] = o.r;
  write_meta(out, "fit", std::move(params), nullptr);
  std::cout << "fit: N=" << panel.n() << " T=" << panel.t() << " r=" << o.r
            << " -> " << (out / "fit").string() << "\n";
  return 0;
}

// -- cv-select ---------------------------------------------------------------

struct CvSelectOptions {
  PanelOptions panel;
  int r = 0;
  int max_lag = 1;
  double step = 1.0 / 9.0;
  int k_cv = 10;
  double pstar = 0.9;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string ranks;
  std::string out;
};

int run_cv_select(const CvSelectOptions& o) {
  const Panel panel = load_panel(o.panel);
  const WeightGrid grid = build_grid(o.max_lag, o.step);
  const std::vector<int> ranks =
      o.ranks.empty() ? std::vector<int>{} : parse_int_list(o.ranks, "--ranks");
  const std::uint64_t seed =
      resolve_seed(o.seed_given, o.seed).value_or(o.seed);

  const auto [report, fit] =
      ada_wpca(panel, grid, o.r, o.k_cv, o.pstar, seed, ranks);

  const fs::path out = ensure_out_dir(o.out);
  fit.save(out / "fit");
  {
    const fs::path path = out / "cv_report.json";
    std::ofstream os(path);
    if (!os) throw Error("cv-select: cannot write " + path.string());
    os << report.to_json().dump(2) << '\n';
  }

  json params = panel_params(o.panel);
  params["r"] = o.r;
  params["grid"] = grid_params(grid);
  params["k_cv"] = o.k_cv;
  params["pstar"] = o.pstar;
  params["ranks"] = ranks;
  write_meta(out, "cv-select", std::move(params), seed);

  json summary;
  summary["chosen_gamma"] =
      grid.candidates[static_cast<std::size_t>(report.chosen_index)].to_json();
  if (report.chosen_rank) summary["chosen_rank"] = *report.chosen_rank;
  summary["mean_cv"] = report.mean_cv;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// -- rank --------------------------------------------------------------------

struct RankOptions {
  PanelOptions panel;
  int rmax = 60;
  std::string out;
};

int run_rank(const RankOptions& o) {
  const Panel panel = load_panel(o.panel);
  const int cap = static_cast<int>(std::min(panel.n(), panel.t())) - 1;
  const int rmax = std::min(o.rmax, cap);
  const RankEstimate est = estimate_rank_detail(panel, rmax);

  json out_json;
  out_json["r_hat"] = est.r_hat;
  out_json["rmax"] = rmax;
  out_json["eigenvalues"] = std::vector<double>(
      est.eigenvalues.data(), est.eigenvalues.data() + est.eigenvalues.size());
  out_json["ratios"] = std::vector<double>(
      est.ratios.data(), est.ratios.data() + est.ratios.size());
  std::cout << out_json.dump(2) << "\n";

  if (!o.out.empty()) {
    const fs::path out = ensure_out_dir(o.out);
    const fs::path path = out / "rank.json";
    std::ofstream os(path);
    if (!os) throw Error("rank: cannot write " + path.string());
    os << out_json.dump(2) << '\n';

    json params = panel_params(o.panel);
    params["rmax"] = rmax;
    write_meta(out, "rank", std::move(params), nullptr);
  }
  return 0;
}

// -- sim-estimation / sim-cv -------------------------------------------------

struct StudyOptions {
  std::string config;
  int reps = 0;
  bool reps_given = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  bool threads_given = false;
  std::string out;
};

void add_study_options(CLI::App* cmd, StudyOptions& o) {
  cmd->add_option("--config", o.config, "study configuration JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--reps", o.reps, "replicates per cell (overrides config)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed,
                  "base seed; cell i runs with seed + i (overrides config)");
  cmd->add_option("--threads", o.threads,
                  "worker threads (0 = all hardware threads)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", o.out, "output directory")->required();
}

// Applies the flag overrides shared by both study commands to a parsed
// config; returns the effective base seed, when one was forced.
template <typename Config>
std::optional<std::uint64_t> apply_study_overrides(Config& cfg, const json& j,
                                                   const StudyOptions& o) {
  if (o.reps_given) cfg.replicates = o.reps;
  cfg.threads =
      resolve_threads(o.threads_given, o.threads, j.contains("threads"),
                      cfg.threads);
  const auto seed = resolve_seed(o.seed_given, o.seed);
  if (seed) {
    for (std::size_t i = 0; i < cfg.cells.size(); ++i) {
      cfg.cells[i].seed = *seed + static_cast<std::uint64_t>(i);
    }
  }
  return seed;
}

json cells_params(const std::vector<DgpConfig>& cells) {
  json arr = json::array();
  for (const auto& c : cells) arr.push_back(c.to_json());
  return arr;
}

void write_study_outputs(const fs::path& out, const StudyResult& res) {
  res.save_csv(out / "study.csv");
  const fs::path path = out / "study.json";
  std::ofstream os(path);
  if (!os) throw Error("study: cannot write " + path.string());
  os << res.to_json().dump(2) << '\n';
}

int run_sim_estimation(const StudyOptions& o) {
  const json j = load_json_file(o.config);
  EstimationStudyConfig cfg = with_config_errors(
      "sim-estimation", [&] { return EstimationStudyConfig::from_json(j); });
  const auto seed = apply_study_overrides(cfg, j, o);

  const StudyResult res = run_estimation_study(cfg);
  const fs::path out = ensure_out_dir(o.out);
  write_study_outputs(out, res);

  json params{{"cells", cells_params(cfg.cells)},
              {"methods", cfg.methods},
              {"replicates", cfg.replicates},
              {"grid", grid_params(cfg.grid)},
              {"k_cv", cfg.k_cv},
              {"pstar", cfg.pstar},
              {"threads", cfg.threads}};
  write_meta(out, "sim-estimation", std::move(params),
             seed ? json(*seed) : json(nullptr));
  std::cout << "study: " << res.rows.size() << " row(s), "
            << res.notes.size() << " note(s) -> "
            << (out / "study.csv").string() << "\n";
  return 0;
}

int run_sim_cv(const StudyOptions& o) {
  const json j = load_json_file(o.config);
  CvStudyConfig cfg = with_config_errors(
      "sim-cv", [&] { return CvStudyConfig::from_json(j); });
  const auto seed = apply_study_overrides(cfg, j, o);

  const StudyResult res = run_cv_study(cfg);
  const fs::path out = ensure_out_dir(o.out);
  write_study_outputs(out, res);

  json params{{"cells", cells_params(cfg.cells)},
              {"replicates", cfg.replicates},
              {"grid", grid_params(cfg.grid)},
              {"k_cv", cfg.k_cv},
              {"pstar", cfg.pstar},
              {"threads", cfg.threads}};
  write_meta(out, "sim-cv", std::move(params),
             seed ? json(*seed) : json(nullptr));
  std::cout << "study: " << res.rows.size() << " row(s), "
            << res.notes.size() << " note(s) -> "
            << (out / "study.csv").string() << "\n";
  return 0;
}

// -- sim-inference -----------------------------------------------------------

struct InferenceOptions {
  std::string config;
  int reps = 0;
  bool reps_given = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  bool threads_given = false;
  std::string target;
  long long index = 0;
  bool index_given = false;
  std::string out;
};

InferenceTarget::Kind kind_from_string(const std::string& s) {
  if (s == "loading") return InferenceTarget::Kind::loading;
  if (s == "factor") return InferenceTarget::Kind::factor;
  throw InvalidArgument("target: must be 'loading' or 'factor', got \"" + s +
                        "\"");
}

int run_sim_inference(const InferenceOptions& o) {
  const json j = load_json_file(o.config);
  InferenceConfig cfg = with_config_errors(
      "sim-inference", [&] { return InferenceConfig::from_json(j); });
  if (o.reps_given) cfg.replicates = o.reps;
  cfg.threads = resolve_threads(o.threads_given, o.threads,
                                j.contains("threads"), cfg.threads);
  const auto seed = resolve_seed(o.seed_given, o.seed);
  if (seed) cfg.dgp.seed = *seed;

  // Target: config file "target" block first, then flag overrides; the
  // index defaults to the middle row of the chosen dimension.
  InferenceTarget target;
  std::optional<Index> index;
  if (j.contains("target")) {
    const auto& t = j.at("target");
    target.kind = with_config_errors("sim-inference", [&] {
      return kind_from_string(t.value("kind", std::string("loading")));
    });
    if (t.contains("index")) {
      index = with_config_errors("sim-inference",
                                 [&] { return t.at("index").get<Index>(); });
    }
  }
  if (!o.target.empty()) target.kind = kind_from_string(o.target);
  if (o.index_given) index = static_cast<Index>(o.index);
  target.index = index.value_or(target.kind == InferenceTarget::Kind::loading
                                    ? cfg.dgp.N / 2
                                    : cfg.dgp.T / 2);

  const InferenceSample sample = run_inference_study(cfg, target);
  const fs::path out = ensure_out_dir(o.out);
  sample.save_csv(out / "sample.csv");
  {
    const fs::path path = out / "inference.json";
    std::ofstream os(path);
    if (!os) throw Error("sim-inference: cannot write " + path.string());
    os << sample.to_json().dump(2) << '\n';
  }

  json params{{"dgp", cfg.dgp.to_json()},
              {"weights", cfg.weights.to_json()},
              {"method", cfg.method},
              {"replicates", cfg.replicates},
              {"threads", cfg.threads},
              {"target", target.to_json()}};
  write_meta(out, "sim-inference", std::move(params),
             seed ? json(*seed) : json(cfg.dgp.seed));

  json summary{{"mean", sample.mean},
               {"variance", sample.variance},
               {"ks_statistic", sample.ks_statistic},
               {"replicates_used", sample.values.size()},
               {"excluded", sample.excluded}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// -- eval-reconstruction -----------------------------------------------------

struct ReconOptions {
  PanelOptions panel;
  std::string config;
  double qtr = 0.0;
  bool qtr_given = false;
  std::string method;
  int r = 0;
  bool r_given = false;
  int reps = 0;
  bool reps_given = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int k_cv = 0;
  bool k_cv_given = false;
  double pstar = 0.0;
  bool pstar_given = false;
  int threads = 0;
  bool threads_given = false;
  std::string gamma;
  int max_lag = 0;
  bool max_lag_given = false;
  double step = 0.0;
  bool step_given = false;
  std::string out;
};

int run_eval_reconstruction(const ReconOptions& o) {
  json j = json::object();
  ReconstructionConfig cfg;
  if (!o.config.empty()) {
    j = load_json_file(o.config);
    cfg = with_config_errors("eval-reconstruction", [&] {
      return ReconstructionConfig::from_json(j);
    });
  }
  if (o.qtr_given) cfg.qtr = o.qtr;
  if (!o.method.empty()) cfg.method = o.method;
  if (o.r_given) cfg.r = o.r;
  if (o.reps_given) cfg.replicates = o.reps;
  if (o.k_cv_given) cfg.k_cv = o.k_cv;
  if (o.pstar_given) cfg.pstar = o.pstar;
  if (!o.gamma.empty()) cfg.weights = weights_from_gamma(o.gamma);
  if (o.max_lag_given || o.step_given) {
    cfg.grid = build_grid(o.max_lag_given ? o.max_lag : cfg.grid.max_lag,
                          o.step_given ? o.step : cfg.grid.step);
  }
  cfg.threads = resolve_threads(o.threads_given, o.threads,
                                j.contains("threads"), cfg.threads);
  const auto seed = resolve_seed(o.seed_given, o.seed);
  if (seed) cfg.seed = *seed;

  const Panel panel = load_panel(o.panel);
  const ReconstructionResult res = reconstruction_eval(panel, cfg);

  const fs::path out = ensure_out_dir(o.out);
  {
    const fs::path path = out / "reconstruction.json";
    std::ofstream os(path);
    if (!os) throw Error("eval-reconstruction: cannot write " + path.string());
    os << res.to_json().dump(2) << '\n';
  }

  json params = panel_params(o.panel);
  params["qtr"] = cfg.qtr;
  params["method"] = cfg.method;
  params["r"] = cfg.r;
  params["replicates"] = cfg.replicates;
  params["grid"] = grid_params(cfg.grid);
  params["weights"] = cfg.weights.to_json();
  params["k_cv"] = cfg.k_cv;
  params["pstar"] = cfg.pstar;
  params["threads"] = cfg.threads;
  write_meta(out, "eval-reconstruction", std::move(params), cfg.seed);

  json summary{{"mean_error", res.mean_error},
               {"sd_error", res.sd_error},
               {"replicates_used", res.replicates_used},
               {"excluded", res.excluded}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// -- export-plot-data --------------------------------------------------------

struct PlotOptions {
  std::string input;
  int bins = 30;
  std::string out;
};

std::vector<double> read_value_column(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("plot: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    throw InvalidArgument("plot: " + path.string() + " is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "value") {
    throw InvalidArgument("plot: expected header \"value\" in " +
                          path.string() + ", got \"" + line + "\"");
  }
  std::vector<double> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(csv::parse_double(
        line, "at " + path.string() + ":" + std::to_string(lineno)));
  }
  if (out.empty()) {
    throw InvalidArgument("plot: " + path.string() + " has no sample rows");
  }
  return out;
}

void write_qq_csv(const fs::path& path,
                  const std::vector<std::pair<double, double>>& pts) {
  std::ofstream os(path);
  if (!os) throw Error("plot: cannot write " + path.string());
  os << "theoretical,sample\n";
  for (const auto& [theo, samp] : pts) {
    os << csv::format_double(theo) << ',' << csv::format_double(samp) << '\n';
  }
}

void write_hist_csv(const fs::path& path, const std::vector<double>& values,
                    int bins) {
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<long long>((v - lo) / width);
    b = std::clamp<long long>(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  std::ofstream os(path);
  if (!os) throw Error("plot: cannot write " + path.string());
  os << "bin_lo,bin_hi,count,density\n";
  const auto n = static_cast<double>(values.size());
  for (int b = 0; b < bins; ++b) {
    os << csv::format_double(lo + b * width) << ','
       << csv::format_double(lo + (b + 1) * width) << ','
       << counts[static_cast<std::size_t>(b)] << ','
       << csv::format_double(static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                             (n * width))
       << '\n';
  }
}

int run_export_plot_data(const PlotOptions& o) {
  const std::vector<double> values = read_value_column(o.input);
  const fs::path out = ensure_out_dir(o.out);
  write_qq_csv(out / "qq.csv", qq_points(values));
  write_hist_csv(out / "hist.csv", values, o.bins);

  json params{{"input", o.input},
              {"bins", o.bins},
              {"n", values.size()}};
  write_meta(out, "export-plot-data", std::move(params), nullptr);
  std::cout << "plot data: n=" << values.size() << " -> "
            << (out / "qq.csv").string() << ", " << (out / "hist.csv").string()
            << "\n";
  return 0;
}

}  // namespace

// -- dispatch ----------------------------------------------------------------

int dispatch(std::vector<std::string> args) {
  CLI::App app{"Weighted-PCA factor analysis toolkit"};
  app.name("wpca");
  app.set_version_flag("--version", std::string(kVersion));
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);

  FitOptions fit_o;
  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "fit a weighted factor model with fixed weights");
  add_panel_options(fit_cmd, fit_o.panel);
  fit_cmd->add_option("--gamma", fit_o.gamma,
                      "comma-separated lag weights, normalized to sum 1")
      ->capture_default_str();
  fit_cmd->add_option("--r", fit_o.r, "number of factors")
      ->required()
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--out", fit_o.out, "output directory")->required();

  CvSelectOptions cv_o;
  CLI::App* cv_cmd = app.add_subcommand(
      "cv-select", "select lag weights by masked cross-validation, then fit");
  add_panel_options(cv_cmd, cv_o.panel);
  cv_cmd->add_option("--r", cv_o.r, "number of factors")
      ->required()
      ->check(CLI::PositiveNumber);
  cv_cmd->add_option("--max-lag", cv_o.max_lag, "largest lag in the grid")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cv_cmd->add_option("--step", cv_o.step, "grid step (1/step integral)")
      ->capture_default_str();
  cv_cmd->add_option("--k-cv", cv_o.k_cv, "cross-validation mask draws")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cv_cmd->add_option("--pstar", cv_o.pstar, "per-cell retention probability")
      ->capture_default_str();
  CLI::Option* cv_seed = cv_cmd->add_option(
      "--seed", cv_o.seed, "mask seed (WPCA_SEED overrides)");
  cv_cmd->add_option("--ranks", cv_o.ranks,
                     "comma-separated candidate ranks for joint selection");
  cv_cmd->add_option("--out", cv_o.out, "output directory")->required();

  RankOptions rank_o;
  CLI::App* rank_cmd = app.add_subcommand(
      "rank", "estimate the number of factors by eigenvalue ratios");
  add_panel_options(rank_cmd, rank_o.panel);
  rank_cmd
      ->add_option("--rmax", rank_o.rmax,
                   "largest candidate rank (clamped to min(N, T) - 1)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  rank_cmd->add_option("--out", rank_o.out,
                       "optional output directory for rank.json");

  StudyOptions est_o;
  CLI::App* est_cmd = app.add_subcommand(
      "sim-estimation", "replicated estimator comparison on simulated panels");
  add_study_options(est_cmd, est_o);

  StudyOptions cvstudy_o;
  CLI::App* cvstudy_cmd = app.add_subcommand(
      "sim-cv", "replicated quality study of cross-validated weight choice");
  add_study_options(cvstudy_cmd, cvstudy_o);

  InferenceOptions inf_o;
  CLI::App* inf_cmd = app.add_subcommand(
      "sim-inference", "normalized-residual sampling study on simulated panels");
  inf_cmd->add_option("--config", inf_o.config, "study configuration JSON")
      ->required()
      ->check(CLI::ExistingFile);
  inf_cmd->add_option("--reps", inf_o.reps, "replicates (overrides config)")
      ->check(CLI::PositiveNumber);
  inf_cmd->add_option("--seed", inf_o.seed,
                      "base seed (overrides config; WPCA_SEED wins)");
  inf_cmd->add_option("--threads", inf_o.threads,
                      "worker threads (0 = all hardware threads)")
      ->check(CLI::NonNegativeNumber);
  inf_cmd->add_option("--target", inf_o.target,
                      "residual row family (loading | factor)")
      ->check(CLI::IsMember({"loading", "factor"}));
  CLI::Option* inf_index = inf_cmd->add_option(
      "--index", inf_o.index, "0-based row index (default: middle row)");
  inf_cmd->add_option("--out", inf_o.out, "output directory")->required();

  ReconOptions rec_o;
  CLI::App* rec_cmd = app.add_subcommand(
      "eval-reconstruction",
      "masked held-out reconstruction error on a real panel");
  add_panel_options(rec_cmd, rec_o.panel);
  rec_cmd->add_option("--config", rec_o.config,
                      "optional experiment configuration JSON")
      ->check(CLI::ExistingFile);
  CLI::Option* rec_qtr =
      rec_cmd->add_option("--qtr", rec_o.qtr, "per-cell retention probability");
  rec_cmd->add_option("--method", rec_o.method,
                      "adawpca | wpca | pca | heteropca")
      ->check(CLI::IsMember({"adawpca", "wpca", "pca", "heteropca"}));
  CLI::Option* rec_r =
      rec_cmd->add_option("--r", rec_o.r, "number of factors")
          ->check(CLI::PositiveNumber);
  CLI::Option* rec_reps =
      rec_cmd->add_option("--reps", rec_o.reps, "mask replicates")
          ->check(CLI::PositiveNumber);
  CLI::Option* rec_seed = rec_cmd->add_option(
      "--seed", rec_o.seed, "mask seed (WPCA_SEED overrides)");
  CLI::Option* rec_kcv =
      rec_cmd->add_option("--k-cv", rec_o.k_cv, "adawpca CV draws")
          ->check(CLI::PositiveNumber);
  CLI::Option* rec_pstar = rec_cmd->add_option(
      "--pstar", rec_o.pstar, "adawpca CV retention probability");
  CLI::Option* rec_threads =
      rec_cmd->add_option("--threads", rec_o.threads,
                          "worker threads (0 = all hardware threads)")
          ->check(CLI::NonNegativeNumber);
  rec_cmd->add_option("--gamma", rec_o.gamma,
                      "fixed lag weights for method wpca");
  CLI::Option* rec_maxlag =
      rec_cmd->add_option("--max-lag", rec_o.max_lag,
                          "largest lag in the adawpca grid")
          ->check(CLI::NonNegativeNumber);
  CLI::Option* rec_step =
      rec_cmd->add_option("--step", rec_o.step, "adawpca grid step");
  rec_cmd->add_option("--out", rec_o.out, "output directory")->required();

  PlotOptions plot_o;
  CLI::App* plot_cmd = app.add_subcommand(
      "export-plot-data",
      "QQ and histogram data files from a saved residual sample");
  plot_cmd->add_option("--input", plot_o.input, "sample CSV (header: value)")
      ->required()
      ->check(CLI::ExistingFile);
  plot_cmd->add_option("--bins", plot_o.bins, "histogram bin count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  plot_cmd->add_option("--out", plot_o.out, "output directory")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cv_o.seed_given = cv_seed->count() > 0;
    inf_o.reps_given = inf_cmd->count("--reps") > 0;
    inf_o.seed_given = inf_cmd->count("--seed") > 0;
    inf_o.threads_given = inf_cmd->count("--threads") > 0;
    inf_o.index_given = inf_index->count() > 0;
    for (StudyOptions* so : {&est_o, &cvstudy_o}) {
      CLI::App* cmd = so == &est_o ? est_cmd : cvstudy_cmd;
      so->reps_given = cmd->count("--reps") > 0;
      so->seed_given = cmd->count("--seed") > 0;
      so->threads_given = cmd->count("--threads") > 0;
    }
    rec_o.qtr_given = rec_qtr->count() > 0;
    rec_o.r_given = rec_r->count() > 0;
    rec_o.reps_given = rec_reps->count() > 0;
    rec_o.seed_given = rec_seed->count() > 0;
    rec_o.k_cv_given = rec_kcv->count() > 0;
    rec_o.pstar_given = rec_pstar->count() > 0;
    rec_o.threads_given = rec_threads->count() > 0;
    rec_o.max_lag_given = rec_maxlag->count() > 0;
    rec_o.step_given = rec_step->count() > 0;

    if (fit_cmd->parsed()) return run_fit(fit_o);
    if (cv_cmd->parsed()) return run_cv_select(cv_o);
    if (rank_cmd->parsed()) return run_rank(rank_o);
    if (est_cmd->parsed()) return run_sim_estimation(est_o);
    if (cvstudy_cmd->parsed()) return run_sim_cv(cvstudy_o);
    if (inf_cmd->parsed()) return run_sim_inference(inf_o);
    if (rec_cmd->parsed()) return run_eval_reconstruction(rec_o);
    if (plot_cmd->parsed()) return run_export_plot_data(plot_o);
    std::cerr << app.help();
    return 1;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace wpca
