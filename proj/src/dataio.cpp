#include "wpca/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <utility>

#include "csv_util.hpp"
#include "wpca/adacv.hpp"
#include "wpca/parallel.hpp"

namespace wpca {

namespace {

// Splits one CSV line on commas outside double quotes; surrounding quotes
// are stripped and "" inside a quoted field is an escaped quote. Labeled
// data files (unlike the numeric tables csv_util handles) can carry quoted
// names containing commas.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (!field.empty() && field.back() == '\r') field.pop_back();
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) {
    --b;
  }
  return s.substr(a, b - a);
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// Field quoting for labels on output: quote only when the label needs it.
std::string quote_label(const std::string& s) {
  if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

PanelLayout panel_layout_from_string(const std::string& s) {
  if (s == "time_rows") return PanelLayout::time_rows;
  if (s == "unit_rows") return PanelLayout::unit_rows;
  throw InvalidArgument("layout: expected 'time_rows' or 'unit_rows', got '" +
                        s + "'");
}

std::string to_string(PanelLayout layout) {
  return layout == PanelLayout::time_rows ? "time_rows" : "unit_rows";
}

PanelSource read_panel_csv(const std::filesystem::path& path,
                           PanelLayout layout, const ReadOptions& opts) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("csv: cannot open for reading: " + path.string());
  }

  std::string line;
  std::size_t lineno = 0;

  // Header row: first cell is the label-column title, the rest are column
  // labels.
  std::vector<std::string> col_labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() < 2) {
      throw InvalidArgument("csv: header with no data columns in " +
                            path.string());
    }
    col_labels.assign(fields.begin() + 1, fields.end());
    for (auto& label : col_labels) label = trim(label);
    break;
  }
  if (col_labels.empty()) {
    throw InvalidArgument("csv: empty file: " + path.string());
  }

  const std::size_t cols = col_labels.size();
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> missing;

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string label = trim(fields.front());
    if (contains(opts.skip_row_labels, label)) continue;
    if (fields.size() != cols + 1) {
      throw InvalidArgument(
          "csv: row " + std::to_string(lineno) + " has " +
          std::to_string(fields.size() - 1) + " data cells, expected " +
          std::to_string(cols) + " in " + path.string());
    }
    std::vector<double> vrow(cols, 0.0);
    std::vector<double> mrow(cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      const std::string cell = trim(fields[j + 1]);
      if (contains(opts.missing_sentinels, cell)) {
        mrow[j] = 1.0;
        continue;
      }
      vrow[j] = csv::parse_double(
          cell, "at " + path.string() + ":" + std::to_string(lineno) +
                    " column " + std::to_string(j + 2));
    }
    row_labels.push_back(label);
    values.push_back(std::move(vrow));
    missing.push_back(std::move(mrow));
  }

  if (values.empty()) {
    throw InvalidArgument("csv: no data rows in " + path.string());
  }

  PanelSource src;
  src.layout = layout;
  src.row_labels = std::move(row_labels);
  src.col_labels = std::move(col_labels);
  src.values.resize(static_cast<Index>(values.size()),
                    static_cast<Index>(cols));
  src.missing.resize(src.values.rows(), src.values.cols());
  for (Index i = 0; i < src.values.rows(); ++i) {
    for (Index j = 0; j < src.values.cols(); ++j) {
      src.values(i, j) = values[std::size_t(i)][std::size_t(j)];
      src.missing(i, j) = missing[std::size_t(i)][std::size_t(j)];
    }
  }
  return src;
}

void write_panel_csv(const std::filesystem::path& path,
                     const PanelSource& src) {
  if (src.missing.rows() != src.values.rows() ||
      src.missing.cols() != src.values.cols()) {
    throw InvalidArgument("csv write: missing-flag shape differs from values");
  }
  if (Index(src.row_labels.size()) != src.values.rows() ||
      Index(src.col_labels.size()) != src.values.cols()) {
    throw InvalidArgument("csv write: label counts do not match dimensions");
  }
  std::ofstream out(path);
  if (!out) {
    throw InvalidArgument("csv: cannot open for writing: " + path.string());
  }
  out << "id";
  for (const auto& label : src.col_labels) out << ',' << quote_label(label);
  out << '\n';
  for (Index i = 0; i < src.values.rows(); ++i) {
    out << quote_label(src.row_labels[std::size_t(i)]);
    for (Index j = 0; j < src.values.cols(); ++j) {
      out << ',';
      if (src.missing(i, j) == 0.0) out << csv::format_double(src.values(i, j));
    }
    out << '\n';
  }
  if (!out.good()) {
    throw InvalidArgument("csv: write failed: " + path.string());
  }
}

Panel preprocess_panel(const PanelSource& src, double max_missing_frac) {
  if (!(max_missing_frac >= 0.0 && max_missing_frac < 1.0)) {
    throw InvalidArgument("preprocess: max_missing_frac must lie in [0, 1)");
  }
  if (src.values.rows() < 1 || src.values.cols() < 1) {
    throw InvalidArgument("preprocess: empty source");
  }
  if (src.missing.rows() != src.values.rows() ||
      src.missing.cols() != src.values.cols()) {
    throw InvalidArgument("preprocess: missing-flag shape differs from values");
  }

  // Work in variables x times orientation.
  const bool transpose = src.layout == PanelLayout::time_rows;
  const Matrix vals =
      transpose ? Matrix(src.values.transpose()) : src.values;
  const Matrix miss =
      transpose ? Matrix(src.missing.transpose()) : src.missing;
  const std::vector<std::string>& var_labels =
      transpose ? src.col_labels : src.row_labels;
  const std::vector<std::string>& time_labels =
      transpose ? src.row_labels : src.col_labels;

  const Index n_vars = vals.rows();
  const Index n_times = vals.cols();

  std::vector<Index> keep_vars;
  for (Index i = 0; i < n_vars; ++i) {
    const double frac = miss.row(i).sum() / double(n_times);
    if (frac <= max_missing_frac) keep_vars.push_back(i);
  }
  if (keep_vars.empty()) {
    throw InvalidArgument(
        "preprocess: every variable exceeds the missing-value threshold");
  }

  std::vector<Index> keep_times;
  for (Index t = 0; t < n_times; ++t) {
    bool complete = true;
    for (const Index i : keep_vars) {
      if (miss(i, t) != 0.0) {
        complete = false;
        break;
      }
    }
    if (complete) keep_times.push_back(t);
  }
  if (keep_times.empty()) {
    throw InvalidArgument(
        "preprocess: no time point is complete after dropping variables");
  }

  Matrix X(Index(keep_vars.size()), Index(keep_times.size()));
  for (std::size_t a = 0; a < keep_vars.size(); ++a) {
    for (std::size_t b = 0; b < keep_times.size(); ++b) {
      X(Index(a), Index(b)) = vals(keep_vars[a], keep_times[b]);
    }
  }

  std::vector<std::string> units;
  std::vector<std::string> times;
  if (Index(var_labels.size()) == n_vars) {
    for (const Index i : keep_vars) units.push_back(var_labels[std::size_t(i)]);
  }
  if (Index(time_labels.size()) == n_times) {
    for (const Index t : keep_times) {
      times.push_back(time_labels[std::size_t(t)]);
    }
  }
  return Panel(std::move(X), std::move(units), std::move(times));
}

ReconstructionConfig ReconstructionConfig::from_json(const nlohmann::json& j) {
  ReconstructionConfig cfg;
  if (j.contains("qtr")) cfg.qtr = j.at("qtr").get<double>();
  if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
  if (j.contains("r")) cfg.r = j.at("r").get<int>();
  if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("grid")) {
    // Same shorthand the study configs use: a lattice description.
    const auto& g = j.at("grid");
    cfg.grid = build_grid(g.value("max_lag", 1), g.value("step", 1.0 / 9.0));
  }
  if (j.contains("weights")) {
    cfg.weights = ToeplitzWeights::from_json(j.at("weights"));
  }
  if (j.contains("k_cv")) cfg.k_cv = j.at("k_cv").get<int>();
  if (j.contains("pstar")) cfg.pstar = j.at("pstar").get<double>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  return cfg;
}

nlohmann::json ReconstructionResult::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["r"] = r;
  j["qtr"] = qtr;
  j["mean_error"] = mean_error;
  j["sd_error"] = sd_error;
  j["reps"] = replicates_used;
  j["excluded"] = excluded;
  j["per_replicate"] = per_replicate;
  j["notes"] = notes;
  return j;
}

ReconstructionResult reconstruction_eval(const Panel& panel,
                                         const ReconstructionConfig& cfg) {
  if (!(cfg.qtr > 0.0 && cfg.qtr < 1.0)) {
    throw InvalidArgument("reconstruction: qtr must lie in (0, 1)");
  }
  if (cfg.replicates < 1) {
    throw InvalidArgument("reconstruction: replicates must be positive");
  }
  const Index N = panel.n();
  const Index T = panel.t();
  if (cfg.r < 1 || cfg.r > std::min(N, T)) {
    throw InvalidArgument("reconstruction: rank out of range");
  }
  const bool is_ada = cfg.method == "adawpca";
  const bool is_wpca = cfg.method == "wpca";
  const bool is_pca = cfg.method == "pca";
  const bool is_hetero = cfg.method == "heteropca";
  if (!is_ada && !is_wpca && !is_pca && !is_hetero) {
    throw InvalidArgument("reconstruction: unknown method '" + cfg.method +
                          "'");
  }
  if (is_ada) {
    if (cfg.k_cv < 1) {
      throw InvalidArgument("reconstruction: k_cv must be positive");
    }
    if (!(cfg.pstar > 0.0 && cfg.pstar < 1.0)) {
      throw InvalidArgument("reconstruction: pstar must lie in (0, 1)");
    }
    if (cfg.grid.candidates.empty()) {
      throw InvalidArgument("reconstruction: empty weight grid");
    }
  }

  struct Slot {
    double error = 0.0;
    bool used = false;
    std::string note;
  };
  std::vector<Slot> slots(std::size_t(cfg.replicates));

  parallel_for(cfg.replicates, cfg.threads, [&](int j) {
    Slot& slot = slots[std::size_t(j)];
    try {
      const MaskPattern mask =
          draw_mask(N, T, cfg.qtr, cfg.seed + std::uint64_t(j));
      const Matrix held = Matrix::Ones(N, T) - mask.omega;
      const double den =
          held.cwiseProduct(panel.X).squaredNorm();
      if (held.sum() == 0.0 || den == 0.0) {
        slot.note = "replicate " + std::to_string(j) +
                    ": holdout empty or carries zero energy";
        return;
      }

      FactorFit fit = [&]() {
        if (is_wpca) return masked_fit(panel, mask, cfg.weights, cfg.r);
        if (is_pca) {
          return masked_fit(panel, mask, ToeplitzWeights::identity(), cfg.r);
        }
        const Matrix rescaled =
            mask.omega.cwiseProduct(panel.X) / mask.pstar;
        const Panel masked_panel(rescaled);
        if (is_hetero) {
          const Matrix basis = hetero_pca(masked_panel, cfg.r);
          return complete_fit(masked_panel, basis,
                              ToeplitzWeights::identity(), cfg.r);
        }
        const std::uint64_t nested_seed = splitmix64(
            (cfg.seed + std::uint64_t(j)) ^ 0x9f0e1d2c3b4a5968ULL);
        return ada_wpca(masked_panel, cfg.grid, cfg.r, cfg.k_cv, cfg.pstar,
                        nested_seed)
            .second;
      }();

      const Matrix recon = fit.Lhat * fit.Fhat.transpose();
      const double num =
          held.cwiseProduct(panel.X - recon).squaredNorm();
      slot.error = num / den;
      slot.used = true;
    } catch (const Error& e) {
      slot.note = "replicate " + std::to_string(j) + ": " + e.what();
    }
  });

  ReconstructionResult res;
  res.method = cfg.method;
  res.r = cfg.r;
  res.qtr = cfg.qtr;
  for (const Slot& slot : slots) {
    if (slot.used) {
      res.per_replicate.push_back(slot.error);
    } else {
      ++res.excluded;
      res.notes.push_back(slot.note);
    }
  }
  res.replicates_used = int(res.per_replicate.size());
  if (res.replicates_used == 0) {
    throw NumericError("reconstruction: every replicate was excluded");
  }
  double sum = 0.0;
  for (const double e : res.per_replicate) sum += e;
  res.mean_error = sum / res.replicates_used;
  double ss = 0.0;
  for (const double e : res.per_replicate) {
    ss += (e - res.mean_error) * (e - res.mean_error);
  }
  res.sd_error = res.replicates_used > 1
                     ? std::sqrt(ss / (res.replicates_used - 1))
                     : 0.0;
  if (res.excluded > 0) {
    res.notes.push_back(std::to_string(res.excluded) +
                        " replicate(s) excluded");
  }
  return res;
}

}  // namespace wpca
