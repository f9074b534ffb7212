#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wpca/common.hpp"
#include "wpca/estimators.hpp"
#include "wpca/weights.hpp"

namespace wpca {

// Orientation of a raw rectangular data file: time_rows means rows are time
// points and columns are variables (the usual macro-panel layout); unit_rows
// means rows are already units/variables.
enum class PanelLayout { time_rows, unit_rows };

PanelLayout panel_layout_from_string(const std::string& s);
std::string to_string(PanelLayout layout);

// Raw parsed table before balancing: every cell either holds a real value or
// is flagged missing. Labels come from the header row and the label column.
struct PanelSource {
  Matrix values;    // rows x cols; missing cells hold 0.0
  Matrix missing;   // rows x cols; 1.0 where the cell is missing, else 0.0
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  PanelLayout layout = PanelLayout::time_rows;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  double missing_count() const { return missing.sum(); }
};

// Parsing controls: which cell tokens mean "missing", and labels of rows to
// drop wholesale (metadata rows such as transform-code lines that some
// published panels carry between the header and the data).
struct ReadOptions {
  std::vector<std::string> missing_sentinels = {"", "NA"};
  std::vector<std::string> skip_row_labels = {};
};

// Reads a comma-separated file with a header row and a leading label column.
// Cells parse as reals; sentinel tokens (after trimming spaces) flag the cell
// missing. Malformed numeric cells raise InvalidArgument naming the 1-based
// row and column.
PanelSource read_panel_csv(const std::filesystem::path& path,
                           PanelLayout layout = PanelLayout::time_rows,
                           const ReadOptions& opts = {});

// Writes the source back to CSV in its own layout: header row from
// col_labels, label column from row_labels, missing cells empty. Values
// print with enough digits to round-trip bitwise.
void write_panel_csv(const std::filesystem::path& path,
                     const PanelSource& src);

// Balances a raw table into a complete N x T panel: drop variables whose
// missing fraction exceeds max_missing_frac, then keep only the time points
// with no missing values among the surviving variables, and orient units in
// rows. Values pass through untransformed. Raises InvalidArgument when
// nothing survives.
Panel preprocess_panel(const PanelSource& src, double max_missing_frac = 0.05);

// Masked reconstruction experiment on a fixed panel: per replicate, hide a
// random subset of cells, fit on the rescaled retained entries, and score
// the fit by squared reconstruction error on the hidden cells relative to
// their energy.
struct ReconstructionConfig {
  double qtr = 0.7;                // per-cell retention probability
  std::string method = "adawpca";  // adawpca | wpca | pca | heteropca
  int r = 1;
  int replicates = 100;
  std::uint64_t seed = 0;
  // Weight selection (adawpca) or fixed weighting (wpca).
  WeightGrid grid = build_grid(1, 1.0 / 9.0);
  ToeplitzWeights weights = ToeplitzWeights::identity();
  int k_cv = 10;
  double pstar = 0.9;
  int threads = 1;  // 0 = hardware concurrency

  static ReconstructionConfig from_json(const nlohmann::json& j);
};

struct ReconstructionResult {
  std::string method;
  int r = 0;
  double qtr = 0.0;
  double mean_error = 0.0;
  double sd_error = 0.0;
  std::vector<double> per_replicate;  // one entry per *used* replicate
  int replicates_used = 0;
  int excluded = 0;  // replicates with a degenerate holdout
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

// Runs the experiment: replicate j draws a Bernoulli(qtr) retention mask
// with seed seed + j, fits `method` at rank r on qtr^{-1} (mask o X), and
// records sum_{hidden}(X - Lhat Fhat^T)^2 / sum_{hidden} X^2 against the
// original panel. Replicates whose holdout is empty or carries zero energy
// are excluded and counted.
ReconstructionResult reconstruction_eval(const Panel& panel,
                                         const ReconstructionConfig& cfg);

}  // namespace wpca
