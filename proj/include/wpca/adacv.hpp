#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wpca/common.hpp"
#include "wpca/estimators.hpp"
#include "wpca/weights.hpp"

namespace wpca {

// Bernoulli observation mask: omega holds 0/1 entries, pstar the retention
// probability it was drawn with (not the realized density).
struct MaskPattern {
  Matrix omega;
  double pstar = 1.0;
  std::uint64_t seed = 0;
};

// Draws an N x T i.i.d. Bernoulli(pstar) mask, deterministic in the seed.
MaskPattern draw_mask(Index n, Index t, double pstar, std::uint64_t seed);

// Fits on the rescaled masked panel pstar^{-1} (omega o X).
FactorFit masked_fit(const Panel& panel, const MaskPattern& mask,
                     const ToeplitzWeights& w, int r);

// Held-out squared error of the fit's reconstruction against X, summed over
// cells with omega = 0 and divided by N*T. An empty holdout returns 0 and
// sets *empty_holdout when provided.
double cv_error(const Panel& panel, const MaskPattern& mask,
                const FactorFit& fit, bool* empty_holdout = nullptr);

// Cross-validation record for one selection run. Candidate/rank pairs are
// flattened candidate-major: entry c * ranks.size() + j holds candidate c
// evaluated at ranks[j].
struct CvReport {
  WeightGrid candidates;
  std::vector<int> ranks;                  // evaluated ranks, at least one
  Matrix draw_cv;                          // K_cv x (candidates * ranks)
  std::vector<double> mean_cv;             // candidate-major means
  int chosen_index = 0;                    // winning candidate
  std::optional<int> chosen_rank;          // set when rank selection ran
  int k_cv = 0;
  double pstar = 1.0;
  std::vector<std::uint64_t> seeds;        // per-draw mask seeds
  std::vector<std::uint64_t> mask_hashes;  // per-draw mask fingerprints
  std::vector<std::string> notes;          // diagnostics, e.g. failed fits

  nlohmann::json to_json() const;
};

// Adaptive weight selection: K_cv mask draws, each shared across every
// candidate; per-candidate CV averaged over draws; the winner (ties broken
// by grid order, then rank order) refitted on the full unmasked panel.
// `ranks` empty selects weights only at rank r; nonempty selects the rank
// jointly. Candidates whose fit fails score +infinity and are noted.
std::pair<CvReport, FactorFit> ada_wpca(const Panel& panel,
                                        const WeightGrid& grid, int r,
                                        int k_cv = 10, double pstar = 0.9,
                                        std::uint64_t seed = 0,
                                        const std::vector<int>& ranks = {});

}  // namespace wpca
