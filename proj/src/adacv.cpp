#include "wpca/adacv.hpp"

#include <cmath>
#include <limits>

namespace wpca {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t mask_fingerprint(const MaskPattern& mask) {
  return fnv1a(mask.omega.data(),
               sizeof(double) * static_cast<std::size_t>(mask.omega.size()));
}

double finite_or_string_json(double v, nlohmann::json& slot) {
  if (std::isfinite(v)) {
    slot = v;
  } else {
    slot = v > 0 ? "inf" : "-inf";
  }
  return v;
}

}  // namespace

MaskPattern draw_mask(Index n, Index t, double pstar, std::uint64_t seed) {
  if (n < 1 || t < 1) {
    throw InvalidArgument("draw_mask: dimensions must be positive");
  }
  if (!(pstar > 0.0) || pstar > 1.0) {
    throw InvalidArgument("draw_mask: retention rate must lie in (0, 1]");
  }
  MaskPattern mask;
  mask.omega.resize(n, t);
  mask.pstar = pstar;
  mask.seed = seed;
  Rng rng(seed);
  for (Index j = 0; j < t; ++j) {
    for (Index i = 0; i < n; ++i) {
      mask.omega(i, j) = rng.bernoulli(pstar) ? 1.0 : 0.0;
    }
  }
  return mask;
}

FactorFit masked_fit(const Panel& panel, const MaskPattern& mask,
                     const ToeplitzWeights& w, int r) {
  if (mask.omega.rows() != panel.n() || mask.omega.cols() != panel.t()) {
    throw InvalidArgument("masked_fit: mask and panel shapes disagree");
  }
  Matrix scaled = mask.omega.cwiseProduct(panel.X) / mask.pstar;
  return wpca(Panel(std::move(scaled)), w, r);
}

double cv_error(const Panel& panel, const MaskPattern& mask,
                const FactorFit& fit, bool* empty_holdout) {
  const Index n = panel.n();
  const Index t = panel.t();
  if (mask.omega.rows() != n || mask.omega.cols() != t) {
    throw InvalidArgument("cv_error: mask and panel shapes disagree");
  }
  if (fit.Lhat.rows() != n || fit.Fhat.rows() != t) {
    throw InvalidArgument("cv_error: fit and panel shapes disagree");
  }
  if (empty_holdout) *empty_holdout = false;

  const Matrix recon = fit.Lhat * fit.Fhat.transpose();
  double sum = 0.0;
  bool any = false;
  for (Index j = 0; j < t; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (mask.omega(i, j) == 0.0) {
        const double d = panel.X(i, j) - recon(i, j);
        sum += d * d;
        any = true;
      }
    }
  }
  if (!any) {
    if (empty_holdout) *empty_holdout = true;
    return 0.0;
  }
  return sum / (double(n) * double(t));
}

std::pair<CvReport, FactorFit> ada_wpca(const Panel& panel,
                                        const WeightGrid& grid, int r,
                                        int k_cv, double pstar,
                                        std::uint64_t seed,
                                        const std::vector<int>& ranks) {
  if (grid.candidates.empty()) {
    throw InvalidArgument("ada_wpca: candidate grid must be nonempty");
  }
  if (k_cv < 1) {
    throw InvalidArgument("ada_wpca: number of draws must be at least 1");
  }
  if (!(pstar > 0.0) || pstar > 1.0) {
    throw InvalidArgument("ada_wpca: retention rate must lie in (0, 1]");
  }
  for (int rr : ranks) {
    if (rr < 1) {
      throw InvalidArgument("ada_wpca: every candidate rank must be positive");
    }
  }
  if (ranks.empty() && r < 1) {
    throw InvalidArgument("ada_wpca: rank must be positive");
  }

  const Index n = panel.n();
  const Index t = panel.t();
  const int n_cand = static_cast<int>(grid.candidates.size());
  const std::vector<int> eval_ranks = ranks.empty() ? std::vector<int>{r} : ranks;
  const int n_rank = static_cast<int>(eval_ranks.size());
  const int n_col = n_cand * n_rank;

  CvReport report;
  report.candidates = grid;
  report.ranks = eval_ranks;
  report.draw_cv = Matrix::Zero(k_cv, n_col);
  report.k_cv = k_cv;
  report.pstar = pstar;
  report.seeds.reserve(k_cv);
  report.mask_hashes.reserve(k_cv);

  for (int j = 0; j < k_cv; ++j) {
    const std::uint64_t mask_seed = seed + static_cast<std::uint64_t>(j);
    const MaskPattern mask = draw_mask(n, t, pstar, mask_seed);
    report.seeds.push_back(mask_seed);
    report.mask_hashes.push_back(mask_fingerprint(mask));

    // One scaled panel and one set of lag products serve every candidate:
    // each candidate gram is then just a linear combination.
    Panel scaled(mask.omega.cwiseProduct(panel.X) / mask.pstar);
    const LagGrams grams = compute_lag_grams(scaled.X, grid.max_lag);

    bool holdout_noted = false;
    for (int c = 0; c < n_cand; ++c) {
      const ToeplitzWeights& w = grid.candidates[c];
      const Matrix gram = combine_lag_grams(grams, w);
      for (int q = 0; q < n_rank; ++q) {
        double cv;
        try {
          const FactorFit fit = fit_from_gram(scaled, gram, w, eval_ranks[q]);
          bool empty = false;
          cv = cv_error(panel, mask, fit, &empty);
          if (empty && !holdout_noted) {
            report.notes.push_back("draw " + std::to_string(j) +
                                   ": empty holdout, CV is vacuously 0");
            holdout_noted = true;
          }
        } catch (const Error& e) {
          cv = kInf;
          report.notes.push_back(
              "draw " + std::to_string(j) + ", candidate " +
              std::to_string(c) + ", rank " + std::to_string(eval_ranks[q]) +
              ": fit failed (" + e.what() + "), scored +inf");
        }
        report.draw_cv(j, c * n_rank + q) = cv;
      }
    }
  }

  report.mean_cv.assign(n_col, 0.0);
  for (int m = 0; m < n_col; ++m) {
    report.mean_cv[m] = report.draw_cv.col(m).mean();
  }

  int best = -1;
  for (int m = 0; m < n_col; ++m) {
    if (std::isfinite(report.mean_cv[m]) &&
        (best < 0 || report.mean_cv[m] < report.mean_cv[best])) {
      best = m;
    }
  }
  if (best < 0) {
    throw NumericError(
        "ada_wpca: every candidate fit failed on every draw; no usable "
        "selection exists");
  }
  report.chosen_index = best / n_rank;
  const int final_rank = eval_ranks[best % n_rank];
  if (!ranks.empty()) report.chosen_rank = final_rank;

  FactorFit final_fit =
      wpca(panel, grid.candidates[report.chosen_index], final_rank);
  return {std::move(report), std::move(final_fit)};
}

nlohmann::json CvReport::to_json() const {
  nlohmann::json draws = nlohmann::json::array();
  for (Index j = 0; j < draw_cv.rows(); ++j) {
    nlohmann::json row = nlohmann::json::array();
    for (Index m = 0; m < draw_cv.cols(); ++m) {
      nlohmann::json slot;
      finite_or_string_json(draw_cv(j, m), slot);
      row.push_back(std::move(slot));
    }
    draws.push_back(std::move(row));
  }
  nlohmann::json means = nlohmann::json::array();
  for (double v : mean_cv) {
    nlohmann::json slot;
    finite_or_string_json(v, slot);
    means.push_back(std::move(slot));
  }
  nlohmann::json j{{"grid", candidates.to_json()},
                   {"ranks", ranks},
                   {"draw_cv", std::move(draws)},
                   {"mean_cv", std::move(means)},
                   {"chosen_index", chosen_index},
                   {"k_cv", k_cv},
                   {"pstar", pstar},
                   {"seeds", seeds},
                   {"mask_hashes", mask_hashes},
                   {"notes", notes}};
  if (chosen_rank) {
    j["chosen_rank"] = *chosen_rank;
  } else {
    j["chosen_rank"] = nullptr;
  }
  return j;
}

}  // namespace wpca
