#pragma once

#include <json.hpp>

#include <vector>

#include "wpca/common.hpp"

namespace wpca {

// Weight vector (gamma_0, ..., gamma_K) describing the symmetric banded
// Toeplitz matrix Q with value gamma_k on the k-th sub/super-diagonals.
// Weights are kept on the unit simplex: every entry is nonnegative and the
// entries sum to one (any positive multiple of Q induces the same
// estimator, so the normalization costs nothing and makes candidate sets
// comparable).
class ToeplitzWeights {
 public:
  explicit ToeplitzWeights(Vector gamma);

  // gamma = (1): Q is the identity; plain PCA weighting.
  static ToeplitzWeights identity();

  // All mass on lag k: gamma_k = 1, everything else 0. Requires k >= 0.
  static ToeplitzWeights single_lag(int k);

  // Equal weight on the first B off-diagonal bands; with include_diagonal
  // the main diagonal joins the band at equal weight.
  static ToeplitzWeights banded(int bands, bool include_diagonal = false);

  // Rescales an arbitrary nonnegative vector onto the simplex.
  static ToeplitzWeights normalized(Vector raw);

  const Vector& gamma() const { return gamma_; }
  double operator[](int k) const { return gamma_[k]; }

  // Largest lag carried (K); the stored vector has K+1 entries.
  int max_lag() const { return static_cast<int>(gamma_.size()) - 1; }

  bool approx_equal(const ToeplitzWeights& other, double tol = 1e-12) const;

  nlohmann::json to_json() const;
  static ToeplitzWeights from_json(const nlohmann::json& j);

 private:
  Vector gamma_;
};

// Cached lag products of a fixed panel matrix X: prods[0] = X X^T
// (exactly symmetric) and prods[k] = sum_t x_t x_{t+k}^T for k >= 1.
// A weighted gram for any gamma up to max_lag is then a cheap linear
// combination, which is what makes candidate sweeps affordable.
struct LagGrams {
  std::vector<Matrix> prods;
  Index T = 0;
};

LagGrams compute_lag_grams(const Matrix& X, int max_lag);

// gamma_0 * prods[0] + sum_k gamma_k * (prods[k] + prods[k]^T).
// The result is bitwise symmetric. Requires w.max_lag() <= cached max lag.
Matrix combine_lag_grams(const LagGrams& lg, const ToeplitzWeights& w);

// X Q_gamma X^T without materializing the T x T matrix Q. Cost is one
// N x (T-k) x N product per carried lag. Requires max_lag <= T - 1.
Matrix weighted_gram(const Matrix& X, const ToeplitzWeights& w);

// Q_gamma * M for a T x m matrix M, using the banded structure row by row.
Matrix apply_toeplitz(const ToeplitzWeights& w, const Matrix& M);

// Finite candidate set over the simplex, with its construction parameters
// kept for provenance.
struct WeightGrid {
  std::vector<ToeplitzWeights> candidates;
  int max_lag = 0;
  double step = 1.0;

  std::size_t size() const { return candidates.size(); }

  nlohmann::json to_json() const;
  static WeightGrid from_json(const nlohmann::json& j);
};

// All lattice points of the simplex over lags 0..K whose coordinates are
// multiples of step, in ascending lexicographic order on
// (gamma_0, gamma_1, ...). 1/step must be an integer; the grid always
// contains the identity point (1, 0, ..., 0).
WeightGrid build_grid(int max_lag, double step);

// Signal-strength functional of a weighting under factor autocovariances
// Gamma_1..Gamma_K: the r-th largest singular value of
//   gamma_0 I + sum_k gamma_k (1 - k/T) (Gamma_k + Gamma_k^T).
// With asymptotic = true the (1 - k/T) attenuation is dropped and T is
// ignored.
double mu_gamma(const ToeplitzWeights& w, const std::vector<Matrix>& autocovs,
                Index T, bool asymptotic = false);

}  // namespace wpca
