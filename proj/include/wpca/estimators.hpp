#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wpca/common.hpp"
#include "wpca/weights.hpp"

namespace wpca {

// Complete N x T observation panel (units in rows, time in columns), with
// optional labels carried along for reporting.
struct Panel {
  Matrix X;
  std::vector<std::string> unit_labels;  // empty or one per row
  std::vector<std::string> time_labels;  // empty or one per column

  explicit Panel(Matrix data, std::vector<std::string> units = {},
                 std::vector<std::string> times = {});

  Index n() const { return X.rows(); }
  Index t() const { return X.cols(); }
};

// Flips columns of `U` so each one's largest-magnitude entry is positive
// (first such entry on ties); `partner` columns flip in tandem. This is the
// sign convention every decomposition in the library applies.
void canonicalize_signs(Matrix& U, Matrix* partner = nullptr);

struct EigPairs {
  Vector values;   // eigenvalues, ordered by decreasing magnitude
  Matrix vectors;  // orthonormal columns, one per value
};

// Top-r eigenpairs of a symmetric matrix, ranked by |eigenvalue|. Exact
// ties keep the backend's output order; each vector is sign-fixed so its
// largest-magnitude entry is positive (first such entry on ties). The
// residual ||S v - lambda v|| <= 1e-8 ||S||_2 is enforced per pair.
EigPairs sym_eig_topr(const Matrix& S, int r);

struct SvdTriple {
  Matrix U;
  Vector sigma;  // descending
  Matrix V;
};

// Rank-r truncated SVD with the same sign convention, applied to the left
// vectors and mirrored onto the right so U sigma V^T is preserved. Fails
// with a rank-deficiency error when fewer than r positive singular values
// exist.
SvdTriple svd_topr(const Matrix& M, int r);

// Result of the two-step weighted fit. Uhat and Vhat have orthonormal
// columns, sigma is positive descending, and Lhat Fhat^T equals the rank-r
// projection of the input panel under the chosen weighting.
struct FactorFit {
  Matrix Uhat;   // N x r
  Vector sigma;  // r
  Matrix Vhat;   // T x r
  Matrix Lhat;   // N x r, Uhat * diag(sigma)
  Matrix Fhat;   // T x r, sqrt(T) * Vhat
  ToeplitzWeights weights_used = ToeplitzWeights::identity();
  int r = 0;

  Index n() const { return Uhat.rows(); }
  Index t() const { return Vhat.rows(); }

  // Directory layout: Uhat.csv, Vhat.csv, sigma.csv, meta.json.
  void save(const std::filesystem::path& dir) const;
  static FactorFit load(const std::filesystem::path& dir);
};

// Two-step weighted fit: (1) top-r eigenvectors of the lag-weighted gram
// X Q X^T, ranked by |eigenvalue|; (2) rank-r SVD of the projected panel
// T^{-1/2} U U^T X, computed through the r x T reduced matrix U^T X.
// Requires 1 <= r <= min(N, T) and 2 * max_lag <= T.
FactorFit wpca(const Panel& panel, const ToeplitzWeights& w, int r);

// Same fit when the weighted gram S of panel.X is already available;
// wpca() is exactly this after computing S itself. Candidate sweeps use
// this entry point with grams combined from a shared lag cache.
FactorFit fit_from_gram(const Panel& panel, const Matrix& S,
                        const ToeplitzWeights& w, int r);

// Classical PCA as the identity-weight special case of the same pipeline.
FactorFit pca(const Panel& panel, int r);

// Diagonal-deleted iterative PCA: start from the gram with its diagonal
// zeroed, then repeatedly re-impute the diagonal from the current rank-r
// approximation. Returns the top-r eigenvectors of the final iterate; the
// full iterates can be captured through `trace` for cross-checking.
Matrix hetero_pca(const Panel& panel, int r, int max_iter = 20,
                  double tol = 1e-6, std::vector<Matrix>* trace = nullptr);

// Second-stage completion for an externally supplied N x r leading basis:
// rank-r SVD of the projected panel, with the usual sign convention and
// scalings. `w_used` is only recorded on the fit.
FactorFit complete_fit(const Panel& panel, const Matrix& basis,
                       const ToeplitzWeights& w_used, int r);

struct RankEstimate {
  int r_hat = 0;
  Vector eigenvalues;  // leading Rmax+1 eigenvalues of X X^T, descending
  Vector ratios;       // eigenvalue ratio at each candidate rank
};

// Eigenvalue-ratio rank selection: r_hat minimizes sigma_{j+1} / sigma_j
// over j = 1..Rmax, with denominators floored at 1e-12 sigma_1 and ties
// resolved toward the smallest j. Requires 1 <= Rmax <= min(N, T) - 1.
RankEstimate estimate_rank_detail(const Panel& panel, int Rmax);
int estimate_rank(const Panel& panel, int Rmax);

}  // namespace wpca
