#include "wpca/estimators.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "csv_util.hpp"

namespace wpca {

// Flip columns so each one's largest-magnitude entry is positive; on ties
// the first such entry decides. `partner` columns flip in tandem so factor
// products are unchanged.
void canonicalize_signs(Matrix& U, Matrix* partner) {
  for (Index j = 0; j < U.cols(); ++j) {
    Index imax = 0;
    double best = -1.0;
    for (Index i = 0; i < U.rows(); ++i) {
      const double a = std::abs(U(i, j));
      if (a > best) {
        best = a;
        imax = i;
      }
    }
    if (U(imax, j) < 0.0) {
      U.col(j) = -U.col(j);
      if (partner) partner->col(j) = -partner->col(j);
    }
  }
}

Panel::Panel(Matrix data, std::vector<std::string> units,
             std::vector<std::string> times)
    : X(std::move(data)),
      unit_labels(std::move(units)),
      time_labels(std::move(times)) {
  if (X.rows() < 1 || X.cols() < 1) {
    throw InvalidArgument("panel: needs at least one unit and one period");
  }
  if (!X.allFinite()) {
    throw InvalidArgument("panel: all entries must be finite");
  }
  if (!unit_labels.empty() &&
      unit_labels.size() != static_cast<std::size_t>(X.rows())) {
    throw InvalidArgument("panel: unit label count must match rows");
  }
  if (!time_labels.empty() &&
      time_labels.size() != static_cast<std::size_t>(X.cols())) {
    throw InvalidArgument("panel: time label count must match columns");
  }
}

EigPairs sym_eig_topr(const Matrix& S, int r) {
  const Index n = S.rows();
  if (n < 1 || n != S.cols()) {
    throw InvalidArgument("eig: matrix must be square and nonempty");
  }
  if (r < 1 || r > n) {
    throw InvalidArgument("eig: r must lie in [1, n]");
  }
  if (!S.allFinite()) {
    throw InvalidArgument("eig: matrix must be finite");
  }
  const double scale = S.cwiseAbs().maxCoeff();
  if ((S - S.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, scale)) {
    throw InvalidArgument("eig: matrix is not symmetric within tolerance");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(S);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eig: eigendecomposition did not converge");
  }
  const Vector& vals = solver.eigenvalues();  // ascending

  // Rank by decreasing magnitude; stable sort keeps the backend's order on
  // exact ties.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(vals[a]) > std::abs(vals[b]);
  });

  EigPairs out;
  out.values.resize(r);
  out.vectors.resize(n, r);
  for (int j = 0; j < r; ++j) {
    out.values[j] = vals[order[static_cast<std::size_t>(j)]];
    out.vectors.col(j) = solver.eigenvectors().col(order[static_cast<std::size_t>(j)]);
  }
  canonicalize_signs(out.vectors);

  const double opnorm = std::abs(vals[order[0]]);
  for (int j = 0; j < r; ++j) {
    const double resid =
        (S * out.vectors.col(j) - out.values[j] * out.vectors.col(j)).norm();
    if (resid > 1e-8 * std::max(opnorm, 1e-300)) {
      throw NumericError("eig: eigenpair residual exceeds tolerance");
    }
  }
  return out;
}

SvdTriple svd_topr(const Matrix& M, int r) {
  if (M.rows() < 1 || M.cols() < 1) {
    throw InvalidArgument("svd: matrix must be nonempty");
  }
  if (!M.allFinite()) {
    throw InvalidArgument("svd: matrix must be finite");
  }
  if (r < 1 || r > std::min(M.rows(), M.cols())) {
    throw InvalidArgument("svd: r must lie in [1, min(rows, cols)]");
  }
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericError("svd: decomposition did not converge");
  }
  if (!(svd.singularValues()(r - 1) > 0.0)) {
    throw NumericError("svd: rank deficiency, fewer than r positive "
                       "singular values");
  }
  SvdTriple out;
  out.U = svd.matrixU().leftCols(r);
  out.sigma = svd.singularValues().head(r);
  out.V = svd.matrixV().leftCols(r);
  canonicalize_signs(out.U, &out.V);
  return out;
}

FactorFit fit_from_gram(const Panel& panel, const Matrix& S,
                        const ToeplitzWeights& w, int r) {
  const Index N = panel.n();
  const Index T = panel.t();
  if (r < 1 || r > std::min(N, T)) {
    throw InvalidArgument("wpca: r must lie in [1, min(N, T)]");
  }
  if (2 * w.max_lag() > T) {
    throw InvalidArgument("wpca: weights need max lag at most T/2");
  }
  if (S.rows() != N || S.cols() != N) {
    throw InvalidArgument("wpca: gram matrix must be N x N");
  }

  // Step 1: leading eigenspace of the weighted gram.
  const EigPairs eig = sym_eig_topr(S, r);
  return complete_fit(panel, eig.vectors, w, r);
}

FactorFit complete_fit(const Panel& panel, const Matrix& basis,
                       const ToeplitzWeights& w_used, int r) {
  const Index N = panel.n();
  const Index T = panel.t();
  if (r < 1 || r > std::min(N, T)) {
    throw InvalidArgument("complete_fit: r must lie in [1, min(N, T)]");
  }
  if (basis.rows() != N || basis.cols() != r) {
    throw InvalidArgument("complete_fit: basis must be N x r");
  }

  // Step 2: SVD of the projected panel, via its r x T reduced form.
  const double root_t = std::sqrt(static_cast<double>(T));
  Matrix reduced = (basis.transpose() * panel.X) / root_t;
  SvdTriple svd = svd_topr(reduced, r);

  FactorFit fit;
  fit.Uhat.noalias() = basis * svd.U;
  fit.sigma = std::move(svd.sigma);
  fit.Vhat = std::move(svd.V);
  canonicalize_signs(fit.Uhat, &fit.Vhat);
  fit.Lhat = fit.Uhat * fit.sigma.asDiagonal();
  fit.Fhat = root_t * fit.Vhat;
  fit.weights_used = w_used;
  fit.r = r;
  return fit;
}

FactorFit wpca(const Panel& panel, const ToeplitzWeights& w, int r) {
  if (2 * w.max_lag() > panel.t()) {
    throw InvalidArgument("wpca: weights need max lag at most T/2");
  }
  return fit_from_gram(panel, weighted_gram(panel.X, w), w, r);
}

FactorFit pca(const Panel& panel, int r) {
  return wpca(panel, ToeplitzWeights::identity(), r);
}

Matrix hetero_pca(const Panel& panel, int r, int max_iter, double tol,
                  std::vector<Matrix>* trace) {
  if (r < 1 || r > std::min(panel.n(), panel.t())) {
    throw InvalidArgument("heteropca: r must lie in [1, min(N, T)]");
  }
  if (max_iter < 0 || !(tol >= 0.0)) {
    throw InvalidArgument("heteropca: max_iter and tol must be nonnegative");
  }
  const Matrix G = compute_lag_grams(panel.X, 0).prods[0];
  const double gmax = G.cwiseAbs().maxCoeff();

  Matrix M = G;
  M.diagonal().setZero();
  if (trace) {
    trace->clear();
    trace->push_back(M);
  }
  for (int it = 0; it < max_iter; ++it) {
    const EigPairs eig = sym_eig_topr(M, r);
    const Matrix approx = eig.vectors * eig.values.asDiagonal() *
                          eig.vectors.transpose();
    const double delta =
        (approx.diagonal() - M.diagonal()).cwiseAbs().maxCoeff();
    M.diagonal() = approx.diagonal();
    if (trace) trace->push_back(M);
    if (delta <= tol * gmax) break;
  }
  return sym_eig_topr(M, r).vectors;
}

RankEstimate estimate_rank_detail(const Panel& panel, int Rmax) {
  const Index N = panel.n();
  const Index T = panel.t();
  if (Rmax < 1 || Rmax > std::min(N, T) - 1) {
    throw InvalidArgument("rank: Rmax must lie in [1, min(N, T) - 1]");
  }
  const Matrix G = compute_lag_grams(panel.X, 0).prods[0];
  Eigen::SelfAdjointEigenSolver<Matrix> solver(G);
  if (solver.info() != Eigen::Success) {
    throw NumericError("rank: eigendecomposition did not converge");
  }

  RankEstimate out;
  out.eigenvalues.resize(Rmax + 1);
  for (int j = 0; j <= Rmax; ++j) {
    // Gram eigenvalues are nonnegative up to roundoff; clamp the noise.
    out.eigenvalues[j] = std::max(solver.eigenvalues()(N - 1 - j), 0.0);
  }
  const double top = out.eigenvalues[0];
  if (!(top > 0.0)) {
    throw NumericError("rank: panel is identically zero");
  }

  out.ratios.resize(Rmax);
  int best = 1;
  for (int j = 1; j <= Rmax; ++j) {
    const double denom = std::max(out.eigenvalues[j - 1], 1e-12 * top);
    out.ratios[j - 1] = out.eigenvalues[j] / denom;
    if (out.ratios[j - 1] < out.ratios[best - 1]) best = j;
  }
  out.r_hat = best;
  return out;
}

int estimate_rank(const Panel& panel, int Rmax) {
  return estimate_rank_detail(panel, Rmax).r_hat;
}

void FactorFit::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  csv::write_matrix(dir / "Uhat.csv", Uhat);
  csv::write_matrix(dir / "Vhat.csv", Vhat);
  csv::write_matrix(dir / "sigma.csv", sigma);

  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["n"] = n();
  meta["t"] = t();
  meta["r"] = r;
  meta["weights_used"] = weights_used.to_json();
  meta["layout"] = {
      {"Uhat.csv", "N rows (units) x r columns (factors), orthonormal"},
      {"Vhat.csv", "T rows (periods) x r columns (factors), orthonormal"},
      {"sigma.csv", "r singular values, descending, one per row"},
      {"derived", "Lhat = Uhat diag(sigma); Fhat = sqrt(T) Vhat"}};
  std::ofstream out(dir / "meta.json");
  if (!out) {
    throw InvalidArgument("fit: cannot write meta.json under " + dir.string());
  }
  out << meta.dump(2) << '\n';
}

FactorFit FactorFit::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) {
    throw InvalidArgument("fit: cannot read meta.json under " + dir.string());
  }
  nlohmann::json meta = nlohmann::json::parse(in, nullptr, true);

  FactorFit fit;
  fit.r = meta.at("r").get<int>();
  fit.weights_used = ToeplitzWeights::from_json(meta.at("weights_used"));
  fit.Uhat = csv::read_matrix(dir / "Uhat.csv");
  fit.Vhat = csv::read_matrix(dir / "Vhat.csv");
  const Matrix sig = csv::read_matrix(dir / "sigma.csv");
  if (sig.cols() != 1 || sig.rows() != fit.r) {
    throw InvalidArgument("fit: sigma.csv must hold r values in one column");
  }
  fit.sigma = sig.col(0);
  if (fit.Uhat.cols() != fit.r || fit.Vhat.cols() != fit.r ||
      fit.Uhat.rows() != meta.at("n").get<Index>() ||
      fit.Vhat.rows() != meta.at("t").get<Index>()) {
    throw InvalidArgument("fit: matrix shapes disagree with meta.json");
  }
  fit.Lhat = fit.Uhat * fit.sigma.asDiagonal();
  fit.Fhat = std::sqrt(static_cast<double>(fit.Vhat.rows())) * fit.Vhat;
  return fit;
}

}  // namespace wpca
