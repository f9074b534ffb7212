#include "wpca/weights.hpp"

#include <algorithm>
#include <cmath>

namespace wpca {

namespace {

void check_simplex(const Vector& gamma) {
  if (gamma.size() < 1) {
    throw InvalidArgument("weights: gamma must have at least one entry");
  }
  for (Index k = 0; k < gamma.size(); ++k) {
    if (!std::isfinite(gamma[k]) || gamma[k] < 0.0) {
      throw InvalidArgument("weights: gamma entries must be finite and >= 0");
    }
  }
  if (std::abs(gamma.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("weights: gamma must sum to 1 (within 1e-12)");
  }
}

}  // namespace

ToeplitzWeights::ToeplitzWeights(Vector gamma) : gamma_(std::move(gamma)) {
  check_simplex(gamma_);
}

ToeplitzWeights ToeplitzWeights::identity() {
  Vector g(1);
  g[0] = 1.0;
  return ToeplitzWeights(std::move(g));
}

ToeplitzWeights ToeplitzWeights::single_lag(int k) {
  if (k < 0) throw InvalidArgument("weights: lag must be >= 0");
  Vector g = Vector::Zero(k + 1);
  g[k] = 1.0;
  return ToeplitzWeights(std::move(g));
}

ToeplitzWeights ToeplitzWeights::banded(int bands, bool include_diagonal) {
  if (bands < 1) throw InvalidArgument("weights: banded needs bands >= 1");
  Vector g = Vector::Zero(bands + 1);
  if (include_diagonal) {
    g.setConstant(1.0 / (bands + 1));
  } else {
    g.tail(bands).setConstant(1.0 / bands);
  }
  return ToeplitzWeights(std::move(g));
}

ToeplitzWeights ToeplitzWeights::normalized(Vector raw) {
  if (raw.size() < 1) {
    throw InvalidArgument("weights: gamma must have at least one entry");
  }
  for (Index k = 0; k < raw.size(); ++k) {
    if (!std::isfinite(raw[k]) || raw[k] < 0.0) {
      throw InvalidArgument("weights: gamma entries must be finite and >= 0");
    }
  }
  const double total = raw.sum();
  if (total <= 0.0) {
    throw InvalidArgument("weights: gamma must have positive total mass");
  }
  raw /= total;
  // Rounding in the division can leave the sum a few ulp away from 1; pin
  // the largest coordinate so the simplex check holds exactly.
  Index imax = 0;
  raw.maxCoeff(&imax);
  raw[imax] = 0.0;
  raw[imax] = 1.0 - raw.sum();
  return ToeplitzWeights(std::move(raw));
}

bool ToeplitzWeights::approx_equal(const ToeplitzWeights& other,
                                   double tol) const {
  if (gamma_.size() != other.gamma_.size()) return false;
  return (gamma_ - other.gamma_).cwiseAbs().maxCoeff() <= tol;
}

nlohmann::json ToeplitzWeights::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (Index k = 0; k < gamma_.size(); ++k) arr.push_back(gamma_[k]);
  return arr;
}

ToeplitzWeights ToeplitzWeights::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) {
    throw InvalidArgument("weights: JSON form must be a nonempty array");
  }
  Vector g(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) {
      throw InvalidArgument("weights: JSON array entries must be numbers");
    }
    g[static_cast<Index>(k)] = j[k].get<double>();
  }
  return ToeplitzWeights(std::move(g));
}

LagGrams compute_lag_grams(const Matrix& X, int max_lag) {
  const Index T = X.cols();
  if (max_lag < 0 || max_lag > T - 1) {
    throw InvalidArgument("weights: max lag must lie in [0, T-1]");
  }
  LagGrams lg;
  lg.T = T;
  lg.prods.resize(static_cast<std::size_t>(max_lag) + 1);

  // Lag 0: rank update writes one triangle, mirroring keeps the matrix
  // bitwise symmetric regardless of how the product kernel blocks.
  Matrix s0 = Matrix::Zero(X.rows(), X.rows());
  s0.selfadjointView<Eigen::Lower>().rankUpdate(X);
  s0.triangularView<Eigen::StrictlyUpper>() = s0.transpose();
  lg.prods[0] = std::move(s0);

  for (int k = 1; k <= max_lag; ++k) {
    // sum_t x_t x_{t+k}^T over the T-k admissible positions.
    lg.prods[static_cast<std::size_t>(k)].noalias() =
        X.leftCols(T - k) * X.rightCols(T - k).transpose();
  }
  return lg;
}

Matrix combine_lag_grams(const LagGrams& lg, const ToeplitzWeights& w) {
  if (w.max_lag() >= static_cast<int>(lg.prods.size())) {
    throw InvalidArgument("weights: gamma carries more lags than the cache");
  }
  Matrix S = w[0] * lg.prods[0];
  for (int k = 1; k <= w.max_lag(); ++k) {
    const Matrix& P = lg.prods[static_cast<std::size_t>(k)];
    // Coefficient-wise: S_ij gains w_k (P_ij + P_ji), which matches S_ji
    // exactly, so symmetry is preserved bit for bit.
    S += w[k] * (P + P.transpose());
  }
  return S;
}

Matrix weighted_gram(const Matrix& X, const ToeplitzWeights& w) {
  if (X.rows() < 1 || X.cols() < 1) {
    throw InvalidArgument("weights: panel matrix must be nonempty");
  }
  if (!X.allFinite()) {
    throw InvalidArgument("weights: panel matrix must be finite");
  }
  return combine_lag_grams(compute_lag_grams(X, w.max_lag()), w);
}

Matrix apply_toeplitz(const ToeplitzWeights& w, const Matrix& M) {
  const Index T = M.rows();
  const int K = w.max_lag();
  if (K > T - 1) {
    throw InvalidArgument("weights: max lag must be at most T-1");
  }
  Matrix out = w[0] * M;
  for (int k = 1; k <= K; ++k) {
    out.topRows(T - k) += w[k] * M.bottomRows(T - k);
    out.bottomRows(T - k) += w[k] * M.topRows(T - k);
  }
  return out;
}

nlohmann::json WeightGrid::to_json() const {
  nlohmann::json j;
  j["max_lag"] = max_lag;
  j["step"] = step;
  j["candidates"] = nlohmann::json::array();
  for (const auto& w : candidates) j["candidates"].push_back(w.to_json());
  return j;
}

WeightGrid WeightGrid::from_json(const nlohmann::json& j) {
  WeightGrid grid;
  grid.max_lag = j.at("max_lag").get<int>();
  grid.step = j.at("step").get<double>();
  for (const auto& c : j.at("candidates")) {
    grid.candidates.push_back(ToeplitzWeights::from_json(c));
  }
  if (grid.candidates.empty()) {
    throw InvalidArgument("grid: candidate set must be nonempty");
  }
  return grid;
}

namespace {

void enumerate_simplex(int slot, int slots, long remaining, long m,
                       std::vector<long>& units,
                       std::vector<ToeplitzWeights>& out) {
  if (slot == slots - 1) {
    units[static_cast<std::size_t>(slot)] = remaining;
    Vector g(slots);
    for (int i = 0; i < slots; ++i) {
      g[i] = static_cast<double>(units[static_cast<std::size_t>(i)]) /
             static_cast<double>(m);
    }
    out.emplace_back(std::move(g));
    return;
  }
  for (long n = 0; n <= remaining; ++n) {
    units[static_cast<std::size_t>(slot)] = n;
    enumerate_simplex(slot + 1, slots, remaining - n, m, units, out);
  }
}

}  // namespace

WeightGrid build_grid(int max_lag, double step) {
  if (max_lag < 0) throw InvalidArgument("grid: max lag must be >= 0");
  if (!(step > 0.0) || step > 1.0) {
    throw InvalidArgument("grid: step must lie in (0, 1]");
  }
  const double inv = 1.0 / step;
  const long m = std::lround(inv);
  if (m < 1 || std::abs(inv - static_cast<double>(m)) > 1e-9 * inv) {
    throw InvalidArgument("grid: 1/step must be an integer");
  }

  // Candidate count is C(m + K, K); refuse absurd requests up front.
  double count = 1.0;
  for (int i = 1; i <= max_lag; ++i) {
    count *= static_cast<double>(m + i) / static_cast<double>(i);
    if (count > 2e5) {
      throw InvalidArgument("grid: candidate set would exceed 200000 points");
    }
  }

  WeightGrid grid;
  grid.max_lag = max_lag;
  grid.step = step;
  std::vector<long> units(static_cast<std::size_t>(max_lag) + 1, 0);
  enumerate_simplex(0, max_lag + 1, m, m, units, grid.candidates);

  // Lattice enumeration cannot repeat a point, but the contract promises a
  // deduplicated set; adjacent comparison suffices on a sorted sequence.
  auto last = std::unique(grid.candidates.begin(), grid.candidates.end(),
                          [](const ToeplitzWeights& a, const ToeplitzWeights& b) {
                            return a.approx_equal(b);
                          });
  grid.candidates.erase(last, grid.candidates.end());
  return grid;
}

double mu_gamma(const ToeplitzWeights& w, const std::vector<Matrix>& autocovs,
                Index T, bool asymptotic) {
  const int K = w.max_lag();
  if (K == 0) return w[0];
  if (static_cast<int>(autocovs.size()) != K) {
    throw InvalidArgument("mu: need one autocovariance per carried lag");
  }
  const Index r = autocovs[0].rows();
  for (const auto& g : autocovs) {
    if (g.rows() != r || g.cols() != r) {
      throw InvalidArgument("mu: autocovariances must all be r x r");
    }
  }
  if (!asymptotic && T < K) {
    throw InvalidArgument("mu: horizon T must be at least the max lag");
  }

  Matrix A = w[0] * Matrix::Identity(r, r);
  for (int k = 1; k <= K; ++k) {
    const double atten =
        asymptotic ? 1.0
                   : 1.0 - static_cast<double>(k) / static_cast<double>(T);
    const Matrix& G = autocovs[static_cast<std::size_t>(k - 1)];
    A += w[k] * atten * (G + G.transpose());
  }
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues()(r - 1);
}

}  // namespace wpca
