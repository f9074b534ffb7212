#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "oracles.hpp"
#include "wpca/weights.hpp"

using namespace wpca;

namespace {

Matrix random_matrix(Index n, Index t, Rng& rng) {
  Matrix X(n, t);
  for (Index j = 0; j < t; ++j)
    for (Index i = 0; i < n; ++i) X(i, j) = rng.normal();
  return X;
}

}  // namespace

TEST_CASE("construction keeps the simplex contract") {
  Vector g(2);
  g << 0.25, 0.75;
  const ToeplitzWeights w(g);
  CHECK(w.max_lag() == 1);
  CHECK(w[0] == 0.25);
  CHECK(w[1] == 0.75);

  Vector neg(2);
  neg << -0.1, 1.1;
  CHECK_THROWS_AS(ToeplitzWeights{neg}, InvalidArgument);

  Vector off(2);
  off << 0.5, 0.6;
  CHECK_THROWS_AS(ToeplitzWeights{off}, InvalidArgument);

  CHECK_THROWS_AS(ToeplitzWeights{Vector()}, InvalidArgument);

  Vector nan(1);
  nan << std::nan("");
  CHECK_THROWS_AS(ToeplitzWeights{nan}, InvalidArgument);
}

TEST_CASE("named constructors") {
  const auto id = ToeplitzWeights::identity();
  CHECK(id.max_lag() == 0);
  CHECK(id[0] == 1.0);

  const auto lag1 = ToeplitzWeights::single_lag(1);
  CHECK(lag1.max_lag() == 1);
  CHECK(lag1[0] == 0.0);
  CHECK(lag1[1] == 1.0);
  CHECK_THROWS_AS(ToeplitzWeights::single_lag(-1), InvalidArgument);

  // Band without the diagonal: equal weight on lags 1..B.
  const auto band2 = ToeplitzWeights::banded(2);
  CHECK(band2.max_lag() == 2);
  CHECK(band2[0] == 0.0);
  CHECK(band2[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(band2[2] == doctest::Approx(0.5).epsilon(1e-15));

  // Band including the diagonal: equal weight on lags 0..B.
  const auto band1d = ToeplitzWeights::banded(1, true);
  CHECK(band1d[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(band1d[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(ToeplitzWeights::banded(0), InvalidArgument);
}

TEST_CASE("normalized rescales onto the simplex exactly") {
  Vector raw(3);
  raw << 2.0, 2.0, 4.0;
  const auto w = ToeplitzWeights::normalized(raw);
  CHECK(w.gamma().sum() == 1.0);
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(0.5).epsilon(1e-15));

  Vector zero = Vector::Zero(2);
  CHECK_THROWS_AS(ToeplitzWeights::normalized(zero), InvalidArgument);

  // An awkward total still lands on a valid simplex vector.
  Vector odd(3);
  odd << 0.1, 0.3, 0.3;
  CHECK_NOTHROW(ToeplitzWeights::normalized(odd));
}

TEST_CASE("weighted gram on a hand-computed scalar case") {
  // Single unit, x = (1, 2, 3), gamma = (1/2, 1/2):
  // x' Q x = 0.5 * (1+4+9) + 0.5 * 2 * (1*2 + 2*3) = 7 + 8 = 15.
  Matrix X(1, 3);
  X << 1.0, 2.0, 3.0;
  Vector g(2);
  g << 0.5, 0.5;
  const Matrix S = weighted_gram(X, ToeplitzWeights(g));
  REQUIRE(S.rows() == 1);
  CHECK(S(0, 0) == doctest::Approx(15.0).epsilon(1e-14));
}

TEST_CASE("weighted gram equals the dense Toeplitz product") {
  Rng rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 2 + static_cast<Index>(rng.uniform() * 5);
    const Index t = 4 + static_cast<Index>(rng.uniform() * 8);
    const int K = static_cast<int>(rng.uniform() * std::min<Index>(t - 1, 4));
    Vector raw(K + 1);
    for (int k = 0; k <= K; ++k) raw[k] = rng.uniform() + 0.01;
    const auto w = ToeplitzWeights::normalized(raw);
    const Matrix X = random_matrix(n, t, rng);

    const Matrix S = weighted_gram(X, w);
    const Matrix dense = X * oracle::dense_toeplitz(w, t) * X.transpose();
    CHECK((S - dense).cwiseAbs().maxCoeff() <=
          1e-12 * std::max(1.0, dense.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("weighted gram is bitwise symmetric") {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 3 + static_cast<Index>(rng.uniform() * 6);
    const Index t = 6 + static_cast<Index>(rng.uniform() * 10);
    const int K = 1 + static_cast<int>(rng.uniform() * 3);
    Vector raw(K + 1);
    for (int k = 0; k <= K; ++k) raw[k] = rng.uniform() + 0.01;
    const Matrix S =
        weighted_gram(random_matrix(n, t, rng), ToeplitzWeights::normalized(raw));
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        // Exact equality, not approximate: symmetry must hold bit for bit.
        CHECK(std::memcmp(&S(i, j), &S(j, i), sizeof(double)) == 0);
      }
    }
  }
}

TEST_CASE("identity weighting reduces to the plain gram") {
  Rng rng(11);
  const Matrix X = random_matrix(5, 9, rng);
  const Matrix S = weighted_gram(X, ToeplitzWeights::identity());
  const Matrix G = X * X.transpose();
  CHECK((S - G).cwiseAbs().maxCoeff() <=
        1e-13 * std::max(1.0, G.cwiseAbs().maxCoeff()));
}

TEST_CASE("pure lag-1 weighting matches the direct cross-lag sum") {
  Rng rng(13);
  const Index n = 4, t = 12;
  const Matrix X = random_matrix(n, t, rng);
  const Matrix S = weighted_gram(X, ToeplitzWeights::single_lag(1));
  Matrix direct = Matrix::Zero(n, n);
  for (Index s = 0; s + 1 < t; ++s) {
    direct += X.col(s) * X.col(s + 1).transpose() +
              X.col(s + 1) * X.col(s).transpose();
  }
  CHECK((S - direct).cwiseAbs().maxCoeff() <=
        1e-12 * std::max(1.0, direct.cwiseAbs().maxCoeff()));
}

TEST_CASE("gram validates lag reach and finiteness") {
  Rng rng(17);
  const Matrix X = random_matrix(3, 4, rng);
  CHECK_THROWS_AS(weighted_gram(X, ToeplitzWeights::single_lag(4)),
                  InvalidArgument);
  CHECK_NOTHROW(weighted_gram(X, ToeplitzWeights::single_lag(3)));

  Matrix bad = X;
  bad(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(weighted_gram(bad, ToeplitzWeights::identity()),
                  InvalidArgument);
}

TEST_CASE("lag cache combination reproduces weighted_gram bit for bit") {
  Rng rng(19);
  const Matrix X = random_matrix(6, 15, rng);
  const LagGrams cache = compute_lag_grams(X, 3);
  Vector raw(3);
  raw << 0.2, 0.5, 0.3;
  const auto w = ToeplitzWeights(raw);
  const Matrix via_cache = combine_lag_grams(cache, w);
  const Matrix direct = weighted_gram(X, w);
  REQUIRE(via_cache.rows() == direct.rows());
  for (Index i = 0; i < direct.rows(); ++i)
    for (Index j = 0; j < direct.cols(); ++j)
      CHECK(std::memcmp(&via_cache(i, j), &direct(i, j), sizeof(double)) == 0);

  CHECK_THROWS_AS(combine_lag_grams(cache, ToeplitzWeights::single_lag(4)),
                  InvalidArgument);
}

TEST_CASE("apply_toeplitz matches the dense product") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const Index t = 5 + static_cast<Index>(rng.uniform() * 10);
    const Index m = 1 + static_cast<Index>(rng.uniform() * 4);
    const int K = static_cast<int>(rng.uniform() * 4);
    Vector raw(K + 1);
    for (int k = 0; k <= K; ++k) raw[k] = rng.uniform() + 0.01;
    const auto w = ToeplitzWeights::normalized(raw);
    const Matrix M = random_matrix(t, m, rng);
    const Matrix got = apply_toeplitz(w, M);
    const Matrix expect = oracle::dense_toeplitz(w, t) * M;
    CHECK((got - expect).cwiseAbs().maxCoeff() <=
          1e-13 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("grid over one lag with step 1/9") {
  const WeightGrid grid = build_grid(1, 1.0 / 9.0);
  REQUIRE(grid.size() == 10);
  CHECK(grid.max_lag == 1);
  CHECK(grid.step == doctest::Approx(1.0 / 9.0));
  // Ascending lexicographic on gamma_0: pure-lag first, identity last.
  CHECK(grid.candidates.front()[0] == 0.0);
  CHECK(grid.candidates.front()[1] == 1.0);
  CHECK(grid.candidates.back()[0] == 1.0);
  CHECK(grid.candidates.back()[1] == 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(grid.candidates[i][0] ==
          doctest::Approx(static_cast<double>(i) / 9.0).epsilon(1e-15));
    CHECK(grid.candidates[i].gamma().sum() == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("grid over two lags with step 1/2 enumerates the six lattice points") {
  const WeightGrid grid = build_grid(2, 0.5);
  REQUIRE(grid.size() == 6);
  const double expect[6][3] = {{0.0, 0.0, 1.0}, {0.0, 0.5, 0.5},
                               {0.0, 1.0, 0.0}, {0.5, 0.0, 0.5},
                               {0.5, 0.5, 0.0}, {1.0, 0.0, 0.0}};
  for (std::size_t i = 0; i < 6; ++i) {
    for (int k = 0; k < 3; ++k) {
      CHECK(grid.candidates[i][k] ==
            doctest::Approx(expect[i][k]).epsilon(1e-15));
    }
  }
}

TEST_CASE("grid always contains the identity point and dedupes") {
  for (int K : {0, 1, 2, 3}) {
    const WeightGrid grid = build_grid(K, 0.5);
    bool found = false;
    for (const auto& w : grid.candidates) {
      if (w[0] == 1.0) found = true;
    }
    CHECK(found);
    // No two candidates may coincide.
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = i + 1; j < grid.size(); ++j)
        CHECK_FALSE(grid.candidates[i].approx_equal(grid.candidates[j]));
  }
  const WeightGrid singleton = build_grid(0, 1.0);
  REQUIRE(singleton.size() == 1);
  CHECK(singleton.candidates[0][0] == 1.0);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(build_grid(-1, 0.5), InvalidArgument);
  CHECK_THROWS_AS(build_grid(1, 0.0), InvalidArgument);
  CHECK_THROWS_AS(build_grid(1, 1.5), InvalidArgument);
  CHECK_THROWS_AS(build_grid(1, 0.3), InvalidArgument);  // 1/step not integral
  CHECK_THROWS_AS(build_grid(4, 0.01), InvalidArgument);  // would explode
}

TEST_CASE("signal strength functional") {
  // Identity weights: the functional is 1 regardless of autocovariances.
  CHECK(mu_gamma(ToeplitzWeights::identity(), {}, 50) == 1.0);

  // Pure lag 1 with Gamma_1 = 0.9 I and T = 100:
  // (1 - 1/100) * (0.9 + 0.9) = 1.782 on the diagonal.
  const Index r = 3;
  std::vector<Matrix> acov{0.9 * Matrix::Identity(r, r)};
  CHECK(mu_gamma(ToeplitzWeights::single_lag(1), acov, 100) ==
        doctest::Approx(1.782).epsilon(1e-12));

  // Negative autocovariance in the horizon limit: |-1| = 1.
  std::vector<Matrix> neg{-0.5 * Matrix::Identity(r, r)};
  CHECK(mu_gamma(ToeplitzWeights::single_lag(1), neg, 0, true) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Smallest singular value is what counts for anisotropic inputs.
  Matrix aniso = Matrix::Zero(2, 2);
  aniso(0, 0) = 0.9;
  aniso(1, 1) = 0.1;
  std::vector<Matrix> mixed{aniso};
  CHECK(mu_gamma(ToeplitzWeights::single_lag(1), mixed, 0, true) ==
        doctest::Approx(0.2).epsilon(1e-12));

  CHECK_THROWS_AS(mu_gamma(ToeplitzWeights::single_lag(2), mixed, 100),
                  InvalidArgument);
  CHECK_THROWS_AS(mu_gamma(ToeplitzWeights::single_lag(1), mixed, 0),
                  InvalidArgument);
}

TEST_CASE("weights and grid survive a JSON round trip") {
  Vector g(3);
  g << 0.1, 0.6, 0.3;
  const ToeplitzWeights w(g);
  const auto back = ToeplitzWeights::from_json(w.to_json());
  CHECK(back.approx_equal(w, 0.0));

  const WeightGrid grid = build_grid(2, 0.5);
  const WeightGrid grid_back = WeightGrid::from_json(grid.to_json());
  REQUIRE(grid_back.size() == grid.size());
  CHECK(grid_back.max_lag == grid.max_lag);
  CHECK(grid_back.step == grid.step);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(grid_back.candidates[i].approx_equal(grid.candidates[i], 0.0));

  CHECK_THROWS_AS(ToeplitzWeights::from_json(nlohmann::json::object()),
                  InvalidArgument);
}
