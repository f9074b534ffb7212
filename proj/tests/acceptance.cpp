// Acceptance gate: numbered end-to-end checks over the whole toolkit, each
// printing exactly one line:
//
//   criterion N: PASS - detail
//   criterion N: FAIL - detail
//   criterion N: SKIP - detail   (external-data checks without their file)
//
// Run with no arguments for the full battery or `--criterion N` for one.
// Exit code 0 when every executed criterion passed or was skipped.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "wpca/adacv.hpp"
#include "wpca/alignment.hpp"
#include "wpca/common.hpp"
#include "wpca/dataio.hpp"
#include "wpca/estimators.hpp"
#include "wpca/simulate.hpp"
#include "wpca/weights.hpp"

using namespace wpca;

namespace {

namespace fs = std::filesystem;

// One frozen seed drives every stochastic criterion; the studies whiten it
// internally, so sharing it across cells is safe.
constexpr std::uint64_t kSeed = 424242;

fs::path g_exe_dir;  // directory of this binary, for locating siblings

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::fail;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << v;
  return ss.str();
}

std::string fmt_secs(std::chrono::steady_clock::time_point t0) {
  const double s = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return fmt(s, 1) + "s";
}

double elapsed_secs(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Means are keyed by (N, T, method, metric) in study outputs.
double study_mean(const StudyResult& res, Index N, Index T,
                  const std::string& method, const std::string& metric) {
  for (const auto& row : res.rows) {
    if (row.N == N && row.T == T && row.method == method &&
        row.metric == metric) {
      return row.mean;
    }
  }
  throw Error("acceptance: study row missing for " + method + "/" + metric);
}

DgpConfig make_cell(Index N, Index T, bool equicorr, std::uint64_t seed) {
  DgpConfig c;
  c.N = N;
  c.T = T;
  c.r = 3;
  c.factor_kind = FactorKind::var;
  c.a = 0.9;
  c.noise.kind = equicorr ? SigmaCKind::equicorr : SigmaCKind::diag_uniform;
  c.noise.lo = 1.0;
  c.noise.hi = 20.0;
  c.noise.rho_off = equicorr ? 0.6 : 0.0;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Dense reference implementations for criterion 3. These deliberately take
// the slow route: explicit T x T weight matrices, full eigensolves, full
// SVDs, and elementwise sums.

Matrix dense_toeplitz(const ToeplitzWeights& w, Index T) {
  Matrix Q = Matrix::Zero(T, T);
  for (Index i = 0; i < T; ++i) {
    for (Index j = 0; j < T; ++j) {
      const int k = static_cast<int>(i > j ? i - j : j - i);
      if (k <= w.max_lag()) Q(i, j) = w[k];
    }
  }
  return Q;
}

Matrix dense_polar(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// Top-r eigenvectors of a symmetric matrix ranked by |eigenvalue|, plus the
// absolute eigenvalues.
void dense_abs_topr(const Matrix& S, int r, Matrix* vecs, Vector* vals) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  std::vector<Index> order(S.rows());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
  });
  vecs->resize(S.rows(), r);
  vals->resize(r);
  for (int k = 0; k < r; ++k) {
    vecs->col(k) = es.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    (*vals)(k) = std::abs(es.eigenvalues()(order[static_cast<std::size_t>(k)]));
  }
}

struct DenseFit {
  Matrix U;
  Vector sigma;
  Matrix recon;  // U U^T X, the rank-r reconstruction
};

DenseFit dense_wpca(const Matrix& X, const ToeplitzWeights& w, int r) {
  const auto T = static_cast<double>(X.cols());
  const Matrix Q = dense_toeplitz(w, X.cols());
  Matrix S = X * Q * X.transpose();
  S = 0.5 * (S + S.transpose()).eval();
  Matrix W;
  Vector lam;
  dense_abs_topr(S, r, &W, &lam);
  const Matrix P = W * W.transpose() * X / std::sqrt(T);
  Eigen::JacobiSVD<Matrix> svd(P, Eigen::ComputeThinU | Eigen::ComputeThinV);
  DenseFit f;
  f.U = svd.matrixU().leftCols(r);
  f.sigma = svd.singularValues().head(r);
  f.recon = W * W.transpose() * X;
  return f;
}

double dense_proj_fro(const Matrix& U1, const Matrix& U2) {
  return (U1 * U1.transpose() - U2 * U2.transpose()).norm();
}

double dense_proj_op(const Matrix& U1, const Matrix& U2) {
  const Matrix D = U1 * U1.transpose() - U2 * U2.transpose();
  Eigen::JacobiSVD<Matrix> svd(D);
  return svd.singularValues()(0);
}

double dense_proj_2inf(const Matrix& U1, const Matrix& U2) {
  const Matrix D = U1 * U1.transpose() - U2 * U2.transpose();
  return D.rowwise().norm().maxCoeff();
}

Matrix dense_sigma_L(const GroundTruth& truth, const ToeplitzWeights& w,
                     const FactorFit& fit, Index i) {
  const auto T = static_cast<double>(truth.t());
  const Matrix Q = dense_toeplitz(w, truth.t());
  const Matrix M = truth.L * truth.F.transpose();
  Matrix G = M * Q * M.transpose();
  G = 0.5 * (G + G.transpose()).eval();
  Matrix W;
  Vector lam;
  dense_abs_topr(G, truth.r, &W, &lam);
  const Matrix o_bar = dense_polar(W.transpose() * truth.U);
  const Matrix r_v = dense_polar(fit.Vhat.transpose() * truth.V);
  const Matrix o_f = o_bar.transpose() * lam.cwiseInverse().asDiagonal() *
                     o_bar * truth.Sigma.asDiagonal() * r_v.transpose();
  const Matrix qv = Q * truth.V;
  Matrix mid = qv.transpose() * truth.SigmaT * qv;
  mid = 0.5 * (mid + mid.transpose()).eval();
  const Matrix inner =
      truth.Sigma.asDiagonal() * mid * truth.Sigma.asDiagonal();
  Matrix out = T * truth.SigmaC(i, i) * o_f.transpose() * inner * o_f;
  return 0.5 * (out + out.transpose());
}

Matrix dense_sigma_F(const GroundTruth& truth, const FactorFit& fit,
                     Index t_idx) {
  const Matrix r_v = dense_polar(fit.Vhat.transpose() * truth.V);
  Matrix usu = truth.U.transpose() * truth.SigmaC * truth.U;
  usu = 0.5 * (usu + usu.transpose()).eval();
  const Vector inv_sigma = truth.Sigma.cwiseInverse();
  Matrix out = truth.SigmaT(t_idx, t_idx) * r_v * inv_sigma.asDiagonal() *
               usu * inv_sigma.asDiagonal() * r_v.transpose();
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Criteria

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240101);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const Index N = 5 + static_cast<Index>(rng.uniform() * 46.0);
    const Index T = 5 + static_cast<Index>(rng.uniform() * 46.0);
    const int r = 1 + static_cast<int>(rng.uniform() * 3.0);
    const Panel panel(testutil::random_matrix(N, T, rng));
    const FactorFit a = wpca::wpca(panel, ToeplitzWeights::identity(), r);
    const FactorFit b = pca(panel, r);
    // The explicit projector difference, not the r x r trace shortcut: the
    // shortcut's sqrt conditioning floors out near 1e-7 for coincident
    // subspaces, far above the tolerance probed here.
    worst = std::max(worst, dense_proj_fro(a.Uhat, b.Uhat));
  }
  Outcome out;
  const double secs = elapsed_secs(t0);
  out.status = (worst <= 1e-10 && secs < 5.0) ? Status::pass : Status::fail;
  out.detail = "identity-weight wpca vs pca over 50 panels: max projector "
               "distance " +
               fmt(worst, 14) + " (tol 1e-10), " + fmt_secs(t0);
  return out;
}

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const Index N = 40, T = 90;
  const int r = 3;
  Rng rng(20240102);
  const Matrix L = 3.0 * testutil::random_matrix(N, r, rng);
  const Matrix F = testutil::ar_factors(T, r, 0.9, rng);
  const Panel panel(L * F.transpose());
  const GroundTruth truth =
      make_ground_truth(L, F, Matrix::Identity(N, N), Matrix::Identity(T, T));

  double worst_u = 0.0, worst_lf = 0.0;
  const WeightGrid grid = build_grid(1, 1.0 / 9.0);
  for (const auto& w : grid.candidates) {
    const FactorFit fit = wpca::wpca(panel, w, r);
    worst_u = std::max(worst_u, dense_proj_fro(fit.Uhat, truth.U));
    const ErrorRecord rec = estimation_errors(fit, truth, rotations(fit, truth));
    worst_lf = std::max({worst_lf, rec.loading_op, rec.loading_2inf,
                         rec.factor_op, rec.factor_2inf});
  }
  Outcome out;
  const double secs = elapsed_secs(t0);
  out.status = (worst_u <= 1e-8 && worst_lf <= 1e-7 && secs < 5.0)
                   ? Status::pass
                   : Status::fail;
  out.detail = "noiseless recovery over " +
               std::to_string(grid.candidates.size()) +
               " grid candidates: max subspace error " + fmt(worst_u, 12) +
               " (tol 1e-8), max aligned loading/factor error " +
               fmt(worst_lf, 12) + " (tol 1e-7), " + fmt_secs(t0);
  return out;
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240103);
  const WeightGrid grid = build_grid(2, 0.5);
  double worst = 0.0;
  std::string worst_what = "none";
  auto record = [&](double err, const char* what) {
    if (err > worst) {
      worst = err;
      worst_what = what;
    }
  };

  for (int rep = 0; rep < 100; ++rep) {
    const Index N = 4 + static_cast<Index>(rng.uniform() * 5.0);
    const Index T = 4 + static_cast<Index>(rng.uniform() * 5.0);
    const int r = 1 + static_cast<int>(rng.uniform() * 2.0);
    const auto& w = grid.candidates[static_cast<std::size_t>(
        rng.uniform() * static_cast<double>(grid.candidates.size()))];

    // wpca against the dense pipeline.
    const Matrix X = testutil::random_matrix(N, T, rng);
    const Panel panel(X);
    const FactorFit fit = wpca::wpca(panel, w, r);
    const DenseFit ref = dense_wpca(X, w, r);
    record(dense_proj_fro(fit.Uhat, ref.U), "wpca subspace");
    record((fit.sigma - ref.sigma).cwiseAbs().maxCoeff(), "wpca sigma");
    record((fit.Lhat * fit.Fhat.transpose() - ref.recon).norm(),
           "wpca reconstruction");

    // masked_fit and cv_error against the same dense route on the rescaled
    // retained panel and an explicit held-out sum.
    const MaskPattern mask =
        draw_mask(N, T, 0.75, kSeed + static_cast<std::uint64_t>(rep));
    bool empty = false;
    const FactorFit mfit = masked_fit(panel, mask, w, r);
    const double cv = cv_error(panel, mask, mfit, &empty);
    const Matrix Xm = mask.omega.cwiseProduct(X) / mask.pstar;
    const DenseFit mref = dense_wpca(Xm, w, r);
    record(dense_proj_fro(mfit.Uhat, mref.U), "masked_fit subspace");
    double held = 0.0;
    bool any = false;
    const Matrix recon = mfit.Lhat * mfit.Fhat.transpose();
    for (Index j = 0; j < T; ++j) {
      for (Index i = 0; i < N; ++i) {
        if (mask.omega(i, j) == 0.0) {
          const double d = X(i, j) - recon(i, j);
          held += d * d;
          any = true;
        }
      }
    }
    held = any ? held / (static_cast<double>(N) * static_cast<double>(T))
               : 0.0;
    if (any == empty) record(1.0, "cv_error empty-holdout flag");
    record(std::abs(cv - held), "cv_error");

    // sign_orthogonal against the full-SVD polar factor.
    const Matrix A =
        testutil::random_matrix(r, r, rng) + 3.0 * Matrix::Identity(r, r);
    record((sign_orthogonal(A) - dense_polar(A)).norm(), "sign_orthogonal");

    // projector_distance in all three norms against explicit projectors.
    const Matrix U1 = testutil::random_orthonormal(N, r, rng);
    const Matrix U2 = testutil::random_orthonormal(N, r, rng);
    record(std::abs(projector_distance(U1, U2, ProjNorm::fro) -
                    dense_proj_fro(U1, U2)),
           "projector fro");
    record(std::abs(projector_distance(U1, U2, ProjNorm::op) -
                    dense_proj_op(U1, U2)),
           "projector op");
    record(std::abs(projector_distance(U1, U2, ProjNorm::two_to_inf) -
                    dense_proj_2inf(U1, U2)),
           "projector two-to-inf");

    // Oracle residual covariances against literal dense formulas.
    const Matrix Lt = 2.0 * testutil::random_matrix(N, r, rng) +
                      4.0 * testutil::random_orthonormal(N, r, rng);
    const Matrix Ft = testutil::ar_factors(T, r, 0.6, rng);
    Vector diag_c(N);
    for (Index i = 0; i < N; ++i) diag_c(i) = 0.5 + 1.5 * rng.uniform();
    const GroundTruth truth =
        make_ground_truth(Lt, Ft, Matrix(diag_c.asDiagonal()),
                          Matrix::Identity(T, T));
    const Matrix Xt =
        Lt * Ft.transpose() + 0.1 * testutil::random_matrix(N, T, rng);
    const FactorFit tfit = wpca::wpca(Panel(Xt), w, r);
    const Index row = static_cast<Index>(rng.uniform() * N);
    const Index col = static_cast<Index>(rng.uniform() * T);
    try {
      const Matrix sl = oracle_sigma_L(truth, w, tfit, row);
      const Matrix sl_ref = dense_sigma_L(truth, w, tfit, row);
      record((sl - sl_ref).norm() / std::max(1.0, sl_ref.norm()),
             "oracle_sigma_L");
    } catch (const NumericError&) {
      // Degenerate weighted second moments are a legitimate refusal; the
      // dense formula would divide by the same near-zero eigenvalue.
    }
    const Matrix sf = oracle_sigma_F(truth, tfit, col);
    const Matrix sf_ref = dense_sigma_F(truth, tfit, col);
    record((sf - sf_ref).norm() / std::max(1.0, sf_ref.norm()),
           "oracle_sigma_F");
  }

  Outcome out;
  const double secs = elapsed_secs(t0);
  out.status = (worst <= 1e-9 && secs < 30.0) ? Status::pass : Status::fail;
  out.detail = "100 small instances vs dense reimplementations: worst "
               "discrepancy " +
               fmt(worst, 14) + " (" + worst_what + ", tol 1e-9), " +
               fmt_secs(t0);
  return out;
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  EstimationStudyConfig cfg;
  cfg.cells = {make_cell(100, 250, true, kSeed),
               make_cell(100, 1000, true, kSeed),
               make_cell(200, 500, true, kSeed)};
  cfg.methods = {"adawpca", "pca", "heteropca"};
  cfg.replicates = 100;
  cfg.grid = build_grid(1, 1.0 / 9.0);
  cfg.k_cv = 10;
  cfg.pstar = 0.9;
  cfg.threads = 0;
  const StudyResult res = run_estimation_study(cfg);

  const double bench[3] = {0.518, 0.305, 0.385};
  bool ok = true;
  std::ostringstream detail;
  detail << "equicorrelated design, 100 reps:";
  for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
    const Index N = cfg.cells[c].N;
    const Index T = cfg.cells[c].T;
    const double ada = study_mean(res, N, T, "adawpca", "u_proj_fro");
    const double pc = study_mean(res, N, T, "pca", "u_proj_fro");
    const double het = study_mean(res, N, T, "heteropca", "u_proj_fro");
    const bool order = ada < pc && ada < het;
    const bool band = std::abs(ada - bench[c]) <= 0.08;
    ok = ok && order && band;
    detail << " (" << N << "," << T << ") ada=" << fmt(ada) << " pca="
           << fmt(pc) << " hetero=" << fmt(het) << " band|"
           << fmt(std::abs(ada - bench[c]), 3) << "|<=0.08 "
           << (order && band ? "ok" : "VIOLATED") << ";";
  }
  detail << " note: the adawpca-vs-heteropca gap at (200,500) sits inside "
            "Monte-Carlo noise at 100 reps and its sign is seed-dependent;";
  const double secs = elapsed_secs(t0);
  if (secs >= 900.0) ok = false;
  detail << " " << fmt_secs(t0) << " (cap 900s)";

  Outcome out;
  out.status = ok ? Status::pass : Status::fail;
  out.detail = detail.str();
  return out;
}

Outcome criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  EstimationStudyConfig cfg;
  cfg.cells = {make_cell(100, 1000, false, kSeed)};
  cfg.methods = {"adawpca", "pca", "heteropca"};
  cfg.replicates = 100;
  cfg.grid = build_grid(1, 1.0 / 9.0);
  cfg.k_cv = 10;
  cfg.pstar = 0.9;
  cfg.threads = 0;
  const StudyResult res = run_estimation_study(cfg);

  const double ada = study_mean(res, 100, 1000, "adawpca", "u_proj_fro");
  const double pc = study_mean(res, 100, 1000, "pca", "u_proj_fro");
  const double het = study_mean(res, 100, 1000, "heteropca", "u_proj_fro");
  const bool smallest = het < ada && het < pc;
  const bool close = std::abs(ada - pc) <= 0.03;
  const double secs = elapsed_secs(t0);

  Outcome out;
  out.status =
      (smallest && close && secs < 900.0) ? Status::pass : Status::fail;
  out.detail = "diagonal design (100,1000), 100 reps: ada=" + fmt(ada) +
               " pca=" + fmt(pc) + " hetero=" + fmt(het) +
               "; heteropca smallest " + (smallest ? "ok" : "VIOLATED") +
               ", |ada-pca|=" + fmt(std::abs(ada - pc), 3) + "<=0.03 " +
               (close ? "ok" : "VIOLATED") + ", " + fmt_secs(t0);
  return out;
}

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  CvStudyConfig cfg;
  cfg.cells = {make_cell(100, 250, true, kSeed),
               make_cell(100, 250, false, kSeed)};
  cfg.grid = build_grid(1, 1.0 / 9.0);
  cfg.replicates = 100;
  cfg.k_cv = 10;
  cfg.pstar = 0.9;
  cfg.threads = 0;
  const StudyResult res = run_cv_study(cfg);

  // Both cells share (N, T); rows are emitted in cell order, so split by
  // position rather than by key.
  std::vector<double> top3, nb3;
  for (const auto& row : res.rows) {
    if (row.metric == "top3") top3.push_back(row.mean);
    if (row.metric == "non_bottom3") nb3.push_back(row.mean);
  }
  bool ok = top3.size() == 2 && nb3.size() == 2;
  std::ostringstream detail;
  detail << "weight-selection quality at (100,250), 100 reps:";
  const char* names[2] = {"equicorr", "diagonal"};
  for (std::size_t c = 0; c < top3.size() && c < 2; ++c) {
    const bool cell_ok = top3[c] >= 0.6 && nb3[c] >= 0.9;
    ok = ok && cell_ok;
    detail << " " << names[c] << " top3=" << fmt(top3[c], 2) << ">=0.60, "
           << "non-bottom3=" << fmt(nb3[c], 2) << ">=0.90 "
           << (cell_ok ? "ok" : "VIOLATED") << ";";
  }
  const double secs = elapsed_secs(t0);
  if (secs >= 1200.0) ok = false;
  detail << " " << fmt_secs(t0) << " (cap 1200s)";

  Outcome out;
  out.status = ok ? Status::pass : Status::fail;
  out.detail = detail.str();
  return out;
}

// Shared by criteria 7 and 8: residual sample for one method and one panel
// shape under the equicorrelated design.
InferenceSample inference_sample(Index N, Index T, const std::string& method,
                                 int reps) {
  InferenceConfig cfg;
  cfg.dgp = make_cell(N, T, true, kSeed);
  cfg.weights = ToeplitzWeights::single_lag(1);
  cfg.method = method;
  cfg.replicates = reps;
  cfg.threads = 0;
  InferenceTarget target;
  target.kind = InferenceTarget::Kind::loading;
  target.index = N / 2;
  return run_inference_study(cfg, target);
}

bool bands_pass(const InferenceSample& s) {
  return std::abs(s.mean) <= 0.15 && s.variance >= 0.8 && s.variance <= 1.2 &&
         s.ks_statistic <= 0.08;
}

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const InferenceSample s = inference_sample(200, 200, "wpca", 500);
  const bool ok = bands_pass(s);
  const double secs = elapsed_secs(t0);

  Outcome out;
  out.status = (ok && secs < 600.0) ? Status::pass : Status::fail;
  out.detail = "normalized loading residuals, (200,200), lag-1 weights, 500 "
               "reps: mean=" +
               fmt(s.mean, 3) + " (|.|<=0.15), var=" + fmt(s.variance, 3) +
               " (in [0.8,1.2]), KS=" + fmt(s.ks_statistic, 3) +
               " (<=0.08), excluded=" + std::to_string(s.excluded) + ", " +
               fmt_secs(t0);
  return out;
}

Outcome criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  const InferenceSample sw = inference_sample(100, 800, "wpca", 500);
  const InferenceSample sp = inference_sample(100, 800, "pca", 500);
  const bool mean_gap = std::abs(sp.mean) > std::abs(sw.mean);
  const bool w_ok = bands_pass(sw);
  const bool p_fails = !bands_pass(sp);
  const bool ok = mean_gap && w_ok && p_fails;
  const double secs = elapsed_secs(t0);

  Outcome out;
  out.status = (ok && secs < 900.0) ? Status::pass : Status::fail;
  out.detail = "weighting bias demo, (100,800), 500 reps: |pca mean|=" +
               fmt(std::abs(sp.mean), 3) + " > |wpca mean|=" +
               fmt(std::abs(sw.mean), 3) + " " +
               (mean_gap ? "ok" : "VIOLATED") + "; wpca bands " +
               (w_ok ? "pass" : "FAIL") + " (mean=" + fmt(sw.mean, 3) +
               ", var=" + fmt(sw.variance, 3) + ", KS=" +
               fmt(sw.ks_statistic, 3) + "); pca fails >=1 band " +
               (p_fails ? "ok" : "VIOLATED") + " (mean=" + fmt(sp.mean, 3) +
               ", var=" + fmt(sp.variance, 3) + ", KS=" +
               fmt(sp.ks_statistic, 3) + "); " + fmt_secs(t0);
  return out;
}

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> suites = {
      "test_weights", "test_estimators", "test_alignment", "test_adacv",
      "test_simulate", "test_dataio",    "test_cli"};
  bool ok = true;
  std::ostringstream detail;
  detail << "module property suites:";
  for (const auto& name : suites) {
    const fs::path bin = g_exe_dir / name;
    if (!fs::exists(bin)) {
      ok = false;
      detail << " " << name << "=MISSING";
      continue;
    }
    const std::string cmd = "'" + bin.string() + "' > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    const bool passed = rc != -1 && WIFEXITED(rc) && WEXITSTATUS(rc) == 0;
    ok = ok && passed;
    detail << " " << name << "=" << (passed ? "pass" : "FAIL");
  }
  detail << ", " << fmt_secs(t0);
  Outcome out;
  out.status = ok ? Status::pass : Status::fail;
  out.detail = detail.str();
  return out;
}

Outcome criterion10() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<fs::path> candidates;
  if (const char* env = std::getenv("WPCA_FRED_MD")) {
    if (*env != '\0') candidates.emplace_back(env);
  }
  candidates.emplace_back("data/fred_md.csv");
  candidates.emplace_back("../data/fred_md.csv");
  candidates.emplace_back("../../data/fred_md.csv");
  candidates.push_back(g_exe_dir / "../../data/fred_md.csv");

  fs::path found;
  for (const auto& p : candidates) {
    if (fs::exists(p)) {
      found = p;
      break;
    }
  }
  Outcome out;
  if (found.empty()) {
    out.status = Status::skip;
    out.detail = "macro-panel reproduction needs an external data file; none "
                 "found (set WPCA_FRED_MD or place data/fred_md.csv)";
    return out;
  }

  ReadOptions opts;
  opts.skip_row_labels = {"Transform:"};
  const PanelSource src = read_panel_csv(found, PanelLayout::time_rows, opts);
  const Panel panel = preprocess_panel(src, 0.05);

  ReconstructionConfig cfg;
  cfg.qtr = 0.7;
  cfg.r = 1;
  cfg.replicates = 100;
  cfg.seed = kSeed;
  cfg.grid = build_grid(1, 1.0 / 9.0);
  cfg.k_cv = 10;
  cfg.pstar = 0.9;
  cfg.threads = 0;

  cfg.method = "adawpca";
  const ReconstructionResult ada = reconstruction_eval(panel, cfg);
  cfg.method = "pca";
  const ReconstructionResult pc = reconstruction_eval(panel, cfg);
  cfg.method = "heteropca";
  const ReconstructionResult het = reconstruction_eval(panel, cfg);

  const bool band = std::abs(ada.mean_error - 0.221) <= 0.03;
  const bool below = ada.mean_error < pc.mean_error &&
                     ada.mean_error < het.mean_error;
  out.status = (band && below) ? Status::pass : Status::fail;
  out.detail = "macro panel " + found.string() + " balanced to N=" +
               std::to_string(panel.n()) + ", T=" + std::to_string(panel.t()) +
               "; held-out error ada=" + fmt(ada.mean_error, 3) +
               " (target 0.221 +/- 0.03) pca=" + fmt(pc.mean_error, 3) +
               " hetero=" + fmt(het.mean_error, 3) + "; " +
               (band && below ? "ok" : "VIOLATED") + ", " + fmt_secs(t0);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  g_exe_dir = fs::path(argv[0]).parent_path();
  if (g_exe_dir.empty()) g_exe_dir = ".";

  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 1;
    }
  }
  if (only < 0 || only > 10) {
    std::cerr << "acceptance: criterion must lie in 1..10\n";
    return 1;
  }

  Outcome (*runners[10])() = {criterion1, criterion2, criterion3, criterion4,
                              criterion5, criterion6, criterion7, criterion8,
                              criterion9, criterion10};

  int failed = 0, passed = 0, skipped = 0;
  for (int k = 1; k <= 10; ++k) {
    if (only != 0 && k != only) continue;
    Outcome out;
    try {
      out = runners[k - 1]();
    } catch (const std::exception& e) {
      out.status = Status::fail;
      out.detail = std::string("unhandled error: ") + e.what();
    }
    const char* tag = out.status == Status::pass   ? "PASS"
                      : out.status == Status::skip ? "SKIP"
                                                   : "FAIL";
    std::cout << "criterion " << k << ": " << tag << " - " << out.detail
              << "\n";
    std::cout.flush();
    if (out.status == Status::fail) ++failed;
    if (out.status == Status::pass) ++passed;
    if (out.status == Status::skip) ++skipped;
  }
  if (only == 0) {
    std::cout << "acceptance: " << passed << " passed, " << failed
              << " failed, " << skipped << " skipped\n";
  }
  return failed == 0 ? 0 : 1;
}
