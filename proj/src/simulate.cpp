#include "wpca/simulate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "csv_util.hpp"
#include "wpca/parallel.hpp"

namespace wpca {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix gaussian_matrix(Index n, Index t, Rng& rng) {
  Matrix out(n, t);
  for (Index j = 0; j < t; ++j) {
    for (Index i = 0; i < n; ++i) out(i, j) = rng.normal();
  }
  return out;
}

// QR orthonormalization with the R-diagonal signs pinned positive, so the
// result is a well-defined function of the Gaussian draw.
Matrix orthonormal_draw(Index n, int r, Rng& rng) {
  const Matrix g = gaussian_matrix(n, r, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  const Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (int j = 0; j < r; ++j) {
    if (rr(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix draw_var_coefficient(int r, double a, Rng& rng) {
  const Matrix o1 = orthonormal_draw(r, r, rng);
  const Matrix o2 = orthonormal_draw(r, r, rng);
  return o1 * (a * o2.transpose());
}

Matrix draw_var_factors(Index T, int r, double a, Rng& rng) {
  const Matrix A = draw_var_coefficient(r, a, rng);
  const double noise_sd = std::sqrt(1.0 - a * a);
  Matrix f(T, r);
  Vector cur(r);
  for (int k = 0; k < r; ++k) cur(k) = rng.normal();
  f.row(0) = cur.transpose();
  Vector eps(r);
  for (Index t = 1; t < T; ++t) {
    for (int k = 0; k < r; ++k) eps(k) = noise_sd * rng.normal();
    cur = A * cur + eps;
    f.row(t) = cur.transpose();
  }
  return f;
}

Matrix draw_loadings(Index N, int r, const Vector& lambdas, Rng& rng) {
  Matrix l = orthonormal_draw(N, r, rng);
  for (int k = 0; k < r; ++k) l.col(k) *= lambdas(k);
  return l;
}

void validate_var_params(Index T, int r, double a) {
  if (T < 1 || r < 1) {
    throw InvalidArgument("factors: dimensions must be positive");
  }
  if (!(a >= 0.0) || a >= 1.0) {
    throw InvalidArgument(
        "factors: autoregressive scale must lie in [0, 1) for stationarity");
  }
}

// Symmetric PSD square root; tiny negative eigenvalues are clamped, real
// ones rejected. Identity inputs skip the decomposition.
Matrix psd_sqrt(const Matrix& s, const std::string& name) {
  if (s.rows() != s.cols() || s.rows() < 1) {
    throw InvalidArgument(name + ": must be square and nonempty");
  }
  if (!s.allFinite()) {
    throw InvalidArgument(name + ": must be finite");
  }
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw InvalidArgument(name + ": must be symmetric");
  }
  if (s.isIdentity(1e-12)) return Matrix::Identity(s.rows(), s.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector& ev = es.eigenvalues();
  const double top = std::max(0.0, ev.maxCoeff());
  if (ev.minCoeff() < -1e-10 * std::max(1.0, top)) {
    throw InvalidArgument(name + ": must be positive semidefinite");
  }
  Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Vector resolved_lambdas(const DgpConfig& cfg) {
  if (!cfg.loading_lambdas.empty()) {
    if (cfg.loading_lambdas.size() != static_cast<std::size_t>(cfg.r)) {
      throw InvalidArgument("dgp: lambda count must equal the rank");
    }
    Vector v(cfg.r);
    for (int k = 0; k < cfg.r; ++k) v(k) = cfg.loading_lambdas[k];
    return v;
  }
  return Vector::Constant(cfg.r,
                          kLoadingScale * std::sqrt(double(cfg.N)));
}

void validate_noise_spec(const NoiseSpec& spec) {
  if (!(spec.lo >= 0.0) || !(spec.hi >= spec.lo)) {
    throw InvalidArgument(
        "noise: variance range needs 0 <= lo <= hi");
  }
  if (spec.kind == SigmaCKind::equicorr) {
    if (!(spec.rho_off >= 0.0)) {
      throw InvalidArgument("noise: off-diagonal level must be nonnegative");
    }
    if (spec.lo < spec.rho_off) {
      throw InvalidArgument(
          "noise: equicorrelated spec needs lo >= rho_off to stay positive "
          "semidefinite");
    }
  }
}

double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / double(xs.size());
}

double sample_sd(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / double(xs.size() - 1));
}

// Inverse of the aligned-residual covariance's symmetric square root.
Matrix inverse_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(ev.minCoeff() > 1e-12 * std::max(top, 1e-300))) {
    throw NumericError("inference: residual covariance is singular");
  }
  Vector root = ev.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

std::string cell_tag(const DgpConfig& cell) {
  return "N=" + std::to_string(cell.N) + " T=" + std::to_string(cell.T);
}

}  // namespace

Matrix gen_var_coefficient(int r, double a, std::uint64_t seed) {
  validate_var_params(1, r, a);
  Rng rng(seed);
  return draw_var_coefficient(r, a, rng);
}

Matrix gen_var_factors(Index T, int r, double a, std::uint64_t seed) {
  validate_var_params(T, r, a);
  Rng rng(seed);
  return draw_var_factors(T, r, a, rng);
}

Matrix gen_smooth_factors(Index T, int r, SmoothBasis basis) {
  if (T < 1 || r < 1) {
    throw InvalidArgument("factors: dimensions must be positive");
  }
  Matrix f(T, r);
  if (basis == SmoothBasis::constant) {
    if (r != 1) {
      throw InvalidArgument("factors: the constant basis only spans rank 1");
    }
    f.setOnes();
    return f;
  }
  const double pi = std::acos(-1.0);
  for (Index t = 1; t <= T; ++t) {
    const double u = double(t) / double(T);
    for (int k = 1; k <= r; ++k) {
      f(t - 1, k - 1) = std::sqrt(2.0) * std::cos(double(k) * pi * u);
    }
  }
  return f;
}

Matrix gen_loadings(Index N, int r, const Vector& lambdas,
                    std::uint64_t seed) {
  if (r < 1 || N < r) {
    throw InvalidArgument("loadings: need 1 <= r <= N");
  }
  if (lambdas.size() != r) {
    throw InvalidArgument("loadings: need one scale per factor");
  }
  for (int k = 0; k < r; ++k) {
    if (!(lambdas(k) > 0.0)) {
      throw InvalidArgument("loadings: scales must be positive");
    }
    if (k > 0 && lambdas(k) > lambdas(k - 1) + 1e-12) {
      throw InvalidArgument("loadings: scales must be non-increasing");
    }
  }
  Rng rng(seed);
  return draw_loadings(N, r, lambdas, rng);
}

Matrix make_sigma_c(const NoiseSpec& spec, Index n, Rng& rng) {
  if (n < 1) {
    throw InvalidArgument("noise: dimension must be positive");
  }
  validate_noise_spec(spec);
  Vector omega(n);
  for (Index i = 0; i < n; ++i) {
    omega(i) = spec.lo + (spec.hi - spec.lo) * rng.uniform();
  }
  if (spec.kind == SigmaCKind::diag_uniform) {
    return omega.asDiagonal();
  }
  Matrix s = Matrix::Constant(n, n, spec.rho_off);
  s.diagonal() = omega;
  return s;
}

Matrix correlated_noise(const Matrix& sigma_c, const Matrix& sigma_t,
                        Rng& rng) {
  const Matrix root_c = psd_sqrt(sigma_c, "noise: cross-sectional covariance");
  const Matrix root_t = psd_sqrt(sigma_t, "noise: temporal covariance");
  Matrix e = gaussian_matrix(sigma_c.rows(), sigma_t.rows(), rng);
  if (!sigma_c.isIdentity(1e-12)) e = root_c * e;
  if (!sigma_t.isIdentity(1e-12)) e = e * root_t;
  return e;
}

Matrix gen_noise(Index N, Index T, const NoiseSpec& spec,
                 std::uint64_t seed) {
  if (N < 1 || T < 1) {
    throw InvalidArgument("noise: dimensions must be positive");
  }
  Rng rng(seed);
  const Matrix sigma_c = make_sigma_c(spec, N, rng);
  // Identity temporal covariance, handled without materializing it.
  const Matrix root_c = psd_sqrt(sigma_c, "noise: cross-sectional covariance");
  Matrix e = gaussian_matrix(N, T, rng);
  if (!sigma_c.isIdentity(1e-12)) e = root_c * e;
  return e;
}

DgpDraw draw_dgp(const DgpConfig& cfg, std::uint64_t replicate_seed) {
  if (cfg.N < 1 || cfg.T < 1 || cfg.r < 1 || cfg.r > std::min(cfg.N, cfg.T)) {
    throw InvalidArgument("dgp: need 1 <= r <= min(N, T)");
  }
  // One stream per replicate, consumed in a frozen order: factors,
  // loadings, noise variances, noise panel.
  Rng rng(replicate_seed);

  Matrix f;
  if (cfg.factor_kind == FactorKind::var) {
    validate_var_params(cfg.T, cfg.r, cfg.a);
    f = draw_var_factors(cfg.T, cfg.r, cfg.a, rng);
  } else {
    f = gen_smooth_factors(cfg.T, cfg.r, cfg.basis);
  }

  const Vector lambdas = resolved_lambdas(cfg);
  for (int k = 1; k < cfg.r; ++k) {
    if (lambdas(k) > lambdas(k - 1) + 1e-12) {
      throw InvalidArgument("dgp: lambdas must be non-increasing");
    }
  }
  for (int k = 0; k < cfg.r; ++k) {
    if (!(lambdas(k) > 0.0)) {
      throw InvalidArgument("dgp: lambdas must be positive");
    }
  }
  const Matrix l = draw_loadings(cfg.N, cfg.r, lambdas, rng);

  const Matrix sigma_c = make_sigma_c(cfg.noise, cfg.N, rng);
  const Matrix sigma_t = Matrix::Identity(cfg.T, cfg.T);
  const Matrix e = correlated_noise(sigma_c, sigma_t, rng);

  DgpDraw out;
  out.X = l * f.transpose() + e;
  out.truth = make_ground_truth(l, f, sigma_c, sigma_t);
  return out;
}

Matrix oracle_sigma_L(const GroundTruth& truth, const ToeplitzWeights& w,
                      const FactorFit& fit, Index i) {
  const Index n = truth.n();
  const Index t = truth.t();
  const int r = truth.r;
  if (i < 0 || i >= n) {
    throw InvalidArgument("oracle covariance: row index out of range");
  }
  if (w.max_lag() >= t) {
    throw InvalidArgument("oracle covariance: weight lag exceeds the panel");
  }
  const RotationSet rot = rotations(fit, truth);

  // Leading eigenpairs of (L F^T) Q (L F^T)^T, taken through the r x r
  // core R_L (F^T Q F) R_L^T of the loading QR. At Q = I this spectrum is
  // T times the squared singular values of the scaled component.
  Eigen::HouseholderQR<Matrix> qr_l(truth.L);
  const Matrix ql = qr_l.householderQ() * Matrix::Identity(n, r);
  const Matrix rl =
      qr_l.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix qf = apply_toeplitz(w, truth.F);
  Matrix fqf = truth.F.transpose() * qf;
  fqf = 0.5 * (fqf + fqf.transpose()).eval();
  Matrix core = rl * fqf * rl.transpose();
  core = 0.5 * (core + core.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(core);
  std::vector<int> order(r);
  for (int k = 0; k < r; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
  });
  Vector sigma_bar(r);
  Matrix w_eig(r, r);
  for (int k = 0; k < r; ++k) {
    sigma_bar(k) = std::abs(es.eigenvalues()(order[k]));
    w_eig.col(k) = es.eigenvectors().col(order[k]);
  }
  if (!(sigma_bar(r - 1) > 1e-12 * sigma_bar(0))) {
    throw NumericError(
        "oracle covariance: weighted second-moment matrix is degenerate at "
        "the requested rank");
  }
  const Matrix u_bar = ql * w_eig;

  const Matrix o_bar = sign_orthogonal(u_bar.transpose() * truth.U);
  const Matrix o_f = o_bar.transpose() * sigma_bar.cwiseInverse().asDiagonal() *
                     o_bar * truth.Sigma.asDiagonal() * rot.R_V.transpose();

  const Matrix qv = apply_toeplitz(w, truth.V);
  Matrix mid;
  if (truth.SigmaT.isIdentity(1e-12)) {
    mid = qv.transpose() * qv;
  } else {
    mid = qv.transpose() * truth.SigmaT * qv;
  }
  mid = 0.5 * (mid + mid.transpose()).eval();

  const Matrix inner = truth.Sigma.asDiagonal() * mid * truth.Sigma.asDiagonal();
  Matrix out = double(t) * truth.SigmaC(i, i) * o_f.transpose() * inner * o_f;
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

Matrix oracle_sigma_F(const GroundTruth& truth, const FactorFit& fit,
                      Index t_idx) {
  const Index t = truth.t();
  const int r = truth.r;
  if (t_idx < 0 || t_idx >= t) {
    throw InvalidArgument("oracle covariance: time index out of range");
  }
  const RotationSet rot = rotations(fit, truth);

  Matrix usu = truth.U.transpose() * truth.SigmaC * truth.U;
  usu = 0.5 * (usu + usu.transpose()).eval();
  const Vector inv_sigma = truth.Sigma.cwiseInverse();
  Matrix out = truth.SigmaT(t_idx, t_idx) * rot.R_V *
               inv_sigma.asDiagonal() * usu * inv_sigma.asDiagonal() *
               rot.R_V.transpose();
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw InvalidArgument("normal_quantile: probability must lie in (0, 1)");
  }
  // Rational approximation (Acklam), then one Halley refinement through
  // the exact CDF; absolute error far below 1e-9 across (0, 1).
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double s = q * q;
    x = (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) *
        q /
        (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
          c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::acos(-1.0)) *
                   std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double ks_statistic_normal(std::vector<double> values) {
  if (values.empty()) {
    throw InvalidArgument("ks_statistic: sample must be nonempty");
  }
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double phi = normal_cdf(values[i]);
    d = std::max(d, (double(i) + 1.0) / n - phi);
    d = std::max(d, phi - double(i) / n);
  }
  return d;
}

std::vector<std::pair<double, double>> qq_points(std::vector<double> values) {
  if (values.empty()) {
    throw InvalidArgument("qq_points: sample must be nonempty");
  }
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.emplace_back(normal_quantile((double(i) + 0.5) / n), values[i]);
  }
  return out;
}

void StudyResult::save_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) {
    throw Error("study: cannot open " + path.string() + " for writing");
  }
  os << "N,T,method,metric,mean,sd,replicates\n";
  for (const auto& row : rows) {
    os << row.N << ',' << row.T << ',' << row.method << ',' << row.metric
       << ',' << csv::format_double(row.mean) << ','
       << csv::format_double(row.sd) << ',' << row.replicates << '\n';
  }
}

nlohmann::json StudyResult::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    rows_json.push_back({{"n", row.N},
                         {"t", row.T},
                         {"method", row.method},
                         {"metric", row.metric},
                         {"mean", row.mean},
                         {"sd", row.sd},
                         {"replicates", row.replicates}});
  }
  return nlohmann::json{{"rows", std::move(rows_json)}, {"notes", notes}};
}

StudyResult run_estimation_study(const EstimationStudyConfig& cfg) {
  if (cfg.cells.empty()) {
    throw InvalidArgument("estimation study: needs at least one cell");
  }
  if (cfg.replicates < 1) {
    throw InvalidArgument("estimation study: needs at least one replicate");
  }
  if (cfg.methods.empty()) {
    throw InvalidArgument("estimation study: needs at least one method");
  }
  for (const auto& m : cfg.methods) {
    if (m != "adawpca" && m != "pca" && m != "heteropca") {
      throw InvalidArgument("estimation study: unknown method '" + m + "'");
    }
  }
  if (cfg.grid.candidates.empty()) {
    throw InvalidArgument("estimation study: candidate grid must be nonempty");
  }

  StudyResult out;
  const int n_methods = static_cast<int>(cfg.methods.size());

  struct Slot {
    double u_err = 0.0;
    double v_err = 0.0;
    bool ok = false;
    std::string note;
  };

  for (const auto& cell : cfg.cells) {
    std::vector<std::vector<Slot>> slots(
        cfg.replicates, std::vector<Slot>(n_methods));

    parallel_for(cfg.replicates, cfg.threads, [&](int k) {
      // Whitening the cell seed first keeps replicate-seed sets disjoint
      // across nearby user seeds; a raw XOR with small seeds would only
      // permute the same set of replicate streams.
      const std::uint64_t rep_seed =
          splitmix64(cell.seed) ^ static_cast<std::uint64_t>(k);
      DgpDraw draw;
      try {
        draw = draw_dgp(cell, rep_seed);
      } catch (const Error& e) {
        for (int m = 0; m < n_methods; ++m) {
          slots[k][m].note = std::string("draw failed: ") + e.what();
        }
        return;
      }
      const Panel panel(std::move(draw.X));

      for (int m = 0; m < n_methods; ++m) {
        const std::string& method = cfg.methods[m];
        try {
          FactorFit fit;
          if (method == "pca") {
            fit = pca(panel, cell.r);
          } else if (method == "adawpca") {
            const std::uint64_t cv_seed =
                splitmix64(rep_seed ^ 0x9f0e1d2c3b4a5968ULL);
            fit = ada_wpca(panel, cfg.grid, cell.r, cfg.k_cv, cfg.pstar,
                           cv_seed)
                      .second;
          } else {
            const Matrix basis = hetero_pca(panel, cell.r);
            fit = complete_fit(panel, basis, ToeplitzWeights::identity(),
                               cell.r);
          }
          slots[k][m].u_err =
              projector_distance(fit.Uhat, draw.truth.U, ProjNorm::fro);
          slots[k][m].v_err =
              projector_distance(fit.Vhat, draw.truth.V, ProjNorm::fro);
          slots[k][m].ok = true;
        } catch (const Error& e) {
          slots[k][m].note = e.what();
        }
      }
    });

    for (int m = 0; m < n_methods; ++m) {
      std::vector<double> us, vs;
      us.reserve(cfg.replicates);
      vs.reserve(cfg.replicates);
      int failed = 0;
      std::string first_note;
      for (int k = 0; k < cfg.replicates; ++k) {
        if (slots[k][m].ok) {
          us.push_back(slots[k][m].u_err);
          vs.push_back(slots[k][m].v_err);
        } else {
          ++failed;
          if (first_note.empty()) first_note = slots[k][m].note;
        }
      }
      if (failed > 0) {
        out.notes.push_back(cell_tag(cell) + " method=" + cfg.methods[m] +
                            ": " + std::to_string(failed) +
                            " replicate(s) failed and were excluded (first: " +
                            first_note + ")");
      }
      const double mu = sample_mean(us);
      const double mv = sample_mean(vs);
      out.rows.push_back({cell.N, cell.T, cfg.methods[m], "u_proj_fro", mu,
                          sample_sd(us, mu), static_cast<int>(us.size())});
      out.rows.push_back({cell.N, cell.T, cfg.methods[m], "v_proj_fro", mv,
                          sample_sd(vs, mv), static_cast<int>(vs.size())});
    }
  }
  return out;
}

StudyResult run_cv_study(const CvStudyConfig& cfg) {
  if (cfg.cells.empty()) {
    throw InvalidArgument("cv study: needs at least one cell");
  }
  if (cfg.replicates < 1) {
    throw InvalidArgument("cv study: needs at least one replicate");
  }
  if (cfg.grid.candidates.empty()) {
    throw InvalidArgument("cv study: candidate grid must be nonempty");
  }

  StudyResult out;
  const int n_cand = static_cast<int>(cfg.grid.candidates.size());
  // Bottom-3 avoidance degenerates for tiny grids; the cutoff never drops
  // below winning outright.
  const int nb_cutoff = std::max(n_cand - 3, 1);

  struct Slot {
    int rank = 0;
    bool ok = false;
    std::string note;
  };

  for (const auto& cell : cfg.cells) {
    std::vector<Slot> slots(cfg.replicates);

    parallel_for(cfg.replicates, cfg.threads, [&](int k) {
      const std::uint64_t rep_seed =
          splitmix64(cell.seed) ^ static_cast<std::uint64_t>(k);
      try {
        const DgpDraw draw = draw_dgp(cell, rep_seed);
        const Panel panel(draw.X);
        const std::uint64_t cv_seed =
            splitmix64(rep_seed ^ 0x9f0e1d2c3b4a5968ULL);
        const auto [report, chosen_fit] = ada_wpca(
            panel, cfg.grid, cell.r, cfg.k_cv, cfg.pstar, cv_seed);

        // True (full-data) subspace error of every candidate; the chosen
        // one is then ranked competition-style among them.
        const LagGrams grams = compute_lag_grams(panel.X, cfg.grid.max_lag);
        std::vector<double> errs(n_cand, kInf);
        for (int c = 0; c < n_cand; ++c) {
          try {
            const Matrix gram =
                combine_lag_grams(grams, cfg.grid.candidates[c]);
            const FactorFit fit =
                fit_from_gram(panel, gram, cfg.grid.candidates[c], cell.r);
            errs[c] =
                projector_distance(fit.Uhat, draw.truth.U, ProjNorm::fro);
          } catch (const Error&) {
            // +inf keeps the candidate ranked last.
          }
        }
        const double chosen_err = errs[report.chosen_index];
        if (!std::isfinite(chosen_err)) {
          slots[k].note = "chosen candidate's full-data fit failed";
          return;
        }
        int rank = 1;
        for (int c = 0; c < n_cand; ++c) {
          if (errs[c] < chosen_err) ++rank;
        }
        slots[k].rank = rank;
        slots[k].ok = true;
      } catch (const Error& e) {
        slots[k].note = e.what();
      }
    });

    std::vector<double> top3, nb3, ranks;
    int failed = 0;
    std::string first_note;
    for (int k = 0; k < cfg.replicates; ++k) {
      if (!slots[k].ok) {
        ++failed;
        if (first_note.empty()) first_note = slots[k].note;
        continue;
      }
      top3.push_back(slots[k].rank <= 3 ? 1.0 : 0.0);
      nb3.push_back(slots[k].rank <= nb_cutoff ? 1.0 : 0.0);
      ranks.push_back(double(slots[k].rank));
    }
    if (failed > 0) {
      out.notes.push_back(cell_tag(cell) + ": " + std::to_string(failed) +
                          " replicate(s) failed and were excluded (first: " +
                          first_note + ")");
    }
    const double m_top = sample_mean(top3);
    const double m_nb = sample_mean(nb3);
    const double m_rank = sample_mean(ranks);
    out.rows.push_back({cell.N, cell.T, "adawpca", "top3", m_top,
                        sample_sd(top3, m_top), static_cast<int>(top3.size())});
    out.rows.push_back({cell.N, cell.T, "adawpca", "non_bottom3", m_nb,
                        sample_sd(nb3, m_nb), static_cast<int>(nb3.size())});
    out.rows.push_back({cell.N, cell.T, "adawpca", "mean_rank", m_rank,
                        sample_sd(ranks, m_rank),
                        static_cast<int>(ranks.size())});
  }
  return out;
}

InferenceSample run_inference_study(const InferenceConfig& cfg,
                                    const InferenceTarget& target) {
  if (cfg.replicates < 1) {
    throw InvalidArgument("inference study: needs at least one replicate");
  }
  if (cfg.method != "wpca" && cfg.method != "pca") {
    throw InvalidArgument("inference study: method must be wpca or pca");
  }
  const bool loading = target.kind == InferenceTarget::Kind::loading;
  if (target.index < 0 ||
      (loading ? target.index >= cfg.dgp.N : target.index >= cfg.dgp.T)) {
    throw InvalidArgument("inference study: target index out of range");
  }
  const ToeplitzWeights w =
      cfg.method == "pca" ? ToeplitzWeights::identity() : cfg.weights;

  struct Slot {
    double value = 0.0;
    bool ok = false;
    std::string note;
  };
  std::vector<Slot> slots(cfg.replicates);

  parallel_for(cfg.replicates, cfg.threads, [&](int k) {
    const std::uint64_t rep_seed =
        splitmix64(cfg.dgp.seed) ^ static_cast<std::uint64_t>(k);
    try {
      const DgpDraw draw = draw_dgp(cfg.dgp, rep_seed);
      const Panel panel(draw.X);
      const FactorFit fit = wpca(panel, w, cfg.dgp.r);
      const RotationSet rot = rotations(fit, draw.truth);

      Matrix cov;
      Vector diff;
      if (loading) {
        cov = oracle_sigma_L(draw.truth, w, fit, target.index);
        diff = (fit.Lhat.row(target.index) -
                (draw.truth.L * rot.R_L).row(target.index))
                   .transpose();
      } else {
        cov = oracle_sigma_F(draw.truth, fit, target.index);
        diff = (fit.Fhat.row(target.index) -
                (draw.truth.F * rot.R_F).row(target.index))
                   .transpose();
      }
      const Vector rho = inverse_sqrt(cov) * diff;
      slots[k].value = rho(0);
      slots[k].ok = true;
    } catch (const Error& e) {
      slots[k].note = e.what();
    }
  });

  InferenceSample out;
  out.target = target;
  std::string first_note;
  for (int k = 0; k < cfg.replicates; ++k) {
    if (slots[k].ok) {
      out.values.push_back(slots[k].value);
    } else {
      ++out.excluded;
      if (first_note.empty()) first_note = slots[k].note;
    }
  }
  if (out.excluded > 0) {
    out.notes.push_back(std::to_string(out.excluded) +
                        " replicate(s) excluded (first: " + first_note + ")");
  }
  if (out.values.empty()) {
    throw NumericError("inference study: every replicate failed");
  }
  out.mean = sample_mean(out.values);
  const double sd = sample_sd(out.values, out.mean);
  out.variance = sd * sd;
  out.ks_statistic = ks_statistic_normal(out.values);
  return out;
}

void InferenceSample::save_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) {
    throw Error("inference: cannot open " + path.string() + " for writing");
  }
  os << "value\n";
  for (double v : values) os << csv::format_double(v) << '\n';
}

nlohmann::json InferenceTarget::to_json() const {
  return nlohmann::json{
      {"kind", kind == Kind::loading ? "loading" : "factor"},
      {"index", index}};
}

nlohmann::json InferenceSample::to_json() const {
  return nlohmann::json{{"values", values},
                        {"mean", mean},
                        {"variance", variance},
                        {"ks_statistic", ks_statistic},
                        {"target", target.to_json()},
                        {"excluded", excluded},
                        {"notes", notes}};
}

nlohmann::json NoiseSpec::to_json() const {
  return nlohmann::json{
      {"kind", kind == SigmaCKind::diag_uniform ? "diag_uniform" : "equicorr"},
      {"lo", lo},
      {"hi", hi},
      {"rho_off", rho_off}};
}

NoiseSpec NoiseSpec::from_json(const nlohmann::json& j) {
  NoiseSpec spec;
  if (j.contains("kind")) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "diag_uniform") {
      spec.kind = SigmaCKind::diag_uniform;
    } else if (k == "equicorr") {
      spec.kind = SigmaCKind::equicorr;
    } else {
      throw InvalidArgument("noise: unknown covariance kind '" + k + "'");
    }
  }
  spec.lo = j.value("lo", spec.lo);
  spec.hi = j.value("hi", spec.hi);
  spec.rho_off = j.value("rho_off", spec.rho_off);
  validate_noise_spec(spec);
  return spec;
}

nlohmann::json DgpConfig::to_json() const {
  nlohmann::json j{{"n", N},
                   {"t", T},
                   {"r", r},
                   {"factor", factor_kind == FactorKind::var ? "var" : "smooth"},
                   {"a", a},
                   {"basis",
                    basis == SmoothBasis::cosine ? "cosine" : "constant"},
                   {"noise", noise.to_json()},
                   {"seed", seed}};
  if (!loading_lambdas.empty()) j["lambdas"] = loading_lambdas;
  return j;
}

DgpConfig DgpConfig::from_json(const nlohmann::json& j) {
  DgpConfig cfg;
  cfg.N = j.value("n", cfg.N);
  cfg.T = j.value("t", cfg.T);
  cfg.r = j.value("r", cfg.r);
  if (j.contains("factor")) {
    const std::string f = j.at("factor").get<std::string>();
    if (f == "var") {
      cfg.factor_kind = FactorKind::var;
    } else if (f == "smooth") {
      cfg.factor_kind = FactorKind::smooth;
    } else {
      throw InvalidArgument("dgp: unknown factor kind '" + f + "'");
    }
  }
  cfg.a = j.value("a", cfg.a);
  if (j.contains("basis")) {
    const std::string b = j.at("basis").get<std::string>();
    if (b == "cosine") {
      cfg.basis = SmoothBasis::cosine;
    } else if (b == "constant") {
      cfg.basis = SmoothBasis::constant;
    } else {
      throw InvalidArgument("dgp: unknown smooth basis '" + b + "'");
    }
  }
  if (j.contains("lambdas")) {
    cfg.loading_lambdas = j.at("lambdas").get<std::vector<double>>();
  }
  if (j.contains("noise")) {
    cfg.noise = NoiseSpec::from_json(j.at("noise"));
  }
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

namespace {

WeightGrid grid_from_json(const nlohmann::json& j, const WeightGrid& fallback) {
  if (!j.contains("grid")) return fallback;
  const auto& g = j.at("grid");
  return build_grid(g.value("max_lag", 1), g.value("step", 1.0 / 9.0));
}

}  // namespace

EstimationStudyConfig EstimationStudyConfig::from_json(
    const nlohmann::json& j) {
  EstimationStudyConfig cfg;
  if (j.contains("cells")) {
    cfg.cells.clear();
    for (const auto& c : j.at("cells")) {
      cfg.cells.push_back(DgpConfig::from_json(c));
    }
  }
  if (j.contains("methods")) {
    cfg.methods = j.at("methods").get<std::vector<std::string>>();
  }
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.grid = grid_from_json(j, cfg.grid);
  cfg.k_cv = j.value("k_cv", cfg.k_cv);
  cfg.pstar = j.value("pstar", cfg.pstar);
  cfg.threads = j.value("threads", cfg.threads);
  return cfg;
}

CvStudyConfig CvStudyConfig::from_json(const nlohmann::json& j) {
  CvStudyConfig cfg;
  if (j.contains("cells")) {
    cfg.cells.clear();
    for (const auto& c : j.at("cells")) {
      cfg.cells.push_back(DgpConfig::from_json(c));
    }
  }
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.grid = grid_from_json(j, cfg.grid);
  cfg.k_cv = j.value("k_cv", cfg.k_cv);
  cfg.pstar = j.value("pstar", cfg.pstar);
  cfg.threads = j.value("threads", cfg.threads);
  return cfg;
}

InferenceConfig InferenceConfig::from_json(const nlohmann::json& j) {
  InferenceConfig cfg;
  if (j.contains("dgp")) cfg.dgp = DgpConfig::from_json(j.at("dgp"));
  if (j.contains("weights")) {
    cfg.weights = ToeplitzWeights::from_json(j.at("weights"));
  }
  cfg.method = j.value("method", cfg.method);
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.threads = j.value("threads", cfg.threads);
  return cfg;
}

}  // namespace wpca
