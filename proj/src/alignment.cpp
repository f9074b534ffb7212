#include "wpca/alignment.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace wpca {

namespace {

// Symmetric PSD validation with an identity fast path so large identity
// covariances (the common case in simulation) skip the eigendecomposition.
void check_psd(const Matrix& S, const std::string& name) {
  if (S.rows() != S.cols() || S.rows() < 1) {
    throw InvalidArgument(name + ": must be square and nonempty");
  }
  if (!S.allFinite()) {
    throw InvalidArgument(name + ": all entries must be finite");
  }
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw InvalidArgument(name + ": must be symmetric");
  }
  if (S.isIdentity(1e-12)) return;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-8 * std::max(1.0, hi)) {
    throw InvalidArgument(name + ": must be positive semidefinite");
  }
}

// Largest singular value of a tall block through its small r x r Gram.
double thin_op_norm(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A,
                                           Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace

GroundTruth make_ground_truth(Matrix L, Matrix F, Matrix SigmaC,
                              Matrix SigmaT) {
  if (L.rows() < 1 || L.cols() < 1 || F.rows() < 1 || F.cols() < 1) {
    throw InvalidArgument("ground truth: loadings and factors must be nonempty");
  }
  if (L.cols() != F.cols()) {
    throw InvalidArgument(
        "ground truth: loadings and factors must agree on the rank");
  }
  if (!L.allFinite() || !F.allFinite()) {
    throw InvalidArgument("ground truth: loadings and factors must be finite");
  }
  const int r = static_cast<int>(L.cols());
  const Index n = L.rows();
  const Index t = F.rows();
  if (n < r || t < r) {
    throw InvalidArgument("ground truth: rank exceeds panel dimensions");
  }
  check_psd(SigmaC, "ground truth: cross-sectional covariance");
  check_psd(SigmaT, "ground truth: temporal covariance");
  if (SigmaC.rows() != n) {
    throw InvalidArgument(
        "ground truth: cross-sectional covariance must be N x N");
  }
  if (SigmaT.rows() != t) {
    throw InvalidArgument("ground truth: temporal covariance must be T x T");
  }

  // Rank-r SVD of T^{-1/2} L F^T through the r x r core R_L R_F^T: thin QR
  // of each tall block, then a small dense SVD.
  Eigen::HouseholderQR<Matrix> qr_l(L);
  Eigen::HouseholderQR<Matrix> qr_f(F);
  const Matrix ql = qr_l.householderQ() * Matrix::Identity(n, r);
  const Matrix qf = qr_f.householderQ() * Matrix::Identity(t, r);
  const Matrix rl =
      qr_l.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix rf =
      qr_f.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix core = rl * rf.transpose() / std::sqrt(double(t));
  Eigen::JacobiSVD<Matrix> svd(core,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double top = svd.singularValues()(0);
  if (!(svd.singularValues()(r - 1) > 1e-12 * top)) {
    throw NumericError(
        "ground truth: common component is rank deficient; loadings and "
        "factors must each have full column rank");
  }

  GroundTruth out;
  out.U = ql * svd.matrixU();
  out.V = qf * svd.matrixV();
  out.Sigma = svd.singularValues();
  canonicalize_signs(out.U, &out.V);
  out.L = std::move(L);
  out.F = std::move(F);
  out.SigmaC = std::move(SigmaC);
  out.SigmaT = std::move(SigmaT);
  out.r = r;
  return out;
}

Matrix sign_orthogonal(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() < 1) {
    throw InvalidArgument("sign_orthogonal: input must be square and nonempty");
  }
  if (!A.allFinite()) {
    throw InvalidArgument("sign_orthogonal: input must be finite");
  }
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(A.rows() - 1) <= 1e-12) {
    throw AlignmentError(
        "sign_orthogonal: input is numerically singular, no reliable "
        "orthogonal factor exists");
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

RotationSet rotations(const FactorFit& fit, const GroundTruth& truth) {
  if (fit.n() != truth.n() || fit.t() != truth.t()) {
    throw InvalidArgument("rotations: fit and truth dimensions disagree");
  }
  if (fit.r != truth.r) {
    throw InvalidArgument("rotations: fit and truth ranks disagree");
  }
  const Index t = truth.t();
  const int r = truth.r;

  RotationSet out;
  out.R_U = sign_orthogonal(fit.Uhat.transpose() * truth.U);
  out.R_V = sign_orthogonal(fit.Vhat.transpose() * truth.V);

  Eigen::ColPivHouseholderQR<Matrix> qr_f(truth.F);
  if (qr_f.rank() < r) {
    throw AlignmentError("rotations: factor matrix is rank deficient");
  }
  out.B = std::sqrt(double(t)) * qr_f.solve(truth.V);

  Eigen::FullPivLU<Matrix> lu(out.B);
  if (!lu.isInvertible()) {
    throw AlignmentError("rotations: factor-to-V map is singular");
  }
  out.R_L = lu.inverse().transpose() * out.R_V.transpose();
  out.R_F = out.B * out.R_V.transpose();
  return out;
}

double projector_distance(const Matrix& U1, const Matrix& U2, ProjNorm norm) {
  if (U1.rows() != U2.rows() || U1.cols() != U2.cols()) {
    throw InvalidArgument("projector_distance: blocks must share a shape");
  }
  if (U1.rows() < 1 || U1.cols() < 1) {
    throw InvalidArgument("projector_distance: blocks must be nonempty");
  }
  if (!U1.allFinite() || !U2.allFinite()) {
    throw InvalidArgument("projector_distance: blocks must be finite");
  }
  const Index r = U1.cols();
  const Matrix eye = Matrix::Identity(r, r);
  if ((U1.transpose() * U1 - eye).cwiseAbs().maxCoeff() > 1e-6 ||
      (U2.transpose() * U2 - eye).cwiseAbs().maxCoeff() > 1e-6) {
    throw InvalidArgument(
        "projector_distance: blocks must have orthonormal columns");
  }

  // All three norms reduce to the r x r overlap M = U1^T U2, so nothing
  // here materializes an N x N projector.
  const Matrix m = U1.transpose() * U2;
  switch (norm) {
    case ProjNorm::fro: {
      const double d2 = 2.0 * double(r) - 2.0 * m.squaredNorm();
      return std::sqrt(std::max(0.0, d2));
    }
    case ProjNorm::op: {
      Eigen::JacobiSVD<Matrix> svd(m);
      const double smin = svd.singularValues()(r - 1);
      return std::sqrt(std::max(0.0, 1.0 - smin * smin));
    }
    case ProjNorm::two_to_inf: {
      // Row i of the projector difference has squared norm
      // ||U1_i||^2 + ||U2_i||^2 - 2 U1_i M U2_i^T.
      double best = 0.0;
      for (Index i = 0; i < U1.rows(); ++i) {
        const double a = U1.row(i).squaredNorm();
        const double b = U2.row(i).squaredNorm();
        const double c = U1.row(i) * m * U2.row(i).transpose();
        best = std::max(best, a + b - 2.0 * c);
      }
      return std::sqrt(std::max(0.0, best));
    }
  }
  throw InvalidArgument("projector_distance: unknown norm");
}

ErrorRecord estimation_errors(const FactorFit& fit, const GroundTruth& truth,
                              const RotationSet& rot) {
  if (fit.n() != truth.n() || fit.t() != truth.t() || fit.r != truth.r) {
    throw InvalidArgument("estimation_errors: fit and truth disagree on shape");
  }
  const double sqrt_n = std::sqrt(double(truth.n()));
  const double sqrt_t = std::sqrt(double(truth.t()));

  const Matrix dl = fit.Lhat - truth.L * rot.R_L;
  const Matrix df = fit.Fhat - truth.F * rot.R_F;

  ErrorRecord rec;
  rec.loading_op = thin_op_norm(dl) / sqrt_n;
  rec.loading_2inf = dl.rowwise().norm().maxCoeff();
  rec.factor_op = thin_op_norm(df) / sqrt_t;
  rec.factor_2inf = df.rowwise().norm().maxCoeff();
  rec.u_proj_fro = projector_distance(fit.Uhat, truth.U, ProjNorm::fro);
  rec.u_proj_op = projector_distance(fit.Uhat, truth.U, ProjNorm::op);
  rec.v_proj_fro = projector_distance(fit.Vhat, truth.V, ProjNorm::fro);
  return rec;
}

nlohmann::json ErrorRecord::to_json() const {
  return nlohmann::json{{"loading_op", loading_op},
                        {"loading_2inf", loading_2inf},
                        {"factor_op", factor_op},
                        {"factor_2inf", factor_2inf},
                        {"u_proj_fro", u_proj_fro},
                        {"u_proj_op", u_proj_op},
                        {"v_proj_fro", v_proj_fro}};
}

}  // namespace wpca
