#pragma once

#include <json.hpp>

#include "wpca/common.hpp"
#include "wpca/estimators.hpp"

namespace wpca {

// Simulated ground truth: loadings, factors, their covariance structure,
// and the rank-r SVD (U, Sigma, V) of the scaled common component
// T^{-1/2} L F^T, kept consistent by construction.
struct GroundTruth {
  Matrix L;       // N x r
  Matrix F;       // T x r
  Matrix U;       // N x r, orthonormal
  Vector Sigma;   // r, positive descending
  Matrix V;       // T x r, orthonormal
  Matrix SigmaC;  // N x N cross-sectional noise covariance
  Matrix SigmaT;  // T x T temporal noise covariance
  int r = 0;

  Index n() const { return L.rows(); }
  Index t() const { return F.rows(); }
};

// Builds the truth record from primitives, deriving (U, Sigma, V) through
// a reduced QR + small SVD route. Rank-deficient L or F is an error, as
// are non-PSD covariance inputs.
GroundTruth make_ground_truth(Matrix L, Matrix F, Matrix SigmaC,
                              Matrix SigmaT);

// Orthogonal polar factor W1 W2^T of A = W1 D W2^T. Raises an alignment
// error when the smallest singular value is at or below 1e-12, rather
// than returning a garbage rotation.
Matrix sign_orthogonal(const Matrix& A);

// The rotations that carry estimated quantities onto the truth's
// coordinates: R_U and R_V align the singular spaces, B maps V onto the
// factor coordinates via least squares, and R_L / R_F are the induced
// loading and factor rotations.
struct RotationSet {
  Matrix R_U;  // r x r orthogonal
  Matrix R_V;  // r x r orthogonal
  Matrix B;    // r x r, sqrt(T) (F^T F)^{-1} F^T V
  Matrix R_L;  // (B^{-1})^T R_V^T
  Matrix R_F;  // B R_V^T
};

RotationSet rotations(const FactorFit& fit, const GroundTruth& truth);

enum class ProjNorm { op, fro, two_to_inf };

// Distance between the column spaces of two orthonormal blocks, measured
// on the projector difference U1 U1^T - U2 U2^T in the requested norm.
double projector_distance(const Matrix& U1, const Matrix& U2, ProjNorm norm);

// The error summary attached to one fitted replicate.
struct ErrorRecord {
  double loading_op = 0.0;    // ||Lhat - L R_L||_2 / sqrt(N)
  double loading_2inf = 0.0;  // max row norm of Lhat - L R_L
  double factor_op = 0.0;     // ||Fhat - F R_F||_2 / sqrt(T)
  double factor_2inf = 0.0;   // max row norm of Fhat - F R_F
  double u_proj_fro = 0.0;
  double u_proj_op = 0.0;
  double v_proj_fro = 0.0;

  nlohmann::json to_json() const;
};

ErrorRecord estimation_errors(const FactorFit& fit, const GroundTruth& truth,
                              const RotationSet& rot);

}  // namespace wpca
