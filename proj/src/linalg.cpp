#include "mbcpp/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <sstream>

namespace mbcpp {

Mat pseudo_inverse(const Mat& a, double rel_tol) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod;
  cod.setThreshold(rel_tol);
  cod.compute(a);
  return cod.pseudoInverse();
}

namespace {

[[noreturn]] void throw_singular(const Mat& a, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << what << " is singular or indefinite (size " << a.rows() << ", eigenvalue range ["
      << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff() << "])";
  throw NumericalError(msg.str());
}

// SPD solve with symmetric Jacobi equilibration.  State vectors mix meters,
// seconds and cycles, so raw FIMs are legitimately scaled across ~17 orders of
// magnitude; equilibration separates that from true rank loss.
struct ScaledLdlt {
  Vec scale;
  Eigen::LDLT<Mat> ldlt;
};

ScaledLdlt factor_spd(const Mat& a, const char* what) {
  if (a.rows() != a.cols()) throw ConfigError("SPD factorization needs a square matrix");
  ScaledLdlt f;
  const Vec diag = a.diagonal();
  if ((diag.array() <= 0.0).any()) throw_singular(a, what);
  f.scale = diag.cwiseSqrt().cwiseInverse();
  const Mat b = f.scale.asDiagonal() * a * f.scale.asDiagonal();
  f.ldlt.compute(b);
  const Vec d = f.ldlt.vectorD();
  const double dmax = d.maxCoeff();
  if (f.ldlt.info() != Eigen::Success || dmax <= 0.0 || d.minCoeff() <= dmax * 1e-13) {
    throw_singular(a, what);
  }
  return f;
}

}  // namespace

Mat inverse_spd(const Mat& a, const char* what) {
  const ScaledLdlt f = factor_spd(a, what);
  const Mat inv_b = f.ldlt.solve(Mat::Identity(a.rows(), a.cols()));
  return f.scale.asDiagonal() * inv_b * f.scale.asDiagonal();
}

Mat inverse_sqrt_spd(const Mat& a, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  const Vec ev = es.eigenvalues();
  if (ev.minCoeff() <= ev.maxCoeff() * 1e-13) throw_singular(a, what);
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

Mat cholesky_lower(const Mat& a, const char* what) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw_singular(a, what);
  return llt.matrixL();
}

double trace_root(const Mat& cov, int n_dim) {
  return std::sqrt(cov.topLeftCorner(n_dim, n_dim).trace());
}

Vec solve_wls(const Mat& a, const Mat& w, const Vec& y, const char* what) {
  const Mat normal = a.transpose() * w * a;
  const ScaledLdlt f = factor_spd(normal, what);
  const Vec rhs = f.scale.asDiagonal() * (a.transpose() * (w * y));
  return f.scale.asDiagonal() * f.ldlt.solve(rhs).eval();
}

}  // namespace mbcpp
