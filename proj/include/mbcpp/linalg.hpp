#pragma once

#include "mbcpp/types.hpp"

namespace mbcpp {

/// Moore-Penrose pseudoinverse through a rank-revealing complete orthogonal
/// decomposition.  rel_tol is relative to the largest diagonal of the
/// triangular factor.
Mat pseudo_inverse(const Mat& a, double rel_tol = 1e-10);

/// Inverse of a symmetric positive-definite matrix; throws NumericalError with
/// a condition diagnostic when the factorization fails.  `what` names the
/// matrix in the error message.
Mat inverse_spd(const Mat& a, const char* what);

/// Symmetric inverse square root via eigendecomposition (A^{-1/2}).
Mat inverse_sqrt_spd(const Mat& a, const char* what);

/// Lower Cholesky factor; throws NumericalError when A is not positive definite.
Mat cholesky_lower(const Mat& a, const char* what);

/// sqrt of the trace of the leading n_dim x n_dim block.
double trace_root(const Mat& cov, int n_dim);

/// Weighted least squares: argmin_x (y - A x)' W (y - A x) for W = Sigma^{-1}
/// supplied directly.  Throws NumericalError when the normal matrix is singular.
Vec solve_wls(const Mat& a, const Mat& w, const Vec& y, const char* what);

}  // namespace mbcpp
