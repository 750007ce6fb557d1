#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mbcpp/types.hpp"

namespace mbcpp {

/// Integer least squares: minimize (r - z)' S^{-1} (r - z) over integer z.
struct IlsProblem {
  Vec r;  // float solution
  Mat S;  // symmetric positive-definite covariance
};

struct IlsSearchStats {
  long long nodes_visited = 0;
  double condition_before = 0.0;
  double condition_after = 0.0;
};

struct IlsSolution {
  VecI z;
  double cost = 0.0;
  IlsSearchStats stats;
  // Second-best candidate and cost ratio, for ambiguity-validation diagnostics.
  std::optional<VecI> second_best;
  double second_cost = 0.0;
};

/// Lattice decorrelation state.  z_original = transform * z_reduced, and the
/// reduced problem covariance is s_reduced = z' S z.
struct Decorrelation {
  Mat z;          // unimodular, |det| = 1; reduced covariance is z' S z
  Mat transform;  // maps reduced-domain integers back to the original domain
  Mat s_reduced;
  double condition_before = 0.0;
  double condition_after = 0.0;
};

/// LLL-style reduction (integer size reductions plus neighbor swaps until
/// convergence) of the quadratic form.  Throws NumericalError on non-SPD input.
Decorrelation decorrelate(const Mat& s);

/// Exact ILS by decorrelation plus depth-first sphere search with shrinking
/// radius in Schnorr-Euchner order.  Ties are broken toward the
/// lexicographically smallest integer vector.
IlsSolution solve(const IlsProblem& p);

/// Sphere search reusing a precomputed decorrelation of the same S; used by
/// Monte-Carlo loops that solve many right-hand sides.
IlsSolution solve_with(const Decorrelation& dec, const Mat& s, const Vec& r);

/// The k best lattice candidates in ascending cost order (fewer when the
/// search space is smaller).  Used for candidate validation against richer
/// cost functions than the quadratic form.
std::vector<IlsSolution> solve_k_best(const Decorrelation& dec, const Mat& s, const Vec& r,
                                      int k);

/// Exhaustive minimization over the integer box round(r) +/- box_radius.
/// Validation oracle; dimension is guarded to n <= 8.
IlsSolution brute_force(const IlsProblem& p, int box_radius);

}  // namespace mbcpp
