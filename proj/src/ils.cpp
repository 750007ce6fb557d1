#include "mbcpp/ils.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "mbcpp/linalg.hpp"

namespace mbcpp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr long long kNodeGuard = 200'000'000;

double spd_condition(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : kInf;
}

// Zeroes r(k, k-1) by a Givens rotation of rows k-1 and k.
void retriangularize(Mat& r, int k) {
  const double a = r(k - 1, k - 1);
  const double b = r(k, k - 1);
  const double h = std::hypot(a, b);
  if (h == 0.0) throw NumericalError("ILS reduction hit a zero pivot");
  const double c = a / h;
  const double s = b / h;
  const int n = static_cast<int>(r.cols());
  for (int col = k - 1; col < n; ++col) {
    const double x = r(k - 1, col);
    const double y = r(k, col);
    r(k - 1, col) = c * x + s * y;
    r(k, col) = -s * x + c * y;
  }
  r(k, k - 1) = 0.0;
}

// Integer size reduction of column j against column i (i < j); t accumulates
// the basis transform z = t * w, tinv its inverse.
void size_reduce(Mat& r, Mat& t, Mat& tinv, int i, int j) {
  const double mu = std::round(r(i, j) / r(i, i));
  if (mu == 0.0) return;
  r.col(j).head(i + 1) -= mu * r.col(i).head(i + 1);
  t.col(j) -= mu * t.col(i);
  tinv.row(i) += mu * tinv.row(j);
}

// Backward factorization s = l' diag(d) l with unit lower-triangular l, the
// orientation the sphere search needs to recurse from the last coordinate.
void factor_ltdl(const Mat& s, Mat& l, Vec& d) {
  const int n = static_cast<int>(s.rows());
  Mat a = s;
  l = Mat::Zero(n, n);
  d = Vec::Zero(n);
  for (int i = n - 1; i >= 0; --i) {
    d(i) = a(i, i);
    if (!(d(i) > 0.0)) throw NumericalError("ILS covariance is not positive definite");
    l.row(i).head(i + 1) = a.row(i).head(i + 1) / d(i);
    for (int p = 0; p < i; ++p) {
      for (int q = 0; q <= p; ++q) a(p, q) -= d(i) * l(i, p) * l(i, q);
    }
    l(i, i) = 1.0;
  }
}

int sign_step(double x) { return x > 0 ? 1 : -1; }

bool lex_less(const VecI& a, const VecI& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

VecI map_to_original(const Mat& transform, const VecI& w) {
  const Vec z = transform * w.cast<double>();
  VecI out(z.size());
  for (int i = 0; i < z.size(); ++i) out(i) = static_cast<int>(std::llround(z(i)));
  return out;
}

struct SearchOutput {
  VecI best;
  double best_cost = kInf;
  bool have_best = false;
  VecI second;
  double second_cost = kInf;
  bool have_second = false;
  long long nodes = 0;
};

// Depth-first Schnorr-Euchner enumeration over the reduced lattice.  Cost of
// an integer vector w is sum_i g_i^2 / d_i with g = l^{-T} (w - w_r).  Ties at
// the global minimum are broken toward the lexicographically smallest vector
// in the original coordinates.
SearchOutput se_search(const Mat& l, const Vec& d, const Vec& w_r, const Mat& transform,
                       bool want_second) {
  const int n = static_cast<int>(w_r.size());
  SearchOutput out;
  if (n == 0) {
    out.best = VecI(0);
    out.best_cost = 0.0;
    out.have_best = true;
    return out;
  }
  Mat acc = Mat::Zero(n, n);
  Vec cond(n), dist(n);
  VecI z(n);
  Eigen::VectorXi step(n);
  VecI best_orig(n);

  int k = n - 1;
  dist(k) = 0.0;
  cond(k) = w_r(k);
  z(k) = static_cast<int>(std::lround(cond(k)));
  step(k) = sign_step(cond(k) - z(k));

  while (true) {
    if (++out.nodes > kNodeGuard) throw NumericalError("ILS search exceeded the node guard");
    const double g = z(k) - cond(k);
    const double cost = dist(k) + g * g / d(k);
    const double prune_at = want_second ? out.second_cost : out.best_cost;
    if (cost <= prune_at) {
      if (k > 0) {
        for (int j = 0; j < k; ++j) acc(k - 1, j) = acc(k, j) + l(k, j) * g;
        --k;
        dist(k) = cost;
        cond(k) = w_r(k) + acc(k, k);
        z(k) = static_cast<int>(std::lround(cond(k)));
        step(k) = sign_step(cond(k) - z(k));
        continue;
      }
      // Leaf reached.
      if (!out.have_best || cost < out.best_cost) {
        if (out.have_best) {
          out.second = out.best;
          out.second_cost = out.best_cost;
          out.have_second = true;
        }
        out.best = z;
        out.best_cost = cost;
        out.have_best = true;
        best_orig = map_to_original(transform, z);
      } else if (cost == out.best_cost) {
        const VecI cand_orig = map_to_original(transform, z);
        if (lex_less(cand_orig, best_orig)) {
          out.second = out.best;
          out.second_cost = out.best_cost;
          out.have_second = true;
          out.best = z;
          best_orig = cand_orig;
        } else if (want_second) {
          out.second = z;
          out.second_cost = cost;
          out.have_second = true;
        }
      } else if (want_second && cost < out.second_cost) {
        out.second = z;
        out.second_cost = cost;
        out.have_second = true;
      }
      z(k) += step(k);
      step(k) = -step(k) - sign_step(step(k));
      continue;
    }
    if (k == n - 1) break;
    ++k;
    z(k) += step(k);
    step(k) = -step(k) - sign_step(step(k));
  }
  return out;
}

// Same enumeration keeping the k best leaves; pruning radius is the current
// k-th best cost.
struct KBestOutput {
  std::vector<std::pair<double, VecI>> leaves;  // ascending cost
  long long nodes = 0;
};

KBestOutput se_search_k(const Mat& l, const Vec& d, const Vec& w_r, int k) {
  const int n = static_cast<int>(w_r.size());
  KBestOutput out;
  if (n == 0) {
    out.leaves.push_back({0.0, VecI(0)});
    return out;
  }
  Mat acc = Mat::Zero(n, n);
  Vec cond(n), dist(n);
  VecI z(n);
  Eigen::VectorXi step(n);

  const auto push_leaf = [&](double cost, const VecI& leaf) {
    auto it = out.leaves.begin();
    while (it != out.leaves.end() && it->first <= cost) ++it;
    out.leaves.insert(it, {cost, leaf});
    if (static_cast<int>(out.leaves.size()) > k) out.leaves.pop_back();
  };

  int level = n - 1;
  dist(level) = 0.0;
  cond(level) = w_r(level);
  z(level) = static_cast<int>(std::lround(cond(level)));
  step(level) = sign_step(cond(level) - z(level));
  while (true) {
    if (++out.nodes > kNodeGuard) throw NumericalError("ILS search exceeded the node guard");
    const double g = z(level) - cond(level);
    const double cost = dist(level) + g * g / d(level);
    const double prune_at = static_cast<int>(out.leaves.size()) < k
                                ? kInf
                                : out.leaves.back().first;
    if (cost <= prune_at) {
      if (level > 0) {
        for (int j = 0; j < level; ++j) acc(level - 1, j) = acc(level, j) + l(level, j) * g;
        --level;
        dist(level) = cost;
        cond(level) = w_r(level) + acc(level, level);
        z(level) = static_cast<int>(std::lround(cond(level)));
        step(level) = sign_step(cond(level) - z(level));
        continue;
      }
      push_leaf(cost, z);
      z(level) += step(level);
      step(level) = -step(level) - sign_step(step(level));
      continue;
    }
    if (level == n - 1) break;
    ++level;
    z(level) += step(level);
    step(level) = -step(level) - sign_step(step(level));
  }
  return out;
}

double quadratic_cost(const Mat& s, const Vec& e) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("ILS covariance is not positive definite");
  return e.dot(llt.solve(e));
}

void check_problem(const Vec& r, const Mat& s) {
  if (s.rows() != s.cols() || s.rows() != r.size()) {
    throw ConfigError("ILS problem dimensions are inconsistent");
  }
  if (s.size() > 0) {
    const double scale = s.cwiseAbs().maxCoeff();
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (scale + 1.0)) {
      throw NumericalError("ILS covariance is not symmetric");
    }
  }
}

}  // namespace

Decorrelation decorrelate(const Mat& s_in) {
  const int n = static_cast<int>(s_in.rows());
  if (n != s_in.cols()) throw ConfigError("decorrelate needs a square matrix");
  Decorrelation dec;
  if (n == 0) {
    dec.z = dec.transform = dec.s_reduced = Mat(0, 0);
    return dec;
  }
  const Mat s = 0.5 * (s_in + s_in.transpose());
  dec.condition_before = spd_condition(s);

  // Basis factor: cost(z) = ||r_f (z - r)||^2 with r_f' r_f = s^{-1}.
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("ILS covariance is not positive definite");
  const Mat lower = llt.matrixL();
  Mat basis =
      lower.triangularView<Eigen::Lower>().solve(Mat::Identity(n, n));  // lower triangular
  Eigen::HouseholderQR<Mat> qr(basis);
  Mat r_f = qr.matrixQR().triangularView<Eigen::Upper>();

  Mat t = Mat::Identity(n, n);
  Mat tinv = Mat::Identity(n, n);
  const double delta = 0.99;
  int k = 1;
  long long guard = 1000 + 200LL * n * n * n;
  while (k < n) {
    if (--guard < 0) throw NumericalError("ILS reduction failed to converge");
    size_reduce(r_f, t, tinv, k - 1, k);
    const double lhs = delta * r_f(k - 1, k - 1) * r_f(k - 1, k - 1);
    const double rhs = r_f(k - 1, k) * r_f(k - 1, k) + r_f(k, k) * r_f(k, k);
    if (lhs > rhs) {
      r_f.col(k - 1).swap(r_f.col(k));
      t.col(k - 1).swap(t.col(k));
      tinv.row(k - 1).swap(tinv.row(k));
      retriangularize(r_f, k);
      k = std::max(k - 1, 1);
    } else {
      for (int i = k - 2; i >= 0; --i) size_reduce(r_f, t, tinv, i, k);
      ++k;
    }
  }

  dec.transform = t;
  dec.z = tinv.transpose();
  dec.s_reduced = tinv * s * tinv.transpose();
  dec.s_reduced = 0.5 * (dec.s_reduced + dec.s_reduced.transpose()).eval();
  dec.condition_after = spd_condition(dec.s_reduced);
  return dec;
}

IlsSolution solve_with(const Decorrelation& dec, const Mat& s, const Vec& r) {
  const int n = static_cast<int>(r.size());
  IlsSolution sol;
  sol.stats.condition_before = dec.condition_before;
  sol.stats.condition_after = dec.condition_after;
  if (n == 0) {
    sol.z = VecI(0);
    sol.cost = 0.0;
    return sol;
  }
  Mat l;
  Vec d;
  factor_ltdl(dec.s_reduced, l, d);
  const Vec w_r = dec.z.transpose() * r;
  const SearchOutput res = se_search(l, d, w_r, dec.transform, false);
  sol.stats.nodes_visited = res.nodes;
  sol.z = map_to_original(dec.transform, res.best);
  sol.cost = quadratic_cost(s, r - sol.z.cast<double>());
  return sol;
}

std::vector<IlsSolution> solve_k_best(const Decorrelation& dec, const Mat& s, const Vec& r,
                                      int k) {
  if (k < 1) throw ConfigError("solve_k_best needs k >= 1");
  const int n = static_cast<int>(r.size());
  if (n == 0) {
    IlsSolution sol;
    sol.z = VecI(0);
    sol.cost = 0.0;
    return {sol};
  }
  Mat l;
  Vec d;
  factor_ltdl(dec.s_reduced, l, d);
  const Vec w_r = dec.z.transpose() * r;
  const KBestOutput res = se_search_k(l, d, w_r, k);
  std::vector<IlsSolution> out;
  out.reserve(res.leaves.size());
  for (const auto& [cost, w] : res.leaves) {
    IlsSolution sol;
    sol.z = map_to_original(dec.transform, w);
    sol.cost = quadratic_cost(s, r - sol.z.cast<double>());
    sol.stats.nodes_visited = res.nodes;
    sol.stats.condition_before = dec.condition_before;
    sol.stats.condition_after = dec.condition_after;
    out.push_back(std::move(sol));
  }
  return out;
}

IlsSolution solve(const IlsProblem& p) {
  check_problem(p.r, p.S);
  const int n = static_cast<int>(p.r.size());
  IlsSolution sol;
  if (n == 0) {
    sol.z = VecI(0);
    sol.cost = 0.0;
    return sol;
  }
  const Decorrelation dec = decorrelate(p.S);
  Mat l;
  Vec d;
  factor_ltdl(dec.s_reduced, l, d);
  const Vec w_r = dec.z.transpose() * p.r;
  const SearchOutput res = se_search(l, d, w_r, dec.transform, true);
  sol.stats.nodes_visited = res.nodes;
  sol.stats.condition_before = dec.condition_before;
  sol.stats.condition_after = dec.condition_after;
  sol.z = map_to_original(dec.transform, res.best);
  sol.cost = quadratic_cost(p.S, p.r - sol.z.cast<double>());
  if (res.have_second) {
    sol.second_best = map_to_original(dec.transform, res.second);
    sol.second_cost = quadratic_cost(p.S, p.r - sol.second_best->cast<double>());
  }
  return sol;
}

IlsSolution brute_force(const IlsProblem& p, int box_radius) {
  check_problem(p.r, p.S);
  const int n = static_cast<int>(p.r.size());
  if (n > 8) throw ConfigError("brute_force is guarded to n <= 8");
  if (box_radius < 0) throw ConfigError("brute_force box_radius must be nonnegative");
  IlsSolution sol;
  if (n == 0) {
    sol.z = VecI(0);
    sol.cost = 0.0;
    return sol;
  }
  const long long side = 2LL * box_radius + 1;
  long long points = 1;
  for (int i = 0; i < n; ++i) {
    points *= side;
    if (points > 40'000'000LL) throw ConfigError("brute_force box too large");
  }
  const Mat w = inverse_spd(0.5 * (p.S + p.S.transpose()), "brute_force covariance");
  VecI center(n);
  for (int i = 0; i < n; ++i) center(i) = static_cast<int>(std::lround(p.r(i)));

  VecI offset = VecI::Constant(n, -box_radius);
  VecI best(n), second(n);
  double best_cost = kInf, second_cost = kInf;
  bool have_best = false, have_second = false;
  Vec e(n);
  while (true) {
    const VecI z = center + offset;
    e = p.r - z.cast<double>();
    const double cost = e.dot(w * e);
    if (!have_best || cost < best_cost) {
      if (have_best) {
        second = best;
        second_cost = best_cost;
        have_second = true;
      }
      best = z;
      best_cost = cost;
      have_best = true;
    } else if (cost < second_cost) {
      second = z;
      second_cost = cost;
      have_second = true;
    }
    // Odometer in lexicographic order, first coordinate most significant, so
    // the first minimum found is the lexicographically smallest.
    int i = n - 1;
    while (i >= 0 && offset(i) == box_radius) {
      offset(i) = -box_radius;
      --i;
    }
    if (i < 0) break;
    offset(i) += 1;
  }
  sol.z = best;
  sol.cost = best_cost;
  sol.stats.nodes_visited = points;
  if (have_second) {
    sol.second_best = second;
    sol.second_cost = second_cost;
  }
  return sol;
}

}  // namespace mbcpp
