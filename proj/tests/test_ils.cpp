#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mbcpp/ils.hpp"
#include "mbcpp/rng.hpp"
#include "oracles.hpp"

using namespace mbcpp;

TEST_CASE("identity covariance reduces to componentwise rounding") {
  IlsProblem p;
  p.S = Mat::Identity(2, 2);
  p.r = Vec(2);
  p.r << 0.4, -0.6;
  const IlsSolution sol = solve(p);
  CHECK(sol.z(0) == 0);
  CHECK(sol.z(1) == -1);
  CHECK(sol.cost == doctest::Approx(0.32).epsilon(1e-12));
  const IlsSolution bf = brute_force(p, 2);
  CHECK((bf.z - sol.z).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("correlated two-dimensional problems match hand-computed optima") {
  IlsProblem p;
  p.S = Mat(2, 2);
  p.S << 0.1, 0.09, 0.09, 0.1;
  p.r = Vec(2);

  p.r << 0.5, 0.4;
  IlsSolution bf = brute_force(p, 3);
  CHECK(bf.z(0) == 0);
  CHECK(bf.z(1) == 0);
  CHECK(bf.cost == doctest::Approx(2.631578947368421).epsilon(1e-9));
  IlsSolution sol = solve(p);
  CHECK((sol.z - bf.z).cwiseAbs().maxCoeff() == 0);
  CHECK(sol.cost == doctest::Approx(bf.cost).epsilon(1e-12));

  p.r << 0.6, 0.55;
  bf = brute_force(p, 3);
  CHECK(bf.z(0) == 1);
  CHECK(bf.z(1) == 1);
  CHECK(bf.cost == doctest::Approx(2.0263157894736842).epsilon(1e-9));
  sol = solve(p);
  CHECK((sol.z - bf.z).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("brute force with radius zero rounds the float solution") {
  Rng rng(5);
  IlsProblem p;
  p.S = oracles::random_spd(rng, 3);
  p.r = Vec(3);
  p.r << 1.4, -2.6, 0.2;
  const IlsSolution sol = brute_force(p, 0);
  CHECK(sol.z(0) == 1);
  CHECK(sol.z(1) == -3);
  CHECK(sol.z(2) == 0);
}

TEST_CASE("decorrelation of a diagonal covariance is a permutation") {
  Mat s = Vec::LinSpaced(4, 4.0, 1.0).asDiagonal();
  const Decorrelation dec = decorrelate(s);
  CHECK(std::abs(std::abs(dec.z.determinant()) - 1.0) < 1e-9);
  // Reduced covariance stays diagonal with the same entries in some order.
  Mat off = dec.s_reduced;
  off.diagonal().setZero();
  CHECK(off.cwiseAbs().maxCoeff() < 1e-12);
  Vec d1 = s.diagonal();
  Vec d2 = dec.s_reduced.diagonal();
  std::sort(d1.data(), d1.data() + d1.size());
  std::sort(d2.data(), d2.data() + d2.size());
  CHECK((d1 - d2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decorrelation improves the conditioning of a correlated pair") {
  Mat s(2, 2);
  s << 1.0, 0.95, 0.95, 1.0;
  const Decorrelation dec = decorrelate(s);
  CHECK(dec.condition_after < dec.condition_before);
  CHECK((dec.z.transpose() * s * dec.z - dec.s_reduced).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decorrelation transforms are unimodular") {
  Rng rng(77);
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform() * 7);
    const Mat s = oracles::random_spd(rng, n);
    const Decorrelation dec = decorrelate(s);
    CHECK(std::abs(std::abs(dec.z.determinant()) - 1.0) < 1e-6);
    CHECK(std::abs(std::abs(dec.transform.determinant()) - 1.0) < 1e-6);
    // transform maps reduced-domain integers to the original domain
    CHECK((dec.z.transpose() * dec.transform - Mat::Identity(n, n)).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("sphere search equals brute force on random problems") {
  Rng rng(3);
  int equal_cost = 0;
  const int trials = 600;
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform() * 6);
    IlsProblem p;
    p.S = oracles::random_spd(rng, n);
    p.r = Vec(n);
    for (int i = 0; i < n; ++i) p.r(i) = 4.0 * rng.gaussian();
    const IlsSolution sol = solve(p);
    IlsSolution bf = brute_force(p, 2);
    if (sol.cost < bf.cost - 1e-9 * (1.0 + bf.cost)) bf = brute_force(p, 4);
    CHECK(sol.cost <= bf.cost + 1e-9 * (1.0 + bf.cost));
    if (std::abs(sol.cost - bf.cost) <= 1e-9 * (1.0 + bf.cost)) {
      ++equal_cost;
      CHECK((sol.z - bf.z).cwiseAbs().maxCoeff() == 0);
    }
  }
  CHECK(equal_cost == trials);
}

TEST_CASE("lattice translation invariance is exact") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform() * 4);
    IlsProblem p;
    p.S = oracles::random_spd(rng, n);
    p.r = Vec(n);
    for (int i = 0; i < n; ++i) p.r(i) = 3.0 * rng.gaussian();
    VecI shift(n);
    for (int i = 0; i < n; ++i) shift(i) = static_cast<int>(std::lround(5.0 * rng.gaussian()));
    IlsProblem q = p;
    q.r += shift.cast<double>();
    const IlsSolution a = solve(p);
    const IlsSolution b = solve(q);
    CHECK((b.z - a.z - shift).cwiseAbs().maxCoeff() == 0);
  }
}

TEST_CASE("positive scaling of the covariance leaves the solution unchanged") {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform() * 4);
    IlsProblem p;
    p.S = oracles::random_spd(rng, n);
    p.r = Vec(n);
    for (int i = 0; i < n; ++i) p.r(i) = 3.0 * rng.gaussian();
    for (double alpha : {0.25, 2.0, 8.0}) {
      IlsProblem q = p;
      q.S *= alpha;
      const IlsSolution a = solve(p);
      const IlsSolution b = solve(q);
      CHECK((b.z - a.z).cwiseAbs().maxCoeff() == 0);
    }
  }
}

TEST_CASE("decorrelation preserves the solution") {
  Rng rng(17);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform() * 4);
    const Mat s = oracles::random_spd(rng, n);
    Vec r(n);
    for (int i = 0; i < n; ++i) r(i) = 3.0 * rng.gaussian();
    const Decorrelation dec = decorrelate(s);
    const IlsSolution direct = solve(IlsProblem{r, s});
    // Solve the reduced problem explicitly and map back.
    const Vec r_red = dec.z.transpose() * r;
    const IlsSolution reduced = solve(IlsProblem{r_red, dec.s_reduced});
    const Vec mapped = dec.transform * reduced.z.cast<double>();
    for (int i = 0; i < n; ++i) {
      CHECK(static_cast<int>(std::llround(mapped(i))) == direct.z(i));
    }
  }
}

TEST_CASE("empty problems return an empty solution") {
  IlsProblem p;
  p.S = Mat(0, 0);
  p.r = Vec(0);
  const IlsSolution sol = solve(p);
  CHECK(sol.z.size() == 0);
  CHECK(sol.cost == 0.0);
}

TEST_CASE("second best candidate has the second cost") {
  Rng rng(19);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    IlsProblem p;
    p.S = oracles::random_spd(rng, n);
    p.r = Vec(n);
    for (int i = 0; i < n; ++i) p.r(i) = 2.0 * rng.gaussian();
    const IlsSolution sol = solve(p);
    REQUIRE(sol.second_best.has_value());
    CHECK(sol.second_cost >= sol.cost);
    const IlsSolution bf = brute_force(p, 2);
    REQUIRE(bf.second_best.has_value());
    CHECK(sol.second_cost == doctest::Approx(bf.second_cost).epsilon(1e-9));
  }
}

TEST_CASE("k-best enumeration returns ordered exact candidates") {
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    const Mat s = oracles::random_spd(rng, n);
    Vec r(n);
    for (int i = 0; i < n; ++i) r(i) = 2.0 * rng.gaussian();
    const Decorrelation dec = decorrelate(s);
    const auto kb = solve_k_best(dec, s, r, 4);
    REQUIRE(kb.size() >= 1);
    const IlsSolution best = solve(IlsProblem{r, s});
    CHECK(kb[0].cost == doctest::Approx(best.cost).epsilon(1e-9));
    for (std::size_t i = 1; i < kb.size(); ++i) CHECK(kb[i].cost >= kb[i - 1].cost - 1e-12);
  }
}

TEST_CASE("non positive definite input raises a numerical error") {
  Mat s(2, 2);
  s << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(decorrelate(s), NumericalError);
  CHECK_THROWS_AS(solve(IlsProblem{Vec::Zero(2), s}), NumericalError);
}

TEST_CASE("brute force guards its box size") {
  IlsProblem p;
  p.S = Mat::Identity(9, 9);
  p.r = Vec::Zero(9);
  CHECK_THROWS_AS(brute_force(p, 1), ConfigError);
}
