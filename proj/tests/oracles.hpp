#pragma once

// Test-side oracles, independent of the library implementation paths they
// check.

#include <cmath>
#include <vector>

#include "mbcpp/model.hpp"
#include "mbcpp/rng.hpp"

namespace oracles {

using namespace mbcpp;

// Finite-difference FIM of the delay-only model: J = G' W G with G the
// numerical Jacobian of f_j(x, B) = |x - p_j| + c B, central differences.
inline Mat fd_delay_fim(const ScenarioConfig& cfg, const Vec& x_ue, double step = 1e-4) {
  const PairList pl = canonical_pairs(cfg);
  const LinkBudget budget = compute_link_budget(cfg);
  const Vec sigma = pair_sigma_tau(budget, pl);
  const int n = pl.size();
  const int nd = cfg.n_dim();
  Mat jac(n, nd + 1);
  for (int j = 0; j < n; ++j) {
    const Vec& p = cfg.bs_positions[pl.pairs[j].bs];
    for (int a = 0; a < nd; ++a) {
      Vec hi = x_ue, lo = x_ue;
      hi(a) += step;
      lo(a) -= step;
      jac(j, a) = ((hi - p).norm() - (lo - p).norm()) / (2.0 * step);
    }
    jac(j, nd) = speed_of_light;  // f is exactly linear in the clock bias
  }
  Mat fim = Mat::Zero(nd + 1, nd + 1);
  for (int j = 0; j < n; ++j) {
    fim += jac.row(j).transpose() * jac.row(j) / (sigma(j) * sigma(j));
  }
  return fim;
}

// Dense relaxed-model FIM over [x, B, z_rlx] assembled from scratch and
// inverted; returns the ambiguity block of the inverse.
inline Mat dense_relaxed_cov(const ScenarioConfig& cfg, const Vec& x_ue) {
  const PairList pl = canonical_pairs(cfg);
  const LinkBudget budget = compute_link_budget(cfg);
  const Vec var_tau = pair_sigma_tau(budget, pl).cwiseAbs2();
  const Vec var_theta = pair_sigma_theta(budget, pl).cwiseAbs2();
  const int n = pl.size();
  const int nd = cfg.n_dim();
  Mat a(2 * n, nd + 1 + n);
  a.setZero();
  for (int j = 0; j < n; ++j) {
    const Vec diff = x_ue - cfg.bs_positions[pl.pairs[j].bs];
    const Vec u = diff / diff.norm();
    a.row(j).head(nd) = u.transpose();
    a(j, nd) = speed_of_light;
    a.row(n + j).head(nd) = u.transpose();
    a(n + j, nd) = speed_of_light;
    a(n + j, nd + 1 + j) = cfg.bands[pl.pairs[j].band].wavelength_m();
  }
  Vec w(2 * n);
  w << var_tau.cwiseInverse(), var_theta.cwiseInverse();
  const Mat fim = a.transpose() * w.asDiagonal() * a;
  const Mat cov = fim.inverse();
  return cov.bottomRightCorner(n, n);
}

// Delay-only ML position by exhaustive coarse-to-fine grid refinement, clock
// profiled out in closed form.
inline Vec grid_delay_ml(const MeasurementSet& meas, const ScenarioConfig& cfg, Vec center,
                         double half_width) {
  const int n = meas.pl.size();
  std::vector<const Vec*> pos(n);
  for (int j = 0; j < n; ++j) pos[j] = &cfg.bs_positions[meas.pl.pairs[j].bs];
  const Vec w = meas.sigma_tau.cwiseAbs2().cwiseInverse();
  const auto cost = [&](const Vec& x) {
    Vec r(n);
    for (int j = 0; j < n; ++j) r(j) = meas.y_tau(j) - (x - *pos[j]).norm();
    const double b = w.dot(r) / w.sum();
    return w.dot((r.array() - b).square().matrix());
  };
  Vec best = center;
  for (int stage = 0; stage < 14; ++stage) {
    double best_cost = cost(best);
    Vec local = best;
    for (int i = -20; i <= 20; ++i) {
      for (int j = -20; j <= 20; ++j) {
        Vec x = best;
        x(0) += half_width * i / 20.0;
        x(1) += half_width * j / 20.0;
        const double c = cost(x);
        if (c < best_cost) {
          best_cost = c;
          local = x;
        }
      }
    }
    best = local;
    half_width /= 8.0;
  }
  return best;
}

// Random well-posed scenario for property tests.
inline ScenarioConfig random_scenario(std::uint64_t seed, int max_bands = 3) {
  Rng rng(seed);
  const int m = 4 + static_cast<int>(rng.uniform() * 5);   // 4..8
  const int k = 1 + static_cast<int>(rng.uniform() * max_bands);
  std::vector<double> freqs;
  for (int i = 0; i < k; ++i) freqs.push_back(2.5e9 + rng.uniform() * 12.5e9);
  ScenarioConfig cfg = sample_default_scenario(derive_seed(seed, 1), m, freqs);
  return cfg;
}

inline Mat random_spd(Rng& rng, int n, double ridge = 0.05) {
  Mat a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
  }
  return a * a.transpose() + ridge * Mat::Identity(n, n);
}

}  // namespace oracles
