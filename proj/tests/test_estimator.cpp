#include <cmath>

#include "doctest.h"
#include "mbcpp/bounds.hpp"
#include "mbcpp/estimator.hpp"
#include "oracles.hpp"

using namespace mbcpp;

namespace {

MeasurementSet noise_free(const ScenarioConfig& cfg, std::uint64_t seed = 1) {
  SynthesisOptions opt;
  opt.noise_scale = 0.0;
  return synthesize_measurements(cfg, seed, opt);
}

Vec truth_state(const ScenarioConfig& cfg, const MeasurementSet& meas) {
  Vec s = Vec::Zero(state_dim(cfg));
  s.head(cfg.n_dim()) = cfg.ue_position;
  s(cfg.n_dim()) = cfg.ue_clock_bias_s;
  // Combined offsets: band offset plus the reference-pair ambiguity.
  const PairList pl = meas.pl;
  if (cfg.phase_offset_mode == PhaseOffsetMode::band_independent) {
    s(cfg.n_dim() + 1) = cfg.phase_offset_cycles(0) + meas.truth.z(0);
  } else {
    for (int b = 0; b < pl.num_used_bands(); ++b) {
      s(cfg.n_dim() + 1 + b) =
          cfg.phase_offset_cycles(pl.used_bands[b]) + meas.truth.z(pl.band_offset[b]);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("noise-free measurements give exact recovery") {
  const ScenarioConfig cfg = sample_default_scenario(1, 6, {3.5e9, 12e9});
  const MeasurementSet meas = noise_free(cfg);
  CHECK((stage1_tdoa(meas, cfg) - cfg.ue_position).norm() < 1e-6);

  EstimatorConfig ecfg;
  const EstimateResult res = estimate(meas, cfg, ecfg);
  CHECK((res.x_hat - cfg.ue_position).norm() < 1e-9);
  CHECK(res.clock_bias_s == doctest::Approx(cfg.ue_clock_bias_s).epsilon(1e-9));
}

TEST_CASE("starting at the truth is a fixed point with exact integers") {
  const ScenarioConfig cfg = sample_default_scenario(2, 6, {3.5e9, 12e9});
  const MeasurementSet meas = noise_free(cfg);
  const Vec s0 = truth_state(cfg, meas);
  EstimatorConfig ecfg;
  const EstimateResult res = stage2_refine(meas, cfg, s0, ecfg);
  CHECK((res.x_hat - cfg.ue_position).norm() < 1e-9);
  CHECK(res.ml_cost < 1e-9);

  Vec state = Vec::Zero(state_dim(cfg));
  state.head(2) = cfg.ue_position;
  const Mat d = build_matrices(cfg, state).d;
  const Vec zd_true = d * meas.truth.z.cast<double>();
  REQUIRE(res.z_d.size() == zd_true.size());
  for (int i = 0; i < res.z_d.size(); ++i) {
    CHECK(res.z_d(i) == static_cast<int>(std::llround(zd_true(i))));
  }
}

TEST_CASE("exactly determined TDoA matches the grid-refinement oracle") {
  ScenarioConfig cfg = sample_default_scenario(3, 3, {3.5e9});
  SynthesisOptions opt;
  opt.noise_scale = 1.0;
  const MeasurementSet meas = synthesize_measurements(cfg, 7, opt);
  const Vec x1 = stage1_tdoa(meas, cfg);
  const Vec xg = oracles::grid_delay_ml(meas, cfg, Vec::Zero(2), 400.0);
  CHECK((x1 - xg).norm() < 1e-3);
}

TEST_CASE("translation equivariance") {
  ScenarioConfig cfg = sample_default_scenario(4, 6, {3.5e9, 12e9});
  Vec shift(2);
  shift << 37.5, -12.25;
  ScenarioConfig moved = cfg;
  moved.ue_position += shift;
  for (Vec& p : moved.bs_positions) p += shift;
  // Identical noise: distances are unchanged, so the draws coincide.
  const MeasurementSet a = synthesize_measurements(cfg, 5);
  const MeasurementSet b = synthesize_measurements(moved, 5);
  EstimatorConfig ecfg;
  ecfg.seed = 9;
  const EstimateResult ra = estimate(a, cfg, ecfg);
  const EstimateResult rb = estimate(b, moved, ecfg);
  CHECK((rb.x_hat - ra.x_hat - shift).norm() < 1e-6);
}

TEST_CASE("clock equivariance") {
  ScenarioConfig cfg = sample_default_scenario(5, 6, {3.5e9, 12e9});
  cfg.ue_clock_bias_s = 0.0;
  ScenarioConfig shifted = cfg;
  const double delta = 2.5e-8;
  shifted.ue_clock_bias_s = delta;
  const MeasurementSet a = noise_free(cfg);
  const MeasurementSet b = noise_free(shifted);
  EstimatorConfig ecfg;
  const EstimateResult ra = estimate(a, cfg, ecfg);
  const EstimateResult rb = estimate(b, shifted, ecfg);
  CHECK((rb.x_hat - ra.x_hat).norm() < 1e-9);
  CHECK(rb.clock_bias_s - ra.clock_bias_s == doctest::Approx(delta).epsilon(1e-9));
}

TEST_CASE("single candidate search equals the plain two-stage pipeline") {
  const ScenarioConfig cfg = sample_default_scenario(6, 6, {3.5e9, 12e9});
  const MeasurementSet meas = synthesize_measurements(cfg, 11);
  EstimatorConfig ecfg;
  ecfg.seed = 3;
  const EstimateResult searched = search_refine(meas, cfg, ecfg);
  Vec s0 = Vec::Zero(state_dim(cfg));
  s0.head(2) = stage1_tdoa(meas, cfg);
  const EstimateResult plain = stage2_refine(meas, cfg, s0, ecfg);
  CHECK((searched.x_hat - plain.x_hat).norm() == 0.0);
  CHECK(searched.ml_cost == plain.ml_cost);
}

TEST_CASE("returned candidate minimizes the evaluated ML costs") {
  const ScenarioConfig cfg = sample_default_scenario(7, 6, {3.5e9, 12e9});
  for (auto sampling : {SearchSampling::gaussian, SearchSampling::deterministic_grid}) {
    EstimatorConfig ecfg;
    ecfg.n_search = 24;
    ecfg.seed = 17;
    ecfg.sampling = sampling;
    const MeasurementSet meas = synthesize_measurements(cfg, 13);
    const EstimateResult res = search_refine(meas, cfg, ecfg);
    REQUIRE_FALSE(res.candidate_costs.empty());
    for (double c : res.candidate_costs) CHECK(res.ml_cost <= c);
  }
}

TEST_CASE("final iteration cost does not exceed the first on most trials") {
  const ScenarioConfig cfg = sample_default_scenario(8, 6, {3.5e9, 12e9});
  int improved = 0, total = 0;
  for (int t = 0; t < 100; ++t) {
    const MeasurementSet meas = synthesize_measurements(cfg, derive_seed(100, t));
    EstimatorConfig ecfg;
    ecfg.n_iter = 3;
    ecfg.seed = derive_seed(7, t);
    const EstimateResult res = estimate(meas, cfg, ecfg);
    if (res.iteration_costs.size() < 2) continue;
    ++total;
    if (res.iteration_costs.back() <= res.iteration_costs.front() * (1.0 + 1e-9)) ++improved;
  }
  REQUIRE(total > 50);
  CHECK(static_cast<double>(improved) / total >= 0.95);
}

TEST_CASE("ground-truth integers give known-integer level accuracy") {
  const ScenarioConfig cfg = sample_default_scenario(12, 6, {3.5e9, 12e9});
  const double peb = known_integer_fim(cfg, cfg.ue_position).peb_m;
  Vec state = Vec::Zero(state_dim(cfg));
  state.head(2) = cfg.ue_position;
  const Mat d = build_matrices(cfg, state).d;
  double acc = 0.0;
  const int trials = 150;
  for (int t = 0; t < trials; ++t) {
    const MeasurementSet meas = synthesize_measurements(cfg, derive_seed(200, t));
    const Vec zd = d * meas.truth.z.cast<double>();
    VecI z_true(zd.size());
    for (int i = 0; i < zd.size(); ++i) z_true(i) = static_cast<int>(std::llround(zd(i)));
    Vec s0 = Vec::Zero(state_dim(cfg));
    s0.head(2) = stage1_tdoa(meas, cfg);
    EstimatorConfig ecfg;
    const EstimateResult res = stage2_refine(meas, cfg, s0, ecfg, &z_true);
    acc += (res.x_hat - cfg.ue_position).squaredNorm();
  }
  const double rmse = std::sqrt(acc / trials);
  CHECK(rmse < 1.25 * peb);
  CHECK(rmse > 0.75 * peb);
}

TEST_CASE("band-independent pipeline handles disjoint assignments") {
  // Six bands, one BS each: feasible only with a shared phase offset.
  std::vector<double> freqs;
  for (int i = 0; i < 6; ++i) freqs.push_back(3.5e9 + 4e9 * i);
  ScenarioConfig cfg = sample_default_scenario(15, 6, freqs);
  cfg.assignment.setConstant(6, 6, false);
  for (int m = 0; m < 6; ++m) cfg.assignment(m, m) = true;
  cfg.phase_offset_mode = PhaseOffsetMode::band_independent;
  for (BandConfig& b : cfg.bands) b.num_subcarriers = 3168;
  set_total_power_dbm(cfg, 10.0);
  const MeasurementSet meas = noise_free(cfg);
  EstimatorConfig ecfg;
  const EstimateResult res = estimate(meas, cfg, ecfg);
  CHECK((res.x_hat - cfg.ue_position).norm() < 1e-6);

  // The same assignment is rejected in band-dependent mode.
  ScenarioConfig bad = cfg;
  bad.phase_offset_mode = PhaseOffsetMode::band_dependent;
  CHECK_THROWS_AS(estimate(noise_free(bad), bad, ecfg), IdentifiabilityError);
}

TEST_CASE("identifiability errors name the offending configuration") {
  ScenarioConfig cfg = sample_default_scenario(16, 4, {3.5e9, 12e9});
  cfg.assignment.col(1).setConstant(false);
  cfg.assignment(1, 1) = true;
  try {
    const MeasurementSet meas = synthesize_measurements(cfg, 3);
    estimate(meas, cfg, EstimatorConfig{});
    FAIL("expected an identifiability error");
  } catch (const IdentifiabilityError& e) {
    CHECK(std::string(e.what()).find("band 1") != std::string::npos);
  }
}

TEST_CASE("three-dimensional scenarios are supported") {
  ScenarioConfig cfg;
  cfg.ue_position = Vec::Zero(3);
  Rng rng(33);
  for (int m = 0; m < 7; ++m) {
    Vec p(3);
    p << rng.gaussian(0, 100.0), rng.gaussian(0, 100.0), rng.gaussian(0, 40.0);
    cfg.bs_positions.push_back(p);
  }
  cfg.bands = {BandConfig{}, BandConfig{}};
  cfg.bands[1].carrier_frequency_hz = 12e9;
  cfg.assignment.setConstant(7, 2, true);
  cfg.ue_phase_offsets_cycles = Vec::Constant(2, 0.25);
  cfg.bs_clock_std_s = Vec::Zero(7);
  const MeasurementSet meas = noise_free(cfg);
  EstimatorConfig ecfg;
  const EstimateResult res = estimate(meas, cfg, ecfg);
  CHECK((res.x_hat - cfg.ue_position).norm() < 1e-6);
}
