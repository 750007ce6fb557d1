#include <cmath>

#include "doctest.h"
#include "mbcpp/scenario.hpp"
#include "oracles.hpp"

using namespace mbcpp;

TEST_CASE("delay and phase noise floors match the closed forms") {
  // Independent calculator evaluations of the variance expressions.
  CHECK(delay_noise_std_m(100.0, 20e6) == doctest::Approx(0.58437).epsilon(2e-4));
  const double lambda = speed_of_light / 3.5e9;
  CHECK(phase_noise_std_m(100.0, lambda) == doctest::Approx(9.6396e-4).epsilon(2e-4));
}

TEST_CASE("default link budget chain reproduces the reference SNR") {
  ScenarioConfig cfg = sample_default_scenario(1, 1);
  cfg.bs_positions[0] = Vec::Zero(2);
  cfg.bs_positions[0](0) = 100.0;
  const LinkBudget budget = compute_link_budget(cfg);
  CHECK(budget.snr(0, 0) == doctest::Approx(239.17).epsilon(2e-3));
  CHECK(10.0 * std::log10(budget.snr(0, 0)) == doctest::Approx(23.8).epsilon(1e-2));
}

TEST_CASE("noise stds scale as inverse square root of power") {
  ScenarioConfig cfg = sample_default_scenario(3, 4);
  const LinkBudget a = compute_link_budget(cfg);
  for (BandConfig& b : cfg.bands) b.tx_power_w *= 2.0;
  const LinkBudget b = compute_link_budget(cfg);
  for (int m = 0; m < cfg.num_bs(); ++m) {
    CHECK(b.sigma_tau_m(m, 0) ==
          doctest::Approx(a.sigma_tau_m(m, 0) / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(b.sigma_theta_m(m, 0) ==
          doctest::Approx(a.sigma_theta_m(m, 0) / std::sqrt(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("sigma_tau ignores the carrier, sigma_theta ignores the subcarrier count") {
  ScenarioConfig cfg = sample_default_scenario(4, 3);
  const LinkBudget a = compute_link_budget(cfg);
  ScenarioConfig carrier_shift = cfg;
  carrier_shift.bands[0].carrier_frequency_hz = 17e9;
  const LinkBudget b = compute_link_budget(carrier_shift);
  CHECK(b.sigma_tau_m(0, 0) == a.sigma_tau_m(0, 0));

  ScenarioConfig count_shift = cfg;
  count_shift.bands[0].num_subcarriers = 1224;  // SNR is invariant to N at fixed power
  const LinkBudget c = compute_link_budget(count_shift);
  CHECK(c.sigma_theta_m(0, 0) == a.sigma_theta_m(0, 0));
  CHECK(c.sigma_tau_m(0, 0) == doctest::Approx(a.sigma_tau_m(0, 0) / 2.0).epsilon(1e-12));
}

TEST_CASE("default scenario sampling is reproducible and matches the defaults") {
  const ScenarioConfig a = sample_default_scenario(42, 6);
  const ScenarioConfig b = sample_default_scenario(42, 6);
  const ScenarioConfig c = sample_default_scenario(43, 6);
  REQUIRE(a.num_bs() == 6);
  CHECK(a.bands[0].subcarrier_spacing_hz == 30e3);
  CHECK(a.bands[0].num_subcarriers == 612);
  CHECK(a.bands[0].tx_power_w == doctest::Approx(1e-3));
  CHECK(a.noise_psd_w_per_hz == doctest::Approx(dbm_to_watts(-174.0 + 13.0)).epsilon(1e-12));
  CHECK(a.ue_clock_bias_s == doctest::Approx(1e-7));
  for (int m = 0; m < 6; ++m) {
    CHECK((a.bs_positions[m] - b.bs_positions[m]).norm() == 0.0);
  }
  bool any_diff = false;
  for (int m = 0; m < 6; ++m) {
    any_diff = any_diff || (a.bs_positions[m] - c.bs_positions[m]).norm() > 0;
  }
  CHECK(any_diff);
}

TEST_CASE("under-determined deployments are constructible but flagged") {
  const ScenarioConfig cfg = sample_default_scenario(7, 2);
  CHECK_NOTHROW(cfg.validate());
  CHECK_FALSE(cfg.is_identifiable());
  CHECK(sample_default_scenario(7, 6).is_identifiable());
}

TEST_CASE("band-dependent mode needs two BSs per used band") {
  ScenarioConfig cfg = sample_default_scenario(9, 4, {3.5e9, 12e9});
  cfg.assignment.col(1).setConstant(false);
  cfg.assignment(0, 1) = true;  // band 1 has a single BS
  CHECK_FALSE(cfg.is_identifiable());
  cfg.phase_offset_mode = PhaseOffsetMode::band_independent;
  CHECK(cfg.is_identifiable());
}

TEST_CASE("per-BS total power splits across assigned bands") {
  ScenarioConfig cfg = sample_default_scenario(5, 4, {3.5e9, 12e9, 28e9});
  cfg.assignment(1, 2) = false;
  set_total_power_dbm(cfg, 0.0);
  CHECK(cfg.tx_power_w_for(0, 0) == doctest::Approx(1e-3 / 3.0));
  CHECK(cfg.tx_power_w_for(1, 0) == doctest::Approx(1e-3 / 2.0));
}

TEST_CASE("scenario JSON round trip preserves the configuration") {
  ScenarioConfig cfg = sample_default_scenario(11, 5, {3.5e9, 28e9});
  cfg.assignment(2, 1) = false;
  cfg.bs_clock_std_s(3) = 1e-10;
  cfg.phase_offset_mode = PhaseOffsetMode::band_independent;
  set_total_power_dbm(cfg, -3.0);
  const ScenarioConfig back = parse_scenario_json(scenario_to_json(cfg));
  CHECK(back.num_bs() == cfg.num_bs());
  CHECK(back.num_bands() == cfg.num_bands());
  CHECK(back.assignment(2, 1) == false);
  CHECK(back.bs_clock_std_s(3) == doctest::Approx(1e-10));
  CHECK(back.phase_offset_mode == PhaseOffsetMode::band_independent);
  CHECK(back.power_mode == PowerMode::per_bs_total);
  CHECK(back.total_tx_power_w == doctest::Approx(cfg.total_tx_power_w));
  CHECK((back.ue_position - cfg.ue_position).norm() == 0.0);
  for (int m = 0; m < cfg.num_bs(); ++m) {
    CHECK((back.bs_positions[m] - cfg.bs_positions[m]).norm() == 0.0);
  }
}

TEST_CASE("decibel convenience fields are converted at load") {
  const std::string text = R"({
    "ue_position": [0, 0],
    "bs_positions": [[100, 0], [0, 100], [-100, 0], [0, -100]],
    "bands": [{"carrier_frequency_ghz": 3.5, "subcarrier_spacing_khz": 30,
               "num_subcarriers": 612, "tx_power_dbm": 0}],
    "noise_psd_dbm_hz": -174, "noise_figure_db": 13,
    "bs_clock_std_s": 0
  })";
  const ScenarioConfig cfg = parse_scenario_json(text);
  CHECK(cfg.bands[0].carrier_frequency_hz == doctest::Approx(3.5e9));
  CHECK(cfg.bands[0].tx_power_w == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(cfg.noise_psd_w_per_hz == doctest::Approx(7.9433e-20).epsilon(1e-4));
  CHECK(cfg.bs_clock_std_s.size() == 4);
}

TEST_CASE("config errors") {
  ScenarioConfig cfg = sample_default_scenario(1, 4);
  cfg.bands[0].tx_power_w = 0.0;
  CHECK_THROWS_AS(compute_link_budget(cfg), ConfigError);

  ScenarioConfig coincident = sample_default_scenario(1, 4);
  coincident.bs_positions[0] = coincident.ue_position;
  CHECK_THROWS_AS(coincident.validate(), GeometryError);

  CHECK_THROWS_AS(parse_scenario_json("{"), ConfigError);
  CHECK_THROWS_AS(parse_scenario_json("{}"), ConfigError);
}
