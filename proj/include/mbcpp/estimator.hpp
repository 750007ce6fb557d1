#pragma once

#include <cstdint>
#include <vector>

#include "mbcpp/model.hpp"

namespace mbcpp {

enum class SearchSampling { gaussian, deterministic_grid };

struct EstimatorConfig {
  int n_iter = 2;        // second-stage refinement iterations
  int n_search = 1;      // candidate initial points (1 = no search)
  double search_scale = 1.0;  // multiplier on the delay-only covariance
  SearchSampling sampling = SearchSampling::gaussian;
  std::uint64_t seed = 0;
  double step_tolerance_m = 1e-9;  // early exit when the position update stalls
};

struct EstimateResult {
  Vec x_hat;
  double clock_bias_s = 0.0;
  Vec phase_offsets_cycles;  // combined reference offsets (cycles)
  VecI z_d;                  // resolved differential ambiguities
  double ml_cost = 0.0;      // full weighted residual at the returned solution
  Vec stage1_x;
  int candidates_evaluated = 0;
  std::vector<double> candidate_costs;
  std::vector<double> iteration_costs;  // full weighted residual after each iteration
};

/// Stage 1: closed-form TDoA position from the delay rows, differenced
/// against the first band / first BS pair.  Falls back to a coarse grid
/// search over a 1 km box on degenerate geometry.
Vec stage1_tdoa(const MeasurementSet& meas, const ScenarioConfig& cfg);

/// Stage 2: iterated linearized WLS with ILS ambiguity resolution starting
/// from state0.  When fixed_z_d is non-null the ILS step is skipped and the
/// given integers are substituted instead.  lin_offset_sq_m2 is the expected
/// squared distance of state0 from the truth (negative derives it from the
/// delay-only covariance); it seeds the first iteration's linearization-error
/// allowance, which decays to zero at the final iteration.
EstimateResult stage2_refine(const MeasurementSet& meas, const ScenarioConfig& cfg,
                             const Vec& state0, const EstimatorConfig& ecfg,
                             const VecI* fixed_z_d = nullptr, double lin_offset_sq_m2 = -1.0);

/// Candidate search around the stage-1 point: candidate 1 is the stage-1
/// state itself, the rest are drawn from N(x1, eps * Sigma_delay(x1)); each is
/// refined by stage 2 and the lowest full weighted residual wins.
EstimateResult search_refine(const MeasurementSet& meas, const ScenarioConfig& cfg,
                             const EstimatorConfig& ecfg);

/// Full two-stage pipeline (stage 1 + search-refined stage 2); the
/// band-dependent or band-independent model is selected from the scenario.
EstimateResult estimate(const MeasurementSet& meas, const ScenarioConfig& cfg,
                        const EstimatorConfig& ecfg);

}  // namespace mbcpp
