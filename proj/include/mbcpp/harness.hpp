#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbcpp/estimator.hpp"
#include "mbcpp/signal.hpp"

namespace mbcpp {

/// Root-mean-square position error over a set of trials.
double rmse(const std::vector<Vec>& estimates, const Vec& truth);
double rmse_from_errors(const std::vector<double>& errors_m);

/// One sweep: a base scenario, a swept parameter, metrics to evaluate.
///
/// Supported parameter paths:
///   bands[i].carrier_frequency_hz   carrier of band i
///   bands[*].num_subcarriers        bandwidth of every band
///   bands[*].tx_power_dbm           per-band power
///   total_tx_power_dbm              per-BS sum power (split across bands)
///   bs_clock_std_s                  clock-imperfection std of every BS
///   num_bands                       first v bands of band_pool, sum power kept
///   num_bs                          BS count; geometry drawn from geometry_seed
///   multipath.delta_tau_s           NLoS-LoS delay difference (signal layer)
///   multipath.nlos_ratio_db         NLoS-to-LoS power ratio (signal layer)
///   estimator.n_iter                second-stage iteration count
struct SweepSpec {
  std::string name;
  ScenarioConfig base;
  std::string parameter;
  std::vector<double> values;
  int trials = 200;
  std::vector<std::string> metrics;  // peb_delay, peb_known, peb_mi, int_err_rate,
                                     // rmse_stage1, rmse_final, est_int_err_rate, fail_rate
  std::uint64_t seed = 1;
  int n_mc_bound = 1000;
  EstimatorConfig estimator;
  MultipathSpec multipath;
  bool use_signal_layer = false;
  std::vector<BandConfig> band_pool;   // for parameter == "num_bands"
  std::uint64_t geometry_seed = 1;     // for parameter == "num_bs"
};

struct SweepRow {
  double value = 0.0;
  std::string metric;
  double result = 0.0;
  double std_error = 0.0;
};

struct SweepResult {
  std::string name;
  std::vector<SweepRow> rows;
  std::string config_hash;
  std::string version;
  std::uint64_t seed = 0;
};

/// Runs the sweep; failed points are recorded as NaN rows and the sweep
/// continues.  Deterministic for a fixed (spec, seed) pair.
SweepResult run_sweep(const SweepSpec& spec);

/// Applies a supported parameter path to a scenario/estimator pair.
void apply_sweep_value(const SweepSpec& spec, double value, ScenarioConfig& cfg,
                       EstimatorConfig& ecfg, MultipathSpec& mp);

std::string sweep_to_csv(const SweepResult& result);
std::string sweep_to_csv(const std::vector<SweepResult>& results);

/// Built-in experiment presets (fig2, fig3, fig4, fig5, fig6, fig7, fig8a,
/// fig8b, fig8c).  Each returns the curve bundle for that experiment; trials
/// <= 0 keeps the desk-scale default.  The `comment` output of each spec
/// names the reproduced experiment.
std::vector<SweepSpec> preset(const std::string& name, int trials, std::uint64_t seed);
std::vector<std::string> preset_names();

/// Generic single-curve sweep spec from JSON (see README for the schema).
SweepSpec sweep_from_json(const std::string& text);

/// FNV-1a hash of the canonical scenario serialization, for provenance columns.
std::string config_hash(const ScenarioConfig& cfg);
std::string version_string();

}  // namespace mbcpp
