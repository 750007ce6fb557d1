#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbcpp/types.hpp"

namespace mbcpp {

enum class PhaseOffsetMode { band_dependent, band_independent };
enum class PowerMode { per_band, per_bs_total };

/// One OFDM measurement band.
struct BandConfig {
  double carrier_frequency_hz = 3.5e9;
  double subcarrier_spacing_hz = 30e3;
  int num_subcarriers = 612;
  double tx_power_w = 1e-3;

  double wavelength_m() const { return speed_of_light / carrier_frequency_hz; }
  double bandwidth_hz() const { return num_subcarriers * subcarrier_spacing_hz; }
};

/// Physical deployment: geometry, band plan, BS-band assignment, power and
/// noise budgets.  Positions are in meters, SI units throughout.
struct ScenarioConfig {
  Vec ue_position;                 // N_d
  std::vector<Vec> bs_positions;   // M entries, each N_d
  std::vector<BandConfig> bands;   // K
  // assignment(m, k) == true when BS m transmits on band k.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> assignment;
  double noise_psd_w_per_hz = 7.943282347242815e-20;  // -174 dBm/Hz plus 13 dB NF
  double ue_clock_bias_s = 1e-7;
  Vec ue_phase_offsets_cycles;     // K entries; first entry used in band-independent mode
  Vec bs_clock_std_s;              // M entries, per-BS clock imperfection std
  double reference_wavelength_m = 0.03;
  PhaseOffsetMode phase_offset_mode = PhaseOffsetMode::band_dependent;
  PowerMode power_mode = PowerMode::per_band;
  double total_tx_power_w = 1e-3;  // per-BS sum power in per_bs_total mode

  int n_dim() const { return static_cast<int>(ue_position.size()); }
  int num_bs() const { return static_cast<int>(bs_positions.size()); }
  int num_bands() const { return static_cast<int>(bands.size()); }

  bool is_assigned(int m, int k) const { return assignment(m, k); }
  int bands_of_bs(int m) const;
  int bs_on_band(int k) const;
  /// Effective transmit power of the (m, k) link, honoring power_mode.
  double tx_power_w_for(int m, int k) const;
  double phase_offset_cycles(int k) const;
  bool any_clock_imperfection() const;

  /// Throws ConfigError on violated basic invariants (types, signs, shapes).
  void validate() const;
  /// True when the assignment/mode combination supports position estimation
  /// (enough distinct BSs, >= 2 BSs per used band in band-dependent mode).
  bool is_identifiable() const;
};

/// Per-link channel gain, SNR and measurement-noise stds in meters.  Entries
/// for unassigned (m, k) pairs are zero.
struct LinkBudget {
  Mat rho;            // M x K channel gain magnitude
  Mat snr;            // M x K
  Mat sigma_tau_m;    // M x K delay-measurement std, meters
  Mat sigma_theta_m;  // M x K phase-measurement std, meters
};

/// Measurement-noise floors in the distance domain:
/// sigma_tau^2 = 3 c^2 / (2 snr pi^2 W^2), sigma_theta^2 = lambda^2 / (8 snr pi^2).
double delay_noise_std_m(double snr, double bandwidth_hz);
double phase_noise_std_m(double snr, double wavelength_m);

/// Free-space link budget: rho = lambda_ref / (4 pi d), SNR and the
/// delay/phase noise floors per link.
LinkBudget compute_link_budget(const ScenarioConfig& cfg);

/// Default deployment: UE at the origin, n_bs BS positions i.i.d. Gaussian
/// with 100 m std per axis, 30 kHz subcarriers, 612 subcarriers per band,
/// 0 dBm per band, -174 dBm/Hz PSD with 13 dB noise figure, uniform
/// assignment.  Phase offsets are drawn uniform on [0, 1) cycles from the
/// same seed; the UE clock bias defaults to 100 ns.
ScenarioConfig sample_default_scenario(std::uint64_t seed, int n_bs = 6,
                                       const std::vector<double>& carrier_frequencies_hz = {3.5e9});

/// JSON scenario I/O.  Decibel convenience fields (tx_power_dbm,
/// noise_psd_dbm_hz, noise_figure_db, total_tx_power_dbm) are accepted and
/// converted at load.
ScenarioConfig parse_scenario_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& cfg, const std::string& path);

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

/// Switches the scenario to per-BS sum power accounting with the given total.
void set_total_power_dbm(ScenarioConfig& cfg, double total_dbm);
/// Per-band power accounting with identical power on every band.
void set_per_band_power_dbm(ScenarioConfig& cfg, double dbm);

}  // namespace mbcpp
