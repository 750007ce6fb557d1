#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "mbcpp/model.hpp"
#include "mbcpp/rng.hpp"

namespace mbcpp {

/// Frequency-domain OFDM observation of one (BS, band) link.  Subcarrier i
/// sits at index n_i = i - (N-1)/2 (half-integer grid for even N).
struct FreqDomainObservation {
  CVec samples;
  BandConfig band;
  double energy_per_subcarrier = 0.0;  // E_s
  double noise_psd = 0.0;              // complex noise variance per sample

  double subcarrier_index(int i) const {
    return static_cast<double>(i) - 0.5 * (band.num_subcarriers - 1);
  }
};

struct SignalPath {
  double delay_s = 0.0;
  std::complex<double> gain;  // rho * exp(-j 2 pi theta)
};

/// y[n] = sum_paths sqrt(E_s) * gain * exp(-j 2 pi n df tau) + noise.
FreqDomainObservation synthesize_signal(const BandConfig& band, double energy_per_subcarrier,
                                        double noise_psd, const std::vector<SignalPath>& paths,
                                        Rng& rng, double noise_scale = 1.0);

struct PathEstimate {
  std::vector<double> delays_s;                // ascending
  std::vector<std::complex<double>> gains;     // complex gain per path
  std::vector<double> phase_cycles;            // fractional carrier phase in [0, 1)
  int los_index = 0;                           // index of the lowest delay
  bool fell_back_to_single = false;            // ESPRIT subspace gap too small
};

/// Single-path ML delay (zero-padded periodogram peak, quadratic
/// interpolation, one Newton polish) and matched-correlator phase.
/// Throws NumericalError when the peak is below the detection threshold.
PathEstimate estimate_single_path(const FreqDomainObservation& obs);

/// Rank-2 Hankel ESPRIT (window ceil(N/2)): delays from the rotational
/// invariance of the signal subspace, gains by linear LS, paths sorted by
/// delay.  Falls back to the single-path estimate when the second subspace
/// direction is indistinguishable from noise.
PathEstimate estimate_dual_path_esprit(const FreqDomainObservation& obs);

struct MultipathSpec {
  bool enabled = false;
  double delta_tau_s = 0.0;      // NLoS minus LoS delay
  double nlos_ratio_db = -6.0;   // NLoS-to-LoS power ratio
};

/// Signal-layer measurement synthesis: per (m, k) link, generate the OFDM
/// observation, estimate delay/phase (dual-path ESPRIT when multipath is
/// enabled, single-path ML otherwise), select the lowest-delay path and emit
/// effective distances.  Noise stds in the output come from the link budget,
/// matching the model-layer weighting convention.
MeasurementSet synthesize_signal_measurements(const ScenarioConfig& cfg,
                                              const MultipathSpec& multipath,
                                              std::uint64_t seed);

}  // namespace mbcpp
