#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbcpp/scenario.hpp"

namespace mbcpp {

/// One assigned (BS, band) pair.  Measurement rows follow the canonical
/// band-major order: band index outer, BS index inner, ascending.
struct MeasurementIndex {
  int bs;
  int band;
};

/// Canonical index list of the assigned pairs plus per-band bookkeeping.
struct PairList {
  std::vector<MeasurementIndex> pairs;  // length L
  std::vector<int> used_bands;          // band ids with >= 1 assignment, ascending
  std::vector<int> band_offset;         // first pair index of each used band
  std::vector<int> band_count;          // pairs per used band

  int size() const { return static_cast<int>(pairs.size()); }
  int num_used_bands() const { return static_cast<int>(used_bands.size()); }
  /// Position of band_id within used_bands; -1 when the band is unused.
  int band_column(int band_id) const;
};

PairList canonical_pairs(const ScenarioConfig& cfg);

struct GroundTruth {
  VecI z;                     // L integer ambiguities
  double ue_clock_bias_s = 0.0;
  Vec phase_offsets_cycles;   // per used band, or a single entry (band-independent)
  Vec bs_clock_draws_s;       // M per-realization BS clock offsets
};

/// Stacked effective-distance observations (meters) with their noise stds.
struct MeasurementSet {
  PairList pl;
  Vec y_tau;
  Vec y_theta;
  Vec sigma_tau;
  Vec sigma_theta;
  GroundTruth truth;

  Vec stacked() const;  // [y_tau; y_theta]
};

/// All structure matrices of the linearized observation model, restricted to
/// the assigned pairs in nonuniform scenarios.
struct ModelMatrices {
  PairList pl;
  PhaseOffsetMode mode = PhaseOffsetMode::band_dependent;
  int n_dim = 2;
  int n_state = 0;  // N_d + 1 + K_used (band-dependent) or N_d + 2
  Vec lambda;       // L wavelengths
  Vec dist;         // L ranges at the linearization point
  Mat u_tilde;      // N_d x L unit vectors (UE - BS)/range
  Mat a_delay;      // L x (N_d+1) delay-model Jacobian [u_tilde', c*1]
  Mat a_f;          // 2L x n_state full Jacobian
  Mat b;            // 2L x L ambiguity-to-observation map [0; Lambda]
  Mat d;            // differencing matrix, rows sum to zero within each block
  Mat e;            // zero-row inserter with d * e = identity

  int num_pairs() const { return pl.size(); }
  /// Column of a_f holding the phase offset of the given used-band column
  /// (band-dependent mode) or the single shared offset column.
  int phase_column(int used_band_col) const;
};

/// State vector layout: [x_ue (N_d), B_ue (seconds), phase offsets (cycles)].
int state_dim(const ScenarioConfig& cfg);

/// Builds every structure matrix at the given linearization state.  Throws
/// IdentifiabilityError when a used band has fewer than two BSs in
/// band-dependent mode.
ModelMatrices build_matrices(const ScenarioConfig& cfg, const Vec& state);

/// Noise-free observation prediction f(s) at the given state (meters, 2L).
Vec predict_observations(const ScenarioConfig& cfg, const ModelMatrices& mm, const Vec& state);

/// Per-pair noise stds pulled out of a link budget in canonical order.
Vec pair_sigma_tau(const LinkBudget& budget, const PairList& pl);
Vec pair_sigma_theta(const LinkBudget& budget, const PairList& pl);

/// Diagonal measurement covariance blkdiag(Sigma_tau, Sigma_theta).
Mat measurement_covariance(const Vec& sigma_tau, const Vec& sigma_theta);

/// Adds the BS clock-imperfection covariance: base + 1_{2x2} (x) Sigma_im,
/// with Sigma_im = c^2 * 1_{KxK} (x) diag(delta_m^2) restricted to assigned
/// pairs.  Returns base unchanged when every delta_m is zero.
Mat clock_augmented_covariance(const ScenarioConfig& cfg, const PairList& pl, const Mat& base);

/// Estimator/bound weighting for a measurement set: diagonal covariance from
/// the per-pair stds, clock-augmented when the scenario declares BS clock
/// imperfections.
Mat observation_covariance(const ScenarioConfig& cfg, const MeasurementSet& meas);

struct SynthesisOptions {
  double noise_scale = 1.0;  // 0 gives noise-free measurements
};

/// Draws one measurement realization: Gaussian delay/phase noise with the
/// link-budget stds, per-BS clock offsets, and the implied ground-truth
/// integer ambiguities.
MeasurementSet synthesize_measurements(const ScenarioConfig& cfg, std::uint64_t seed,
                                       const SynthesisOptions& opt = {});

/// CSV round trip (one row per pair: m, k, y_tau, y_theta, sigma_tau,
/// sigma_theta, z_true) for cross-implementation regression.
std::string measurements_to_csv(const MeasurementSet& meas);
MeasurementSet measurements_from_csv(const std::string& text, const ScenarioConfig& cfg);

}  // namespace mbcpp
