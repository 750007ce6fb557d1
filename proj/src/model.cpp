#include "mbcpp/model.hpp"

#include <cmath>
#include <sstream>

#include "mbcpp/rng.hpp"

namespace mbcpp {

int PairList::band_column(int band_id) const {
  for (std::size_t i = 0; i < used_bands.size(); ++i) {
    if (used_bands[i] == band_id) return static_cast<int>(i);
  }
  return -1;
}

PairList canonical_pairs(const ScenarioConfig& cfg) {
  PairList pl;
  for (int k = 0; k < cfg.num_bands(); ++k) {
    int count = 0;
    for (int m = 0; m < cfg.num_bs(); ++m) {
      if (!cfg.is_assigned(m, k)) continue;
      if (count == 0) {
        pl.used_bands.push_back(k);
        pl.band_offset.push_back(pl.size());
      }
      pl.pairs.push_back({m, k});
      ++count;
    }
    if (count > 0) pl.band_count.push_back(count);
  }
  return pl;
}

Vec MeasurementSet::stacked() const {
  Vec y(2 * pl.size());
  y << y_tau, y_theta;
  return y;
}

int ModelMatrices::phase_column(int used_band_col) const {
  if (mode == PhaseOffsetMode::band_independent) return n_dim + 1;
  return n_dim + 1 + used_band_col;
}

int state_dim(const ScenarioConfig& cfg) {
  const PairList pl = canonical_pairs(cfg);
  if (cfg.phase_offset_mode == PhaseOffsetMode::band_independent) return cfg.n_dim() + 2;
  return cfg.n_dim() + 1 + pl.num_used_bands();
}

namespace {

// Geometry-only pieces shared by the bounds (which do not need D/E).
struct GeometryBlocks {
  PairList pl;
  Vec lambda;
  Vec dist;
  Mat u_tilde;
  Mat a_delay;
};

GeometryBlocks geometry_blocks(const ScenarioConfig& cfg, const Vec& x_ue) {
  GeometryBlocks g;
  g.pl = canonical_pairs(cfg);
  const int n = g.pl.size();
  const int nd = cfg.n_dim();
  g.lambda = Vec(n);
  g.dist = Vec(n);
  g.u_tilde = Mat(nd, n);
  g.a_delay = Mat(n, nd + 1);
  for (int j = 0; j < n; ++j) {
    const auto [m, k] = g.pl.pairs[j];
    const Vec diff = x_ue - cfg.bs_positions[m];
    const double d = diff.norm();
    if (d <= 0.0) {
      throw GeometryError("linearization point coincides with BS " + std::to_string(m));
    }
    g.lambda(j) = cfg.bands[k].wavelength_m();
    g.dist(j) = d;
    g.u_tilde.col(j) = diff / d;
    g.a_delay.row(j).head(nd) = g.u_tilde.col(j).transpose();
    g.a_delay(j, nd) = speed_of_light;
  }
  return g;
}

}  // namespace

ModelMatrices build_matrices(const ScenarioConfig& cfg, const Vec& state) {
  cfg.validate();
  const int nd = cfg.n_dim();
  if (state.size() < nd) throw ConfigError("state vector shorter than the position dimension");
  GeometryBlocks g = geometry_blocks(cfg, state.head(nd));

  ModelMatrices mm;
  mm.pl = std::move(g.pl);
  mm.mode = cfg.phase_offset_mode;
  mm.n_dim = nd;
  mm.lambda = std::move(g.lambda);
  mm.dist = std::move(g.dist);
  mm.u_tilde = std::move(g.u_tilde);
  mm.a_delay = std::move(g.a_delay);

  const int n = mm.pl.size();
  const int n_bands = mm.pl.num_used_bands();
  mm.n_state = mm.mode == PhaseOffsetMode::band_independent ? nd + 2 : nd + 1 + n_bands;

  mm.a_f = Mat::Zero(2 * n, mm.n_state);
  mm.a_f.topLeftCorner(n, nd + 1) = mm.a_delay;
  mm.a_f.block(n, 0, n, nd + 1) = mm.a_delay;
  for (int j = 0; j < n; ++j) {
    const int col = mm.mode == PhaseOffsetMode::band_independent
                        ? nd + 1
                        : nd + 1 + mm.pl.band_column(mm.pl.pairs[j].band);
    mm.a_f(n + j, col) = mm.lambda(j);
  }

  mm.b = Mat::Zero(2 * n, n);
  mm.b.bottomRows(n) = Mat(mm.lambda.asDiagonal());

  if (mm.mode == PhaseOffsetMode::band_independent) {
    const int nz = n - 1;
    mm.d = Mat::Zero(nz, n);
    mm.e = Mat::Zero(n, nz);
    mm.d.col(0) = Vec::Constant(nz, -1.0);
    mm.d.rightCols(nz) = Mat::Identity(nz, nz);
    mm.e.bottomRows(nz) = Mat::Identity(nz, nz);
  } else {
    for (int b = 0; b < n_bands; ++b) {
      if (mm.pl.band_count[b] < 2) {
        std::ostringstream msg;
        msg << "band " << mm.pl.used_bands[b] << " has a single assigned BS; band-dependent "
            << "phase offsets need at least two BSs per band";
        throw IdentifiabilityError(msg.str());
      }
    }
    const int nz = n - n_bands;
    mm.d = Mat::Zero(nz, n);
    mm.e = Mat::Zero(n, nz);
    int row = 0;
    for (int b = 0; b < n_bands; ++b) {
      const int ofs = mm.pl.band_offset[b];
      const int cnt = mm.pl.band_count[b];
      for (int i = 1; i < cnt; ++i) {
        mm.d(row, ofs) = -1.0;       // reference: first assigned BS of the band
        mm.d(row, ofs + i) = 1.0;
        mm.e(ofs + i, row) = 1.0;
        ++row;
      }
    }
  }
  return mm;
}

Vec predict_observations(const ScenarioConfig& cfg, const ModelMatrices& mm, const Vec& state) {
  const int n = mm.pl.size();
  const int nd = mm.n_dim;
  const double clock_m = speed_of_light * state(nd);
  Vec out(2 * n);
  for (int j = 0; j < n; ++j) {
    const auto [m, k] = mm.pl.pairs[j];
    const double d = (state.head(nd) - cfg.bs_positions[m]).norm();
    const double phi = state(mm.phase_column(mm.pl.band_column(k)));
    out(j) = d + clock_m;
    out(n + j) = d + clock_m + mm.lambda(j) * phi;
  }
  return out;
}

Vec pair_sigma_tau(const LinkBudget& budget, const PairList& pl) {
  Vec out(pl.size());
  for (int j = 0; j < pl.size(); ++j) out(j) = budget.sigma_tau_m(pl.pairs[j].bs, pl.pairs[j].band);
  return out;
}

Vec pair_sigma_theta(const LinkBudget& budget, const PairList& pl) {
  Vec out(pl.size());
  for (int j = 0; j < pl.size(); ++j) {
    out(j) = budget.sigma_theta_m(pl.pairs[j].bs, pl.pairs[j].band);
  }
  return out;
}

Mat measurement_covariance(const Vec& sigma_tau, const Vec& sigma_theta) {
  const int n = static_cast<int>(sigma_tau.size());
  Vec var(2 * n);
  var << sigma_tau.cwiseAbs2(), sigma_theta.cwiseAbs2();
  return Mat(var.asDiagonal());
}

Mat clock_augmented_covariance(const ScenarioConfig& cfg, const PairList& pl, const Mat& base) {
  if (cfg.bs_clock_std_s.minCoeff() < 0.0) {
    throw ConfigError("bs_clock_std_s entries must be nonnegative");
  }
  const int n = pl.size();
  if (base.rows() != 2 * n || base.cols() != 2 * n) {
    throw ConfigError("clock augmentation needs a 2L x 2L base covariance");
  }
  if (!cfg.any_clock_imperfection()) return base;
  Mat sigma_im = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (pl.pairs[i].bs != pl.pairs[j].bs) continue;
      const double delta = cfg.bs_clock_std_s(pl.pairs[i].bs);
      sigma_im(i, j) = speed_of_light * speed_of_light * delta * delta;
    }
  }
  Mat out = base;
  out.topLeftCorner(n, n) += sigma_im;
  out.topRightCorner(n, n) += sigma_im;
  out.bottomLeftCorner(n, n) += sigma_im;
  out.bottomRightCorner(n, n) += sigma_im;
  return out;
}

Mat observation_covariance(const ScenarioConfig& cfg, const MeasurementSet& meas) {
  const Mat base = measurement_covariance(meas.sigma_tau, meas.sigma_theta);
  return clock_augmented_covariance(cfg, meas.pl, base);
}

MeasurementSet synthesize_measurements(const ScenarioConfig& cfg, std::uint64_t seed,
                                       const SynthesisOptions& opt) {
  cfg.validate();
  const LinkBudget budget = compute_link_budget(cfg);
  MeasurementSet meas;
  meas.pl = canonical_pairs(cfg);
  const int n = meas.pl.size();
  meas.sigma_tau = pair_sigma_tau(budget, meas.pl);
  meas.sigma_theta = pair_sigma_theta(budget, meas.pl);
  meas.y_tau = Vec(n);
  meas.y_theta = Vec(n);
  meas.truth.z = VecI(n);
  meas.truth.ue_clock_bias_s = cfg.ue_clock_bias_s;

  // Draw order is fixed: BS clock offsets first, then per-pair delay noise,
  // then per-pair phase noise, all in canonical pair order.
  Rng rng(seed);
  meas.truth.bs_clock_draws_s = Vec::Zero(cfg.num_bs());
  for (int m = 0; m < cfg.num_bs(); ++m) {
    const double delta = cfg.bs_clock_std_s(m);
    meas.truth.bs_clock_draws_s(m) = delta > 0.0 ? rng.gaussian(0.0, delta) : 0.0;
  }
  Vec noise_tau(n), noise_theta(n);
  for (int j = 0; j < n; ++j) noise_tau(j) = opt.noise_scale * meas.sigma_tau(j) * rng.gaussian();
  for (int j = 0; j < n; ++j) {
    noise_theta(j) = opt.noise_scale * meas.sigma_theta(j) * rng.gaussian();
  }

  if (cfg.phase_offset_mode == PhaseOffsetMode::band_independent) {
    meas.truth.phase_offsets_cycles = Vec::Constant(1, cfg.phase_offset_cycles(0));
  } else {
    meas.truth.phase_offsets_cycles = Vec(meas.pl.num_used_bands());
    for (int b = 0; b < meas.pl.num_used_bands(); ++b) {
      meas.truth.phase_offsets_cycles(b) = cfg.phase_offset_cycles(meas.pl.used_bands[b]);
    }
  }

  for (int j = 0; j < n; ++j) {
    const auto [m, k] = meas.pl.pairs[j];
    const BandConfig& band = cfg.bands[k];
    const double d = (cfg.bs_positions[m] - cfg.ue_position).norm();
    const double lambda = band.wavelength_m();
    const double clock_s = cfg.ue_clock_bias_s + meas.truth.bs_clock_draws_s(m);
    const double phi = cfg.phase_offset_mode == PhaseOffsetMode::band_independent
                           ? cfg.phase_offset_cycles(0)
                           : cfg.phase_offset_cycles(k);
    meas.y_tau(j) = d + speed_of_light * clock_s + noise_tau(j);
    const double theta_cycles = d / lambda + band.carrier_frequency_hz * clock_s + phi;
    const long long z = -static_cast<long long>(std::floor(theta_cycles + noise_theta(j) / lambda));
    meas.truth.z(j) = static_cast<int>(z);
    meas.y_theta(j) = d + speed_of_light * clock_s + static_cast<double>(z) * lambda +
                      phi * lambda + noise_theta(j);
  }
  return meas;
}

std::string measurements_to_csv(const MeasurementSet& meas) {
  std::ostringstream out;
  out.precision(17);
  out << "m,k,y_tau,y_theta,sigma_tau,sigma_theta,z_true\n";
  for (int j = 0; j < meas.pl.size(); ++j) {
    out << meas.pl.pairs[j].bs << "," << meas.pl.pairs[j].band << "," << meas.y_tau(j) << ","
        << meas.y_theta(j) << "," << meas.sigma_tau(j) << "," << meas.sigma_theta(j) << ","
        << meas.truth.z(j) << "\n";
  }
  return out.str();
}

MeasurementSet measurements_from_csv(const std::string& text, const ScenarioConfig& cfg) {
  cfg.validate();
  MeasurementSet meas;
  meas.pl = canonical_pairs(cfg);
  const int n = meas.pl.size();
  meas.y_tau = Vec::Zero(n);
  meas.y_theta = Vec::Zero(n);
  meas.sigma_tau = Vec::Zero(n);
  meas.sigma_theta = Vec::Zero(n);
  meas.truth.z = VecI::Zero(n);
  meas.truth.ue_clock_bias_s = cfg.ue_clock_bias_s;
  meas.truth.bs_clock_draws_s = Vec::Zero(cfg.num_bs());
  meas.truth.phase_offsets_cycles = Vec::Zero(1);

  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("measurement CSV is empty");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    double fields[7];
    for (int c = 0; c < 7; ++c) {
      if (!std::getline(ls, cell, ',')) throw ConfigError("measurement CSV row too short");
      fields[c] = std::stod(cell);
    }
    const int m = static_cast<int>(fields[0]);
    const int k = static_cast<int>(fields[1]);
    int idx = -1;
    for (int j = 0; j < n; ++j) {
      if (meas.pl.pairs[j].bs == m && meas.pl.pairs[j].band == k) {
        idx = j;
        break;
      }
    }
    if (idx < 0) throw ConfigError("measurement CSV row does not match an assigned pair");
    meas.y_tau(idx) = fields[2];
    meas.y_theta(idx) = fields[3];
    meas.sigma_tau(idx) = fields[4];
    meas.sigma_theta(idx) = fields[5];
    meas.truth.z(idx) = static_cast<int>(fields[6]);
    ++rows;
  }
  if (rows != n) throw ConfigError("measurement CSV row count does not match the assignment");
  return meas;
}

}  // namespace mbcpp
