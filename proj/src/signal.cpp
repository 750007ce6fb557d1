#include "mbcpp/signal.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace mbcpp {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
using Cplx = std::complex<double>;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::vector<Cplx>& a, bool inverse) {
  const int n = static_cast<int>(a.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 1.0 : -1.0) * two_pi / len;
    const Cplx wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      Cplx w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        const Cplx u = a[i + j];
        const Cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Matched correlator on the centered subcarrier grid and its first two
// derivatives with respect to delay.
struct Correlator {
  Cplx c0, c1, c2;
};

Correlator correlate(const FreqDomainObservation& obs, double tau) {
  const int n = obs.band.num_subcarriers;
  const double df = obs.band.subcarrier_spacing_hz;
  Correlator out{Cplx(0, 0), Cplx(0, 0), Cplx(0, 0)};
  for (int i = 0; i < n; ++i) {
    const double ni = obs.subcarrier_index(i);
    const double ang = two_pi * ni * df * tau;
    const Cplx e(std::cos(ang), std::sin(ang));
    const Cplx term = obs.samples(i) * e;
    const Cplx jw(0.0, two_pi * ni * df);
    out.c0 += term;
    out.c1 += jw * term;
    out.c2 += jw * jw * term;
  }
  return out;
}

double wrap_cycles(double x) {
  const double f = x - std::floor(x);
  return f >= 1.0 ? 0.0 : f;
}

double wrap_delay(double tau, double range) {
  double t = std::fmod(tau, range);
  if (t < 0.0) t += range;
  return t;
}

}  // namespace

FreqDomainObservation synthesize_signal(const BandConfig& band, double energy_per_subcarrier,
                                        double noise_psd, const std::vector<SignalPath>& paths,
                                        Rng& rng, double noise_scale) {
  if (paths.empty()) throw ConfigError("synthesize_signal needs at least one path");
  const int n = band.num_subcarriers;
  const double df = band.subcarrier_spacing_hz;
  FreqDomainObservation obs;
  obs.band = band;
  obs.energy_per_subcarrier = energy_per_subcarrier;
  obs.noise_psd = noise_psd;
  obs.samples = CVec::Zero(n);
  const double amp = std::sqrt(energy_per_subcarrier);
  for (int i = 0; i < n; ++i) {
    const double ni = obs.subcarrier_index(i);
    Cplx acc(0.0, 0.0);
    for (const SignalPath& p : paths) {
      const double ang = -two_pi * ni * df * p.delay_s;
      acc += amp * p.gain * Cplx(std::cos(ang), std::sin(ang));
    }
    obs.samples(i) = acc;
  }
  const double s = noise_scale * std::sqrt(noise_psd / 2.0);
  if (s > 0.0) {
    for (int i = 0; i < n; ++i) {
      obs.samples(i) += Cplx(s * rng.gaussian(), s * rng.gaussian());
    }
  }
  return obs;
}

PathEstimate estimate_single_path(const FreqDomainObservation& obs) {
  const int n = obs.band.num_subcarriers;
  if (n < 2) throw ConfigError("single-path estimation needs at least two subcarriers");
  const double df = obs.band.subcarrier_spacing_hz;
  const double range = 1.0 / df;

  // Zero-padded periodogram over the unambiguous delay range.
  const int padded = next_pow2(8 * n);
  std::vector<Cplx> grid(padded, Cplx(0.0, 0.0));
  for (int i = 0; i < n; ++i) grid[i] = obs.samples(i);
  fft_inplace(grid, true);
  int peak = 0;
  double peak_pw = 0.0;
  for (int t = 0; t < padded; ++t) {
    const double pw = std::norm(grid[t]);
    if (pw > peak_pw) {
      peak_pw = pw;
      peak = t;
    }
  }
  if (obs.noise_psd > 0.0 && peak_pw < 6.0 * n * obs.noise_psd) {
    throw NumericalError("single-path detection failed: periodogram peak below threshold");
  }

  const double p_prev = std::norm(grid[(peak + padded - 1) % padded]);
  const double p_next = std::norm(grid[(peak + 1) % padded]);
  const double denom = p_prev - 2.0 * peak_pw + p_next;
  const double frac = denom != 0.0 ? 0.5 * (p_prev - p_next) / denom : 0.0;
  double tau = (peak + frac) / (padded * df);

  // Newton polish of |C(tau)|^2 on the centered grid.
  for (int it = 0; it < 3; ++it) {
    const Correlator c = correlate(obs, tau);
    const double g1 = 2.0 * (c.c1 * std::conj(c.c0)).real();
    const double g2 = 2.0 * (c.c2 * std::conj(c.c0)).real() + 2.0 * std::norm(c.c1);
    if (g2 >= 0.0) break;
    const double step = -g1 / g2;
    if (std::abs(step) > 1.0 / (padded * df)) break;
    tau += step;
  }
  tau = wrap_delay(tau, range);

  const Correlator c = correlate(obs, tau);
  PathEstimate est;
  est.delays_s = {tau};
  const Cplx gain = c.c0 / (static_cast<double>(n) * std::sqrt(obs.energy_per_subcarrier));
  est.gains = {gain};
  est.phase_cycles = {wrap_cycles(-std::arg(gain) / two_pi)};
  est.los_index = 0;
  return est;
}

namespace {

// Top singular subspace of the Hankel matrix by randomized block subspace
// iteration (deterministic seed).  Returns the leading `keep` left singular
// vectors and the first block_size singular-value estimates.
void hankel_subspace(const CVec& y, int win, CMat& basis, Vec& sigma) {
  const int cols = static_cast<int>(y.size()) - win + 1;
  CMat h(win, cols);
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < cols; ++j) h(i, j) = y(i + j);
  }
  const int block = 4;
  Rng rng(0xE5127Bull + static_cast<std::uint64_t>(y.size()));
  CMat x(win, block);
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < block; ++j) x(i, j) = Cplx(rng.gaussian(), rng.gaussian());
  }
  for (int it = 0; it < 16; ++it) {
    x = h * (h.adjoint() * x).eval();
    Eigen::HouseholderQR<CMat> qr(x);
    x = qr.householderQ() * CMat::Identity(win, block);
  }
  const CMat z = h.adjoint() * x;
  const CMat gram = z.adjoint() * z;
  Eigen::SelfAdjointEigenSolver<CMat> es(gram);
  sigma = Vec(block);
  for (int i = 0; i < block; ++i) {
    // Eigen sorts ascending; flip to descending singular values.
    const double ev = std::max(es.eigenvalues()(block - 1 - i), 0.0);
    sigma(i) = std::sqrt(ev);
  }
  CMat rot(block, block);
  for (int i = 0; i < block; ++i) rot.col(i) = es.eigenvectors().col(block - 1 - i);
  basis = x * rot;
}

}  // namespace

PathEstimate estimate_dual_path_esprit(const FreqDomainObservation& obs) {
  const int n = obs.band.num_subcarriers;
  if (n < 8) throw ConfigError("ESPRIT needs at least eight subcarriers");
  const double df = obs.band.subcarrier_spacing_hz;
  const double range = 1.0 / df;
  const int win = (n + 1) / 2;

  CMat basis;
  Vec sigma;
  hankel_subspace(obs.samples, win, basis, sigma);
  if (sigma(1) <= 2.0 * sigma(2) + 1e-9 * sigma(0)) {
    PathEstimate est = estimate_single_path(obs);
    est.fell_back_to_single = true;
    return est;
  }

  const CMat us = basis.leftCols(2);
  const CMat up = us.topRows(win - 1);
  const CMat dn = us.bottomRows(win - 1);
  const Eigen::Matrix2cd psi =
      (up.adjoint() * up).inverse() * (up.adjoint() * dn);
  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(psi);

  std::vector<double> delays(2);
  for (int i = 0; i < 2; ++i) {
    const Cplx mu = es.eigenvalues()(i);
    delays[i] = wrap_delay(-std::arg(mu) / (two_pi * df), range);
  }
  if (delays[0] > delays[1]) std::swap(delays[0], delays[1]);

  // Complex gains by linear LS on the full centered grid.
  CMat v(n, 2);
  const double amp = std::sqrt(obs.energy_per_subcarrier);
  for (int i = 0; i < n; ++i) {
    const double ni = obs.subcarrier_index(i);
    for (int p = 0; p < 2; ++p) {
      const double ang = -two_pi * ni * df * delays[p];
      v(i, p) = amp * Cplx(std::cos(ang), std::sin(ang));
    }
  }
  const Eigen::Vector2cd gains = v.colPivHouseholderQr().solve(obs.samples);

  PathEstimate est;
  est.delays_s = delays;
  est.gains = {gains(0), gains(1)};
  est.phase_cycles = {wrap_cycles(-std::arg(gains(0)) / two_pi),
                      wrap_cycles(-std::arg(gains(1)) / two_pi)};
  est.los_index = 0;
  return est;
}

MeasurementSet synthesize_signal_measurements(const ScenarioConfig& cfg,
                                              const MultipathSpec& multipath,
                                              std::uint64_t seed) {
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

  Rng clock_rng(derive_seed(seed, 0xC10Cull));
  meas.truth.bs_clock_draws_s = Vec::Zero(cfg.num_bs());
  for (int m = 0; m < cfg.num_bs(); ++m) {
    const double delta = cfg.bs_clock_std_s(m);
    meas.truth.bs_clock_draws_s(m) = delta > 0.0 ? clock_rng.gaussian(0.0, delta) : 0.0;
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
    const double lambda = band.wavelength_m();
    const double d = (cfg.bs_positions[m] - cfg.ue_position).norm();
    const double clock_s = cfg.ue_clock_bias_s + meas.truth.bs_clock_draws_s(m);
    const double phi = cfg.phase_offset_mode == PhaseOffsetMode::band_independent
                           ? cfg.phase_offset_cycles(0)
                           : cfg.phase_offset_cycles(k);
    const double rho = budget.rho(m, k);
    const double tau_los = d / speed_of_light + clock_s;
    const double theta_los = d / lambda + band.carrier_frequency_hz * clock_s + phi;
    const double es =
        cfg.tx_power_w_for(m, k) / (band.num_subcarriers * band.subcarrier_spacing_hz);

    Rng link_rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    std::vector<SignalPath> paths;
    paths.push_back({tau_los, std::polar(rho, -two_pi * theta_los)});
    if (multipath.enabled) {
      const double psi = link_rng.uniform();  // reflection phase, cycles
      const double theta_nlos =
          theta_los + band.carrier_frequency_hz * multipath.delta_tau_s + psi;
      const double rho_nlos = rho * std::pow(10.0, multipath.nlos_ratio_db / 20.0);
      paths.push_back({tau_los + multipath.delta_tau_s, std::polar(rho_nlos, -two_pi * theta_nlos)});
    }
    const FreqDomainObservation obs =
        synthesize_signal(band, es, cfg.noise_psd_w_per_hz, paths, link_rng);
    const PathEstimate est =
        multipath.enabled ? estimate_dual_path_esprit(obs) : estimate_single_path(obs);
    const double tau_hat = est.delays_s[est.los_index];
    const double theta_hat = est.phase_cycles[est.los_index];
    meas.y_tau(j) = speed_of_light * tau_hat;
    meas.y_theta(j) = lambda * theta_hat;
    meas.truth.z(j) = static_cast<int>(std::llround(theta_hat - theta_los));
  }
  return meas;
}

}  // namespace mbcpp
