#include "mbcpp/bounds.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "mbcpp/ils.hpp"
#include "mbcpp/linalg.hpp"
#include "mbcpp/rng.hpp"

namespace mbcpp {

namespace {

// Geometry and noise blocks shared by every bound; D/E are not needed here so
// single-BS bands are allowed (they simply contribute no differential
// ambiguity).
struct BoundContext {
  PairList pl;
  Vec lambda;
  Mat u_tilde;   // N_d x L
  Mat a_delay;   // L x (N_d+1)
  Mat a_f;       // 2L x n_state
  Mat phi;       // phase-offset gradient rows (n_phi x L)
  Vec var_tau;   // diagonal delay variances
  Vec var_theta;
  Mat sigma_ch;  // 2L x 2L, possibly clock-augmented
  Mat sigma_tau_full;  // L x L delay block of sigma_ch
  bool augmented = false;
  int n_dim = 2;
  int n_state = 0;
};

BoundContext bound_context(const ScenarioConfig& cfg, const Vec& x_ue) {
  cfg.validate();
  BoundContext ctx;
  ctx.pl = canonical_pairs(cfg);
  const int n = ctx.pl.size();
  const int nd = cfg.n_dim();
  ctx.n_dim = nd;
  ctx.lambda = Vec(n);
  ctx.u_tilde = Mat(nd, n);
  ctx.a_delay = Mat(n, nd + 1);
  for (int j = 0; j < n; ++j) {
    const auto [m, k] = ctx.pl.pairs[j];
    const Vec diff = x_ue - cfg.bs_positions[m];
    const double d = diff.norm();
    if (d <= 0.0) throw GeometryError("bound evaluation point coincides with BS " + std::to_string(m));
    ctx.lambda(j) = cfg.bands[k].wavelength_m();
    ctx.u_tilde.col(j) = diff / d;
    ctx.a_delay.row(j).head(nd) = ctx.u_tilde.col(j).transpose();
    ctx.a_delay(j, nd) = speed_of_light;
  }

  const int n_phi = cfg.phase_offset_mode == PhaseOffsetMode::band_independent
                        ? 1
                        : ctx.pl.num_used_bands();
  ctx.n_state = nd + 1 + n_phi;
  ctx.phi = Mat::Zero(n_phi, n);
  ctx.a_f = Mat::Zero(2 * n, ctx.n_state);
  ctx.a_f.topLeftCorner(n, nd + 1) = ctx.a_delay;
  ctx.a_f.block(n, 0, n, nd + 1) = ctx.a_delay;
  for (int j = 0; j < n; ++j) {
    const int row = cfg.phase_offset_mode == PhaseOffsetMode::band_independent
                        ? 0
                        : ctx.pl.band_column(ctx.pl.pairs[j].band);
    ctx.phi(row, j) = ctx.lambda(j);
    ctx.a_f(n + j, nd + 1 + row) = ctx.lambda(j);
  }

  const LinkBudget budget = compute_link_budget(cfg);
  ctx.var_tau = pair_sigma_tau(budget, ctx.pl).cwiseAbs2();
  ctx.var_theta = pair_sigma_theta(budget, ctx.pl).cwiseAbs2();
  Mat base(2 * n, 2 * n);
  base.setZero();
  base.topLeftCorner(n, n) = Mat(ctx.var_tau.asDiagonal());
  base.bottomRightCorner(n, n) = Mat(ctx.var_theta.asDiagonal());
  ctx.augmented = cfg.any_clock_imperfection();
  ctx.sigma_ch = clock_augmented_covariance(cfg, ctx.pl, base);
  ctx.sigma_tau_full = ctx.sigma_ch.topLeftCorner(n, n);
  return ctx;
}

Mat inverse_sigma(const BoundContext& ctx) {
  if (!ctx.augmented) return Mat(ctx.sigma_ch.diagonal().cwiseInverse().asDiagonal());
  return inverse_spd(ctx.sigma_ch, "observation covariance");
}

}  // namespace

Mat delay_fim_matrix(const Mat& a_delay, const Mat& sigma_tau) {
  const Mat w = inverse_spd(sigma_tau, "delay covariance");
  return a_delay.transpose() * w * a_delay;
}

Mat known_fim_blocks(const Mat& u_tilde, const Mat& phi, const Vec& var_tau,
                     const Vec& var_theta) {
  const int nd = static_cast<int>(u_tilde.rows());
  const int n_phi = static_cast<int>(phi.rows());
  const Vec j_tau = var_tau.cwiseInverse();
  const Vec j_theta = var_theta.cwiseInverse();
  const Vec j_sum = j_tau + j_theta;
  const double c = speed_of_light;

  Mat fim(nd + 1 + n_phi, nd + 1 + n_phi);
  fim.topLeftCorner(nd, nd) = u_tilde * j_sum.asDiagonal() * u_tilde.transpose();
  fim.block(0, nd, nd, 1) = c * (u_tilde * j_sum);
  fim.block(nd, 0, 1, nd) = fim.block(0, nd, nd, 1).transpose();
  fim(nd, nd) = c * c * j_sum.sum();
  fim.block(0, nd + 1, nd, n_phi) = u_tilde * j_theta.asDiagonal() * phi.transpose();
  fim.block(nd + 1, 0, n_phi, nd) = fim.block(0, nd + 1, nd, n_phi).transpose();
  fim.block(nd, nd + 1, 1, n_phi) = c * (phi * j_theta).transpose();
  fim.block(nd + 1, nd, n_phi, 1) = c * (phi * j_theta);
  fim.bottomRightCorner(n_phi, n_phi) = phi * j_theta.asDiagonal() * phi.transpose();
  return fim;
}

Mat relaxed_closed_form(const Mat& a_delay, const Vec& lambda, const Vec& var_theta,
                        const Mat& j_delay) {
  const Mat cov_delay = inverse_spd(j_delay, "delay FIM");
  const Vec inv_lambda = lambda.cwiseInverse();
  const Mat geom = a_delay * cov_delay * a_delay.transpose();
  return inv_lambda.asDiagonal() * (Mat(var_theta.asDiagonal()) + geom) *
         inv_lambda.asDiagonal();
}

DelayBound delay_only_fim(const ScenarioConfig& cfg, const Vec& x_ue) {
  const BoundContext ctx = bound_context(cfg, x_ue);
  DelayBound out;
  out.fim = delay_fim_matrix(ctx.a_delay, ctx.sigma_tau_full);
  out.cov = inverse_spd(out.fim, "delay-only FIM");
  out.peb_m = trace_root(out.cov, ctx.n_dim);
  return out;
}

namespace {

Mat relaxed_bound_ctx(const BoundContext& ctx) {
  const int n = ctx.pl.size();
  if (!ctx.augmented) {
    const Mat j_delay = delay_fim_matrix(ctx.a_delay, ctx.sigma_tau_full);
    return relaxed_closed_form(ctx.a_delay, ctx.lambda, ctx.var_theta, j_delay);
  }
  // Correlated noise: dense FIM over [x, B_ue, z_rlx] and Schur-complement
  // extraction of the ambiguity block.
  const int ns = ctx.n_dim + 1;
  Mat a_rlx(2 * n, ns + n);
  a_rlx.setZero();
  a_rlx.topLeftCorner(n, ns) = ctx.a_delay;
  a_rlx.block(n, 0, n, ns) = ctx.a_delay;
  a_rlx.bottomRightCorner(n, n) = Mat(ctx.lambda.asDiagonal());
  const Mat w = inverse_spd(ctx.sigma_ch, "observation covariance");
  const Mat j_full = a_rlx.transpose() * w * a_rlx;
  const Mat cov = inverse_spd(j_full, "relaxed FIM");
  return cov.bottomRightCorner(n, n);
}

KnownIntegerBound known_integer_ctx(const BoundContext& ctx) {
  KnownIntegerBound out;
  const Mat w = inverse_sigma(ctx);
  out.fim = ctx.a_f.transpose() * w * ctx.a_f;
  if (!ctx.augmented) {
    const Mat blocks = known_fim_blocks(ctx.u_tilde, ctx.phi, ctx.var_tau, ctx.var_theta);
    const double scale = out.fim.cwiseAbs().maxCoeff();
    if ((blocks - out.fim).cwiseAbs().maxCoeff() > 1e-8 * scale) {
      throw NumericalError("known-integer FIM block formula disagrees with the generic form");
    }
    out.fim = blocks;
  }
  out.cov = inverse_spd(out.fim, "known-integer FIM");
  out.peb_m = trace_root(out.cov, ctx.n_dim);
  return out;
}

}  // namespace

Mat relaxed_bound(const ScenarioConfig& cfg, const Vec& x_ue) {
  const BoundContext ctx = bound_context(cfg, x_ue);
  return relaxed_bound_ctx(ctx);
}

KnownIntegerBound known_integer_fim(const ScenarioConfig& cfg, const Vec& x_ue) {
  const BoundContext ctx = bound_context(cfg, x_ue);
  return known_integer_ctx(ctx);
}

BoundReport micrb(const ScenarioConfig& cfg, const Vec& x_ue, int n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw ConfigError("micrb requires n_mc >= 1");
  const BoundContext ctx = bound_context(cfg, x_ue);
  // D/E come from the full model build; this enforces the band-dependent
  // two-BS-per-band identifiability rule.
  Vec state = Vec::Zero(ctx.n_state);
  state.head(ctx.n_dim) = x_ue;
  const ModelMatrices mm = build_matrices(cfg, state);

  BoundReport rep;
  rep.n_mc = n_mc;
  const KnownIntegerBound known = known_integer_ctx(ctx);
  rep.peb_known_m = known.peb_m;
  const DelayBound delay = delay_only_fim(cfg, x_ue);
  rep.peb_delay_m = delay.peb_m;
  rep.sigma_rlx = relaxed_bound_ctx(ctx);
  rep.s = mm.d * rep.sigma_rlx * mm.d.transpose();
  rep.s = 0.5 * (rep.s + rep.s.transpose()).eval();

  const int nz = static_cast<int>(rep.s.rows());
  if (nz == 0) {
    rep.sigma_mi = known.cov;
    rep.peb_mi_m = known.peb_m;
    return rep;
  }

  Mat chol_s;
  try {
    chol_s = cholesky_lower(rep.s, "differenced float-ambiguity covariance");
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("micrb: S = D Sigma_rlx D' is not positive definite: ") +
                         e.what());
  }

  // Bias map: b = -(Sigma^{-1/2} A_f)^+ Sigma^{-1/2} B E delta_z.
  const Mat w_half = ctx.augmented
                         ? inverse_sqrt_spd(ctx.sigma_ch, "observation covariance")
                         : Mat(ctx.sigma_ch.diagonal().cwiseSqrt().cwiseInverse().asDiagonal());
  // Column equilibration keeps the rank-revealing threshold meaningful across
  // the mixed meter/second/cycle parameter units.
  const Mat wa = w_half * ctx.a_f;
  Vec col_scale(ctx.n_state);
  for (int i = 0; i < ctx.n_state; ++i) col_scale(i) = std::max(wa.col(i).norm(), 1e-300);
  const Mat bias_map = col_scale.cwiseInverse().asDiagonal() *
                       (pseudo_inverse(wa * col_scale.cwiseInverse().asDiagonal()) *
                        (w_half * (mm.b * mm.e)));

  const Decorrelation dec = decorrelate(rep.s);
  Rng rng(seed);
  Mat bias_acc = Mat::Zero(ctx.n_state, ctx.n_state);
  int n_err = 0;
  double bias_norm_acc = 0.0;
  Vec g(nz);
  for (int trial = 0; trial < n_mc; ++trial) {
    for (int i = 0; i < nz; ++i) g(i) = rng.gaussian();
    const Vec r = chol_s * g;
    const VecI delta_z = solve_with(dec, rep.s, r).z;
    if ((delta_z.array() != 0).any()) {
      ++n_err;
      const Vec bias = -bias_map * delta_z.cast<double>();
      bias_acc.noalias() += bias * bias.transpose();
      bias_norm_acc += bias.head(ctx.n_dim).norm();
    }
  }
  rep.integer_error_rate = static_cast<double>(n_err) / n_mc;
  rep.mean_bias_norm_m = n_err > 0 ? bias_norm_acc / n_err : 0.0;
  rep.sigma_mi = known.cov + bias_acc / static_cast<double>(n_mc);
  rep.peb_mi_m = trace_root(rep.sigma_mi, ctx.n_dim);
  return rep;
}

FusionReport fused_single_band_peb(const ScenarioConfig& cfg, const Vec& x_ue, int n_mc,
                                   std::uint64_t seed) {
  cfg.validate();
  if (!cfg.assignment.all()) {
    throw ConfigError("band fusion is defined for uniform assignments");
  }
  if (cfg.phase_offset_mode != PhaseOffsetMode::band_dependent) {
    throw ConfigError("band fusion assumes band-dependent phase offsets");
  }
  const int nd = cfg.n_dim();
  FusionReport out;
  Mat j_delay = Mat::Zero(nd + 1, nd + 1);
  Mat j_known = Mat::Zero(nd + 1, nd + 1);
  Mat j_mi = Mat::Zero(nd + 1, nd + 1);
  for (int k = 0; k < cfg.num_bands(); ++k) {
    ScenarioConfig single = cfg;
    single.bands = {cfg.bands[k]};
    single.bands[0].tx_power_w = cfg.tx_power_w_for(0, k);
    single.power_mode = PowerMode::per_band;
    single.assignment = cfg.assignment.col(k);
    single.ue_phase_offsets_cycles = Vec::Constant(1, cfg.phase_offset_cycles(k));

    j_delay += delay_only_fim(single, x_ue).fim;
    const KnownIntegerBound known = known_integer_fim(single, x_ue);
    // Effective information of [x, B_ue]: inverse of the leading block of the
    // full covariance, i.e. the Schur complement over the band's offset.
    j_known += inverse_spd(known.cov.topLeftCorner(nd + 1, nd + 1),
                           "single-band known-integer covariance");
    const BoundReport mi = micrb(single, x_ue, n_mc, derive_seed(seed, k));
    j_mi += inverse_spd(mi.sigma_mi.topLeftCorner(nd + 1, nd + 1),
                        "single-band mixed-integer covariance");
  }
  out.peb_delay_m = trace_root(inverse_spd(j_delay, "fused delay FIM"), nd);
  out.peb_known_m = trace_root(inverse_spd(j_known, "fused known-integer FIM"), nd);
  out.peb_mi_m = trace_root(inverse_spd(j_mi, "fused mixed-integer FIM"), nd);
  return out;
}

}  // namespace mbcpp
