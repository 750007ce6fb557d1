#include "mbcpp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mbcpp/bounds.hpp"
#include "mbcpp/linalg.hpp"

namespace mbcpp {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

int worker_count(int n_tasks) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MBCPP_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) hw = v;
  }
  return std::max(1, std::min(hw, n_tasks));
}

// Index-addressed parallel loop; every task writes only its own slot, so the
// result is independent of scheduling.
void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = worker_count(n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double rmse(const std::vector<Vec>& estimates, const Vec& truth) {
  if (estimates.empty()) throw ConfigError("rmse needs at least one trial");
  double acc = 0.0;
  for (const Vec& e : estimates) acc += (e - truth).squaredNorm();
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

double rmse_from_errors(const std::vector<double>& errors_m) {
  if (errors_m.empty()) throw ConfigError("rmse needs at least one trial");
  double acc = 0.0;
  for (double e : errors_m) acc += e * e;
  return std::sqrt(acc / static_cast<double>(errors_m.size()));
}

std::string config_hash(const ScenarioConfig& cfg) {
  const std::string text = scenario_to_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string version_string() { return "mbcpp 0.1.0"; }

void apply_sweep_value(const SweepSpec& spec, double value, ScenarioConfig& cfg,
                       EstimatorConfig& ecfg, MultipathSpec& mp) {
  const std::string& p = spec.parameter;
  if (p.rfind("bands[", 0) == 0) {
    const auto close = p.find(']');
    if (close == std::string::npos) throw ConfigError("bad parameter path: " + p);
    const std::string idx = p.substr(6, close - 6);
    const std::string field = p.substr(close + 2);  // skip "]."
    std::vector<int> targets;
    if (idx == "*") {
      for (int k = 0; k < cfg.num_bands(); ++k) targets.push_back(k);
    } else {
      const int k = std::stoi(idx);
      if (k < 0 || k >= cfg.num_bands()) throw ConfigError("band index out of range in " + p);
      targets.push_back(k);
    }
    for (int k : targets) {
      if (field == "carrier_frequency_hz") {
        cfg.bands[k].carrier_frequency_hz = value;
      } else if (field == "num_subcarriers") {
        cfg.bands[k].num_subcarriers = static_cast<int>(std::llround(value));
      } else if (field == "tx_power_dbm") {
        cfg.power_mode = PowerMode::per_band;
        cfg.bands[k].tx_power_w = dbm_to_watts(value);
      } else if (field == "tx_power_w") {
        cfg.power_mode = PowerMode::per_band;
        cfg.bands[k].tx_power_w = value;
      } else {
        throw ConfigError("unsupported band field in parameter path: " + p);
      }
    }
    return;
  }
  if (p == "total_tx_power_dbm") {
    set_total_power_dbm(cfg, value);
    return;
  }
  if (p == "bs_clock_std_s") {
    cfg.bs_clock_std_s = Vec::Constant(cfg.num_bs(), value);
    return;
  }
  if (p == "num_bands") {
    const int k = static_cast<int>(std::llround(value));
    if (k < 1 || k > static_cast<int>(spec.band_pool.size())) {
      throw ConfigError("num_bands value outside the band pool");
    }
    cfg.bands.assign(spec.band_pool.begin(), spec.band_pool.begin() + k);
    cfg.assignment.setConstant(cfg.num_bs(), k, true);
    Rng rng(derive_seed(spec.geometry_seed, 0x9b));
    cfg.ue_phase_offsets_cycles = Vec(k);
    for (int i = 0; i < k; ++i) cfg.ue_phase_offsets_cycles(i) = rng.uniform();
    return;
  }
  if (p == "num_bs") {
    const int m = static_cast<int>(std::llround(value));
    ScenarioConfig fresh =
        sample_default_scenario(derive_seed(spec.geometry_seed, static_cast<std::uint64_t>(m)), m);
    cfg.bs_positions = fresh.bs_positions;
    cfg.assignment.setConstant(m, cfg.num_bands(), true);
    cfg.bs_clock_std_s = Vec::Constant(m, cfg.bs_clock_std_s.size() > 0
                                              ? cfg.bs_clock_std_s(0)
                                              : 0.0);
    return;
  }
  if (p == "multipath.delta_tau_s") {
    mp.delta_tau_s = value;
    return;
  }
  if (p == "multipath.nlos_ratio_db") {
    mp.nlos_ratio_db = value;
    return;
  }
  if (p == "estimator.n_iter") {
    ecfg.n_iter = static_cast<int>(std::llround(value));
    return;
  }
  throw ConfigError("unsupported sweep parameter path: " + p);
}

namespace {

struct TrialRecord {
  bool failed = true;
  double err_final = 0.0;
  double err_stage1 = 0.0;
  bool int_correct = false;
};

struct MetricValue {
  double value = kNan;
  double std_error = kNan;
};

bool wants(const std::vector<std::string>& metrics, const char* prefix) {
  for (const auto& m : metrics) {
    if (m.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

MetricValue rmse_metric(const std::vector<double>& errors) {
  MetricValue mv;
  const std::size_t n = errors.size();
  if (n == 0) return mv;
  double acc = 0.0;
  for (double e : errors) acc += e * e;
  const double mean_sq = acc / static_cast<double>(n);
  mv.value = std::sqrt(mean_sq);
  if (n > 1 && mv.value > 0.0) {
    double var = 0.0;
    for (double e : errors) var += (e * e - mean_sq) * (e * e - mean_sq);
    var /= static_cast<double>(n - 1);
    mv.std_error = std::sqrt(var / static_cast<double>(n)) / (2.0 * mv.value);
  } else {
    mv.std_error = 0.0;
  }
  return mv;
}

MetricValue rate_metric(int count, int total) {
  MetricValue mv;
  if (total == 0) return mv;
  const double p = static_cast<double>(count) / total;
  mv.value = p;
  mv.std_error = std::sqrt(std::max(p * (1.0 - p), 0.0) / total);
  return mv;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec) {
  if (spec.values.empty()) throw ConfigError("sweep value list is empty");
  if (spec.trials < 1) throw ConfigError("sweep trials must be >= 1");
  SweepResult result;
  result.name = spec.name;
  result.config_hash = config_hash(spec.base);
  result.version = version_string();
  result.seed = spec.seed;

  const bool want_bounds = wants(spec.metrics, "peb_") || wants(spec.metrics, "int_err_rate");
  const bool want_fused = wants(spec.metrics, "peb_delay_fused") ||
                          wants(spec.metrics, "peb_known_fused") ||
                          wants(spec.metrics, "peb_mi_fused");
  const bool want_estimator = wants(spec.metrics, "rmse_") || wants(spec.metrics, "est_") ||
                              wants(spec.metrics, "fail_rate");

  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    const double value = spec.values[vi];
    std::map<std::string, MetricValue> computed;
    ScenarioConfig cfg = spec.base;
    EstimatorConfig ecfg = spec.estimator;
    MultipathSpec mp = spec.multipath;
    bool point_ok = true;
    try {
      apply_sweep_value(spec, value, cfg, ecfg, mp);
      cfg.validate();
    } catch (const std::exception&) {
      point_ok = false;
    }

    if (point_ok && want_bounds) {
      try {
        computed["peb_delay"] = {delay_only_fim(cfg, cfg.ue_position).peb_m, 0.0};
        computed["peb_known"] = {known_integer_fim(cfg, cfg.ue_position).peb_m, 0.0};
      } catch (const std::exception&) {
      }
      try {
        const BoundReport rep = micrb(cfg, cfg.ue_position, spec.n_mc_bound,
                                      derive_seed(spec.seed, 4 * vi));
        computed["peb_mi"] = {rep.peb_mi_m, 0.0};
        computed["int_err_rate"] =
            rate_metric(static_cast<int>(std::lround(rep.integer_error_rate * rep.n_mc)),
                        rep.n_mc);
      } catch (const std::exception&) {
      }
    }
    if (point_ok && want_fused) {
      try {
        const FusionReport fr =
            fused_single_band_peb(cfg, cfg.ue_position, spec.n_mc_bound,
                                  derive_seed(spec.seed, 4 * vi + 1));
        computed["peb_delay_fused"] = {fr.peb_delay_m, 0.0};
        computed["peb_known_fused"] = {fr.peb_known_m, 0.0};
        computed["peb_mi_fused"] = {fr.peb_mi_m, 0.0};
      } catch (const std::exception&) {
      }
    }

    if (point_ok && want_estimator) {
      // Reference differencing matrix for integer-correctness accounting.
      Mat d_truth;
      bool have_d = false;
      try {
        Vec state = Vec::Zero(state_dim(cfg));
        state.head(cfg.n_dim()) = cfg.ue_position;
        d_truth = build_matrices(cfg, state).d;
        have_d = true;
      } catch (const std::exception&) {
      }
      std::vector<TrialRecord> records(spec.trials);
      const std::uint64_t point_seed = derive_seed(spec.seed, 0x771700ull + vi);
      parallel_for(spec.trials, [&](int t) {
        TrialRecord& rec = records[t];
        try {
          const std::uint64_t tseed = derive_seed(point_seed, static_cast<std::uint64_t>(t));
          const MeasurementSet meas = spec.use_signal_layer
                                          ? synthesize_signal_measurements(cfg, mp, tseed)
                                          : synthesize_measurements(cfg, tseed);
          EstimatorConfig ec = ecfg;
          ec.seed = derive_seed(tseed, 0xE57ull);
          const EstimateResult res = estimate(meas, cfg, ec);
          rec.err_final = (res.x_hat - cfg.ue_position).norm();
          rec.err_stage1 = (res.stage1_x - cfg.ue_position).norm();
          if (have_d) {
            const Vec zd_true = d_truth * meas.truth.z.cast<double>();
            rec.int_correct = res.z_d.size() == zd_true.size();
            for (int i = 0; rec.int_correct && i < res.z_d.size(); ++i) {
              rec.int_correct = res.z_d(i) == static_cast<int>(std::llround(zd_true(i)));
            }
          }
          rec.failed = false;
        } catch (const std::exception&) {
          rec.failed = true;
        }
      });
      std::vector<double> final_errors, stage1_errors;
      int fails = 0, int_errors = 0, ok = 0;
      for (const TrialRecord& rec : records) {
        if (rec.failed) {
          ++fails;
          continue;
        }
        ++ok;
        final_errors.push_back(rec.err_final);
        stage1_errors.push_back(rec.err_stage1);
        if (!rec.int_correct) ++int_errors;
      }
      computed["rmse_final"] = rmse_metric(final_errors);
      computed["rmse_stage1"] = rmse_metric(stage1_errors);
      computed["est_int_err_rate"] = rate_metric(int_errors, ok);
      computed["fail_rate"] = rate_metric(fails, spec.trials);
    }

    for (const std::string& metric : spec.metrics) {
      SweepRow row;
      row.value = value;
      row.metric = metric;
      const auto it = computed.find(metric);
      if (it != computed.end()) {
        row.result = it->second.value;
        row.std_error = it->second.std_error;
      }
      result.rows.push_back(row);
    }
  }
  return result;
}

namespace {

void append_csv_rows(std::ostringstream& out, const SweepResult& r) {
  for (const SweepRow& row : r.rows) {
    out << r.name << "," << std::scientific << std::setprecision(16) << row.value << ","
        << row.metric << "," << row.result << "," << row.std_error << "," << r.config_hash << ","
        << r.seed << "," << r.version << "\n";
  }
}

}  // namespace

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "sweep,param_value,metric,value,std_error,config_hash,seed,version\n";
  append_csv_rows(out, result);
  return out.str();
}

std::string sweep_to_csv(const std::vector<SweepResult>& results) {
  std::ostringstream out;
  out << "sweep,param_value,metric,value,std_error,config_hash,seed,version\n";
  for (const SweepResult& r : results) append_csv_rows(out, r);
  return out.str();
}

namespace {

using nlohmann::json;

std::vector<double> ghz_list(std::initializer_list<double> ghz) {
  std::vector<double> out;
  for (double g : ghz) out.push_back(1e9 * g);
  return out;
}

std::vector<double> log_grid_ghz() {
  return ghz_list({2.0, 3.5, 5.0, 7.0, 9.0, 12.0, 16.0, 20.0, 28.0, 40.0, 60.0, 100.0});
}

SweepSpec base_spec(const std::string& name, const std::vector<double>& freqs_hz,
                    std::uint64_t seed, int trials, std::uint64_t geometry_seed = 1) {
  SweepSpec spec;
  spec.name = name;
  spec.base = sample_default_scenario(geometry_seed, 6, freqs_hz);
  spec.seed = seed;
  spec.trials = trials;
  spec.geometry_seed = geometry_seed;
  return spec;
}

std::vector<SweepSpec> preset_fig2(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  const std::vector<std::string> metrics = {"peb_delay", "peb_known", "peb_mi", "int_err_rate"};
  {
    SweepSpec s = base_spec("fig2_single_p0", ghz_list({3.5}), seed, trials);
    s.parameter = "bands[0].carrier_frequency_hz";
    s.values = log_grid_ghz();
    s.metrics = metrics;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig2_single_p3", ghz_list({3.5}), seed, trials);
    set_per_band_power_dbm(s.base, 3.0);
    s.parameter = "bands[0].carrier_frequency_hz";
    s.values = log_grid_ghz();
    s.metrics = metrics;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig2_dual_f1_3p5", ghz_list({3.5, 12.0}), seed, trials);
    s.parameter = "bands[1].carrier_frequency_hz";
    s.values = log_grid_ghz();
    s.metrics = metrics;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig2_dual_f1_28", ghz_list({28.0, 12.0}), seed, trials);
    s.parameter = "bands[1].carrier_frequency_hz";
    s.values = log_grid_ghz();
    s.metrics = metrics;
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig3(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  struct Range {
    const char* name;
    double start, step;
  };
  const Range ranges[] = {{"fig3_fr1", 3.6, 0.2}, {"fig3_fr2", 24.0, 1.0}, {"fig3_fr3", 8.0, 0.5}};
  for (const Range& r : ranges) {
    SweepSpec s = base_spec(r.name, ghz_list({3.5}), seed, trials);
    set_total_power_dbm(s.base, 0.0);
    s.parameter = "num_bands";
    for (int k = 1; k <= 10; ++k) s.values.push_back(k);
    s.band_pool.clear();
    BandConfig first;
    first.carrier_frequency_hz = 3.5e9;
    s.band_pool.push_back(first);
    for (int i = 0; i < 9; ++i) {
      BandConfig b;
      b.carrier_frequency_hz = 1e9 * (r.start + r.step * i);
      s.band_pool.push_back(b);
    }
    s.metrics = {"peb_delay", "peb_known", "peb_mi", "int_err_rate"};
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig4(int trials, std::uint64_t seed) {
  SweepSpec s = base_spec("fig4", ghz_list({3.5, 12.0}), seed, trials);
  s.parameter = "num_bs";
  s.values = {3, 4, 5, 6, 7, 8};
  s.metrics = {"peb_delay",       "peb_known",       "peb_mi",
               "peb_delay_fused", "peb_known_fused", "peb_mi_fused"};
  return {s};
}

std::vector<SweepSpec> preset_fig5(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  const std::vector<double> subcarriers = {44, 59, 88, 110, 133, 200, 300, 456, 612};
  const std::vector<std::string> metrics = {"rmse_stage1", "rmse_final", "peb_delay",
                                            "peb_known",   "peb_mi",     "est_int_err_rate",
                                            "fail_rate"};
  {
    SweepSpec s = base_spec("fig5_ns1", ghz_list({3.5, 12.0}), seed, trials, 12);
    s.parameter = "bands[*].num_subcarriers";
    s.values = subcarriers;
    s.metrics = metrics;
    s.estimator.n_search = 1;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig5_ns1000", ghz_list({3.5, 12.0}), seed, trials, 12);
    s.parameter = "bands[*].num_subcarriers";
    s.values = subcarriers;
    s.metrics = metrics;
    s.estimator.n_search = 1000;
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig6(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  struct Curve {
    const char* name;
    std::vector<double> freqs_ghz;
  };
  const Curve curves[] = {{"fig6_1b", {3.5}},
                          {"fig6_fr1fr1", {3.5, 3.6}},
                          {"fig6_fr1fr3", {3.5, 12.0}},
                          {"fig6_fr1fr3fr2", {3.5, 12.0, 28.1}}};
  for (const Curve& c : curves) {
    std::vector<double> hz;
    for (double g : c.freqs_ghz) hz.push_back(1e9 * g);
    SweepSpec s = base_spec(c.name, hz, seed, trials, 2);
    for (BandConfig& b : s.base.bands) b.num_subcarriers = 456;
    set_total_power_dbm(s.base, 0.0);
    s.parameter = "estimator.n_iter";
    s.values = {1, 2, 3, 4, 5, 6};
    s.metrics = {"rmse_final", "rmse_stage1", "peb_mi", "peb_known"};
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig7(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  struct Curve {
    const char* name;
    std::vector<double> freqs_ghz;
    std::vector<int> subcarriers;
  };
  const Curve curves[] = {{"fig7_1b", {3.5}, {667}},
                          {"fig7_fr1fr1", {3.5, 3.6}, {667, 667}},
                          {"fig7_fr1fr2", {3.5, 28.0}, {667, 3333}}};
  for (const Curve& c : curves) {
    std::vector<double> hz;
    for (double g : c.freqs_ghz) hz.push_back(1e9 * g);
    SweepSpec s = base_spec(c.name, hz, seed, trials);
    for (std::size_t k = 0; k < s.base.bands.size(); ++k) {
      s.base.bands[k].num_subcarriers = c.subcarriers[k];
    }
    s.parameter = "bands[*].tx_power_dbm";
    for (double p = -24.0; p <= 9.01; p += 3.0) s.values.push_back(p);
    s.metrics = {"rmse_final", "peb_mi", "peb_known", "peb_delay", "est_int_err_rate"};
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig8a(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  const std::vector<double> deltas = {1e-12, 3e-12, 1e-11, 3e-11, 1e-10, 3e-10, 1e-9};
  const std::vector<std::string> metrics = {"rmse_final", "rmse_stage1", "peb_mi", "peb_known",
                                            "peb_delay"};
  {
    SweepSpec s = base_spec("fig8a_dual", ghz_list({3.5, 3.6}), seed, trials, 12);
    for (BandConfig& b : s.base.bands) b.num_subcarriers = 150;
    s.parameter = "bs_clock_std_s";
    s.values = deltas;
    s.metrics = metrics;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig8a_single", ghz_list({3.5}), seed, trials, 12);
    for (BandConfig& b : s.base.bands) b.num_subcarriers = 150;
    set_per_band_power_dbm(s.base, 3.0);  // doubled power for the single band
    s.parameter = "bs_clock_std_s";
    s.values = deltas;
    s.metrics = metrics;
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig8b(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  const std::vector<double> deltas = {5e-8, 1e-7, 2e-7, 3.5e-7, 5e-7, 7.5e-7, 1e-6};
  const std::vector<std::string> metrics = {"rmse_final", "rmse_stage1", "fail_rate"};
  {
    SweepSpec s = base_spec("fig8b_dual", ghz_list({3.5, 3.6}), seed, trials, 12);
    s.parameter = "multipath.delta_tau_s";
    s.values = deltas;
    s.metrics = metrics;
    s.use_signal_layer = true;
    s.multipath.enabled = true;
    s.multipath.nlos_ratio_db = -6.0;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig8b_single", ghz_list({3.5}), seed, trials, 12);
    set_per_band_power_dbm(s.base, 3.0);  // doubled power for the single band
    s.parameter = "multipath.delta_tau_s";
    s.values = deltas;
    s.metrics = metrics;
    s.use_signal_layer = true;
    s.multipath.enabled = true;
    s.multipath.nlos_ratio_db = -6.0;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig8b_dual_los", ghz_list({3.5, 3.6}), seed, trials, 12);
    s.parameter = "multipath.delta_tau_s";
    s.values = {0.0};
    s.metrics = metrics;
    s.use_signal_layer = true;
    s.multipath.enabled = false;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig8b_single_los", ghz_list({3.5}), seed, trials, 12);
    set_per_band_power_dbm(s.base, 3.0);
    s.parameter = "multipath.delta_tau_s";
    s.values = {0.0};
    s.metrics = metrics;
    s.use_signal_layer = true;
    s.multipath.enabled = false;
    out.push_back(s);
  }
  return out;
}

std::vector<SweepSpec> preset_fig8c(int trials, std::uint64_t seed) {
  std::vector<SweepSpec> out;
  const std::vector<double> ratios = {-30, -25, -20, -15, -10, -5, 0};
  const std::vector<std::string> metrics = {"rmse_final", "rmse_stage1", "fail_rate"};
  {
    SweepSpec s = base_spec("fig8c_dual", ghz_list({3.5, 3.6}), seed, trials, 12);
    s.parameter = "multipath.nlos_ratio_db";
    s.values = ratios;
    s.metrics = metrics;
    s.use_signal_layer = true;
    s.multipath.enabled = true;
    s.multipath.delta_tau_s = 1e-7;
    out.push_back(s);
  }
  {
    SweepSpec s = base_spec("fig8c_single", ghz_list({3.5}), seed, trials, 12);
    set_per_band_power_dbm(s.base, 3.0);
    s.parameter = "multipath.nlos_ratio_db";
    s.values = ratios;
    s.metrics = metrics;
    s.use_signal_layer = true;
    s.multipath.enabled = true;
    s.multipath.delta_tau_s = 1e-7;
    out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8a", "fig8b", "fig8c"};
}

std::vector<SweepSpec> preset(const std::string& name, int trials, std::uint64_t seed) {
  const int t200 = trials > 0 ? trials : 200;
  const int t100 = trials > 0 ? trials : 100;
  if (name == "fig2") return preset_fig2(t200, seed);
  if (name == "fig3") return preset_fig3(t200, seed);
  if (name == "fig4") return preset_fig4(t200, seed);
  if (name == "fig5") return preset_fig5(t200, seed);
  if (name == "fig6") return preset_fig6(t200, seed);
  if (name == "fig7") return preset_fig7(t200, seed);
  if (name == "fig8a") return preset_fig8a(t200, seed);
  if (name == "fig8b") return preset_fig8b(t100, seed);
  if (name == "fig8c") return preset_fig8c(t100, seed);
  throw ConfigError("unknown preset: " + name + " (available: fig2..fig8c)");
}

SweepSpec sweep_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep JSON parse error: ") + e.what());
  }
  try {
    SweepSpec spec;
    spec.name = j.value("name", std::string("sweep"));
    if (j.contains("scenario")) {
      spec.base = parse_scenario_json(j.at("scenario").dump());
    } else if (j.contains("scenario_file")) {
      spec.base = load_scenario(j.at("scenario_file").get<std::string>());
    } else {
      throw ConfigError("sweep spec needs a scenario or scenario_file field");
    }
    spec.parameter = j.at("parameter").get<std::string>();
    for (const auto& v : j.at("values")) spec.values.push_back(v.get<double>());
    spec.trials = j.value("trials", 200);
    for (const auto& m : j.at("metrics")) spec.metrics.push_back(m.get<std::string>());
    spec.seed = j.value("seed", 1ull);
    spec.n_mc_bound = j.value("n_mc_bound", 1000);
    spec.geometry_seed = j.value("geometry_seed", 1ull);
    spec.use_signal_layer = j.value("use_signal_layer", false);
    if (j.contains("estimator")) {
      const auto& e = j.at("estimator");
      spec.estimator.n_iter = e.value("n_iter", 2);
      spec.estimator.n_search = e.value("n_search", 1);
      spec.estimator.search_scale = e.value("search_scale", 1.0);
      if (e.value("sampling", std::string("gaussian")) == std::string("deterministic_grid")) {
        spec.estimator.sampling = SearchSampling::deterministic_grid;
      }
    }
    if (j.contains("multipath")) {
      const auto& m = j.at("multipath");
      spec.multipath.enabled = m.value("enabled", true);
      spec.multipath.delta_tau_s = m.value("delta_tau_s", 0.0);
      spec.multipath.nlos_ratio_db = m.value("nlos_ratio_db", -6.0);
    }
    if (j.contains("band_pool")) {
      for (const auto& b : j.at("band_pool")) {
        BandConfig band;
        band.carrier_frequency_hz = b.value("carrier_frequency_hz", 3.5e9);
        band.subcarrier_spacing_hz = b.value("subcarrier_spacing_hz", 30e3);
        band.num_subcarriers = b.value("num_subcarriers", 612);
        band.tx_power_w = b.value("tx_power_w", 1e-3);
        spec.band_pool.push_back(band);
      }
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep JSON field error: ") + e.what());
  }
}

}  // namespace mbcpp
