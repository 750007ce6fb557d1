#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mbcpp/bounds.hpp"
#include "mbcpp/estimator.hpp"
#include "mbcpp/harness.hpp"
#include "mbcpp/signal.hpp"

namespace {

using namespace mbcpp;

void write_output(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write output file: " + path);
  out << text;
}

std::string csv_num(double v) {
  std::ostringstream out;
  out << std::scientific << std::setprecision(16) << v;
  return out.str();
}

int run_bounds(const std::string& config, int n_mc, std::uint64_t seed,
               std::optional<double> clock_std, const std::string& out_path) {
  ScenarioConfig cfg = load_scenario(config);
  if (clock_std) cfg.bs_clock_std_s = Vec::Constant(cfg.num_bs(), *clock_std);
  const BoundReport rep = micrb(cfg, cfg.ue_position, n_mc, seed);
  std::ostringstream out;
  out << "scenario_id,peb_delay_m,peb_known_m,peb_mi_m,int_err_rate\n";
  out << config_hash(cfg) << "," << csv_num(rep.peb_delay_m) << "," << csv_num(rep.peb_known_m)
      << "," << csv_num(rep.peb_mi_m) << "," << csv_num(rep.integer_error_rate) << "\n";
  write_output(out.str(), out_path);
  return 0;
}

int run_estimate(const std::string& config, int trials, std::uint64_t seed, int n_iter,
                 int n_search, double eps, const std::string& out_path) {
  const ScenarioConfig cfg = load_scenario(config);
  EstimatorConfig ecfg;
  ecfg.n_iter = n_iter;
  ecfg.n_search = n_search;
  ecfg.search_scale = eps;

  Vec truth_state = Vec::Zero(state_dim(cfg));
  truth_state.head(cfg.n_dim()) = cfg.ue_position;
  const Mat d_ref = build_matrices(cfg, truth_state).d;

  std::ostringstream out;
  out << "trial_id,x_err_m,stage1_err_m,ml_cost,int_correct\n";
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t tseed = derive_seed(seed, static_cast<std::uint64_t>(t));
    const MeasurementSet meas = synthesize_measurements(cfg, tseed);
    EstimatorConfig ec = ecfg;
    ec.seed = derive_seed(tseed, 0xE57ull);
    const EstimateResult res = estimate(meas, cfg, ec);
    const Vec zd_true = d_ref * meas.truth.z.cast<double>();
    bool correct = res.z_d.size() == zd_true.size();
    for (int i = 0; correct && i < res.z_d.size(); ++i) {
      correct = res.z_d(i) == static_cast<int>(std::llround(zd_true(i)));
    }
    out << t << "," << csv_num((res.x_hat - cfg.ue_position).norm()) << ","
        << csv_num((res.stage1_x - cfg.ue_position).norm()) << "," << csv_num(res.ml_cost) << ","
        << (correct ? 1 : 0) << "\n";
  }
  write_output(out.str(), out_path);
  return 0;
}

int run_sweep_cmd(const std::string& config, const std::string& preset_name, int trials,
                  std::uint64_t seed, const std::string& out_path) {
  std::vector<SweepSpec> specs;
  if (!preset_name.empty()) {
    specs = preset(preset_name, trials, seed);
  } else if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot open sweep config: " + config);
    std::stringstream buf;
    buf << in.rdbuf();
    SweepSpec spec = sweep_from_json(buf.str());
    if (trials > 0) spec.trials = trials;
    spec.seed = seed;
    specs.push_back(spec);
  } else {
    throw ConfigError("sweep needs --config or --preset");
  }
  std::vector<SweepResult> results;
  for (const SweepSpec& spec : specs) results.push_back(run_sweep(spec));
  write_output(sweep_to_csv(results), out_path);
  return 0;
}

struct PathSpecArg {
  double offset_ns = 0.0;
  double rel_db = 0.0;
};

std::vector<PathSpecArg> parse_paths(const std::string& text) {
  std::vector<PathSpecArg> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("path spec entries must be offset_ns:rel_db");
    PathSpecArg p;
    p.offset_ns = std::stod(item.substr(0, colon));
    p.rel_db = std::stod(item.substr(colon + 1));
    out.push_back(p);
  }
  if (out.empty()) throw ConfigError("path spec is empty");
  return out;
}

int run_signal(double carrier_ghz, double scs_khz, int subcarriers, double tx_dbm,
               double distance_m, double noise_psd_dbm_hz, double noise_figure_db,
               double lambda_ref_m, const std::string& paths_text, const std::string& est_name,
               int trials, std::uint64_t seed, const std::string& out_path) {
  BandConfig band;
  band.carrier_frequency_hz = 1e9 * carrier_ghz;
  band.subcarrier_spacing_hz = 1e3 * scs_khz;
  band.num_subcarriers = subcarriers;
  band.tx_power_w = dbm_to_watts(tx_dbm);
  const double noise_psd = dbm_to_watts(noise_psd_dbm_hz + noise_figure_db);
  const double rho = lambda_ref_m / (4.0 * std::numbers::pi * distance_m);
  const double es = band.tx_power_w / (band.num_subcarriers * band.subcarrier_spacing_hz);
  const std::vector<PathSpecArg> path_args = parse_paths(paths_text);
  const bool use_esprit = est_name == "esprit";
  if (!use_esprit && est_name != "single") throw ConfigError("--estimator must be single or esprit");

  const double tau0 = distance_m / speed_of_light;
  const double theta0 = distance_m / band.wavelength_m();

  std::ostringstream out;
  out << "trial_id,delay_err_m,phase_err_m\n";
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<SignalPath> paths;
    for (const PathSpecArg& p : path_args) {
      const double tau = tau0 + 1e-9 * p.offset_ns;
      const double extra = paths.empty() ? 0.0 : rng.uniform();
      const double theta =
          theta0 + band.carrier_frequency_hz * 1e-9 * p.offset_ns + extra;
      paths.push_back({tau, std::polar(rho * std::pow(10.0, p.rel_db / 20.0),
                                       -2.0 * std::numbers::pi * theta)});
    }
    const FreqDomainObservation obs = synthesize_signal(band, es, noise_psd, paths, rng);
    const PathEstimate est = use_esprit ? estimate_dual_path_esprit(obs)
                                        : estimate_single_path(obs);
    const double delay_err = speed_of_light * (est.delays_s[est.los_index] - tau0);
    double dphi = est.phase_cycles[est.los_index] - (theta0 - std::floor(theta0));
    dphi -= std::round(dphi);  // wrap to [-1/2, 1/2)
    out << t << "," << csv_num(delay_err) << "," << csv_num(band.wavelength_m() * dphi) << "\n";
  }
  write_output(out.str(), out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-band carrier-phase positioning toolkit"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::string config, out_path, preset_name;
  int n_mc = 1000, trials = 200, n_iter = 2, n_search = 1;
  std::uint64_t seed = 1;
  double eps = 1.0;
  std::optional<double> clock_std;

  CLI::App* bounds = app.add_subcommand("bounds", "Position error bounds for a scenario");
  bounds->add_option("--config,--scenario", config, "scenario JSON file")->required();
  bounds->add_option("--n-mc", n_mc, "Monte-Carlo samples for the mixed-integer bound");
  bounds->add_option("--seed", seed, "root seed");
  bounds->add_option("--clock-std", clock_std, "override per-BS clock std (seconds)");
  bounds->add_option("--out", out_path, "output CSV path (stdout when omitted)");

  CLI::App* est = app.add_subcommand("estimate", "Monte-Carlo runs of the two-stage estimator");
  est->add_option("--config,--scenario", config, "scenario JSON file")->required();
  est->add_option("--trials", trials, "number of trials");
  est->add_option("--seed", seed, "root seed");
  est->add_option("--n-iter", n_iter, "second-stage iterations");
  est->add_option("--n-search", n_search, "candidate initial points");
  est->add_option("--eps", eps, "search region scale");
  est->add_option("--out", out_path, "output CSV path");

  CLI::App* sweep = app.add_subcommand("sweep", "Parameter sweeps and experiment presets");
  sweep->add_option("--config", config, "sweep spec JSON file");
  sweep->add_option("--preset", preset_name, "built-in preset (fig2..fig8c)");
  sweep->add_option("--trials", trials, "trials per sweep point (0 keeps the preset default)");
  sweep->add_option("--seed", seed, "root seed");
  sweep->add_option("--out", out_path, "output CSV path");
  trials = 0;

  double carrier_ghz = 3.5, scs_khz = 30.0, tx_dbm = 0.0, distance_m = 100.0;
  double noise_psd_dbm_hz = -174.0, noise_figure_db = 13.0, lambda_ref_m = 0.03;
  int subcarriers = 612;
  std::string paths_text = "0:0", est_name = "single";
  CLI::App* signal = app.add_subcommand("signal", "Signal-layer delay/phase estimation trials");
  signal->add_option("--carrier-ghz", carrier_ghz, "carrier frequency, GHz");
  signal->add_option("--scs-khz", scs_khz, "subcarrier spacing, kHz");
  signal->add_option("--subcarriers", subcarriers, "number of subcarriers");
  signal->add_option("--tx-dbm", tx_dbm, "transmit power, dBm");
  signal->add_option("--distance-m", distance_m, "link distance, m");
  signal->add_option("--noise-psd-dbm-hz", noise_psd_dbm_hz, "noise PSD, dBm/Hz");
  signal->add_option("--noise-figure-db", noise_figure_db, "receiver noise figure, dB");
  signal->add_option("--lambda-ref-m", lambda_ref_m, "reference wavelength for the path gain");
  signal->add_option("--paths", paths_text, "path list offset_ns:rel_db[,offset_ns:rel_db]");
  signal->add_option("--estimator", est_name, "single or esprit");
  signal->add_option("--trials", trials, "number of trials");
  signal->add_option("--seed", seed, "root seed");
  signal->add_option("--out", out_path, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bounds->parsed()) return run_bounds(config, n_mc, seed, clock_std, out_path);
    if (est->parsed()) {
      return run_estimate(config, trials > 0 ? trials : 200, seed, n_iter, n_search, eps,
                          out_path);
    }
    if (sweep->parsed()) return run_sweep_cmd(config, preset_name, trials, seed, out_path);
    if (signal->parsed()) {
      return run_signal(carrier_ghz, scs_khz, subcarriers, tx_dbm, distance_m, noise_psd_dbm_hz,
                        noise_figure_db, lambda_ref_m, paths_text, est_name,
                        trials > 0 ? trials : 2000, seed, out_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
