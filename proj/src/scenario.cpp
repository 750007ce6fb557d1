#include "mbcpp/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "mbcpp/rng.hpp"

namespace mbcpp {

namespace {

constexpr double pi = std::numbers::pi;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }

int ScenarioConfig::bands_of_bs(int m) const {
  int n = 0;
  for (int k = 0; k < num_bands(); ++k) n += assignment(m, k) ? 1 : 0;
  return n;
}

int ScenarioConfig::bs_on_band(int k) const {
  int n = 0;
  for (int m = 0; m < num_bs(); ++m) n += assignment(m, k) ? 1 : 0;
  return n;
}

double ScenarioConfig::tx_power_w_for(int m, int k) const {
  if (power_mode == PowerMode::per_band) return bands[k].tx_power_w;
  const int n = bands_of_bs(m);
  return n > 0 ? total_tx_power_w / n : 0.0;
}

double ScenarioConfig::phase_offset_cycles(int k) const {
  if (phase_offset_mode == PhaseOffsetMode::band_independent) return ue_phase_offsets_cycles(0);
  return ue_phase_offsets_cycles.size() == 1 ? ue_phase_offsets_cycles(0)
                                             : ue_phase_offsets_cycles(k);
}

bool ScenarioConfig::any_clock_imperfection() const {
  return bs_clock_std_s.size() > 0 && bs_clock_std_s.maxCoeff() > 0.0;
}

void ScenarioConfig::validate() const {
  const int nd = n_dim();
  require(nd == 2 || nd == 3, "ue_position must have 2 or 3 coordinates");
  require(num_bs() >= 1, "at least one BS position required");
  for (const Vec& p : bs_positions) {
    require(static_cast<int>(p.size()) == nd, "BS position dimension mismatch");
    if ((p - ue_position).norm() == 0.0) {
      throw GeometryError("a BS position coincides with the UE position");
    }
  }
  require(num_bands() >= 1, "at least one band required");
  for (int k = 0; k < num_bands(); ++k) {
    const BandConfig& b = bands[k];
    require(b.carrier_frequency_hz > 0 && std::isfinite(b.carrier_frequency_hz),
            "carrier_frequency_hz must be positive and finite");
    require(b.subcarrier_spacing_hz > 0, "subcarrier_spacing_hz must be positive");
    require(b.num_subcarriers > 0, "num_subcarriers must be positive");
    if (power_mode == PowerMode::per_band) {
      require(b.tx_power_w > 0, "tx_power_w must be positive");
    }
    require(b.bandwidth_hz() > 0, "band bandwidth must be positive");
  }
  if (power_mode == PowerMode::per_bs_total) {
    require(total_tx_power_w > 0, "total_tx_power_w must be positive");
  }
  require(assignment.rows() == num_bs() && assignment.cols() == num_bands(),
          "assignment must be an M x K matrix");
  int n_pairs = 0;
  for (int m = 0; m < num_bs(); ++m) n_pairs += bands_of_bs(m);
  require(n_pairs > 0, "assignment selects no (BS, band) pair");
  require(noise_psd_w_per_hz > 0, "noise_psd_w_per_hz must be positive");
  require(reference_wavelength_m > 0, "reference_wavelength_m must be positive");
  const auto n_phi = ue_phase_offsets_cycles.size();
  require(n_phi == 1 || n_phi == num_bands(),
          "ue_phase_offsets_cycles must have 1 or K entries");
  require(bs_clock_std_s.size() == num_bs(), "bs_clock_std_s must have M entries");
  require(bs_clock_std_s.minCoeff() >= 0.0, "bs_clock_std_s entries must be nonnegative");
}

bool ScenarioConfig::is_identifiable() const {
  int distinct_bs = 0;
  for (int m = 0; m < num_bs(); ++m) distinct_bs += bands_of_bs(m) > 0 ? 1 : 0;
  if (distinct_bs < n_dim() + 1) return false;
  int n_pairs = 0;
  for (int m = 0; m < num_bs(); ++m) n_pairs += bands_of_bs(m);
  if (phase_offset_mode == PhaseOffsetMode::band_dependent) {
    for (int k = 0; k < num_bands(); ++k) {
      const int n = bs_on_band(k);
      if (n == 1) return false;  // z and the band offset are indistinguishable
    }
  }
  return n_pairs >= n_dim() + 2;
}

double delay_noise_std_m(double snr, double bandwidth_hz) {
  return std::sqrt(3.0 * speed_of_light * speed_of_light /
                   (2.0 * snr * pi * pi * bandwidth_hz * bandwidth_hz));
}

double phase_noise_std_m(double snr, double wavelength_m) {
  return std::sqrt(wavelength_m * wavelength_m / (8.0 * snr * pi * pi));
}

LinkBudget compute_link_budget(const ScenarioConfig& cfg) {
  cfg.validate();
  const int m_bs = cfg.num_bs();
  const int k_bands = cfg.num_bands();
  LinkBudget out;
  out.rho = Mat::Zero(m_bs, k_bands);
  out.snr = Mat::Zero(m_bs, k_bands);
  out.sigma_tau_m = Mat::Zero(m_bs, k_bands);
  out.sigma_theta_m = Mat::Zero(m_bs, k_bands);
  for (int m = 0; m < m_bs; ++m) {
    const double dist = (cfg.bs_positions[m] - cfg.ue_position).norm();
    for (int k = 0; k < k_bands; ++k) {
      if (!cfg.is_assigned(m, k)) continue;
      const BandConfig& band = cfg.bands[k];
      const double power = cfg.tx_power_w_for(m, k);
      require(power > 0, "link power must be positive");
      const double rho = cfg.reference_wavelength_m / (4.0 * pi * dist);
      const double es = power / (band.num_subcarriers * band.subcarrier_spacing_hz);
      const double snr = band.num_subcarriers * es * rho * rho / cfg.noise_psd_w_per_hz;
      out.rho(m, k) = rho;
      out.snr(m, k) = snr;
      out.sigma_tau_m(m, k) = delay_noise_std_m(snr, band.bandwidth_hz());
      out.sigma_theta_m(m, k) = phase_noise_std_m(snr, band.wavelength_m());
    }
  }
  return out;
}

ScenarioConfig sample_default_scenario(std::uint64_t seed, int n_bs,
                                       const std::vector<double>& carrier_frequencies_hz) {
  if (n_bs < 1) throw ConfigError("sample_default_scenario requires n_bs >= 1");
  if (carrier_frequencies_hz.empty()) throw ConfigError("at least one carrier frequency required");
  Rng rng(seed);
  ScenarioConfig cfg;
  cfg.ue_position = Vec::Zero(2);
  cfg.bs_positions.reserve(n_bs);
  for (int m = 0; m < n_bs; ++m) {
    Vec p(2);
    p << rng.gaussian(0.0, 100.0), rng.gaussian(0.0, 100.0);
    cfg.bs_positions.push_back(p);
  }
  for (double fc : carrier_frequencies_hz) {
    BandConfig band;
    band.carrier_frequency_hz = fc;
    cfg.bands.push_back(band);
  }
  const int k = cfg.num_bands();
  cfg.assignment.setConstant(n_bs, k, true);
  cfg.ue_phase_offsets_cycles = Vec::Zero(k);
  for (int i = 0; i < k; ++i) cfg.ue_phase_offsets_cycles(i) = rng.uniform();
  cfg.bs_clock_std_s = Vec::Zero(n_bs);
  return cfg;
}

void set_total_power_dbm(ScenarioConfig& cfg, double total_dbm) {
  cfg.power_mode = PowerMode::per_bs_total;
  cfg.total_tx_power_w = dbm_to_watts(total_dbm);
}

void set_per_band_power_dbm(ScenarioConfig& cfg, double dbm) {
  cfg.power_mode = PowerMode::per_band;
  for (BandConfig& band : cfg.bands) band.tx_power_w = dbm_to_watts(dbm);
}

namespace {

using nlohmann::json;

double power_field_w(const json& j, const std::string& w_key, const std::string& dbm_key,
                     double fallback_w) {
  if (j.contains(w_key)) return j.at(w_key).get<double>();
  if (j.contains(dbm_key)) return dbm_to_watts(j.at(dbm_key).get<double>());
  return fallback_w;
}

BandConfig band_from_json(const json& j) {
  BandConfig b;
  if (j.contains("carrier_frequency_hz")) {
    b.carrier_frequency_hz = j.at("carrier_frequency_hz").get<double>();
  } else if (j.contains("carrier_frequency_ghz")) {
    b.carrier_frequency_hz = 1e9 * j.at("carrier_frequency_ghz").get<double>();
  }
  if (j.contains("subcarrier_spacing_hz")) {
    b.subcarrier_spacing_hz = j.at("subcarrier_spacing_hz").get<double>();
  } else if (j.contains("subcarrier_spacing_khz")) {
    b.subcarrier_spacing_hz = 1e3 * j.at("subcarrier_spacing_khz").get<double>();
  }
  if (j.contains("num_subcarriers")) b.num_subcarriers = j.at("num_subcarriers").get<int>();
  b.tx_power_w = power_field_w(j, "tx_power_w", "tx_power_dbm", b.tx_power_w);
  return b;
}

json band_to_json(const BandConfig& b) {
  return json{{"carrier_frequency_hz", b.carrier_frequency_hz},
              {"subcarrier_spacing_hz", b.subcarrier_spacing_hz},
              {"num_subcarriers", b.num_subcarriers},
              {"tx_power_w", b.tx_power_w}};
}

Vec vec_from_json(const json& j) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

ScenarioConfig parse_scenario_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario JSON parse error: ") + e.what());
  }
  try {
    ScenarioConfig cfg;
    cfg.ue_position = vec_from_json(j.at("ue_position"));
    for (const auto& p : j.at("bs_positions")) cfg.bs_positions.push_back(vec_from_json(p));
    for (const auto& b : j.at("bands")) cfg.bands.push_back(band_from_json(b));
    const int m = cfg.num_bs();
    const int k = cfg.num_bands();
    cfg.assignment.setConstant(m, k, true);
    if (j.contains("assignment")) {
      const auto& a = j.at("assignment");
      if (static_cast<int>(a.size()) != m) throw ConfigError("assignment must have M rows");
      for (int r = 0; r < m; ++r) {
        if (static_cast<int>(a[r].size()) != k) throw ConfigError("assignment must have K columns");
        for (int c = 0; c < k; ++c) cfg.assignment(r, c) = a[r][c].get<bool>();
      }
    }
    if (j.contains("noise_psd_w_per_hz")) {
      cfg.noise_psd_w_per_hz = j.at("noise_psd_w_per_hz").get<double>();
    } else if (j.contains("noise_psd_dbm_hz")) {
      double dbm_hz = j.at("noise_psd_dbm_hz").get<double>();
      if (j.contains("noise_figure_db")) dbm_hz += j.at("noise_figure_db").get<double>();
      cfg.noise_psd_w_per_hz = dbm_to_watts(dbm_hz);
    }
    if (j.contains("ue_clock_bias_s")) cfg.ue_clock_bias_s = j.at("ue_clock_bias_s").get<double>();
    cfg.ue_phase_offsets_cycles = j.contains("ue_phase_offsets_cycles")
                                      ? vec_from_json(j.at("ue_phase_offsets_cycles"))
                                      : Vec::Zero(k);
    cfg.bs_clock_std_s = j.contains("bs_clock_std_s")
                             ? vec_from_json(j.at("bs_clock_std_s"))
                             : Vec::Zero(m);
    if (cfg.bs_clock_std_s.size() == 1 && m > 1) {
      cfg.bs_clock_std_s = Vec::Constant(m, cfg.bs_clock_std_s(0));
    }
    if (j.contains("reference_wavelength_m")) {
      cfg.reference_wavelength_m = j.at("reference_wavelength_m").get<double>();
    }
    if (j.contains("phase_offset_mode")) {
      const std::string mode = j.at("phase_offset_mode").get<std::string>();
      if (mode == "band_dependent") {
        cfg.phase_offset_mode = PhaseOffsetMode::band_dependent;
      } else if (mode == "band_independent") {
        cfg.phase_offset_mode = PhaseOffsetMode::band_independent;
      } else {
        throw ConfigError("phase_offset_mode must be band_dependent or band_independent");
      }
    }
    if (j.contains("power_mode")) {
      const std::string mode = j.at("power_mode").get<std::string>();
      if (mode == "per_band") {
        cfg.power_mode = PowerMode::per_band;
      } else if (mode == "per_bs_total") {
        cfg.power_mode = PowerMode::per_bs_total;
      } else {
        throw ConfigError("power_mode must be per_band or per_bs_total");
      }
    }
    cfg.total_tx_power_w =
        power_field_w(j, "total_tx_power_w", "total_tx_power_dbm", cfg.total_tx_power_w);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario JSON field error: ") + e.what());
  }
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["ue_position"] = vec_to_json(cfg.ue_position);
  j["bs_positions"] = json::array();
  for (const Vec& p : cfg.bs_positions) j["bs_positions"].push_back(vec_to_json(p));
  j["bands"] = json::array();
  for (const BandConfig& b : cfg.bands) j["bands"].push_back(band_to_json(b));
  j["assignment"] = json::array();
  for (int m = 0; m < cfg.num_bs(); ++m) {
    json row = json::array();
    for (int k = 0; k < cfg.num_bands(); ++k) row.push_back(static_cast<bool>(cfg.assignment(m, k)));
    j["assignment"].push_back(row);
  }
  j["noise_psd_w_per_hz"] = cfg.noise_psd_w_per_hz;
  j["ue_clock_bias_s"] = cfg.ue_clock_bias_s;
  j["ue_phase_offsets_cycles"] = vec_to_json(cfg.ue_phase_offsets_cycles);
  j["bs_clock_std_s"] = vec_to_json(cfg.bs_clock_std_s);
  j["reference_wavelength_m"] = cfg.reference_wavelength_m;
  j["phase_offset_mode"] = cfg.phase_offset_mode == PhaseOffsetMode::band_dependent
                               ? "band_dependent"
                               : "band_independent";
  j["power_mode"] = cfg.power_mode == PowerMode::per_band ? "per_band" : "per_bs_total";
  j["total_tx_power_w"] = cfg.total_tx_power_w;
  return j.dump(2);
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_json(buf.str());
}

void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scenario file: " + path);
  out << scenario_to_json(cfg) << "\n";
}

}  // namespace mbcpp
