#include "gcs/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "gcs/errors.hpp"

namespace gcs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  double out = 0;
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, out);
  if (t.empty() || ec != std::errc() || ptr != end || !std::isfinite(out))
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  long long out = 0;
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, out);
  if (t.empty() || ec != std::errc() || ptr != end) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("'" + key + "': out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

NlinCoefficients& inline_kappa(RunConfig& cfg) {
  if (!cfg.kappa) cfg.kappa = NlinCoefficients{};
  return *cfg.kappa;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"link.n_spans", [](RunConfig& c, const auto& k, const auto& v) { c.link.n_spans = to_int(k, v); }},
      {"link.span_length_km", [](RunConfig& c, const auto& k, const auto& v) { c.link.span_length_km = to_double(k, v); }},
      {"link.attenuation_db_per_km",
       [](RunConfig& c, const auto& k, const auto& v) { c.link.attenuation_db_per_km = to_double(k, v); }},
      {"link.gamma_per_w_km", [](RunConfig& c, const auto& k, const auto& v) { c.link.gamma_per_w_km = to_double(k, v); }},
      {"link.dispersion_ps_nm_km",
       [](RunConfig& c, const auto& k, const auto& v) { c.link.dispersion_ps_nm_km = to_double(k, v); }},
      {"link.noise_figure_db", [](RunConfig& c, const auto& k, const auto& v) { c.link.noise_figure_db = to_double(k, v); }},
      {"link.symbol_rate_hz", [](RunConfig& c, const auto& k, const auto& v) { c.link.symbol_rate_hz = to_double(k, v); }},
      {"link.n_channels", [](RunConfig& c, const auto& k, const auto& v) { c.link.n_channels = to_int(k, v); }},
      {"link.channel_spacing_hz",
       [](RunConfig& c, const auto& k, const auto& v) { c.link.channel_spacing_hz = to_double(k, v); }},
      {"link.center_wavelength_nm",
       [](RunConfig& c, const auto& k, const auto& v) { c.link.center_wavelength_nm = to_double(k, v); }},
      {"link.tx_awgn_snr_db", [](RunConfig& c, const auto& k, const auto& v) { c.link.tx_awgn_snr_db = to_double(k, v); }},

      {"model.kind", [](RunConfig& c, const auto&, const auto& v) { c.model = parse_model_kind(trim(v)); }},
      {"model.kappa_file", [](RunConfig& c, const auto&, const auto& v) { c.kappa_file = trim(v); }},
      {"model.kappa0", [](RunConfig& c, const auto& k, const auto& v) { inline_kappa(c).kappa0 = to_double(k, v); }},
      {"model.kappa1", [](RunConfig& c, const auto& k, const auto& v) { inline_kappa(c).kappa1 = to_double(k, v); }},
      {"model.kappa2", [](RunConfig& c, const auto& k, const auto& v) { inline_kappa(c).kappa2 = to_double(k, v); }},
      {"model.launch_power_dbm", [](RunConfig& c, const auto& k, const auto& v) { c.launch_power_dbm = to_double(k, v); }},

      {"train.M", [](RunConfig& c, const auto& k, const auto& v) { c.train.M = to_int(k, v); }},
      {"train.n_complex_dims", [](RunConfig& c, const auto& k, const auto& v) { c.train.n_complex_dims = to_int(k, v); }},
      {"train.layers", [](RunConfig& c, const auto& k, const auto& v) { c.train.layers = to_int(k, v); }},
      {"train.hidden_units", [](RunConfig& c, const auto& k, const auto& v) { c.train.hidden_units = to_int(k, v); }},
      {"train.learning_rate", [](RunConfig& c, const auto& k, const auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"train.power_learning_rate",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.power_learning_rate = to_double(k, v); }},
      {"train.batch_schedule",
       [](RunConfig& c, const auto&, const auto& v) { c.train.batch_schedule = parse_batch_schedule(v); }},
      {"train.max_iterations", [](RunConfig& c, const auto& k, const auto& v) { c.train.max_iterations = to_int(k, v); }},
      {"train.plateau_window", [](RunConfig& c, const auto& k, const auto& v) { c.train.plateau_window = to_int(k, v); }},
      {"train.plateau_tolerance",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.plateau_tolerance = to_double(k, v); }},
      {"train.seed",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.seed = static_cast<std::uint64_t>(to_integer(k, v)); }},
      {"train.joint_power", [](RunConfig& c, const auto& k, const auto& v) { c.train.train_launch_power = to_bool(k, v); }},
      {"train.detach_moments", [](RunConfig& c, const auto& k, const auto& v) { c.train.detach_moments = to_bool(k, v); }},
      {"train.max_abs_power_dbm",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.max_abs_power_dbm = to_double(k, v); }},

      {"ssf.scale",
       [](RunConfig& c, const auto& k, const auto& v) {
         const std::string s = trim(v);
         if (s == "desk")
           c.ssf = SsfConfig::desk_scale();
         else if (s == "full")
           c.ssf = SsfConfig::full_scale();
         else
           throw ConfigError("'" + k + "': expected desk or full, got '" + v + "'");
         c.ssf_scale = s;
       }},
      {"ssf.n_symbols", [](RunConfig& c, const auto& k, const auto& v) { c.ssf.n_symbols = to_int(k, v); }},
      {"ssf.oversampling", [](RunConfig& c, const auto& k, const auto& v) { c.ssf.oversampling = to_int(k, v); }},
      {"ssf.n_polarizations", [](RunConfig& c, const auto& k, const auto& v) { c.ssf.n_polarizations = to_int(k, v); }},
      {"ssf.n_channels", [](RunConfig& c, const auto& k, const auto& v) { c.ssf.link.n_channels = to_int(k, v); }},
      {"ssf.rolloff", [](RunConfig& c, const auto& k, const auto& v) { c.ssf.rolloff = to_double(k, v); }},
      {"ssf.step_km", [](RunConfig& c, const auto& k, const auto& v) { c.ssf.step_km = to_double(k, v); }},
      {"ssf.seed",
       [](RunConfig& c, const auto& k, const auto& v) { c.ssf.seed = static_cast<std::uint64_t>(to_integer(k, v)); }},

      {"calib.powers_dbm", [](RunConfig& c, const auto&, const auto& v) { c.calib_powers_dbm = parse_power_list(v); }},
      {"calib.constellations",
       [](RunConfig& c, const auto&, const auto& v) {
         c.calib_constellations.clear();
         for (const auto& s : split(v, ','))
           if (!s.empty()) c.calib_constellations.push_back(s);
       }},
  };
  return table;
}

}  // namespace

SsfConfig RunConfig::ssf_config() const {
  SsfConfig out = ssf;
  const int channels = ssf.link.n_channels;
  out.link = link;
  out.link.n_channels = channels;
  return out;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second(cfg, key, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
  cfg.entries[key] = trim(value);
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  // ssf.scale resets the numerics, so apply it before any other ssf key.
  std::vector<std::pair<std::string, std::string>> pending;
  std::vector<int> lines;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "ssf.scale") {
      pending.insert(pending.begin(), {key, value});
      lines.insert(lines.begin(), line_no);
    } else {
      pending.emplace_back(key, value);
      lines.push_back(line_no);
    }
  }
  for (std::size_t i = 0; i < pending.size(); ++i) {
    try {
      apply_config_value(cfg, pending[i].first, pending[i].second);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lines[i]) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<BatchStage> parse_batch_schedule(const std::string& s) {
  std::vector<BatchStage> out;
  for (const auto& item : split(s, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("batch schedule entry '" + item + "': expected iteration:multiple");
    out.push_back({to_int("train.batch_schedule", item.substr(0, colon)),
                   to_int("train.batch_schedule", item.substr(colon + 1))});
  }
  if (out.empty()) throw ConfigError("batch schedule is empty");
  return out;
}

std::vector<double> parse_power_list(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return {};
  if (t.find(':') != std::string::npos) {
    const auto parts = split(t, ':');
    if (parts.size() != 3) throw ConfigError("power range '" + s + "': expected start:step:stop");
    const double a = to_double("powers", parts[0]);
    const double step = to_double("powers", parts[1]);
    const double b = to_double("powers", parts[2]);
    if (step == 0) throw ConfigError("power range '" + s + "': step must be non-zero");
    if ((b - a) / step < 0) throw ConfigError("power range '" + s + "': step points away from stop");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    if (n > 100000) throw ConfigError("power range '" + s + "': too many points");
    std::vector<double> out;
    for (long i = 0; i <= n; ++i) out.push_back(a + i * step);
    return out;
  }
  std::vector<double> out;
  for (const auto& item : split(t, ',')) out.push_back(to_double("powers", item));
  return out;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : cfg.entries) j[k] = v;
  return j;
}

}  // namespace gcs
