#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcs/channel.hpp"
#include "gcs/ssf.hpp"
#include "gcs/trainer.hpp"
#include "json.hpp"

namespace gcs {

/**
 * Everything a command needs, read from a flat `key = value` file.
 * Keys carry a section prefix: link., model., train., ssf., calib.
 * Blank lines and text after '#' are ignored.
 */
struct RunConfig {
  LinkConfig link;

  ModelKind model = ModelKind::gn;
  std::string kappa_file;
  std::optional<NlinCoefficients> kappa;  // inline model.kappa0..2 take precedence over the file
  double launch_power_dbm = 0;

  TrainConfig train;

  std::string ssf_scale = "desk";
  SsfConfig ssf = SsfConfig::desk_scale();

  std::vector<double> calib_powers_dbm{0, 3, 6};
  std::vector<std::string> calib_constellations{"qam4", "qam64", "gauss4096"};

  /// Raw key/value pairs as applied, for the manifest.
  std::map<std::string, std::string> entries;

  /// The link carried into the ssf settings (ssf keys only hold numerics).
  SsfConfig ssf_config() const;
};

/// Parse config text. Throws ConfigError naming the line on unknown keys or bad values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Apply one key; used for both file lines and command-line overrides.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// "0:8,100:2048" -> batch stages.
std::vector<BatchStage> parse_batch_schedule(const std::string& s);

/// "a:step:b" (inclusive, step may be negative) or a comma list "a,b,c".
std::vector<double> parse_power_list(const std::string& s);

nlohmann::json to_json(const RunConfig& cfg);

}  // namespace gcs
