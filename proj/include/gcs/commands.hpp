#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gcs/config.hpp"
#include "gcs/errors.hpp"
#include "gcs/constellation.hpp"
#include "json.hpp"

namespace gcs {

// Bad command-line usage; the CLI maps it to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct TrainOptions {
  std::optional<ModelKind> model;
  std::optional<double> power_dbm;
  std::optional<int> M;
  bool joint_power = false;
  std::string out_dir = ".";
};

struct SweepOptions {
  std::string powers;  // "a:step:b" or "a,b,c"
  std::vector<std::string> constellations;  // files, or qamM names
  std::string eval = "model";               // model | ssf
  int jobs = 0;                             // 0: hardware concurrency
  std::string out = "sweep.csv";
};

struct CalibrateOptions {
  std::string out = "kappa.json";
  int jobs = 0;
};

/**
 * Coefficients for the run: inline model.kappa* keys, else model.kappa_file.
 * Throws Error pointing at the calibrate command when neither is present.
 */
NlinCoefficients resolve_coefficients(const RunConfig& cfg);

/// "qam4" .. "qam256" build a square QAM; anything else is loaded as a JSON (or .csv) file.
Constellation load_constellation_spec(const std::string& spec);

/// Writes the manifest JSON to `path`, overwriting.
void write_manifest(const std::string& path, const nlohmann::json& manifest);

void cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& log);
void cmd_sweep(const RunConfig& cfg, const SweepOptions& opt, std::ostream& log);
NlinCoefficients cmd_calibrate_nlin(const RunConfig& cfg, const CalibrateOptions& opt, std::ostream& log);

}  // namespace gcs
