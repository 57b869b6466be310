// gcs: train, evaluate and calibrate geometrically shaped constellations.
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gcs/commands.hpp"
#include "gcs/errors.hpp"

namespace {

gcs::RunConfig read_config(const std::string& path, const std::string& kappa) {
  gcs::RunConfig cfg = path.empty() ? gcs::RunConfig{} : gcs::load_config(path);
  if (!kappa.empty()) {
    cfg.kappa_file = kappa;
    cfg.kappa.reset();
    cfg.entries["model.kappa_file"] = kappa;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric constellation shaping for nonlinear fibre channels"};
  app.set_version_flag("--version", GCS_VERSION);
  app.require_subcommand(1);

  std::string config_path, kappa;

  auto* train = app.add_subcommand("train", "Train an autoencoder and export its constellation");
  gcs::TrainOptions topt;
  std::string model;
  double power = 0;
  int M = 0;
  train->add_option("config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
  train->add_option("--model", model, "Channel model")->check(CLI::IsMember({"gn", "nlin"}));
  auto* power_opt = train->add_option("--power-dbm", power, "Launch power per channel in dBm");
  auto* m_opt = train->add_option("--M", M, "Constellation order")->check(CLI::PositiveNumber);
  train->add_flag("--joint-power", topt.joint_power, "Learn the launch power together with the constellation");
  train->add_option("--out", topt.out_dir, "Output directory");
  train->add_option("--kappa", kappa, "NLIN coefficient file (overrides model.kappa_file)");

  auto* sweep = app.add_subcommand("sweep", "Evaluate constellations over a launch power range");
  gcs::SweepOptions sopt;
  sweep->add_option("config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
  sweep->add_option("--powers", sopt.powers, "start:step:stop or a,b,c (dBm)")->required();
  sweep->add_option("--constellations", sopt.constellations, "Constellation files, qamM or gaussM")->required();
  sweep->add_option("--eval", sopt.eval, "Evaluation path")->check(CLI::IsMember({"model", "ssf"}));
  sweep->add_option("--jobs", sopt.jobs, "Parallel jobs (default: all cores)")->check(CLI::NonNegativeNumber);
  sweep->add_option("--out", sopt.out, "Sweep CSV path");
  sweep->add_option("--kappa", kappa, "NLIN coefficient file (overrides model.kappa_file)");

  auto* calibrate = app.add_subcommand("calibrate", "Fit NLIN coefficients to split-step simulations");
  gcs::CalibrateOptions copt;
  calibrate->add_option("config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
  calibrate->add_option("--out", copt.out, "Coefficient JSON path");
  calibrate->add_option("--jobs", copt.jobs, "Parallel jobs (default: all cores)")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const gcs::RunConfig cfg = read_config(config_path, kappa);
    if (*train) {
      if (!model.empty()) topt.model = gcs::parse_model_kind(model);
      if (*power_opt) topt.power_dbm = power;
      if (*m_opt) topt.M = M;
      gcs::cmd_train(cfg, topt, std::cout);
    } else if (*sweep) {
      gcs::cmd_sweep(cfg, sopt, std::cout);
    } else if (*calibrate) {
      gcs::cmd_calibrate_nlin(cfg, copt, std::cout);
    }
  } catch (const gcs::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const gcs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
