#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "gcs/commands.hpp"
#include "gcs/config.hpp"
#include "gcs/errors.hpp"

using namespace gcs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gcs_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(GCS_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kQuickConfig =
    "# quick training settings\n"
    "model.kappa0 = 2e-3\n"
    "model.kappa1 = 1.2e-4\n"
    "model.kappa2 = 3e-4\n"
    "train.hidden_units = 16\n"
    "train.batch_schedule = 0:8\n"
    "train.max_iterations = 60\n"
    "train.seed = 7\n";

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(
      "link.n_spans = 10   # ten spans\n"
      "\n"
      "model.kind = nlin\n"
      "model.kappa_file = k.json\n"
      "train.batch_schedule = 0:8, 100:2048\n"
      "train.power_learning_rate = 0.05\n"
      "ssf.step_km = 0.25\n"
      "ssf.scale = full\n"
      "calib.powers_dbm = -1:2:3\n"
      "calib.constellations = qam4, qam16\n");
  CHECK(cfg.link.n_spans == 10);
  CHECK(cfg.model == ModelKind::nlin);
  CHECK(cfg.kappa_file == "k.json");
  REQUIRE(cfg.train.batch_schedule.size() == 2);
  CHECK(cfg.train.batch_schedule[1].from_iteration == 100);
  CHECK(cfg.train.batch_schedule[1].multiple == 2048);
  CHECK(*cfg.train.power_learning_rate == 0.05);
  // ssf.scale is applied first, so the explicit step survives.
  CHECK(cfg.ssf.step_km == 0.25);
  CHECK(cfg.ssf.n_symbols == (1 << 17));
  CHECK(cfg.calib_powers_dbm == std::vector<double>{-1, 1, 3});
  CHECK(cfg.calib_constellations == std::vector<std::string>{"qam4", "qam16"});
  CHECK(cfg.ssf_config().link.n_spans == 10);
  CHECK(to_json(cfg)["link.n_spans"] == "10");
}

TEST_CASE("config errors name the line") {
  try {
    parse_config("link.n_spans = 1\nlink.bogus = 3\n");
    FAIL("expected error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("link.bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("link.n_spans = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just text\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.kind = egn\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.joint_power = maybe\n"), ConfigError);
}

TEST_CASE("constellation specs") {
  CHECK(load_constellation_spec("qam16").order() == 16);
  CHECK(load_constellation_spec("gauss256").order() == 256);
  CHECK_THROWS_AS(load_constellation_spec("qam16x"), InvalidArgument);
  CHECK_THROWS_AS(load_constellation_spec("gauss"), InvalidArgument);
}

TEST_CASE("power lists") {
  CHECK(parse_power_list("-6.5:1:9.5").size() == 17);
  CHECK(parse_power_list("-6.5:1:9.5").back() == doctest::Approx(9.5));
  CHECK(parse_power_list("3:-1:1") == std::vector<double>{3, 2, 1});
  CHECK(parse_power_list("1, 2.5") == std::vector<double>{1, 2.5});
  CHECK(parse_power_list("").empty());
  CHECK_THROWS_AS(parse_power_list("1:0:3"), ConfigError);
  CHECK_THROWS_AS(parse_power_list("1:1"), ConfigError);
}

TEST_CASE("missing coefficients point at the calibrate command") {
  RunConfig cfg;
  cfg.model = ModelKind::nlin;
  try {
    resolve_coefficients(cfg);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("gcs calibrate") != std::string::npos);
  }
  cfg.kappa_file = "/nonexistent/kappa.json";
  CHECK_THROWS_WITH_AS(resolve_coefficients(cfg), doctest::Contains("gcs calibrate"), Error);
}

TEST_CASE("train command writes constellation, trace and manifest") {
  TempDir dir;
  RunConfig cfg = parse_config(kQuickConfig);
  TrainOptions opt;
  opt.model = ModelKind::gn;
  opt.power_dbm = -6.5;
  opt.M = 64;
  opt.out_dir = dir.file("gn");
  std::ostringstream log;
  cmd_train(cfg, opt, log);
  const Constellation c = load(dir.file("gn/constellation.json"));
  CHECK(c.order() == 64);
  CHECK(moments(c).mu2 == doctest::Approx(1).epsilon(1e-12));
  const std::string trace = read_text(dir.file("gn/loss_trace.csv"));
  CHECK(trace.rfind("iteration,loss,mu4,mu6,power_dbm\n", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 61);
  const auto manifest = nlohmann::json::parse(read_text(dir.file("gn/manifest.json")));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["outputs"]["constellation"] == dir.file("gn/constellation.json"));
  CHECK(manifest["config"]["train.seed"] == "7");
  CHECK(manifest.contains("wall_clock_s"));
  CHECK(manifest.contains("code_version"));

  // Same config and seed: bit-identical artifacts.
  opt.out_dir = dir.file("gn2");
  cmd_train(cfg, opt, log);
  CHECK(read_text(dir.file("gn/loss_trace.csv")) == read_text(dir.file("gn2/loss_trace.csv")));
  CHECK(read_text(dir.file("gn/constellation.json")) == read_text(dir.file("gn2/constellation.json")));
}

TEST_CASE("joint power training records the converged power") {
  TempDir dir;
  RunConfig cfg = parse_config(kQuickConfig);
  apply_config_value(cfg, "train.power_learning_rate", "0.05");
  TrainOptions opt;
  opt.joint_power = true;
  opt.power_dbm = 1.0;
  opt.M = 16;
  opt.out_dir = dir.path.string();
  std::ostringstream log;
  cmd_train(cfg, opt, log);
  const auto manifest = nlohmann::json::parse(read_text(dir.file("manifest.json")));
  CHECK(manifest["joint_power"] == true);
  CHECK(manifest["final_launch_power_dbm"].get<double>() != 1.0);
}

TEST_CASE("model sweep of 64-QAM is unimodal in power") {
  TempDir dir;
  RunConfig cfg = parse_config(kQuickConfig);
  SweepOptions opt;
  opt.powers = "-6.5:1:9.5";
  opt.constellations = {"qam64"};
  opt.out = dir.file("sweep.csv");
  opt.jobs = 2;
  std::ostringstream log;
  cmd_sweep(cfg, opt, log);
  std::istringstream in(read_text(opt.out));
  std::string line;
  std::getline(in, line);
  CHECK(line == "constellation,power_dbm,snr_eff_db,mi_bit_4d,mu4,mu6,source,error");
  std::vector<double> snr;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    CHECK(cols[0] == "qam64");
    CHECK(cols[6] == "model");
    snr.push_back(std::stod(cols[2]));
  }
  REQUIRE(snr.size() == 17);
  const auto peak = std::max_element(snr.begin(), snr.end()) - snr.begin();
  for (long i = 1; i < static_cast<long>(snr.size()); ++i) {
    if (i <= peak)
      CHECK(snr[i] > snr[i - 1]);
    else
      CHECK(snr[i] < snr[i - 1]);
  }
  CHECK(fs::exists(opt.out + ".manifest.json"));

  opt.powers = "";
  CHECK_THROWS_AS(cmd_sweep(cfg, opt, log), UsageError);
}

TEST_CASE("sweep records failing points and continues") {
  TempDir dir;
  RunConfig cfg = parse_config(kQuickConfig);
  // With this kappa1 the fitted variance turns negative for QPSK but not for 64-QAM.
  apply_config_value(cfg, "model.kind", "nlin");
  apply_config_value(cfg, "model.kappa1", "1e-3");
  SweepOptions opt;
  opt.powers = "0,1";
  opt.constellations = {"qam4", "qam64"};
  opt.out = dir.file("sweep.csv");
  opt.jobs = 1;
  std::ostringstream log;
  cmd_sweep(cfg, opt, log);
  const std::string csv = read_text(opt.out);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("qam4,0,,,,,model,") != std::string::npos);
  CHECK(csv.find("qam64,1,") != std::string::npos);
  CHECK(csv.find("qam64,1,,") == std::string::npos);
  const auto manifest = nlohmann::json::parse(read_text(opt.out + ".manifest.json"));
  CHECK(manifest["status"] == "partial");
}

TEST_CASE("cli exit codes") {
  TempDir dir;
  const std::string log = dir.file("log.txt");
  write_text(dir.file("quick.cfg"), kQuickConfig);
  write_text(dir.file("bare.cfg"), "train.max_iterations = 5\n");

  CHECK(run_cli("", log) == 2);
  CHECK(run_cli("train --bogus", log) == 2);
  CHECK(run_cli("sweep " + dir.file("quick.cfg") + " --powers '' --constellations qam16 --out " + dir.file("s.csv"),
                log) == 2);
  CHECK(run_cli("train " + dir.file("bare.cfg") + " --model nlin --out " + dir.file("t"), log) == 1);
  CHECK(read_text(log).find("gcs calibrate") != std::string::npos);
  CHECK(run_cli("sweep " + dir.file("quick.cfg") + " --powers 0 --constellations " + dir.file("missing.json"), log) ==
        1);
  CHECK(run_cli("train " + dir.file("quick.cfg") + " --model gn --power-dbm -6.5 --M 16 --out " + dir.file("ok"),
                log) == 0);
  CHECK(fs::exists(dir.file("ok/constellation.json")));
  CHECK(run_cli("--version", log) == 0);
}
