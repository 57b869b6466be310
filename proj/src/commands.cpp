#include "gcs/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "gcs/metrics.hpp"
#include "gcs/ssf.hpp"
#include "gcs/trainer.hpp"

namespace gcs {

namespace {

namespace fs = std::filesystem;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

class Manifest {
 public:
  Manifest(std::string path, const std::string& command, const RunConfig& cfg, std::uint64_t seed)
      : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {
    j_["command"] = command;
    j_["config"] = to_json(cfg);
    j_["seed"] = seed;
    j_["code_version"] = GCS_VERSION;
    j_["started_at"] = utc_now();
    j_["status"] = "running";
    j_["outputs"] = nlohmann::json::object();
  }

  nlohmann::json& operator[](const std::string& key) { return j_[key]; }
  void output(const std::string& role, const std::string& path) { j_["outputs"][role] = path; }
  void write() { write_manifest(path_, j_); }

  void finish(const std::string& status) {
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["status"] = status;
    j_["finished_at"] = utc_now();
    j_["wall_clock_s"] = elapsed;
    write();
  }

 private:
  std::string path_;
  std::chrono::steady_clock::time_point start_;
  nlohmann::json j_;
};

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs task(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t n, int jobs, F task) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

std::mt19937_64 job_rng(std::uint64_t seed, std::size_t job) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(job), 0x5eedu};
  return std::mt19937_64(seq);
}

std::string display_name(const std::string& spec) { return fs::path(spec).stem().string(); }

}  // namespace

NlinCoefficients resolve_coefficients(const RunConfig& cfg) {
  if (cfg.kappa) return *cfg.kappa;
  if (cfg.kappa_file.empty())
    throw Error(
        "no NLIN coefficients configured: run `gcs calibrate <config> --out kappa.json` and set "
        "model.kappa_file = kappa.json (or pass --kappa kappa.json)");
  if (!fs::exists(cfg.kappa_file))
    throw Error("NLIN coefficient file '" + cfg.kappa_file +
                "' not found: create it with `gcs calibrate <config> --out " + cfg.kappa_file + "`");
  return load_nlin_coefficients(cfg.kappa_file);
}

Constellation load_constellation_spec(const std::string& spec) {
  auto order = [&](std::size_t prefix) {
    try {
      std::size_t used = 0;
      const int m = std::stoi(spec.substr(prefix), &used);
      if (used == spec.size() - prefix) return m;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("unknown constellation '" + spec + "'");
  };
  if (spec.find('.') == std::string::npos) {
    if (spec.rfind("qam", 0) == 0) return new_qam(order(3));
    if (spec.rfind("gauss", 0) == 0) return new_gaussian(order(5));
  }
  if (fs::path(spec).extension() == ".csv") return load_csv(spec);
  return load(spec);
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
  ensure_parent(path);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write manifest '" + path + "'");
    out << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

void cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& log) {
  TrainConfig tc = cfg.train;
  const ModelKind kind = opt.model.value_or(cfg.model);
  const double power = opt.power_dbm.value_or(cfg.launch_power_dbm);
  if (opt.M) tc.M = *opt.M;
  tc.train_launch_power = tc.train_launch_power || opt.joint_power;
  tc.initial_launch_power_dbm = power;
  tc.channel = ChannelModel::from_link(cfg.link, kind, resolve_coefficients(cfg), power);
  tc.validate();

  fs::create_directories(opt.out_dir);
  const std::string constellation_path = (fs::path(opt.out_dir) / "constellation.json").string();
  const std::string trace_path = (fs::path(opt.out_dir) / "loss_trace.csv").string();
  Manifest manifest((fs::path(opt.out_dir) / "manifest.json").string(), "train", cfg, tc.seed);
  manifest["model"] = to_string(kind);
  manifest["M"] = tc.M;
  manifest["launch_power_dbm"] = power;
  manifest["joint_power"] = tc.train_launch_power;
  manifest.output("constellation", constellation_path);
  manifest.output("loss_trace", trace_path);
  manifest.write();

  log << "training M=" << tc.M << " on " << to_string(kind) << " at " << power << " dBm\n";
  TrainResult r;
  try {
    r = train(tc);
  } catch (...) {
    manifest.finish("failed");
    throw;
  }

  save(r.constellation, constellation_path);
  {
    std::ofstream out(trace_path);
    out.imbue(std::locale::classic());
    out << "iteration,loss,mu4,mu6,power_dbm\n" << std::setprecision(17);
    for (const auto& row : r.trace)
      out << row.iteration << ',' << row.loss << ',' << row.mu4 << ',' << row.mu6 << ',' << row.power_dbm << '\n';
  }
  const Moments mom = moments(r.constellation);
  manifest["iterations"] = r.trace.size();
  manifest["early_stopped"] = r.early_stopped;
  manifest["final_loss"] = r.trace.empty() ? 0.0 : r.trace.back().loss;
  manifest["final_launch_power_dbm"] = r.final_launch_power_dbm;
  manifest["mu4"] = mom.mu4;
  manifest["mu6"] = mom.mu6;
  manifest.finish("ok");
  log << "done after " << r.trace.size() << " iterations, mu4=" << mom.mu4 << ", launch power "
      << r.final_launch_power_dbm << " dBm\n";
}

void cmd_sweep(const RunConfig& cfg, const SweepOptions& opt, std::ostream& log) {
  const std::vector<double> powers = parse_power_list(opt.powers);
  if (powers.empty()) throw UsageError("sweep: the power list is empty");
  if (opt.constellations.empty()) throw UsageError("sweep: no constellations given");
  if (opt.eval != "model" && opt.eval != "ssf") throw UsageError("sweep: --eval must be model or ssf");

  std::vector<Constellation> constellations;
  for (const auto& spec : opt.constellations) constellations.push_back(normalize_unit_power(load_constellation_spec(spec)));

  std::optional<ChannelModel> model;
  if (opt.eval == "model") model = ChannelModel::from_link(cfg.link, cfg.model, resolve_coefficients(cfg), 0.0);
  const SsfConfig ssf = cfg.ssf_config();
  if (opt.eval == "ssf") ssf.validate();

  const std::uint64_t seed = opt.eval == "ssf" ? ssf.seed : cfg.train.seed;
  Manifest manifest(manifest_path_for(opt.out), "sweep", cfg, seed);
  manifest["eval"] = opt.eval;
  manifest["powers_dbm"] = powers;
  manifest["constellations"] = opt.constellations;
  manifest.output("sweep_csv", opt.out);
  manifest.write();

  const std::size_t n = constellations.size() * powers.size();
  std::vector<SweepRow> rows(n);
  std::mutex log_mutex;
  parallel_for(n, resolve_jobs(opt.jobs), [&](std::size_t i) {
    const std::size_t ci = i / powers.size();
    const Constellation& c = constellations[ci];
    SweepRow& row = rows[i];
    row.constellation = display_name(opt.constellations[ci]);
    row.power_dbm = powers[i % powers.size()];
    row.source = opt.eval;
    const Moments mom = moments(c);
    row.mu4 = mom.mu4;
    row.mu6 = mom.mu6;
    try {
      if (model) {
        row.snr_eff_db = effective_snr_at(*model, row.power_dbm, mom.mu4, mom.mu6);
        auto rng = job_rng(seed, i);
        row.mi_bit_4d = mi_gaussian_auxiliary(c, std::pow(10.0, -row.snr_eff_db / 10.0), rng).mi_bits_per_4d;
      } else {
        SsfConfig job = ssf;
        job.seed = seed ^ static_cast<std::uint64_t>(i);
        const auto r = run_transmission(c, job, cfg.link.n_spans, row.power_dbm);
        row.snr_eff_db = r.snr_eff_db;
        row.mi_bit_4d = r.mi_bit_4d;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    std::lock_guard lock(log_mutex);
    log << row.constellation << " @ " << row.power_dbm << " dBm: "
        << (row.error.empty() ? std::to_string(row.snr_eff_db) + " dB" : "failed: " + row.error) << '\n';
  });

  ensure_parent(opt.out);
  std::ofstream out(opt.out);
  if (!out) throw Error("cannot write sweep output '" + opt.out + "'");
  write_sweep_header(out);
  std::size_t failures = 0;
  for (const auto& row : rows) {
    write_sweep_row(out, row);
    failures += row.error.empty() ? 0 : 1;
  }
  manifest["failed_points"] = failures;
  manifest.finish(failures == 0 ? "ok" : "partial");
}

NlinCoefficients cmd_calibrate_nlin(const RunConfig& cfg, const CalibrateOptions& opt, std::ostream& log) {
  const SsfConfig ssf = cfg.ssf_config();
  ssf.validate();
  if (cfg.calib_powers_dbm.empty()) throw UsageError("calibrate: calib.powers_dbm is empty");
  std::vector<Constellation> constellations;
  for (const auto& spec : cfg.calib_constellations)
    constellations.push_back(normalize_unit_power(load_constellation_spec(spec)));

  Manifest manifest(manifest_path_for(opt.out), "calibrate", cfg, ssf.seed);
  manifest["n_spans"] = cfg.link.n_spans;
  manifest.output("coefficients", opt.out);
  manifest.write();

  const auto& powers = cfg.calib_powers_dbm;
  const std::size_t n = constellations.size() * powers.size();
  std::vector<CalibrationPoint> points(n);
  std::vector<std::string> errors(n);
  std::mutex log_mutex;
  parallel_for(n, resolve_jobs(opt.jobs), [&](std::size_t i) {
    const Constellation& c = constellations[i / powers.size()];
    const double p = powers[i % powers.size()];
    const Moments mom = moments(c);
    try {
      // Same symbol and noise streams for every constellation.
      const auto r = run_transmission(c, ssf, cfg.link.n_spans, p);
      points[i] = {dbm_to_mw(p), mom.mu4, mom.mu6, r.sigma2_nl_mw};
      std::lock_guard lock(log_mutex);
      log << cfg.calib_constellations[i / powers.size()] << " @ " << p << " dBm: SNR " << r.snr_eff_db
          << " dB, sigma2_nl " << r.sigma2_nl_mw << " mW\n";
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      manifest.finish("failed");
      throw Error("calibrate: transmission " + std::to_string(i) + " failed: " + errors[i]);
    }
  }

  NlinCoefficients k;
  try {
    k = calibrate_nlin(points);
  } catch (...) {
    manifest.finish("failed");
    throw;
  }
  save(k, opt.out);
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"power_mw", p.power_mw}, {"mu4", p.mu4}, {"mu6", p.mu6}, {"sigma2_nl_mw", p.sigma2_nl_mw}});
  manifest["points"] = pts;
  manifest["coefficients"] = to_json(k);
  manifest.finish("ok");
  log << "kappa0=" << k.kappa0 << " kappa1=" << k.kappa1 << " kappa2=" << k.kappa2 << " residual=" << k.fit_residual
      << '\n';
  return k;
}

}  // namespace gcs
