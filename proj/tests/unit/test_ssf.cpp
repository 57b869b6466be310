#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gcs/errors.hpp"
#include "gcs/metrics.hpp"
#include "gcs/ssf.hpp"

using namespace gcs;

namespace {

SsfConfig small_config() {
  SsfConfig cfg = SsfConfig::desk_scale();
  cfg.n_symbols = 1 << 12;
  return cfg;
}

double total_energy(const WdmSignal& s) {
  double e = 0;
  for (const auto& pol : s.pols)
    for (const auto& z : pol) e += std::norm(z);
  return e;
}

SymbolPairs back_to_back(const SsfConfig& cfg, const Constellation& c, double power_dbm, bool amplify,
                         std::uint64_t seed = 1) {
  std::mt19937_64 sym(seed), noise(seed + 100);
  auto tx = modulate(c, cfg, power_dbm, sym);
  WdmSignal sig = tx.signal;
  for (int s = 0; s < cfg.link.n_spans; ++s) {
    sig = propagate_span(std::move(sig), cfg);
    if (amplify)
      sig = edfa(std::move(sig), cfg.link.attenuation_db_per_km * cfg.link.span_length_km, cfg.link.noise_figure_db,
                 cfg.link.carrier_frequency_hz(), noise);
  }
  return receive(sig, cfg, c, tx.labels[cfg.center_channel()], cfg.link.n_spans * cfg.link.span_length_km);
}

}  // namespace

TEST_CASE("rrc response is a nyquist root") {
  const double rs = 32e9;
  for (double beta : {0.05, 0.25, 1.0}) {
    CHECK(rrc_response(0, rs, beta) == 1.0);
    CHECK(rrc_response(rs * (1 + beta) / 2 * 1.001, rs, beta) == 0.0);
    for (double f = 0; f <= rs; f += rs / 97) {
      const double a = rrc_response(f, rs, beta), b = rrc_response(f - rs, rs, beta);
      CHECK(a * a + b * b == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("modulated signal carries the launch power per channel and polarisation") {
  SsfConfig cfg = small_config();
  std::mt19937_64 rng(1);
  const auto tx = modulate(new_qam(16), cfg, 3.0, rng);
  REQUIRE(tx.signal.pols.size() == 2);
  CHECK(tx.labels.size() == 3);
  for (int p = 0; p < 2; ++p)
    CHECK(tx.signal.mean_power_mw(p) == doctest::Approx(3 * dbm_to_mw(3.0)).epsilon(0.02));
}

TEST_CASE("lossless dispersion conserves energy") {
  SsfConfig cfg = small_config();
  cfg.link.attenuation_db_per_km = 0;
  cfg.link.gamma_per_w_km = 0;
  std::mt19937_64 rng(2);
  const auto tx = modulate(new_qam(64), cfg, 5.0, rng);
  const WdmSignal out = propagate_span(tx.signal, cfg);
  CHECK(std::abs(total_energy(out) / total_energy(tx.signal) - 1) < 1e-9);
}

TEST_CASE("loss alone removes exactly 20 dB over 100 km") {
  SsfConfig cfg = small_config();
  cfg.link.gamma_per_w_km = 0;
  cfg.link.dispersion_ps_nm_km = 0;
  std::mt19937_64 rng(3);
  const auto tx = modulate(new_qam(16), cfg, 0.0, rng);
  const WdmSignal out = propagate_span(tx.signal, cfg);
  CHECK(10 * std::log10(total_energy(out) / total_energy(tx.signal)) == doctest::Approx(-20.0).epsilon(1e-12));
}

TEST_CASE("self phase modulation matches the closed form") {
  SsfConfig cfg = small_config();
  cfg.link.dispersion_ps_nm_km = 0;
  cfg.link.n_channels = 1;
  std::mt19937_64 rng(4);
  const auto tx = modulate(new_qam(16), cfg, 8.0, rng);
  const WdmSignal out = propagate_span(tx.signal, cfg);
  const double alpha = 0.2 * std::log(10.0) / 10;
  const double l_eff = (1 - std::exp(-alpha * 100)) / alpha;
  const double gamma = 1.3e-3 * 8.0 / 9.0;
  const double amp = std::exp(-alpha * 100 / 2);
  double worst = 0;
  for (std::size_t k = 0; k < out.pols[0].size(); ++k) {
    const cdouble x = tx.signal.pols[0][k], y = tx.signal.pols[1][k];
    const double intensity = std::norm(x) + std::norm(y);
    if (intensity < 1e-6) continue;
    const double expected_phase = gamma * intensity * l_eff;
    const double phase = std::arg(out.pols[0][k] / (x * amp));
    worst = std::max(worst, std::abs(phase - expected_phase) / expected_phase);
    CHECK(std::abs(out.pols[0][k]) == doctest::Approx(std::abs(x) * amp).epsilon(1e-9));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("linear link is inverted exactly by the receiver") {
  SsfConfig cfg = small_config();
  cfg.link.gamma_per_w_km = 0;
  const Constellation c = new_qam(64);
  const SymbolPairs pairs = back_to_back(cfg, c, 0.0, false);
  CHECK(effective_snr_estimate(pairs.transmitted, pairs.received) >= 50.0);
  CHECK(pairs.labels.size() == 2 * static_cast<std::size_t>(cfg.n_symbols));
}

TEST_CASE("noise-only link matches the ase prediction") {
  SsfConfig cfg = small_config();
  cfg.n_symbols = 1 << 14;
  cfg.link.gamma_per_w_km = 0;
  const Constellation c = new_qam(16);
  const double p_dbm = -2.0;
  const SymbolPairs pairs = back_to_back(cfg, c, p_dbm, true);
  const double predicted = 10 * std::log10(dbm_to_mw(p_dbm) / ase_variance(cfg.link));
  CHECK(std::abs(effective_snr_estimate(pairs.transmitted, pairs.received) - predicted) < 0.2);
}

TEST_CASE("nonlinearity costs snr at high power") {
  SsfConfig cfg = small_config();
  const double p_dbm = 8.0;
  const TransmissionResult r = run_transmission(new_qam(16), cfg, 1, p_dbm);
  const double linear = 10 * std::log10(dbm_to_mw(p_dbm) / ase_variance(cfg.link));
  CHECK(r.snr_eff_db < linear - 3);
  CHECK(r.sigma2_nl_mw > 0);
}

TEST_CASE("constant modulus suffers less nonlinear noise than 64-QAM") {
  const SsfConfig cfg = small_config();
  const TransmissionResult qpsk = run_transmission(new_qam(4), cfg, 1, 6.0);
  const TransmissionResult qam = run_transmission(new_qam(64), cfg, 1, 6.0);
  CHECK(qpsk.snr_eff_db > qam.snr_eff_db);
}

TEST_CASE("snr versus power has one interior maximum") {
  const SsfConfig cfg = small_config();
  std::vector<double> snr;
  for (double p = -6; p <= 10; p += 2) snr.push_back(run_transmission(new_qam(16), cfg, 1, p).snr_eff_db);
  int turns = 0;
  for (std::size_t i = 2; i < snr.size(); ++i)
    if ((snr[i] - snr[i - 1] > 0) != (snr[i - 1] - snr[i - 2] > 0)) ++turns;
  CHECK(turns == 1);
  CHECK(snr.front() < *std::max_element(snr.begin(), snr.end()));
  CHECK(snr.back() < *std::max_element(snr.begin(), snr.end()));
}

TEST_CASE("doubling the spans at low power costs about 3 dB") {
  SsfConfig cfg = small_config();
  cfg.link.span_length_km = 50;
  cfg.n_symbols = 1 << 13;
  const double one = run_transmission(new_qam(16), cfg, 1, -8.0).snr_eff_db;
  const double two = run_transmission(new_qam(16), cfg, 2, -8.0).snr_eff_db;
  CHECK(one - two == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("halving the step barely changes the result") {
  SsfConfig cfg = small_config();
  const double coarse = run_transmission(new_qam(16), cfg, 1, 3.0).snr_eff_db;
  cfg.step_km = 0.25;
  const double fine = run_transmission(new_qam(16), cfg, 1, 3.0).snr_eff_db;
  CHECK(std::abs(coarse - fine) < 0.05);
}

TEST_CASE("transmission is deterministic in the seed") {
  SsfConfig cfg = small_config();
  const TransmissionResult a = run_transmission(new_qam(16), cfg, 1, 4.0);
  const TransmissionResult b = run_transmission(new_qam(16), cfg, 1, 4.0);
  CHECK(a.snr_eff_db == b.snr_eff_db);
  CHECK(a.mi_bit_4d == b.mi_bit_4d);
  cfg.seed = 2;
  CHECK(run_transmission(new_qam(16), cfg, 1, 4.0).snr_eff_db != a.snr_eff_db);
}

TEST_CASE("ssf configuration checks") {
  SsfConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.oversampling = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.n_symbols = 1000;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.step_km = 0.3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.link.channel_spacing_hz = 50e9 + 1234.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(SsfConfig::full_scale().n_samples() == (1 << 17) * 32);
  CHECK(SsfConfig::full_scale().link.n_channels == 5);
}
