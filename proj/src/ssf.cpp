#include "gcs/ssf.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "gcs/errors.hpp"
#include "gcs/metrics.hpp"

namespace gcs {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// In-place complex FFT bound to one buffer. The planner is not thread-safe, execution is.
class FftPlan {
 public:
  FftPlan(std::vector<cdouble>& buffer, int direction) : size_(buffer.size()) {
    auto* data = reinterpret_cast<fftw_complex*>(buffer.data());
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_1d(static_cast<int>(buffer.size()), data, data, direction, FFTW_ESTIMATE);
    if (plan_ == nullptr) throw Error("fft: planning failed");
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  ~FftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }

  void run() const { fftw_execute(plan_); }
  std::size_t size() const { return size_; }

 private:
  fftw_plan plan_;
  std::size_t size_;
};

void forward_fft(std::vector<cdouble>& v) { FftPlan(v, FFTW_FORWARD).run(); }

void inverse_fft(std::vector<cdouble>& v) {
  FftPlan(v, FFTW_BACKWARD).run();
  const double inv = 1.0 / static_cast<double>(v.size());
  for (auto& z : v) z *= inv;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Signed FFT bin index for bin n of an N-point transform.
long signed_bin(std::size_t n, std::size_t size) {
  return n < size / 2 ? static_cast<long>(n) : static_cast<long>(n) - static_cast<long>(size);
}

std::size_t wrap(long k, std::size_t size) {
  const long s = static_cast<long>(size);
  return static_cast<std::size_t>(((k % s) + s) % s);
}

double beta2_s2_per_km(const LinkConfig& link) {
  const double lambda = link.center_wavelength_nm * 1e-9;
  const double d_si = link.dispersion_ps_nm_km * 1e-3;  // s / m per km
  return -d_si * lambda * lambda / (2.0 * std::numbers::pi * phys::speed_of_light);
}

double alpha_per_km(const LinkConfig& link) { return link.attenuation_db_per_km * std::log(10.0) / 10.0; }

long channel_bin(const SsfConfig& cfg, int channel) {
  const double df = cfg.link.symbol_rate_hz / cfg.n_symbols;
  return std::lround(cfg.channel_offset_hz(channel) / df);
}

// Half-width, in bins, of a channel's RRC support.
long band_half_width_bins(const SsfConfig& cfg) {
  const double df = cfg.link.symbol_rate_hz / cfg.n_symbols;
  return static_cast<long>(std::floor(cfg.link.symbol_rate_hz * (1.0 + cfg.rolloff) / 2.0 / df));
}

}  // namespace

SsfConfig SsfConfig::full_scale() { return SsfConfig{}; }

SsfConfig SsfConfig::desk_scale() {
  SsfConfig cfg;
  cfg.n_symbols = 1 << 14;
  cfg.oversampling = 8;
  cfg.step_km = 0.5;
  cfg.link.n_channels = 3;
  return cfg;
}

double SsfConfig::channel_offset_hz(int channel) const {
  return (channel - (link.n_channels - 1) / 2.0) * link.channel_spacing_hz;
}

void SsfConfig::validate() const {
  link.validate();
  if (n_symbols < 2 || (n_symbols & (n_symbols - 1)) != 0) throw ConfigError("ssf: n_symbols must be a power of two");
  if (oversampling < 1) throw ConfigError("ssf: oversampling must be positive");
  if (n_polarizations != 1 && n_polarizations != 2) throw ConfigError("ssf: n_polarizations must be 1 or 2");
  if (!(rolloff >= 0 && rolloff <= 1)) throw ConfigError("ssf: rolloff must be in [0, 1]");
  if (!(step_km > 0)) throw ConfigError("ssf: step_km must be positive");
  const double steps = link.span_length_km / step_km;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) throw ConfigError("ssf: step_km must divide the span length");
  const double occupied = (link.n_channels - 1) * link.channel_spacing_hz + link.symbol_rate_hz * (1.0 + rolloff);
  if (occupied > sample_rate_hz())
    throw ConfigError("ssf: oversampling x symbol rate is below the occupied WDM bandwidth (aliasing)");
  const double df = link.symbol_rate_hz / n_symbols;
  for (int ch = 0; ch < link.n_channels; ++ch) {
    const double bins = channel_offset_hz(ch) / df;
    if (std::abs(bins - std::round(bins)) > 1e-6)
      throw ConfigError("ssf: channel offsets must fall on the frequency grid (symbol_rate / n_symbols)");
  }
}

double WdmSignal::mean_power_mw(int pol) const {
  const auto& v = pols.at(static_cast<std::size_t>(pol));
  double s = 0;
  for (const auto& z : v) s += std::norm(z);
  return s / static_cast<double>(v.size());
}

double rrc_response(double f_hz, double symbol_rate_hz, double rolloff) {
  const double f = std::abs(f_hz);
  const double lo = (1.0 - rolloff) * symbol_rate_hz / 2.0;
  const double hi = (1.0 + rolloff) * symbol_rate_hz / 2.0;
  if (f <= lo) return 1.0;
  if (f > hi) return 0.0;
  return std::sqrt(0.5 * (1.0 + std::cos(std::numbers::pi / (rolloff * symbol_rate_hz) * (f - lo))));
}

ModulatedSignal modulate(const Constellation& c, const SsfConfig& cfg, double power_dbm, std::mt19937_64& rng) {
  cfg.validate();
  if (c.n_complex_dims() != 1) throw InvalidArgument("modulate: only single complex dimension constellations");
  const auto n_sym = static_cast<std::size_t>(cfg.n_symbols);
  const auto n = static_cast<std::size_t>(cfg.n_samples());
  const double amplitude = std::sqrt(dbm_to_mw(power_dbm));
  const double df = cfg.link.symbol_rate_hz / cfg.n_symbols;
  const long half = band_half_width_bins(cfg);
  const auto pts = c.points();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  ModulatedSignal out;
  out.signal.sample_rate_hz = cfg.sample_rate_hz();
  out.signal.pols.assign(static_cast<std::size_t>(cfg.n_polarizations), std::vector<cdouble>(n));
  out.labels.assign(static_cast<std::size_t>(cfg.link.n_channels),
                    std::vector<std::vector<int>>(static_cast<std::size_t>(cfg.n_polarizations)));
  std::vector<double> rrc(static_cast<std::size_t>(2 * half + 1));
  for (long d = -half; d <= half; ++d) rrc[static_cast<std::size_t>(d + half)] = rrc_response(d * df, cfg.link.symbol_rate_hz, cfg.rolloff);

  std::vector<cdouble> symbols(n_sym);
  for (int ch = 0; ch < cfg.link.n_channels; ++ch) {
    out.signal.channel_offsets_hz.push_back(cfg.channel_offset_hz(ch));
    const long center = channel_bin(cfg, ch);
    for (int p = 0; p < cfg.n_polarizations; ++p) {
      auto& labels = out.labels[static_cast<std::size_t>(ch)][static_cast<std::size_t>(p)];
      labels.resize(n_sym);
      for (std::size_t k = 0; k < n_sym; ++k) {
        const int label = std::min(static_cast<int>(uniform(rng) * c.order()), c.order() - 1);
        labels[k] = label;
        symbols[k] = pts[static_cast<std::size_t>(label)] * amplitude;
      }
      forward_fft(symbols);
      auto& spectrum = out.signal.pols[static_cast<std::size_t>(p)];
      for (long d = -half; d <= half; ++d) {
        const double h = rrc[static_cast<std::size_t>(d + half)];
        if (h == 0.0) continue;
        spectrum[wrap(center + d, n)] += symbols[wrap(d, n_sym)] * (h * cfg.oversampling);
      }
    }
  }
  for (auto& pol : out.signal.pols) inverse_fft(pol);
  return out;
}

WdmSignal propagate_span(WdmSignal sig, const SsfConfig& cfg) {
  cfg.validate();
  const auto& link = cfg.link;
  const std::size_t n = sig.pols.front().size();
  const int steps = static_cast<int>(std::lround(link.span_length_km / cfg.step_km));
  const double h = link.span_length_km / steps;
  const double alpha = alpha_per_km(link);
  const double beta2 = beta2_s2_per_km(link);
  const double gamma = link.gamma_per_w_km * 1e-3 * 8.0 / 9.0;  // 1 / (mW km), Manakov average
  // Kerr phase is applied at the power after the first half-step of loss; this
  // length makes the integrated phase exact for a dispersionless span.
  const double h_eff = alpha > 0 ? 2.0 * std::sinh(alpha * h / 2.0) / alpha : h;

  std::vector<cdouble> half_step(n), full_step(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double omega = 2.0 * std::numbers::pi * signed_bin(k, n) * sig.sample_rate_hz / static_cast<double>(n);
    const cdouble exponent(-alpha / 2.0, beta2 * omega * omega / 2.0);
    half_step[k] = std::exp(exponent * (h / 2.0));
    full_step[k] = std::exp(exponent * h);
  }

  std::vector<std::unique_ptr<FftPlan>> fwd, bwd;
  for (auto& pol : sig.pols) {
    fwd.push_back(std::make_unique<FftPlan>(pol, FFTW_FORWARD));
    bwd.push_back(std::make_unique<FftPlan>(pol, FFTW_BACKWARD));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  auto linear = [&](const std::vector<cdouble>& op) {
    for (std::size_t p = 0; p < sig.pols.size(); ++p) {
      fwd[p]->run();
      auto& v = sig.pols[p];
      for (std::size_t k = 0; k < n; ++k) v[k] *= op[k] * inv_n;
      bwd[p]->run();
    }
  };
  auto kerr = [&] {
    auto& x = sig.pols[0];
    if (sig.pols.size() == 2) {
      auto& y = sig.pols[1];
      for (std::size_t k = 0; k < n; ++k) {
        const cdouble rot = std::polar(1.0, gamma * h_eff * (std::norm(x[k]) + std::norm(y[k])));
        x[k] *= rot;
        y[k] *= rot;
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) x[k] *= std::polar(1.0, gamma * h_eff * std::norm(x[k]));
    }
  };

  linear(half_step);
  for (int s = 0; s < steps; ++s) {
    kerr();
    linear(s + 1 < steps ? full_step : half_step);
  }
  for (const auto& pol : sig.pols)
    for (const auto& z : pol)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw NumericError("propagate_span: non-finite field");
  return sig;
}

WdmSignal edfa(WdmSignal sig, double gain_db, double nf_db, double carrier_hz, std::mt19937_64& rng) {
  const double gain = std::pow(10.0, gain_db / 10.0);
  const double nf = std::pow(10.0, nf_db / 10.0);
  const double psd_w_per_hz = phys::planck * carrier_hz * std::max(gain * nf - 1.0, 0.0) / 2.0;
  const double sample_variance_mw = psd_w_per_hz * sig.sample_rate_hz * 1e3;
  const double field_gain = std::sqrt(gain);
  std::normal_distribution<double> normal(0.0, std::sqrt(sample_variance_mw / 2.0));
  for (auto& pol : sig.pols) {
    for (auto& z : pol) {
      const double re = normal(rng);
      const double im = normal(rng);
      z = z * field_gain + cdouble(re, im);
    }
  }
  return sig;
}

SymbolPairs receive(const WdmSignal& sig, const SsfConfig& cfg, const Constellation& c,
                    const std::vector<std::vector<int>>& center_labels, double total_length_km) {
  const auto n_sym = static_cast<std::size_t>(cfg.n_symbols);
  const std::size_t n = sig.pols.front().size();
  if (n != static_cast<std::size_t>(cfg.n_samples())) throw InvalidArgument("receive: signal length does not match config");
  if (center_labels.size() != sig.pols.size()) throw InvalidArgument("receive: need labels for every polarisation");
  const double df = cfg.link.symbol_rate_hz / cfg.n_symbols;
  const long half = band_half_width_bins(cfg);
  const long center = channel_bin(cfg, cfg.center_channel());
  const double beta2 = beta2_s2_per_km(cfg.link);
  const auto pts = c.points();

  // Per polarisation: filtered, dispersion-compensated, matched-filtered band in baseband bins.
  std::vector<std::vector<cdouble>> bands;
  for (const auto& pol : sig.pols) {
    std::vector<cdouble> spectrum(pol);
    forward_fft(spectrum);
    std::vector<cdouble> band(static_cast<std::size_t>(2 * half + 1));
    for (long d = -half; d <= half; ++d) {
      const std::size_t k = wrap(center + d, n);
      const double omega = 2.0 * std::numbers::pi * signed_bin(k, n) * sig.sample_rate_hz / static_cast<double>(n);
      const cdouble cd_inverse = std::exp(cdouble(0.0, -beta2 * omega * omega * total_length_km / 2.0));
      band[static_cast<std::size_t>(d + half)] =
          spectrum[k] * cd_inverse * rrc_response(d * df, cfg.link.symbol_rate_hz, cfg.rolloff);
    }
    bands.push_back(std::move(band));
  }

  auto sample = [&](const std::vector<cdouble>& band, int phase) {
    std::vector<cdouble> folded(n_sym);
    for (long d = -half; d <= half; ++d) {
      const double delay = 2.0 * std::numbers::pi * d * phase / static_cast<double>(n);
      folded[wrap(d, n_sym)] += band[static_cast<std::size_t>(d + half)] * std::polar(1.0, delay);
    }
    inverse_fft(folded);
    for (auto& z : folded) z /= cfg.oversampling;
    return folded;
  };

  SymbolPairs out;
  double best_metric = -1;
  for (int phase = 0; phase < cfg.oversampling; ++phase) {
    SymbolPairs candidate;
    candidate.sampling_phase = phase;
    for (std::size_t p = 0; p < bands.size(); ++p) {
      const auto y = sample(bands[p], phase);
      const auto& labels = center_labels[p];
      if (labels.size() != n_sym) throw InvalidArgument("receive: label count does not match n_symbols");
      for (std::size_t k = 0; k < n_sym; ++k) {
        candidate.labels.push_back(labels[k]);
        candidate.transmitted.push_back(pts[static_cast<std::size_t>(labels[k])]);
        candidate.received.push_back(y[k]);
      }
    }
    cdouble corr = 0;
    double energy = 0;
    for (std::size_t k = 0; k < candidate.received.size(); ++k) {
      corr += candidate.received[k] * std::conj(candidate.transmitted[k]);
      energy += std::norm(candidate.received[k]);
    }
    const double metric = std::norm(corr) / energy;
    if (metric > best_metric) {
      best_metric = metric;
      out = std::move(candidate);
    }
  }
  return out;
}

TransmissionResult run_transmission(const Constellation& c, const SsfConfig& cfg, int n_spans, double power_dbm) {
  if (n_spans < 1) throw InvalidArgument("run_transmission: n_spans must be >= 1");
  SsfConfig run_cfg = cfg;
  run_cfg.link.n_spans = n_spans;
  run_cfg.validate();
  const Constellation unit = normalize_unit_power(c);

  auto symbol_rng = make_stream(cfg.seed, 1);
  auto noise_rng = make_stream(cfg.seed, 2);
  auto tx = modulate(unit, run_cfg, power_dbm, symbol_rng);
  WdmSignal sig = std::move(tx.signal);
  const double gain_db = run_cfg.link.attenuation_db_per_km * run_cfg.link.span_length_km;
  for (int s = 0; s < n_spans; ++s) {
    sig = propagate_span(std::move(sig), run_cfg);
    sig = edfa(std::move(sig), gain_db, run_cfg.link.noise_figure_db, run_cfg.link.carrier_frequency_hz(), noise_rng);
  }
  const auto pairs = receive(sig, run_cfg, unit, tx.labels[static_cast<std::size_t>(run_cfg.center_channel())],
                             n_spans * run_cfg.link.span_length_km);

  TransmissionResult r;
  r.snr_eff_db = effective_snr_estimate(pairs.transmitted, pairs.received);
  r.mi_bit_4d = mi_from_pairs(unit, pairs.labels, pairs.received).mi_bits_per_4d;
  r.sigma2_total_mw = dbm_to_mw(power_dbm) / std::pow(10.0, r.snr_eff_db / 10.0);
  r.sigma2_nl_mw = r.sigma2_total_mw - ase_variance(run_cfg.link);
  return r;
}

}  // namespace gcs
