#include "gcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "gcs/errors.hpp"

namespace gcs {

namespace {

// Accumulates log2 sum_j exp((d_tx - |y - a_j|^2) / sigma2) over samples.
class MiAccumulator {
 public:
  MiAccumulator(std::span<const cdouble> alphabet, double sigma2) : alphabet_(alphabet), inv_sigma2_(1.0 / sigma2) {}

  void add(cdouble y, cdouble tx) {
    const double d_tx = std::norm(y - tx);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < alphabet_.size(); ++j) {
      exps_[j] = (d_tx - std::norm(y - alphabet_[j])) * inv_sigma2_;
      best = std::max(best, exps_[j]);
    }
    double s = 0;
    for (std::size_t j = 0; j < alphabet_.size(); ++j) s += std::exp(exps_[j] - best);
    const double term = (best + std::log(s)) / std::log(2.0);
    sum_ += term;
    sum_sq_ += term * term;
    ++n_;
  }

  MiEstimate finish() const {
    const double m = static_cast<double>(alphabet_.size());
    const double n = static_cast<double>(n_);
    const double mean = sum_ / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq_ - n * mean * mean) / (n - 1)) : 0.0;
    MiEstimate e;
    e.mi_bits_per_2d = std::clamp(std::log2(m) - mean, 0.0, std::log2(m));
    e.mi_bits_per_4d = 2.0 * e.mi_bits_per_2d;
    e.n_samples = n_;
    e.standard_error = std::sqrt(var / n);
    e.low_sample_count = n_ < 100;
    return e;
  }

  std::vector<double>& scratch() { return exps_; }

 private:
  std::span<const cdouble> alphabet_;
  double inv_sigma2_;
  std::vector<double> exps_ = std::vector<double>(alphabet_.size());
  double sum_ = 0;
  double sum_sq_ = 0;
  std::size_t n_ = 0;
};

void require_single_dim(const Constellation& c, const char* who) {
  if (c.n_complex_dims() != 1) throw InvalidArgument(std::string(who) + ": only single complex dimension supported");
}

}  // namespace

MiEstimate mi_gaussian_auxiliary(const Constellation& c, double sigma2, std::mt19937_64& rng, std::size_t n_samples) {
  require_single_dim(c, "mi_gaussian_auxiliary");
  if (!(sigma2 > 0)) throw InvalidArgument("mi_gaussian_auxiliary: sigma2 must be positive");
  if (n_samples == 0) throw InvalidArgument("mi_gaussian_auxiliary: need at least one sample");
  const auto pts = c.points();
  MiAccumulator acc(pts, sigma2);
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2 / 2.0));
  for (std::size_t k = 0; k < n_samples; ++k) {
    const cdouble x = pts[k % pts.size()];
    const double re = normal(rng);
    const double im = normal(rng);
    acc.add(x + cdouble(re, im), x);
  }
  return acc.finish();
}

cdouble fit_complex_gain(std::span<const cdouble> x, std::span<const cdouble> y) {
  if (x.size() != y.size()) throw InvalidArgument("fit_complex_gain: length mismatch");
  cdouble num = 0;
  double den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += y[i] * std::conj(x[i]);
    den += std::norm(x[i]);
  }
  if (!(den > 0)) throw DegenerateInput("fit_complex_gain: transmitted sequence has zero power");
  return num / den;
}

MiEstimate mi_from_pairs(const Constellation& c, std::span<const int> labels, std::span<const cdouble> received) {
  require_single_dim(c, "mi_from_pairs");
  if (labels.size() != received.size()) throw InvalidArgument("mi_from_pairs: length mismatch");
  if (labels.empty()) throw InvalidArgument("mi_from_pairs: no samples");
  const auto pts = c.points();
  std::vector<cdouble> tx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= c.order()) throw InvalidArgument("mi_from_pairs: label out of range");
    tx[i] = pts[static_cast<std::size_t>(labels[i])];
  }
  const cdouble h = fit_complex_gain(tx, received);
  double sigma2 = 0;
  for (std::size_t i = 0; i < tx.size(); ++i) sigma2 += std::norm(received[i] - h * tx[i]);
  sigma2 /= static_cast<double>(tx.size());
  if (!(sigma2 > 0)) sigma2 = std::norm(h) * 1e-12;

  std::vector<cdouble> alphabet(pts.begin(), pts.end());
  for (auto& a : alphabet) a *= h;
  MiAccumulator acc(alphabet, sigma2);
  for (std::size_t i = 0; i < tx.size(); ++i) acc.add(received[i], h * tx[i]);
  return acc.finish();
}

double effective_snr_estimate(std::span<const cdouble> x, std::span<const cdouble> y) {
  if (x.size() != y.size()) throw InvalidArgument("effective_snr_estimate: length mismatch");
  if (x.size() < 1000) throw InvalidArgument("effective_snr_estimate: need at least 1000 symbol pairs");
  const cdouble h = fit_complex_gain(x, y);
  double signal = 0, noise = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    signal += std::norm(h * x[i]);
    noise += std::norm(y[i] - h * x[i]);
  }
  if (noise <= 0 || signal / noise > std::pow(10.0, kSnrCapDb / 10.0)) return kSnrCapDb;
  return 10.0 * std::log10(signal / noise);
}

void write_sweep_header(std::ostream& out) {
  out << "constellation,power_dbm,snr_eff_db,mi_bit_4d,mu4,mu6,source,error\n";
}

void write_sweep_row(std::ostream& out, const SweepRow& row) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s.precision(10);
  s << row.constellation << ',' << row.power_dbm << ',';
  if (row.error.empty())
    s << row.snr_eff_db << ',' << row.mi_bit_4d << ',' << row.mu4 << ',' << row.mu6;
  else
    s << ",,,";
  std::string err = row.error;
  for (auto& ch : err)
    if (ch == ',' || ch == '\n') ch = ';';
  s << ',' << row.source << ',' << err << '\n';
  out << s.str();
}

}  // namespace gcs
