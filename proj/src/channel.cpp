#include "gcs/channel.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "gcs/errors.hpp"

namespace gcs {

namespace {

constexpr double kMomentSlack = 1e-9;

double coefficient_sum(double mu4, double mu6, const NlinCoefficients& k) {
  return k.kappa0 + k.kappa1 * (mu4 - 2.0) + k.kappa2 * (mu6 - 6.0);
}

void check_nlin_inputs(double power_mw, double mu4, double mu6) {
  if (!(power_mw > 0)) throw InvalidArgument("nlin_variance: launch power must be positive");
  if (!(mu4 >= 1.0 - kMomentSlack) || !(mu6 >= 1.0 - kMomentSlack))
    throw InvalidArgument("nlin_variance: moments must satisfy mu4 >= 1 and mu6 >= 1");
}

void require_positive(const char* name, double v) {
  if (!(v > 0) || !std::isfinite(v)) throw ConfigError(std::string("link: ") + name + " must be positive");
}

}  // namespace

void LinkConfig::validate() const {
  if (n_spans < 1) throw ConfigError("link: n_spans must be >= 1");
  if (n_channels < 1) throw ConfigError("link: n_channels must be >= 1");
  require_positive("span_length_km", span_length_km);
  if (!(attenuation_db_per_km >= 0)) throw ConfigError("link: attenuation_db_per_km must be >= 0");
  if (!(gamma_per_w_km >= 0) || !std::isfinite(gamma_per_w_km)) throw ConfigError("link: gamma_per_w_km must be >= 0");
  if (!std::isfinite(dispersion_ps_nm_km)) throw ConfigError("link: dispersion_ps_nm_km must be finite");
  if (!std::isfinite(noise_figure_db)) throw ConfigError("link: noise_figure_db must be finite");
  require_positive("symbol_rate_hz", symbol_rate_hz);
  require_positive("channel_spacing_hz", channel_spacing_hz);
  require_positive("center_wavelength_nm", center_wavelength_nm);
  if (tx_awgn_snr_db && !std::isfinite(*tx_awgn_snr_db)) throw ConfigError("link: tx_awgn_snr_db must be finite");
}

double LinkConfig::span_gain_linear() const {
  return std::pow(10.0, attenuation_db_per_km * span_length_km / 10.0);
}

double LinkConfig::carrier_frequency_hz() const {
  return phys::speed_of_light / (center_wavelength_nm * 1e-9);
}

double ase_variance(const LinkConfig& link) {
  link.validate();
  const double gain = link.span_gain_linear();
  const double nf = std::pow(10.0, link.noise_figure_db / 10.0);
  const double per_span_w = phys::planck * link.carrier_frequency_hz() * link.symbol_rate_hz * (gain * nf - 1.0) / 2.0;
  return link.n_spans * per_span_w * 1e3;
}

void NlinCoefficients::validate() const {
  if (!(kappa0 > 0) || !std::isfinite(kappa0)) throw ConfigError("nlin coefficients: kappa0 must be positive");
  if (!std::isfinite(kappa1) || !std::isfinite(kappa2)) throw ConfigError("nlin coefficients: non-finite kappa");
}

nlohmann::json to_json(const NlinCoefficients& k) {
  return {{"kappa0", k.kappa0}, {"kappa1", k.kappa1}, {"kappa2", k.kappa2}, {"fit_residual", k.fit_residual}};
}

NlinCoefficients nlin_coefficients_from_json(const nlohmann::json& j) {
  NlinCoefficients k;
  auto get = [&](const char* name, double& out, bool required) {
    if (!j.contains(name)) {
      if (required) throw ParseError(std::string("nlin coefficients: missing field '") + name + "'");
      return;
    }
    if (!j.at(name).is_number()) throw ParseError(std::string("nlin coefficients: field '") + name + "' is not a number");
    out = j.at(name).get<double>();
  };
  get("kappa0", k.kappa0, true);
  get("kappa1", k.kappa1, true);
  get("kappa2", k.kappa2, true);
  get("fit_residual", k.fit_residual, false);
  k.validate();
  return k;
}

void save(const NlinCoefficients& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << to_json(k).dump(2) << '\n';
}

NlinCoefficients load_nlin_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open NLIN coefficient file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("nlin coefficients: '" + path + "' is not valid JSON: " + e.what());
  }
  return nlin_coefficients_from_json(j);
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "gn" || s == "GN") return ModelKind::gn;
  if (s == "nlin" || s == "NLIN") return ModelKind::nlin;
  throw InvalidArgument("unknown channel model '" + s + "' (expected gn or nlin)");
}

std::string to_string(ModelKind k) { return k == ModelKind::gn ? "gn" : "nlin"; }

ChannelModel ChannelModel::from_link(const LinkConfig& link, ModelKind kind, NlinCoefficients coeffs,
                                     double launch_power_dbm) {
  ChannelModel m;
  m.kind = kind;
  m.sigma2_ase_mw = ase_variance(link);
  m.coeffs = coeffs;
  m.launch_power_dbm = launch_power_dbm;
  m.tx_awgn_snr_db = link.tx_awgn_snr_db;
  m.validate();
  return m;
}

void ChannelModel::validate() const {
  if (!(sigma2_ase_mw > 0)) throw ConfigError("channel model: sigma2_ase_mw must be positive");
  if (!std::isfinite(launch_power_dbm)) throw ConfigError("channel model: launch power must be finite");
  if (!(variance_floor_mw > 0)) throw ConfigError("channel model: variance floor must be positive");
  if (!(coeffs.kappa0 >= 0) || !std::isfinite(coeffs.kappa1) || !std::isfinite(coeffs.kappa2))
    throw ConfigError("channel model: invalid nonlinear coefficients");
}

double nlin_variance(double power_mw, double mu4, double mu6, const NlinCoefficients& k, double floor_mw) {
  return nlin_variance_gradient(power_mw, mu4, mu6, k, floor_mw).value;
}

VarianceGradient nlin_variance_gradient(double power_mw, double mu4, double mu6, const NlinCoefficients& k,
                                        double floor_mw) {
  check_nlin_inputs(power_mw, mu4, mu6);
  const double c = coefficient_sum(mu4, mu6, k);
  if (c < 0)
    throw ConfigError("nlin_variance: negative variance at mu4=" + std::to_string(mu4) + ", mu6=" + std::to_string(mu6) +
                      "; the kappa fit is not valid for these moments");
  const double p3 = power_mw * power_mw * power_mw;
  const double v = p3 * c;
  if (v < floor_mw) return {floor_mw, 0, 0, 0};
  return {v, 3.0 * power_mw * power_mw * c, p3 * k.kappa1, p3 * k.kappa2};
}

double gn_variance(double power_mw, const NlinCoefficients& k, double floor_mw) {
  if (!(power_mw > 0)) throw InvalidArgument("gn_variance: launch power must be positive");
  const double p3 = power_mw * power_mw * power_mw;
  return std::max(p3 * k.kappa0, floor_mw);
}

double total_noise_variance(const ChannelModel& m, double power_mw, double mu4, double mu6) {
  double v = m.sigma2_ase_mw;
  v += m.kind == ModelKind::gn ? gn_variance(power_mw, m.coeffs, m.variance_floor_mw)
                               : nlin_variance(power_mw, mu4, mu6, m.coeffs, m.variance_floor_mw);
  if (m.tx_awgn_snr_db) v += power_mw * std::pow(10.0, -*m.tx_awgn_snr_db / 10.0);
  return v;
}

double effective_snr(const ChannelModel& m, double mu4, double mu6) {
  return effective_snr_at(m, m.launch_power_dbm, mu4, mu6);
}

double effective_snr_at(const ChannelModel& m, double power_dbm, double mu4, double mu6) {
  const double p = dbm_to_mw(power_dbm);
  return 10.0 * std::log10(p / total_noise_variance(m, p, mu4, mu6));
}

std::vector<cdouble> sample_channel(std::span<const cdouble> x, const ChannelModel& m, double mu4, double mu6,
                                    std::mt19937_64& rng) {
  const double sigma = std::sqrt(total_noise_variance(m, m.launch_power_mw(), mu4, mu6));
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  std::vector<cdouble> y(x.begin(), x.end());
  for (auto& v : y) {
    const double re = normal(rng);
    const double im = normal(rng);
    v += sigma * cdouble(re, im);
  }
  return y;
}

ad::Matrix draw_standard_noise(Eigen::Index rows, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  ad::Matrix eps(rows, 2);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
  return eps;
}

ad::Var noise_variance(ad::Tape& tape, const ChannelModel& m, ad::Var power_mw, ad::Var mu4, ad::Var mu6) {
  const auto& k = m.coeffs;
  const ad::Var p3 = tape.pow(power_mw, 3.0);
  ad::Var nonlinear;
  if (m.kind == ModelKind::gn) {
    nonlinear = tape.scale(p3, k.kappa0);
  } else {
    const double mu4_v = tape.scalar(mu4);
    const double mu6_v = tape.scalar(mu6);
    check_nlin_inputs(tape.scalar(power_mw), mu4_v, mu6_v);
    if (coefficient_sum(mu4_v, mu6_v, k) < 0)
      throw ConfigError("nlin_variance: negative variance at the current moments; the kappa fit is not valid");
    const ad::Var c = tape.add(tape.scale(tape.add_constant(mu4, -2.0), k.kappa1),
                               tape.scale(tape.add_constant(mu6, -6.0), k.kappa2));
    nonlinear = tape.mul(p3, tape.add_constant(c, k.kappa0));
  }
  ad::Var total = tape.add_constant(tape.clamp_min(nonlinear, m.variance_floor_mw), m.sigma2_ase_mw);
  if (m.tx_awgn_snr_db) total = tape.add(total, tape.scale(power_mw, std::pow(10.0, -*m.tx_awgn_snr_db / 10.0)));
  return total;
}

ad::Var sample_channel(ad::Tape& tape, ad::Var x_scaled, const ChannelModel& m, ad::Var power_mw, ad::Var mu4,
                       ad::Var mu6, const ad::Matrix& eps) {
  const auto& x = tape.value(x_scaled);
  if (eps.rows() != x.rows() || eps.cols() != x.cols())
    throw ShapeError("sample_channel: noise shape does not match the symbol batch");
  const ad::Var sigma = tape.sqrt(noise_variance(tape, m, power_mw, mu4, mu6));
  return tape.add(x_scaled, tape.mul(tape.constant(eps), sigma));
}

NlinCoefficients calibrate_nlin(std::span<const CalibrationPoint> points) {
  if (points.size() < 3) throw InvalidArgument("calibrate_nlin: at least 3 measurements are required");
  std::set<double> powers;
  for (const auto& p : points) {
    if (!(p.power_mw > 0) || !std::isfinite(p.sigma2_nl_mw))
      throw InvalidArgument("calibrate_nlin: measurements need positive power and finite variance");
    powers.insert(p.power_mw);
  }
  if (powers.size() < 2) throw InvalidArgument("calibrate_nlin: measurements must cover at least 2 launch powers");

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    a(i, 0) = 1.0;
    a(i, 1) = p.mu4 - 2.0;
    a(i, 2) = p.mu6 - 6.0;
    b(i) = p.sigma2_nl_mw / (p.power_mw * p.power_mw * p.power_mw);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-9);
  if (qr.rank() < 3)
    throw RankDeficient("calibrate_nlin: the moment pairs are collinear; add constellations with more diverse "
                        "(mu4, mu6) to identify all coefficients");
  const Eigen::Vector3d x = qr.solve(b);
  NlinCoefficients k{x(0), x(1), x(2), std::sqrt((a * x - b).squaredNorm() / static_cast<double>(n))};
  return k;
}

}  // namespace gcs
