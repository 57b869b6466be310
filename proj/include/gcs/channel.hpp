#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcs/autodiff.hpp"
#include "gcs/constellation.hpp"
#include "json.hpp"

namespace gcs {

namespace phys {
inline constexpr double planck = 6.62607015e-34;       // J s
inline constexpr double speed_of_light = 299792458.0;  // m/s
}  // namespace phys

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

/// Physical description of a multi-span amplified WDM link. Defaults follow the reference system.
struct LinkConfig {
  int n_spans = 1;
  double span_length_km = 100;
  double attenuation_db_per_km = 0.2;
  double gamma_per_w_km = 1.3;
  double dispersion_ps_nm_km = 16.48;
  double noise_figure_db = 5;
  double symbol_rate_hz = 32e9;
  int n_channels = 5;
  double channel_spacing_hz = 50e9;
  double center_wavelength_nm = 1550;
  std::optional<double> tx_awgn_snr_db;

  /// Throws ConfigError. Loss, nonlinearity and dispersion may be zero (test links); sizes and rates must be positive.
  void validate() const;
  double span_gain_linear() const;
  double carrier_frequency_hz() const;
};

/**
 * ASE variance in mW accumulated over all spans, per polarisation, referred
 * to the symbol bandwidth: n_spans * h nu B (G F - 1) / 2.
 */
double ase_variance(const LinkConfig& link);

/// Nonlinear coefficients in 1/mW^2: sigma2 = P^3 (k0 + k1 (mu4 - 2) + k2 (mu6 - 6)).
struct NlinCoefficients {
  double kappa0 = 0;
  double kappa1 = 0;
  double kappa2 = 0;
  double fit_residual = 0;

  void validate() const;
};

nlohmann::json to_json(const NlinCoefficients& k);
NlinCoefficients nlin_coefficients_from_json(const nlohmann::json& j);
void save(const NlinCoefficients& k, const std::string& path);
NlinCoefficients load_nlin_coefficients(const std::string& path);

enum class ModelKind { gn, nlin };
ModelKind parse_model_kind(const std::string& s);
std::string to_string(ModelKind k);

inline constexpr double kDefaultVarianceFloorMw = 1e-12;

struct ChannelModel {
  ModelKind kind = ModelKind::gn;
  double sigma2_ase_mw = 0;
  NlinCoefficients coeffs;
  double launch_power_dbm = 0;
  std::optional<double> tx_awgn_snr_db;
  double variance_floor_mw = kDefaultVarianceFloorMw;

  static ChannelModel from_link(const LinkConfig& link, ModelKind kind, NlinCoefficients coeffs,
                                double launch_power_dbm);
  void validate() const;
  double launch_power_mw() const { return dbm_to_mw(launch_power_dbm); }
};

/// Value and partial derivatives of the NLIN variance.
struct VarianceGradient {
  double value = 0;
  double d_power = 0;
  double d_mu4 = 0;
  double d_mu6 = 0;
};

double nlin_variance(double power_mw, double mu4, double mu6, const NlinCoefficients& k,
                     double floor_mw = kDefaultVarianceFloorMw);
VarianceGradient nlin_variance_gradient(double power_mw, double mu4, double mu6, const NlinCoefficients& k,
                                        double floor_mw = kDefaultVarianceFloorMw);
double gn_variance(double power_mw, const NlinCoefficients& k, double floor_mw = kDefaultVarianceFloorMw);

/// sigma2_ASE + nonlinear term (+ transmitter AWGN when configured), in mW.
double total_noise_variance(const ChannelModel& m, double power_mw, double mu4, double mu6);

/// 10 log10(P / total noise) at the model's launch power. GN ignores the moments.
double effective_snr(const ChannelModel& m, double mu4, double mu6);
double effective_snr_at(const ChannelModel& m, double power_dbm, double mu4, double mu6);

/// y = x + sigma_total * eps, eps standard circular complex normal. `x` is already scaled by sqrt(P).
std::vector<cdouble> sample_channel(std::span<const cdouble> x, const ChannelModel& m, double mu4, double mu6,
                                    std::mt19937_64& rng);

/// Pre-drawn reparameterisation noise: n x 2 matrix of N(0, 1/2) entries (unit complex variance).
ad::Matrix draw_standard_noise(Eigen::Index rows, std::mt19937_64& rng);

/// Total noise variance as a differentiable node; `power_mw`, `mu4`, `mu6` are 1x1.
ad::Var noise_variance(ad::Tape& tape, const ChannelModel& m, ad::Var power_mw, ad::Var mu4, ad::Var mu6);

/**
 * Differentiable channel: x_scaled (n x 2) + sqrt(total variance) * eps.
 * Gradients reach the launch power and the constellation moments through
 * the noise scale.
 */
ad::Var sample_channel(ad::Tape& tape, ad::Var x_scaled, const ChannelModel& m, ad::Var power_mw, ad::Var mu4,
                       ad::Var mu6, const ad::Matrix& eps);

struct CalibrationPoint {
  double power_mw = 0;
  double mu4 = 0;
  double mu6 = 0;
  double sigma2_nl_mw = 0;
};

/**
 * Least-squares fit of sigma2_nl / P^3 against [1, mu4 - 2, mu6 - 6].
 * fit_residual is the RMS residual of that regression (1/mW^2).
 * Throws RankDeficient when the moment pairs cannot identify all three terms.
 */
NlinCoefficients calibrate_nlin(std::span<const CalibrationPoint> points);

}  // namespace gcs
