#pragma once

#include <complex>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace gcs {

using cdouble = std::complex<double>;

/**
 * @brief Ordered set of M symbols, each made of N complex values.
 *
 * Symbol i occupies points()[i*N .. i*N+N-1]; i is also the one-hot label
 * used in training. Only N = 1 is exercised by the trainer, dual-polarisation
 * figures are derived by doubling the per-2D values.
 */
class Constellation {
 public:
  Constellation() = default;
  explicit Constellation(std::vector<cdouble> points, int n_complex_dims = 1);

  int order() const { return order_; }
  int n_complex_dims() const { return n_complex_dims_; }
  bool normalized() const { return normalized_; }

  std::span<const cdouble> points() const { return points_; }
  std::span<const cdouble> symbol(int index) const;

  /// Mean over symbols of the summed |component|^2.
  double mean_power() const;
  /// Smallest Euclidean distance between two distinct symbols.
  double min_distance() const;

  Constellation scaled(double factor) const;

  nlohmann::json metadata = nlohmann::json::object();

 private:
  friend Constellation normalize_unit_power(const Constellation&);

  std::vector<cdouble> points_;
  int order_ = 0;
  int n_complex_dims_ = 1;
  bool normalized_ = false;
};

struct Moments {
  double mu2 = 0;
  double mu4 = 0;
  double mu6 = 0;
};

/**
 * Square M-QAM, M in {4, 16, 64, 256}, unit average power.
 *
 * Label layout: the upper log2(M)/2 bits of the label select the in-phase
 * level and the lower bits the quadrature level, each through a binary
 * reflected Gray code, so horizontally or vertically adjacent points differ
 * in exactly one label bit.
 */
Constellation new_qam(int order);

/// Deterministic approximation of a circular Gaussian: radii at Rayleigh
/// quantiles, phases on a golden-angle spiral. Moments approach mu4=2, mu6=6.
Constellation new_gaussian(int order);

Moments moments(const Constellation& c,
                std::optional<std::span<const double>> probabilities = std::nullopt);

Constellation normalize_unit_power(const Constellation& c);

void save(const Constellation& c, const std::filesystem::path& path);
Constellation load(const std::filesystem::path& path);

/// Loads `re,im` rows (optionally with a header line). Result is not normalized.
Constellation load_csv(const std::filesystem::path& path);
void save_csv(const Constellation& c, const std::filesystem::path& path);

nlohmann::json to_json(const Constellation& c);
Constellation from_json(const nlohmann::json& j);

}  // namespace gcs
