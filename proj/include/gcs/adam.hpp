#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gcs/autodiff.hpp"

namespace gcs::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/**
 * Bias-corrected Adam. Accumulators are created lazily on the first step
 * and must keep matching the parameter shapes afterwards.
 */
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Per-parameter learning rate, e.g. a faster rate for a scalar system parameter.
  void set_learning_rate(std::size_t param_index, double lr);

  /// One update of every parameter from its `grad` tensor.
  void step(ParameterSet& params);

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::vector<std::optional<double>> lr_override_;
  std::uint64_t t_ = 0;
};

}  // namespace gcs::ad
