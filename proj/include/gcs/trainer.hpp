#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gcs/adam.hpp"
#include "gcs/autodiff.hpp"
#include "gcs/channel.hpp"
#include "gcs/constellation.hpp"

namespace gcs {

struct BatchStage {
  int from_iteration = 0;
  int multiple = 8;  // batch size in symbols = multiple * M
};

struct TrainConfig {
  int M = 64;
  int n_complex_dims = 1;
  int layers = 1;
  int hidden_units = 32;
  double learning_rate = 1e-3;
  std::optional<double> power_learning_rate;  // defaults to learning_rate
  std::vector<BatchStage> batch_schedule{{0, 8}, {100, 2048}};
  int max_iterations = 10000;
  int plateau_window = 1000;
  double plateau_tolerance = 1e-3;
  std::uint64_t seed = 1;
  ChannelModel channel;
  bool train_launch_power = false;
  double initial_launch_power_dbm = 0;
  // Ablation: the constellation moments still set the noise level but receive no gradient.
  bool detach_moments = false;
  double max_abs_power_dbm = 20;

  void validate() const;
  int batch_multiple_at(int iteration) const;
};

struct TraceRow {
  int iteration = 0;
  double loss = 0;
  double mu4 = 0;
  double mu6 = 0;
  double power_dbm = 0;
};

struct TrainResult {
  Constellation constellation;
  std::vector<TraceRow> trace;
  double final_launch_power_dbm = 0;
  bool early_stopped = false;
};

/// Intermediate nodes of one encoder-channel-decoder pass.
struct ForwardPass {
  ad::Var constellation;  // M x 2N, unit mean power
  ad::Var mu4;
  ad::Var mu6;
  ad::Var power_mw;
  ad::Var received;  // batch x 2N, in units of sqrt(mW)
  ad::Var loss;
};

/**
 * Encoder (one-hot index -> hidden ReLU layers -> 2N reals -> power
 * normalisation), differentiable channel, and decoder (2N -> hidden ReLU
 * layers -> M logits -> fused softmax cross-entropy).
 *
 * Batches are stratified, so every class appears equally often. The encoder
 * is therefore evaluated once on the M one-hot inputs and the rows are
 * gathered into the batch; normalising and taking moments over the M rows
 * gives exactly the batch values.
 */
class Autoencoder {
 public:
  explicit Autoencoder(const TrainConfig& cfg);

  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  std::optional<std::size_t> power_parameter() const { return power_param_; }

  double launch_power_dbm() const;

  /// labels: batch class indices; eps: batch x 2 standard complex noise (see draw_standard_noise).
  ForwardPass forward(ad::Tape& tape, std::span<const int> labels, const ad::Matrix& eps) const;

  /// Encoder applied to the M one-hot inputs, normalised to unit power.
  Constellation extract_constellation() const;

 private:
  ad::Var encode(ad::Tape& tape) const;

  TrainConfig cfg_;
  ad::ParameterSet params_;
  std::vector<std::size_t> encoder_weights_, encoder_biases_;
  std::vector<std::size_t> decoder_weights_, decoder_biases_;
  std::optional<std::size_t> power_param_;
};

Autoencoder build_autoencoder(const TrainConfig& cfg);

/// Stratified labels: 0..M-1 each repeated `multiple` times.
std::vector<int> stratified_labels(int M, int multiple);

TrainResult train(const TrainConfig& cfg);
/// As train() with the launch power registered as a trainable scalar (stored in dBm).
TrainResult train_joint_power(TrainConfig cfg);

}  // namespace gcs
