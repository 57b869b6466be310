#include "gcs/trainer.hpp"

#include <cmath>
#include <numeric>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <sstream>

#include "gcs/errors.hpp"

namespace gcs {

namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

double window_mean(const std::vector<TraceRow>& trace, std::size_t begin, std::size_t end) {
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += trace[i].loss;
  return s / static_cast<double>(end - begin);
}

}  // namespace

void TrainConfig::validate() const {
  if (M < 2) throw ConfigError("train: M must be >= 2");
  if (n_complex_dims != 1) throw ConfigError("train: only n_complex_dims = 1 is supported");
  if (layers < 1 || layers > 2) throw ConfigError("train: layers must be 1 or 2");
  if (hidden_units < 1) throw ConfigError("train: hidden_units must be positive");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be positive");
  if (power_learning_rate && !(*power_learning_rate > 0))
    throw ConfigError("train: power_learning_rate must be positive");
  if (batch_schedule.empty()) throw ConfigError("train: batch_schedule is empty");
  if (batch_schedule.front().from_iteration != 0) throw ConfigError("train: batch_schedule must start at iteration 0");
  for (std::size_t i = 0; i < batch_schedule.size(); ++i) {
    if (batch_schedule[i].multiple < 1) throw ConfigError("train: batch multiples must be positive");
    if (i > 0 && batch_schedule[i].from_iteration <= batch_schedule[i - 1].from_iteration)
      throw ConfigError("train: batch_schedule thresholds must be strictly increasing");
  }
  if (max_iterations < 1) throw ConfigError("train: max_iterations must be positive");
  if (plateau_window < 1) throw ConfigError("train: plateau_window must be positive");
  channel.validate();
  if (channel.kind == ModelKind::nlin) channel.coeffs.validate();
}

int TrainConfig::batch_multiple_at(int iteration) const {
  int multiple = batch_schedule.front().multiple;
  for (const auto& stage : batch_schedule)
    if (iteration >= stage.from_iteration) multiple = stage.multiple;
  return multiple;
}

Autoencoder::Autoencoder(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  auto rng = make_stream(cfg_.seed, 1);
  const Eigen::Index m = cfg_.M;
  const Eigen::Index h = cfg_.hidden_units;
  const Eigen::Index out = 2 * cfg_.n_complex_dims;

  Eigen::Index fan_in = m;
  for (int l = 0; l < cfg_.layers; ++l) {
    encoder_weights_.push_back(params_.add_glorot("encoder.w" + std::to_string(l), fan_in, h, rng));
    encoder_biases_.push_back(params_.add_zeros("encoder.b" + std::to_string(l), 1, h));
    fan_in = h;
  }
  encoder_weights_.push_back(params_.add_glorot("encoder.w_out", fan_in, out, rng));
  encoder_biases_.push_back(params_.add_zeros("encoder.b_out", 1, out));

  fan_in = out;
  for (int l = 0; l < cfg_.layers; ++l) {
    decoder_weights_.push_back(params_.add_glorot("decoder.w" + std::to_string(l), fan_in, h, rng));
    decoder_biases_.push_back(params_.add_zeros("decoder.b" + std::to_string(l), 1, h));
    fan_in = h;
  }
  decoder_weights_.push_back(params_.add_glorot("decoder.w_out", fan_in, m, rng));
  decoder_biases_.push_back(params_.add_zeros("decoder.b_out", 1, m));

  if (cfg_.train_launch_power)
    power_param_ = params_.add("launch_power_dbm", ad::Tensor::scalar(cfg_.initial_launch_power_dbm));
}

double Autoencoder::launch_power_dbm() const {
  return power_param_ ? params_[*power_param_].value.values()(0, 0) : cfg_.channel.launch_power_dbm;
}

ad::Var Autoencoder::encode(ad::Tape& tape) const {
  // The one-hot input matrix for labels 0..M-1 is the identity, so the first
  // layer's pre-activation is its weight matrix plus bias.
  ad::Var h = tape.parameter(encoder_weights_[0]);
  h = tape.relu(tape.add_bias(h, tape.parameter(encoder_biases_[0])));
  for (std::size_t l = 1; l + 1 < encoder_weights_.size(); ++l)
    h = tape.relu(tape.add_bias(tape.matmul(h, tape.parameter(encoder_weights_[l])),
                                tape.parameter(encoder_biases_[l])));
  const ad::Var raw =
      tape.add_bias(tape.matmul(h, tape.parameter(encoder_weights_.back())), tape.parameter(encoder_biases_.back()));
  return tape.power_normalize(raw);
}

ForwardPass Autoencoder::forward(ad::Tape& tape, std::span<const int> labels, const ad::Matrix& eps) const {
  ForwardPass f;
  f.constellation = encode(tape);

  const ad::Var mom = tape.mean(tape.complex_modulus_powers(f.constellation));
  const ad::Var m2 = tape.column(mom, 0);
  f.mu4 = tape.div(tape.column(mom, 1), tape.pow(m2, 2.0));
  f.mu6 = tape.div(tape.column(mom, 2), tape.pow(m2, 3.0));
  ad::Var mu4 = f.mu4, mu6 = f.mu6;
  if (cfg_.detach_moments) {
    mu4 = tape.stop_gradient(mu4);
    mu6 = tape.stop_gradient(mu6);
  }

  f.power_mw = power_param_ ? tape.db_to_linear(tape.parameter(*power_param_))
                            : tape.constant(cfg_.channel.launch_power_mw());
  const ad::Var amplitude = tape.sqrt(f.power_mw);

  const ad::Var x = tape.mul(tape.gather_rows(f.constellation, labels), amplitude);
  f.received = sample_channel(tape, x, cfg_.channel, f.power_mw, mu4, mu6, eps);

  // Receiver gain control: the decoder sees y / sqrt(P).
  ad::Var h = tape.div(f.received, amplitude);
  for (std::size_t l = 0; l + 1 < decoder_weights_.size(); ++l)
    h = tape.relu(tape.add_bias(tape.matmul(h, tape.parameter(decoder_weights_[l])),
                                tape.parameter(decoder_biases_[l])));
  const ad::Var logits =
      tape.add_bias(tape.matmul(h, tape.parameter(decoder_weights_.back())), tape.parameter(decoder_biases_.back()));
  f.loss = tape.softmax_cross_entropy(logits, labels);
  return f;
}

Constellation Autoencoder::extract_constellation() const {
  ad::Tape tape(const_cast<ad::ParameterSet*>(&params_));
  const auto& x = tape.value(encode(tape));
  std::vector<cdouble> points;
  points.reserve(static_cast<std::size_t>(x.rows() * cfg_.n_complex_dims));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (int n = 0; n < cfg_.n_complex_dims; ++n) points.emplace_back(x(i, 2 * n), x(i, 2 * n + 1));
  Constellation c(std::move(points), cfg_.n_complex_dims);
  c.metadata["channel"] = to_string(cfg_.channel.kind);
  c.metadata["launch_power_dbm"] = launch_power_dbm();
  c.metadata["seed"] = cfg_.seed;
  return normalize_unit_power(c);
}

Autoencoder build_autoencoder(const TrainConfig& cfg) { return Autoencoder(cfg); }

std::vector<int> stratified_labels(int M, int multiple) {
  std::vector<int> labels(static_cast<std::size_t>(M) * static_cast<std::size_t>(multiple));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(M));
  return labels;
}

TrainResult train(const TrainConfig& cfg) {
#if defined(__GLIBC__)
  // Batch-sized temporaries are rebuilt every iteration; keep them on the heap
  // instead of paying for an mmap/munmap pair each time.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  Autoencoder model(cfg);
  auto& params = model.parameters();
  ad::Adam adam({cfg.learning_rate});
  if (model.power_parameter() && cfg.power_learning_rate)
    adam.set_learning_rate(*model.power_parameter(), *cfg.power_learning_rate);

  auto noise_rng = make_stream(cfg.seed, 2);
  const int last_switch = cfg.batch_schedule.back().from_iteration;
  const auto window = static_cast<std::size_t>(cfg.plateau_window);

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(cfg.max_iterations));
  int current_multiple = -1;
  std::vector<int> labels;
  double last_finite_loss = std::nan("");

  for (int j = 0; j < cfg.max_iterations; ++j) {
    const int multiple = cfg.batch_multiple_at(j);
    if (multiple != current_multiple) {
      labels = stratified_labels(cfg.M, multiple);
      current_multiple = multiple;
    }
    const ad::Matrix eps = draw_standard_noise(static_cast<Eigen::Index>(labels.size()), noise_rng);

    ad::Tape tape(&params);
    ForwardPass f;
    try {
      f = model.forward(tape, labels, eps);
    } catch (const NumericError& e) {
      std::ostringstream msg;
      msg << "train: non-finite values at iteration " << j << " (last finite loss " << last_finite_loss
          << "): " << e.what();
      throw NumericError(msg.str());
    }
    const double loss = tape.scalar(f.loss);
    last_finite_loss = loss;
    result.trace.push_back({j, loss, tape.scalar(f.mu4), tape.scalar(f.mu6), model.launch_power_dbm()});

    tape.backward(f.loss);
    adam.step(params);

    if (model.power_parameter() && std::abs(model.launch_power_dbm()) > cfg.max_abs_power_dbm) {
      std::ostringstream msg;
      msg << "train: launch power diverged to " << model.launch_power_dbm() << " dBm at iteration " << j;
      throw NumericError(msg.str());
    }

    const auto since_switch = static_cast<std::size_t>(j + 1 - last_switch);
    if (j + 1 > last_switch && since_switch >= 2 * window && since_switch % window == 0) {
      const std::size_t end = result.trace.size();
      const double recent = window_mean(result.trace, end - window, end);
      const double previous = window_mean(result.trace, end - 2 * window, end - window);
      if (std::abs(recent - previous) < cfg.plateau_tolerance * std::abs(previous)) {
        result.early_stopped = true;
        break;
      }
    }
  }

  result.constellation = model.extract_constellation();
  result.final_launch_power_dbm = model.launch_power_dbm();
  return result;
}

TrainResult train_joint_power(TrainConfig cfg) {
  cfg.train_launch_power = true;
  return train(cfg);
}

}  // namespace gcs
