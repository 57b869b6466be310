#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gcs::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense real tensor of rank <= 2. Scalars are 1x1, vectors are 1xn or nx1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols) : values_(Matrix::Zero(rows, cols)) {}
  explicit Tensor(Matrix values) : values_(std::move(values)) {}

  static Tensor scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

  std::array<Eigen::Index, 2> shape() const { return {values_.rows(), values_.cols()}; }
  std::string shape_string() const;

  Matrix& values() { return values_; }
  const Matrix& values() const { return values_; }

 private:
  Matrix values_;
};

/// Trainable tensor. `grad` is overwritten by Tape::backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/**
 * Registry of trainable parameters. Indices are stable for the lifetime of
 * the set, so they double as parameter ids on a tape.
 */
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  /// Glorot-uniform weight matrix (fan_in x fan_out) in +-sqrt(6/(fan_in+fan_out)).
  std::size_t add_glorot(std::string name, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);
  std::size_t add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols);

  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/**
 * Eager reverse-mode tape. Every op computes its value immediately and
 * records a backward rule; backward() replays the rules in exact reverse
 * recording order, accumulating into input gradients so that fan-out sums.
 * Values are checked for NaN/Inf after every op.
 *
 * A tape is single-use: record one forward pass, call backward once.
 */
class Tape {
 public:
  explicit Tape(ParameterSet* params = nullptr) : params_(params) {}

  Var constant(Matrix value);
  Var constant(double value) { return constant(Matrix::Constant(1, 1, value)); }
  Var parameter(std::size_t index);

  Var matmul(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var relu(Var x);
  /// Mean over rows of -log softmax(logits)[label]; fused log-sum-exp.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);
  Var scale(Var x, double factor);
  Var square(Var x);
  /// Rows of interleaved (re, im) pairs -> columns (|x|^2, |x|^4, |x|^6), |x|^2 summed over pairs.
  Var complex_modulus_powers(Var x);
  /// Column-wise mean over rows: n x m -> 1 x m.
  Var mean(Var x);
  /// x / sqrt(mean over rows of the row power); the result has unit mean row power.
  Var power_normalize(Var x);

  Var gather_rows(Var x, std::span<const int> rows);
  Var column(Var x, Eigen::Index col);
  /// Element-wise; `b` may be 1x1 and is then broadcast.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var add_constant(Var x, double c);
  Var sqrt(Var x);
  Var pow(Var x, double exponent);
  /// 10^(x/10), the dB -> linear conversion.
  Var db_to_linear(Var x);
  Var clamp_min(Var x, double floor);
  Var stop_gradient(Var x);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  const Matrix& grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and writes parameter gradients into the registry.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, Node&)> backward;
    std::size_t param = static_cast<std::size_t>(-1);
  };

  Var push(const char* op, Matrix value, std::function<void(Tape&, Node&)> backward = {});
  Node& node(Var v);
  const Node& node(Var v) const;
  Matrix& grad_of(std::size_t id);
  // grad += expr, or grad = expr on first touch (skips zero-filling large buffers).
  template <class Expr>
  void accumulate(std::size_t id, const Expr& expr) {
    auto& g = nodes_[id].grad;
    if (g.size() == 0)
      g = expr;
    else
      g += expr;
  }
  void require_same_or_scalar(const char* op, Var a, Var b) const;

  ParameterSet* params_;
  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

}  // namespace gcs::ad
