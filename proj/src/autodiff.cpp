#include "gcs/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "gcs/errors.hpp"

namespace gcs::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream s;
  s << '[' << m.rows() << 'x' << m.cols() << ']';
  return s.str();
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Reduces a broadcast gradient back to the shape of the operand it came from.
Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  return Matrix::Constant(1, 1, g.sum());
}

}  // namespace

std::string Tensor::shape_string() const { return shape_of(values_); }

std::size_t ParameterSet::add(std::string name, Tensor value) {
  Tensor grad(value.values().rows(), value.values().cols());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.size() - 1;
}

std::size_t ParameterSet::add_glorot(std::string name, Eigen::Index fan_in, Eigen::Index fan_out,
                                     std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return add(std::move(name), Tensor(std::move(w)));
}

std::size_t ParameterSet::add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return add(std::move(name), Tensor(rows, cols));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.values().size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.values().setZero(p.value.values().rows(), p.value.values().cols());
}

Var Tape::push(const char* op, Matrix value, std::function<void(Tape&, Node&)> backward) {
  if (!value.allFinite()) throw NumericError(std::string("autodiff: non-finite value produced by '") + op + "'");
  nodes_.push_back({op, std::move(value), Matrix(), std::move(backward)});
  return Var{nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw InvalidArgument("autodiff: variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw InvalidArgument("autodiff: variable does not belong to this tape");
  return nodes_[v.id];
}

Matrix& Tape::grad_of(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::require_same_or_scalar(const char* op, Var a, Var b) const {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if ((va.rows() == vb.rows() && va.cols() == vb.cols()) || is_scalar(vb)) return;
  throw ShapeError(std::string("autodiff: ") + op + " shape mismatch " + shape_of(va) + " vs " + shape_of(vb));
}

Var Tape::constant(Matrix value) { return push("constant", std::move(value)); }

Var Tape::parameter(std::size_t index) {
  if (params_ == nullptr || index >= params_->size())
    throw InvalidArgument("autodiff: parameter index not in registry");
  Var v = push("parameter", (*params_)[index].value.values());
  nodes_[v.id].param = index;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.cols() != vb.rows())
    throw ShapeError("autodiff: matmul shape mismatch " + shape_of(va) + " x " + shape_of(vb));
  Matrix out = va * vb;
  return push("matmul", std::move(out), [a, b](Tape& t, Node& self) {
    t.accumulate(a.id, self.grad * t.nodes_[b.id].value.transpose());
    t.accumulate(b.id, t.nodes_[a.id].value.transpose() * self.grad);
  });
}

Var Tape::add_bias(Var x, Var bias) {
  const auto& vx = node(x).value;
  const auto& vb = node(bias).value;
  if (vb.rows() != 1 || vb.cols() != vx.cols())
    throw ShapeError("autodiff: add_bias shape mismatch " + shape_of(vx) + " + " + shape_of(vb));
  Matrix out = vx.rowwise() + vb.row(0);
  return push("add_bias", std::move(out), [x, bias](Tape& t, Node& self) {
    t.accumulate(x.id, self.grad);
    t.accumulate(bias.id, self.grad.colwise().sum());
  });
}

Var Tape::relu(Var x) {
  Matrix out = node(x).value.cwiseMax(0.0);
  return push("relu", std::move(out), [x](Tape& t, Node& self) {
    const auto& in = t.nodes_[x.id].value;
    t.accumulate(x.id, (in.array() > 0.0).select(self.grad, 0.0));
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& z = node(logits).value;
  if (static_cast<Eigen::Index>(labels.size()) != z.rows())
    throw ShapeError("autodiff: softmax_cross_entropy has " + std::to_string(labels.size()) + " labels for logits " +
                     shape_of(z));
  const Eigen::Index n = z.rows();
  const Eigen::Index m = z.cols();
  Matrix probs(n, m);
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= m) throw InvalidArgument("autodiff: softmax_cross_entropy label out of range");
    const double zmax = z.row(i).maxCoeff();
    probs.row(i) = (z.row(i).array() - zmax).exp();
    const double sum = probs.row(i).sum();
    probs.row(i) /= sum;
    total += std::log(sum) + zmax - z(i, label);
  }
  std::vector<int> kept(labels.begin(), labels.end());
  return push("softmax_cross_entropy", Matrix::Constant(1, 1, total / static_cast<double>(n)),
              [logits, probs = std::move(probs), kept = std::move(kept)](Tape& t, Node& self) {
                const double g = self.grad(0, 0) / static_cast<double>(probs.rows());
                t.accumulate(logits.id, g * probs);
                auto& gz = t.grad_of(logits.id);
                for (Eigen::Index i = 0; i < probs.rows(); ++i) gz(i, kept[static_cast<std::size_t>(i)]) -= g;
              });
}

Var Tape::scale(Var x, double factor) {
  Matrix out = node(x).value * factor;
  return push("scale", std::move(out), [x, factor](Tape& t, Node& self) { t.grad_of(x.id) += factor * self.grad; });
}

Var Tape::square(Var x) {
  Matrix out = node(x).value.array().square().matrix();
  return push("square", std::move(out), [x](Tape& t, Node& self) {
    t.grad_of(x.id).array() += 2.0 * t.nodes_[x.id].value.array() * self.grad.array();
  });
}

Var Tape::complex_modulus_powers(Var x) {
  const auto& v = node(x).value;
  if (v.cols() % 2 != 0)
    throw ShapeError("autodiff: complex_modulus_powers needs interleaved (re, im) columns, got " + shape_of(v));
  Matrix out(v.rows(), 3);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double p = v.row(i).squaredNorm();
    out(i, 0) = p;
    out(i, 1) = p * p;
    out(i, 2) = p * p * p;
  }
  return push("complex_modulus_powers", std::move(out), [x](Tape& t, Node& self) {
    const auto& in = t.nodes_[x.id].value;
    auto& gx = t.grad_of(x.id);
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const double p = self.value(i, 0);
      const double dp = self.grad(i, 0) + 2.0 * p * self.grad(i, 1) + 3.0 * p * p * self.grad(i, 2);
      gx.row(i) += 2.0 * dp * in.row(i);
    }
  });
}

Var Tape::mean(Var x) {
  const auto& v = node(x).value;
  Matrix out = v.colwise().mean();
  return push("mean", std::move(out), [x](Tape& t, Node& self) {
    auto& gx = t.grad_of(x.id);
    const double inv = 1.0 / static_cast<double>(gx.rows());
    gx.rowwise() += inv * self.grad.row(0);
  });
}

Var Tape::power_normalize(Var x) {
  const auto& v = node(x).value;
  const double s = v.squaredNorm() / static_cast<double>(v.rows());
  if (!(s > 0)) throw NumericError("autodiff: power_normalize of an all-zero batch");
  const double inv_root = 1.0 / std::sqrt(s);
  Matrix out = v * inv_root;
  return push("power_normalize", std::move(out), [x, s, inv_root](Tape& t, Node& self) {
    const auto& in = t.nodes_[x.id].value;
    const double n = static_cast<double>(in.rows());
    const double gx_dot = self.grad.cwiseProduct(in).sum();
    t.grad_of(x.id) += inv_root * self.grad - (gx_dot * inv_root / (n * s)) * in;
  });
}

Var Tape::gather_rows(Var x, std::span<const int> rows) {
  const auto& v = node(x).value;
  Matrix out(static_cast<Eigen::Index>(rows.size()), v.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= v.rows()) throw InvalidArgument("autodiff: gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = v.row(rows[i]);
  }
  std::vector<int> kept(rows.begin(), rows.end());
  return push("gather_rows", std::move(out), [x, kept = std::move(kept)](Tape& t, Node& self) {
    auto& gx = t.grad_of(x.id);
    for (std::size_t i = 0; i < kept.size(); ++i) gx.row(kept[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::column(Var x, Eigen::Index col) {
  const auto& v = node(x).value;
  if (col < 0 || col >= v.cols()) throw ShapeError("autodiff: column index out of range for " + shape_of(v));
  Matrix out = v.col(col);
  return push("column", std::move(out), [x, col](Tape& t, Node& self) { t.grad_of(x.id).col(col) += self.grad; });
}

Var Tape::add(Var a, Var b) {
  require_same_or_scalar("add", a, b);
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  Matrix out = is_scalar(vb) ? Matrix((va.array() + vb(0, 0)).matrix()) : Matrix(va + vb);
  return push("add", std::move(out), [a, b](Tape& t, Node& self) {
    t.grad_of(a.id) += self.grad;
    t.grad_of(b.id) += reduce_to(self.grad, t.nodes_[b.id].value);
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_or_scalar("sub", a, b);
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  Matrix out = is_scalar(vb) ? Matrix((va.array() - vb(0, 0)).matrix()) : Matrix(va - vb);
  return push("sub", std::move(out), [a, b](Tape& t, Node& self) {
    t.grad_of(a.id) += self.grad;
    t.grad_of(b.id) -= reduce_to(self.grad, t.nodes_[b.id].value);
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_or_scalar("mul", a, b);
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  Matrix out = is_scalar(vb) ? Matrix(va * vb(0, 0)) : Matrix(va.cwiseProduct(vb));
  return push("mul", std::move(out), [a, b](Tape& t, Node& self) {
    const auto& va = t.nodes_[a.id].value;
    const auto& vb = t.nodes_[b.id].value;
    if (is_scalar(vb) && !is_scalar(va)) {
      t.grad_of(a.id) += vb(0, 0) * self.grad;
      t.grad_of(b.id)(0, 0) += self.grad.cwiseProduct(va).sum();
    } else {
      t.grad_of(a.id) += self.grad.cwiseProduct(vb);
      t.grad_of(b.id) += self.grad.cwiseProduct(va);
    }
  });
}

Var Tape::div(Var a, Var b) {
  require_same_or_scalar("div", a, b);
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if ((vb.array() == 0.0).any()) throw NumericError("autodiff: division by zero");
  Matrix out = is_scalar(vb) ? Matrix(va / vb(0, 0)) : Matrix(va.cwiseQuotient(vb));
  return push("div", std::move(out), [a, b](Tape& t, Node& self) {
    const auto& vb = t.nodes_[b.id].value;
    const auto& va = t.nodes_[a.id].value;
    if (is_scalar(vb) && !is_scalar(va)) {
      const double d = vb(0, 0);
      t.grad_of(a.id) += self.grad / d;
      t.grad_of(b.id)(0, 0) -= self.grad.cwiseProduct(self.value).sum() / d;
    } else {
      t.grad_of(a.id) += self.grad.cwiseQuotient(vb);
      t.grad_of(b.id) -= self.grad.cwiseProduct(self.value).cwiseQuotient(vb);
    }
  });
}

Var Tape::add_constant(Var x, double c) {
  Matrix out = (node(x).value.array() + c).matrix();
  return push("add_constant", std::move(out), [x](Tape& t, Node& self) { t.grad_of(x.id) += self.grad; });
}

Var Tape::sqrt(Var x) {
  const auto& v = node(x).value;
  if ((v.array() < 0.0).any()) throw NumericError("autodiff: sqrt of a negative value");
  Matrix out = v.array().sqrt().matrix();
  return push("sqrt", std::move(out), [x](Tape& t, Node& self) {
    t.grad_of(x.id).array() += self.grad.array() * 0.5 / self.value.array();
  });
}

Var Tape::pow(Var x, double exponent) {
  Matrix out = node(x).value.array().pow(exponent).matrix();
  return push("pow", std::move(out), [x, exponent](Tape& t, Node& self) {
    t.grad_of(x.id).array() +=
        self.grad.array() * exponent * t.nodes_[x.id].value.array().pow(exponent - 1.0);
  });
}

Var Tape::db_to_linear(Var x) {
  Matrix out = (node(x).value.array() * (std::log(10.0) / 10.0)).exp().matrix();
  return push("db_to_linear", std::move(out), [x](Tape& t, Node& self) {
    t.grad_of(x.id).array() += self.grad.array() * self.value.array() * (std::log(10.0) / 10.0);
  });
}

Var Tape::clamp_min(Var x, double floor) {
  Matrix out = node(x).value.cwiseMax(floor);
  return push("clamp_min", std::move(out), [x, floor](Tape& t, Node& self) {
    t.grad_of(x.id) += (t.nodes_[x.id].value.array() > floor).select(self.grad, 0.0);
  });
}

Var Tape::stop_gradient(Var x) { return push("stop_gradient", node(x).value); }

const Matrix& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const auto& m = node(v).value;
  if (!is_scalar(m)) throw ShapeError("autodiff: expected a scalar, got " + shape_of(m));
  return m(0, 0);
}

const Matrix& Tape::grad(Var v) const {
  const auto& n = node(v);
  if (!differentiated_) throw InvalidArgument("autodiff: gradient requested before backward");
  static const Matrix empty;
  return n.grad.size() == 0 ? empty : n.grad;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw InvalidArgument("autodiff: backward called before any forward op");
  if (differentiated_) throw InvalidArgument("autodiff: backward already ran on this tape");
  const auto& root = node(loss);
  if (!is_scalar(root.value)) throw ShapeError("autodiff: backward needs a scalar loss, got " + shape_of(root.value));
  differentiated_ = true;
  if (params_ != nullptr) params_->zero_grad();
  grad_of(loss.id)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n);
    if (n.param != static_cast<std::size_t>(-1) && params_ != nullptr) (*params_)[n.param].grad.values() += n.grad;
  }
}

}  // namespace gcs::ad
