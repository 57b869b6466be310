#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "gcs/adam.hpp"
#include "gcs/autodiff.hpp"
#include "gcs/errors.hpp"

using namespace gcs;
using namespace gcs::ad;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

using Builder = std::function<Var(Tape&)>;

double evaluate(ParameterSet& ps, const Builder& f) {
  Tape t(&ps);
  return t.scalar(f(t));
}

// Largest relative error between tape gradients and a fourth-order central
// difference over all parameter entries.
double max_gradient_error(ParameterSet& ps, const Builder& f, double h = 1e-4) {
  {
    Tape t(&ps);
    t.backward(f(t));
  }
  double worst = 0;
  for (auto& p : ps) {
    Matrix& w = p.value.values();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      auto at = [&](double d) {
        w.data()[i] = orig + d;
        const double v = evaluate(ps, f);
        w.data()[i] = orig;
        return v;
      };
      const double fd = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      const double an = p.grad.values().data()[i];
      const double e = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-5});
      worst = std::max(worst, e);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("square of a scalar parameter") {
  ParameterSet ps;
  const auto id = ps.add("theta", Tensor::scalar(3.0));
  Tape t(&ps);
  t.backward(t.square(t.parameter(id)));
  CHECK(ps[id].grad.values()(0, 0) == 6.0);
}

TEST_CASE("relu backward") {
  ParameterSet ps;
  const auto id = ps.add("x", Tensor(Matrix{{1.0, -1.0}}));
  Tape t(&ps);
  const Var r = t.relu(t.parameter(id));
  t.backward(t.matmul(t.scale(r, 2.0), t.constant(Matrix::Ones(2, 1))));
  CHECK(ps[id].grad.values()(0, 0) == 2.0);
  CHECK(ps[id].grad.values()(0, 1) == 0.0);
}

TEST_CASE("fused softmax cross-entropy gradient is softmax minus one-hot") {
  std::mt19937_64 rng(1);
  ParameterSet ps;
  const Matrix logits = random_matrix(5, 4, rng, -3, 3);
  const auto id = ps.add("logits", Tensor(logits));
  const std::vector<int> labels{0, 3, 1, 2, 3};
  Tape t(&ps);
  t.backward(t.softmax_cross_entropy(t.parameter(id), labels));
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double z = logits.row(i).array().exp().sum();
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double expected = (std::exp(logits(i, j)) / z - (labels[i] == j ? 1.0 : 0.0)) / 5.0;
      CHECK(ps[id].grad.values()(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax cross-entropy stays finite for large logits") {
  ParameterSet ps;
  const auto id = ps.add("logits", Tensor(Matrix{{1e3, -1e3, 0.0}, {-1e3, -1e3, 1e3}}));
  Tape t(&ps);
  const std::vector<int> labels{1, 0};
  const Var loss = t.softmax_cross_entropy(t.parameter(id), labels);
  CHECK(std::isfinite(t.scalar(loss)));
  CHECK(t.scalar(loss) == doctest::Approx(2000.0));
  t.backward(loss);
  CHECK(ps[id].grad.values().allFinite());
}

TEST_CASE("power normalize example and jacobian") {
  {
    Tape t;
    const Var x = t.power_normalize(t.constant(Matrix{{2.0, 0.0}, {-2.0, 0.0}}));
    CHECK(t.value(x)(0, 0) == doctest::Approx(1.0));
    CHECK(t.value(x)(1, 0) == doctest::Approx(-1.0));
  }
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterSet ps;
    const auto id = ps.add("x", Tensor(random_matrix(6, 2, rng)));
    const Matrix w = random_matrix(2, 1, rng);
    const Builder f = [&](Tape& t) { return t.mean(t.matmul(t.square(t.power_normalize(t.parameter(id))), t.constant(w))); };
    // A weighted readout of the output probes every Jacobian entry direction.
    const Matrix probe = random_matrix(6, 2, rng);
    const Builder g = [&](Tape& t) {
      const Var y = t.power_normalize(t.parameter(id));
      return t.mean(t.matmul(t.mul(y, t.constant(probe)), t.constant(Matrix::Ones(2, 1))));
    };
    CHECK(max_gradient_error(ps, f) < 1e-7);
    CHECK(max_gradient_error(ps, g) < 1e-7);
  }
}

TEST_CASE("property: every primitive's backward rule matches finite differences") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    // Keep the ReLU inputs away from the kink so the differences see a smooth function.
    Matrix ma, mb, mbias;
    do {
      ma = random_matrix(4, 3, rng);
      mb = random_matrix(3, 2, rng);
      mbias = random_matrix(1, 2, rng);
    } while (((ma * mb).rowwise() + mbias.row(0)).cwiseAbs().minCoeff() < 0.01);
    ParameterSet ps;
    const auto a = ps.add("a", Tensor(ma));
    const auto b = ps.add("b", Tensor(mb));
    const auto bias = ps.add("bias", Tensor(mbias));
    const auto s = ps.add("s", Tensor(random_matrix(1, 1, rng, 0.5, 2.0)));
    const auto pos = ps.add("pos", Tensor(random_matrix(4, 2, rng, 0.5, 2.0)));
    const std::vector<int> rows{3, 0, 0, 2, 1};
    const std::vector<int> labels{1, 0, 0, 1, 1};

    const Builder f = [&](Tape& t) {
      Var h = t.add_bias(t.matmul(t.parameter(a), t.parameter(b)), t.parameter(bias));
      h = t.relu(h);
      h = t.add(h, t.mul(t.parameter(pos), t.parameter(s)));
      h = t.sub(h, t.div(t.parameter(pos), t.add_constant(t.parameter(s), 1.0)));
      h = t.add(h, t.sqrt(t.parameter(pos)));
      h = t.add(h, t.pow(t.parameter(pos), 1.7));
      h = t.add(h, t.scale(t.db_to_linear(t.parameter(s)), 0.1));
      const Var mom = t.mean(t.complex_modulus_powers(t.power_normalize(h)));
      const Var g = t.gather_rows(h, rows);
      const Var ce = t.softmax_cross_entropy(g, labels);
      const Var m4 = t.div(t.column(mom, 1), t.pow(t.column(mom, 0), 2.0));
      const Var m6 = t.div(t.column(mom, 2), t.pow(t.column(mom, 0), 3.0));
      return t.add(ce, t.add(t.scale(m4, 0.3), t.scale(m6, 0.05)));
    };
    CHECK(max_gradient_error(ps, f) < 1e-6);
  }
}

TEST_CASE("clamp and stop gradient block gradient flow") {
  ParameterSet ps;
  const auto x = ps.add("x", Tensor(Matrix{{0.5, 2.0}}));
  Tape t(&ps);
  const Var c = t.clamp_min(t.parameter(x), 1.0);
  const Var stopped = t.stop_gradient(t.parameter(x));
  t.backward(t.mean(t.matmul(t.add(c, t.scale(stopped, 5.0)), t.constant(Matrix::Ones(2, 1)))));
  CHECK(ps[x].grad.values()(0, 0) == 0.0);
  CHECK(ps[x].grad.values()(0, 1) == 1.0);
}

TEST_CASE("unused parameters get exactly zero gradient and fan-out accumulates") {
  ParameterSet ps;
  const auto used = ps.add("used", Tensor::scalar(2.0));
  const auto unused = ps.add("unused", Tensor::scalar(5.0));
  Tape t(&ps);
  const Var u = t.parameter(used);
  t.backward(t.add(t.mul(u, u), u));
  CHECK(ps[used].grad.values()(0, 0) == 5.0);
  CHECK(ps[unused].grad.values()(0, 0) == 0.0);
}

TEST_CASE("tape errors") {
  Tape empty;
  CHECK_THROWS(empty.backward(Var{0}));

  Tape t;
  const Var a = t.constant(Matrix::Ones(2, 3));
  const Var b = t.constant(Matrix::Ones(2, 3));
  try {
    t.matmul(a, b);
    FAIL("expected shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(t.backward(a), Error);  // not scalar
  CHECK_THROWS(t.grad(a));                 // before backward

  Tape n;
  CHECK_THROWS_AS(n.sqrt(n.constant(-1.0)), NumericError);
  CHECK_THROWS_AS(n.div(n.constant(1.0), n.constant(0.0)), NumericError);

  Tape twice;
  const Var s = twice.square(twice.constant(2.0));
  twice.backward(s);
  CHECK_THROWS(twice.backward(s));
}

TEST_CASE("adam: zero gradient leaves parameters and counts the step") {
  ParameterSet ps;
  const auto id = ps.add("w", Tensor(Matrix{{1.0, -2.0}}));
  ps[id].grad = Tensor(Matrix::Zero(1, 2));
  Adam adam;
  adam.step(ps);
  CHECK(ps[id].value.values()(0, 0) == 1.0);
  CHECK(ps[id].value.values()(0, 1) == -2.0);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: first step moves by learning rate against the gradient sign") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    ParameterSet ps;
    const Matrix w0 = random_matrix(3, 3, rng);
    const auto id = ps.add("w", Tensor(w0));
    Matrix g = random_matrix(3, 3, rng, -10, 10);
    ps[id].grad = Tensor(g);
    const double lr = 1e-3;
    Adam adam({lr});
    adam.step(ps);
    for (Eigen::Index i = 0; i < 9; ++i) {
      const double delta = ps[id].value.values().data()[i] - w0.data()[i];
      const double sign = g.data()[i] > 0 ? 1.0 : -1.0;
      CHECK(std::abs(delta + lr * sign) <= lr * 1e-6);
    }
  }
}

TEST_CASE("adam: three steps on theta^2/2 match the unrolled recursion") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double theta = 1, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    const double g = theta;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }

  ParameterSet ps;
  const auto id = ps.add("theta", Tensor::scalar(1.0));
  Adam adam({lr});
  for (int t = 0; t < 3; ++t) {
    Tape tape(&ps);
    tape.backward(tape.scale(tape.square(tape.parameter(id)), 0.5));
    adam.step(ps);
  }
  CHECK(std::abs(ps[id].value.values()(0, 0) - theta) < 1e-12);
  CHECK(adam.step_count() == 3);
}

TEST_CASE("adam: per-parameter learning rate and shape checks") {
  ParameterSet ps;
  const auto a = ps.add("a", Tensor::scalar(0.0));
  const auto b = ps.add("b", Tensor::scalar(0.0));
  ps[a].grad = Tensor::scalar(1.0);
  ps[b].grad = Tensor::scalar(1.0);
  Adam adam({1e-3});
  adam.set_learning_rate(b, 0.5);
  adam.step(ps);
  CHECK(ps[a].value.values()(0, 0) == doctest::Approx(-1e-3));
  CHECK(ps[b].value.values()(0, 0) == doctest::Approx(-0.5));
  ps[a].grad = Tensor(Matrix::Zero(2, 2));
  CHECK_THROWS_AS(adam.step(ps), ShapeError);
}

TEST_CASE("glorot initialisation bounds and zero biases") {
  std::mt19937_64 rng(3);
  ParameterSet ps;
  const auto w = ps.add_glorot("w", 64, 32, rng);
  const auto b = ps.add_zeros("b", 1, 32);
  const double limit = std::sqrt(6.0 / 96.0);
  CHECK(ps[w].value.values().cwiseAbs().maxCoeff() <= limit);
  CHECK(ps[w].value.values().cwiseAbs().maxCoeff() > 0.9 * limit);
  CHECK(ps[b].value.values().isZero(0));
  CHECK(ps.scalar_count() == 64 * 32 + 32);
}
