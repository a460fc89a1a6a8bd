#include <doctest.h>

#include <cmath>

#include "nsdn/mlp.hpp"
#include "nsdn/sphere.hpp"
#include "support.hpp"

using namespace nsdn;
using nsdn::testing::random_batch;
using nsdn::testing::random_model;

namespace {

// Plain loops, one sample at a time.
Eigen::VectorXd oracle_forward(const MlpModel& model, const Eigen::VectorXd& x) {
  std::vector<double> h(x.data(), x.data() + x.size());
  for (int k = 0; k < kLayerCount; ++k) {
    const auto& L = model.layer(k);
    std::vector<double> next(static_cast<std::size_t>(L.W.rows()));
    for (Eigen::Index i = 0; i < L.W.rows(); ++i) {
      double s = L.b[i];
      for (Eigen::Index j = 0; j < L.W.cols(); ++j) s += L.W(i, j) * h[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = (k < 2 && s < 0.0) ? 0.0 : s;
    }
    h = std::move(next);
  }
  return Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
}

}  // namespace

TEST_CASE("architecture") {
  const Eigen::Index expected = (45 * 45 + 45) + (400 * 45 + 400) + (66 * 400 + 66) + (200 * 66 + 200) + (66 * 200 + 66);
  CHECK(MlpModel::parameter_count() == expected);
  CHECK(expected == 73602);
  CHECK(kLayerDims == std::array<Eigen::Index, 5>{45, 400, 66, 200, 66});
  CHECK(kActivations[0] == Activation::relu);
  CHECK(kActivations[1] == Activation::relu);
  CHECK(kActivations[2] == Activation::identity);
  CHECK(kActivations[4] == Activation::identity);
  CHECK(activation_from_name(activation_name(Activation::relu)) == Activation::relu);
  CHECK_THROWS_AS(activation_from_name("tanh"), ValidationError);
}

TEST_CASE("forward pass") {
  const MlpModel zero = MlpModel::zeros();
  Rng rng = make_stream(30, 0);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd x(kInputDim);
  for (auto& v : x) v = n(rng);
  CHECK(forward_one(zero, x).isZero(0.0));
  CHECK_THROWS_AS(forward_one(zero, Eigen::VectorXd::Zero(44)), ValidationError);
  Eigen::VectorXd bad = x;
  bad[3] = std::nan("");
  CHECK_THROWS_AS(forward_one(zero, bad), NonFiniteError);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MlpModel model = random_model(seed);
    const auto batch = random_batch(seed, 4);
    const Eigen::MatrixXd out = forward(model, batch.x);
    for (Eigen::Index c = 0; c < 4; ++c) {
      const Eigen::VectorXd ref = oracle_forward(model, batch.x.col(c));
      CHECK((out.col(c) - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("initialization") {
  Rng a = make_stream(31, 0);
  Rng b = make_stream(31, 0);
  const MlpModel m1 = MlpModel::initialized(a);
  CHECK(m1 == MlpModel::initialized(b));
  for (int k = 0; k < kLayerCount; ++k) {
    const double fan_in = static_cast<double>(layer_input_dim(k));
    const double fan_out = static_cast<double>(kLayerDims[k]);
    const double limit = k < 2 ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    CHECK(m1.layer(k).W.cwiseAbs().maxCoeff() <= limit);
    CHECK(m1.layer(k).W.cwiseAbs().maxCoeff() > 0.9 * limit);
    CHECK(m1.layer(k).b.isZero(0.0));
  }
  CHECK(MlpModel::unflatten(m1.flatten()) == m1);
  // Flat layout: layer 0 W row-major, then its bias.
  const auto flat = m1.flatten();
  CHECK(flat[1] == m1.layer(0).W(0, 1));
  CHECK(flat[45] == m1.layer(0).W(1, 0));
  CHECK(flat[45 * 45] == m1.layer(0).b[0]);
}

TEST_CASE("loss values") {
  const MlpModel zero = MlpModel::zeros();
  TrainingBatch<double> batch;
  batch.x = Eigen::MatrixXd::Random(kInputDim, 1);
  batch.y_true = Eigen::MatrixXd::Zero(kOutputDim, 1);
  batch.y_true(0, 0) = 1.0;
  batch.xa = Eigen::MatrixXd::Random(kInputDim, 1);
  batch.xb = batch.xa;
  CHECK(loss(zero, batch, 1.0).total == 1.0);

  const MlpModel model = random_model(3);
  auto b = random_batch(3, 5);
  b.y_true = forward(model, b.x);
  b.xb = b.xa;
  CHECK(loss(model, b, 1.0).total == 0.0);

  const auto r = random_batch(4, 5);
  const auto l0 = loss(model, r, 0.0);
  const auto l1 = loss(model, r, 2.5);
  CHECK(l0.total == l0.supervised);
  CHECK(l1.total == l1.supervised + 2.5 * l1.consistency);
  CHECK(l1.supervised >= 0.0);
  CHECK(l1.consistency > 0.0);
  CHECK(l1.supervised == l0.supervised);

  TrainingBatch<double> mismatched = r;
  mismatched.xb = r.xb.leftCols(4);
  CHECK_THROWS_AS(loss(model, mismatched, 1.0), ValidationError);
  TrainingBatch<double> empty;
  empty.x = Eigen::MatrixXd(kInputDim, 0);
  empty.y_true = Eigen::MatrixXd(kOutputDim, 0);
  CHECK_THROWS_AS(loss(model, empty, 1.0), ValidationError);
}

TEST_CASE("gradient identities") {
  const MlpModel zero = MlpModel::zeros();
  TrainingBatch<double> batch;
  batch.x = Eigen::MatrixXd::Random(kInputDim, 3);
  batch.y_true = Eigen::MatrixXd::Zero(kOutputDim, 3);
  batch.xa = Eigen::MatrixXd::Random(kInputDim, 3);
  batch.xb = batch.xa;
  CHECK(gradients(zero, batch, 1.0).flatten().isZero(0.0));

  // With a perfect fit on the labeled channel only the consistency term
  // contributes, and it is linear in lambda.
  const MlpModel model = random_model(5);
  auto b = random_batch(5, 3);
  b.y_true = forward(model, b.x);
  const Eigen::VectorXd g1 = gradients(model, b, 1.5).flatten();
  const Eigen::VectorXd g2 = gradients(model, b, 3.0).flatten();
  CHECK(g1.cwiseAbs().maxCoeff() > 0.0);
  CHECK(g2 == 2.0 * g1);

  LossBreakdown<double> parts;
  gradients(model, random_batch(6, 2), 0.7, &parts);
  const auto direct = loss(model, random_batch(6, 2), 0.7);
  CHECK(parts.total == doctest::Approx(direct.total).epsilon(1e-14));
}

TEST_CASE("shared weights: identical inputs give identical channel outputs") {
  const MlpModel model = random_model(7);
  auto b = random_batch(7, 4);
  b.xa = b.x;
  b.xb = b.x;
  CHECK(loss(model, b, 1.0).consistency == 0.0);
  MlpModel moved = model;
  moved.layer(1).W(3, 4) += 0.5;
  CHECK(loss(moved, b, 1.0).consistency == 0.0);
  CHECK_FALSE(forward(moved, b.x) == forward(model, b.x));
}

TEST_CASE("finite-difference gradient check (small sample)") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const double lambda = std::array<double, 3>{0.0, 1.0, 10.0}[seed];
    const auto report = nsdn::testing::finite_difference_check(random_model(100 + seed), random_batch(100 + seed, 1),
                                                               lambda, 1e-5, 1e-8);
    CHECK(report.checked + report.skipped == static_cast<std::size_t>(MlpModel::parameter_count()));
    CAPTURE(report.worst_layer);
    CAPTURE(report.worst_analytic);
    CAPTURE(report.worst_numeric);
    CHECK(report.skipped < 20);
    CHECK(report.max_rel_error < 1e-5);
  }
}

TEST_CASE("rmsprop") {
  MlpModel model = random_model(8);
  const MlpModel before = model;
  RmsPropState<double> state;
  const RmsPropConfig cfg;
  rmsprop_step(model, MlpModel::zeros(), state, cfg);
  CHECK(model == before);

  // Scalar hand computation for the first step from v = 0.
  MlpModel one = MlpModel::zeros();
  MlpModel g = MlpModel::zeros();
  g.layer(2).W(1, 1) = 0.37;
  RmsPropState<double> s0;
  rmsprop_step(one, g, s0, cfg);
  const double expected = -1e-3 * 0.37 / (std::sqrt((1.0 - 0.9) * 0.37 * 0.37) + 1e-8);
  CHECK(one.layer(2).W(1, 1) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(one.layer(2).W(0, 0) == 0.0);

  // Element-by-element loop over several steps against the vectorized update.
  MlpModel vec = random_model(9);
  Eigen::VectorXd theta = vec.flatten();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  RmsPropState<double> st;
  for (int step = 0; step < 4; ++step) {
    const MlpModel grad = gradients(vec, random_batch(20 + step, 3), 1.0);
    const Eigen::VectorXd gf = grad.flatten();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      v[i] = 0.9 * v[i] + 0.1 * gf[i] * gf[i];
      theta[i] -= 1e-3 * gf[i] / (std::sqrt(v[i]) + 1e-8);
    }
    rmsprop_step(vec, grad, st, cfg);
    CHECK((vec.flatten() - theta).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(st.mean_square.flatten().minCoeff() >= 0.0);
  }
}
