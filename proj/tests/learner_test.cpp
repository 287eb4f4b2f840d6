#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "agefl/learner.hpp"
#include "oracles.hpp"

namespace agefl {
namespace {

Dataset random_batch(Rng& rng, std::size_t n, std::size_t dim, std::size_t classes) {
  Dataset b;
  b.input_dim = dim;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.normal();
    b.push_back(x, static_cast<int>(rng.uniform_index(classes)));
  }
  return b;
}

TEST(ModelSpec, TableOneParameterCount) {
  EXPECT_EQ((ModelSpec{{784, 50, 10}}.parameter_count()), 39760u);
  EXPECT_EQ((ModelSpec{{20, 32, 10}}.parameter_count()), 20u * 32 + 32 + 32 * 10 + 10);
}

TEST(ModelSpec, FlatRoundTripIsIdentity) {
  Rng rng(1);
  const ModelSpec spec{{5, 4, 3, 2}};
  GradientVector theta(spec.parameter_count());
  for (auto& v : theta.values()) v = rng.normal();
  const auto blocks = unflatten(spec, theta);
  EXPECT_EQ(flatten(spec, blocks), theta);
  // Layer-major, weights row-major then bias.
  EXPECT_EQ(blocks[0].weights[0][1], theta[1]);
  EXPECT_EQ(blocks[0].weights[1][0], theta[5]);
  EXPECT_EQ(blocks[0].bias[0], theta[20]);
  EXPECT_EQ(blocks[1].weights[0][0], theta[24]);
}

TEST(LossAndGradient, ZeroWeightsGiveUniformLoss) {
  const ModelSpec spec{{4, 10}};
  const ModelState m{spec, GradientVector(spec.parameter_count())};
  Rng rng(2);
  const auto b = random_batch(rng, 16, 4, 10);
  EXPECT_NEAR(loss_and_gradient(m, b).loss, std::log(10.0), 1e-12);
  const auto ev = evaluate(m, b);
  EXPECT_NEAR(ev.mean_loss, std::log(10.0), 1e-12);
}

TEST(LossAndGradient, MatchesCentralDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelSpec spec{{6, 5, 3}};
    auto m = init_model(spec, rng);
    for (auto& v : m.theta.values()) v += 0.05 * rng.normal();
    const auto b = random_batch(rng, 8, 6, 3);
    const auto lg = loss_and_gradient(m, b);
    EXPECT_NEAR(lg.loss, oracle::naive_loss(spec, m.theta, b), 1e-12);
    for (Index i = 0; i < m.theta.dim(); ++i)
      EXPECT_LE(oracle::relative_error(lg.gradient[i], oracle::central_difference(spec, m.theta, b, i)), 1e-4)
          << "coordinate " << i;
  }
}

TEST(LossAndGradient, DuplicatedBatchAndPermutationInvariance) {
  Rng rng(4);
  const ModelSpec spec{{3, 4, 2}};
  const auto m = init_model(spec, rng);
  const auto b = random_batch(rng, 6, 3, 2);
  Dataset twice = b;
  for (std::size_t s = 0; s < b.size(); ++s) twice.push_back(b.row(s), b.labels[s]);
  Dataset reversed;
  reversed.input_dim = 3;
  for (std::size_t s = b.size(); s-- > 0;) reversed.push_back(b.row(s), b.labels[s]);
  const auto base = loss_and_gradient(m, b);
  for (const auto* other : {&twice, &reversed}) {
    const auto lg = loss_and_gradient(m, *other);
    EXPECT_NEAR(lg.loss, base.loss, 1e-14);
    for (Index i = 0; i < base.gradient.dim(); ++i) EXPECT_NEAR(lg.gradient[i], base.gradient[i], 1e-14);
  }
}

TEST(LossAndGradient, StructuralErrors) {
  Rng rng(5);
  const ModelSpec spec{{3, 2}};
  const auto m = init_model(spec, rng);
  EXPECT_THROW(loss_and_gradient(m, random_batch(rng, 2, 4, 2)), StructuralError);
  auto bad_label = random_batch(rng, 2, 3, 2);
  bad_label.labels[0] = 2;
  EXPECT_THROW(loss_and_gradient(m, bad_label), StructuralError);
}

TEST(LossAndGradient, NonFiniteActivationsAreNumericalErrors) {
  const ModelSpec spec{{1, 2}};
  ModelState m{spec, GradientVector{std::numeric_limits<double>::infinity(), 0, 0, 0}};
  Dataset b;
  b.input_dim = 1;
  b.push_back(std::vector<double>{1.0}, 0);
  EXPECT_THROW(loss_and_gradient(m, b), NumericalError);
}

TEST(ApplyUpdate, SgdStep) {
  ModelState m{ModelSpec{{1, 1}}, GradientVector{1, 1}};
  OptimizerState opt({OptimizerKind::Sgd, 0.1}, 2);
  apply_update(m, opt, GradientVector{1, -1});
  EXPECT_DOUBLE_EQ(m.theta[0], 0.9);
  EXPECT_DOUBLE_EQ(m.theta[1], 1.1);
  EXPECT_EQ(opt.step, 1u);
  apply_update(m, opt, GradientVector{0, 0});
  EXPECT_DOUBLE_EQ(m.theta[0], 0.9);
  EXPECT_THROW(apply_update(m, opt, GradientVector{1}), StructuralError);
  EXPECT_THROW(apply_update(m, opt, GradientVector{NAN, 0}), NumericalError);
}

TEST(ApplyUpdate, AdamFirstStepMovesByLearningRate) {
  for (double c : {1e-3, 0.5, 7.0}) {
    ModelState m{ModelSpec{{1, 1}}, GradientVector{2, -3}};
    OptimizerState opt({OptimizerKind::Adam, 1e-4}, 2);
    apply_update(m, opt, GradientVector{c, c});
    EXPECT_NEAR(m.theta[0], 2 - 1e-4, 1e-4 * 1e-4);
    EXPECT_NEAR(m.theta[1], -3 - 1e-4, 1e-4 * 1e-4);
  }
}

TEST(Evaluate, AccuracyAndErrors) {
  const ModelSpec spec{{2, 10}};
  const ModelState zero{spec, GradientVector(spec.parameter_count())};
  Dataset balanced;
  balanced.input_dim = 2;
  for (int c = 0; c < 10; ++c)
    for (int rep = 0; rep < 3; ++rep) balanced.push_back(std::vector<double>{0.3, 0.1}, c);
  // Uniform logits: argmax picks class 0, exactly chance on balanced labels.
  EXPECT_DOUBLE_EQ(evaluate(zero, balanced).accuracy, 0.1);

  ModelState biased = zero;
  biased.theta[spec.weight_offset(0) + 20 + 7] = 5.0;  // bias of class 7
  Dataset one;
  one.input_dim = 2;
  one.push_back(std::vector<double>{0.0, 0.0}, 7);
  EXPECT_DOUBLE_EQ(evaluate(biased, one).accuracy, 1.0);
  EXPECT_THROW(evaluate(zero, Dataset{2, {}, {}}), ParameterError);
}

TEST(Training, SeparableTwoClassReachesFullAccuracy) {
  Rng rng(6);
  Dataset d;
  d.input_dim = 2;
  for (int s = 0; s < 100; ++s) {
    const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
    if (std::abs(x + y) < 0.1) continue;
    d.push_back(std::vector<double>{x, y}, x + y > 0 ? 1 : 0);
  }
  auto m = init_model(ModelSpec{{2, 8, 2}}, rng);
  OptimizerState opt({OptimizerKind::Adam, 0.05}, m.theta.dim());
  for (int step = 0; step < 500; ++step) apply_update(m, opt, loss_and_gradient(m, d).gradient);
  EXPECT_EQ(evaluate(m, d).accuracy, 1.0);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  Rng rng(7);
  const auto m = init_model(ModelSpec{{3, 4, 2}}, rng);
  std::stringstream ss;
  write_checkpoint(ss, m);
  const auto bytes = ss.str();
  EXPECT_EQ(bytes.size(), 8 + 4 + 3 * 4 + 8 + 8 * m.theta.dim());
  EXPECT_EQ(read_checkpoint(ss), m);
  std::stringstream bad_magic("XXXXXXXX");
  EXPECT_THROW(read_checkpoint(bad_magic), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
}

}  // namespace
}  // namespace agefl
