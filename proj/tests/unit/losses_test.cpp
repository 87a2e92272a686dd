#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gdml/error.hpp"
#include "gdml/grad_check.hpp"
#include "gdml/losses.hpp"
#include "gdml/ops.hpp"
#include "test_util.hpp"

namespace {

using gdml::Shape;
using gdml::Tape;
using gdml::Tensor;
using gdml::TargetMode;
using gdml::Var;
using gdml::test::random_tensor;

// Fixtures shared with tests/oracles/loss_oracle.py.
Tensor oracle_image(int s, std::size_t n, std::size_t d) {
  Tensor t(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) t(i, j) = 0.3 * std::sin(1.3 * double(i) + 0.7 * double(j) + s);
  return t;
}

Tensor oracle_gene(std::size_t n, std::size_t d) {
  Tensor t(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) t(i, j) = 0.3 * std::cos(0.9 * double(i) - 0.4 * double(j));
  return t;
}

Tensor scaled_identity(std::size_t n, double v) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = v;
  return t;
}

TEST(InternalTarget, EqualRowsGiveUniformRows) {
  const Tensor x(Shape{5, 3}, 0.4);
  const Tensor t = gdml::internal_target(x, x, 0.07);
  for (double v : t.data) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(InternalTarget, IdentitySimilarityOracle) {
  const Tensor eye = scaled_identity(2, 1.0);
  // (I + I) / (2 * 1) = I: rows softmax([1, 0]).
  const Tensor t1 = gdml::internal_target(eye, eye, 1.0);
  EXPECT_NEAR(t1(0, 0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(t1(0, 1), 0.2689414213699951, 1e-15);
  // (I + I) / (2 * 0.5) = 2I: rows softmax([2, 0]).
  const Tensor t2 = gdml::internal_target(eye, eye, 0.5);
  EXPECT_NEAR(t2(1, 1), 0.8807970779778823, 1e-15);
  EXPECT_NEAR(t2(1, 0), 0.11920292202211755, 1e-15);
}

TEST(InternalTarget, RowsSumToOneAndSwapSymmetric) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    gdml::Rng rng(seed);
    const Tensor a = random_tensor(rng, {6, 4}), b = random_tensor(rng, {6, 4});
    const Tensor t = gdml::internal_target(a, b, 0.3);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (double v : t.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_TRUE(gdml::bitwise_equal(t, gdml::internal_target(b, a, 0.3)));
  }
  EXPECT_THROW(gdml::internal_target(Tensor(Shape{2, 3}), Tensor(Shape{3, 3}), 1.0), gdml::ShapeError);
}

TEST(InstanceLoss, UniformCaseIsTwoLnN) {
  Tape tape;
  const Var z = tape.constant(Tensor(Shape{2, 3}));
  const Tensor uniform(Shape{2, 2}, 0.5);
  const auto l = gdml::instance_loss(z, z, uniform);
  EXPECT_NEAR(l.image_to_gene.value().item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(l.gene_to_image.value().item(), std::log(2.0), 1e-15);
  const Var scales[] = {z, z, z};
  EXPECT_NEAR(gdml::multi_scale_instance_loss(scales, z, 0.07).total.value().item(), 2.0 * std::log(2.0), 1e-15);
}

TEST(InstanceLoss, DirectFormulaOracle) {
  Tape tape;
  const Var g = tape.constant(oracle_gene(4, 8));
  const Var scales[] = {tape.constant(oracle_image(0, 4, 8)), tape.constant(oracle_image(1, 4, 8)),
                        tape.constant(oracle_image(2, 4, 8))};
  const auto l = gdml::multi_scale_instance_loss(scales, g, 0.5);
  EXPECT_NEAR(l.per_scale[0].value().item(), 2.6665909186310812, 1e-13);
  EXPECT_NEAR(l.per_scale[1].value().item(), 2.68956251068485, 1e-13);
  EXPECT_NEAR(l.per_scale[2].value().item(), 2.8218297384278097, 1e-13);
  EXPECT_NEAR(l.total.value().item(), 2.7259943892479135, 1e-13);
}

TEST(InstanceLoss, PerfectAlignmentVanishes) {
  const double tau = 0.07;
  Tape tape;
  // Z = 20/tau on the diagonal and 0 elsewhere; the target is then the identity.
  const Var e = tape.constant(scaled_identity(4, std::sqrt(20.0 / tau)));
  EXPECT_LT(gdml::instance_loss(e, e, tau).total.value().item(), 1e-6);
}

TEST(InstanceLoss, PermutationAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    gdml::Rng rng(seed);
    const Tensor a = random_tensor(rng, {6, 4}), b = random_tensor(rng, {6, 4});
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    Tape tape;
    const double base = gdml::instance_loss(tape.constant(a), tape.constant(b), 0.2).total.value().item();
    const double permuted = gdml::instance_loss(tape.constant(gdml::take_rows(a, perm)),
                                                tape.constant(gdml::take_rows(b, perm)), 0.2)
                                .total.value()
                                .item();
    EXPECT_NEAR(base, permuted, 1e-10);

    // Appending a column of ones to both sides adds 1 to every logit and
    // leaves the target rows' softmax unchanged up to a row constant.
    Tensor a1(Shape{6, 5}, 1.0), b1(Shape{6, 5}, 1.0);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 4; ++j) a1(i, j) = a(i, j), b1(i, j) = b(i, j);
    const Tensor target = gdml::internal_target(a, b, 0.2);
    const double shifted =
        gdml::instance_loss(tape.constant(a1), tape.constant(b1), target).total.value().item();
    EXPECT_NEAR(base, shifted, 1e-10);
  }
}

TEST(InstanceLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    gdml::Rng rng(seed);
    const Tensor inputs[] = {random_tensor(rng, {4, 5}, 0.5), random_tensor(rng, {4, 5}, 0.5),
                             random_tensor(rng, {4, 5}, 0.5), random_tensor(rng, {4, 5}, 0.5)};
    const Tensor targets[] = {gdml::internal_target(inputs[0], inputs[3], 0.3),
                              gdml::internal_target(inputs[1], inputs[3], 0.3),
                              gdml::internal_target(inputs[2], inputs[3], 0.3)};
    const auto r = gdml::grad_check(
        [&](Tape&, std::span<const Var> v) {
          const Var scales[] = {v[0], v[1], v[2]};
          return gdml::multi_scale_instance_loss(scales, v[3], targets).total;
        },
        inputs);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

struct CrossFixture {
  Tensor image = oracle_image(0, 4, 8);
  Tensor gene = oracle_gene(4, 8);
  Tensor cg{Shape{3, 8}};
  Tensor ci{Shape{3, 8}};
  std::vector<std::size_t> a_img{0, 2, 1, 2};
  std::vector<std::size_t> a_gene{1, 1, 0, 2};
  CrossFixture() {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < 8; ++j) {
        cg(c, j) = 0.1 * std::cos(2.1 * double(c) + 0.5 * double(j));
        ci(c, j) = 0.1 * std::sin(1.7 * double(c) - 0.3 * double(j));
      }
    }
  }
  gdml::CrossLevelInputs inputs() const { return {cg, ci, a_img, a_gene}; }
};

TEST(CrossLevelLoss, DirectFormulaOracle) {
  const CrossFixture f;
  Tape tape;
  const Var i = tape.constant(f.image), g = tape.constant(f.gene);
  EXPECT_NEAR(gdml::cross_level_loss(i, g, f.inputs(), 0.07, TargetMode::hard).total.value().item(),
              2.3270170078886174, 1e-12);
  EXPECT_NEAR(gdml::cross_level_loss(i, g, f.inputs(), 0.07, TargetMode::soft).total.value().item(),
              1.3851042351677365, 1e-12);
}

TEST(CrossLevelLoss, ScalarCrossEntropyOracle) {
  // One instance, centroids +-e1, tau_ig = 1: logits [10, -10].
  Tape tape;
  const Tensor c = Tensor::matrix({{1.0, 0.0}, {-1.0, 0.0}});
  const std::vector<std::size_t> a{0};
  const Var x = tape.constant(Tensor::matrix({{10.0, 0.0}}));
  const auto l = gdml::cross_level_loss(x, x, {c, c, a, a}, 1.0, TargetMode::hard);
  EXPECT_NEAR(l.image_side.value().item(), 2.0611536203143808e-09, 1e-22);
  EXPECT_NEAR(l.total.value().item(), 2.0 * 2.0611536203143808e-09, 1e-22);
}

TEST(CrossLevelLoss, UniformLogitsGiveLnK) {
  Tape tape;
  const Tensor c(Shape{25, 4});
  const std::vector<std::size_t> a{3, 24, 0};
  const Var x = tape.constant(Tensor(Shape{3, 4}, 0.7));
  const auto l = gdml::cross_level_loss(x, x, {c, c, a, a}, 0.07, TargetMode::hard);
  EXPECT_NEAR(l.image_side.value().item(), std::log(25.0), 1e-12);
  EXPECT_NEAR(l.total.value().item(), 6.4377516497364011, 1e-12);
}

TEST(CrossLevelLoss, SoftModeIsMeanRowEntropy) {
  gdml::Rng rng(4);
  const Tensor x = random_tensor(rng, {5, 3}), c = random_tensor(rng, {4, 3});
  const std::vector<std::size_t> a(5, 0);
  Tape tape;
  const auto l = gdml::cross_level_loss(tape.constant(x), tape.constant(x), {c, c, a, a}, 0.5, TargetMode::soft);
  const Tensor p = gdml::softmax_rows(gdml::scale(gdml::matmul_nt(tape.constant(x), tape.constant(c)), 2.0)).value();
  double h = 0.0;
  for (double v : p.data) h -= v * std::log(v);
  EXPECT_NEAR(l.image_side.value().item(), h / 5.0, 1e-13);
}

TEST(CrossLevelLoss, HardLossVanishesWithMargin) {
  const double tau_ig = 0.07;
  Tape tape;
  const Tensor c = scaled_identity(3, 1.0);
  const std::vector<std::size_t> a{0, 1, 2};
  const Var x = tape.constant(scaled_identity(3, 20.0));
  EXPECT_LT(gdml::cross_level_loss(x, x, {c, c, a, a}, tau_ig, TargetMode::hard).total.value().item(), 1e-6);
}

TEST(CrossLevelLoss, InvalidAssignmentIsContractError) {
  Tape tape;
  const Tensor c(Shape{2, 2});
  const std::vector<std::size_t> good{0}, bad{2};
  const Var x = tape.constant(Tensor(Shape{1, 2}));
  EXPECT_THROW(gdml::cross_level_loss(x, x, {c, c, bad, good}, 0.07, TargetMode::hard), gdml::ContractError);
  EXPECT_THROW(gdml::cross_level_loss(x, x, {c, c, good, bad}, 0.07, TargetMode::soft), gdml::ContractError);
}

TEST(CrossLevelLoss, HardGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    gdml::Rng rng(seed);
    const Tensor cg = random_tensor(rng, {3, 4}, 0.3), ci = random_tensor(rng, {3, 4}, 0.3);
    const std::vector<std::size_t> ai{0, 2, 1, 1}, ag{2, 2, 0, 1};
    const Tensor inputs[] = {random_tensor(rng, {4, 4}, 0.1), random_tensor(rng, {4, 4}, 0.1)};
    const auto r = gdml::grad_check(
        [&](Tape&, std::span<const Var> v) {
          return gdml::cross_level_loss(v[0], v[1], {cg, ci, ai, ag}, 0.07, TargetMode::hard).total;
        },
        inputs);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

// Soft targets are a detached function of the inputs, so the checked graph
// is the cross-entropy against frozen row-stochastic targets.
TEST(CrossLevelLoss, SoftTargetGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    gdml::Rng rng(seed);
    const Tensor cg = random_tensor(rng, {3, 4}, 0.3), ci = random_tensor(rng, {3, 4}, 0.3);
    Tape scratch;
    const Tensor ti = gdml::softmax_rows(scratch.constant(random_tensor(rng, {4, 3}))).value();
    const Tensor tg = gdml::softmax_rows(scratch.constant(random_tensor(rng, {4, 3}))).value();
    const Tensor inputs[] = {random_tensor(rng, {4, 4}, 0.1), random_tensor(rng, {4, 4}, 0.1)};
    const auto r = gdml::grad_check(
        [&](Tape&, std::span<const Var> v) {
          return gdml::cross_level_loss_with_targets(v[0], v[1], cg, ci, ti, tg, 0.07).total;
        },
        inputs);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(CrossLevelLoss, SelfSoftTargetsCarryNoGradient) {
  gdml::Rng rng(3);
  const Tensor cg = random_tensor(rng, {3, 4}), ci = random_tensor(rng, {3, 4});
  const std::vector<std::size_t> a{0, 1, 2, 0};
  Tape tape;
  const Var i = tape.variable(random_tensor(rng, {4, 4})), g = tape.variable(random_tensor(rng, {4, 4}));
  tape.backward(gdml::cross_level_loss(i, g, {cg, ci, a, a}, 0.07, TargetMode::soft).total);
  for (double v : tape.grad(i).data) EXPECT_LE(std::abs(v), 1e-12);
  for (double v : tape.grad(g).data) EXPECT_LE(std::abs(v), 1e-12);
}

TEST(PredictionLoss, HandOracles) {
  Tape tape;
  const Var g = tape.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
  EXPECT_EQ(gdml::prediction_loss(g, g).value().item(), 0.0);
  EXPECT_EQ(gdml::prediction_loss(tape.constant(Tensor::matrix({{1, 1}})), tape.constant(Tensor::matrix({{0, 0}})))
                .value()
                .item(),
            2.0);
  EXPECT_EQ(gdml::prediction_loss(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), tape.constant(Tensor(Shape{2, 2})))
                .value()
                .item(),
            1.0);
  EXPECT_THROW(gdml::prediction_loss(g, tape.constant(Tensor(Shape{2, 3}))), gdml::ShapeError);
}

TEST(TotalLoss, CompositionIsExact) {
  Tape tape;
  const Var m = tape.constant(Tensor::scalar(0.5)), c = tape.constant(Tensor::scalar(0.2)),
            p = tape.constant(Tensor::scalar(0.3));
  EXPECT_NEAR(gdml::total_loss(m, c, p, 0.8).breakdown.total, 0.96, 1e-15);
  EXPECT_EQ(gdml::total_loss(m, c, p, 0.0).breakdown.total, 0.5 + 0.3);
  EXPECT_EQ(gdml::total_loss(m, c, p, 1.0).breakdown.total, 0.5 + 0.2 + 0.3);
  EXPECT_EQ(gdml::total_loss(std::nullopt, std::nullopt, p, 0.8).breakdown.total, 0.3);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    gdml::Rng rng(seed);
    const double a = rng.uniform() * 5, b = rng.uniform() * 5, d = rng.uniform() * 5, lambda = rng.uniform();
    const auto t = gdml::total_loss(tape.constant(Tensor::scalar(a)), tape.constant(Tensor::scalar(b)),
                                    tape.constant(Tensor::scalar(d)), lambda);
    EXPECT_EQ(t.breakdown.total, a + lambda * b + d);
    EXPECT_EQ(t.total.value().item(), t.breakdown.total);
  }
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  gdml::Rng rng(12);
  const Tensor cg = random_tensor(rng, {2, 4}, 0.3), ci = random_tensor(rng, {2, 4}, 0.3);
  const std::vector<std::size_t> ai{0, 1, 1}, ag{1, 0, 0};
  const Tensor target = random_tensor(rng, {3, 2});
  const Tensor w = random_tensor(rng, {4, 2}, 0.5);
  const Tensor inputs[] = {random_tensor(rng, {3, 4}, 0.3), random_tensor(rng, {3, 4}, 0.3),
                           random_tensor(rng, {3, 4}, 0.3), random_tensor(rng, {3, 4}, 0.3)};
  const Tensor targets[] = {gdml::internal_target(inputs[0], inputs[3], 0.2),
                            gdml::internal_target(inputs[1], inputs[3], 0.2),
                            gdml::internal_target(inputs[2], inputs[3], 0.2)};
  const auto r = gdml::grad_check(
      [&](Tape& t, std::span<const Var> v) {
        const Var scales[] = {v[0], v[1], v[2]};
        const Var fused = gdml::scale(v[0] + v[1] + v[2], 1.0 / 3.0);
        const auto multi = gdml::multi_scale_instance_loss(scales, v[3], targets);
        const auto cross = gdml::cross_level_loss(fused, v[3], {cg, ci, ai, ag}, 0.07, TargetMode::hard);
        const Var pred = gdml::prediction_loss(gdml::matmul(fused, t.constant(w)), t.constant(target));
        return gdml::total_loss(multi.total, cross.total, pred, 0.8).total;
      },
      inputs);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Temperatures, Validate) {
  gdml::Temperatures t;
  EXPECT_NO_THROW(t.validate());
  t.tau = 0.0;
  EXPECT_THROW(t.validate(), gdml::ConfigError);
  t = {};
  t.lambda = -1.0;
  EXPECT_THROW(t.validate(), gdml::ConfigError);
}

}  // namespace
