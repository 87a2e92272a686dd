#include <gtest/gtest.h>

#include <cmath>

#include "gdml/error.hpp"
#include "gdml/grad_check.hpp"
#include "gdml/ops.hpp"
#include "test_util.hpp"

namespace {

using gdml::Mode;
using gdml::Shape;
using gdml::Tape;
using gdml::Tensor;
using gdml::Var;
using gdml::test::random_tensor;

TEST(Matmul, IdentityAndHandOracle) {
  Tape t;
  Tensor m = Tensor::matrix({{1.5, -2.0}, {0.25, 4.0}});
  Var id = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_TRUE(gdml::bitwise_equal(gdml::matmul(id, t.constant(m)).value(), m));

  Var c = gdml::matmul(t.constant(Tensor::matrix({{1, 2}, {3, 4}})), t.constant(Tensor::matrix({{1}, {1}})));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c.value()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(c.value()(1, 0), 7.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tape t;
  try {
    gdml::matmul(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const gdml::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] x [2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  gdml::Rng rng(5);
  const Tensor a = random_tensor(rng, {3, 4});
  const Tensor b = random_tensor(rng, {4, 2});
  const double err = gdml::grad_check(
      [&](Tape& t, Var x) { return gdml::sum(gdml::matmul(x, t.constant(b))); }, a, 1e-5);
  EXPECT_LE(err, 1e-6);
}

TEST(Softmax, ScalarOracles) {
  Tape t;
  Var s = gdml::softmax_rows(t.constant(Tensor::matrix({{0, 0}, {1, 0}, {1000, 0}})));
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.value()(0, 1), 0.5);
  // 1 / (1 + e^-1)
  EXPECT_NEAR(s.value()(1, 0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(s.value()(1, 1), 0.2689414213699951, 1e-15);
  EXPECT_EQ(s.value()(2, 0), 1.0);
  EXPECT_EQ(s.value()(2, 1), 0.0);
  EXPECT_TRUE(s.value().all_finite());
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    gdml::Rng rng(seed);
    Tensor x = random_tensor(rng, {4, 7}, 5.0);
    Tensor shifted = x;
    for (std::size_t i = 0; i < 4; ++i) {
      const double c = rng.uniform(-50, 50);
      for (std::size_t j = 0; j < 7; ++j) shifted(i, j) += c;
    }
    Tape t;
    const Tensor& p = gdml::softmax_rows(t.constant(x)).value();
    const Tensor& q = gdml::softmax_rows(t.constant(shifted)).value();
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (double v : p.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_LE(gdml::max_abs_diff(p, q), 1e-12);
  }
}

TEST(Softmax, NanPropagates) {
  Tape t;
  Var s = gdml::softmax_rows(t.constant(Tensor::matrix({{std::nan(""), 0.0}})));
  EXPECT_TRUE(std::isnan(s.value().data[0]));
}

TEST(Elementwise, GeluDropoutNormalize) {
  Tape t(Mode::train, 1);
  EXPECT_EQ(gdml::gelu(t.constant(Tensor::scalar(0.0))).value().item(), 0.0);
  // Reference value of the tanh form at x = 1.
  EXPECT_NEAR(gdml::gelu(t.constant(Tensor::scalar(1.0))).value().item(), 0.8411919906082768, 1e-15);

  Var x = t.constant(Tensor::matrix({{1, 2, 3}}));
  EXPECT_EQ(gdml::dropout(x, 0.0, t.rng()).id(), x.id());

  Var n = gdml::l2_normalize_rows(t.constant(Tensor::matrix({{3, 4}})));
  EXPECT_DOUBLE_EQ(n.value()(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n.value()(0, 1), 0.8);

  EXPECT_THROW(gdml::l2_normalize_rows(t.constant(Tensor::matrix({{0, 0}}))), gdml::NumericError);
  Var guarded = gdml::l2_normalize_rows(t.constant(Tensor::matrix({{0, 0}})), gdml::ZeroRowPolicy::epsilon_guard);
  EXPECT_EQ(guarded.value()(0, 0), 0.0);
  EXPECT_THROW(gdml::dropout(x, 1.0, t.rng()), gdml::ContractError);
}

TEST(Dropout, EvalModeIsExactIdentityAndTrainScalesSurvivors) {
  gdml::Rng rng(2);
  const Tensor x = random_tensor(rng, {20, 10});
  Tape eval(Mode::eval, 3);
  Var xe = eval.constant(x);
  Var ye = gdml::dropout(xe, 0.5, eval.rng());
  EXPECT_TRUE(gdml::bitwise_equal(ye.value(), x));

  Tape train(Mode::train, 3);
  Var yt = gdml::dropout(train.constant(x), 0.25, train.rng());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (yt.value().data[i] == 0.0) {
      ++dropped;
    } else {
      EXPECT_NEAR(yt.value().data[i], x.data[i] / 0.75, 1e-15);
    }
  }
  EXPECT_GT(dropped, 20u);
  EXPECT_LT(dropped, 80u);
}

TEST(Backward, HandOracles) {
  Tape t;
  Var w = t.parameter("w", Tensor(Shape{3}, std::vector<double>{0.3, -1.0, 2.0}));
  auto g = t.backward(gdml::sum(w));
  EXPECT_EQ(g.at("w").data, (std::vector<double>{1, 1, 1}));

  Tape t2;
  Var v = t2.parameter("v", Tensor(Shape{2}, std::vector<double>{1, 2}));
  Var unused = t2.parameter("unused", Tensor(Shape{2, 2}, 5.0));
  (void)unused;
  auto g2 = t2.backward(gdml::sum(v * v));
  EXPECT_EQ(g2.at("v").data, (std::vector<double>{2, 4}));
  EXPECT_EQ(g2.at("unused").data, (std::vector<double>(4, 0.0)));
}

TEST(Backward, NonScalarLossIsContractViolation) {
  Tape t;
  Var w = t.parameter("w", Tensor(Shape{2, 2}, 1.0));
  EXPECT_THROW(t.backward(w), gdml::ContractError);
}

TEST(GradCheck, LinearIsExact) {
  gdml::Rng rng(9);
  const double err = gdml::grad_check([](Tape&, Var x) { return gdml::sum(x); }, random_tensor(rng, {3, 5}), 1e-5);
  EXPECT_LE(err, 1e-10);
}

// Every op's backward against central differences on random inputs.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  gdml::Rng rng(static_cast<std::uint64_t>(GetParam()) + 100);
  const Tensor a = random_tensor(rng, {3, 4});
  const Tensor b = random_tensor(rng, {3, 4});
  const Tensor w = random_tensor(rng, {4, 5});
  const Tensor bias = random_tensor(rng, {4});
  const Tensor weights = random_tensor(rng, {3, 4});
  Tensor pos = a;
  for (double& v : pos.data) v = std::abs(v) + 0.5;

  // Weighted sums keep each check sensitive to every output coordinate.
  auto weighted = [&](Tape& t, Var y) {
    if (y.shape() == weights.shape) return gdml::sum(y * t.constant(weights));
    return gdml::sum(y * y);
  };
  const std::vector<std::pair<const char*, gdml::MultiScalarFn>> cases = {
      {"add", [&](Tape& t, auto v) { return weighted(t, v[0] + v[1]); }},
      {"sub", [&](Tape& t, auto v) { return weighted(t, v[0] - v[1]); }},
      {"mul", [&](Tape& t, auto v) { return weighted(t, v[0] * v[1]); }},
      {"div", [&](Tape& t, auto v) { return weighted(t, v[0] / (gdml::exp(v[1]))); }},
      {"scale", [&](Tape& t, auto v) { return weighted(t, gdml::add_scalar(2.5 * v[0], 1.0) - v[1]); }},
      {"add_row", [&](Tape& t, auto v) { return weighted(t, gdml::add_row(v[0], t.constant(bias)) * v[1]); }},
      {"matmul", [&](Tape& t, auto v) { return weighted(t, gdml::matmul(v[0] * v[1], t.constant(w))); }},
      {"matmul_nt", [&](Tape& t, auto v) { return weighted(t, gdml::matmul_nt(v[0], v[1])); }},
      {"transpose", [&](Tape& t, auto v) { return weighted(t, gdml::matmul(gdml::transpose(v[0]), v[1])); }},
      {"softmax", [&](Tape& t, auto v) { return weighted(t, gdml::softmax_rows(v[0] + v[1])); }},
      {"log_softmax", [&](Tape& t, auto v) { return weighted(t, gdml::log_softmax_rows(v[0] - v[1])); }},
      {"gelu", [&](Tape& t, auto v) { return weighted(t, gdml::gelu(v[0]) + v[1]); }},
      {"l2_normalize", [&](Tape& t, auto v) { return weighted(t, gdml::l2_normalize_rows(v[0] + v[1])); }},
      {"log_exp", [&](Tape& t, auto v) { return weighted(t, gdml::log(gdml::exp(v[0]) + gdml::exp(v[1]))); }},
      {"mean", [&](Tape&, auto v) { return gdml::mean(v[0] * v[1]); }},
      {"concat", [&](Tape& t, auto v) {
         const Var rows[] = {v[0], v[1]};
         const Var cols[] = {v[1], v[0]};
         return weighted(t, gdml::concat_rows(rows)) + weighted(t, gdml::concat_cols(cols));
       }},
      {"layer_norm", [&](Tape& t, auto v) {
         Var gamma = t.constant(bias);
         Var beta = t.constant(Tensor(Shape{4}, 0.1));
         return weighted(t, gdml::layer_norm_rows(v[0] * v[1], gamma, beta));
       }},
      {"regroup", [&](Tape& t, auto v) {
         const Var parts[] = {v[0], v[1]};
         Var inter = gdml::interleave_rows(parts);
         return weighted(t, gdml::strided_rows(inter, 2, 1) * v[0]) + gdml::sum(gdml::group_mean_rows(inter * inter, 3));
       }},
  };
  const Tensor inputs[] = {a, b};
  for (const auto& [name, f] : cases) {
    const auto r = gdml::grad_check(f, inputs, 1e-5);
    EXPECT_LE(r.max_rel_error, 1e-6) << name << " input " << r.worst_input << "[" << r.worst_index
                                     << "] analytic " << r.analytic << " numeric " << r.numeric;
  }
}

TEST_P(OpGradients, AttentionMatchesFiniteDifferences) {
  gdml::Rng rng(static_cast<std::uint64_t>(GetParam()) + 900);
  const Tensor inputs[] = {random_tensor(rng, {6, 4}), random_tensor(rng, {6, 4}), random_tensor(rng, {6, 4})};
  const Tensor weights = random_tensor(rng, {6, 4});
  const auto r = gdml::grad_check(
      [&](Tape& t, std::span<const Var> v) { return gdml::sum(gdml::attention(v[0], v[1], v[2], 3, 2) * t.constant(weights)); },
      inputs, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-6) << "input " << r.worst_input << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 5));

TEST(Attention, EqualTokensGiveUniformWeights) {
  Tensor q(Shape{5, 4}, 0.7);
  const Tensor p = gdml::attention_weights(q, q, 5, 2);
  for (double v : p.data) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Tape, IdenticalSeedsRecordIdenticalTapesAndGradients) {
  auto run = [](Tape& t) {
    gdml::Rng rng(4);
    Var x = t.parameter("x", random_tensor(rng, {4, 6}));
    Var w = t.parameter("w", random_tensor(rng, {6, 6}));
    Var h = gdml::dropout(gdml::gelu(gdml::matmul(x, w)), 0.3, t.rng());
    return t.backward(gdml::mean(gdml::log_softmax_rows(h)));
  };
  Tape t1(Mode::train, 77), t2(Mode::train, 77);
  const auto g1 = run(t1);
  const auto g2 = run(t2);
  ASSERT_EQ(t1.size(), t2.size());
  for (int id = 0; id < static_cast<int>(t1.size()); ++id) {
    EXPECT_EQ(t1.kind(id), t2.kind(id));
    EXPECT_TRUE(std::equal(t1.parents(id).begin(), t1.parents(id).end(), t2.parents(id).begin(), t2.parents(id).end()));
    EXPECT_TRUE(gdml::bitwise_equal(t1.value(id), t2.value(id)));
  }
  for (const auto& [name, g] : g1) EXPECT_TRUE(gdml::bitwise_equal(g, g2.at(name))) << name;
}

}  // namespace
