#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pddn/diagnoser.hpp"
#include "pddn/optim.hpp"
#include "test_support.hpp"

namespace pddn {
namespace {

DenseFeature random_fused(int channels, Dims dims, std::mt19937_64& rng, double scale = 1.0) {
  DenseFeature f(channels, dims);
  std::normal_distribution<double> n(0.0, scale);
  for (double& x : f.data) x = n(rng);
  return f;
}

BranchParams random_branch(int channels, int outputs, std::mt19937_64& rng) {
  BranchParams b(channels, outputs);
  b.init(rng);
  std::normal_distribution<double> n(0.0, 0.1);
  for (double& x : b.conv.bias.value) x = n(rng);
  for (double& x : b.head.bias.value) x = n(rng);
  return b;
}

TEST(Classify, ZeroWeightsReturnBiases) {
  std::mt19937_64 rng(1);
  BranchParams b(4, 2);
  b.head.bias.value = {0.7, -1.2};
  const auto z = classify(random_fused(4, Dims{8, 8, 8}, rng), b);
  EXPECT_EQ(z.pd, 0.7);
  EXPECT_EQ(z.ot, -1.2);
}

TEST(Classify, Deterministic) {
  std::mt19937_64 rng(2);
  const auto b = random_branch(4, 2, rng);
  const auto f = random_fused(4, Dims{8, 8, 8}, rng);
  EXPECT_EQ(classify(f, b), classify(f, b));
}

TEST(Classify, ShapeMismatch) {
  std::mt19937_64 rng(3);
  BranchParams b(4, 2);
  EXPECT_PDDN_ERROR(classify(random_fused(6, Dims{4, 4, 4}, rng), b), Errc::ShapeMismatch);
  EXPECT_PDDN_ERROR(predict_brain_age(random_fused(4, Dims{4, 4, 4}, rng), b), Errc::ShapeMismatch);
}

TEST(PredictBrainAge, ZeroWeightsReturnBias) {
  std::mt19937_64 rng(4);
  BranchParams b(4, 1);
  b.head.bias.value = {70.0};
  EXPECT_EQ(predict_brain_age(random_fused(4, Dims{8, 8, 8}, rng), b), 70.0);
}

TEST(PredictBrainAge, OutputScaleAndOffset) {
  std::mt19937_64 rng(5);
  BranchParams b(4, 1);
  b.head.bias.value = {0.5};
  b.out_scale = 10.0;
  b.out_offset = 65.0;
  EXPECT_EQ(predict_brain_age(random_fused(4, Dims{4, 4, 4}, rng), b), 70.0);
}

TEST(PredictBrainAge, FiniteOnBoundedInputs) {
  std::mt19937_64 rng(6);
  const auto b = random_branch(4, 1, rng);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 20; ++k) {
    DenseFeature f(4, Dims{8, 8, 8});
    for (double& x : f.data) x = u(rng);
    EXPECT_TRUE(std::isfinite(predict_brain_age(f, b)));
  }
}

// Checks parameter gradients and dL/dfused (the fused grid is wrapped in a Param).
void check_branch_gradients(int outputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BranchParams b = random_branch(4, outputs, rng);
  b.out_scale = 1.7;
  Param fused(4 * 512);
  fused.value = random_fused(4, Dims{8, 8, 8}, rng).data;
  const std::vector<double> r{0.8, -1.3};
  auto loss = [&](bool grad) {
    DenseFeature f(4, Dims{8, 8, 8});
    f.data = fused.value;
    BranchTape tape;
    DenseFeature gf(4, f.dims);
    double l = 0.0;
    if (outputs == 2) {
      const Logits z = classify(f, b, &tape);
      // Smooth scalar of both logits.
      l = cls_loss(z, Label::PD) + r[1] * z.ot;
      if (grad) {
        Logits g = cls_loss_grad(z, Label::PD);
        g.ot += r[1];
        classify_backward(tape, g, b, &gf);
      }
    } else {
      const double a = predict_brain_age(f, b, &tape);
      l = 0.5 * (a - 3.0) * (a - 3.0);
      if (grad) predict_brain_age_backward(tape, a - 3.0, b, &gf);
    }
    if (grad) {
      for (std::size_t i = 0; i < gf.data.size(); ++i) fused.grad[i] += gf.data[i];
    }
    return l;
  };
  std::vector<Param*> params{&b.conv.weight, &b.conv.bias, &b.head.weight, &b.head.bias};
  EXPECT_LT(gradient_check(loss, params, 100, seed + 1), 1e-4);
  std::vector<Param*> input{&fused};
  EXPECT_LT(gradient_check(loss, input, 100, seed + 2), 1e-4);
}

TEST(Classify, GradientCheck) { check_branch_gradients(2, 21); }
TEST(PredictBrainAge, GradientCheck) { check_branch_gradients(1, 31); }

TEST(AgeLoss, Examples) {
  const AgingPriorParams p;
  EXPECT_EQ(age_loss(9.5, Label::PD, p), 0.0);
  EXPECT_EQ(age_loss(4.5, Label::PD, p), 5.0);
  EXPECT_EQ(age_loss(4.5, Label::Other, p), 0.0);
  EXPECT_EQ(age_loss(7.0, Label::Other, p), 2.5);
}

TEST(AgeLoss, ZonesAndConvexity) {
  const AgingPriorParams p(8.0, 3.0, 1.0);
  for (double d = -20.0; d <= 20.0; d += 0.25) {
    const double pd = age_loss(d, Label::PD, p);
    const double ot = age_loss(d, Label::Other, p);
    EXPECT_EQ(pd == 0.0, d >= 8.0);
    EXPECT_EQ(ot == 0.0, d <= 3.0);
    // Midpoint convexity on a 1-year stencil.
    EXPECT_LE(age_loss(d, Label::PD, p), 0.5 * (age_loss(d - 1, Label::PD, p) + age_loss(d + 1, Label::PD, p)) + 1e-15);
    EXPECT_LE(age_loss(d, Label::Other, p),
              0.5 * (age_loss(d - 1, Label::Other, p) + age_loss(d + 1, Label::Other, p)) + 1e-15);
  }
}

TEST(Phi, Examples) {
  EXPECT_EQ(phi(4.5, 4.5), 0.0);
  EXPECT_NEAR(phi(5.5, 4.5), 1.0, 1e-12);
  EXPECT_NEAR(phi(1.5, 4.5), -3.0, 1e-12);
}

TEST(Phi, IdentityIncludingLargeArguments) {
  for (double tau : {0.0, 4.5, 10.0}) {
    for (int i = -500; i <= 500; ++i) {
      const double d = i * 0.1;
      EXPECT_LT(std::abs(phi(d, tau) - (d - tau)), 1e-9);
    }
    EXPECT_LT(std::abs(phi(tau + 1000.0, tau) - 1000.0), 1e-9);
    EXPECT_LT(std::abs(phi(tau - 1000.0, tau) + 1000.0), 1e-9);
  }
}

TEST(Softplus, NoOverflow) {
  EXPECT_EQ(softplus(800.0), 800.0);
  EXPECT_EQ(softplus(-800.0), 0.0);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
}

TEST(CorrectLogits, Examples) {
  EXPECT_EQ(correct_logits({1.0, 2.0}, 20.0, AgingPriorParams(9.5, 4.5, 0.0)), (Logits{1.0, 2.0}));
  EXPECT_EQ(correct_logits({0.0, 0.0}, 4.5, AgingPriorParams()), (Logits{0.0, 0.0}));
  const auto z = correct_logits({1.0, 2.0}, 6.5, AgingPriorParams());
  EXPECT_NEAR(z.pd, 3.0, 1e-12);
  EXPECT_NEAR(z.ot, 0.0, 1e-12);
}

TEST(CorrectLogits, MonotoneInGap) {
  const AgingPriorParams p(9.5, 4.5, 0.7);
  double prev = -1.0;
  for (double d = -15.0; d <= 25.0; d += 0.5) {
    const double p_pd = decide(correct_logits({0.3, -0.2}, d, p)).p_pd;
    EXPECT_GT(p_pd, prev);
    prev = p_pd;
  }
}

TEST(ClsLoss, Examples) {
  EXPECT_NEAR(cls_loss({0, 0}, Label::PD), std::log(2.0), 1e-15);
  EXPECT_NEAR(cls_loss({0, 0}, Label::Other), 0.693147180559945, 1e-15);
  const double saturated = cls_loss({30, -30}, Label::PD);
  EXPECT_GE(saturated, 0.0);
  EXPECT_LT(saturated, 1e-20);
  EXPECT_NEAR(cls_loss({std::log(3.0), 0}, Label::PD), 0.287682072451781, 1e-15);
  EXPECT_TRUE(std::isfinite(cls_loss({1000, -1000}, Label::Other)));
  EXPECT_NEAR(cls_loss({1000, -1000}, Label::Other), 2000.0, 1e-9);
}

TEST(ClsLoss, ShiftInvariantAndNonNegative) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 5);
  for (int k = 0; k < 100; ++k) {
    const Logits z{n(rng), n(rng)};
    const double c = n(rng);
    for (Label y : {Label::PD, Label::Other}) {
      EXPECT_GE(cls_loss(z, y), 0.0);
      EXPECT_NEAR(cls_loss(z, y), cls_loss({z.pd + c, z.ot + c}, y), 1e-12);
    }
  }
}

TEST(TotalLoss, SumsComponents) {
  std::mt19937_64 rng(8);
  const auto b1 = random_branch(4, 2, rng);
  auto b2 = random_branch(4, 1, rng);
  b2.out_offset = 65.0;
  b2.out_scale = 10.0;
  const auto f = random_fused(4, Dims{8, 8, 8}, rng);
  const AgingPriorParams prior;
  for (Label y : {Label::PD, Label::Other}) {
    const auto l = total_loss(f, 61.0, y, b1, b2, prior);
    const double delta = predict_brain_age(f, b2) - 61.0;
    EXPECT_EQ(l.delta, delta);
    EXPECT_EQ(l.age, age_loss(delta, y, prior));
    EXPECT_EQ(l.cls, cls_loss(correct_logits(classify(f, b1), delta, prior), y));
    EXPECT_EQ(l.total, l.age + l.cls);
  }
}

TEST(TotalLoss, ZeroWhenBothComponentsVanish) {
  // Constant heads: PD logit huge, predicted age well past the PD margin.
  std::mt19937_64 rng(9);
  BranchParams b1(4, 2);
  BranchParams b2(4, 1);
  b1.head.bias.value = {800.0, -800.0};
  b2.head.bias.value = {90.0};
  const auto l = total_loss(random_fused(4, Dims{4, 4, 4}, rng), 60.0, Label::PD, b1, b2, AgingPriorParams());
  EXPECT_EQ(l.age, 0.0);
  EXPECT_EQ(l.cls, 0.0);
  EXPECT_EQ(l.total, 0.0);
}

void check_total_gradients(Label label, double age, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BranchParams b1 = random_branch(4, 2, rng);
  BranchParams b2 = random_branch(4, 1, rng);
  b2.out_offset = 65.0;
  b2.out_scale = 10.0;
  Param fused(4 * 512);
  fused.value = random_fused(4, Dims{8, 8, 8}, rng).data;
  const AgingPriorParams prior(9.5, 4.5, 0.8);
  double delta = 0.0;
  auto loss = [&](bool grad) {
    DenseFeature f(4, Dims{8, 8, 8});
    f.data = fused.value;
    if (!grad) return total_loss(f, age, label, b1, b2, prior).total;
    DenseFeature gf(4, f.dims);
    const auto l = total_loss_backward(f, age, label, b1, b2, prior, &gf);
    delta = l.delta;
    for (std::size_t i = 0; i < gf.data.size(); ++i) fused.grad[i] += gf.data[i];
    return l.total;
  };
  std::vector<Param*> params{&b1.conv.weight, &b1.conv.bias, &b1.head.weight, &b1.head.bias,
                             &b2.conv.weight, &b2.conv.bias, &b2.head.weight, &b2.head.bias};
  EXPECT_LT(gradient_check(loss, params, 200, seed + 1), 1e-4);
  // The hinge must be active so the age path is exercised.
  EXPECT_GT(age_loss(delta, label, prior), 0.0) << "delta " << delta;
  std::vector<Param*> input{&fused};
  EXPECT_LT(gradient_check(loss, input, 100, seed + 2), 1e-4);
}

TEST(TotalLoss, GradientCheckPD) { check_total_gradients(Label::PD, 64.0, 41); }
TEST(TotalLoss, GradientCheckOther) { check_total_gradients(Label::Other, 50.0, 51); }

TEST(Decide, TieGoesToOther) {
  const auto d = decide({0.0, 0.0});
  EXPECT_EQ(d.p_pd, 0.5);
  EXPECT_EQ(d.label, Label::Other);
}

TEST(Decide, SigmoidValue) {
  const auto d = decide({1.0, 0.0});
  EXPECT_NEAR(d.p_pd, 0.731058578630005, 1e-15);
  EXPECT_EQ(d.label, Label::PD);
}

TEST(Decide, ShiftInvariant) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 3);
  for (int k = 0; k < 100; ++k) {
    const Logits z{n(rng), n(rng)};
    const double c = n(rng) * 10;
    const auto a = decide(z);
    const auto b = decide({z.pd + c, z.ot + c});
    EXPECT_NEAR(a.p_pd, b.p_pd, 1e-12);
    if (std::abs(z.pd - z.ot) > 1e-9) EXPECT_EQ(a.label, b.label);
  }
}

TEST(Decide, RejectsNonFinite) { EXPECT_PDDN_ERROR(decide({NAN, 0.0}), Errc::NonFinite); }

}  // namespace
}  // namespace pddn
