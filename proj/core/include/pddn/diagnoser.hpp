#pragma once

// Dual-branch diagnosis head. Branch 1 produces PD/Other logits, branch 2 a
// regional brain age. The age gap drives a hinge loss and shifts the logits
// by alpha * phi(gap) before the cross entropy.

#include <random>
#include <vector>

#include "pddn/aggregator.hpp"
#include "pddn/layers.hpp"
#include "pddn/priors.hpp"

namespace pddn {

enum class Label { PD, Other };

struct Logits {
  double pd = 0.0;
  double ot = 0.0;

  bool operator==(const Logits&) const = default;
};

/// stride-2 conv + ReLU + global average pool + affine head.
/// The head output is `out_scale * (W h + b) + out_offset`; scale and
/// offset are fixed (not trained) and default to the identity.
struct BranchParams {
  Conv3d conv;
  Linear head;
  double out_scale = 1.0;
  double out_offset = 0.0;

  BranchParams() = default;
  BranchParams(int channels, int outputs);
  void init(std::mt19937_64& rng);
};

struct BranchTape {
  Grid input;
  Grid activation;
  std::vector<double> pooled;
};

Logits classify(const DenseFeature& fused, const BranchParams& params, BranchTape* tape = nullptr);
/// Accumulates parameter gradients; adds dL/dfused into `grad_fused` when non-null.
void classify_backward(const BranchTape& tape, const Logits& grad, BranchParams& params, DenseFeature* grad_fused);

double predict_brain_age(const DenseFeature& fused, const BranchParams& params, BranchTape* tape = nullptr);
void predict_brain_age_backward(const BranchTape& tape, double grad, BranchParams& params, DenseFeature* grad_fused);

/// PD: max(0, zeta - delta); Other: max(0, delta - tau).
double age_loss(double delta, Label label, const AgingPriorParams& prior);
/// Subgradient of age_loss in delta (0 at the hinge point).
double age_loss_grad(double delta, Label label, const AgingPriorParams& prior);

/// ln(1 + e^x) without overflow.
double softplus(double x);
double stable_sigmoid(double x);

/// softplus(delta - tau) - softplus(tau - delta); analytically delta - tau.
double phi(double delta, double tau);
double phi_grad(double delta, double tau);

Logits correct_logits(const Logits& z, double delta, const AgingPriorParams& prior);

/// Two-class cross entropy with log-sum-exp stabilization.
double cls_loss(const Logits& z, Label label);
Logits cls_loss_grad(const Logits& z, Label label);

struct LossBreakdown {
  double total = 0.0;
  double age = 0.0;
  double cls = 0.0;
  double delta = 0.0;
  double predicted_age = 0.0;
  Logits logits;
  Logits corrected;
};

LossBreakdown total_loss(const DenseFeature& fused, double age_chrono, Label label, const BranchParams& branch1,
                         const BranchParams& branch2, const AgingPriorParams& prior);

/// Same value as total_loss, plus gradients accumulated into both branches
/// (including the path from the gap through the logit correction) and
/// dL/dfused added into `grad_fused` when non-null.
LossBreakdown total_loss_backward(const DenseFeature& fused, double age_chrono, Label label, BranchParams& branch1,
                                  BranchParams& branch2, const AgingPriorParams& prior, DenseFeature* grad_fused);

struct Decision {
  Label label = Label::Other;
  double p_pd = 0.5;
};

/// Softmax readout; ties (p_pd == 0.5) go to Other.
Decision decide(const Logits& z);

}  // namespace pddn
