#include "pddn/diagnoser.hpp"

#include <algorithm>
#include <cmath>

#include "pddn/error.hpp"

namespace pddn {

namespace {

std::vector<double> branch_forward(const DenseFeature& fused, const BranchParams& params, BranchTape* tape) {
  if (fused.channels != params.conv.in_channels) {
    throw Error(Errc::ShapeMismatch, "branch expects " + std::to_string(params.conv.in_channels) +
                                         " channels, got " + std::to_string(fused.channels));
  }
  Grid act = conv3d_forward(fused, params.conv);
  relu_inplace(act);
  std::vector<double> pooled = global_average_pool(act);
  std::vector<double> out = linear_forward(pooled, params.head);
  for (double& v : out) v = params.out_scale * v + params.out_offset;
  if (tape) {
    tape->input = fused;
    tape->activation = std::move(act);
    tape->pooled = std::move(pooled);
  }
  return out;
}

void branch_backward(const BranchTape& tape, std::vector<double> grad_out, BranchParams& params,
                     DenseFeature* grad_fused) {
  for (double& g : grad_out) g *= params.out_scale;
  std::vector<double> g_pooled;
  linear_backward(tape.pooled, grad_out, params.head, &g_pooled);
  Grid g_act = global_average_pool_backward(tape.activation, g_pooled);
  relu_backward_inplace(tape.activation, g_act);
  if (grad_fused) {
    Grid g_in;
    conv3d_backward(tape.input, g_act, params.conv, &g_in);
    if (!grad_fused->same_shape(g_in)) *grad_fused = Grid(g_in.channels, g_in.dims);
    for (std::size_t i = 0; i < g_in.data.size(); ++i) grad_fused->data[i] += g_in.data[i];
  } else {
    conv3d_backward(tape.input, g_act, params.conv, nullptr);
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(Errc::NonFinite, std::string(what) + " is not finite");
}

}  // namespace

BranchParams::BranchParams(int channels, int outputs) : conv(channels, channels), head(channels, outputs) {}

void BranchParams::init(std::mt19937_64& rng) {
  conv.init(rng);
  head.init(rng, 0.5);
}

Logits classify(const DenseFeature& fused, const BranchParams& params, BranchTape* tape) {
  if (params.head.out_features != 2) throw Error(Errc::ShapeMismatch, "classifier head must have 2 outputs");
  const auto out = branch_forward(fused, params, tape);
  return Logits{out[0], out[1]};
}

void classify_backward(const BranchTape& tape, const Logits& grad, BranchParams& params, DenseFeature* grad_fused) {
  branch_backward(tape, {grad.pd, grad.ot}, params, grad_fused);
}

double predict_brain_age(const DenseFeature& fused, const BranchParams& params, BranchTape* tape) {
  if (params.head.out_features != 1) throw Error(Errc::ShapeMismatch, "regressor head must have 1 output");
  return branch_forward(fused, params, tape)[0];
}

void predict_brain_age_backward(const BranchTape& tape, double grad, BranchParams& params, DenseFeature* grad_fused) {
  branch_backward(tape, {grad}, params, grad_fused);
}

double age_loss(double delta, Label label, const AgingPriorParams& prior) {
  return label == Label::PD ? std::max(0.0, prior.zeta() - delta) : std::max(0.0, delta - prior.tau());
}

double age_loss_grad(double delta, Label label, const AgingPriorParams& prior) {
  if (label == Label::PD) return delta < prior.zeta() ? -1.0 : 0.0;
  return delta > prior.tau() ? 1.0 : 0.0;
}

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double phi(double delta, double tau) { return softplus(delta - tau) - softplus(tau - delta); }

double phi_grad(double delta, double tau) { return stable_sigmoid(delta - tau) + stable_sigmoid(tau - delta); }

Logits correct_logits(const Logits& z, double delta, const AgingPriorParams& prior) {
  const double shift = prior.alpha() * phi(delta, prior.tau());
  return Logits{z.pd + shift, z.ot - shift};
}

double cls_loss(const Logits& z, Label label) {
  const double m = std::max(z.pd, z.ot);
  const double lse = m + std::log(std::exp(z.pd - m) + std::exp(z.ot - m));
  return lse - (label == Label::PD ? z.pd : z.ot);
}

Logits cls_loss_grad(const Logits& z, Label label) {
  const double p_pd = stable_sigmoid(z.pd - z.ot);
  const double p_ot = stable_sigmoid(z.ot - z.pd);
  return label == Label::PD ? Logits{p_pd - 1.0, p_ot} : Logits{p_pd, p_ot - 1.0};
}

LossBreakdown total_loss(const DenseFeature& fused, double age_chrono, Label label, const BranchParams& branch1,
                         const BranchParams& branch2, const AgingPriorParams& prior) {
  LossBreakdown out;
  out.logits = classify(fused, branch1);
  out.predicted_age = predict_brain_age(fused, branch2);
  require_finite(out.predicted_age, "predicted age");
  out.delta = age_gap(out.predicted_age, age_chrono);
  out.age = age_loss(out.delta, label, prior);
  out.corrected = correct_logits(out.logits, out.delta, prior);
  out.cls = cls_loss(out.corrected, label);
  out.total = out.age + out.cls;
  return out;
}

LossBreakdown total_loss_backward(const DenseFeature& fused, double age_chrono, Label label, BranchParams& branch1,
                                  BranchParams& branch2, const AgingPriorParams& prior, DenseFeature* grad_fused) {
  BranchTape tape1;
  BranchTape tape2;
  LossBreakdown out;
  out.logits = classify(fused, branch1, &tape1);
  out.predicted_age = predict_brain_age(fused, branch2, &tape2);
  require_finite(out.predicted_age, "predicted age");
  out.delta = age_gap(out.predicted_age, age_chrono);
  out.age = age_loss(out.delta, label, prior);
  out.corrected = correct_logits(out.logits, out.delta, prior);
  out.cls = cls_loss(out.corrected, label);
  out.total = out.age + out.cls;

  // dz~/dz is the identity; z~_pd and z~_ot move by +/- alpha * phi'(delta).
  const Logits g_z = cls_loss_grad(out.corrected, label);
  const double g_delta = age_loss_grad(out.delta, label, prior) +
                         prior.alpha() * phi_grad(out.delta, prior.tau()) * (g_z.pd - g_z.ot);

  classify_backward(tape1, g_z, branch1, grad_fused);
  predict_brain_age_backward(tape2, g_delta, branch2, grad_fused);
  return out;
}

Decision decide(const Logits& z) {
  require_finite(z.pd, "logit z_pd");
  require_finite(z.ot, "logit z_ot");
  Decision d;
  d.p_pd = stable_sigmoid(z.pd - z.ot);
  d.label = d.p_pd > 0.5 ? Label::PD : Label::Other;
  return d;
}

}  // namespace pddn
