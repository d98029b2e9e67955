#include "pddn/model.hpp"

#include <random>

namespace pddn {

std::string_view group_name(ParamGroup group) noexcept {
  switch (group) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Fusion: return "fusion";
    case ParamGroup::Branch1: return "branch1";
    case ParamGroup::Branch2: return "branch2";
  }
  return "?";
}

ModelParams::ModelParams(int channels)
    : encoder(channels), fusion(channels), branch1(channels, 2), branch2(channels, 1) {}

ModelParams init_model(const ModelInit& init) {
  ModelParams model(init.channels);
  std::mt19937_64 rng(init.seed);
  model.encoder.init(rng);
  model.fusion.init(rng);
  model.branch1.init(rng);
  model.branch2.init(rng);
  model.branch2.out_offset = init.age_center;
  model.branch2.out_scale = init.age_scale;
  return model;
}

namespace {

template <typename Model, typename P>
std::vector<BasicNamedParam<P>> list_impl(Model& m) {
  using G = ParamGroup;
  return {
      {"encoder.conv1.weight", G::Encoder, &m.encoder.conv1.weight},
      {"encoder.conv1.bias", G::Encoder, &m.encoder.conv1.bias},
      {"encoder.conv2.weight", G::Encoder, &m.encoder.conv2.weight},
      {"encoder.conv2.bias", G::Encoder, &m.encoder.conv2.bias},
      {"fusion.weight", G::Fusion, &m.fusion.weight},
      {"fusion.bias", G::Fusion, &m.fusion.bias},
      {"branch1.conv.weight", G::Branch1, &m.branch1.conv.weight},
      {"branch1.conv.bias", G::Branch1, &m.branch1.conv.bias},
      {"branch1.head.weight", G::Branch1, &m.branch1.head.weight},
      {"branch1.head.bias", G::Branch1, &m.branch1.head.bias},
      {"branch2.conv.weight", G::Branch2, &m.branch2.conv.weight},
      {"branch2.conv.bias", G::Branch2, &m.branch2.conv.bias},
      {"branch2.head.weight", G::Branch2, &m.branch2.head.weight},
      {"branch2.head.bias", G::Branch2, &m.branch2.head.bias},
  };
}

}  // namespace

std::vector<NamedParam> list_params(ModelParams& model) { return list_impl<ModelParams, Param>(model); }

std::vector<ConstNamedParam> list_params(const ModelParams& model) {
  return list_impl<const ModelParams, const Param>(model);
}

void zero_grads(ModelParams& model) {
  for (auto& p : list_params(model)) p.param->zero_grad();
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  if (a.channels() != b.channels()) return false;
  const auto pa = list_params(a);
  const auto pb = list_params(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].param->value != pb[i].param->value) return false;
  }
  return a.encoder.input_center == b.encoder.input_center && a.encoder.input_scale == b.encoder.input_scale &&
         a.fusion.agg_center == b.fusion.agg_center && a.fusion.agg_scale == b.fusion.agg_scale &&
         a.branch1.out_scale == b.branch1.out_scale && a.branch1.out_offset == b.branch1.out_offset &&
         a.branch2.out_scale == b.branch2.out_scale && a.branch2.out_offset == b.branch2.out_offset;
}

AggregatedFeature aggregate_subject(const Volume3D& volume, const AtlasVolume& atlas, const RelevanceTable& table) {
  return weighted_aggregate(region_average_pool(volume, atlas), table);
}

Prediction predict_subject(const ModelParams& model, const Volume3D& volume, const AggregatedFeature& agg,
                           double age_chrono, const AgingPriorParams& prior, const ModelOptions& options) {
  const DenseFeature dense = encode_dense(volume, model.encoder);
  const DenseFeature fused = options.use_fusion ? upsample_fuse(agg, dense, model.fusion) : dense;
  Prediction p;
  p.logits = classify(fused, model.branch1);
  p.predicted_age = predict_brain_age(fused, model.branch2);
  p.delta = age_gap(p.predicted_age, age_chrono);
  p.corrected = options.use_age_branch ? correct_logits(p.logits, p.delta, prior) : p.logits;
  p.decision = decide(p.corrected);
  return p;
}

}  // namespace pddn
