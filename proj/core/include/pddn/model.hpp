#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pddn/aggregator.hpp"
#include "pddn/diagnoser.hpp"
#include "pddn/priors.hpp"

namespace pddn {

/// The trainable partition: dense encoder (CNN1), fusion projection,
/// classifier branch (CNN2) and brain-age branch (CNN3).
enum class ParamGroup { Encoder, Fusion, Branch1, Branch2 };

std::string_view group_name(ParamGroup group) noexcept;

struct ModelParams {
  EncoderParams encoder;
  FusionProjection fusion;
  BranchParams branch1;
  BranchParams branch2;

  ModelParams() = default;
  /// Zero-initialized parameters for `channels` feature channels.
  explicit ModelParams(int channels);

  int channels() const noexcept { return encoder.channels; }
};

struct ModelInit {
  int channels = 8;
  std::uint64_t seed = 0;
  /// Fixed affine output map of the brain-age head, in years.
  double age_center = 65.0;
  double age_scale = 10.0;
};

ModelParams init_model(const ModelInit& init);

template <typename P>
struct BasicNamedParam {
  std::string name;
  ParamGroup group;
  P* param;
};
using NamedParam = BasicNamedParam<Param>;
using ConstNamedParam = BasicNamedParam<const Param>;

/// Parameters in their canonical (checkpoint) order.
std::vector<NamedParam> list_params(ModelParams& model);
std::vector<ConstNamedParam> list_params(const ModelParams& model);

void zero_grads(ModelParams& model);
bool params_equal(const ModelParams& a, const ModelParams& b);

struct ModelOptions {
  /// false: fusion projection is held at zero (no relevance-prior aggregate).
  bool use_fusion = true;
  /// false: no brain-age calibration of the logits and no age loss.
  bool use_age_branch = true;
};

/// Region pooling followed by relevance-weighted aggregation.
AggregatedFeature aggregate_subject(const Volume3D& volume, const AtlasVolume& atlas, const RelevanceTable& table);

struct Prediction {
  Logits logits;
  Logits corrected;  // equals `logits` when the age branch is disabled
  double predicted_age = 0.0;
  double delta = 0.0;
  Decision decision;
};

/// Full forward path for one subject: encode, fuse, both branches, correct, decide.
Prediction predict_subject(const ModelParams& model, const Volume3D& volume, const AggregatedFeature& agg,
                           double age_chrono, const AgingPriorParams& prior, const ModelOptions& options = {});

}  // namespace pddn
