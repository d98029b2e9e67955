#pragma once

// Relevance-prior guided feature aggregation:
//   dense   = encoder(volume)                          C x D/4 x H/4 x W/4
//   pooled  = per-region mean intensity of the volume  R
//   agg     = relevance-weighted (mean, std) of pooled 2
//   fused   = dense + broadcast(proj * agg + bias)

#include <array>
#include <random>
#include <span>
#include <vector>

#include "pddn/layers.hpp"
#include "pddn/priors.hpp"
#include "pddn/volume_io.hpp"

namespace pddn {

using DenseFeature = Grid;

/// Two stride-2 conv + ReLU blocks, 1 -> C/2 -> C channels.
struct EncoderParams {
  int channels = 0;
  Conv3d conv1;
  Conv3d conv2;
  /// Fixed intensity standardization (x - input_center) / input_scale applied
  /// before conv1; not trained.
  double input_center = 0.0;
  double input_scale = 1.0;

  EncoderParams() = default;
  /// `channels` must be even and >= 2.
  explicit EncoderParams(int channels);
  void init(std::mt19937_64& rng);
};

/// Activations kept by encode_dense for the backward pass.
struct EncoderTape {
  Grid input;
  Grid hidden;  // post-ReLU output of conv1
  Grid output;  // post-ReLU output of conv2
};

DenseFeature encode_dense(const Volume3D& volume, const EncoderParams& params, EncoderTape* tape = nullptr);
void encode_dense_backward(const EncoderTape& tape, const DenseFeature& grad_output, EncoderParams& params);

struct RegionPooled {
  /// Entry r-1 is the mean intensity over region r.
  std::vector<double> means;
};

RegionPooled region_average_pool(const Volume3D& volume, const AtlasVolume& atlas);

struct AggregatedFeature {
  double mean = 0.0;
  double std = 0.0;  // weighted population standard deviation
};

AggregatedFeature weighted_aggregate(const RegionPooled& pooled, const RelevanceTable& table);
/// Same with explicit positive weights, one per region.
AggregatedFeature weighted_aggregate(const RegionPooled& pooled, std::span<const double> theta);

/// Linear 2 -> C lift of (mean, std); the result is broadcast over space.
struct FusionProjection {
  int channels = 0;
  Param weight;  // [C][2]
  Param bias;    // [C]
  /// Fixed standardization of (mean, std) before the projection; not trained.
  std::array<double, 2> agg_center{0.0, 0.0};
  std::array<double, 2> agg_scale{1.0, 1.0};

  FusionProjection() = default;
  explicit FusionProjection(int channels);
  void init(std::mt19937_64& rng);
  void set_zero();
};

DenseFeature upsample_fuse(const AggregatedFeature& agg, const DenseFeature& dense, const FusionProjection& proj);
/// dL/d(dense) equals `grad_fused`, so only the projection gradients are produced here.
void upsample_fuse_backward(const AggregatedFeature& agg, const DenseFeature& grad_fused, FusionProjection& proj);

}  // namespace pddn
