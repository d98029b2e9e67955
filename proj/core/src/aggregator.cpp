#include "pddn/aggregator.hpp"

#include <cmath>

#include "pddn/error.hpp"

namespace pddn {

EncoderParams::EncoderParams(int c) : channels(c) {
  if (c < 2 || c % 2 != 0) throw Error(Errc::InvalidArgument, "encoder channel count must be even and >= 2");
  conv1 = Conv3d(1, c / 2);
  conv2 = Conv3d(c / 2, c);
}

void EncoderParams::init(std::mt19937_64& rng) {
  conv1.init(rng);
  conv2.init(rng);
}

DenseFeature encode_dense(const Volume3D& volume, const EncoderParams& params, EncoderTape* tape) {
  const Dims dims = volume.dims();
  if (dims.d % 4 != 0 || dims.h % 4 != 0 || dims.w % 4 != 0) {
    throw Error(Errc::IndivisibleDims, "volume dims " + to_string(dims) + " must be divisible by 4");
  }
  if (volume.data.size() != dims.voxels()) throw Error(Errc::LengthMismatch, "volume data length");

  Grid input(1, dims);
  input.data = volume.data;
  if (params.input_center != 0.0 || params.input_scale != 1.0) {
    for (double& x : input.data) x = (x - params.input_center) / params.input_scale;
  }
  Grid hidden = conv3d_forward(input, params.conv1);
  relu_inplace(hidden);
  Grid out = conv3d_forward(hidden, params.conv2);
  relu_inplace(out);
  if (tape) {
    tape->input = std::move(input);
    tape->hidden = std::move(hidden);
    tape->output = out;
  }
  return out;
}

void encode_dense_backward(const EncoderTape& tape, const DenseFeature& grad_output, EncoderParams& params) {
  if (!grad_output.same_shape(tape.output)) {
    throw Error(Errc::ShapeMismatch, "encoder backward: gradient shape does not match output");
  }
  Grid g = grad_output;
  relu_backward_inplace(tape.output, g);
  Grid g_hidden;
  conv3d_backward(tape.hidden, g, params.conv2, &g_hidden);
  relu_backward_inplace(tape.hidden, g_hidden);
  conv3d_backward(tape.input, g_hidden, params.conv1, nullptr);
}

RegionPooled region_average_pool(const Volume3D& volume, const AtlasVolume& atlas) {
  if (volume.dims() != atlas.dims) {
    throw Error(Errc::DimMismatch,
                "volume " + to_string(volume.dims()) + " vs atlas " + to_string(atlas.dims));
  }
  const auto r = static_cast<std::size_t>(atlas.regions);
  std::vector<double> sums(r + 1, 0.0);
  std::vector<std::size_t> counts(r + 1, 0);
  for (std::size_t v = 0; v < volume.data.size(); ++v) {
    const auto label = static_cast<std::size_t>(atlas.labels[v]);
    sums[label] += volume.data[v];
    ++counts[label];
  }
  RegionPooled pooled;
  pooled.means.resize(r);
  for (std::size_t k = 1; k <= r; ++k) {
    if (counts[k] == 0) throw Error(Errc::InvalidAtlas, "region " + std::to_string(k) + " is empty");
    pooled.means[k - 1] = sums[k] / static_cast<double>(counts[k]);
  }
  return pooled;
}

AggregatedFeature weighted_aggregate(const RegionPooled& pooled, const RelevanceTable& table) {
  return weighted_aggregate(pooled, std::span<const double>(table.weights()));
}

AggregatedFeature weighted_aggregate(const RegionPooled& pooled, std::span<const double> theta) {
  if (pooled.means.size() != theta.size()) {
    throw Error(Errc::LengthMismatch, "pooled has " + std::to_string(pooled.means.size()) +
                                          " regions, table has " + std::to_string(theta.size()));
  }
  for (double t : theta) {
    if (!(t > 0.0) || !std::isfinite(t)) throw Error(Errc::InvalidArgument, "region weights must be positive");
  }
  double wsum = 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r < theta.size(); ++r) {
    wsum += theta[r];
    acc += theta[r] * pooled.means[r];
  }
  AggregatedFeature agg;
  agg.mean = acc / wsum;
  double var = 0.0;
  for (std::size_t r = 0; r < theta.size(); ++r) {
    const double dev = pooled.means[r] - agg.mean;
    var += theta[r] * dev * dev;
  }
  agg.std = std::sqrt(var / wsum);
  return agg;
}

FusionProjection::FusionProjection(int c)
    : channels(c), weight(static_cast<std::size_t>(c) * 2), bias(static_cast<std::size_t>(c)) {}

void FusionProjection::init(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.5);
  for (double& w : weight.value) w = normal(rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0);
  weight.zero_grad();
  bias.zero_grad();
}

void FusionProjection::set_zero() {
  std::fill(weight.value.begin(), weight.value.end(), 0.0);
  std::fill(bias.value.begin(), bias.value.end(), 0.0);
}

DenseFeature upsample_fuse(const AggregatedFeature& agg, const DenseFeature& dense, const FusionProjection& proj) {
  if (proj.channels != dense.channels) {
    throw Error(Errc::ChannelMismatch, "projection has " + std::to_string(proj.channels) +
                                           " channels, dense feature has " + std::to_string(dense.channels));
  }
  DenseFeature fused = dense;
  const std::size_t plane = dense.plane();
  const double m = (agg.mean - proj.agg_center[0]) / proj.agg_scale[0];
  const double s = (agg.std - proj.agg_center[1]) / proj.agg_scale[1];
  for (int c = 0; c < dense.channels; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    const double lift = proj.weight.value[2 * cc] * m + proj.weight.value[2 * cc + 1] * s + proj.bias.value[cc];
    double* p = fused.data.data() + cc * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += lift;
  }
  return fused;
}

void upsample_fuse_backward(const AggregatedFeature& agg, const DenseFeature& grad_fused, FusionProjection& proj) {
  if (proj.channels != grad_fused.channels) throw Error(Errc::ChannelMismatch, "fusion backward channel count");
  const std::size_t plane = grad_fused.plane();
  const double m = (agg.mean - proj.agg_center[0]) / proj.agg_scale[0];
  const double sd = (agg.std - proj.agg_center[1]) / proj.agg_scale[1];
  for (int c = 0; c < grad_fused.channels; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    const double* g = grad_fused.data.data() + cc * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += g[i];
    proj.weight.grad[2 * cc] += s * m;
    proj.weight.grad[2 * cc + 1] += s * sd;
    proj.bias.grad[cc] += s;
  }
}

}  // namespace pddn
