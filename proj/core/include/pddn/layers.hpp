#pragma once

// Small differentiable building blocks. Every layer is a pair of free
// functions: a forward pass on const parameters and a backward pass that
// accumulates into the parameters' gradient buffers.

#include <cstddef>
#include <random>
#include <vector>

#include "pddn/volume_io.hpp"

namespace pddn {

/// Trainable array with a gradient buffer of identical length.
struct Param {
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  explicit Param(std::size_t n) : value(n, 0.0), grad(n, 0.0) {}

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  bool operator==(const Param& other) const { return value == other.value; }
};

/// Channel-major C x D x H x W field of doubles.
struct Grid {
  int channels = 0;
  Dims dims;
  std::vector<double> data;

  Grid() = default;
  Grid(int c, Dims d) : channels(c), dims(d), data(static_cast<std::size_t>(c) * d.voxels(), 0.0) {}

  std::size_t plane() const noexcept { return dims.voxels(); }
  double& at(int c, int z, int y, int x) {
    return data[static_cast<std::size_t>(c) * plane() + dims.index(z, y, x)];
  }
  double at(int c, int z, int y, int x) const {
    return data[static_cast<std::size_t>(c) * plane() + dims.index(z, y, x)];
  }
  bool same_shape(const Grid& other) const { return channels == other.channels && dims == other.dims; }
};

/// 3x3x3 convolution, stride 2, zero padding 1. Output extent is ceil(n/2).
struct Conv3d {
  int in_channels = 0;
  int out_channels = 0;
  Param weight;  // [out][in][3][3][3]
  Param bias;    // [out]

  Conv3d() = default;
  Conv3d(int in, int out);
  /// He-normal weights, zero biases.
  void init(std::mt19937_64& rng);
};

struct Linear {
  int in_features = 0;
  int out_features = 0;
  Param weight;  // [out][in]
  Param bias;    // [out]

  Linear() = default;
  Linear(int in, int out);
  void init(std::mt19937_64& rng, double scale);
};

Dims conv_output_dims(const Dims& in);

Grid conv3d_forward(const Grid& input, const Conv3d& conv);
/// Accumulates dL/dW, dL/db into `conv`; writes dL/dinput when `grad_input` is non-null.
void conv3d_backward(const Grid& input, const Grid& grad_output, Conv3d& conv, Grid* grad_input);

void relu_inplace(Grid& g);
/// grad *= 1[activation > 0]
void relu_backward_inplace(const Grid& activation, Grid& grad);

/// Spatial mean per channel.
std::vector<double> global_average_pool(const Grid& g);
Grid global_average_pool_backward(const Grid& like, const std::vector<double>& grad);

std::vector<double> linear_forward(const std::vector<double>& x, const Linear& layer);
void linear_backward(const std::vector<double>& x, const std::vector<double>& grad_out, Linear& layer,
                     std::vector<double>* grad_x);

}  // namespace pddn
