#include "pddn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "pddn/error.hpp"

namespace pddn {

namespace {

constexpr int kTaps = 27;

inline int conv_out(int n) { return (n - 1) / 2 + 1; }

}  // namespace

Conv3d::Conv3d(int in, int out)
    : in_channels(in),
      out_channels(out),
      weight(static_cast<std::size_t>(out) * static_cast<std::size_t>(in) * kTaps),
      bias(static_cast<std::size_t>(out)) {}

void Conv3d::init(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (in_channels * kTaps)));
  for (double& w : weight.value) w = normal(rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0);
  weight.zero_grad();
  bias.zero_grad();
}

Linear::Linear(int in, int out)
    : in_features(in),
      out_features(out),
      weight(static_cast<std::size_t>(out) * static_cast<std::size_t>(in)),
      bias(static_cast<std::size_t>(out)) {}

void Linear::init(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(in_features)));
  for (double& w : weight.value) w = normal(rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0);
  weight.zero_grad();
  bias.zero_grad();
}

Dims conv_output_dims(const Dims& in) { return Dims{conv_out(in.d), conv_out(in.h), conv_out(in.w)}; }

Grid conv3d_forward(const Grid& input, const Conv3d& conv) {
  if (input.channels != conv.in_channels) {
    throw Error(Errc::ChannelMismatch, "conv expects " + std::to_string(conv.in_channels) + " channels, got " +
                                           std::to_string(input.channels));
  }
  const Dims in = input.dims;
  const Dims od = conv_output_dims(in);
  Grid out(conv.out_channels, od);
  const std::size_t in_plane = input.plane();
  const std::size_t out_plane = out.plane();

  for (int o = 0; o < conv.out_channels; ++o) {
    double* dst = out.data.data() + static_cast<std::size_t>(o) * out_plane;
    std::fill(dst, dst + out_plane, conv.bias.value[static_cast<std::size_t>(o)]);
    for (int i = 0; i < conv.in_channels; ++i) {
      const double* src = input.data.data() + static_cast<std::size_t>(i) * in_plane;
      const double* w = conv.weight.value.data() +
                        (static_cast<std::size_t>(o) * static_cast<std::size_t>(conv.in_channels) +
                         static_cast<std::size_t>(i)) * kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wk = w[(kz * 3 + ky) * 3 + kx];
            for (int z = 0; z < od.d; ++z) {
              const int iz = 2 * z + kz - 1;
              if (iz < 0 || iz >= in.d) continue;
              for (int y = 0; y < od.h; ++y) {
                const int iy = 2 * y + ky - 1;
                if (iy < 0 || iy >= in.h) continue;
                const double* srow = src + in.index(iz, iy, 0);
                double* drow = dst + od.index(z, y, 0);
                const int x0 = kx == 0 ? 1 : 0;
                for (int x = x0; x < od.w; ++x) {
                  const int ix = 2 * x + kx - 1;
                  if (ix >= in.w) break;
                  drow[x] += wk * srow[ix];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void conv3d_backward(const Grid& input, const Grid& grad_output, Conv3d& conv, Grid* grad_input) {
  const Dims in = input.dims;
  const Dims od = grad_output.dims;
  if (grad_output.channels != conv.out_channels || od != conv_output_dims(in)) {
    throw Error(Errc::ShapeMismatch, "conv backward: gradient shape does not match forward output");
  }
  if (grad_input != nullptr && !grad_input->same_shape(input)) *grad_input = Grid(input.channels, in);

  const std::size_t in_plane = input.plane();
  const std::size_t out_plane = grad_output.plane();
  for (int o = 0; o < conv.out_channels; ++o) {
    const double* g = grad_output.data.data() + static_cast<std::size_t>(o) * out_plane;
    double bsum = 0.0;
    for (std::size_t p = 0; p < out_plane; ++p) bsum += g[p];
    conv.bias.grad[static_cast<std::size_t>(o)] += bsum;

    for (int i = 0; i < conv.in_channels; ++i) {
      const double* src = input.data.data() + static_cast<std::size_t>(i) * in_plane;
      double* gsrc = grad_input ? grad_input->data.data() + static_cast<std::size_t>(i) * in_plane : nullptr;
      const std::size_t wbase = (static_cast<std::size_t>(o) * static_cast<std::size_t>(conv.in_channels) +
                                 static_cast<std::size_t>(i)) * kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const std::size_t k = wbase + static_cast<std::size_t>((kz * 3 + ky) * 3 + kx);
            const double wk = conv.weight.value[k];
            double wgrad = 0.0;
            for (int z = 0; z < od.d; ++z) {
              const int iz = 2 * z + kz - 1;
              if (iz < 0 || iz >= in.d) continue;
              for (int y = 0; y < od.h; ++y) {
                const int iy = 2 * y + ky - 1;
                if (iy < 0 || iy >= in.h) continue;
                const double* srow = src + in.index(iz, iy, 0);
                const double* grow = g + od.index(z, y, 0);
                double* girow = gsrc ? gsrc + in.index(iz, iy, 0) : nullptr;
                const int x0 = kx == 0 ? 1 : 0;
                for (int x = x0; x < od.w; ++x) {
                  const int ix = 2 * x + kx - 1;
                  if (ix >= in.w) break;
                  wgrad += grow[x] * srow[ix];
                  if (girow) girow[ix] += wk * grow[x];
                }
              }
            }
            conv.weight.grad[k] += wgrad;
          }
        }
      }
    }
  }
}

void relu_inplace(Grid& g) {
  for (double& v : g.data) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const Grid& activation, Grid& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(activation.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

std::vector<double> global_average_pool(const Grid& g) {
  std::vector<double> out(static_cast<std::size_t>(g.channels), 0.0);
  const std::size_t plane = g.plane();
  for (int c = 0; c < g.channels; ++c) {
    const double* p = g.data.data() + static_cast<std::size_t>(c) * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    out[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
  }
  return out;
}

Grid global_average_pool_backward(const Grid& like, const std::vector<double>& grad) {
  Grid out(like.channels, like.dims);
  const std::size_t plane = like.plane();
  for (int c = 0; c < like.channels; ++c) {
    const double v = grad[static_cast<std::size_t>(c)] / static_cast<double>(plane);
    std::fill(out.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * plane),
              out.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c + 1) * plane), v);
  }
  return out;
}

std::vector<double> linear_forward(const std::vector<double>& x, const Linear& layer) {
  if (static_cast<int>(x.size()) != layer.in_features) {
    throw Error(Errc::ShapeMismatch, "linear expects " + std::to_string(layer.in_features) + " inputs");
  }
  std::vector<double> y(layer.bias.value);
  for (int o = 0; o < layer.out_features; ++o) {
    const double* w = layer.weight.value.data() + static_cast<std::size_t>(o) * x.size();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    y[static_cast<std::size_t>(o)] += s;
  }
  return y;
}

void linear_backward(const std::vector<double>& x, const std::vector<double>& grad_out, Linear& layer,
                     std::vector<double>* grad_x) {
  if (grad_x) grad_x->assign(x.size(), 0.0);
  for (int o = 0; o < layer.out_features; ++o) {
    const double g = grad_out[static_cast<std::size_t>(o)];
    layer.bias.grad[static_cast<std::size_t>(o)] += g;
    const std::size_t row = static_cast<std::size_t>(o) * x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      layer.weight.grad[row + i] += g * x[i];
      if (grad_x) (*grad_x)[i] += g * layer.weight.value[row + i];
    }
  }
}

}  // namespace pddn
