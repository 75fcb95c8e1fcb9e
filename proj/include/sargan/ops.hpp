#pragma once

#include <cstddef>

#include "sargan/autodiff.hpp"
#include "sargan/rng.hpp"
#include "sargan/tensor.hpp"

namespace sargan {

enum class Mode { train, infer };

// floor((extent + 2 * padding - kernel) / stride) + 1; throws when the padded
// input is smaller than the kernel.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding);
// (extent - 1) * stride - 2 * padding + kernel + output_padding.
std::size_t conv_transpose_output_extent(std::size_t extent, std::size_t kernel,
                                         std::size_t stride, std::size_t padding,
                                         std::size_t output_padding = 0);

/// 2-D cross-correlation. input N x C x H x W, weight O x C x k x k, bias O.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);

/// Adjoint of conv2d with the same hyper-parameters. input N x Ci x H x W,
/// weight Ci x Co x k x k, bias Co. `output_padding` (< stride) appends rows
/// and columns at the far edge, needed for odd kernels to double exactly.
Var conv_transpose2d(Var input, Var weight, Var bias, std::size_t stride,
                     std::size_t padding, std::size_t output_padding = 0);

struct BatchNormStats {
  Tensor running_mean;  // C
  Tensor running_var;   // C, starts at 1
};

struct BatchNormOptions {
  Mode mode = Mode::train;
  bool update_running_stats = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel normalisation over batch and spatial axes. Train mode uses the
/// batch statistics and folds them into `stats` (unbiased variance) when
/// update_running_stats is set; infer mode uses `stats`.
Var batch_norm(Var input, Var gamma, Var beta, BatchNormStats& stats,
               const BatchNormOptions& options);

struct Activation {
  enum class Kind { identity, leaky_relu, relu, tanh, sigmoid };
  Kind kind = Kind::identity;
  double slope = 0.0;  // leaky_relu only

  static Activation leaky_relu(double s) { return {Kind::leaky_relu, s}; }
  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation tanh() { return {Kind::tanh, 0.0}; }
  static Activation sigmoid() { return {Kind::sigmoid, 0.0}; }

  friend bool operator==(const Activation&, const Activation&) = default;
};

Var activate(Var input, Activation act);

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1 / (1 - rate). Identity in infer mode.
Var dropout(Var input, double rate, Mode mode, Rng& rng);

/// Concatenates along axis 1; `a` occupies the leading channels.
Var concat_channels(Var a, Var b);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);
Var l1_mean(Var a, Var b);

// mean(-log p) and mean(-log(1 - p)) with p clamped to [eps, 1 - eps].
inline constexpr double kLogClampEps = 1e-7;
Var neg_log_mean(Var p, double eps = kLogClampEps);
Var neg_log1m_mean(Var p, double eps = kLogClampEps);

}  // namespace sargan
