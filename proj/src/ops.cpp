#include "sargan/ops.hpp"

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sargan/errors.hpp"

namespace sargan {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct Geometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;             // column side
};

// Unfolds one C x H x W image into a (C*k*k) x (out_h*out_w) matrix.
void im2col(const double* img, const Geometry& g, double* col) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = img + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0
                          : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into the image.
void col2im(const double* col, const Geometry& g, double* img) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = img + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank 4 (NxCxHxW), got " +
                     shape_str(t.shape()));
  }
}

void check_conv_weights(const char* op, const Tensor& input, const Tensor& weight,
                        const Tensor& bias, std::size_t out_channels_axis) {
  require_rank4(input, op, "input");
  if (weight.rank() != 4) {
    throw ShapeError(std::string(op) + ": weight must be rank 4, got " +
                     shape_str(weight.shape()));
  }
  if (weight.dim(2) != weight.dim(3)) {
    throw ShapeError(std::string(op) + ": kernel must be square, got " +
                     shape_str(weight.shape()));
  }
  const std::size_t in_axis = out_channels_axis == 0 ? 1 : 0;
  if (weight.dim(in_axis) != input.dim(1)) {
    throw ShapeError(std::string(op) + ": input channel dimension (axis 1) is " +
                     std::to_string(input.dim(1)) + " but weight expects " +
                     std::to_string(weight.dim(in_axis)) + " (weight " +
                     shape_str(weight.shape()) + ")");
  }
  if (bias.size() != weight.dim(out_channels_axis)) {
    throw ShapeError(std::string(op) + ": bias length " + std::to_string(bias.size()) +
                     " does not match output channel count " +
                     std::to_string(weight.dim(out_channels_axis)));
  }
}

void add_channel_bias(double* out, const Tensor& bias, std::size_t plane) {
  for (std::size_t c = 0; c < bias.size(); ++c) {
    double* p = out + c * plane;
    const double b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

void accumulate_bias_grad(const double* grad, std::size_t channels, std::size_t plane,
                          Tensor& bias_grad) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* p = grad + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    bias_grad[c] += s;
  }
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (extent + 2 * padding < kernel) {
    throw ShapeError("spatial extent " + std::to_string(extent) + " with padding " +
                     std::to_string(padding) + " is smaller than kernel " +
                     std::to_string(kernel));
  }
  return (extent + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t extent, std::size_t kernel,
                                         std::size_t stride, std::size_t padding,
                                         std::size_t output_padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (output_padding >= stride) throw ShapeError("output_padding must be below stride");
  const std::size_t full = (extent - 1) * stride + kernel + output_padding;
  if (extent == 0 || full <= 2 * padding) {
    throw ShapeError("transposed convolution of extent " + std::to_string(extent) +
                     " yields an empty output");
  }
  return full - 2 * padding;
}

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  check_conv_weights("conv2d", x, w, bias.value(), 0);

  const std::size_t n_batch = x.dim(0);
  const std::size_t out_c = w.dim(0);
  const std::size_t k = w.dim(2);
  Geometry g{x.dim(1), x.dim(2), x.dim(3), k, stride, padding, 0, 0};
  g.out_h = conv_output_extent(g.height, k, stride, padding);
  g.out_w = conv_output_extent(g.width, k, stride, padding);

  const std::size_t patch = g.channels * k * k;
  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t in_plane = g.channels * g.height * g.width;

  Tensor out({n_batch, out_c, g.out_h, g.out_w});
  RowMat col(patch, cols);
  ConstMatMap wm(w.data().data(), out_c, patch);
  for (std::size_t n = 0; n < n_batch; ++n) {
    im2col(x.data().data() + n * in_plane, g, col.data());
    double* dst = out.data().data() + n * out_c * cols;
    MatMap(dst, out_c, cols).noalias() = wm * col;
    add_channel_bias(dst, bias.value(), cols);
  }

  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, g, n_batch, out_c, patch, cols, in_plane](
          Tape& tape, const Tensor& gout) {
        const Tensor& x = tape.value(input.id());
        const Tensor& w = tape.value(weight.id());
        Tensor* gx = tape.grad_target(input.id());
        Tensor* gw = tape.grad_target(weight.id());
        Tensor* gb = tape.grad_target(bias.id());
        ConstMatMap wm(w.data().data(), out_c, patch);
        RowMat col(patch, cols);
        RowMat dcol(patch, cols);
        for (std::size_t n = 0; n < n_batch; ++n) {
          ConstMatMap go(gout.data().data() + n * out_c * cols, out_c, cols);
          if (gw) {
            im2col(x.data().data() + n * in_plane, g, col.data());
            MatMap(gw->data().data(), out_c, patch).noalias() += go * col.transpose();
          }
          if (gx) {
            dcol.noalias() = wm.transpose() * go;
            col2im(dcol.data(), g, gx->data().data() + n * in_plane);
          }
          if (gb) accumulate_bias_grad(go.data(), out_c, cols, *gb);
        }
      });
}

Var conv_transpose2d(Var input, Var weight, Var bias, std::size_t stride,
                     std::size_t padding, std::size_t output_padding) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  check_conv_weights("conv_transpose2d", x, w, bias.value(), 1);

  const std::size_t n_batch = x.dim(0);
  const std::size_t in_c = x.dim(1);
  const std::size_t out_c = w.dim(1);
  const std::size_t k = w.dim(2);
  // The output plays the "image" role of the matching forward convolution.
  Geometry g{out_c,
             conv_transpose_output_extent(x.dim(2), k, stride, padding, output_padding),
             conv_transpose_output_extent(x.dim(3), k, stride, padding, output_padding),
             k,
             stride,
             padding,
             x.dim(2),
             x.dim(3)};

  const std::size_t patch = out_c * k * k;
  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t out_plane = out_c * g.height * g.width;

  Tensor out({n_batch, out_c, g.height, g.width});
  RowMat col(patch, cols);
  ConstMatMap wm(w.data().data(), in_c, patch);
  for (std::size_t n = 0; n < n_batch; ++n) {
    ConstMatMap xm(x.data().data() + n * in_c * cols, in_c, cols);
    col.noalias() = wm.transpose() * xm;
    double* dst = out.data().data() + n * out_plane;
    col2im(col.data(), g, dst);
    add_channel_bias(dst, bias.value(), g.height * g.width);
  }

  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, g, n_batch, in_c, out_c, patch, cols, out_plane](
          Tape& tape, const Tensor& gout) {
        const Tensor& x = tape.value(input.id());
        const Tensor& w = tape.value(weight.id());
        Tensor* gx = tape.grad_target(input.id());
        Tensor* gw = tape.grad_target(weight.id());
        Tensor* gb = tape.grad_target(bias.id());
        ConstMatMap wm(w.data().data(), in_c, patch);
        RowMat gcol(patch, cols);
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* go = gout.data().data() + n * out_plane;
          if (gx || gw) im2col(go, g, gcol.data());
          if (gx) {
            MatMap(gx->data().data() + n * in_c * cols, in_c, cols).noalias() += wm * gcol;
          }
          if (gw) {
            ConstMatMap xm(x.data().data() + n * in_c * cols, in_c, cols);
            MatMap(gw->data().data(), in_c, patch).noalias() += xm * gcol.transpose();
          }
          if (gb) accumulate_bias_grad(go, out_c, g.height * g.width, *gb);
        }
      });
}

Var batch_norm(Var input, Var gamma, Var beta, BatchNormStats& stats,
               const BatchNormOptions& options) {
  const Tensor& x = input.value();
  require_rank4(x, "batch_norm", "input");
  const std::size_t n_batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const std::size_t group = n_batch * plane;
  if (gamma.value().size() != channels || beta.value().size() != channels) {
    throw ShapeError("batch_norm: gamma/beta length must equal channel count " +
                     std::to_string(channels));
  }
  if (stats.running_mean.size() != channels || stats.running_var.size() != channels) {
    throw ShapeError("batch_norm: running statistics length must equal channel count " +
                     std::to_string(channels));
  }
  const bool train = options.mode == Mode::train;
  if (train && group < 2) {
    throw ShapeError(
        "batch_norm: normalisation group (batch x height x width) has a single element; "
        "variance is undefined in train mode");
  }

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({channels});
  const Tensor& g = gamma.value();
  const Tensor& b = beta.value();
  for (std::size_t c = 0; c < channels; ++c) {
    double mu;
    double var;
    if (train) {
      double s = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const double* p = x.data().data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mu = s / static_cast<double>(group);
      double ss = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const double* p = x.data().data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / static_cast<double>(group);
      if (options.update_running_stats) {
        const double m = options.momentum;
        stats.running_mean[c] = (1.0 - m) * stats.running_mean[c] + m * mu;
        stats.running_var[c] = (1.0 - m) * stats.running_var[c] +
                               m * var * static_cast<double>(group) /
                                   static_cast<double>(group - 1);
      }
    } else {
      mu = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + options.eps);
    inv_std[c] = is;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (x[off + i] - mu) * is;
        xhat[off + i] = h;
        out[off + i] = g[c] * h + b[c];
      }
    }
  }

  return input.tape().record(
      std::move(out), {input, gamma, beta},
      [input, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), train,
       n_batch, channels, plane, group](Tape& tape, const Tensor& gout) {
        const Tensor& g = tape.value(gamma.id());
        Tensor* gx = tape.grad_target(input.id());
        Tensor* gg = tape.grad_target(gamma.id());
        Tensor* gbeta = tape.grad_target(beta.id());
        const double m = static_cast<double>(group);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0;
          double sum_gx = 0.0;
          for (std::size_t n = 0; n < n_batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += gout[off + i];
              sum_gx += gout[off + i] * xhat[off + i];
            }
          }
          if (gg) (*gg)[c] += sum_gx;
          if (gbeta) (*gbeta)[c] += sum_g;
          if (!gx) continue;
          const double k = g[c] * inv_std[c];
          for (std::size_t n = 0; n < n_batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              (*gx)[off + i] +=
                  train ? k / m * (m * gout[off + i] - sum_g - xhat[off + i] * sum_gx)
                        : k * gout[off + i];
            }
          }
        }
      });
}

Var activate(Var input, Activation act) {
  using Kind = Activation::Kind;
  const Tensor& x = input.value();
  const bool need_grad = input.requires_grad();
  Tensor out(x.shape());
  Tensor slope = need_grad ? Tensor(x.shape()) : Tensor();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    double y = v;
    double d = 1.0;
    switch (act.kind) {
      case Kind::identity: break;
      case Kind::leaky_relu:
        y = v >= 0.0 ? v : act.slope * v;
        d = v >= 0.0 ? 1.0 : act.slope;
        break;
      case Kind::relu:
        y = v > 0.0 ? v : 0.0;
        d = v > 0.0 ? 1.0 : 0.0;
        break;
      case Kind::tanh:
        y = std::tanh(v);
        d = 1.0 - y * y;
        break;
      case Kind::sigmoid:
        y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        d = y * (1.0 - y);
        break;
    }
    out[i] = y;
    if (need_grad) slope[i] = d;
  }
  return input.tape().record(std::move(out), {input},
                             [input, slope = std::move(slope)](Tape& tape, const Tensor& gout) {
                               Tensor* gx = tape.grad_target(input.id());
                               for (std::size_t i = 0; i < gout.size(); ++i) {
                                 (*gx)[i] += slope[i] * gout[i];
                               }
                             });
}

Var dropout(Var input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::infer || rate == 0.0) return input;
  const Tensor& x = input.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return input.tape().record(std::move(out), {input},
                             [input, mask = std::move(mask)](Tape& tape, const Tensor& gout) {
                               Tensor* gx = tape.grad_target(input.id());
                               for (std::size_t i = 0; i < gout.size(); ++i) {
                                 (*gx)[i] += mask[i] * gout[i];
                               }
                             });
}

Var concat_channels(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_rank4(ta, "concat_channels", "first operand");
  require_rank4(tb, "concat_channels", "second operand");
  static constexpr const char* kAxisNames[] = {"batch", "channel", "height", "width"};
  for (std::size_t axis : {0u, 2u, 3u}) {
    if (ta.dim(axis) != tb.dim(axis)) {
      throw ShapeError(std::string("concat_channels: ") + kAxisNames[axis] + " dimension (axis " +
                       std::to_string(axis) + ") differs: " + shape_str(ta.shape()) + " vs " +
                       shape_str(tb.shape()));
    }
  }
  const std::size_t n_batch = ta.dim(0);
  const std::size_t block_a = ta.dim(1) * ta.dim(2) * ta.dim(3);
  const std::size_t block_b = tb.dim(1) * tb.dim(2) * tb.dim(3);
  Tensor out({n_batch, ta.dim(1) + tb.dim(1), ta.dim(2), ta.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    double* dst = out.data().data() + n * (block_a + block_b);
    std::copy_n(ta.data().data() + n * block_a, block_a, dst);
    std::copy_n(tb.data().data() + n * block_b, block_b, dst + block_a);
  }
  return a.tape().record(std::move(out), {a, b},
                         [a, b, n_batch, block_a, block_b](Tape& tape, const Tensor& gout) {
                           Tensor* ga = tape.grad_target(a.id());
                           Tensor* gb = tape.grad_target(b.id());
                           for (std::size_t n = 0; n < n_batch; ++n) {
                             const double* src = gout.data().data() + n * (block_a + block_b);
                             if (ga) {
                               double* d = ga->data().data() + n * block_a;
                               for (std::size_t i = 0; i < block_a; ++i) d[i] += src[i];
                             }
                             if (gb) {
                               double* d = gb->data().data() + n * block_b;
                               for (std::size_t i = 0; i < block_b; ++i) d[i] += src[block_a + i];
                             }
                           }
                         });
}

Var add(Var a, Var b) {
  check_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& gout) {
    if (Tensor* ga = tape.grad_target(a.id())) *ga += gout;
    if (Tensor* gb = tape.grad_target(b.id())) *gb += gout;
  });
}

Var mul(Var a, Var b) {
  check_same_shape("mul", a.value(), b.value());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& gout) {
    const Tensor& va = tape.value(a.id());
    const Tensor& vb = tape.value(b.id());
    if (Tensor* ga = tape.grad_target(a.id())) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i] * vb[i];
    }
    if (Tensor* gb = tape.grad_target(b.id())) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] += gout[i] * va[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& tape, const Tensor& gout) {
    Tensor* ga = tape.grad_target(a.id());
    for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += factor * gout[i];
  });
}

Var sum(Var a) {
  return a.tape().record(Tensor({1}, a.value().sum()), {a},
                         [a](Tape& tape, const Tensor& gout) {
                           Tensor* ga = tape.grad_target(a.id());
                           for (double& v : ga->data()) v += gout[0];
                         });
}

Var mean(Var a) {
  if (a.value().empty()) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var l1_mean(Var a, Var b) {
  check_same_shape("l1_mean", a.value(), b.value());
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.empty()) throw ShapeError("l1_mean of empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) total += std::abs(va[i] - vb[i]);
  const double inv_m = 1.0 / static_cast<double>(va.size());
  return a.tape().record(Tensor({1}, total * inv_m), {a, b},
                         [a, b, inv_m](Tape& tape, const Tensor& gout) {
                           const Tensor& va = tape.value(a.id());
                           const Tensor& vb = tape.value(b.id());
                           Tensor* ga = tape.grad_target(a.id());
                           Tensor* gb = tape.grad_target(b.id());
                           for (std::size_t i = 0; i < va.size(); ++i) {
                             const double diff = va[i] - vb[i];
                             const double s = (diff > 0.0) - (diff < 0.0);
                             if (ga) (*ga)[i] += gout[0] * s * inv_m;
                             if (gb) (*gb)[i] -= gout[0] * s * inv_m;
                           }
                         });
}

namespace {

// Shared body of the two log losses. `complement` selects -log(1 - p).
Var clamped_log_mean(Var p, double eps, bool complement, const char* name) {
  const Tensor& v = p.value();
  if (v.empty()) throw ShapeError(std::string(name) + " of an empty tensor");
  const double inv_m = 1.0 / static_cast<double>(v.size());
  double total = 0.0;
  std::size_t clamped = 0;
  Tensor slope(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double q = v[i];
    const bool inside = q >= eps && q <= 1.0 - eps;
    if (!inside) {
      ++clamped;
      q = std::clamp(std::isnan(q) ? 0.5 : q, eps, 1.0 - eps);
    }
    if (complement) {
      total -= std::log1p(-q);
      slope[i] = inside ? inv_m / (1.0 - q) : 0.0;
    } else {
      total -= std::log(q);
      slope[i] = inside ? -inv_m / q : 0.0;
    }
  }
  if (clamped > 0) {
    spdlog::debug("{}: clamped {} of {} probabilities into [{}, 1 - {}]", name, clamped,
                  v.size(), eps, eps);
  }
  return p.tape().record(Tensor({1}, total * inv_m), {p},
                         [p, slope = std::move(slope)](Tape& tape, const Tensor& gout) {
                           Tensor* gp = tape.grad_target(p.id());
                           for (std::size_t i = 0; i < slope.size(); ++i) {
                             (*gp)[i] += gout[0] * slope[i];
                           }
                         });
}

}  // namespace

Var neg_log_mean(Var p, double eps) { return clamped_log_mean(p, eps, false, "neg_log_mean"); }

Var neg_log1m_mean(Var p, double eps) {
  return clamped_log_mean(p, eps, true, "neg_log1m_mean");
}

}  // namespace sargan
