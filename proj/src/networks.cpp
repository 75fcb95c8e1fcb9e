#include "sargan/networks.hpp"

#include <algorithm>
#include <random>

#include "sargan/errors.hpp"

namespace sargan {

const std::array<VariantConfig, 5>& all_variants() {
  static const std::array<VariantConfig, 5> variants{{
      {"orig", 4, 4, 1.0, 100.0},
      {"gen5", 5, 4, 1.0, 100.0},
      {"dis3", 4, 3, 1.0, 100.0},
      {"l11gan100", 4, 4, 100.0, 1.0},
      {"l150gan50", 4, 4, 50.0, 50.0},
  }};
  return variants;
}

const VariantConfig& variant_by_name(std::string_view name) {
  for (const VariantConfig& v : all_variants()) {
    if (v.name == name) return v;
  }
  std::string legal;
  for (const VariantConfig& v : all_variants()) legal += (legal.empty() ? "" : ", ") + v.name;
  throw UsageError("unknown variant '" + std::string(name) + "'; legal variants: " + legal);
}

std::vector<Parameter*> NetworkState::parameters() {
  std::vector<Parameter*> out;
  for (LayerState& l : layers) {
    for (Parameter* p : {&l.weight, &l.bias, &l.gamma, &l.beta}) {
      if (!p->value.empty()) out.push_back(p);
    }
  }
  return out;
}

std::vector<const Parameter*> NetworkState::parameters() const {
  std::vector<const Parameter*> out;
  for (const LayerState& l : layers) {
    for (const Parameter* p : {&l.weight, &l.bias, &l.gamma, &l.beta}) {
      if (!p->value.empty()) out.push_back(p);
    }
  }
  return out;
}

std::size_t NetworkState::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void NetworkState::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::size_t same_halving_padding(std::size_t kernel) { return (kernel - 1) / 2; }

std::size_t doubling_output_padding(std::size_t kernel) {
  return 2 + 2 * same_halving_padding(kernel) - kernel;
}

NetworkState allocate_state(NetworkSpec spec) {
  NetworkState state;
  state.layers.reserve(spec.layers.size());
  for (const LayerDesc& d : spec.layers) {
    LayerState l;
    const std::size_t k = d.kernel;
    l.weight.value = d.op == LayerOp::conv ? Tensor({d.out_channels, d.in_channels, k, k})
                                           : Tensor({d.in_channels, d.out_channels, k, k});
    l.bias.value = Tensor({d.out_channels});
    if (d.batch_norm) {
      l.gamma.value = Tensor({d.out_channels}, 1.0);
      l.beta.value = Tensor({d.out_channels});
      l.stats.running_mean = Tensor({d.out_channels});
      l.stats.running_var = Tensor({d.out_channels}, 1.0);
    }
    state.layers.push_back(std::move(l));
  }
  state.spec = std::move(spec);
  return state;
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLeakySlope = 0.2;
constexpr double kDecoderDropout = 0.5;

void init_weights(NetworkState& state, Rng& rng) {
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (LayerState& l : state.layers) {
    for (double& v : l.weight.value.data()) v = normal(rng);
  }
}

Var bind(Tape& tape, Parameter& p, const ForwardOptions& options) {
  return options.bind_gradients ? tape.parameter(p) : tape.frozen(p);
}

Var apply_layer(Tape& tape, const LayerDesc& d, LayerState& l, Var x,
                const ForwardOptions& options, Rng* rng) {
  Var w = bind(tape, l.weight, options);
  Var b = bind(tape, l.bias, options);
  Var y = d.op == LayerOp::conv
              ? conv2d(x, w, b, d.stride, d.padding)
              : conv_transpose2d(x, w, b, d.stride, d.padding, d.output_padding);
  if (d.batch_norm) {
    BatchNormOptions bn;
    bn.mode = options.norm_mode;
    bn.update_running_stats = options.update_running_stats;
    y = batch_norm(y, bind(tape, l.gamma, options), bind(tape, l.beta, options), l.stats, bn);
  }
  if (d.dropout_rate > 0.0 && options.dropout && rng != nullptr) {
    y = dropout(y, d.dropout_rate, Mode::train, *rng);
  }
  return activate(y, d.activation);
}

Var finish_layer(Tape& tape, std::size_t index, Var y, const ForwardOptions& options) {
  if (options.zero_layer_output == index) y = tape.constant(Tensor(y.shape()));
  if (options.observe) options.observe(index, y.value());
  return y;
}

void check_image_input(const Tensor& t, std::size_t channels, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + " must be rank 4 (NxCxHxW), got " +
                     shape_str(t.shape()));
  }
  if (t.dim(1) != channels) {
    throw ShapeError(std::string(what) + " channel dimension is " + std::to_string(t.dim(1)) +
                     ", expected " + std::to_string(channels));
  }
}

}  // namespace

NetworkSpec generator_spec(const VariantConfig& cfg, const GeneratorOptions& options) {
  if (options.base_channels == 0) {
    throw std::invalid_argument("generator base_channels must be >= 1 (zero-channel layers)");
  }
  if (options.depth == 0) throw std::invalid_argument("generator depth must be >= 1");
  if (options.in_channels == 0 || options.out_channels == 0) {
    throw std::invalid_argument("generator input/output channel counts must be >= 1");
  }
  const std::size_t depth = options.depth;
  const std::size_t k = cfg.generator_kernel;
  const std::size_t pad = same_halving_padding(k);

  std::vector<std::size_t> enc_out(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    enc_out[i] = options.base_channels * (std::size_t{1} << std::min<std::size_t>(i, 3));
  }

  NetworkSpec spec;
  spec.kind = NetworkKind::generator;
  spec.variant = cfg.name;
  spec.base_channels = options.base_channels;
  spec.depth = depth;
  spec.in_channels = options.in_channels;

  for (std::size_t i = 0; i < depth; ++i) {
    LayerDesc d;
    d.op = LayerOp::conv;
    d.kernel = k;
    d.stride = 2;
    d.padding = pad;
    d.in_channels = i == 0 ? options.in_channels : enc_out[i - 1];
    d.out_channels = enc_out[i];
    // No normalisation on the first layer, nor on the innermost one whose
    // 1x1 output would leave batch norm a single-element group at batch 1.
    d.batch_norm = i != 0 && i + 1 != depth;
    d.activation = Activation::leaky_relu(kLeakySlope);
    spec.layers.push_back(d);
  }

  std::size_t prev_out = enc_out[depth - 1];
  for (std::size_t j = 1; j <= depth; ++j) {
    LayerDesc d;
    d.op = LayerOp::conv_transpose;
    d.kernel = k;
    d.stride = 2;
    d.padding = pad;
    d.output_padding = doubling_output_padding(k);
    d.in_channels = prev_out;
    if (j > 1) {
      d.skip_source = depth - j;  // encoder layer n - i, 0-based
      d.in_channels += enc_out[depth - j];
    }
    const bool last = j == depth;
    d.out_channels = last ? options.out_channels : enc_out[depth - j - 1];
    d.batch_norm = !last;
    if (last) {
      d.activation = Activation::tanh();
    } else if (j <= 3) {
      d.dropout_rate = kDecoderDropout;
      d.activation = Activation::relu();
    } else {
      d.activation = Activation::leaky_relu(kLeakySlope);
    }
    prev_out = d.out_channels;
    spec.layers.push_back(d);
  }
  return spec;
}

NetworkSpec discriminator_spec(const VariantConfig& cfg, std::size_t base_channels,
                               std::size_t mask_channels, std::size_t image_channels) {
  if (base_channels == 0) throw std::invalid_argument("discriminator base_channels must be >= 1");
  NetworkSpec spec;
  spec.kind = NetworkKind::discriminator;
  spec.variant = cfg.name;
  spec.base_channels = base_channels;
  spec.depth = 5;
  spec.in_channels = mask_channels + image_channels;

  const std::array<std::size_t, 5> strides{2, 2, 2, 1, 1};
  const std::array<std::size_t, 5> widths{base_channels, base_channels * 2, base_channels * 4,
                                          base_channels * 8, 1};
  std::size_t in = spec.in_channels;
  for (std::size_t i = 0; i < 5; ++i) {
    LayerDesc d;
    d.op = LayerOp::conv;
    d.kernel = cfg.discriminator_kernel;
    d.stride = strides[i];
    d.padding = 1;
    d.in_channels = in;
    d.out_channels = widths[i];
    d.batch_norm = i >= 1 && i <= 3;
    d.activation = i == 4 ? Activation::sigmoid() : Activation::leaky_relu(kLeakySlope);
    in = d.out_channels;
    spec.layers.push_back(d);
  }
  return spec;
}

NetworkState build_generator(const VariantConfig& cfg, const GeneratorOptions& options,
                             Rng& rng) {
  NetworkState state = allocate_state(generator_spec(cfg, options));
  init_weights(state, rng);
  return state;
}

NetworkState build_discriminator(const VariantConfig& cfg, Rng& rng, std::size_t base_channels) {
  NetworkState state = allocate_state(discriminator_spec(cfg, base_channels));
  init_weights(state, rng);
  return state;
}

Var generator_forward(Tape& tape, NetworkState& g, Var mask, const ForwardOptions& options,
                      Rng& rng) {
  const NetworkSpec& spec = g.spec;
  if (spec.kind != NetworkKind::generator) throw ShapeError("generator_forward: not a generator");
  const Tensor& m = mask.value();
  check_image_input(m, spec.in_channels, "generator mask");
  const std::size_t factor = std::size_t{1} << spec.depth;
  for (std::size_t axis : {2u, 3u}) {
    if (m.dim(axis) == 0 || m.dim(axis) % factor != 0) {
      throw ShapeError("generator mask " + std::string(axis == 2 ? "height" : "width") + " " +
                       std::to_string(m.dim(axis)) + " is not divisible by 2^" +
                       std::to_string(spec.depth) + " = " + std::to_string(factor));
    }
  }

  std::vector<Var> outputs;
  outputs.reserve(spec.layers.size());
  Var x = mask;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& d = spec.layers[i];
    Var in = d.skip_source ? concat_channels(x, outputs[*d.skip_source]) : x;
    x = finish_layer(tape, i, apply_layer(tape, d, g.layers[i], in, options, &rng), options);
    outputs.push_back(x);
  }
  return x;
}

Var discriminator_forward(Tape& tape, NetworkState& d, Var mask, Var image,
                          const ForwardOptions& options) {
  const NetworkSpec& spec = d.spec;
  if (spec.kind != NetworkKind::discriminator) {
    throw ShapeError("discriminator_forward: not a discriminator");
  }
  const Tensor& m = mask.value();
  const Tensor& im = image.value();
  if (m.rank() != 4 || im.rank() != 4) {
    throw ShapeError("discriminator inputs must be rank 4, got " + shape_str(m.shape()) +
                     " and " + shape_str(im.shape()));
  }
  if (m.dim(1) + im.dim(1) != spec.in_channels) {
    throw ShapeError("discriminator expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(m.dim(1) + im.dim(1)));
  }
  Var x = concat_channels(mask, image);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    x = finish_layer(tape, i, apply_layer(tape, spec.layers[i], d.layers[i], x, options, nullptr),
                     options);
  }
  return x;
}

Tensor generate(NetworkState& g, const Tensor& mask, const ForwardOptions& options, Rng& rng) {
  ForwardOptions o = options;
  o.bind_gradients = false;
  Tape tape;
  return generator_forward(tape, g, tape.constant(mask), o, rng).value();
}

Tensor discriminate(NetworkState& d, const Tensor& mask, const Tensor& image,
                    const ForwardOptions& options) {
  ForwardOptions o = options;
  o.bind_gradients = false;
  Tape tape;
  return discriminator_forward(tape, d, tape.constant(mask), tape.constant(image), o).value();
}

std::size_t receptive_field(const NetworkSpec& spec) {
  std::size_t rf = 1;
  for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it) {
    rf = (rf - 1) * it->stride + it->kernel;
  }
  return rf;
}

std::size_t output_extent(const NetworkSpec& spec, std::size_t input_extent) {
  std::size_t extent = input_extent;
  for (const LayerDesc& d : spec.layers) {
    extent = d.op == LayerOp::conv
                 ? conv_output_extent(extent, d.kernel, d.stride, d.padding)
                 : conv_transpose_output_extent(extent, d.kernel, d.stride, d.padding,
                                                d.output_padding);
  }
  return extent;
}

}  // namespace sargan
