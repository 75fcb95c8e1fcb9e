#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sargan/autodiff.hpp"
#include "sargan/ops.hpp"
#include "sargan/rng.hpp"

namespace sargan {

/// One of the five named experimental configurations: kernel sizes of the
/// generator and discriminator convolutions and the generator loss weights.
struct VariantConfig {
  std::string name;
  std::size_t generator_kernel;
  std::size_t discriminator_kernel;
  double lambda_gan;
  double lambda_l1;
};

// orig, gen5, dis3, l11gan100, l150gan50 in that order.
const std::array<VariantConfig, 5>& all_variants();
// Throws UsageError listing the legal names when `name` is unknown.
const VariantConfig& variant_by_name(std::string_view name);

enum class LayerOp { conv, conv_transpose };
enum class NetworkKind { generator, discriminator };

struct LayerDesc {
  LayerOp op = LayerOp::conv;
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t padding = 1;
  std::size_t output_padding = 0;
  std::size_t in_channels = 0;   // after any skip concatenation
  std::size_t out_channels = 0;
  bool batch_norm = false;
  Activation activation;
  double dropout_rate = 0.0;
  // Index of the layer whose output is concatenated (after this layer's
  // regular input) to form this layer's input.
  std::optional<std::size_t> skip_source;

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct NetworkSpec {
  NetworkKind kind = NetworkKind::generator;
  std::string variant;
  std::size_t base_channels = 64;
  std::size_t depth = 0;       // generator: encoder layer count
  std::size_t in_channels = 1;
  std::size_t patch_size = 0;  // native tile size the network was trained on, 0 if unknown
  std::vector<LayerDesc> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct LayerState {
  Parameter weight;
  Parameter bias;
  Parameter gamma;  // empty unless the layer has batch norm
  Parameter beta;
  BatchNormStats stats;
};

/// Learned parameters plus running statistics of one network.
struct NetworkState {
  NetworkSpec spec;
  std::vector<LayerState> layers;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

// Allocates zero-filled tensors for every layer (running variance 1).
NetworkState allocate_state(NetworkSpec spec);

struct GeneratorOptions {
  std::size_t base_channels = 64;
  std::size_t depth = 8;  // encoder layers; the decoder mirrors them
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
};

NetworkSpec generator_spec(const VariantConfig& cfg, const GeneratorOptions& options);
NetworkSpec discriminator_spec(const VariantConfig& cfg, std::size_t base_channels = 64,
                               std::size_t mask_channels = 1, std::size_t image_channels = 1);

/// U-Net generator with weights drawn from N(0, 0.02).
NetworkState build_generator(const VariantConfig& cfg, const GeneratorOptions& options,
                             Rng& rng);
inline NetworkState build_generator(const VariantConfig& cfg, std::size_t base_channels,
                                    Rng& rng) {
  return build_generator(cfg, GeneratorOptions{base_channels}, rng);
}

/// Five-layer PatchGAN discriminator with weights drawn from N(0, 0.02).
NetworkState build_discriminator(const VariantConfig& cfg, Rng& rng,
                                 std::size_t base_channels = 64);

struct ForwardOptions {
  Mode norm_mode = Mode::train;  // batch-norm statistics source
  bool dropout = true;           // generator noise; active in both generator modes
  bool update_running_stats = true;
  bool bind_gradients = true;    // false: parameters enter the tape frozen
  // Called with each layer's post-activation output.
  std::function<void(std::size_t layer, const Tensor& output)> observe;
  // Replaces the output of this layer with zeros (ablation).
  std::optional<std::size_t> zero_layer_output;

  static ForwardOptions training() { return {}; }
  // Running statistics, dropout kept as the stochastic input.
  static ForwardOptions stochastic_inference() {
    ForwardOptions o;
    o.norm_mode = Mode::infer;
    o.update_running_stats = false;
    o.bind_gradients = false;
    return o;
  }
  static ForwardOptions inference() {
    ForwardOptions o = stochastic_inference();
    o.dropout = false;
    return o;
  }
};

/// Generator pass G(mask). The mask must carry spec.in_channels channels and
/// spatial extents divisible by 2^depth.
Var generator_forward(Tape& tape, NetworkState& g, Var mask, const ForwardOptions& options,
                      Rng& rng);

/// Discriminator pass D(mask, image) on the channel concatenation of both.
Var discriminator_forward(Tape& tape, NetworkState& d, Var mask, Var image,
                          const ForwardOptions& options);

// Gradient-free conveniences built on the passes above.
Tensor generate(NetworkState& g, const Tensor& mask, const ForwardOptions& options, Rng& rng);
Tensor discriminate(NetworkState& d, const Tensor& mask, const Tensor& image,
                    const ForwardOptions& options);

// Input pixels seen by one output unit: rf <- (rf - 1) * stride + kernel,
// applied from the last layer back to the first.
std::size_t receptive_field(const NetworkSpec& spec);
// Output spatial extent of a plain (skip-free) convolution stack.
std::size_t output_extent(const NetworkSpec& spec, std::size_t input_extent);

// Padding and output padding that make stride-2 layers halve and double
// spatial extents exactly for kernel size k.
std::size_t same_halving_padding(std::size_t kernel);
std::size_t doubling_output_padding(std::size_t kernel);

}  // namespace sargan
