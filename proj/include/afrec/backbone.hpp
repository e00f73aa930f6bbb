#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "afrec/tensor.hpp"

namespace afrec {

struct ConvSpec {
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
  int pad;
};

// weight is out_channels x (in_channels * kernel * kernel), bias has out_channels entries.
struct ConvParams {
  Matrix weight;
  Vector bias;
};

enum class BackboneKind {
  Desk,      // four strided convolutions, 64x64 -> 7x7
  Micro,     // two strided convolutions for gradient checks
  ResNet18,  // residual network, 224x224 -> 7x7
};

const char* to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& name);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::Desk;
  int image_size = 64;
  int dim = 64;
  int grid = 7;
};

struct BackboneParams {
  std::vector<ConvParams> convs;
};

// Per-layer intermediate values kept for backpropagation.
struct LayerTrace {
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  Matrix columns;          // convolution im2col
  Tensor3 output;          // post-activation output (relu, residual)
  std::vector<int> argmax; // max-pool source positions
  std::vector<LayerTrace> inner;
};

struct BackboneTrace {
  std::vector<LayerTrace> layers;
};

// Sequential convolutional feature extractor. Holds structure only; parameters
// are passed explicitly so a single backbone can serve concurrent readers.
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& config);

  const BackboneConfig& config() const { return config_; }
  const std::vector<ConvSpec>& convs() const { return convs_; }

  // Uniform fan-in initialisation, bias zero.
  BackboneParams init(std::mt19937_64& rng) const;
  BackboneParams zeros() const;

  // D x grid x grid feature map. Throws ShapeMismatch on a wrong image size.
  FeatureMap forward(const BackboneParams& params, const Image& image, BackboneTrace* trace = nullptr) const;

  // Accumulates parameter gradients for dL/dF = grad_map into grads.
  void backward(const BackboneParams& params, const BackboneTrace& trace, const FeatureMap& grad_map,
                BackboneParams& grads) const;

 private:
  struct Conv { std::size_t index; };
  struct Relu {};
  struct MaxPool { int kernel, stride, pad; };
  struct AdaptivePool { int grid; };
  struct Residual { std::size_t conv1, conv2; std::optional<std::size_t> shortcut; };
  using Op = std::variant<Conv, Relu, MaxPool, AdaptivePool, Residual>;

  std::size_t add_conv(int in, int out, int kernel, int stride, int pad);

  BackboneConfig config_;
  std::vector<ConvSpec> convs_;
  std::vector<Op> ops_;
};

// Convolution primitives, exposed for testing.
Tensor3 conv_forward(const ConvSpec& spec, const ConvParams& params, const Tensor3& input, Matrix* columns = nullptr);
Tensor3 conv_backward(const ConvSpec& spec, const ConvParams& params, const Matrix& columns, int in_height,
                      int in_width, const Tensor3& grad_output, ConvParams& grads);

// Mean over the grid positions of each channel.
Vector global_average_pool(const FeatureMap& map);

struct CategoryHead {
  Matrix weight;  // |C| x D
  Vector bias;    // |C|
};

Vector category_logits(const Vector& embedding, const CategoryHead& head);

struct LabelledLogits {
  Vector logits;
  int target;
};

// Sum (or mean) over the batch of -log softmax(logits)[target].
double category_loss(std::span<const LabelledLogits> batch, bool mean = false);

}  // namespace afrec
