#include "afrec/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "afrec/errors.hpp"
#include "afrec/math.hpp"

namespace afrec {

const char* to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Desk: return "desk";
    case BackboneKind::Micro: return "micro";
    case BackboneKind::ResNet18: return "resnet18";
  }
  return "desk";
}

BackboneKind backbone_kind_from_string(const std::string& name) {
  if (name == "desk") return BackboneKind::Desk;
  if (name == "micro") return BackboneKind::Micro;
  if (name == "resnet18") return BackboneKind::ResNet18;
  throw ConfigInvalid("unknown backbone '" + name + "'");
}

namespace {

int conv_extent(int size, int kernel, int stride, int pad) { return (size + 2 * pad - kernel) / stride + 1; }

void im2col(const Tensor3& in, const ConvSpec& spec, int out_h, int out_w, Matrix& columns) {
  const int k = spec.kernel;
  columns.setZero(static_cast<Eigen::Index>(in.channels) * k * k, static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < in.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (c * k + ki) * k + kj;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * spec.stride + ki - spec.pad;
          if (iy < 0 || iy >= in.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * spec.stride + kj - spec.pad;
            if (ix < 0 || ix >= in.width) continue;
            columns(row, oy * out_w + ox) = in.data(c, iy * in.width + ix);
          }
        }
      }
    }
  }
}

void col2im(const Matrix& grad_columns, const ConvSpec& spec, int out_h, int out_w, Tensor3& grad_in) {
  const int k = spec.kernel;
  for (int c = 0; c < grad_in.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (c * k + ki) * k + kj;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * spec.stride + ki - spec.pad;
          if (iy < 0 || iy >= grad_in.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * spec.stride + kj - spec.pad;
            if (ix < 0 || ix >= grad_in.width) continue;
            grad_in.data(c, iy * grad_in.width + ix) += grad_columns(row, oy * out_w + ox);
          }
        }
      }
    }
  }
}

void relu_inplace(Tensor3& t) { t.data = t.data.cwiseMax(0.0); }

void relu_mask(const Tensor3& output, Tensor3& grad) {
  grad.data = (output.data.array() > 0.0).select(grad.data, 0.0);
}

struct Bin {
  int begin;
  int end;
};

Bin adaptive_bin(int i, int in, int out) {
  return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

Tensor3 adaptive_pool_forward(const Tensor3& in, int grid) {
  Tensor3 out(in.channels, grid, grid);
  for (int oy = 0; oy < grid; ++oy) {
    const Bin by = adaptive_bin(oy, in.height, grid);
    for (int ox = 0; ox < grid; ++ox) {
      const Bin bx = adaptive_bin(ox, in.width, grid);
      const double count = static_cast<double>((by.end - by.begin) * (bx.end - bx.begin));
      for (int y = by.begin; y < by.end; ++y) {
        for (int x = bx.begin; x < bx.end; ++x) out.data.col(oy * grid + ox) += in.data.col(y * in.width + x);
      }
      out.data.col(oy * grid + ox) /= count;
    }
  }
  return out;
}

Tensor3 adaptive_pool_backward(const Tensor3& grad_out, int in_c, int in_h, int in_w) {
  const int grid = grad_out.height;
  Tensor3 grad_in(in_c, in_h, in_w);
  for (int oy = 0; oy < grid; ++oy) {
    const Bin by = adaptive_bin(oy, in_h, grid);
    for (int ox = 0; ox < grid; ++ox) {
      const Bin bx = adaptive_bin(ox, in_w, grid);
      const double count = static_cast<double>((by.end - by.begin) * (bx.end - bx.begin));
      for (int y = by.begin; y < by.end; ++y) {
        for (int x = bx.begin; x < bx.end; ++x) {
          grad_in.data.col(y * in_w + x) += grad_out.data.col(oy * grid + ox) / count;
        }
      }
    }
  }
  return grad_in;
}

Tensor3 max_pool_forward(const Tensor3& in, int kernel, int stride, int pad, std::vector<int>& argmax) {
  const int out_h = conv_extent(in.height, kernel, stride, pad);
  const int out_w = conv_extent(in.width, kernel, stride, pad);
  Tensor3 out(in.channels, out_h, out_w);
  argmax.assign(static_cast<std::size_t>(in.channels) * out_h * out_w, -1);
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_pos = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= in.height) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const int ix = ox * stride + kj - pad;
            if (ix < 0 || ix >= in.width) continue;
            const double v = in.data(c, iy * in.width + ix);
            if (v > best) {
              best = v;
              best_pos = iy * in.width + ix;
            }
          }
        }
        out.data(c, oy * out_w + ox) = best;
        argmax[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox] = best_pos;
      }
    }
  }
  return out;
}

}  // namespace

Tensor3 conv_forward(const ConvSpec& spec, const ConvParams& params, const Tensor3& input, Matrix* columns) {
  if (input.channels != spec.in_channels) throw ShapeMismatch("convolution input channel mismatch");
  const int out_h = conv_extent(input.height, spec.kernel, spec.stride, spec.pad);
  const int out_w = conv_extent(input.width, spec.kernel, spec.stride, spec.pad);
  if (out_h <= 0 || out_w <= 0) throw ShapeMismatch("convolution input too small");
  Matrix local;
  Matrix& cols = columns ? *columns : local;
  im2col(input, spec, out_h, out_w, cols);
  Tensor3 out;
  out.channels = spec.out_channels;
  out.height = out_h;
  out.width = out_w;
  out.data.noalias() = params.weight * cols;
  out.data.colwise() += params.bias;
  return out;
}

Tensor3 conv_backward(const ConvSpec& spec, const ConvParams& params, const Matrix& columns, int in_height,
                      int in_width, const Tensor3& grad_output, ConvParams& grads) {
  grads.weight.noalias() += grad_output.data * columns.transpose();
  grads.bias += grad_output.data.rowwise().sum();
  const Matrix grad_columns = params.weight.transpose() * grad_output.data;
  Tensor3 grad_in(spec.in_channels, in_height, in_width);
  col2im(grad_columns, spec, grad_output.height, grad_output.width, grad_in);
  return grad_in;
}

std::size_t Backbone::add_conv(int in, int out, int kernel, int stride, int pad) {
  convs_.push_back({in, out, kernel, stride, pad});
  return convs_.size() - 1;
}

Backbone::Backbone(const BackboneConfig& config) : config_(config) {
  if (config.dim < 1 || config.grid < 1 || config.image_size < 1) throw ConfigInvalid("backbone sizes must be positive");
  int size = config.image_size;
  int channels = 3;
  auto conv = [&](int out, int kernel, int stride, int pad) {
    ops_.push_back(Conv{add_conv(channels, out, kernel, stride, pad)});
    size = conv_extent(size, kernel, stride, pad);
    channels = out;
    if (size < 1) throw ConfigInvalid("image_size too small for backbone");
  };
  switch (config.kind) {
    case BackboneKind::Desk: {
      const int d = config.dim;
      const int w1 = std::max(4, d / 8), w2 = std::max(4, d / 4), w3 = std::max(4, d / 2);
      conv(w1, 4, 4, 0);
      ops_.push_back(Relu{});
      conv(w2, 3, 2, 1);
      ops_.push_back(Relu{});
      conv(w3, 2, 1, 0);
      ops_.push_back(Relu{});
      conv(d, 1, 1, 0);
      break;
    }
    case BackboneKind::Micro: {
      conv(std::max(2, config.dim / 2), 2, 2, 0);
      ops_.push_back(Relu{});
      conv(config.dim, 2, 2, 0);
      break;
    }
    case BackboneKind::ResNet18: {
      const int d = config.dim;
      const int widths[4] = {std::max(1, d / 8), std::max(1, d / 4), std::max(1, d / 2), d};
      conv(widths[0], 7, 2, 3);
      ops_.push_back(Relu{});
      ops_.push_back(MaxPool{3, 2, 1});
      size = conv_extent(size, 3, 2, 1);
      for (int stage = 0; stage < 4; ++stage) {
        for (int block = 0; block < 2; ++block) {
          const int stride = (stage > 0 && block == 0) ? 2 : 1;
          const int out = widths[stage];
          Residual r{};
          r.conv1 = add_conv(channels, out, 3, stride, 1);
          r.conv2 = add_conv(out, out, 3, 1, 1);
          if (stride != 1 || channels != out) r.shortcut = add_conv(channels, out, 1, stride, 0);
          ops_.push_back(r);
          size = conv_extent(size, 3, stride, 1);
          channels = out;
        }
      }
      break;
    }
  }
  if (size != config.grid) ops_.push_back(AdaptivePool{config.grid});
}

BackboneParams Backbone::init(std::mt19937_64& rng) const {
  BackboneParams params;
  std::vector<bool> residual_tail(convs_.size(), false);
  for (const auto& op : ops_) {
    if (const auto* r = std::get_if<Residual>(&op)) residual_tail[r->conv2] = true;
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto& spec = convs_[i];
    const int fan_in = spec.in_channels * spec.kernel * spec.kernel;
    double bound = std::sqrt(6.0 / fan_in);
    if (residual_tail[i]) bound *= 0.25;
    std::uniform_real_distribution<double> u(-bound, bound);
    ConvParams p;
    p.weight = Matrix::NullaryExpr(spec.out_channels, fan_in, [&]() { return u(rng); });
    p.bias = Vector::Zero(spec.out_channels);
    params.convs.push_back(std::move(p));
  }
  return params;
}

BackboneParams Backbone::zeros() const {
  BackboneParams params;
  for (const auto& spec : convs_) {
    params.convs.push_back(
        {Matrix::Zero(spec.out_channels, spec.in_channels * spec.kernel * spec.kernel), Vector::Zero(spec.out_channels)});
  }
  return params;
}

FeatureMap Backbone::forward(const BackboneParams& params, const Image& image, BackboneTrace* trace) const {
  if (image.channels != 3 || image.height != config_.image_size || image.width != config_.image_size) {
    throw ShapeMismatch("image must be 3x" + std::to_string(config_.image_size) + "x" +
                        std::to_string(config_.image_size));
  }
  if (params.convs.size() != convs_.size()) throw ShapeMismatch("backbone parameter count mismatch");
  if (trace) trace->layers.clear();
  Tensor3 x = image;
  for (const auto& op : ops_) {
    LayerTrace layer;
    layer.in_channels = x.channels;
    layer.in_height = x.height;
    layer.in_width = x.width;
    Matrix* cols = trace ? &layer.columns : nullptr;
    if (const auto* c = std::get_if<Conv>(&op)) {
      x = conv_forward(convs_[c->index], params.convs[c->index], x, cols);
    } else if (std::holds_alternative<Relu>(op)) {
      relu_inplace(x);
      if (trace) layer.output = x;
    } else if (const auto* m = std::get_if<MaxPool>(&op)) {
      x = max_pool_forward(x, m->kernel, m->stride, m->pad, layer.argmax);
    } else if (const auto* a = std::get_if<AdaptivePool>(&op)) {
      x = adaptive_pool_forward(x, a->grid);
    } else if (const auto* r = std::get_if<Residual>(&op)) {
      LayerTrace t1, t2, ts;
      Tensor3 h = conv_forward(convs_[r->conv1], params.convs[r->conv1], x, trace ? &t1.columns : nullptr);
      relu_inplace(h);
      Tensor3 y = conv_forward(convs_[r->conv2], params.convs[r->conv2], h, trace ? &t2.columns : nullptr);
      if (r->shortcut) {
        y.data += conv_forward(convs_[*r->shortcut], params.convs[*r->shortcut], x, trace ? &ts.columns : nullptr).data;
      } else {
        y.data += x.data;
      }
      relu_inplace(y);
      if (trace) {
        t1.output = h;
        layer.inner = {std::move(t1), std::move(t2), std::move(ts)};
        layer.output = y;
      }
      x = std::move(y);
    }
    if (trace) trace->layers.push_back(std::move(layer));
  }
  return x;
}

void Backbone::backward(const BackboneParams& params, const BackboneTrace& trace, const FeatureMap& grad_map,
                        BackboneParams& grads) const {
  if (trace.layers.size() != ops_.size()) throw ShapeMismatch("backbone trace does not match network");
  Tensor3 g = grad_map;
  for (std::size_t i = ops_.size(); i-- > 0;) {
    const auto& op = ops_[i];
    const LayerTrace& layer = trace.layers[i];
    if (const auto* c = std::get_if<Conv>(&op)) {
      g = conv_backward(convs_[c->index], params.convs[c->index], layer.columns, layer.in_height, layer.in_width, g,
                        grads.convs[c->index]);
    } else if (std::holds_alternative<Relu>(op)) {
      relu_mask(layer.output, g);
    } else if (std::holds_alternative<MaxPool>(op)) {
      Tensor3 grad_in(layer.in_channels, layer.in_height, layer.in_width);
      const int positions = g.positions();
      for (int ch = 0; ch < g.channels; ++ch) {
        for (int p = 0; p < positions; ++p) {
          const int src = layer.argmax[static_cast<std::size_t>(ch) * positions + p];
          if (src >= 0) grad_in.data(ch, src) += g.data(ch, p);
        }
      }
      g = std::move(grad_in);
    } else if (std::holds_alternative<AdaptivePool>(op)) {
      g = adaptive_pool_backward(g, layer.in_channels, layer.in_height, layer.in_width);
    } else if (const auto* r = std::get_if<Residual>(&op)) {
      relu_mask(layer.output, g);
      const LayerTrace& t1 = layer.inner[0];
      const LayerTrace& t2 = layer.inner[1];
      const LayerTrace& ts = layer.inner[2];
      Tensor3 gh = conv_backward(convs_[r->conv2], params.convs[r->conv2], t2.columns, t1.output.height,
                                 t1.output.width, g, grads.convs[r->conv2]);
      relu_mask(t1.output, gh);
      Tensor3 gx = conv_backward(convs_[r->conv1], params.convs[r->conv1], t1.columns, layer.in_height,
                                 layer.in_width, gh, grads.convs[r->conv1]);
      if (r->shortcut) {
        gx.data += conv_backward(convs_[*r->shortcut], params.convs[*r->shortcut], ts.columns, layer.in_height,
                                 layer.in_width, g, grads.convs[*r->shortcut])
                       .data;
      } else {
        gx.data += g.data;
      }
      g = std::move(gx);
    }
  }
}

Vector global_average_pool(const FeatureMap& map) { return map.data.rowwise().mean(); }

Vector category_logits(const Vector& embedding, const CategoryHead& head) {
  if (head.weight.cols() != embedding.size() || head.weight.rows() != head.bias.size()) {
    throw ShapeMismatch("category head does not match embedding");
  }
  return head.weight * embedding + head.bias;
}

double category_loss(std::span<const LabelledLogits> batch, bool mean) {
  if (batch.empty()) throw EmptyBatch("category_loss needs a non-empty batch");
  double total = 0.0;
  for (const auto& item : batch) total += softmax_cross_entropy(item.logits, item.target);
  return mean ? total / static_cast<double>(batch.size()) : total;
}

}  // namespace afrec
