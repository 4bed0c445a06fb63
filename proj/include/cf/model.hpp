#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cf/ops.hpp"
#include "cf/rng.hpp"
#include "cf/tensor.hpp"

namespace cf {

enum class Mode { train, eval };

// The two independently optimized parameter groups: the generator group is the
// backbone plus the task head; the discriminator group is the descriptor head
// that scores backbone features.
enum class Group { generator, discriminator };

enum class LayerKind { dense, conv, relu, flatten, dropout };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0, out = 0;                    // dense
  std::size_t in_ch = 0, out_ch = 0, ksize = 0;   // conv
  std::size_t stride = 1, pad = 0;                // conv
  double rate = 0.0;                              // dropout
  int init_seed_offset = -1;                      // -1: use position order

  static LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    return s;
  }
  static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t ksize,
                        std::size_t stride = 1, std::size_t pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.ksize = ksize;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }
  static LayerSpec dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
  }

  std::string describe() const {
    switch (kind) {
      case LayerKind::dense:
        return "dense(" + std::to_string(in) + "->" + std::to_string(out) + ")";
      case LayerKind::conv:
        return "conv(" + std::to_string(in_ch) + "->" + std::to_string(out_ch) + ", k" +
               std::to_string(ksize) + ", s" + std::to_string(stride) + ", p" +
               std::to_string(pad) + ")";
      case LayerKind::relu:
        return "relu";
      case LayerKind::flatten:
        return "flatten";
      case LayerKind::dropout:
        return "dropout(" + std::to_string(rate) + ")";
    }
    return "?";
  }
};

// One learnable tensor plus its gradient accumulator and optimizer moments.
// last_tape_id/last_node remember where the value was watched during the most
// recent tracked pass so gradients can be routed back after backward(). The
// tape is identified by generation id, not address: a fresh tape may reuse the
// memory of a dead one.
struct ParamState {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  std::uint64_t last_tape_id = 0;
  int last_node = -1;
};

struct ModelConfig {
  std::vector<LayerSpec> backbone;
  std::vector<LayerSpec> task_head;
  std::vector<LayerSpec> desc_head;
};

class Model {
 public:
  struct Activations {
    Tensor features;
    Tensor logits;
  };

  Model(const ModelConfig& config, std::uint64_t init_seed) {
    int position = 0;
    build_stack(backbone_, config.backbone, "backbone", init_seed, position);
    build_stack(task_, config.task_head, "task_head", init_seed, position);
    build_stack(desc_, config.desc_head, "desc_head", init_seed, position);
    check_static_widths();
  }

  // Runs backbone then task head. When `tape` is given, every generator-group
  // parameter is watched on it so the caller can route gradients back; the
  // returned features stay tracked for any extra loss terms. `dropout_rng` is
  // only consumed by dropout layers in train mode.
  Activations forward(const Tensor& x, Mode mode, Rng* dropout_rng = nullptr,
                      Tape* tape = nullptr) {
    Activations acts;
    acts.features = run_stack(backbone_, x, mode, dropout_rng, tape);
    acts.logits = run_stack(task_, acts.features, mode, dropout_rng, tape);
    return acts;
  }

  // Scores features with the descriptor head. With a tape, descriptor
  // parameters are watched (descriptor training); without one they act as
  // frozen constants, so gradients flow only through `features` if tracked.
  Tensor discriminate(const Tensor& features, Tape* tape = nullptr) {
    return run_stack(desc_, features, Mode::eval, nullptr, tape);
  }

  std::vector<ParamState*> params(Group g) {
    std::vector<ParamState*> out;
    auto collect = [&](std::vector<Layer>& stack) {
      for (Layer& l : stack) {
        if (l.weight.value.defined()) out.push_back(&l.weight);
        if (l.bias.value.defined()) out.push_back(&l.bias);
      }
    };
    if (g == Group::generator) {
      collect(backbone_);
      collect(task_);
    } else {
      collect(desc_);
    }
    return out;
  }

  std::vector<const ParamState*> params(Group g) const {
    std::vector<const ParamState*> out;
    for (ParamState* p : const_cast<Model*>(this)->params(g)) out.push_back(p);
    return out;
  }

  void zero_grads(Group g) {
    for (ParamState* p : params(g)) p->grad = Tensor::zeros(p->value.shape);
  }

  // Adds the tape's gradients for the group into the parameters' accumulators.
  // The parameters must have been watched on exactly this tape.
  void accumulate_grads(const Tape& tape, Group g) {
    for (ParamState* p : params(g)) {
      if (p->last_tape_id != tape.id() || p->last_node < 0) {
        throw ContractError("parameter " + p->name + " was not watched on this tape");
      }
      const Tensor* grad = tape.grad_if(p->last_node);
      if (!grad) continue;  // unreachable from the loss: gradient is zero
      if (!p->grad.defined()) p->grad = Tensor::zeros(p->value.shape);
      for (std::size_t i = 0; i < p->grad.data.size(); ++i) p->grad.data[i] += grad->data[i];
    }
  }

  std::size_t param_count(Group g) const {
    std::size_t n = 0;
    for (const ParamState* p : params(g)) n += p->value.size();
    return n;
  }

  // Static output width of the backbone, 0 when it cannot be derived without
  // an input shape (conv/flatten endings).
  std::size_t feature_width() const {
    std::size_t width = 0;
    for (const Layer& l : backbone_) {
      switch (l.spec.kind) {
        case LayerKind::dense:
          width = l.spec.out;
          break;
        case LayerKind::conv:
        case LayerKind::flatten:
          width = 0;
          break;
        default:
          break;
      }
    }
    return width;
  }

 private:
  struct Layer {
    LayerSpec spec;
    std::string label;
    ParamState weight;
    ParamState bias;
  };

  std::vector<Layer> backbone_, task_, desc_;

  static void build_stack(std::vector<Layer>& stack, const std::vector<LayerSpec>& specs,
                          const std::string& stack_name, std::uint64_t init_seed, int& position) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const LayerSpec& spec = specs[i];
      Layer layer;
      layer.spec = spec;
      layer.label = stack_name + " layer " + std::to_string(i) + " (" + spec.describe() + ")";
      if (spec.kind == LayerKind::dropout && (spec.rate < 0.0 || spec.rate >= 1.0)) {
        throw ConfigError(layer.label + ": dropout rate must be in [0, 1)");
      }
      if (spec.kind == LayerKind::dense || spec.kind == LayerKind::conv) {
        const int offset = spec.init_seed_offset >= 0 ? spec.init_seed_offset : position;
        Rng rng(mix_seed(init_seed, mix_seed(streams::init, static_cast<std::uint64_t>(offset))));
        if (spec.kind == LayerKind::dense) {
          if (spec.in == 0 || spec.out == 0) {
            throw ConfigError(layer.label + ": dense extents must be positive");
          }
          const double s = std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
          Tensor w = Tensor::zeros({spec.in, spec.out});
          for (double& v : w.data) v = rng.uniform(-s, s);
          layer.weight = ParamState{layer.label + ".weight", std::move(w), {}, {}, {}, 0, -1};
          layer.bias = ParamState{layer.label + ".bias", Tensor::zeros({spec.out}), {}, {}, {},
                                  0, -1};
        } else {
          if (spec.in_ch == 0 || spec.out_ch == 0 || spec.ksize == 0 || spec.stride == 0) {
            throw ConfigError(layer.label + ": conv extents must be positive");
          }
          const std::size_t fan_in = spec.in_ch * spec.ksize * spec.ksize;
          const std::size_t fan_out = spec.out_ch * spec.ksize * spec.ksize;
          const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
          Tensor k = Tensor::zeros({spec.out_ch, spec.in_ch, spec.ksize, spec.ksize});
          for (double& v : k.data) v = rng.uniform(-s, s);
          layer.weight = ParamState{layer.label + ".weight", std::move(k), {}, {}, {}, 0, -1};
          layer.bias = ParamState{layer.label + ".bias", Tensor::zeros({spec.out_ch}), {}, {}, {},
                                  0, -1};
        }
      }
      stack.push_back(std::move(layer));
      ++position;
    }
  }

  // Chains dense widths wherever they are statically known; conv and flatten
  // make the running width unknown until a real input arrives.
  void check_static_widths() const {
    std::size_t width = 0;
    const Layer* source = nullptr;
    auto walk = [&](const std::vector<Layer>& stack) {
      for (const Layer& l : stack) {
        switch (l.spec.kind) {
          case LayerKind::dense:
            if (width != 0 && l.spec.in != width) {
              throw ConfigError(l.label + " expects width " + std::to_string(l.spec.in) +
                                " but " + (source ? source->label : std::string("input")) +
                                " produces " + std::to_string(width));
            }
            width = l.spec.out;
            source = &l;
            break;
          case LayerKind::conv:
          case LayerKind::flatten:
            width = 0;
            source = &l;
            break;
          default:
            break;
        }
      }
    };
    walk(backbone_);
    const std::size_t feature = width;
    const Layer* feature_source = source;
    walk(task_);
    width = feature;
    source = feature_source;
    walk(desc_);
  }

  // Parameter handle on the given tape. A parameter is watched at most once
  // per tape; later uses share the node so all paths accumulate together.
  Tensor use(ParamState& p, Tape* tape) {
    if (!tape) return Tensor(p.value.shape, p.value.data);
    if (p.last_tape_id == tape->id() && p.last_node >= 0) {
      Tensor handle(p.value.shape, p.value.data);
      handle.tape = tape;
      handle.node = p.last_node;
      return handle;
    }
    Tensor handle = tape->watch(p.value);
    p.last_tape_id = tape->id();
    p.last_node = handle.node;
    return handle;
  }

  Tensor run_stack(std::vector<Layer>& stack, Tensor x, Mode mode, Rng* dropout_rng, Tape* tape) {
    for (Layer& l : stack) {
      switch (l.spec.kind) {
        case LayerKind::dense: {
          if (x.rank() != 2) {
            throw ShapeError(l.label + ": input must be rank 2, got " + shape_str(x.shape));
          }
          if (x.shape[1] != l.spec.in) {
            throw ShapeError(l.label + ": input width " + std::to_string(x.shape[1]) +
                             " does not match " + std::to_string(l.spec.in));
          }
          x = bias_add(matmul(x, use(l.weight, tape)), use(l.bias, tape));
          break;
        }
        case LayerKind::conv: {
          if (x.rank() != 4) {
            throw ShapeError(l.label + ": input must be rank 4, got " + shape_str(x.shape));
          }
          if (x.shape[1] != l.spec.in_ch) {
            throw ShapeError(l.label + ": input channels " + std::to_string(x.shape[1]) +
                             " do not match " + std::to_string(l.spec.in_ch));
          }
          x = bias_add(conv2d(x, use(l.weight, tape), l.spec.stride, l.spec.pad),
                       use(l.bias, tape));
          break;
        }
        case LayerKind::relu:
          x = relu(x);
          break;
        case LayerKind::flatten:
          x = flatten_rows(x);
          break;
        case LayerKind::dropout: {
          if (mode != Mode::train || l.spec.rate == 0.0) break;
          if (!dropout_rng) {
            throw ContractError(l.label + ": train-mode forward needs a dropout rng");
          }
          const double keep = 1.0 - l.spec.rate;
          Tensor mask = Tensor::zeros(x.shape);
          for (double& v : mask.data) v = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
          x = mul(x, mask);
          break;
        }
      }
    }
    return x;
  }
};

inline Model build_model(const ModelConfig& config, std::uint64_t init_seed) {
  return Model(config, init_seed);
}

// The reference architecture: a dense backbone ending in a feature layer of
// width 64, a linear task head, and a two-layer descriptor head scoring each
// feature vector with one real number.
inline ModelConfig default_model_config(std::size_t input_dim, std::size_t classes,
                                        std::size_t feature_width = 64,
                                        std::size_t desc_channel = 64,
                                        double task_dropout = 0.0) {
  ModelConfig cfg;
  cfg.backbone = {LayerSpec::dense(input_dim, 128), LayerSpec::relu(),
                  LayerSpec::dense(128, feature_width), LayerSpec::relu()};
  if (task_dropout > 0.0) cfg.task_head.push_back(LayerSpec::dropout(task_dropout));
  cfg.task_head.push_back(LayerSpec::dense(feature_width, classes));
  cfg.desc_head = {LayerSpec::dense(feature_width, desc_channel), LayerSpec::relu(),
                   LayerSpec::dense(desc_channel, 1)};
  return cfg;
}

}  // namespace cf
