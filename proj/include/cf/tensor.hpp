#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cf/errors.hpp"

namespace cf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (const std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class Tape;

// Dense row-major tensor of doubles. A tensor is either free-standing
// (tape == nullptr) or tracked as node `node` on a tape; ops in ops.hpp
// propagate tracking automatically. Rank 0 is not used: scalars are shape {1}.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;

  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
    for (const std::size_t e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("shape " + shape_str(shape) + " wants " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
  }

  static Tensor zeros(Shape s) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape s, double v) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool tracked() const { return tape != nullptr; }
  bool is_scalar() const { return data.size() == 1; }
  bool defined() const { return !shape.empty(); }

  double item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  // Row-major accessors for the common ranks.
  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
};

// Value copy with tracking stripped; gradients never flow through the result.
inline Tensor detach(const Tensor& t) { return Tensor(t.shape, t.data); }

// Define-by-run reverse-mode tape. Every tracked op appends one node holding a
// backward closure; backward() walks nodes newest-to-oldest exactly once,
// accumulating into per-node gradient slots. Tapes are cheap and meant to be
// rebuilt for every forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  // Process-unique generation number. Two tapes never share an id even if one
  // is constructed at the address of a destroyed one, so cached node ids can
  // be validated against the tape they came from.
  std::uint64_t id() const { return id_; }

  // Registers `value` as a leaf and returns the tracked handle.
  Tensor watch(const Tensor& value) {
    Tensor out(value.shape, value.data);
    out.tape = this;
    out.node = emit({}, value.shape, nullptr);
    return out;
  }

  // Appends a node; `inputs` may contain -1 for untracked operands (the
  // backward closure is responsible for skipping those).
  int emit(std::vector<int> inputs, Shape out_shape, BackwardFn backward) {
    for (const int id : inputs) {
      if (id >= static_cast<int>(nodes_.size())) {
        throw ContractError("tape node input id out of range");
      }
    }
    nodes_.push_back(Node{std::move(inputs), std::move(out_shape), std::move(backward)});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(int node, const Tensor& delta) {
    if (node < 0 || node >= static_cast<int>(nodes_.size())) {
      throw ContractError("accumulate: node id out of range");
    }
    Tensor& slot = grads_[static_cast<std::size_t>(node)];
    if (!slot.defined()) {
      slot = Tensor(nodes_[static_cast<std::size_t>(node)].shape, delta.data);
      if (slot.shape != delta.shape) {
        throw ShapeError("gradient shape " + shape_str(delta.shape) + " does not match node shape " +
                         shape_str(slot.shape));
      }
      return;
    }
    if (slot.shape != delta.shape) {
      throw ShapeError("gradient shape " + shape_str(delta.shape) + " does not match node shape " +
                       shape_str(slot.shape));
    }
    for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += delta.data[i];
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse insertion order.
  // Nodes the loss does not reach keep undefined gradient slots, so their
  // closures never run; grad() reports those as zeros.
  void backward(const Tensor& loss) {
    if (loss.tape != this || loss.node < 0) {
      throw ContractError("backward: loss is not tracked on this tape");
    }
    if (!loss.is_scalar()) {
      throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape));
    }
    for (Tensor& g : grads_) g = Tensor();
    accumulate(loss.node, Tensor::scalar(1.0));
    for (int i = loss.node; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      const Tensor& g = grads_[static_cast<std::size_t>(i)];
      if (n.backward && g.defined()) n.backward(*this, g);
    }
  }

  // Gradient of the last backward() with respect to a tracked tensor.
  Tensor grad(const Tensor& t) const {
    if (t.tape != this || t.node < 0) {
      throw ContractError("grad: tensor is not tracked on this tape");
    }
    const Tensor& slot = grads_[static_cast<std::size_t>(t.node)];
    if (!slot.defined()) return Tensor::zeros(t.shape);
    return Tensor(slot.shape, slot.data);
  }

  const Tensor* grad_if(int node) const {
    if (node < 0 || node >= static_cast<int>(nodes_.size())) return nullptr;
    const Tensor& slot = grads_[static_cast<std::size_t>(node)];
    return slot.defined() ? &slot : nullptr;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> inputs;
    Shape shape;
    BackwardFn backward;
  };

  static std::uint64_t next_id() {
    static std::uint64_t counter = 0;
    return ++counter;
  }

  std::uint64_t id_ = next_id();
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace cf
