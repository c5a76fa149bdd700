#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "motif/common.hpp"
#include "motif/rng.hpp"

namespace motif {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_numel(const Shape& s) {
  Eigen::Index n = 1;
  for (auto d : s) n *= d;
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

template <typename Scalar>
using ArrX = Eigen::ArrayX<Scalar>;

template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MapMat = Eigen::Map<MatRM<Scalar>>;

template <typename Scalar>
using CMapMat = Eigen::Map<const MatRM<Scalar>>;

template <typename Scalar>
struct TensorNode {
  Shape shape;
  ArrX<Scalar> value;
  ArrX<Scalar> grad;  // empty until first accumulation
  bool requires_grad = false;
};

// Dense tensor handle with shared storage. Rank 0 (empty shape) is a scalar.
// Data is contiguous row-major; copies of the handle alias the same buffer.
template <typename Scalar>
class Tensor {
 public:
  using Node = TensorNode<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->value = ArrX<Scalar>::Zero(shape_numel(node_->shape));
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor constant(Shape s, Scalar v) {
    Tensor t(std::move(s));
    t.values().setConstant(v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant({}, v); }
  static Tensor from(Shape s, std::vector<Scalar> vals) {
    Tensor t(std::move(s));
    require(static_cast<Eigen::Index>(vals.size()) == t.numel(),
            "tensor init: " + std::to_string(vals.size()) + " values for shape " +
                shape_str(t.shape()));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t.values()[i] = vals[i];
    return t;
  }
  static Tensor randn(Shape s, RngStream& rng, Scalar stddev = Scalar(1)) {
    Tensor t(std::move(s));
    for (Eigen::Index i = 0; i < t.numel(); ++i)
      t.values()[i] = static_cast<Scalar>(rng.normal()) * stddev;
    return t;
  }
  static Tensor uniform(Shape s, RngStream& rng, Scalar lo, Scalar hi) {
    Tensor t(std::move(s));
    for (Eigen::Index i = 0; i < t.numel(); ++i)
      t.values()[i] = lo + static_cast<Scalar>(rng.uniform()) * (hi - lo);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  Eigen::Index dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Eigen::Index numel() const { return node_->value.size(); }

  ArrX<Scalar>& values() { return node_->value; }
  const ArrX<Scalar>& values() const { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }

  Scalar item() const {
    require(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return node_->grad.size() > 0; }
  // Gradient buffer, allocated as zeros on first access.
  ArrX<Scalar>& grad() {
    if (!has_grad()) node_->grad = ArrX<Scalar>::Zero(node_->value.size());
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) node_->grad.setZero();
  }

  Tensor clone() const {
    Tensor t(shape());
    t.values() = values();
    t.set_requires_grad(requires_grad());
    return t;
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

template <typename Scalar>
inline ArrX<Scalar>& ensure_grad(const std::shared_ptr<TensorNode<Scalar>>& n) {
  if (n->grad.size() == 0) n->grad = ArrX<Scalar>::Zero(n->value.size());
  return n->grad;
}

// Reverse-mode tape. Construction activates it for the current thread; ops
// executed while it is alive append their backward rules in execution order,
// which is a valid topological order by construction. backward() seeds the
// scalar loss with 1 and replays the rules in reverse; repeated calls
// accumulate into leaf gradients.
template <typename Scalar>
class Tape {
 public:
  Tape() { stack().push_back(this); }
  ~Tape() { stack().pop_back(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() {
    auto& s = stack();
    return s.empty() ? nullptr : s.back();
  }

  void record(std::shared_ptr<TensorNode<Scalar>> output, std::function<void()> fn) {
    ops_.push_back(Entry{std::move(output), std::move(fn)});
  }
  std::size_t size() const { return ops_.size(); }

  void backward(const Tensor<Scalar>& loss) {
    require(loss.numel() == 1,
            "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    // Op outputs are intermediates of this tape; their grads are per-pass
    // scratch. Only leaves (which are never op outputs) accumulate across
    // repeated backward calls.
    for (auto& e : ops_)
      if (e.output->grad.size() > 0) e.output->grad.setZero();
    ensure_grad(loss.node())[0] += Scalar(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->fn();
  }

 private:
  struct Entry {
    std::shared_ptr<TensorNode<Scalar>> output;
    std::function<void()> fn;
  };
  static std::vector<Tape*>& stack() {
    thread_local std::vector<Tape*> s;
    return s;
  }
  std::vector<Entry> ops_;
};

// True when an op executed right now should record a backward rule.
template <typename Scalar>
inline bool recording(bool any_input_requires_grad) {
  return any_input_requires_grad && Tape<Scalar>::current() != nullptr;
}

}  // namespace motif
