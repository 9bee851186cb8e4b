// Copyright 2026 The ebus-slowfast Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ebus/tensor.hpp"

namespace ebus {

/// A learnable array together with its gradient and optimizer state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;

  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Tensor<T>::zeros_like(value)),
        momentum(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Tensor<T> owned;
  const Tensor<T>* external = nullptr;  // parameter storage, not copied
  Tensor<T> grad;                       // empty until a gradient arrives
  bool requires_grad = false;
  Parameter<T>* param = nullptr;
  std::function<void(const Tensor<T>&)> backward;

  const Tensor<T>& value() const { return external ? *external : owned; }

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (grad.empty()) {
      grad = g;
      return;
    }
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  // Lazily allocates a zero gradient buffer for in-place accumulation.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value().dims());
    return grad;
  }
};

}  // namespace detail

/// Handle to a value produced by an operation. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value(); }
  const Shape& dims() const { return node_->value().dims(); }
  std::int64_t dim(std::size_t axis) const { return dims().at(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  /// Gradient accumulated by the last backward pass (empty if none reached).
  const Tensor<T>& grad() const { return node_->grad; }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Ordered record of differentiable operations. Nodes are appended as they
/// are executed, so the record is always in topological order and backward
/// simply replays it in reverse. A tape constructed with recording=false
/// keeps nothing: intermediate values are freed as soon as their Vars go out
/// of scope.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Input that never receives a gradient.
  Var<T> constant(Tensor<T> value) const {
    auto node = std::make_shared<detail::Node<T>>();
    node->owned = std::move(value);
    return Var<T>(std::move(node));
  }

  /// Free leaf whose gradient can be read from the returned Var.
  Var<T> leaf(Tensor<T> value) {
    auto node = std::make_shared<detail::Node<T>>();
    node->owned = std::move(value);
    node->requires_grad = recording_;
    if (recording_) nodes_.push_back(node);
    return Var<T>(std::move(node));
  }

  /// Leaf bound to a Parameter; backward adds into param.grad.
  Var<T> param(Parameter<T>& p) {
    auto node = std::make_shared<detail::Node<T>>();
    node->external = &p.value;
    node->requires_grad = recording_;
    node->param = &p;
    if (recording_) nodes_.push_back(node);
    return Var<T>(std::move(node));
  }

  /// Registers the result of an operation. `inputs` decide whether the result
  /// requires a gradient; `backward` receives dLoss/dOutput and must push
  /// gradients into the inputs via detail::Node::accumulate.
  Var<T> record(Tensor<T> value,
                std::initializer_list<const Var<T>*> inputs,
                std::function<void(const Tensor<T>&)> backward) {
    auto node = std::make_shared<detail::Node<T>>();
    node->owned = std::move(value);
    bool needs = false;
    for (const Var<T>* in : inputs) needs = needs || (in && in->requires_grad());
    if (needs && recording_) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      nodes_.push_back(node);
    }
    return Var<T>(std::move(node));
  }

  /// Reverse sweep from a scalar loss. Parameter gradients accumulate, so
  /// callers zero them between steps.
  void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1) {
      throw ShapeError("numel", "backward requires a scalar loss, got dims " +
                                    shape_str(loss.dims()));
    }
    if (!loss.requires_grad()) {
      throw Error(ErrorCode::kValue,
                  "backward called on a loss that was not recorded");
    }
    loss.node()->grad = Tensor<T>(loss.dims(), T{1});
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& node = **it;
      if (node.grad.empty()) continue;
      if (node.backward) node.backward(node.grad);
      if (node.param) {
        auto dst = node.param->grad.data();
        auto src = node.grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }

  /// Drops all recorded nodes (and the activations they hold).
  void clear() { nodes_.clear(); }

 private:
  bool recording_;
  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
};

}  // namespace ebus
