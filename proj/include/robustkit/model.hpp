// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;   // dense: in features, conv2d: in channels
  std::size_t out = 0;  // dense: out features, conv2d: out channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out}; }
  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                          std::size_t pad = 0) {
    return {LayerKind::conv2d, in, out, kernel, stride, pad};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec maxpool2d() { return {LayerKind::maxpool2d}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
  bool operator==(const LayerSpec&) const = default;
};

std::string layer_name(LayerKind kind);

/// Layer list plus the per-sample input shape. Construction validates that
/// consecutive layers are shape compatible.
class Architecture {
 public:
  Architecture() = default;
  Architecture(Shape input, std::vector<LayerSpec> layers);

  const Shape& input_shape() const noexcept { return input_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// Per-sample output shape of layer i (activation_shape(size()) is the logits).
  const Shape& activation_shape(std::size_t i) const { return shapes_.at(i); }
  std::size_t num_classes() const { return shapes_.back().at(0); }

  /// Text descriptor, e.g. "input=1x16x16;conv2d:1:16:3:1:1;relu;...".
  std::string describe() const;
  static Architecture parse(const std::string& text);

  /// flatten -> dense(hidden) -> relu -> dense(K)
  static Architecture mlp(const Shape& input, std::size_t num_classes, std::size_t hidden = 128);
  /// conv3x3x16 -> relu -> pool -> conv3x3x32 -> relu -> pool -> flatten -> dense(K)
  static Architecture tiny_cnn(const Shape& input, std::size_t num_classes);

  bool operator==(const Architecture& o) const { return input_ == o.input_ && layers_ == o.layers_; }

 private:
  Shape input_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
};

/// Inputs seen by each layer during one forward pass.
template <class T>
struct BasicTrace {
  std::vector<BasicTensor<T>> inputs;
  bool empty() const { return inputs.empty(); }
};

template <class T>
struct BasicGradients {
  std::vector<BasicTensor<T>> params;  // empty when not requested
  BasicTensor<T> input;                // empty when not requested
};

struct BackwardOptions {
  bool param_grads = true;
  bool input_grad = true;
};

/// Ordered differentiable layers with parameters. Dense weights are
/// [out, in]; conv weights [out, in, k, k]; each followed by its bias.
template <class T>
class BasicStack {
 public:
  using tensor_type = BasicTensor<T>;

  BasicStack() = default;
  /// Zero-initialized parameters.
  explicit BasicStack(Architecture arch);
  /// Kaiming-uniform (fan-in) weights, zero biases.
  static BasicStack kaiming(Architecture arch, Rng& rng);

  const Architecture& architecture() const noexcept { return arch_; }
  std::vector<tensor_type>& params() noexcept { return params_; }
  const std::vector<tensor_type>& params() const noexcept { return params_; }
  std::size_t num_params() const;
  std::string param_name(std::size_t i) const;

  /// Stateless forward. When `trace` is non-null it receives the inputs
  /// needed by backward.
  tensor_type forward(const tensor_type& x, BasicTrace<T>* trace) const;
  /// Gradients of sum(upstream * logits) for the pass recorded in `trace`.
  BasicGradients<T> backward(const BasicTrace<T>& trace, const tensor_type& upstream,
                             BackwardOptions opts = {}) const;

  /// Convenience pair holding one trace inside the stack.
  tensor_type forward_cached(const tensor_type& x, bool train_mode);
  BasicGradients<T> backward_cached(const tensor_type& upstream);

  template <class U>
  BasicStack<U> cast() const {
    BasicStack<U> out(arch_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = params_[i].template cast<U>();
    return out;
  }

 private:
  Architecture arch_;
  std::vector<tensor_type> params_;
  std::vector<std::size_t> param_offset_;  // first param index per layer
  BasicTrace<T> trace_;
};

using LayerStack = BasicStack<float>;
using LayerStackD = BasicStack<double>;

template <class T>
struct BasicOptimizerState {
  std::vector<BasicTensor<T>> velocity;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr = 0.1;

  BasicOptimizerState() = default;
  BasicOptimizerState(const BasicStack<T>& stack, double momentum, double weight_decay, double lr);
};

using OptimizerState = BasicOptimizerState<float>;

/// v <- mu*v + (g + wd*theta); theta <- theta - lr*v.
template <class T>
void sgd_step(BasicStack<T>& stack, BasicOptimizerState<T>& state, const std::vector<BasicTensor<T>>& grads);

/// lr0 * (1 + cos(pi * epoch / total)) / 2
double cosine_lr(int epoch, int total_epochs, double lr0);

}  // namespace rk
