#pragma once

// Tensor-level reverse-mode differentiation.
//
// A Tape records every op applied to its Vars together with a closure that
// propagates the output gradient to the inputs. Nodes are created in
// topological order, so backward() walks them in reverse. A tape supports a
// single backward pass; build a new tape for every forward.

#include <functional>
#include <vector>

#include "lungdn/tensor.hpp"

namespace lungdn::nn {

template <class Real>
class Tape;

template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Real>& tape() const { return *tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<Real>* tape_ = nullptr;
  int id_ = -1;
};

enum class Mode { train, infer };

template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  /// A non-recording tape keeps values only; backward() on it is a TapeError.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var<Real> constant(Tensor<Real> value);
  Var<Real> param(Parameter<Real>& p);

  /// Records an op output. `backward` may be empty for ops without inputs
  /// that need gradients. Throws NumericFault on non-finite values.
  Var<Real> push(Tensor<Real> value, std::vector<int> inputs, BackwardFn backward);

  const Tensor<Real>& value(int id) const { return nodes_.at(id).value_ref(); }
  bool needs_grad(int id) const { return nodes_.at(id).needs_grad; }
  /// Gradient buffer of node `id`, zero-initialized on first access.
  Tensor<Real>& grad(int id);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// reachable parameter's `grad`.
  void backward(const Var<Real>& loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Parameter<Real>* param = nullptr;
    Tensor<Real> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    const Tensor<Real>& value_ref() const { return param ? param->value : value; }
  };

  bool record_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

template <class Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape_->value(id_);
}

namespace ops {

/// 1-D convolution with "same" padding (TensorFlow convention: the odd pad
/// sample goes to the right). x: (B, T, Ci); w: (K, Ci, Co); b: (Co).
/// Output: (B, ceil(T / stride), Co).
template <class Real>
Var<Real> conv1d(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b, std::size_t stride);

/// Position-wise affine map. x: (B, T, Din); w: (Din, Dout); b: (Dout).
template <class Real>
Var<Real> dense(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b);

template <class Real>
Var<Real> relu(const Var<Real>& x);

template <class Real>
Var<Real> tanh(const Var<Real>& x);

template <class Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b);

/// Nearest-neighbour x2 upsampling along time.
template <class Real>
Var<Real> upsample2(const Var<Real>& x);

template <class Real>
Var<Real> concat_channels(const Var<Real>& a, const Var<Real>& b);

struct NormConfig {
  double epsilon = 1e-3;
  double momentum = 0.99;
};

/// Per-channel normalization over (batch, time). Train mode normalizes with
/// batch statistics (biased variance) and updates the moving statistics in
/// place; infer mode applies the moving statistics as a fixed affine map.
template <class Real>
Var<Real> batch_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta,
                     Parameter<Real>& moving_mean, Parameter<Real>& moving_var, Mode mode,
                     const NormConfig& cfg = {});

/// Per-position normalization over channels.
template <class Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta,
                     double epsilon = 1e-3);

/// Scaled dot-product attention over `heads` heads of width `key_dim`.
/// q, k, v: (B, T, heads * key_dim). Output has the same shape; heads are
/// concatenated along channels.
template <class Real>
Var<Real> attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& v, std::size_t heads,
                    std::size_t key_dim);

/// Mean over all elements of (a - b)^2. Returns a scalar (shape {1}).
template <class Real>
Var<Real> mse(const Var<Real>& prediction, const Var<Real>& target);

/// Sum over all elements of x * weights (a linear probe used by gradient checks).
template <class Real>
Var<Real> inner(const Var<Real>& x, const Tensor<Real>& weights);

}  // namespace ops

/// Softmax attention weights, shape (B * heads, T, T), for the given
/// projections; the same computation the attention op uses internally.
template <class Real>
Tensor<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t heads,
                               std::size_t key_dim);

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lungdn::nn
