#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lungdn::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of rank <= 3. Activations use (batch, time, channels).
template <class Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::vector<Real>& storage() noexcept { return data_; }
  const std::vector<Real>& storage() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  // (batch, time, channel) indexing for rank-3 tensors.
  Real& at(std::size_t b, std::size_t t, std::size_t c) noexcept {
    return data_[(b * shape_[1] + t) * shape_[2] + c];
  }
  Real at(std::size_t b, std::size_t t, std::size_t c) const noexcept {
    return data_[(b * shape_[1] + t) * shape_[2] + c];
  }

  void fill(Real value) noexcept;
  void reshape(Shape shape);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// One named parameter plus its gradient and Adam moments. Non-trainable
/// entries (batch-norm moving statistics) are counted and checkpointed but never
/// updated by the optimizer.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> first_moment;
  Tensor<Real> second_moment;
  bool trainable = true;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Ordered, named parameter collection with Adam state. Entries have stable
/// addresses for the lifetime of the store.
template <class Real>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<Real>& add(const std::string& name, Shape shape, bool trainable = true);
  Parameter<Real>& get(const std::string& name);
  const Parameter<Real>& get(const std::string& name) const;
  Parameter<Real>* find(const std::string& name) noexcept;
  bool contains(const std::string& name) const noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return *params_[i]; }

  /// Parameters + non-trainable buffers.
  std::size_t total_count() const noexcept;
  std::size_t trainable_count() const noexcept;
  /// Sum of element counts for parameters whose name starts with `prefix`.
  std::size_t count_with_prefix(const std::string& prefix) const noexcept;

  void zero_grad() noexcept;
  /// Bias-corrected Adam update on every trainable parameter. The step
  /// count is shared across all parameters.
  void adam_step(const AdamConfig& cfg);
  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t step) noexcept { step_ = step; }

  /// Copies values (not gradients or moments) from `other`; names and shapes
  /// must match.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
  std::uint64_t step_ = 0;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace lungdn::nn
