#include "lungdn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lungdn/errors.hpp"

namespace lungdn::nn {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  if (shape_.size() > 3) throw ShapeError("tensor rank above 3: " + shape_string(shape_));
  data_.assign(shape_size(shape_), fill);
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 3) throw ShapeError("tensor rank above 3: " + shape_string(shape_));
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

template <class Real>
void Tensor<Real>::fill(Real value) noexcept {
  std::fill(data_.begin(), data_.end(), value);
}

template <class Real>
void Tensor<Real>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

template <class Real>
bool Tensor<Real>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Real x) { return std::isfinite(x); });
}

template <class Real>
ParamStore<Real>::ParamStore(const ParamStore& other) : step_(other.step_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter<Real>>(*p));
}

template <class Real>
ParamStore<Real>& ParamStore<Real>::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <class Real>
Parameter<Real>& ParamStore<Real>::add(const std::string& name, Shape shape, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter<Real>>();
  p->name = name;
  p->value = Tensor<Real>(shape);
  p->trainable = trainable;
  if (trainable) {
    p->grad = Tensor<Real>(shape);
    p->first_moment = Tensor<Real>(shape);
    p->second_moment = Tensor<Real>(shape);
  }
  params_.push_back(std::move(p));
  return *params_.back();
}

template <class Real>
Parameter<Real>* ParamStore<Real>::find(const std::string& name) noexcept {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <class Real>
bool ParamStore<Real>::contains(const std::string& name) const noexcept {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

template <class Real>
Parameter<Real>& ParamStore<Real>::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter " + name);
}

template <class Real>
const Parameter<Real>& ParamStore<Real>::get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

template <class Real>
std::size_t ParamStore<Real>::total_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <class Real>
std::size_t ParamStore<Real>::trainable_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += p->value.size();
  return n;
}

template <class Real>
std::size_t ParamStore<Real>::count_with_prefix(const std::string& prefix) const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->name.rfind(prefix, 0) == 0) n += p->value.size();
  return n;
}

template <class Real>
void ParamStore<Real>::zero_grad() noexcept {
  for (auto& p : params_)
    if (p->trainable) p->grad.fill(Real(0));
}

template <class Real>
void ParamStore<Real>::adam_step(const AdamConfig& cfg) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : params_) {
    if (!p->trainable) continue;
    Real* w = p->value.data();
    const Real* g = p->grad.data();
    Real* m = p->first_moment.data();
    Real* v = p->second_moment.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      w[i] = static_cast<Real>(w[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

template <class Real>
void ParamStore<Real>::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw ConfigError("parameter store size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    auto& dst = *params_[i];
    const auto& src = other[i];
    if (dst.name != src.name || dst.value.shape() != src.value.shape())
      throw ConfigError("parameter mismatch at " + dst.name);
    dst.value = src.value;
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace lungdn::nn
