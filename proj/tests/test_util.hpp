#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lungdn/autodiff.hpp"
#include "lungdn/tensor.hpp"

namespace testutil {

using lungdn::nn::Parameter;
using lungdn::nn::ParamStore;
using lungdn::nn::Shape;
using lungdn::nn::Tape;
using lungdn::nn::Tensor;
using lungdn::nn::Var;

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <class Real = double>
Tensor<Real> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const auto v = random_vector(lungdn::nn::shape_size(shape), seed, lo, hi);
  return Tensor<Real>(std::move(shape), std::vector<Real>(v.begin(), v.end()));
}

inline void randomize(ParamStore<double>& store, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store[i].trainable)
      for (auto& x : store[i].value.values()) x = dist(rng);
}

// Builds a scalar loss on the given tape from the input vars.
using LossFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Central finite differences against the tape's gradients for every element
// of every trainable parameter in `store` and of every input tensor.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(ParamStore<double>& store, const std::vector<Tensor<double>>& inputs,
                                  const LossFn& fn, double step = 1e-5, double floor = 1e-3,
                                  std::size_t max_per_tensor = 0) {
  ParamStore<double> input_store;
  for (std::size_t i = 0; i < inputs.size(); ++i) input_store.add("input" + std::to_string(i), inputs[i].shape()).value = inputs[i];

  auto run = [&](bool record) {
    Tape<double> tape(record);
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < input_store.size(); ++i) vars.push_back(tape.param(input_store[i]));
    Var<double> loss = fn(tape, vars);
    if (record) tape.backward(loss);
    return static_cast<double>(loss.value()[0]);
  };

  const ParamStore<double> snapshot = store;
  store.zero_grad();
  input_store.zero_grad();
  run(true);

  GradCheckResult result;
  auto check = [&](Parameter<double>& p) {
    if (!p.trainable) return;
    const Tensor<double> grad = p.grad;
    const std::size_t n = p.value.size();
    const std::size_t stride = max_per_tensor && n > max_per_tensor ? n / max_per_tensor : 1;
    for (std::size_t j = 0; j < n; j += stride) {
      const double orig = p.value[j];
      p.value[j] = orig + step;
      const double plus = run(false);
      p.value[j] = orig - step;
      const double minus = run(false);
      p.value[j] = orig;
      const double numeric = (plus - minus) / (2 * step);
      const double rel = std::abs(grad[j] - numeric) / std::max({std::abs(grad[j]), std::abs(numeric), floor});
      ++result.checked;
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = p.name + "[" + std::to_string(j) + "] analytic " + std::to_string(grad[j]) + " numeric " +
                       std::to_string(numeric);
      }
    }
  };
  for (std::size_t i = 0; i < store.size(); ++i) check(store[i]);
  for (std::size_t i = 0; i < input_store.size(); ++i) check(input_store[i]);

  // Train-mode batch norm moves the running statistics on every forward.
  store.copy_values_from(snapshot);
  return result;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lungdn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
