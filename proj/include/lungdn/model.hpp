#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lungdn/autodiff.hpp"
#include "lungdn/tensor.hpp"

namespace lungdn::model {

using nn::Mode;
using nn::ParamStore;
using nn::Tape;
using nn::Tensor;
using nn::Var;

/// Layer hyperparameters of the encoder / attention bottleneck / decoder
/// network. Defaults build the single-block Uformer at 8000 samples.
struct ModelConfig {
  int attention_blocks = 1;
  std::vector<std::size_t> encoder_filters{16, 32, 32, 64, 64};
  std::size_t bottleneck_filters = 128;
  std::vector<std::size_t> decoder_filters{64, 32, 32, 32};
  std::size_t kernel = 31;
  std::size_t encoder_stride = 2;
  std::size_t decoder_stride = 1;
  std::size_t heads = 8;
  std::size_t key_dim = 25;
  std::size_t ffn_units = 128;
  double dropout = 0.0;
  /// Parameter-free x2 upsampling steps between the last decoder stage and
  /// the output convolution.
  std::size_t output_upsamples = 1;
  std::size_t segment_length = 8000;
  double bn_epsilon = 1e-3;
  double bn_momentum = 0.99;
  double ln_epsilon = 1e-3;

  /// "noformer", "uformer" or "uformer+" (0, 1, 2 attention blocks).
  static ModelConfig variant(std::string_view name);
  std::string variant_name() const;

  /// Throws ConfigError unless every length matches at each skip junction
  /// and the output length equals the input length.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Temporal length of each encoder feature map f_1..f_E for the config.
std::vector<std::size_t> encoder_lengths(const ModelConfig& cfg);

/// Closed-form parameter count of one attention block.
std::size_t attention_block_parameters(const ModelConfig& cfg);

struct LayerCount {
  std::string layer;
  std::size_t parameters;
};

template <class Real>
class Uformer {
 public:
  struct Features {
    std::vector<Var<Real>> f;  // encoder outputs f_1..f_E
    Var<Real> bottleneck;      // attention stack output (after its batch norm)
    Var<Real> z;               // upsampled bottleneck concatenated with f_E
  };

  /// Builds and Glorot-initializes the network. Throws ConfigError.
  explicit Uformer(ModelConfig cfg, std::uint64_t seed = 111);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore<Real>& params() noexcept { return params_; }
  const ParamStore<Real>& params() const noexcept { return params_; }

  /// Parameters including batch-norm moving statistics.
  std::size_t parameter_count() const noexcept { return params_.total_count(); }
  std::size_t trainable_count() const noexcept { return params_.trainable_count(); }
  /// Per-layer parameter itemization, in build order.
  std::vector<LayerCount> itemize() const;

  Features encode(Tape<Real>& tape, const Var<Real>& x, Mode mode);
  Var<Real> decode(Tape<Real>& tape, const Features& features, Mode mode);
  /// x: (B, segment_length, 1) -> (B, segment_length, 1), values in (-1, 1).
  Var<Real> forward(Tape<Real>& tape, const Var<Real>& x, Mode mode);
  /// One attention block (index 0-based) applied to m: (B, T, bottleneck).
  Var<Real> attention_block(Tape<Real>& tape, const Var<Real>& m, int index);

  /// Inference-mode forward without recording gradients.
  Tensor<Real> predict(const Tensor<Real>& x);

 private:
  Var<Real> conv_relu_bn(Tape<Real>& tape, const Var<Real>& x, const std::string& name, std::size_t stride,
                         Mode mode);
  Var<Real> p(Tape<Real>& tape, const std::string& name) { return tape.param(params_.get(name)); }

  ModelConfig cfg_;
  ParamStore<Real> params_;
};

extern template class Uformer<float>;
extern template class Uformer<double>;

}  // namespace lungdn::model
