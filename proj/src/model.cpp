#include "lungdn/model.hpp"

#include <cmath>
#include <random>

#include "lungdn/errors.hpp"

namespace lungdn::model {

namespace ops = nn::ops;

ModelConfig ModelConfig::variant(std::string_view name) {
  ModelConfig cfg;
  if (name == "noformer")
    cfg.attention_blocks = 0;
  else if (name == "uformer")
    cfg.attention_blocks = 1;
  else if (name == "uformer+")
    cfg.attention_blocks = 2;
  else
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected noformer, uformer or uformer+)");
  return cfg;
}

std::string ModelConfig::variant_name() const {
  switch (attention_blocks) {
    case 0: return "noformer";
    case 1: return "uformer";
    case 2: return "uformer+";
    default: return "custom";
  }
}

std::vector<std::size_t> encoder_lengths(const ModelConfig& cfg) {
  std::vector<std::size_t> lengths;
  std::size_t len = cfg.segment_length;
  for (std::size_t i = 0; i < cfg.encoder_filters.size(); ++i) {
    len = (len + cfg.encoder_stride - 1) / cfg.encoder_stride;
    lengths.push_back(len);
  }
  return lengths;
}

void ModelConfig::validate() const {
  if (attention_blocks < 0 || attention_blocks > 2)
    throw ConfigError("attention_blocks must be 0, 1 or 2, got " + std::to_string(attention_blocks));
  if (encoder_filters.empty()) throw ConfigError("encoder needs at least one stage");
  if (kernel == 0 || encoder_stride == 0 || decoder_stride == 0 || bottleneck_filters == 0)
    throw ConfigError("kernel, strides and bottleneck width must be positive");
  if (attention_blocks > 0 && (heads == 0 || key_dim == 0 || ffn_units == 0))
    throw ConfigError("attention heads, key_dim and ffn_units must be positive");
  if (dropout != 0.0) throw ConfigError("dropout is not supported (rate must be 0)");
  if (segment_length == 0) throw ConfigError("segment_length must be positive");
  for (auto f : encoder_filters)
    if (f == 0) throw ConfigError("encoder filter counts must be positive");
  for (auto f : decoder_filters)
    if (f == 0) throw ConfigError("decoder filter counts must be positive");

  const auto f = encoder_lengths(*this);
  const std::size_t depth = f.size();
  std::size_t len = (f.back() + encoder_stride - 1) / encoder_stride;
  len *= 2;
  if (len != f.back())
    throw ConfigError("bottleneck upsample gives length " + std::to_string(len) + " but f" +
                      std::to_string(depth) + " has length " + std::to_string(f.back()));
  for (std::size_t a = 1; a <= decoder_filters.size(); ++a) {
    len = (2 * len + decoder_stride - 1) / decoder_stride;
    if (a < depth && len != f[depth - a - 1])
      throw ConfigError("decoder stage " + std::to_string(a) + " has length " + std::to_string(len) +
                        " but its skip f" + std::to_string(depth - a) + " has length " +
                        std::to_string(f[depth - a - 1]));
  }
  for (std::size_t u = 0; u < output_upsamples; ++u) len *= 2;
  if (len != segment_length)
    throw ConfigError("stride/upsample ledger does not balance: output length " + std::to_string(len) +
                      " for input length " + std::to_string(segment_length));
}

nlohmann::json ModelConfig::to_json() const {
  return {{"attention_blocks", attention_blocks},
          {"encoder_filters", encoder_filters},
          {"bottleneck_filters", bottleneck_filters},
          {"decoder_filters", decoder_filters},
          {"kernel", kernel},
          {"encoder_stride", encoder_stride},
          {"decoder_stride", decoder_stride},
          {"heads", heads},
          {"key_dim", key_dim},
          {"ffn_units", ffn_units},
          {"dropout", dropout},
          {"output_upsamples", output_upsamples},
          {"segment_length", segment_length},
          {"bn_epsilon", bn_epsilon},
          {"bn_momentum", bn_momentum},
          {"ln_epsilon", ln_epsilon}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("attention_blocks", c.attention_blocks);
    get("encoder_filters", c.encoder_filters);
    get("bottleneck_filters", c.bottleneck_filters);
    get("decoder_filters", c.decoder_filters);
    get("kernel", c.kernel);
    get("encoder_stride", c.encoder_stride);
    get("decoder_stride", c.decoder_stride);
    get("heads", c.heads);
    get("key_dim", c.key_dim);
    get("ffn_units", c.ffn_units);
    get("dropout", c.dropout);
    get("output_upsamples", c.output_upsamples);
    get("segment_length", c.segment_length);
    get("bn_epsilon", c.bn_epsilon);
    get("bn_momentum", c.bn_momentum);
    get("ln_epsilon", c.ln_epsilon);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return c;
}

std::size_t attention_block_parameters(const ModelConfig& cfg) {
  const std::size_t d = cfg.bottleneck_filters, w = cfg.heads * cfg.key_dim, h = cfg.ffn_units;
  return 3 * (d * w + w) + (w * d + d) + (d * h + h) + (h * d + d) + 2 * 2 * d;
}

namespace {

template <class Real>
void add_conv(ParamStore<Real>& store, const std::string& name, std::size_t k, std::size_t ci, std::size_t co) {
  store.add(name + ".w", {k, ci, co});
  store.add(name + ".b", {co});
}

template <class Real>
void add_norm(ParamStore<Real>& store, const std::string& name, std::size_t ch, bool moving) {
  store.add(name + ".gamma", {ch}).value.fill(Real(1));
  store.add(name + ".beta", {ch});
  if (moving) {
    store.add(name + ".moving_mean", {ch}, false);
    store.add(name + ".moving_var", {ch}, false).value.fill(Real(1));
  }
}

template <class Real>
void add_dense(ParamStore<Real>& store, const std::string& name, std::size_t din, std::size_t dout) {
  store.add(name + ".w", {din, dout});
  store.add(name + ".b", {dout});
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string layer_of(const std::string& name) { return name.substr(0, name.rfind('.')); }

}  // namespace

template <class Real>
Uformer<Real>::Uformer(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t k = cfg_.kernel, depth = cfg_.encoder_filters.size();
  std::size_t ch = 1;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string name = "enc" + std::to_string(i + 1);
    add_conv(params_, name + ".conv", k, ch, cfg_.encoder_filters[i]);
    add_norm(params_, name + ".bn", cfg_.encoder_filters[i], true);
    ch = cfg_.encoder_filters[i];
  }
  const std::size_t d = cfg_.bottleneck_filters;
  add_conv(params_, "bottleneck.conv", k, ch, d);
  add_norm(params_, "bottleneck.bn", d, true);
  const std::size_t width = cfg_.heads * cfg_.key_dim;
  for (int b = 0; b < cfg_.attention_blocks; ++b) {
    const std::string name = "attn" + std::to_string(b + 1);
    add_dense(params_, name + ".query", d, width);
    add_dense(params_, name + ".key", d, width);
    add_dense(params_, name + ".value", d, width);
    add_dense(params_, name + ".output", width, d);
    add_norm(params_, name + ".ln1", d, false);
    add_dense(params_, name + ".ffn1", d, cfg_.ffn_units);
    add_dense(params_, name + ".ffn2", cfg_.ffn_units, d);
    add_norm(params_, name + ".ln2", d, false);
  }
  add_norm(params_, "bottleneck.post_bn", d, true);
  ch = d + cfg_.encoder_filters.back();
  for (std::size_t a = 1; a <= cfg_.decoder_filters.size(); ++a) {
    const std::string name = "dec" + std::to_string(a);
    const std::size_t co = cfg_.decoder_filters[a - 1];
    add_conv(params_, name + ".conv", k, ch, co);
    add_norm(params_, name + ".bn", co, true);
    ch = co + (a < depth ? cfg_.encoder_filters[depth - a - 1] : 0);
  }
  add_conv(params_, "output.conv", k, ch, 1);

  // Glorot-uniform kernels in build order from one seeded stream; biases and
  // normalization offsets stay zero.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& prm = params_[i];
    if (!ends_with(prm.name, ".w")) continue;
    const auto& s = prm.value.shape();
    const double fan_in = s.size() == 3 ? double(s[0] * s[1]) : double(s[0]);
    const double fan_out = s.size() == 3 ? double(s[0] * s[2]) : double(s[1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : prm.value.values()) v = static_cast<Real>(dist(rng));
  }
}

template <class Real>
std::vector<LayerCount> Uformer<Real>::itemize() const {
  std::vector<LayerCount> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string layer = layer_of(params_[i].name);
    if (out.empty() || out.back().layer != layer) out.push_back({layer, 0});
    out.back().parameters += params_[i].value.size();
  }
  return out;
}

template <class Real>
Var<Real> Uformer<Real>::conv_relu_bn(Tape<Real>& tape, const Var<Real>& x, const std::string& name,
                                      std::size_t stride, Mode mode) {
  auto y = ops::relu(ops::conv1d(x, p(tape, name + ".conv.w"), p(tape, name + ".conv.b"), stride));
  return ops::batch_norm(y, p(tape, name + ".bn.gamma"), p(tape, name + ".bn.beta"),
                         params_.get(name + ".bn.moving_mean"), params_.get(name + ".bn.moving_var"), mode,
                         {cfg_.bn_epsilon, cfg_.bn_momentum});
}

template <class Real>
Var<Real> Uformer<Real>::attention_block(Tape<Real>& tape, const Var<Real>& m, int index) {
  if (index < 0 || index >= cfg_.attention_blocks) throw ConfigError("no attention block " + std::to_string(index));
  const std::string n = "attn" + std::to_string(index + 1);
  auto dense = [&](const Var<Real>& x, const std::string& layer) {
    return ops::dense(x, p(tape, n + "." + layer + ".w"), p(tape, n + "." + layer + ".b"));
  };
  auto norm = [&](const Var<Real>& x, const std::string& layer) {
    return ops::layer_norm(x, p(tape, n + "." + layer + ".gamma"), p(tape, n + "." + layer + ".beta"),
                           cfg_.ln_epsilon);
  };
  auto heads = ops::attention(dense(m, "query"), dense(m, "key"), dense(m, "value"), cfg_.heads, cfg_.key_dim);
  auto g = norm(ops::add(m, dense(heads, "output")), "ln1");
  auto ff = dense(ops::relu(dense(g, "ffn1")), "ffn2");
  return norm(ops::add(ff, g), "ln2");
}

template <class Real>
typename Uformer<Real>::Features Uformer<Real>::encode(Tape<Real>& tape, const Var<Real>& x, Mode mode) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] != cfg_.segment_length || s[2] != 1)
    throw ShapeError("model input must be (batch, " + std::to_string(cfg_.segment_length) + ", 1), got " +
                     nn::shape_string(s));
  Features out;
  Var<Real> h = x;
  for (std::size_t i = 0; i < cfg_.encoder_filters.size(); ++i) {
    h = conv_relu_bn(tape, h, "enc" + std::to_string(i + 1), cfg_.encoder_stride, mode);
    out.f.push_back(h);
  }
  h = conv_relu_bn(tape, h, "bottleneck", cfg_.encoder_stride, mode);
  for (int b = 0; b < cfg_.attention_blocks; ++b) h = attention_block(tape, h, b);
  out.bottleneck = ops::batch_norm(h, p(tape, "bottleneck.post_bn.gamma"), p(tape, "bottleneck.post_bn.beta"),
                                   params_.get("bottleneck.post_bn.moving_mean"),
                                   params_.get("bottleneck.post_bn.moving_var"), mode,
                                   {cfg_.bn_epsilon, cfg_.bn_momentum});
  out.z = ops::concat_channels(ops::upsample2(out.bottleneck), out.f.back());
  return out;
}

template <class Real>
Var<Real> Uformer<Real>::decode(Tape<Real>& tape, const Features& features, Mode mode) {
  const std::size_t depth = cfg_.encoder_filters.size();
  if (features.f.size() != depth) throw ConfigError("feature set has the wrong number of encoder maps");
  Var<Real> h = features.z;
  for (std::size_t a = 1; a <= cfg_.decoder_filters.size(); ++a) {
    h = conv_relu_bn(tape, ops::upsample2(h), "dec" + std::to_string(a), cfg_.decoder_stride, mode);
    if (a < depth) {
      const Var<Real>& skip = features.f[depth - a - 1];
      if (skip.shape()[1] != h.shape()[1])
        throw ConfigError("skip junction " + std::to_string(a) + ": decoder length " + std::to_string(h.shape()[1]) +
                          " vs encoder length " + std::to_string(skip.shape()[1]));
      h = ops::concat_channels(h, skip);
    }
  }
  for (std::size_t u = 0; u < cfg_.output_upsamples; ++u) h = ops::upsample2(h);
  return ops::tanh(ops::conv1d(h, p(tape, "output.conv.w"), p(tape, "output.conv.b"), 1));
}

template <class Real>
Var<Real> Uformer<Real>::forward(Tape<Real>& tape, const Var<Real>& x, Mode mode) {
  return decode(tape, encode(tape, x, mode), mode);
}

template <class Real>
Tensor<Real> Uformer<Real>::predict(const Tensor<Real>& x) {
  Tape<Real> tape(false);
  return forward(tape, tape.constant(x), Mode::infer).value();
}

template class Uformer<float>;
template class Uformer<double>;

}  // namespace lungdn::model
