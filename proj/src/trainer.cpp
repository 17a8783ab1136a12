#include "lungdn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lungdn/errors.hpp"
#include "lungdn/parallel.hpp"

namespace lungdn::train {

using model::Uformer;
using nn::Mode;
using nn::Tape;
using nn::Tensor;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  model.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"patience", patience},
          {"seed", seed},
          {"precision", model::precision_name(precision)},
          {"early_stopping", early_stopping},
          {"model", model.to_json()},
          {"variant", model.variant_name()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("lr")) j.at("lr").get_to(c.lr);
    if (j.contains("patience")) j.at("patience").get_to(c.patience);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("precision")) c.precision = model::parse_precision(j.at("precision").get<std::string>());
    if (j.contains("early_stopping")) j.at("early_stopping").get_to(c.early_stopping);
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return c;
}

void PairSet::add(std::string id, std::vector<double> noisy_samples, std::vector<double> clean_samples) {
  if (noisy_samples.size() != clean_samples.size())
    throw ShapeError("pair " + id + " has noisy/clean length mismatch");
  ids.push_back(std::move(id));
  noisy.push_back(std::move(noisy_samples));
  clean.push_back(std::move(clean_samples));
}

// ---------------------------------------------------------------- run log

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::early_stop: return "early_stop";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::user: return "user";
  }
  return "unknown";
}

void RunLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,seconds\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.seconds);
    out << buf;
  }
}

nlohmann::json RunLog::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) rows.push_back({e.epoch, e.train_loss, e.val_loss});
  return {{"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"stop_reason", stop_reason_name(stop_reason)},
          {"epochs", rows}};
}

// ---------------------------------------------------------------- epoch loop

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double loss) {
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return true;
  }
  ++wait_;
  return false;
}

RunLog fit(Trainable& trainable, const FitOptions& options) {
  RunLog log;
  EarlyStopping stopper(options.patience);
  log.stop_reason = StopReason::max_epochs;
  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = trainable.train_epoch(epoch);
    rec.val_loss = trainable.validation_loss();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw DivergenceFault("non-finite loss at epoch " + std::to_string(epoch));
    log.epochs.push_back(rec);
    if (stopper.update(epoch, rec.val_loss)) trainable.save_best(epoch);
    if (options.on_epoch && !options.on_epoch(rec)) {
      log.stop_reason = StopReason::user;
      break;
    }
    if (options.early_stopping && stopper.should_stop()) {
      log.stop_reason = StopReason::early_stop;
      break;
    }
  }
  log.best_epoch = stopper.best_epoch();
  log.best_val_loss = stopper.best_loss();
  if (log.best_epoch > 0) trainable.restore_best();
  return log;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(epoch), std::uint32_t(epoch >> 32)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

// ---------------------------------------------------------------- Uformer training

namespace {

template <class Real>
Tensor<Real> stack(const std::vector<std::vector<double>>& rows, const std::vector<std::size_t>& pick) {
  const std::size_t len = rows[pick[0]].size();
  Tensor<Real> t({pick.size(), len, 1});
  for (std::size_t b = 0; b < pick.size(); ++b) {
    const auto& r = rows[pick[b]];
    if (r.size() != len) throw ShapeError("segments in a batch differ in length");
    for (std::size_t i = 0; i < len; ++i) t[b * len + i] = Real(r[i]);
  }
  return t;
}

void check_lengths(const PairSet& set, std::size_t length, const char* split) {
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set.noisy[i].size() != length || set.clean[i].size() != length)
      throw ShapeError(std::string(split) + " pair " + set.ids[i] + " is not " + std::to_string(length) +
                       " samples long");
}

template <class Real>
class UformerTrainable final : public Trainable {
 public:
  UformerTrainable(Uformer<Real>& net, const TrainData& data, const TrainConfig& cfg, std::filesystem::path ckpt)
      : net_(net), data_(data), cfg_(cfg), ckpt_(std::move(ckpt)) {
    adam_.learning_rate = cfg.lr;
  }

  double train_epoch(std::size_t epoch) override {
    const auto order = epoch_order(data_.train.size(), cfg_.seed, epoch);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
      const std::vector<std::size_t> pick(order.begin() + std::ptrdiff_t(start),
                                          order.begin() + std::ptrdiff_t(std::min(order.size(), start + cfg_.batch_size)));
      const auto where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index);
      auto& store = net_.params();
      store.zero_grad();
      double loss_value = 0.0;
      try {
        Tape<Real> tape;
        auto x = tape.constant(stack<Real>(data_.train.noisy, pick));
        auto y = tape.constant(stack<Real>(data_.train.clean, pick));
        auto loss = nn::ops::mse(net_.forward(tape, x, Mode::train), y);
        loss_value = double(loss.value()[0]);
        if (!std::isfinite(loss_value)) throw DivergenceFault("non-finite loss at " + where);
        tape.backward(loss);
      } catch (const NumericFault& e) {
        throw DivergenceFault(std::string(e.what()) + " at " + where);
      }
      for (std::size_t i = 0; i < store.size(); ++i)
        if (store[i].trainable && !store[i].grad.all_finite())
          throw DivergenceFault("non-finite gradient for " + store[i].name + " at " + where);
      store.adam_step(adam_);
      total += loss_value * double(pick.size());
    }
    return total / double(order.size());
  }

  double validation_loss() override { return evaluate_loss(net_, data_.val, cfg_.batch_size); }

  void save_best(std::size_t epoch) override {
    best_ = net_.params();
    if (!ckpt_.empty()) model::save_checkpoint(ckpt_, net_, {{"best_epoch", epoch}, {"seed", cfg_.seed}});
  }

  void restore_best() override { net_.params().copy_values_from(best_); }

 private:
  Uformer<Real>& net_;
  const TrainData& data_;
  const TrainConfig& cfg_;
  std::filesystem::path ckpt_;
  nn::AdamConfig adam_;
  nn::ParamStore<Real> best_;
};

}  // namespace

template <class Real>
double evaluate_loss(Uformer<Real>& net, const PairSet& pairs, std::size_t batch_size) {
  if (pairs.size() == 0) throw CorpusTooSmall("cannot evaluate on an empty pair set");
  double total = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    std::vector<std::size_t> pick;
    for (std::size_t i = start; i < std::min(pairs.size(), start + batch_size); ++i) pick.push_back(i);
    const auto out = net.predict(stack<Real>(pairs.noisy, pick));
    const auto target = stack<Real>(pairs.clean, pick);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += (double(out[i]) - double(target[i])) * (double(out[i]) - double(target[i]));
    total += s / double(pairs.noisy[0].size());
  }
  return total / double(pairs.size());
}

namespace {
// Each step reallocates the same large activation buffers; keep freed
// blocks on the heap instead of mapping fresh pages every time.
void keep_heap_warm() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}
}  // namespace

template <class Real>
RunLog train_model(Uformer<Real>& net, const TrainData& data, const TrainConfig& cfg,
                   const std::filesystem::path& run_dir, std::function<bool(const EpochRecord&)> on_epoch) {
  cfg.validate();
  keep_heap_warm();
  if (net.config() != cfg.model) throw ConfigError("model does not match the training config");
  if (data.train.size() == 0) throw CorpusTooSmall("training split is empty");
  if (data.val.size() == 0) throw CorpusTooSmall("validation split is empty");
  check_lengths(data.train, cfg.model.segment_length, "train");
  check_lengths(data.val, cfg.model.segment_length, "validation");

  std::filesystem::path ckpt;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    auto j = cfg.to_json();
    j["train_pairs"] = data.train.size();
    j["val_pairs"] = data.val.size();
    std::ofstream(run_dir / "config.json") << j.dump(2) << '\n';
    ckpt = run_dir / "best.ckpt";
  }
  UformerTrainable<Real> trainable(net, data, cfg, ckpt);
  FitOptions opts;
  opts.max_epochs = cfg.epochs;
  opts.patience = cfg.patience;
  opts.early_stopping = cfg.early_stopping;
  opts.on_epoch = std::move(on_epoch);
  auto log = fit(trainable, opts);
  if (!run_dir.empty()) log.write_csv(run_dir / "runlog.csv");
  return log;
}

TrainResult train(const TrainData& data, const TrainConfig& cfg, const std::filesystem::path& run_dir,
                  std::function<bool(const EpochRecord&)> on_epoch) {
  cfg.validate();
  TrainResult result;
  if (cfg.precision == Precision::f32) {
    Uformer<float> net(cfg.model, cfg.seed);
    result.log = train_model(net, data, cfg, run_dir, std::move(on_epoch));
  } else {
    Uformer<double> net(cfg.model, cfg.seed);
    result.log = train_model(net, data, cfg, run_dir, std::move(on_epoch));
  }
  if (!run_dir.empty()) result.checkpoint = run_dir / "best.ckpt";
  return result;
}

// ---------------------------------------------------------------- inference

template <class Real>
std::vector<std::vector<double>> denoise_with(Uformer<Real>& net, const std::vector<std::vector<double>>& noisy,
                                              std::size_t batch_size, std::size_t threads) {
  keep_heap_warm();
  const std::size_t len = net.config().segment_length;
  for (std::size_t i = 0; i < noisy.size(); ++i)
    if (noisy[i].size() != len)
      throw ShapeError("segment " + std::to_string(i) + " has " + std::to_string(noisy[i].size()) +
                       " samples, expected " + std::to_string(len));
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::vector<double>> out(noisy.size(), std::vector<double>(len));
  const std::size_t batches = (noisy.size() + batch_size - 1) / batch_size;
  parallel_for(batches, threads, [&](std::size_t b) {
    std::vector<std::size_t> pick;
    for (std::size_t i = b * batch_size; i < std::min(noisy.size(), (b + 1) * batch_size); ++i) pick.push_back(i);
    const auto y = net.predict(stack<Real>(noisy, pick));
    for (std::size_t k = 0; k < pick.size(); ++k)
      for (std::size_t i = 0; i < len; ++i) out[pick[k]][i] = double(y[k * len + i]);
  });
  return out;
}

std::vector<std::vector<double>> denoise(const std::filesystem::path& checkpoint,
                                         const std::vector<std::vector<double>>& noisy, std::size_t batch_size,
                                         std::size_t threads) {
  const auto info = model::read_checkpoint_info(checkpoint);
  if (info.precision == Precision::f32) {
    auto net = model::load_checkpoint<float>(checkpoint);
    return denoise_with(net, noisy, batch_size, threads);
  }
  auto net = model::load_checkpoint<double>(checkpoint);
  return denoise_with(net, noisy, batch_size, threads);
}

template double evaluate_loss<float>(Uformer<float>&, const PairSet&, std::size_t);
template double evaluate_loss<double>(Uformer<double>&, const PairSet&, std::size_t);
template RunLog train_model<float>(Uformer<float>&, const TrainData&, const TrainConfig&, const std::filesystem::path&,
                                   std::function<bool(const EpochRecord&)>);
template RunLog train_model<double>(Uformer<double>&, const TrainData&, const TrainConfig&,
                                    const std::filesystem::path&, std::function<bool(const EpochRecord&)>);
template std::vector<std::vector<double>> denoise_with<float>(Uformer<float>&, const std::vector<std::vector<double>>&,
                                                              std::size_t, std::size_t);
template std::vector<std::vector<double>> denoise_with<double>(Uformer<double>&,
                                                               const std::vector<std::vector<double>>&, std::size_t,
                                                               std::size_t);

}  // namespace lungdn::train
