#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "lungdn/checkpoint.hpp"
#include "lungdn/errors.hpp"
#include "lungdn/trainer.hpp"
#include "test_util.hpp"

using namespace lungdn::train;
using lungdn::model::ModelConfig;
using lungdn::model::Uformer;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.attention_blocks = 1;
  c.encoder_filters = {4, 4, 4};
  c.bottleneck_filters = 8;
  c.decoder_filters = {4, 4};
  c.kernel = 5;
  c.heads = 2;
  c.key_dim = 3;
  c.ffn_units = 6;
  c.segment_length = 64;
  return c;
}

PairSet pairs(std::size_t n, std::uint64_t seed, std::size_t len = 64) {
  PairSet p;
  for (std::size_t i = 0; i < n; ++i) {
    auto clean = testutil::random_vector(len, seed + 2 * i, -0.5, 0.5);
    auto noisy = clean;
    auto noise = testutil::random_vector(len, seed + 2 * i + 1, -0.3, 0.3);
    for (std::size_t t = 0; t < len; ++t) noisy[t] += noise[t];
    p.add("p" + std::to_string(i), noisy, clean);
  }
  return p;
}

// Stand-in model: its "weights" are the epoch counter, the validation loss
// follows a script.
class ScriptedModel : public Trainable {
 public:
  explicit ScriptedModel(std::vector<double> val) : val_(std::move(val)) {}
  double train_epoch(std::size_t epoch) override {
    weights_ = {double(epoch), 10.0 * double(epoch)};
    return 1.0 / double(epoch);
  }
  double validation_loss() override { return val_.at(static_cast<std::size_t>(weights_[0]) - 1); }
  void save_best(std::size_t) override { best_ = weights_; }
  void restore_best() override { weights_ = best_; }
  std::size_t hash() const { return std::hash<double>{}(weights_[0]) ^ (std::hash<double>{}(weights_[1]) << 1); }
  std::vector<double> weights_{0, 0}, best_;

 private:
  std::vector<double> val_;
};

}  // namespace

TEST_CASE("patience-5 scenario stops after epoch 7 and restores epoch 2") {
  ScriptedModel m({.5, .4, .41, .42, .43, .44, .45, .3, .2});
  std::size_t epoch2_hash = 0;
  FitOptions opts;
  opts.patience = 5;
  opts.on_epoch = [&](const EpochRecord& e) {
    if (e.epoch == 2) epoch2_hash = m.hash();
    return true;
  };
  auto log = fit(m, opts);
  CHECK(log.epochs.size() == 7);
  CHECK(log.best_epoch == 2);
  CHECK(log.best_val_loss == 0.4);
  CHECK(log.stop_reason == StopReason::early_stop);
  CHECK(m.hash() == epoch2_hash);
  CHECK(m.weights_[0] == 2.0);
}

TEST_CASE("stopping variants") {
  ScriptedModel a({.5, .5, .5});
  FitOptions opts;
  opts.max_epochs = 3;
  auto log = fit(a, opts);
  CHECK(log.stop_reason == StopReason::max_epochs);
  CHECK(log.best_epoch == 1);  // ties are not improvements

  ScriptedModel b({.5, .4, .3, .2});
  opts.max_epochs = 4;
  opts.on_epoch = [](const EpochRecord& e) { return e.epoch < 2; };
  log = fit(b, opts);
  CHECK(log.stop_reason == StopReason::user);
  CHECK(log.epochs.size() == 2);

  ScriptedModel c({.5, .6, .7, .8, .9, 1.0, 1.1, 1.2});
  FitOptions no_early;
  no_early.max_epochs = 8;
  no_early.early_stopping = false;
  log = fit(c, no_early);
  CHECK(log.epochs.size() == 8);
  CHECK(log.best_epoch == 1);
  CHECK(c.weights_[0] == 1.0);

  CHECK_THROWS_AS(EarlyStopping(0), lungdn::ConfigError);
}

TEST_CASE("epoch order is a pure function of seed and epoch") {
  auto a = epoch_order(100, 111, 3);
  CHECK(a == epoch_order(100, 111, 3));
  CHECK(a != epoch_order(100, 111, 4));
  CHECK(a != epoch_order(100, 112, 3));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(100);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);
}

TEST_CASE("one small Adam step lowers a singleton batch loss") {
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Uformer<double> net(tiny(), 1000 + seed);
    auto p = pairs(1, 50 + seed);
    lungdn::nn::Tensor<double> x({1, 64, 1}, p.noisy[0]), y({1, 64, 1}, p.clean[0]);
    auto loss_of = [&](bool step) {
      lungdn::nn::Tape<double> tape;
      auto loss = lungdn::nn::ops::mse(net.forward(tape, tape.constant(x), lungdn::nn::Mode::train), tape.constant(y));
      if (step) {
        net.params().zero_grad();
        tape.backward(loss);
        net.params().adam_step({1e-5});
      }
      return loss.value()[0];
    };
    const double before = loss_of(true);
    if (loss_of(false) < before) ++decreased;
  }
  CHECK(decreased == 10);
}

TEST_CASE("training is deterministic, logs, and checkpoints the best epoch") {
  TrainData data{pairs(12, 1), pairs(4, 100)};
  TrainConfig cfg;
  cfg.model = tiny();
  cfg.epochs = 6;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  auto dir = testutil::temp_dir("train");

  Uformer<double> a(cfg.model, cfg.seed), b(cfg.model, cfg.seed);
  auto log_a = train_model(a, data, cfg, dir / "a");
  auto log_b = train_model(b, data, cfg);
  REQUIRE(log_a.epochs.size() == log_b.epochs.size());
  for (std::size_t i = 0; i < log_a.epochs.size(); ++i) {
    CHECK(log_a.epochs[i].train_loss == log_b.epochs[i].train_loss);
    CHECK(log_a.epochs[i].val_loss == log_b.epochs[i].val_loss);
  }
  CHECK(log_a.epochs.back().train_loss < log_a.epochs.front().train_loss);

  for (const char* f : {"config.json", "runlog.csv", "best.ckpt"}) CHECK(std::filesystem::exists(dir / "a" / f));
  lungdn::model::CheckpointInfo info;
  auto loaded = lungdn::model::load_checkpoint<double>(dir / "a" / "best.ckpt", &info);
  CHECK(info.meta.at("best_epoch").get<std::size_t>() == log_a.best_epoch);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(loaded.params()[i].value == a.params()[i].value);
  double min_val = INFINITY;
  for (const auto& e : log_a.epochs) min_val = std::min(min_val, e.val_loss);
  CHECK(log_a.best_val_loss == min_val);
  CHECK(evaluate_loss(a, data.val, 3) == doctest::Approx(min_val).epsilon(1e-12));

  std::ifstream csv(dir / "a" / "runlog.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,train_loss,val_loss,seconds");
}

TEST_CASE("f32 training runs and reloads in f32") {
  TrainData data{pairs(8, 3), pairs(2, 200)};
  TrainConfig cfg;
  cfg.model = tiny();
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.precision = Precision::f32;
  auto dir = testutil::temp_dir("train32");
  auto result = train(data, cfg, dir);
  CHECK(lungdn::model::read_checkpoint_info(result.checkpoint).precision == Precision::f32);
  auto out = denoise(result.checkpoint, data.val.noisy);
  CHECK(out.size() == 2);
}

TEST_CASE("trainer contract errors") {
  TrainConfig cfg;
  cfg.model = tiny();
  cfg.epochs = 1;
  Uformer<double> net(cfg.model);
  CHECK_THROWS_AS(train_model(net, TrainData{pairs(4, 1), PairSet{}}, cfg), lungdn::CorpusTooSmall);
  CHECK_THROWS_AS(train_model(net, TrainData{PairSet{}, pairs(4, 1)}, cfg), lungdn::CorpusTooSmall);
  CHECK_THROWS_AS(train_model(net, TrainData{pairs(2, 1, 65), pairs(2, 5, 65)}, cfg), lungdn::ShapeError);
  auto bad = pairs(4, 1);
  bad.noisy[2][10] = NAN;
  CHECK_THROWS_AS(train_model(net, TrainData{bad, pairs(2, 9)}, cfg), lungdn::DivergenceFault);
  TrainConfig zero = cfg;
  zero.batch_size = 0;
  CHECK_THROWS_AS(zero.validate(), lungdn::ConfigError);
  CHECK(TrainConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}

TEST_CASE("denoise is idempotent and checks shapes") {
  auto dir = testutil::temp_dir("denoise");
  Uformer<double> net(tiny(), 3);
  lungdn::model::save_checkpoint(dir / "m.ckpt", net);
  auto in = pairs(5, 1).noisy;
  auto a = denoise(dir / "m.ckpt", in, 2);
  CHECK(denoise(dir / "m.ckpt", in, 2) == a);
  auto b = denoise(dir / "m.ckpt", in, 5, 3);
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t t = 0; t < a[i].size(); ++t) diff = std::max(diff, std::abs(a[i][t] - b[i][t]));
  CHECK(diff <= 1e-12);
  for (const auto& seg : a)
    for (double v : seg) CHECK(std::abs(v) < 1.0);
  in[1].push_back(0.0);
  CHECK_THROWS_AS(denoise(dir / "m.ckpt", in), lungdn::ShapeError);
}
