#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "lungdn/checkpoint.hpp"
#include "lungdn/model.hpp"

namespace lungdn::train {

using model::Precision;

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 150;
  double lr = 1e-4;
  std::size_t patience = 5;
  std::uint64_t seed = 111;
  Precision precision = Precision::f64;
  bool early_stopping = true;
  model::ModelConfig model;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Aligned (noisy, clean) segment pairs.
struct PairSet {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> noisy;
  std::vector<std::vector<double>> clean;

  std::size_t size() const noexcept { return ids.size(); }
  void add(std::string id, std::vector<double> noisy_samples, std::vector<double> clean_samples);
};

struct TrainData {
  PairSet train;
  PairSet val;
};

enum class StopReason { early_stop, max_epochs, user };
std::string stop_reason_name(StopReason r);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  StopReason stop_reason = StopReason::max_epochs;

  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
};

/// Patience bookkeeping on a monitored loss. Improvement means strictly
/// smaller than the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  /// Returns true when `loss` is a new best.
  bool update(std::size_t epoch, double loss);
  bool should_stop() const noexcept { return wait_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t wait_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// What the epoch loop needs from a model. Lets the stopping logic run with
/// a stand-in model.
class Trainable {
 public:
  virtual ~Trainable() = default;
  /// One pass over the training pairs; returns the mean training loss.
  virtual double train_epoch(std::size_t epoch) = 0;
  virtual double validation_loss() = 0;
  /// Called when `epoch` sets a new best validation loss.
  virtual void save_best(std::size_t epoch) = 0;
  virtual void restore_best() = 0;
};

struct FitOptions {
  std::size_t max_epochs = 500;
  std::size_t patience = 5;
  bool early_stopping = true;
  /// Called after every epoch; returning false stops the run (reason "user").
  std::function<bool(const EpochRecord&)> on_epoch;
};

RunLog fit(Trainable& trainable, const FitOptions& options);

/// Training-pair visiting order for one epoch; a pure function of
/// (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Mean MSE over a pair set in inference mode.
template <class Real>
double evaluate_loss(model::Uformer<Real>& net, const PairSet& pairs, std::size_t batch_size);

/// Trains `net` in place and leaves it holding the best-epoch weights. When
/// `run_dir` is non-empty, writes config.json, runlog.csv and best.ckpt there.
template <class Real>
RunLog train_model(model::Uformer<Real>& net, const TrainData& data, const TrainConfig& cfg,
                   const std::filesystem::path& run_dir = {},
                   std::function<bool(const EpochRecord&)> on_epoch = {});

struct TrainResult {
  RunLog log;
  std::filesystem::path checkpoint;
};

/// Builds the model named by cfg.model in cfg.precision and trains it.
TrainResult train(const TrainData& data, const TrainConfig& cfg, const std::filesystem::path& run_dir,
                  std::function<bool(const EpochRecord&)> on_epoch = {});

/// Batch inference in infer mode. Throws ShapeError on wrong segment length.
template <class Real>
std::vector<std::vector<double>> denoise_with(model::Uformer<Real>& net, const std::vector<std::vector<double>>& noisy,
                                              std::size_t batch_size = 16, std::size_t threads = 1);

/// Loads the checkpoint in its saved precision and denoises.
std::vector<std::vector<double>> denoise(const std::filesystem::path& checkpoint,
                                         const std::vector<std::vector<double>>& noisy, std::size_t batch_size = 16,
                                         std::size_t threads = 1);

}  // namespace lungdn::train
