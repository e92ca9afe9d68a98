#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtk/cifar.hpp"
#include "dtk/graph.hpp"
#include "dtk/weights_io.hpp"

namespace dtk {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int epochs = 250;
  double base_lr = 1e-5;
  int plateau_patience = 7;
  double plateau_factor = std::sqrt(0.05);
  AdamConfig adam;
  int batch_size = 64;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augmentation;

  void validate() const;
};

template <typename Scalar>
struct LossResult {
  double loss = 0;
  /// Gradient with respect to the pre-softmax logits: (probs - onehot) / N.
  Tensor<Scalar> grad_logits;
};

/// Tolerance on |row sum - 1| accepted by cross_entropy.
inline constexpr double kProbabilityRowTolerance = 1e-3;

template <typename Scalar>
LossResult<Scalar> cross_entropy(const Tensor<Scalar>& probs, std::span<const int> labels);

/// Fraction of rows whose first maximal entry equals the label.
template <typename Scalar>
double accuracy(const Tensor<Scalar>& probs, std::span<const int> labels);

template <typename Scalar>
struct AdamState {
  std::map<std::string, Tensor<Scalar>> m;
  std::map<std::string, Tensor<Scalar>> v;
  std::int64_t t = 0;

  /// Zero moments for every non-frozen parameter, keyed "layer.weights" / "layer.bias".
  static AdamState for_graph(const ModelGraph<Scalar>& graph);
};

/// One Adam update of every parameter that has a gradient. Grads for a frozen
/// layer or without a moment entry raise StateError before anything changes.
template <typename Scalar>
void adam_step(ModelGraph<Scalar>& graph, const ParameterMap<Scalar>& grads,
               AdamState<Scalar>& state, double lr, const AdamConfig& config = {});

/// Reduce-on-plateau: strict improvement of the best loss resets the counter;
/// `patience` epochs without one multiply lr by `factor` and reset the counter.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor);

  /// Feeds one epoch's validation loss and returns the lr for the next epoch.
  double step(double val_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int wait() const { return wait_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
};

/// lr after each entry of `history`, starting from `base_lr`.
std::vector<double> lr_trace(std::span<const double> history, double base_lr, int patience,
                             double factor);

struct Metrics {
  double loss = 0;
  double accuracy = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_loss = 0;
  double val_acc = 0;
  /// Learning rate used during this epoch.
  double lr = 0;
};

struct TrainReport {
  Metrics initial_validation;
  std::vector<EpochRecord> epochs;
  std::optional<double> test_acc;
  std::int64_t augmented_samples = 0;
  /// Learning rate in effect after each epoch's scheduler update.
  std::vector<double> lr_trace;
};

struct DataSplits {
  DatasetSplit train;
  DatasetSplit validation;
  std::optional<DatasetSplit> test;
};

/// Batched forward pass without augmentation.
template <typename Scalar>
Metrics evaluate(const ModelGraph<Scalar>& graph, const DatasetSplit& split, int batch_size);

/// Rows of `split` at `indices`, optionally augmented with per-sample seeds
/// derive_seed(seed, epoch, index).
Tensorf gather_batch(const DatasetSplit& split, std::span<const std::size_t> indices,
                     const AugmentConfig* augmentation, std::uint64_t seed, int epoch);

struct FitHooks {
  /// Called after each epoch with its record.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains in float32. Shuffling and augmentation derive from config.seed.
TrainReport fit(ModelGraph<float>& graph, const DataSplits& splits, const TrainConfig& config,
                AdamState<float>* state = nullptr, const FitHooks& hooks = {});

void write_metrics_csv(const TrainReport& report, std::ostream& out);
void write_metrics_csv(const TrainReport& report, const std::filesystem::path& path);

/// Parameters followed by "adam.m.<name>", "adam.v.<name>", and a scalar "adam.t".
NamedTensorList checkpoint_entries(const ModelGraph<float>& graph, const AdamState<float>& state);

}  // namespace dtk
