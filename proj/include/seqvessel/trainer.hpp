#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "seqvessel/data.hpp"
#include "seqvessel/objectives.hpp"
#include "seqvessel/params.hpp"
#include "seqvessel/svsnet.hpp"

namespace seqvessel {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::dice;
  bool augment = true;
  AugmentConfig augmentation;
  std::size_t workers = 1;
  double eval_threshold = 0.5;
  // Stop after the first epoch whose mean train loss is <= this value.
  std::optional<double> stop_loss;

  void validate() const;
};

/// v <- momentum * v + g;  theta <- theta - lr * v;  g <- 0. Parameters are
/// visited in name order. Throws if no gradient slot is populated.
template <typename S>
void sgd_step(ParameterStore<S>& store, double lr, double momentum);

struct Dataset {
  std::vector<Sample> train, val, test;
};

/// Loads every sequence listed in `<root>/manifest.txt`, resizes to the
/// network input size and cuts training windows per split.
Dataset load_dataset(const std::filesystem::path& root, const NetworkConfig& net);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  MetricsRecord val;
};
using History = std::vector<EpochRecord>;

/// "epoch,train_loss,val_loss,val_DR,val_P,val_F", 6 decimals.
void write_history_csv(std::ostream& out, const History& history);

struct EvalResult {
  std::vector<MetricsRow> rows;  // ordered by sample index
  MetricsSummary summary;
  double mean_loss = 0.0;
};

/// Infer-mode probability maps [H,W], one per sample, in sample order.
std::vector<Tensor> predict(SvsNet<float>& net, const std::vector<Sample>& samples, std::size_t batch_size = 4);

/// Infer-mode forward over `samples`, thresholded at `threshold`.
EvalResult evaluate(SvsNet<float>& net, const std::vector<Sample>& samples, LossKind loss, double threshold,
                    std::size_t batch_size = 4);

/// Metrics for precomputed probability maps (e.g. the ground truth itself).
EvalResult evaluate_predictions(const std::vector<Tensor>& probabilities, const std::vector<Sample>& samples,
                                LossKind loss, double threshold);

std::string sample_label(const Sample& s);

/// Position within a training run; with the seed it fixes every random draw
/// of the remaining run (shuffles, augmentation, dropout).
struct TrainerState {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;           // completed epochs
  std::uint64_t batch_in_epoch = 0;  // batches done in the current epoch
  std::uint64_t global_step = 0;
  double loss_sum = 0.0;             // sample-weighted loss so far this epoch
  std::uint64_t loss_count = 0;
  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

class Trainer {
 public:
  Trainer(SvsNet<float>& net, const Dataset& data, TrainConfig cfg);

  /// Runs one batch. Returns the finished epoch's record when the batch
  /// completes an epoch.
  std::optional<EpochRecord> step();
  EpochRecord run_epoch();
  /// Runs until cfg.epochs are complete or stop_loss is reached.
  const History& train(const std::function<void(const EpochRecord&)>& on_epoch = {});

  double last_batch_loss() const { return last_batch_loss_; }
  const History& history() const { return history_; }
  const TrainerState& state() const { return state_; }
  void restore(const TrainerState& s) { state_ = s; }
  std::size_t batches_per_epoch() const;

 private:
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  SvsNet<float>& net_;
  const Dataset& data_;
  TrainConfig cfg_;
  TrainerState state_;
  History history_;
  double last_batch_loss_ = 0.0;
};

// ---------------------------------------------------------------------------
// Checkpoint container: "SVSN", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u32 dims, raw little-endian f32.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

struct Checkpoint {
  ParameterStore<float> store;  // values, momenta, buffers; grads zero
  std::optional<TrainerState> trainer;
};

void save_checkpoint(const ParameterStore<float>& store, const std::filesystem::path& path,
                     const std::optional<TrainerState>& trainer = std::nullopt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values, momenta and buffers from `src` into `dst` after checking
/// that both hold the same names and shapes; the error names the first
/// offending tensor.
void restore_store(ParameterStore<float>& dst, const ParameterStore<float>& src);

// ---------------------------------------------------------------------------

struct GradcheckReport {
  std::string target;
  std::size_t trials = 0;
  std::size_t checked = 0;   // gradient entries compared
  double max_rel_error = 0.0;
  bool pass = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// Compares analytic gradients with central differences in double precision
/// on small random configurations.
GradcheckReport gradcheck(const std::string& target, std::size_t trials, std::uint64_t seed);
std::vector<std::string> gradcheck_targets();

// ---------------------------------------------------------------------------

struct AblationVariant {
  EncoderKind encoder = EncoderKind::conv3d;
  bool attention = true;
  LossKind loss = LossKind::dice;
  std::string label() const;
};

struct AblationRun {
  AblationVariant variant;
  std::uint64_t seed = 0;
  MetricsSummary test;
};

struct AblationRow {
  AblationVariant variant;
  std::vector<double> f_per_seed;
  double median_f = 0.0;
};

std::vector<AblationVariant> full_ablation_grid();

/// Trains and tests every variant once per seed; `net` and `train` provide
/// the shared settings (their encoder/attention/loss fields are overridden).
std::vector<AblationRow> run_ablation(const Dataset& data, const NetworkConfig& net, const TrainConfig& train,
                                      const std::vector<AblationVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const AblationRun&)>& on_run = {});

double median(std::vector<double> values);

}  // namespace seqvessel
