// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmesr/dataset.hpp"
#include "dmesr/error.hpp"
#include "dmesr/model.hpp"

namespace dmesr {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;  // epochs without validation improvement
  double alpha = 0.1;         // weight of the alignment loss
  double tau = 2.0;           // alignment temperature
  std::uint64_t seed = 42;
  double clip_norm = 5.0;
  std::size_t align_cap = 512;  // distinct items per alignment batch
  std::size_t eval_k = 10;

  void validate() const;
};

/// Model and training settings read from one flat key = value file.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
};

/// Unknown keys and malformed values are rejected. `num_items` is left to
/// the caller.
RunConfig run_config_from_map(const std::map<std::string, std::string>& values, RunConfig base = {});
std::map<std::string, std::string> run_config_to_map(const RunConfig& config);

struct LossBreakdown {
  double srs = 0.0;
  double align = 0.0;
  double total = 0.0;  // srs + alpha * align
};

/// -sum(log sigma(pos) + log(1 - sigma(neg))) with probabilities clamped to
/// [1e-7, 1 - 1e-7]. Both inputs are [n x 1] and pair row by row.
Var srs_loss(const Var& positive_scores, const Var& negative_scores);

/// One training sequence cut into next-item targets.
struct TrainExample {
  UserId user = 0;
  std::vector<ItemId> inputs;     // items[0 .. n-2], left-truncated to max_len
  std::vector<ItemId> positives;  // items[1 .. n-1], aligned with inputs
  std::vector<ItemId> negatives;  // one per position, outside the sequence
};

/// Sequences shorter than two items yield no targets and are rejected.
TrainExample make_example(const TrainSequence& sequence, std::size_t catalog_size, std::size_t max_len,
                          std::mt19937_64& rng);

struct BatchLoss {
  Var total;
  LossBreakdown parts;
};

/// Builds the full loss graph of one batch.
BatchLoss forward_batch(const DmesrModel& model, std::span<const TrainExample> batch, const TrainConfig& config,
                        std::mt19937_64* dropout_rng);

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records one epoch's metric; returns true when it is a new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t batch, const LossBreakdown& parts);
  std::size_t epoch;
  std::size_t batch;
  LossBreakdown parts;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;  // means over the epoch's batches
  double valid_hr = 0.0;
  double valid_ndcg = 0.0;
  double seconds = 0.0;

  /// One JSON object on one line.
  std::string to_json() const;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_valid_ndcg = 0.0;
  bool stopped_early = false;
};

/// Trains until the validation NDCG stalls for `patience` epochs or
/// `max_epochs` is reached, then restores the best parameters.
FitResult fit(DmesrModel& model, std::span<const TrainSequence> train, std::span<const EvalInstance> valid,
              const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace dmesr
