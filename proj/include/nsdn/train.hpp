#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nsdn/mlp.hpp"
#include "nsdn/phantom.hpp"
#include "nsdn/sh.hpp"

namespace nsdn {

struct TrainConfig {
  double lambda = 1.0;
  std::size_t batch_size = 100;
  // 0 skips cross-validation and trains for `epochs` directly.
  std::size_t folds = 5;
  double val_fraction = 0.2;
  // With folds > 0 this is the largest count tried; CV picks the final one.
  std::size_t epochs = 3;
  RmsPropConfig rmsprop;
  std::uint64_t seed = 2018;

  void validate() const;
};

struct FoldReport {
  std::size_t fold = 0;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  double initial_val_loss = 0.0;
  // Entry e is measured after epoch e + 1.
  std::vector<double> val_loss;
  std::vector<double> val_mean_acc;
};

struct CvReport {
  std::vector<FoldReport> folds;
  std::vector<double> mean_val_loss;  // per epoch, across folds
  std::size_t selected_epochs = 0;
  // Final run: mean batch objective per epoch.
  std::vector<double> train_loss;
};

struct TrainResult {
  MlpModel model;
  CvReport cv;
};

// Trains the shared-weight network on labeled voxels plus paired voxels.
//
// groups (optional, one per labeled voxel) keeps rotated copies of a base
// voxel inside the same fold. With lambda == 0 the paired pool is ignored
// and may be empty.
TrainResult train(std::span<const LabeledVoxel> labeled, std::span<const PairedVoxel> paired,
                  const TrainConfig& config, std::span<const std::size_t> groups = {});

TrainResult train(const Dataset& dataset, const TrainConfig& config);

// Fixed epoch count, no cross-validation; returns the per-epoch mean batch
// objective through `epoch_loss` when given.
MlpModel fit_epochs(std::span<const LabeledVoxel> labeled, std::span<const PairedVoxel> paired,
                    const TrainConfig& config, std::size_t epochs, std::uint64_t run_tag,
                    std::vector<double>* epoch_loss = nullptr);

ShVec predict(const MlpModel& model, const ShVec& x);
std::vector<ShVec> predict_batch(const MlpModel& model, std::span<const ShVec> xs);

// Supervised part of the objective over a labeled set.
double supervised_loss(const MlpModel& model, std::span<const LabeledVoxel> labeled);
// Total objective over equal-length labeled and paired sets (pairs optional).
LossBreakdown<double> dataset_loss(const MlpModel& model, std::span<const LabeledVoxel> labeled,
                                   std::span<const PairedVoxel> paired, double lambda);

}  // namespace nsdn
