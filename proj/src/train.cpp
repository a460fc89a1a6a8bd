#include "nsdn/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "nsdn/metrics.hpp"
#include "nsdn/sphere.hpp"

namespace nsdn {

namespace {

// RNG stream tags.
constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kLabeledStream = 0x4c4142;
constexpr std::uint64_t kPairedStream = 0x504149;
constexpr std::uint64_t kFoldStream = 0x464f4c44;

using Matrix = MlpModel::Matrix;
using EpochHook = std::function<void(std::size_t epoch, const MlpModel&)>;

struct Packed {
  Matrix x, y, xa, xb;
};

Packed pack(std::span<const LabeledVoxel> labeled, std::span<const PairedVoxel> paired) {
  Packed p;
  p.x.resize(kInputDim, static_cast<Eigen::Index>(labeled.size()));
  p.y.resize(kOutputDim, static_cast<Eigen::Index>(labeled.size()));
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto& v = labeled[i];
    if (v.x.order() != kSignalOrder || v.y.order() != kFodOrder) {
      throw ValidationError("labeled voxel " + std::to_string(i) + " has wrong SH orders");
    }
    p.x.col(static_cast<Eigen::Index>(i)) = v.x.coeffs();
    p.y.col(static_cast<Eigen::Index>(i)) = v.y.coeffs();
  }
  p.xa.resize(kInputDim, static_cast<Eigen::Index>(paired.size()));
  p.xb.resize(kInputDim, static_cast<Eigen::Index>(paired.size()));
  for (std::size_t i = 0; i < paired.size(); ++i) {
    const auto& v = paired[i];
    if (v.xa.order() != kSignalOrder || v.xb.order() != kSignalOrder) {
      throw ValidationError("paired voxel " + std::to_string(i) + " has wrong SH orders");
    }
    p.xa.col(static_cast<Eigen::Index>(i)) = v.xa.coeffs();
    p.xb.col(static_cast<Eigen::Index>(i)) = v.xb.coeffs();
  }
  return p;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

void check_pools(std::size_t n_labeled, std::size_t n_paired, const TrainConfig& config) {
  if (n_labeled == 0) throw ValidationError("training needs labeled voxels");
  if (config.batch_size > n_labeled) {
    throw ValidationError("batch size " + std::to_string(config.batch_size) +
                          " exceeds the labeled pool of " + std::to_string(n_labeled));
  }
  if (config.lambda > 0.0 && n_paired == 0) {
    throw ValidationError("lambda > 0 requires paired voxels");
  }
}

MlpModel run_epochs(std::span<const LabeledVoxel> labeled, std::span<const PairedVoxel> paired,
                    const TrainConfig& config, std::size_t epochs, std::uint64_t run_tag,
                    std::vector<double>* epoch_loss, const EpochHook& hook) {
  config.validate();
  check_pools(labeled.size(), paired.size(), config);
  const bool use_pairs = config.lambda > 0.0;
  const Packed data = pack(labeled, use_pairs ? paired : std::span<const PairedVoxel>{});

  Rng init_rng = make_stream(config.seed, kInitStream);
  MlpModel model = MlpModel::initialized(init_rng);
  RmsPropState<double> state;
  if (hook) hook(0, model);

  const std::size_t n = labeled.size();
  const std::size_t bs = config.batch_size;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng lab_rng = make_stream(config.seed, kLabeledStream + (run_tag << 20), epoch);
    Rng pair_rng = make_stream(config.seed, kPairedStream + (run_tag << 20), epoch);
    const auto order = permutation(n, lab_rng);
    std::vector<std::size_t> pair_order;
    std::size_t pair_cursor = 0;

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t m = std::min(bs, n - start);
      TrainingBatch<double> batch;
      batch.x.resize(kInputDim, static_cast<Eigen::Index>(m));
      batch.y_true.resize(kOutputDim, static_cast<Eigen::Index>(m));
      for (std::size_t j = 0; j < m; ++j) {
        const auto src = static_cast<Eigen::Index>(order[start + j]);
        batch.x.col(static_cast<Eigen::Index>(j)) = data.x.col(src);
        batch.y_true.col(static_cast<Eigen::Index>(j)) = data.y.col(src);
      }
      if (use_pairs) {
        batch.xa.resize(kInputDim, static_cast<Eigen::Index>(m));
        batch.xb.resize(kInputDim, static_cast<Eigen::Index>(m));
        for (std::size_t j = 0; j < m; ++j) {
          if (pair_cursor == pair_order.size()) {
            pair_order = permutation(paired.size(), pair_rng);
            pair_cursor = 0;
          }
          const auto src = static_cast<Eigen::Index>(pair_order[pair_cursor++]);
          batch.xa.col(static_cast<Eigen::Index>(j)) = data.xa.col(src);
          batch.xb.col(static_cast<Eigen::Index>(j)) = data.xb.col(src);
        }
      }
      LossBreakdown<double> parts;
      const auto grads = gradients<double>(model, batch, config.lambda, &parts);
      rmsprop_step<double>(model, grads, state, config.rmsprop);
      loss_sum += parts.total;
      ++batches;
    }
    if (epoch_loss) epoch_loss->push_back(loss_sum / static_cast<double>(batches));
    if (hook) hook(epoch + 1, model);
  }
  return model;
}

template <typename T>
std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

double mean_acc(const MlpModel& model, std::span<const LabeledVoxel> labeled) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : labeled) {
    if (auto a = try_acc(predict(model, v.x), v.y)) {
      sum += *a;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : std::nan("");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must be in (0, 1)");
  if (folds == 1) throw ValidationError("folds must be 0 (disabled) or >= 2");
  if (!(rmsprop.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (!(rmsprop.rho >= 0.0 && rmsprop.rho < 1.0)) throw ValidationError("rho must be in [0, 1)");
  if (!(rmsprop.epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
}

MlpModel fit_epochs(std::span<const LabeledVoxel> labeled, std::span<const PairedVoxel> paired,
                    const TrainConfig& config, std::size_t epochs, std::uint64_t run_tag,
                    std::vector<double>* epoch_loss) {
  return run_epochs(labeled, paired, config, epochs, run_tag, epoch_loss, {});
}

TrainResult train(std::span<const LabeledVoxel> labeled, std::span<const PairedVoxel> paired,
                  const TrainConfig& config, std::span<const std::size_t> groups) {
  config.validate();
  check_pools(labeled.size(), paired.size(), config);
  if (!groups.empty() && groups.size() != labeled.size()) {
    throw ValidationError("one group id per labeled voxel required");
  }

  TrainResult result;
  CvReport& cv = result.cv;
  if (config.folds >= 2) {
    // Distinct groups in first-appearance order, then shuffled.
    std::vector<std::vector<std::size_t>> members;
    {
      std::map<std::size_t, std::size_t> slot;
      for (std::size_t i = 0; i < labeled.size(); ++i) {
        const std::size_t g = groups.empty() ? i : groups[i];
        auto [it, inserted] = slot.try_emplace(g, members.size());
        if (inserted) members.emplace_back();
        members[it->second].push_back(i);
      }
    }
    const std::size_t n_groups = members.size();
    if (n_groups < config.folds) throw ValidationError("fewer labeled groups than folds");
    Rng fold_rng = make_stream(config.seed, kFoldStream);
    const auto group_order = permutation(n_groups, fold_rng);
    const auto n_val_groups = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n_groups))), 1,
        n_groups - 1);

    cv.mean_val_loss.assign(config.epochs, 0.0);
    for (std::size_t k = 0; k < config.folds; ++k) {
      std::vector<bool> is_val(n_groups, false);
      const std::size_t start = k * n_groups / config.folds;
      for (std::size_t j = 0; j < n_val_groups; ++j) is_val[group_order[(start + j) % n_groups]] = true;
      std::vector<std::size_t> train_idx;
      std::vector<std::size_t> val_idx;
      for (std::size_t g = 0; g < n_groups; ++g) {
        auto& dst = is_val[g] ? val_idx : train_idx;
        dst.insert(dst.end(), members[g].begin(), members[g].end());
      }
      std::sort(train_idx.begin(), train_idx.end());
      std::sort(val_idx.begin(), val_idx.end());
      const auto train_set = gather(labeled, train_idx);
      const auto val_set = gather(labeled, val_idx);

      FoldReport fold;
      fold.fold = k;
      fold.train_count = train_set.size();
      fold.val_count = val_set.size();
      TrainConfig fold_config = config;
      fold_config.batch_size = std::min(config.batch_size, train_set.size());
      run_epochs(train_set, paired, fold_config, config.epochs, k + 1, nullptr,
                 [&](std::size_t epoch, const MlpModel& model) {
                   const double vl = supervised_loss(model, val_set);
                   if (epoch == 0) {
                     fold.initial_val_loss = vl;
                   } else {
                     fold.val_loss.push_back(vl);
                     fold.val_mean_acc.push_back(mean_acc(model, val_set));
                   }
                 });
      for (std::size_t e = 0; e < config.epochs; ++e) cv.mean_val_loss[e] += fold.val_loss[e];
      cv.folds.push_back(std::move(fold));
    }
    for (double& v : cv.mean_val_loss) v /= static_cast<double>(config.folds);
    cv.selected_epochs = config.epochs == 0
                             ? 0
                             : static_cast<std::size_t>(std::min_element(cv.mean_val_loss.begin(),
                                                                         cv.mean_val_loss.end()) -
                                                        cv.mean_val_loss.begin()) +
                                   1;
  } else {
    cv.selected_epochs = config.epochs;
  }

  result.model = run_epochs(labeled, paired, config, cv.selected_epochs, 0, &cv.train_loss, {});
  return result;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  return train(dataset.labeled, dataset.paired, config, dataset.labeled_group);
}

ShVec predict(const MlpModel& model, const ShVec& x) {
  if (x.order() != kSignalOrder) {
    throw ValidationError("predict expects an order-8 input, got order " + std::to_string(x.order()));
  }
  return ShVec(kFodOrder, forward_one<double>(model, x.coeffs()));
}

std::vector<ShVec> predict_batch(const MlpModel& model, std::span<const ShVec> xs) {
  Matrix x(kInputDim, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].order() != kSignalOrder) throw ValidationError("predict expects order-8 inputs");
    x.col(static_cast<Eigen::Index>(i)) = xs[i].coeffs();
  }
  const Matrix y = xs.empty() ? Matrix(kOutputDim, 0) : forward<double>(model, x);
  std::vector<ShVec> out;
  out.reserve(xs.size());
  for (Eigen::Index i = 0; i < y.cols(); ++i) out.emplace_back(kFodOrder, y.col(i));
  return out;
}

double supervised_loss(const MlpModel& model, std::span<const LabeledVoxel> labeled) {
  return dataset_loss(model, labeled, {}, 0.0).supervised;
}

LossBreakdown<double> dataset_loss(const MlpModel& model, std::span<const LabeledVoxel> labeled,
                                   std::span<const PairedVoxel> paired, double lambda) {
  if (!paired.empty() && paired.size() != labeled.size()) {
    throw ValidationError("dataset_loss: paired set must match the labeled count");
  }
  const Packed p = pack(labeled, paired);
  TrainingBatch<double> batch{p.x, p.y, p.xa, p.xb};
  return loss<double>(model, batch, lambda);
}

}  // namespace nsdn
