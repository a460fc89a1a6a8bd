#include <doctest.h>

#include "nsdn/metrics.hpp"
#include "nsdn/train.hpp"
#include "support.hpp"

using namespace nsdn;

namespace {

const Dataset& small_dataset() {
  static const Dataset ds = make_dataset(30, 300, default_profile_truth(), default_profile_a(), default_profile_b(),
                                         FiberDistribution{}, 9, 77);
  return ds;
}

TrainConfig quick(double lambda, std::size_t folds = 0, std::size_t epochs = 3) {
  TrainConfig c;
  c.lambda = lambda;
  c.folds = folds;
  c.epochs = epochs;
  c.batch_size = 50;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("configuration errors") {
  const Dataset& ds = small_dataset();
  TrainConfig c = quick(1.0);
  c.batch_size = 301;
  CHECK_THROWS_AS(train(ds, c), ValidationError);
  CHECK_THROWS_AS(train(ds.labeled, {}, quick(1.0)), ValidationError);
  CHECK_NOTHROW(train(ds.labeled, {}, quick(0.0, 0, 1)));
  CHECK_THROWS_AS(train(ds, quick(1.0, 1)), ValidationError);
  TrainConfig bad = quick(-1.0);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = quick(1.0);
  bad.val_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = quick(1.0);
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(train(ds.labeled, ds.paired, quick(1.0), std::vector<std::size_t>{1, 2}), ValidationError);
}

TEST_CASE("identical pairs with lambda 1 train exactly like lambda 0") {
  const Dataset& ds = small_dataset();
  std::vector<PairedVoxel> same;
  for (const auto& p : ds.paired) same.push_back({p.xa, p.xa});
  const MlpModel with_pairs = fit_epochs(ds.labeled, same, quick(1.0), 2, 0);
  const MlpModel without = fit_epochs(ds.labeled, {}, quick(0.0), 2, 0);
  CHECK(with_pairs == without);
}

TEST_CASE("training lowers the objective") {
  const Dataset& ds = small_dataset();
  const std::span<const LabeledVoxel> labeled(ds.labeled.data(), 100);
  const std::span<const PairedVoxel> paired(ds.paired.data(), 100);
  const TrainConfig c = quick(1.0);
  const MlpModel initial = fit_epochs(labeled, paired, c, 0, 0);
  const MlpModel trained = fit_epochs(labeled, paired, c, 3, 0);
  CHECK(dataset_loss(trained, labeled, paired, 1.0).total < dataset_loss(initial, labeled, paired, 1.0).total);
}

TEST_CASE("cross-validation report") {
  const Dataset& ds = small_dataset();
  TrainConfig c = quick(1.0, 5, 2);
  const TrainResult r = train(ds, c);
  REQUIRE(r.cv.folds.size() == 5);
  for (const auto& f : r.cv.folds) {
    // Rotated copies of a base voxel (10 each) never straddle folds.
    CHECK(f.val_count % 10 == 0);
    CHECK(f.train_count + f.val_count == ds.labeled.size());
    CHECK(f.val_count == 60);
    REQUIRE(f.val_loss.size() == 2);
    CHECK(f.val_loss.back() < f.initial_val_loss);
    CHECK(f.val_mean_acc.size() == 2);
  }
  CHECK(r.cv.mean_val_loss.size() == 2);
  CHECK(r.cv.selected_epochs >= 1);
  CHECK(r.cv.selected_epochs <= 2);
  CHECK(r.cv.train_loss.size() == r.cv.selected_epochs);

  const TrainResult again = train(ds, c);
  CHECK(again.model == r.model);
  CHECK(again.cv.mean_val_loss == r.cv.mean_val_loss);

  const TrainResult default_folds = train(ds, TrainConfig{});
  CHECK(default_folds.cv.folds.size() == 5);
}

TEST_CASE("prediction") {
  const MlpModel zero = MlpModel::zeros();
  const ShVec x = small_dataset().labeled[0].x;
  const ShVec y = predict(zero, x);
  CHECK(y.order() == kFodOrder);
  CHECK(y.size() == 66);
  CHECK(y.coeffs().isZero(0.0));
  CHECK_FALSE(try_acc(y, small_dataset().labeled[0].y).has_value());
  CHECK_THROWS_AS(predict(zero, ShVec(10)), ValidationError);

  const MlpModel model = nsdn::testing::random_model(1);
  std::vector<ShVec> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(small_dataset().labeled[i].x);
  const auto batch = predict_batch(model, xs);
  for (int i = 0; i < 5; ++i) CHECK((batch[i].coeffs() - predict(model, xs[i]).coeffs()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a heavily trained network memorizes noiseless training data") {
  ScannerProfile clean = default_profile_truth();
  clean.rician_sigma = 0.0;
  const Dataset ds = make_labeled(20, clean, FiberDistribution{}, 0, 3, 1);
  TrainConfig c = quick(0.0, 0, 600);
  c.batch_size = 20;
  const MlpModel model = fit_epochs(ds.labeled, {}, c, c.epochs, 0);
  std::vector<ShVec> xs;
  std::vector<ShVec> ys;
  for (const auto& v : ds.labeled) {
    xs.push_back(v.x);
    ys.push_back(v.y);
  }
  const AccReport r = acc_batch(predict_batch(model, xs), ys);
  CHECK(*r.median > 0.99);
}
