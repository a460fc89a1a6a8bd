// Checks on the models trained by the acceptance benchmark run.

#include <doctest.h>

#include <cstdlib>

#include "nsdn/app.hpp"
#include "nsdn/io.hpp"
#include "nsdn/metrics.hpp"
#include "support.hpp"

using namespace nsdn;
namespace fs = std::filesystem;

namespace {

fs::path bench_dir() {
  const char* d = std::getenv("NSDN_BENCHMARK_DIR");
  REQUIRE(d != nullptr);
  return d;
}

}  // namespace

TEST_CASE("validation loss falls during training") {
  const Json cv = Json::parse(testing::slurp(bench_dir() / "cv_report.json"));
  for (const char* method : {"nsdn", "dn"}) {
    CAPTURE(method);
    REQUIRE(cv.at(method).at("folds").size() == 5);
    for (const auto& fold : cv.at(method).at("folds")) {
      const double initial = fold.at("initial_val_loss");
      const auto losses = fold.at("val_loss").get<std::vector<double>>();
      REQUIRE_FALSE(losses.empty());
      CHECK(*std::min_element(losses.begin(), losses.end()) < initial);
      CHECK(losses.back() < 0.5 * initial);
    }
  }
}

TEST_CASE("noiseless single-fiber voxels are recovered") {
  const MlpModel model = read_model(bench_dir() / "nsdn_model.json");
  ScannerProfile truth = default_profile_truth();
  truth.rician_sigma = 0.0;
  const Acquisition acq(truth);
  Rng rng = make_stream(7, 0);
  std::vector<std::optional<double>> scores;
  for (int i = 0; i < 200; ++i) {
    const VoxelPhantom phantom({TensorCompartment{random_direction(rng)}});
    scores.push_back(acc(predict(model, acq.acquire(phantom, rng)), phantom.truth_fod()));
  }
  const AccReport r = summarize_acc(scores);
  REQUIRE(r.median.has_value());
  MESSAGE("median ACC on noiseless single fibers: " << *r.median);
  CHECK(*r.median > 0.9);
}

TEST_CASE("reproducibility ordering in the saved report") {
  const Json report = Json::parse(testing::slurp(bench_dir() / "report.json"));
  for (const auto& block : report.at("blocks")) {
    if (block.at("name") == "truth") continue;
    double nsdn = 0.0;
    double dn = 0.0;
    for (const auto& m : block.at("methods")) {
      if (m.at("name") == "NSDN") nsdn = m.at("median");
      if (m.at("name") == "DN") dn = m.at("median");
    }
    CAPTURE(block.at("name").get<std::string>());
    CHECK(nsdn > dn);
  }
}
