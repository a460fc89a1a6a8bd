#pragma once

// Experiment driver behind the `nsdn` command line tool.
//
// Files under the output directory:
//   simulate  train.jsonl blind.jsonl seen_pairs.jsonl unseen_pairs.jsonl
//   train     nsdn_model.json dn_model.json cv_report.json
//   predict   predictions.jsonl
//   evaluate  report.json
//   report    histograms.csv (and a summary on stdout)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsdn/csd.hpp"
#include "nsdn/io.hpp"
#include "nsdn/metrics.hpp"
#include "nsdn/train.hpp"

namespace nsdn {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitNonConvergence = 3 };

struct RunConfig {
  std::uint64_t seed = 2018;
  std::string out = "out";
  // Where train/evaluate read datasets from; empty means `out`.
  std::string data_dir;

  // simulate
  std::size_t base_voxels = 625;
  double blind_fraction = 0.2;
  std::size_t n_rotations = 9;
  std::size_t paired_train = 5000;
  std::size_t paired_seen = 1000;
  std::size_t paired_unseen = 1000;
  FiberDistribution fibers;
  std::string profile_truth = "dirs=100,b=6000,sigma=0.04,gain=1,rotation=0,dscale=0.3333333333333333";
  std::string profile_a = "dirs=96,b=2000,sigma=0.02,gain=1,rotation=0,dscale=1";
  std::string profile_b = "dirs=96,b=2000,sigma=0.04,gain=1.1,rotation=7,dscale=1";
  std::string profile_c = "dirs=96,b=2000,sigma=0.03,gain=0.9,rotation=11,dscale=1";

  // train. 23 epochs over 5,000 voxels is roughly the optimizer step count of
  // 3 epochs over 37,648 voxels.
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = 23;
    return t;
  }();
  bool train_dn = true;

  // evaluate
  CsdConfig csd;

  // predict
  std::string model_path;
  std::string input_path;

  // report
  std::string report_path;

  void validate() const;
  std::filesystem::path data_path() const { return data_dir.empty() ? out : data_dir; }
};

Json config_to_json(const RunConfig& c);
// Overlays the keys present in j onto base.
RunConfig config_from_json(const Json& j, RunConfig base = {});

// NSDN_SEED, NSDN_LAMBDA, NSDN_OUT, NSDN_DATA_DIR, NSDN_EPOCHS
constexpr const char* kEnvPrefix = "NSDN_";
void apply_environment(RunConfig& c);

struct SimulateOutput {
  Dataset train;
  Dataset blind;
  Dataset seen_pairs;
  Dataset unseen_pairs;
};

SimulateOutput simulate(const RunConfig& c);
SimulateOutput cmd_simulate(const RunConfig& c);

struct TrainOutput {
  TrainResult nsdn;
  std::optional<TrainResult> dn;
};

TrainOutput cmd_train(const RunConfig& c);

void cmd_predict(const RunConfig& c);

struct MethodSummary {
  std::string name;
  AccReport acc;
};

struct Comparison {
  std::string a;
  std::string b;
  std::optional<SignedRankResult> test;  // nullopt with fewer than 5 common voxels
  std::optional<double> median_difference;  // median(a) - median(b)
  std::optional<double> relative_gain;      // (median(a) - median(b)) / median(b)
};

struct EvalBlock {
  std::string name;
  std::size_t voxels = 0;
  std::vector<MethodSummary> methods;
  std::vector<Comparison> comparisons;
  std::size_t csd_nonconverged = 0;

  const MethodSummary* method(const std::string& n) const;
  const Comparison* comparison(const std::string& a, const std::string& b) const;
};

struct EvaluationReport {
  std::vector<EvalBlock> blocks;

  const EvalBlock* block(const std::string& n) const;
  std::size_t csd_nonconverged() const;
};

Json report_to_json(const EvaluationReport& r, const Json& config);
EvaluationReport cmd_evaluate(const RunConfig& c);

// Median table, gains, histogram CSV.
void cmd_report(const RunConfig& c, std::ostream& out);

std::string histogram_csv(const Json& report);
// block -> method -> counts
std::map<std::string, std::map<std::string, Histogram>> parse_histogram_csv(const std::string& csv);

// simulate, train, evaluate, report in one go.
int cmd_pipeline(const RunConfig& c, std::ostream& out);

// Full CLI entry point; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace nsdn
