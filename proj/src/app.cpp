#include "nsdn/app.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace nsdn {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStreamLabeled = 1;
constexpr std::uint64_t kStreamTrainPairs = 2;
constexpr std::uint64_t kStreamSeenPairs = 3;
constexpr std::uint64_t kStreamUnseenPairs = 4;

const char* const kTrainFile = "train.jsonl";
const char* const kBlindFile = "blind.jsonl";
const char* const kSeenFile = "seen_pairs.jsonl";
const char* const kUnseenFile = "unseen_pairs.jsonl";
const char* const kNsdnModelFile = "nsdn_model.json";
const char* const kDnModelFile = "dn_model.json";
const char* const kCvFile = "cv_report.json";
const char* const kPredictionsFile = "predictions.jsonl";
const char* const kReportFile = "report.json";
const char* const kHistogramFile = "histograms.csv";

template <typename T>
void overlay(const Json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

Json vec_json(const ShVec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

void RunConfig::validate() const {
  if (base_voxels < 2) throw ValidationError("base_voxels must be >= 2");
  if (!(blind_fraction > 0.0 && blind_fraction < 1.0)) throw ValidationError("blind_fraction must be in (0, 1)");
  if (paired_seen < kMinSignedRankSamples || paired_unseen < kMinSignedRankSamples) {
    throw ValidationError("evaluation pair counts must be >= 5");
  }
  fibers.validate();
  for (const auto* spec : {&profile_truth, &profile_a, &profile_b, &profile_c}) ProfileSpec::parse(*spec);
  train.validate();
  csd.validate(kSignalOrder);
}

Json config_to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["data_dir"] = c.data_dir;
  Json sim;
  sim["base_voxels"] = c.base_voxels;
  sim["blind_fraction"] = c.blind_fraction;
  sim["n_rotations"] = c.n_rotations;
  sim["paired_train"] = c.paired_train;
  sim["paired_seen"] = c.paired_seen;
  sim["paired_unseen"] = c.paired_unseen;
  sim["p_single"] = c.fibers.p_single;
  sim["min_crossing_deg"] = c.fibers.min_crossing_deg;
  sim["min_fraction"] = c.fibers.min_fraction;
  sim["axial"] = c.fibers.axial;
  sim["radial"] = c.fibers.radial;
  j["simulate"] = sim;
  j["profiles"] = {{"truth", c.profile_truth}, {"a", c.profile_a}, {"b", c.profile_b}, {"c", c.profile_c}};
  Json tr;
  tr["lambda"] = c.train.lambda;
  tr["batch_size"] = c.train.batch_size;
  tr["folds"] = c.train.folds;
  tr["val_fraction"] = c.train.val_fraction;
  tr["epochs"] = c.train.epochs;
  tr["learning_rate"] = c.train.rmsprop.learning_rate;
  tr["rho"] = c.train.rmsprop.rho;
  tr["epsilon"] = c.train.rmsprop.epsilon;
  tr["train_dn"] = c.train_dn;
  j["train"] = tr;
  Json csd;
  csd["output_order"] = c.csd.output_order;
  csd["constraint_directions"] = c.csd.constraint_directions;
  csd["tau"] = c.csd.tau;
  csd["alpha"] = c.csd.alpha;
  csd["max_iterations"] = c.csd.max_iterations;
  j["csd"] = csd;
  j["predict"] = {{"model", c.model_path}, {"input", c.input_path}};
  j["report"] = {{"path", c.report_path}};
  return j;
}

RunConfig config_from_json(const Json& j, RunConfig c) {
  try {
    overlay(j, "seed", c.seed);
    overlay(j, "out", c.out);
    overlay(j, "data_dir", c.data_dir);
    if (j.contains("simulate")) {
      const Json& s = j.at("simulate");
      overlay(s, "base_voxels", c.base_voxels);
      overlay(s, "blind_fraction", c.blind_fraction);
      overlay(s, "n_rotations", c.n_rotations);
      overlay(s, "paired_train", c.paired_train);
      overlay(s, "paired_seen", c.paired_seen);
      overlay(s, "paired_unseen", c.paired_unseen);
      overlay(s, "p_single", c.fibers.p_single);
      overlay(s, "min_crossing_deg", c.fibers.min_crossing_deg);
      overlay(s, "min_fraction", c.fibers.min_fraction);
      overlay(s, "axial", c.fibers.axial);
      overlay(s, "radial", c.fibers.radial);
    }
    if (j.contains("profiles")) {
      const Json& p = j.at("profiles");
      overlay(p, "truth", c.profile_truth);
      overlay(p, "a", c.profile_a);
      overlay(p, "b", c.profile_b);
      overlay(p, "c", c.profile_c);
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      overlay(t, "lambda", c.train.lambda);
      overlay(t, "batch_size", c.train.batch_size);
      overlay(t, "folds", c.train.folds);
      overlay(t, "val_fraction", c.train.val_fraction);
      overlay(t, "epochs", c.train.epochs);
      overlay(t, "learning_rate", c.train.rmsprop.learning_rate);
      overlay(t, "rho", c.train.rmsprop.rho);
      overlay(t, "epsilon", c.train.rmsprop.epsilon);
      overlay(t, "train_dn", c.train_dn);
    }
    if (j.contains("csd")) {
      const Json& s = j.at("csd");
      overlay(s, "output_order", c.csd.output_order);
      overlay(s, "constraint_directions", c.csd.constraint_directions);
      overlay(s, "tau", c.csd.tau);
      overlay(s, "alpha", c.csd.alpha);
      overlay(s, "max_iterations", c.csd.max_iterations);
    }
    if (j.contains("predict")) {
      overlay(j.at("predict"), "model", c.model_path);
      overlay(j.at("predict"), "input", c.input_path);
    }
    if (j.contains("report")) overlay(j.at("report"), "path", c.report_path);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad config: ") + e.what());
  }
  return c;
}

void apply_environment(RunConfig& c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const std::string full = std::string(kEnvPrefix) + name;
    if (const char* v = std::getenv(full.c_str())) return std::string(v);
    return std::nullopt;
  };
  try {
    if (auto v = env("SEED")) c.seed = std::stoull(*v);
    if (auto v = env("LAMBDA")) c.train.lambda = std::stod(*v);
    if (auto v = env("OUT")) c.out = *v;
    if (auto v = env("DATA_DIR")) c.data_dir = *v;
    if (auto v = env("EPOCHS")) c.train.epochs = std::stoull(*v);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("bad environment override: ") + e.what());
  }
}

SimulateOutput simulate(const RunConfig& c) {
  c.validate();
  const ScannerProfile truth = ProfileSpec::parse(c.profile_truth).build();
  const ScannerProfile site_a = ProfileSpec::parse(c.profile_a).build();
  const ScannerProfile site_b = ProfileSpec::parse(c.profile_b).build();
  const ScannerProfile site_c = ProfileSpec::parse(c.profile_c).build();

  const auto blind_base = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(c.blind_fraction * static_cast<double>(c.base_voxels))), 1,
      c.base_voxels - 1);
  const std::size_t train_base = c.base_voxels - blind_base;

  Dataset all = make_labeled(c.base_voxels, truth, c.fibers, c.n_rotations, c.seed, kStreamLabeled);
  SimulateOutput out;
  for (auto* ds : {&out.train, &out.blind, &out.seen_pairs, &out.unseen_pairs}) ds->seed = c.seed;
  for (std::size_t i = 0; i < all.labeled.size(); ++i) {
    Dataset& dst = all.labeled_group[i] < train_base ? out.train : out.blind;
    dst.labeled.push_back(all.labeled[i]);
    dst.labeled_group.push_back(all.labeled_group[i]);
  }
  out.train.fit_failures = all.fit_failures;

  Dataset pairs = make_paired(c.paired_train, site_a, site_b, c.fibers, c.seed, kStreamTrainPairs);
  out.train.paired = std::move(pairs.paired);
  out.train.fit_failures += pairs.fit_failures;
  out.train.profiles = {{"truth", truth}, {"a", site_a}, {"b", site_b}};
  out.blind.profiles = {{"truth", truth}};

  out.seen_pairs = make_paired(c.paired_seen, site_a, site_b, c.fibers, c.seed, kStreamSeenPairs);
  out.seen_pairs.profiles = {{"a", site_a}, {"b", site_b}};
  out.unseen_pairs = make_paired(c.paired_unseen, site_b, site_c, c.fibers, c.seed, kStreamUnseenPairs);
  out.unseen_pairs.profiles = {{"a", site_b}, {"b", site_c}};
  return out;
}

SimulateOutput cmd_simulate(const RunConfig& c) {
  SimulateOutput out = simulate(c);
  const Json config = config_to_json(c);
  // Serialize everything before the first write.
  const std::string train = dataset_to_jsonl(out.train, config);
  const std::string blind = dataset_to_jsonl(out.blind, config);
  const std::string seen = dataset_to_jsonl(out.seen_pairs, config);
  const std::string unseen = dataset_to_jsonl(out.unseen_pairs, config);
  const fs::path dir = c.out;
  atomic_write(dir / kTrainFile, train);
  atomic_write(dir / kBlindFile, blind);
  atomic_write(dir / kSeenFile, seen);
  atomic_write(dir / kUnseenFile, unseen);
  return out;
}

TrainOutput cmd_train(const RunConfig& c) {
  c.validate();
  const DatasetFile file = read_dataset(c.data_path() / kTrainFile);
  TrainConfig cfg = c.train;
  cfg.seed = c.seed;
  if (cfg.lambda > 0.0 && file.data.paired.empty()) {
    throw ValidationError("lambda > 0 but " + (c.data_path() / kTrainFile).string() + " has no paired records");
  }
  TrainOutput out;
  out.nsdn = train(file.data, cfg);
  if (c.train_dn) {
    TrainConfig dn_cfg = cfg;
    dn_cfg.lambda = 0.0;
    out.dn = train(file.data.labeled, {}, dn_cfg, file.data.labeled_group);
  }

  const Json config = config_to_json(c);
  const fs::path dir = c.out;
  Json cv;
  cv["format_version"] = kReportFormatVersion;
  cv["config"] = config;
  cv["nsdn"] = cv_report_to_json(out.nsdn.cv);
  if (out.dn) cv["dn"] = cv_report_to_json(out.dn->cv);
  write_model(dir / kNsdnModelFile, out.nsdn.model, config);
  if (out.dn) write_model(dir / kDnModelFile, out.dn->model, config);
  atomic_write(dir / kCvFile, cv.dump(2) + "\n");
  return out;
}

void cmd_predict(const RunConfig& c) {
  if (c.input_path.empty()) throw ValidationError("predict needs --input <dataset.jsonl>");
  const fs::path model_path = c.model_path.empty() ? fs::path(c.out) / kNsdnModelFile : fs::path(c.model_path);
  const MlpModel model = read_model(model_path);
  const DatasetFile file = read_dataset(c.input_path);

  Json header;
  header["format_version"] = kDatasetFormatVersion;
  header["sh_order_out"] = kFodOrder;
  header["model"] = model_path.string();
  header["input"] = c.input_path;
  header["config"] = config_to_json(c);
  std::string text = header.dump() + "\n";
  for (const auto& v : file.data.labeled) {
    Json r;
    r["kind"] = "labeled";
    r["fod"] = vec_json(predict(model, v.x));
    text += r.dump() + "\n";
  }
  for (const auto& p : file.data.paired) {
    Json r;
    r["kind"] = "paired";
    r["fod_a"] = vec_json(predict(model, p.xa));
    r["fod_b"] = vec_json(predict(model, p.xb));
    text += r.dump() + "\n";
  }
  atomic_write(fs::path(c.out) / kPredictionsFile, text);
}

const MethodSummary* EvalBlock::method(const std::string& n) const {
  for (const auto& m : methods) {
    if (m.name == n) return &m;
  }
  return nullptr;
}

const Comparison* EvalBlock::comparison(const std::string& a, const std::string& b) const {
  for (const auto& cmp : comparisons) {
    if (cmp.a == a && cmp.b == b) return &cmp;
  }
  return nullptr;
}

const EvalBlock* EvaluationReport::block(const std::string& n) const {
  for (const auto& b : blocks) {
    if (b.name == n) return &b;
  }
  return nullptr;
}

std::size_t EvaluationReport::csd_nonconverged() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.csd_nonconverged;
  return n;
}

namespace {

struct Predictor {
  std::string name;
  std::function<ShVec(const ShVec& x, bool second_channel, std::size_t& nonconverged)> fn;
};

void add_comparisons(EvalBlock& block) {
  for (std::size_t i = 0; i < block.methods.size(); ++i) {
    for (std::size_t j = i + 1; j < block.methods.size(); ++j) {
      const auto& A = block.methods[i];
      const auto& B = block.methods[j];
      Comparison cmp;
      cmp.a = A.name;
      cmp.b = B.name;
      std::vector<double> va;
      std::vector<double> vb;
      for (std::size_t k = 0; k < A.acc.per_voxel.size(); ++k) {
        if (A.acc.per_voxel[k] && B.acc.per_voxel[k]) {
          va.push_back(*A.acc.per_voxel[k]);
          vb.push_back(*B.acc.per_voxel[k]);
        }
      }
      if (va.size() >= kMinSignedRankSamples) cmp.test = signed_rank_test(va, vb);
      if (A.acc.median && B.acc.median) {
        cmp.median_difference = *A.acc.median - *B.acc.median;
        if (*B.acc.median != 0.0) cmp.relative_gain = *cmp.median_difference / *B.acc.median;
      }
      block.comparisons.push_back(std::move(cmp));
    }
  }
}

EvalBlock truth_block(const Dataset& ds, const std::vector<std::pair<std::string, const MlpModel*>>& nets,
                      const CsdSolver& csd) {
  EvalBlock block;
  block.name = "truth";
  block.voxels = ds.labeled.size();
  std::vector<ShVec> xs;
  std::vector<ShVec> truth;
  for (const auto& v : ds.labeled) {
    xs.push_back(v.x);
    truth.push_back(v.y);
  }
  for (const auto& [name, model] : nets) block.methods.push_back({name, acc_batch(predict_batch(*model, xs), truth)});
  std::vector<ShVec> fods;
  for (const auto& x : xs) {
    CsdResult r = csd.deconvolve(x);
    if (!r.converged) ++block.csd_nonconverged;
    fods.push_back(std::move(r.fod));
  }
  block.methods.push_back({"CSD", acc_batch(fods, truth)});
  add_comparisons(block);
  return block;
}

EvalBlock pair_block(const std::string& name, const Dataset& ds,
                     const std::vector<std::pair<std::string, const MlpModel*>>& nets, const CsdSolver& csd_a,
                     const CsdSolver& csd_b) {
  EvalBlock block;
  block.name = name;
  block.voxels = ds.paired.size();
  std::vector<ShVec> xa;
  std::vector<ShVec> xb;
  for (const auto& p : ds.paired) {
    xa.push_back(p.xa);
    xb.push_back(p.xb);
  }
  for (const auto& [mname, model] : nets) {
    block.methods.push_back({mname, acc_batch(predict_batch(*model, xa), predict_batch(*model, xb))});
  }
  std::vector<ShVec> fa;
  std::vector<ShVec> fb;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    CsdResult ra = csd_a.deconvolve(xa[i]);
    CsdResult rb = csd_b.deconvolve(xb[i]);
    block.csd_nonconverged += static_cast<std::size_t>(!ra.converged) + static_cast<std::size_t>(!rb.converged);
    fa.push_back(std::move(ra.fod));
    fb.push_back(std::move(rb.fod));
  }
  block.methods.push_back({"CSD", acc_batch(fa, fb)});
  add_comparisons(block);
  return block;
}

const ScannerProfile& profile_named(const Dataset& ds, const std::string& name, const std::string& file) {
  auto it = ds.profiles.find(name);
  if (it == ds.profiles.end()) throw ValidationError(file + " header lacks profile '" + name + "'");
  return it->second;
}

}  // namespace

Json report_to_json(const EvaluationReport& r, const Json& config) {
  Json j;
  j["format_version"] = kReportFormatVersion;
  j["config"] = config;
  Json blocks = Json::array();
  for (const auto& b : r.blocks) {
    Json bj;
    bj["name"] = b.name;
    bj["voxels"] = b.voxels;
    bj["csd_nonconverged"] = b.csd_nonconverged;
    Json methods = Json::array();
    for (const auto& m : b.methods) {
      Json mj;
      mj["name"] = m.name;
      mj["median"] = optional_json(m.acc.median);
      mj["evaluated"] = m.acc.defined.size();
      mj["excluded"] = m.acc.excluded;
      mj["histogram"] = m.acc.counts;
      methods.push_back(std::move(mj));
    }
    bj["methods"] = std::move(methods);
    Json cmps = Json::array();
    for (const auto& cmp : b.comparisons) {
      Json cj;
      cj["a"] = cmp.a;
      cj["b"] = cmp.b;
      if (cmp.test) {
        cj["p_value"] = cmp.test->p_value;
        cj["w_plus"] = cmp.test->w_plus;
        cj["n_used"] = cmp.test->n_used;
        cj["exact"] = cmp.test->exact;
        cj["degenerate"] = cmp.test->degenerate;
      } else {
        cj["p_value"] = nullptr;
      }
      cj["median_difference"] = optional_json(cmp.median_difference);
      cj["relative_gain"] = optional_json(cmp.relative_gain);
      cmps.push_back(std::move(cj));
    }
    bj["comparisons"] = std::move(cmps);
    blocks.push_back(std::move(bj));
  }
  j["blocks"] = std::move(blocks);
  j["csd_nonconverged"] = r.csd_nonconverged();
  return j;
}

EvaluationReport cmd_evaluate(const RunConfig& c) {
  c.validate();
  const fs::path data = c.data_path();
  const fs::path dir = c.out;
  const MlpModel nsdn = read_model(dir / kNsdnModelFile);
  std::optional<MlpModel> dn;
  if (fs::exists(dir / kDnModelFile)) dn = read_model(dir / kDnModelFile);
  std::vector<std::pair<std::string, const MlpModel*>> nets{{"NSDN", &nsdn}};
  if (dn) nets.emplace_back("DN", &*dn);

  const DatasetFile blind = read_dataset(data / kBlindFile);
  const DatasetFile seen = read_dataset(data / kSeenFile);
  const DatasetFile unseen = read_dataset(data / kUnseenFile);
  auto solver = [&](const DatasetFile& f, const std::string& profile, const char* file) {
    return CsdSolver(response_for_profile(profile_named(f.data, profile, file), c.fibers.axial, c.fibers.radial),
                     c.csd);
  };

  EvaluationReport report;
  report.blocks.push_back(truth_block(blind.data, nets, solver(blind, "truth", kBlindFile)));
  report.blocks.push_back(
      pair_block("seen_pairs", seen.data, nets, solver(seen, "a", kSeenFile), solver(seen, "b", kSeenFile)));
  report.blocks.push_back(pair_block("unseen_pairs", unseen.data, nets, solver(unseen, "a", kUnseenFile),
                                     solver(unseen, "b", kUnseenFile)));
  atomic_write(dir / kReportFile, report_to_json(report, config_to_json(c)).dump(2) + "\n");
  return report;
}

std::string histogram_csv(const Json& report) {
  std::ostringstream csv;
  csv << "block,method,bin,lower,upper,count\n";
  for (const auto& b : report.at("blocks")) {
    for (const auto& m : b.at("methods")) {
      const auto& h = m.at("histogram");
      for (int k = 0; k < kHistogramBins; ++k) {
        const double lo = -1.0 + 2.0 * k / kHistogramBins;
        const double hi = -1.0 + 2.0 * (k + 1) / kHistogramBins;
        csv << b.at("name").get<std::string>() << ',' << m.at("name").get<std::string>() << ',' << k << ','
            << Json(lo).dump() << ',' << Json(hi).dump() << ',' << h.at(static_cast<std::size_t>(k)).get<long>()
            << '\n';
      }
    }
  }
  return csv.str();
}

std::map<std::string, std::map<std::string, Histogram>> parse_histogram_csv(const std::string& csv) {
  std::map<std::string, std::map<std::string, Histogram>> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  if (line != "block,method,bin,lower,upper,count") throw ValidationError("unexpected histogram CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ValidationError("histogram CSV row needs 6 cells: " + line);
    const int bin = std::stoi(cells[2]);
    if (bin < 0 || bin >= kHistogramBins) throw ValidationError("histogram bin out of range");
    auto& h = out[cells[0]].try_emplace(cells[1], Histogram{}).first->second;
    h[static_cast<std::size_t>(bin)] = std::stol(cells[5]);
  }
  return out;
}

void cmd_report(const RunConfig& c, std::ostream& out) {
  const fs::path path = c.report_path.empty() ? fs::path(c.out) / kReportFile : fs::path(c.report_path);
  Json report;
  try {
    report = Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  if (report.value("format_version", -1) != kReportFormatVersion) {
    throw ValidationError(path.string() + ": unsupported report format_version");
  }

  auto fmt = [](const Json& v, int precision = 4) {
    if (v.is_null()) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v.get<double>();
    return s.str();
  };

  std::vector<std::string> method_names;
  for (const auto& b : report.at("blocks")) {
    for (const auto& m : b.at("methods")) {
      const auto name = m.at("name").get<std::string>();
      if (std::find(method_names.begin(), method_names.end(), name) == method_names.end()) {
        method_names.push_back(name);
      }
    }
  }

  out << "Median ACC\n";
  out << std::left << std::setw(14) << "block";
  for (const auto& n : method_names) out << std::setw(10) << n;
  out << "\n";
  for (const auto& b : report.at("blocks")) {
    out << std::setw(14) << b.at("name").get<std::string>();
    for (const auto& n : method_names) {
      Json median = nullptr;
      for (const auto& m : b.at("methods")) {
        if (m.at("name") == n && m.at("evaluated").get<long>() > 0) median = m.at("median");
      }
      out << std::setw(10) << fmt(median);
    }
    out << "\n";
  }

  out << "\nGains (difference of medians; relative = difference / second median)\n";
  for (const auto& b : report.at("blocks")) {
    for (const auto& cmp : b.at("comparisons")) {
      const Json& rel = cmp.at("relative_gain");
      out << "  " << std::setw(14) << b.at("name").get<std::string>() << cmp.at("a").get<std::string>() << " vs "
          << cmp.at("b").get<std::string>() << ": difference " << fmt(cmp.at("median_difference"))
          << ", relative " << (rel.is_null() ? std::string("n/a") : fmt(Json(100.0 * rel.get<double>()), 2) + "%")
          << ", signed-rank p " << (cmp.at("p_value").is_null() ? std::string("n/a") : [&] {
               std::ostringstream s;
               s << std::scientific << std::setprecision(3) << cmp.at("p_value").get<double>();
               return s.str();
             }())
          << "\n";
    }
  }
  const fs::path csv_path = fs::path(c.out) / kHistogramFile;
  atomic_write(csv_path, histogram_csv(report));
  out << "\nHistograms written to " << csv_path.string() << "\n";
}

int cmd_pipeline(const RunConfig& c, std::ostream& out) {
  cmd_simulate(c);
  RunConfig staged = c;
  staged.data_dir.clear();
  cmd_train(staged);
  const EvaluationReport report = cmd_evaluate(staged);
  cmd_report(staged, out);
  return report.csd_nonconverged() > 0 ? kExitNonConvergence : kExitOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Null space deep network harmonization on synthetic diffusion MRI"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::string> out_dir;
  std::optional<std::string> data_dir;
  std::optional<std::size_t> epochs;
  std::optional<std::string> prof_truth, prof_a, prof_b, prof_c;
  std::optional<std::string> model_path, input_path, report_path;
  bool no_dn = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "Global seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--data-dir", data_dir, "Dataset directory (defaults to --out)");
  };
  auto profiles = [&](CLI::App* sub) {
    sub->add_option("--profile-truth", prof_truth, "Labeled-data scanner profile spec");
    sub->add_option("--profile-a", prof_a, "Site A profile spec");
    sub->add_option("--profile-b", prof_b, "Site B profile spec");
    sub->add_option("--profile-c", prof_c, "Unseen site C profile spec");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--lambda", lambda, "Consistency weight (0 trains the plain network)");
    sub->add_option("--epochs", epochs, "Training epochs");
    sub->add_flag("--no-dn", no_dn, "Skip the lambda = 0 baseline");
  };

  auto* sim = app.add_subcommand("simulate", "Generate synthetic datasets");
  common(sim);
  profiles(sim);
  auto* trn = app.add_subcommand("train", "Train NSDN (and the DN baseline)");
  common(trn);
  training(trn);
  auto* prd = app.add_subcommand("predict", "Predict FODs for a dataset file");
  common(prd);
  prd->add_option("--model", model_path, "Model JSON (defaults to <out>/nsdn_model.json)");
  prd->add_option("--input", input_path, "Dataset JSON lines")->required();
  auto* evl = app.add_subcommand("evaluate", "Evaluate NSDN, DN and CSD");
  common(evl);
  auto* rep = app.add_subcommand("report", "Summarize an evaluation report");
  common(rep);
  rep->add_option("--report", report_path, "Report JSON (defaults to <out>/report.json)");
  auto* pipe = app.add_subcommand("pipeline", "simulate, train, evaluate and report");
  common(pipe);
  profiles(pipe);
  training(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    RunConfig c;
    if (config_path) {
      Json j;
      try {
        j = Json::parse(read_text(*config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(*config_path + ": invalid JSON: " + e.what());
      }
      c = config_from_json(j, c);
    }
    apply_environment(c);
    if (seed) c.seed = *seed;
    if (lambda) c.train.lambda = *lambda;
    if (out_dir) c.out = *out_dir;
    if (data_dir) c.data_dir = *data_dir;
    if (epochs) c.train.epochs = *epochs;
    if (prof_truth) c.profile_truth = *prof_truth;
    if (prof_a) c.profile_a = *prof_a;
    if (prof_b) c.profile_b = *prof_b;
    if (prof_c) c.profile_c = *prof_c;
    if (model_path) c.model_path = *model_path;
    if (input_path) c.input_path = *input_path;
    if (report_path) c.report_path = *report_path;
    if (no_dn) c.train_dn = false;
    c.validate();

    if (sim->parsed()) {
      cmd_simulate(c);
      out << "datasets written to " << c.out << "\n";
    } else if (trn->parsed()) {
      const TrainOutput t = cmd_train(c);
      out << "NSDN trained for " << t.nsdn.cv.selected_epochs << " epochs";
      if (t.dn) out << "; DN trained for " << t.dn->cv.selected_epochs << " epochs";
      out << "\n";
    } else if (prd->parsed()) {
      cmd_predict(c);
    } else if (evl->parsed()) {
      const EvaluationReport r = cmd_evaluate(c);
      if (r.csd_nonconverged() > 0) {
        err << "warning: " << r.csd_nonconverged() << " CSD fits did not converge\n";
        return kExitNonConvergence;
      }
    } else if (rep->parsed()) {
      cmd_report(c, out);
    } else if (pipe->parsed()) {
      return cmd_pipeline(c, out);
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace nsdn
