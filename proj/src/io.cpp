#include "nsdn/io.hpp"

#include <fstream>
#include <sstream>

namespace nsdn {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ValidationError("profile key '" + key + "': bad number '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (!value.empty() && value[0] != '-') v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ValidationError("profile key '" + key + "': bad integer '" + value + "'");
  }
  return v;
}

std::string format_double(double v) { return Json(v).dump(); }

Json vec_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const Json& j, Eigen::Index expected, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array");
  if (static_cast<Eigen::Index>(j.size()) != expected) {
    throw ValidationError(what + " has " + std::to_string(j.size()) + " values, expected " +
                          std::to_string(expected));
  }
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) {
    const auto& e = j[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw ValidationError(what + " contains a non-number");
    v[i] = e.get<double>();
  }
  return v;
}

}  // namespace

ProfileSpec ProfileSpec::parse(const std::string& text) {
  ProfileSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("profile spec item '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "dirs") {
      spec.dirs = static_cast<Eigen::Index>(parse_u64(key, value));
    } else if (key == "b") {
      spec.b = parse_double(key, value);
    } else if (key == "sigma") {
      spec.sigma = parse_double(key, value);
    } else if (key == "gain") {
      spec.gain = parse_double(key, value);
    } else if (key == "rotation") {
      spec.rotation = parse_u64(key, value);
    } else if (key == "dscale") {
      spec.dscale = parse_double(key, value);
    } else {
      throw ValidationError("unknown profile key '" + key + "'");
    }
  }
  spec.build();
  return spec;
}

std::string ProfileSpec::str() const {
  return "dirs=" + std::to_string(dirs) + ",b=" + format_double(b) + ",sigma=" + format_double(sigma) +
         ",gain=" + format_double(gain) + ",rotation=" + std::to_string(rotation) +
         ",dscale=" + format_double(dscale);
}

ScannerProfile ProfileSpec::build() const { return make_profile(dirs, b, sigma, gain, rotation, dscale); }

Json profile_to_json(const ScannerProfile& p) {
  Json j;
  j["b_value"] = p.scheme.b_value;
  j["rician_sigma"] = p.rician_sigma;
  j["gain"] = p.gain;
  j["diffusivity_scale"] = p.diffusivity_scale;
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(p.scheme_rotation.matrix()(r, c));
  }
  j["scheme_rotation"] = rot;
  Json dirs = Json::array();
  for (Eigen::Index i = 0; i < p.scheme.directions.cols(); ++i) {
    dirs.push_back(Json::array({p.scheme.directions(0, i), p.scheme.directions(1, i), p.scheme.directions(2, i)}));
  }
  j["directions"] = dirs;
  return j;
}

ScannerProfile profile_from_json(const Json& j) {
  try {
    ScannerProfile p;
    p.scheme.b_value = j.at("b_value").get<double>();
    p.rician_sigma = j.at("rician_sigma").get<double>();
    p.gain = j.at("gain").get<double>();
    p.diffusivity_scale = j.value("diffusivity_scale", 1.0);
    const Eigen::VectorXd rot = vec_from_json(j.at("scheme_rotation"), 9, "scheme_rotation");
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) = rot[r * 3 + c];
    }
    p.scheme_rotation = Rotation3(m);
    const auto& dirs = j.at("directions");
    p.scheme.directions.resize(3, static_cast<Eigen::Index>(dirs.size()));
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      p.scheme.directions.col(static_cast<Eigen::Index>(i)) = vec_from_json(dirs[i], 3, "direction");
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad scanner profile: ") + e.what());
  }
}

std::string dataset_to_jsonl(const Dataset& ds, const Json& config) {
  Json header;
  header["format_version"] = kDatasetFormatVersion;
  header["sh_order_in"] = kSignalOrder;
  header["sh_order_out"] = kFodOrder;
  header["seed"] = ds.seed;
  Json profiles = Json::object();
  for (const auto& [name, p] : ds.profiles) profiles[name] = profile_to_json(p);
  header["profiles"] = profiles;
  header["labeled_count"] = ds.labeled.size();
  header["paired_count"] = ds.paired.size();
  header["fit_failures"] = ds.fit_failures;
  header["config"] = config;

  std::string out = header.dump() + "\n";
  for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
    Json r;
    r["kind"] = "labeled";
    r["x"] = vec_to_json(ds.labeled[i].x.coeffs());
    r["y"] = vec_to_json(ds.labeled[i].y.coeffs());
    if (i < ds.labeled_group.size()) r["group"] = ds.labeled_group[i];
    out += r.dump();
    out += '\n';
  }
  for (const auto& p : ds.paired) {
    Json r;
    r["kind"] = "paired";
    r["xa"] = vec_to_json(p.xa.coeffs());
    r["xb"] = vec_to_json(p.xb.coeffs());
    out += r.dump();
    out += '\n';
  }
  return out;
}

DatasetFile dataset_from_jsonl(const std::string& text, const std::string& source) {
  DatasetFile file;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  int order_in = kSignalOrder;
  int order_out = kFodOrder;
  bool all_grouped = true;
  auto fail = [&](const std::string& msg) -> ValidationError {
    return ValidationError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    try {
      if (line_no == 1) {
        if (j.value("format_version", -1) != kDatasetFormatVersion) throw fail("unsupported dataset format_version");
        order_in = j.at("sh_order_in").get<int>();
        order_out = j.at("sh_order_out").get<int>();
        if (order_in != kSignalOrder || order_out != kFodOrder) throw fail("unsupported SH orders in header");
        file.data.seed = j.at("seed").get<std::uint64_t>();
        file.data.fit_failures = j.value("fit_failures", std::size_t{0});
        for (const auto& [name, p] : j.at("profiles").items()) file.data.profiles[name] = profile_from_json(p);
        file.header = std::move(j);
        continue;
      }
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "labeled") {
        file.data.labeled.push_back({ShVec(order_in, vec_from_json(j.at("x"), coefficient_count(order_in), "x")),
                                     ShVec(order_out, vec_from_json(j.at("y"), coefficient_count(order_out), "y"))});
        if (j.contains("group")) {
          file.data.labeled_group.push_back(j["group"].get<std::size_t>());
        } else {
          all_grouped = false;
        }
      } else if (kind == "paired") {
        file.data.paired.push_back({ShVec(order_in, vec_from_json(j.at("xa"), coefficient_count(order_in), "xa")),
                                    ShVec(order_in, vec_from_json(j.at("xb"), coefficient_count(order_in), "xb"))});
      } else {
        throw fail("unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      if (msg.rfind(source + ":", 0) == 0) throw;
      throw fail(msg);
    }
  }
  if (line_no == 0 || file.header.is_null()) throw ValidationError(source + ": missing dataset header");
  if (!all_grouped) file.data.labeled_group.clear();
  return file;
}

void write_dataset(const fs::path& path, const Dataset& ds, const Json& config) {
  atomic_write(path, dataset_to_jsonl(ds, config));
}

DatasetFile read_dataset(const fs::path& path) { return dataset_from_jsonl(read_text(path), path.string()); }

Json model_to_json(const MlpModel& model, const Json& config) {
  Json j;
  j["version"] = kModelFormatVersion;
  j["dims"] = Json::array();
  j["activations"] = Json::array();
  for (int k = 0; k < kLayerCount; ++k) {
    j["dims"].push_back(kLayerDims[k]);
    j["activations"].push_back(activation_name(kActivations[k]));
  }
  j["input_dim"] = kInputDim;
  Json layers = Json::array();
  for (int k = 0; k < kLayerCount; ++k) {
    const auto& L = model.layer(k);
    Json w = Json::array();
    for (Eigen::Index r = 0; r < L.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < L.W.cols(); ++c) w.push_back(L.W(r, c));
    }
    Json layer;
    layer["W"] = std::move(w);
    layer["b"] = vec_to_json(L.b);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  if (!config.is_null()) j["config"] = config;
  return j;
}

MlpModel model_from_json(const Json& j) {
  try {
    if (j.at("version").get<int>() != kModelFormatVersion) throw ValidationError("unsupported model version");
    const auto& dims = j.at("dims");
    const auto& acts = j.at("activations");
    const auto& layers = j.at("layers");
    if (dims.size() != kLayerCount || acts.size() != kLayerCount || layers.size() != kLayerCount) {
      throw ValidationError("model must have " + std::to_string(kLayerCount) + " layers");
    }
    MlpModel m;
    for (int k = 0; k < kLayerCount; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      if (dims[ks].get<Eigen::Index>() != kLayerDims[k]) throw ValidationError("model layer widths differ");
      if (activation_from_name(acts[ks].get<std::string>()) != kActivations[k]) {
        throw ValidationError("model activations differ");
      }
      auto& L = m.layer(k);
      const Eigen::VectorXd w = vec_from_json(layers[ks].at("W"), L.W.size(), "W");
      for (Eigen::Index r = 0; r < L.W.rows(); ++r) L.W.row(r) = w.segment(r * L.W.cols(), L.W.cols()).transpose();
      L.b = vec_from_json(layers[ks].at("b"), L.b.size(), "b");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model file: ") + e.what());
  }
}

void write_model(const fs::path& path, const MlpModel& model, const Json& config) {
  atomic_write(path, model_to_json(model, config).dump() + "\n");
}

MlpModel read_model(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return model_from_json(j);
}

Json cv_report_to_json(const CvReport& cv) {
  Json j;
  Json folds = Json::array();
  for (const auto& f : cv.folds) {
    Json fj;
    fj["fold"] = f.fold;
    fj["train_count"] = f.train_count;
    fj["val_count"] = f.val_count;
    fj["initial_val_loss"] = f.initial_val_loss;
    fj["val_loss"] = f.val_loss;
    fj["val_mean_acc"] = f.val_mean_acc;
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  j["mean_val_loss"] = cv.mean_val_loss;
  j["selected_epochs"] = cv.selected_epochs;
  j["train_loss"] = cv.train_loss;
  return j;
}

}  // namespace nsdn
