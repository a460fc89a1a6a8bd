#pragma once

// On-disk formats. Everything is JSON (one document) or JSON lines (a
// header line followed by one record per line), versioned by an integer
// format_version. Unknown fields are ignored on read.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsdn/mlp.hpp"
#include "nsdn/phantom.hpp"
#include "nsdn/train.hpp"

namespace nsdn {

using Json = nlohmann::ordered_json;

constexpr int kDatasetFormatVersion = 1;
constexpr int kModelFormatVersion = 1;
constexpr int kReportFormatVersion = 1;

// Writes to a sibling temporary and renames over the target.
void atomic_write(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

// "dirs=96,b=2000,sigma=0.02,gain=1,rotation=7,dscale=1"; omitted keys keep
// their defaults. rotation is a seed for a fixed random rotation, 0 is the
// identity.
struct ProfileSpec {
  Eigen::Index dirs = 96;
  double b = 2000.0;
  double sigma = 0.02;
  double gain = 1.0;
  std::uint64_t rotation = 0;
  double dscale = 1.0;

  static ProfileSpec parse(const std::string& text);
  std::string str() const;
  ScannerProfile build() const;
};

Json profile_to_json(const ScannerProfile& p);
ScannerProfile profile_from_json(const Json& j);

// Dataset JSON lines.
//   header : {format_version, sh_order_in, sh_order_out, seed, profiles, ...}
//   records: {"kind":"labeled","x":[45],"y":[66]} | {"kind":"paired","xa":[45],"xb":[45]}
struct DatasetFile {
  Json header;
  Dataset data;
};

std::string dataset_to_jsonl(const Dataset& ds, const Json& config);
DatasetFile dataset_from_jsonl(const std::string& text, const std::string& source = "<memory>");
void write_dataset(const std::filesystem::path& path, const Dataset& ds, const Json& config);
DatasetFile read_dataset(const std::filesystem::path& path);

// Model JSON: {version, dims, activations, layers:[{W: row-major, b}], ...}
Json model_to_json(const MlpModel& model, const Json& config = nullptr);
MlpModel model_from_json(const Json& j);
void write_model(const std::filesystem::path& path, const MlpModel& model, const Json& config);
MlpModel read_model(const std::filesystem::path& path);

Json cv_report_to_json(const CvReport& cv);

}  // namespace nsdn
