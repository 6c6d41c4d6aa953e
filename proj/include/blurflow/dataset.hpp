#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blurflow/imaging.hpp"
#include "blurflow/optics.hpp"

namespace blurflow {

inline constexpr const char* kManifestVersion = "blurflow-dataset/1";

struct DatasetRequest {
  std::uint64_t seed = 0;
  int k = 1;
  Shape image_shape{128, 128};
  int n_masks = 2;
  OpticsConfig optics;
  double photon_scale = 1000.0;
  int validity_window = kDefaultValidityWindow;
  double validity_tau = kDefaultValidityTau;
  // Where the sharp source images came from; stored verbatim so the set can be rebuilt.
  // {"kind": "synthetic", "count": n, "seed": s, "shape": [h, w]} or {"kind": "files", "paths": [...]}.
  nlohmann::json sources = nlohmann::json::object();
  int jobs = 1;
  std::filesystem::path out_dir;
};

struct SampleRecord {
  std::string image_path;   // relative to the dataset directory
  std::string target_path;  // relative to the dataset directory
  std::uint64_t seed = 0;
  std::vector<MotionParams> params;  // one per region
};

struct DatasetManifest {
  std::string version = kManifestVersion;
  DatasetRequest request;  // out_dir and jobs are not serialized
  std::vector<SampleRecord> samples;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

// Seed of sample `index` under a global seed.
std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t index);

// Generates request.k samples into request.out_dir (img_%06u.pgm, tgt_%06u.bflw) and writes
// manifest.json. Sample i uses source i mod sources.size(), cropped at a seeded offset.
// Output bytes depend only on the request and the sources, never on request.jobs.
DatasetManifest build_dataset(std::span<const ImagePlane> sources, const DatasetRequest& request);

// Materializes the sharp sources described by a request's `sources` document.
std::vector<ImagePlane> load_sources(const nlohmann::json& description);

DatasetManifest read_manifest(const std::filesystem::path& path);

struct Cylindrical {
  double rho;
  double theta;  // (-pi, pi]; 0 when rho == 0
};

Cylindrical to_cylindrical(double v1, double v2);

struct LossConfig {
  double gamma = 1.0;
  static constexpr int u_components = 3;
};

// Pixel mean of gamma (w - w~)^2 + (1 - w) / (U + 1) * [sum_u (|v_u| - |v~_u|)^2 + (z0 - z~0)^2],
// with w taken from the target.
double loss(const TargetMaps& pred, const TargetMaps& target, const LossConfig& cfg = {});

}  // namespace blurflow
