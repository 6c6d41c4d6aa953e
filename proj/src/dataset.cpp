#include "blurflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>

#include "blurflow/bflw.hpp"
#include "blurflow/error.hpp"
#include "blurflow/pnm.hpp"
#include "blurflow/psf.hpp"
#include "blurflow/rng.hpp"
#include "blurflow/scene_flow.hpp"
#include "blurflow/texture.hpp"

namespace blurflow {
namespace {

std::string numbered(const char* pattern, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, static_cast<unsigned>(index));
  return buf;
}

// Stream tags for the independent draws of one sample.
enum SampleStream : std::uint64_t { kCrop = 0, kMasks = 1, kParams = 2, kNoise = 3 };

}  // namespace

std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t index) { return derive_key(global_seed, index); }

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  const DatasetRequest& r = m.request;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples)
    samples.push_back({{"image", s.image_path}, {"target", s.target_path}, {"seed", s.seed}, {"params", s.params}});
  j = nlohmann::json{{"version", m.version},
                     {"seed", r.seed},
                     {"k", r.k},
                     {"image_shape", {r.image_shape.height, r.image_shape.width}},
                     {"n_masks", r.n_masks},
                     {"photon_scale", r.photon_scale},
                     {"validity", {{"window", r.validity_window}, {"tau", r.validity_tau}}},
                     {"optics", r.optics},
                     {"sources", r.sources},
                     {"samples", std::move(samples)}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  try {
    m.version = j.at("version").get<std::string>();
    if (m.version != kManifestVersion) throw ConfigError("unsupported manifest version " + m.version);
    DatasetRequest& r = m.request;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k = j.at("k").get<int>();
    r.image_shape = {j.at("image_shape").at(0).get<int>(), j.at("image_shape").at(1).get<int>()};
    r.n_masks = j.at("n_masks").get<int>();
    r.photon_scale = j.at("photon_scale").get<double>();
    r.validity_window = j.at("validity").at("window").get<int>();
    r.validity_tau = j.at("validity").at("tau").get<double>();
    r.optics = j.at("optics").get<OpticsConfig>();
    r.sources = j.at("sources");
    m.samples.clear();
    for (const auto& s : j.at("samples")) {
      m.samples.push_back({s.at("image").get<std::string>(), s.at("target").get<std::string>(),
                           s.at("seed").get<std::uint64_t>(), s.at("params").get<std::vector<MotionParams>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<DatasetManifest>();
}

std::vector<ImagePlane> load_sources(const nlohmann::json& description) {
  try {
    const std::string kind = description.at("kind").get<std::string>();
    std::vector<ImagePlane> out;
    if (kind == "synthetic") {
      const int count = description.at("count").get<int>();
      const auto seed = description.at("seed").get<std::uint64_t>();
      const Shape shape{description.at("shape").at(0).get<int>(), description.at("shape").at(1).get<int>()};
      if (count < 1) throw ConfigError("synthetic source count must be >= 1");
      for (int i = 0; i < count; ++i) out.push_back(synthetic_texture(shape, derive_key(seed, static_cast<std::uint64_t>(i))));
    } else if (kind == "files") {
      for (const auto& p : description.at("paths")) out.push_back(read_pnm(p.get<std::string>()));
    } else {
      throw ConfigError("unknown source kind '" + kind + "'");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed source description: ") + e.what());
  }
}

DatasetManifest build_dataset(std::span<const ImagePlane> sources, const DatasetRequest& request) {
  const Shape shape = request.image_shape;
  if (request.k < 1) throw ConfigError("dataset k must be >= 1");
  if (request.n_masks < 1) throw ConfigError("n_masks must be >= 1");
  if (sources.empty()) throw ConfigError("no source images supplied");
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (sources[i].height() < shape.height || sources[i].width() < shape.width)
      throw ConfigError("source image " + std::to_string(i) + " is smaller than the requested image shape");
  request.optics.validate();
  PsfModel probe(request.optics);  // surfaces kernel-size problems before any file is written

  std::error_code ec;
  std::filesystem::create_directories(request.out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + request.out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.request = request;
  manifest.samples.resize(static_cast<std::size_t>(request.k));

  std::exception_ptr failure;
  std::mutex failure_mutex;
  const int jobs = std::max(1, request.jobs);
#pragma omp parallel num_threads(jobs)
  {
    std::unique_ptr<PsfModel> model;
#pragma omp for schedule(dynamic)
    for (int i = 0; i < request.k; ++i) {
      try {
        if (!model) model = std::make_unique<PsfModel>(request.optics);
        const std::uint64_t seed = sample_seed(request.seed, static_cast<std::uint64_t>(i));
        const ImagePlane& src = sources[static_cast<std::size_t>(i) % sources.size()];
        CounterRng crop_rng(derive_key(seed, kCrop));
        const int row = static_cast<int>(crop_rng.uniform() * (src.height() - shape.height + 1));
        const int col = static_cast<int>(crop_rng.uniform() * (src.width() - shape.width + 1));
        const ImagePlane sharp = src.crop(row, col, shape.height, shape.width);

        const MaskSet masks = generate_masks(shape, request.n_masks, derive_key(seed, kMasks));
        const std::vector<MotionParams> params = sample_motion_params(request.n_masks, derive_key(seed, kParams));
        std::vector<Kernel2D> kernels;
        for (const auto& p : params) kernels.push_back(model->motion_psf(p));
        const ImagePlane clean = synthesize(sharp, masks, kernels);
        const ImagePlane noisy = apply_noise(clean, request.optics, request.photon_scale, derive_key(seed, kNoise));
        const Plane w = validity_map(noisy, request.validity_window, request.validity_tau);

        SampleRecord& rec = manifest.samples[static_cast<std::size_t>(i)];
        rec.image_path = numbered("img_%06u.pgm", i);
        rec.target_path = numbered("tgt_%06u.bflw", i);
        rec.seed = seed;
        rec.params = params;
        write_pgm16((request.out_dir / rec.image_path).string(), noisy);
        write_bflw((request.out_dir / rec.target_path).string(), make_targets(field_from_masks(masks, params), w), seed);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::ofstream out(request.out_dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + request.out_dir.string());
  out << nlohmann::json(manifest).dump(2) << '\n';
  if (!out) throw IoError("short write of manifest in " + request.out_dir.string());
  return manifest;
}

Cylindrical to_cylindrical(double v1, double v2) {
  const double rho = std::hypot(v1, v2);
  if (rho == 0.0) return {0.0, 0.0};
  const double theta = std::atan2(v2, v1);
  return {rho, theta > -std::numbers::pi ? theta : std::numbers::pi};  // atan2(-0, x < 0) is -pi
}

double loss(const TargetMaps& pred, const TargetMaps& target, const LossConfig& cfg) {
  pred.check_shape();
  target.check_shape();
  if (pred.shape() != target.shape()) throw DomainError("prediction and target differ in shape");
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) throw DomainError("gamma must be finite and >= 0");
  const std::size_t n = target.w.size();
  if (n == 0) return 0.0;
  constexpr double gate_norm = 1.0 / (LossConfig::u_components + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dw = target.w[i] - pred.w[i];
    const double d1 = std::abs(target.v1[i]) - std::abs(pred.v1[i]);
    const double d2 = std::abs(target.v2[i]) - std::abs(pred.v2[i]);
    const double d3 = std::abs(target.v3[i]) - std::abs(pred.v3[i]);
    const double dz = target.z0[i] - pred.z0[i];
    total += cfg.gamma * dw * dw + (1.0 - target.w[i]) * gate_norm * (d1 * d1 + d2 * d2 + d3 * d3 + dz * dz);
  }
  return total / static_cast<double>(n);
}

}  // namespace blurflow
