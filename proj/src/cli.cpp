#include "blurflow/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <regex>

#include <CLI11.hpp>
#include <json.hpp>

#include "blurflow/bflw.hpp"
#include "blurflow/dataset.hpp"
#include "blurflow/error.hpp"
#include "blurflow/estimator.hpp"
#include "blurflow/imaging.hpp"
#include "blurflow/metrics.hpp"
#include "blurflow/pnm.hpp"
#include "blurflow/psf.hpp"
#include "blurflow/render.hpp"
#include "blurflow/rng.hpp"
#include "blurflow/scene_flow.hpp"
#include "blurflow/texture.hpp"

namespace blurflow::cli {
namespace {

using nlohmann::json;

// Stream tags shared with the dataset generator so `synth` reproduces a dataset sample.
enum Stream : std::uint64_t { kSource = 0, kMasks = 1, kParams = 2, kNoise = 3 };

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BLURFLOW_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw DomainError("BLURFLOW_SEED must be an unsigned integer");
    }
  }
  return 0;
}

Shape parse_shape(const std::string& text) {
  static const std::regex pattern(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw DomainError("shape must look like HxW, got '" + text + "'");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

OpticsConfig optics_from(const std::string& path) { return path.empty() ? OpticsConfig{} : load_optics(path); }

void emit(std::ostream& out, bool as_json, const json& summary) {
  if (as_json) out << summary.dump() << '\n';
}

struct Common {
  std::string optics_path;
  std::uint64_t seed = 0;
  bool json_out = false;
};

void add_common(CLI::App* app, Common& c, bool with_seed = true) {
  app->add_option("--optics", c.optics_path, "Optics JSON file (defaults when omitted)");
  if (with_seed) app->add_option("--seed", c.seed, "Random seed (default: $BLURFLOW_SEED or 0)");
  app->add_flag("--json", c.json_out, "Print a JSON summary on stdout");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatially-variant 3D motion blur simulator and velocity-field estimator", "blurflow"};
  app.require_subcommand(1);

  Common common;
  std::uint64_t seed_default = 0;
  try {
    seed_default = default_seed();
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  common.seed = seed_default;

  // psf
  MotionParams motion;
  std::string out_path;
  auto* psf = app.add_subcommand("psf", "Render one motion PSF as a 16-bit PGM (scaled to its peak)");
  add_common(psf, common, false);
  psf->add_option("--v1", motion.v1);
  psf->add_option("--v2", motion.v2);
  psf->add_option("--v3", motion.v3);
  psf->add_option("--z0", motion.z0);
  psf->add_option("--out", out_path, "Output PGM")->required();

  // synth / flow-scene
  std::string in_path, targets_path, shape_text = "128x128";
  int n_masks = 2;
  double photon_scale = 1000.0, v_max = 0.8;
  bool no_noise = false;
  int window = kDefaultValidityWindow;
  double tau = kDefaultValidityTau;
  auto* synth = app.add_subcommand("synth", "Blur a sharp image with random per-region motion");
  add_common(synth, common);
  synth->add_option("--in", in_path, "Sharp source PGM")->required();
  synth->add_option("--n-masks", n_masks);
  synth->add_option("--out", out_path, "Blurred output PGM")->required();
  synth->add_option("--targets", targets_path, "Ground-truth BFLW output")->required();
  synth->add_option("--photon-scale", photon_scale);
  synth->add_flag("--no-noise", no_noise);
  synth->add_option("--window", window);
  synth->add_option("--tau", tau);

  auto* flow = app.add_subcommand("flow-scene", "Blur a sharp image with the rotating-cylinder flow field");
  add_common(flow, common);
  flow->add_option("--in", in_path, "Sharp source PGM (synthetic texture when omitted)");
  flow->add_option("--shape", shape_text, "Frame size HxW for the synthetic texture");
  flow->add_option("--v-max", v_max);
  flow->add_option("--out", out_path, "Blurred output PGM")->required();
  flow->add_option("--targets", targets_path, "Ground-truth BFLW output")->required();
  flow->add_option("--photon-scale", photon_scale);
  flow->add_flag("--no-noise", no_noise);
  flow->add_option("--window", window);
  flow->add_option("--tau", tau);

  // dataset
  std::string out_dir, from_manifest;
  std::vector<std::string> source_paths;
  int k = 10, jobs = 1, synthetic_sources = 8;
  auto* dataset = app.add_subcommand("dataset", "Generate a labelled dataset with manifest.json");
  add_common(dataset, common);
  dataset->add_option("--out", out_dir, "Output directory")->required();
  dataset->add_option("--k", k, "Number of samples");
  dataset->add_option("--shape", shape_text, "Sample size HxW");
  dataset->add_option("--n-masks", n_masks);
  dataset->add_option("--sources", source_paths, "Sharp source PGM files");
  dataset->add_option("--synthetic-sources", synthetic_sources, "Procedural sources when no files are given");
  dataset->add_option("--photon-scale", photon_scale);
  dataset->add_option("--jobs", jobs);
  dataset->add_option("--window", window);
  dataset->add_option("--tau", tau);
  dataset->add_option("--from-manifest", from_manifest, "Regenerate the dataset described by a manifest");

  // estimate
  std::string mode = "nonblind", blurred_path, sharp_path, gt_path, summary_path;
  TileOptions tiles;
  auto* estimate = app.add_subcommand("estimate", "Estimate per-pixel motion from a blurred image");
  add_common(estimate, common);
  estimate->add_option("--mode", mode)->check(CLI::IsMember({"nonblind", "blind"}));
  estimate->add_option("--blurred", blurred_path)->required();
  estimate->add_option("--sharp", sharp_path, "Sharp reference (nonblind mode)");
  estimate->add_option("--patch", tiles.patch);
  estimate->add_option("--stride", tiles.stride);
  estimate->add_option("--reg", tiles.kernel_reg, "Relative kernel regularization");
  estimate->add_option("--out", out_path, "Prediction BFLW")->required();
  estimate->add_option("--gt", gt_path, "Ground-truth BFLW to score against");
  estimate->add_option("--summary", summary_path, "Write the JSON summary to this file");

  // eval
  std::string pred_path;
  auto* eval = app.add_subcommand("eval", "Squared-Pearson scores of a prediction against ground truth");
  eval->add_option("--pred", pred_path)->required();
  eval->add_option("--gt", gt_path)->required();
  eval->add_flag("--json", common.json_out);

  // render
  auto* render = app.add_subcommand("render", "Render a BFLW field as an RGB PPM (v1 red, v2 green, v3 blue)");
  render->add_option("--targets", targets_path)->required();
  render->add_option("--out", out_path)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitDomain;
  }

  try {
    const OpticsConfig optics = optics_from(common.optics_path);

    if (psf->parsed()) {
      const Kernel2D kernel = PsfModel(optics).motion_psf(motion);
      Plane img(kernel.size(), kernel.size());
      double peak = 0.0;
      for (double w : kernel.weights()) peak = std::max(peak, w);
      for (int y = 0; y < kernel.size(); ++y)
        for (int x = 0; x < kernel.size(); ++x) img(y, x) = kernel.at(y, x) / peak;
      write_pgm16(out_path, img);
      const auto m = kernel.moments();
      emit(out, common.json_out,
           {{"size", kernel.size()}, {"params", motion}, {"centroid", {m.cx, m.cy}}, {"second_moment", m.second}, {"peak", peak}});
      return kExitOk;
    }

    if (synth->parsed() || flow->parsed()) {
      const std::uint64_t seed = common.seed;
      ImagePlane sharp;
      VelocityField field;
      json params_json;
      if (synth->parsed()) {
        sharp = read_pnm(in_path);
        const MaskSet masks = generate_masks(sharp.shape(), n_masks, derive_key(seed, kMasks));
        const auto params = sample_motion_params(n_masks, derive_key(seed, kParams));
        field = field_from_masks(masks, params);
        params_json = params;
      } else {
        sharp = in_path.empty() ? synthetic_texture(parse_shape(shape_text), derive_key(seed, kSource)) : read_pnm(in_path);
        field = cylinder_flow_field(sharp.shape(), v_max);
        params_json = {{"v_max", v_max}};
      }
      const ImagePlane clean = form_image(sharp, field, optics);
      const ImagePlane image = no_noise ? clean : apply_noise(clean, optics, photon_scale, derive_key(seed, kNoise));
      const Plane w = validity_map(image, window, tau);
      write_pgm16(out_path, image);
      write_bflw(targets_path, make_targets(field, w), seed);
      std::size_t valid = 0;
      for (double v : w.values()) valid += v == 0.0;
      emit(out, common.json_out,
           {{"seed", seed}, {"params", params_json}, {"valid_fraction", static_cast<double>(valid) / w.size()}});
      return kExitOk;
    }

    if (dataset->parsed()) {
      DatasetRequest request;
      if (!from_manifest.empty()) {
        request = read_manifest(from_manifest).request;
      } else {
        request.seed = common.seed;
        request.k = k;
        request.image_shape = parse_shape(shape_text);
        request.n_masks = n_masks;
        request.optics = optics;
        request.photon_scale = photon_scale;
        request.validity_window = window;
        request.validity_tau = tau;
        if (!source_paths.empty()) {
          request.sources = {{"kind", "files"}, {"paths", source_paths}};
        } else {
          const Shape s = request.image_shape;
          request.sources = {{"kind", "synthetic"},
                             {"count", synthetic_sources},
                             {"seed", derive_key(common.seed, 0xffffffffULL)},
                             {"shape", {s.height + s.height / 2, s.width + s.width / 2}}};
        }
      }
      request.jobs = jobs;
      request.out_dir = out_dir;
      const auto sources = load_sources(request.sources);
      const DatasetManifest m = build_dataset(sources, request);
      emit(out, common.json_out, {{"out", out_dir}, {"k", m.samples.size()}, {"seed", m.request.seed}});
      return kExitOk;
    }

    if (estimate->parsed()) {
      const ImagePlane blurred = read_pnm(blurred_path);
      EstimationReport report;
      if (mode == "nonblind") {
        if (sharp_path.empty()) throw DomainError("nonblind mode needs --sharp");
        report = estimate_field_nonblind(read_pnm(sharp_path), blurred, optics, tiles);
      } else {
        report = estimate_field_blind(blurred, optics, tiles);
      }
      std::uint64_t header_seed = common.seed;
      if (!gt_path.empty()) {
        const BflwFile gt = read_bflw(gt_path);
        score(report, gt.maps);
        header_seed = gt.seed;
      }
      write_bflw(out_path, report.pred, header_seed);
      const json summary = summarize(report);
      if (!summary_path.empty()) write_file(summary_path, summary.dump(2) + "\n");
      emit(out, common.json_out, summary);
      return kExitOk;
    }

    if (eval->parsed()) {
      const BflwFile pred = read_bflw(pred_path);
      const BflwFile gt = read_bflw(gt_path);
      const R2Report r = evaluate_r2(pred.maps, gt.maps);
      if (common.json_out) {
        out << json(r).dump() << '\n';
      } else {
        err << "R2 v1=" << r.velocity[0].r2 << " v2=" << r.velocity[1].r2 << " v3=" << r.velocity[2].r2
            << " mean=" << r.velocity_mean << " z0=" << r.z0.r2 << " (" << r.valid_pixels << " valid pixels)\n";
      }
      return kExitOk;
    }

    if (render->parsed()) {
      write_ppm(out_path, render_field(read_bflw(targets_path).maps));
      return kExitOk;
    }
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitDomain;
}

}  // namespace blurflow::cli
