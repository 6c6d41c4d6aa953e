#pragma once

#include <array>
#include <cstddef>
#include <span>

#include <json.hpp>

#include "blurflow/imaging.hpp"

namespace blurflow {

struct ChannelScore {
  double r2 = 0.0;
  // Either side had variance below 1e-12; r2 is reported as 0.
  bool degenerate = false;
};

// Squared Pearson correlation scores over ground-truth-valid pixels (gt w == 0).
struct R2Report {
  std::array<ChannelScore, 3> velocity;      // v1, v2, v3
  double velocity_mean = 0.0;
  ChannelScore z0;
  std::array<ChannelScore, 3> velocity_abs;  // on |v_u|, matching the loss's sign-blind terms
  double velocity_abs_mean = 0.0;
  std::size_t valid_pixels = 0;
};

ChannelScore squared_pearson(std::span<const double> a, std::span<const double> b);

// Throws DomainError on shape mismatch or when no ground-truth pixel is valid.
R2Report evaluate_r2(const TargetMaps& pred, const TargetMaps& gt);
// Pools the valid pixels of several prediction/ground-truth pairs before scoring.
R2Report evaluate_r2(std::span<const TargetMaps> preds, std::span<const TargetMaps> gts);

void to_json(nlohmann::json& j, const R2Report& r);

}  // namespace blurflow
