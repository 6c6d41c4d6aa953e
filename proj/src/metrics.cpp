#include "blurflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "blurflow/error.hpp"

namespace blurflow {

ChannelScore squared_pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("correlation inputs differ in length");
  if (a.empty()) throw DomainError("correlation of empty samples");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa / n < 1e-12 || sbb / n < 1e-12) return {0.0, true};
  const double r = sab / std::sqrt(saa * sbb);
  return {std::min(1.0, r * r), false};
}

R2Report evaluate_r2(std::span<const TargetMaps> preds, std::span<const TargetMaps> gts) {
  if (preds.size() != gts.size()) throw DomainError("prediction and ground-truth counts differ");
  // Channels: v1, v2, v3, z0.
  std::array<std::vector<double>, 4> p, g;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const TargetMaps& pr = preds[k];
    const TargetMaps& gt = gts[k];
    pr.check_shape();
    gt.check_shape();
    if (pr.shape() != gt.shape()) throw DomainError("prediction and ground truth differ in shape");
    for (std::size_t i = 0; i < gt.w.size(); ++i) {
      if (gt.w[i] != 0.0) continue;
      const std::array<const Plane*, 4> pp{&pr.v1, &pr.v2, &pr.v3, &pr.z0};
      const std::array<const Plane*, 4> gg{&gt.v1, &gt.v2, &gt.v3, &gt.z0};
      for (int c = 0; c < 4; ++c) {
        p[c].push_back((*pp[c])[i]);
        g[c].push_back((*gg[c])[i]);
      }
    }
  }
  if (g[0].empty()) throw DomainError("no valid ground-truth pixels to score");

  R2Report r;
  r.valid_pixels = g[0].size();
  for (int c = 0; c < 3; ++c) {
    r.velocity[c] = squared_pearson(p[c], g[c]);
    std::vector<double> pa(p[c].size()), ga(g[c].size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      pa[i] = std::abs(p[c][i]);
      ga[i] = std::abs(g[c][i]);
    }
    r.velocity_abs[c] = squared_pearson(pa, ga);
    r.velocity_mean += r.velocity[c].r2 / 3.0;
    r.velocity_abs_mean += r.velocity_abs[c].r2 / 3.0;
  }
  r.z0 = squared_pearson(p[3], g[3]);
  return r;
}

R2Report evaluate_r2(const TargetMaps& pred, const TargetMaps& gt) {
  return evaluate_r2(std::span<const TargetMaps>(&pred, 1), std::span<const TargetMaps>(&gt, 1));
}

void to_json(nlohmann::json& j, const R2Report& r) {
  auto channel = [](const ChannelScore& s) { return nlohmann::json{{"r2", s.r2}, {"degenerate", s.degenerate}}; };
  j = nlohmann::json{{"v1", channel(r.velocity[0])},
                     {"v2", channel(r.velocity[1])},
                     {"v3", channel(r.velocity[2])},
                     {"mean_r2", r.velocity_mean},
                     {"z0", channel(r.z0)},
                     {"abs", {{"v1", channel(r.velocity_abs[0])},
                              {"v2", channel(r.velocity_abs[1])},
                              {"v3", channel(r.velocity_abs[2])},
                              {"mean_r2", r.velocity_abs_mean}}},
                     {"valid_pixels", r.valid_pixels}};
}

}  // namespace blurflow
