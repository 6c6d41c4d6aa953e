#include "blurflow/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <utility>

#include "blurflow/error.hpp"
#include "blurflow/fft.hpp"

namespace blurflow {
namespace {

constexpr int kMaxRecentre = 8;

double lattice(int i, int n, double lo, double hi) { return n == 1 ? lo : lo + (hi - lo) * i / (n - 1); }

double speed(const MotionParams& p) { return std::sqrt(p.v1 * p.v1 + p.v2 * p.v2 + p.v3 * p.v3); }

// Strict ordering of (residual, params) candidates, tie-broken by |v| then z0.
bool better(double res_a, const MotionParams& a, double res_b, const MotionParams& b) {
  const double tol = 1e-12 * std::max({1.0, std::abs(res_a), std::abs(res_b)});
  if (res_a < res_b - tol) return true;
  if (res_a > res_b + tol) return false;
  const double sa = speed(a), sb = speed(b);
  if (sa != sb) return sa < sb;
  return a.z0 < b.z0;
}

MotionParams clamp_params(MotionParams p) {
  p.v1 = std::clamp(p.v1, -1.0, 1.0);
  p.v2 = std::clamp(p.v2, -1.0, 1.0);
  p.v3 = std::clamp(p.v3, 0.0, 1.0);
  p.z0 = std::clamp(p.z0, 0.0, 1.0);
  return p;
}

// Coarse scan over the bank, then local pattern search on successively halved steps from each
// of the best grid.starts lattice points. Returns the refined starts, best first.
template <class BankCost, class ParamCost>
std::vector<ParamFit> grid_search(const KernelBank& bank, BankCost&& bank_cost, ParamCost&& param_cost) {
  std::vector<ParamFit> coarse(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) coarse[i] = {bank.params(i), bank_cost(i)};
  const std::size_t starts = std::min<std::size_t>(std::max(1, bank.grid().starts), coarse.size());
  std::partial_sort(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(starts), coarse.end(),
                    [](const ParamFit& a, const ParamFit& b) { return better(a.residual, a.params, b.residual, b.params); });

  std::map<std::array<double, 4>, double> memo;
  auto cost_of = [&](const MotionParams& p) {
    const std::array<double, 4> key{p.v1, p.v2, p.v3, p.z0};
    auto it = memo.find(key);
    return it != memo.end() ? it->second : (memo[key] = param_cost(p));
  };
  std::vector<ParamFit> refined;
  for (std::size_t s = 0; s < starts; ++s) {
    ParamFit best = coarse[s];
    memo[{best.params.v1, best.params.v2, best.params.v3, best.params.z0}] = best.residual;
    auto step = bank.step();
    for (int pass = 0; pass < bank.grid().halving_passes; ++pass) {
      for (double& h : step) h *= 0.5;
      // Compass moves along each axis; re-centre until the incumbent wins (bounded).
      for (int round = 0; round < kMaxRecentre; ++round) {
        const MotionParams centre = best.params;
        bool moved = false;
        for (int axis = 0; axis < 4; ++axis)
          for (int sign : {-1, 1}) {
            std::array<double, 4> x{centre.v1, centre.v2, centre.v3, centre.z0};
            x[axis] += sign * step[axis];
            const MotionParams p = clamp_params({x[0], x[1], x[2], x[3]});
            const double cost = cost_of(p);
            if (better(cost, p, best.residual, best.params)) {
              best = {p, cost};
              moved = true;
            }
          }
        if (!moved) break;
      }
    }
    refined.push_back(best);
  }
  std::sort(refined.begin(), refined.end(),
            [](const ParamFit& a, const ParamFit& b) { return better(a.residual, a.params, b.residual, b.params); });
  return refined;
}

double sum_squares(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

// Box-constrained Levenberg-Marquardt over (v1, v2, v3, z0) with a forward-difference Jacobian.
// residual(p) returns the residual vector; the result carries sqrt(sum of squares).
// Stops once a step gains less than rel_tol of the cost.
template <class ResidualFn>
ParamFit levenberg_marquardt(MotionParams start, ResidualFn&& residual, int max_iterations, double rel_tol) {
  constexpr double kH = 1e-6;
  constexpr std::array<double, 4> lo{-1.0, -1.0, 0.0, 0.0}, hi{1.0, 1.0, 1.0, 1.0};
  auto from_array = [](const std::array<double, 4>& a) { return clamp_params({a[0], a[1], a[2], a[3]}); };

  MotionParams best = clamp_params(start);
  std::vector<double> r = residual(best);
  double cost = sum_squares(r), mu = 1e-3;
  for (int it = 0; it < max_iterations && cost > 0.0; ++it) {
    const std::array<double, 4> x{best.v1, best.v2, best.v3, best.z0};
    std::array<std::vector<double>, 4> jac;
    for (int j = 0; j < 4; ++j) {
      auto xp = x;
      const double h = x[j] + kH <= hi[j] ? kH : -kH;
      xp[j] += h;
      jac[j] = residual(from_array(xp));
      for (std::size_t i = 0; i < r.size(); ++i) jac[j][i] = (jac[j][i] - r[i]) / h;
    }
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (int a = 0; a < 4; ++a) {
      for (int b = a; b < 4; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) s += jac[a][i] * jac[b][i];
        jtj[a][b] = jtj[b][a] = s;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) s += jac[a][i] * r[i];
      jtr[a] = s;
    }
    bool improved = false, converged = false;
    for (int attempt = 0; attempt < 8 && !improved; ++attempt) {
      // (JtJ + mu diag(JtJ)) d = -Jtr, Gaussian elimination with partial pivoting.
      std::array<std::array<double, 5>, 4> m{};
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) m[a][b] = jtj[a][b];
        m[a][a] += mu * std::max(jtj[a][a], 1e-12);
        m[a][4] = -jtr[a];
      }
      for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int row = col + 1; row < 4; ++row)
          if (std::abs(m[row][col]) > std::abs(m[piv][col])) piv = row;
        std::swap(m[col], m[piv]);
        for (int row = col + 1; row < 4; ++row) {
          const double f = m[row][col] / m[col][col];
          for (int k = col; k < 5; ++k) m[row][k] -= f * m[col][k];
        }
      }
      std::array<double, 4> d{};
      for (int row = 3; row >= 0; --row) {
        double s = m[row][4];
        for (int k = row + 1; k < 4; ++k) s -= m[row][k] * d[k];
        d[row] = s / m[row][row];
      }
      auto xn = x;
      for (int j = 0; j < 4; ++j) xn[j] = std::clamp(x[j] + d[j], lo[j], hi[j]);
      const MotionParams candidate = from_array(xn);
      std::vector<double> rn = residual(candidate);
      const double cn = sum_squares(rn);
      if (std::isfinite(cn) && cn < cost) {
        converged = cost - cn <= rel_tol * cost;
        best = candidate;
        r = std::move(rn);
        cost = cn;
        mu = std::max(mu / 3.0, 1e-9);
        improved = true;
      } else {
        mu *= 4.0;
      }
    }
    if (!improved || converged) break;
  }
  return {best, std::sqrt(cost)};
}

std::complex<double>& wrapped(Fft2d& fft, int dy, int dx) {
  return fft.at((dy % fft.rows() + fft.rows()) % fft.rows(), (dx % fft.cols() + fft.cols()) % fft.cols());
}

constexpr double kNoiseFloorSigmas = 3.0;

// Circular-convolution Wiener solver with the sharp spectrum cached.
class WienerSolver {
 public:
  WienerSolver(const ImagePlane& sharp, double reg) : fft_(sharp.height(), sharp.width()) {
    if (!(reg >= 0.0)) throw DomainError("Wiener regularizer must be >= 0");
    auto buf = fft_.buffer();
    for (std::size_t i = 0; i < sharp.size(); ++i) buf[i] = sharp[i];
    fft_.forward();
    sharp_spec_.assign(buf.begin(), buf.end());
    double ac = 0.0;
    for (std::size_t i = 1; i < sharp_spec_.size(); ++i) ac += std::norm(sharp_spec_[i]);
    const double dc = std::norm(sharp_spec_[0]);
    const double mean_ac = sharp_spec_.size() > 1 ? ac / static_cast<double>(sharp_spec_.size() - 1) : 0.0;
    degenerate_ = !(ac > 1e-10 * dc) || !(mean_ac > 0.0);
    reg_eff_ = reg * mean_ac;
  }

  bool degenerate() const { return degenerate_; }

  std::optional<Kernel2D> solve(const ImagePlane& blurred, int kernel_size) {
    auto buf = fft_.buffer();
    for (std::size_t i = 0; i < blurred.size(); ++i) buf[i] = blurred[i];
    fft_.forward();
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const auto& s = sharp_spec_[i];
      const double denom = std::norm(s) + reg_eff_;
      buf[i] = denom > 0.0 ? buf[i] * std::conj(s) / denom : std::complex<double>{};
    }
    fft_.inverse();
    const int c = kernel_size / 2;
    std::vector<double> weights(static_cast<std::size_t>(kernel_size) * kernel_size);
    for (int y = 0; y < kernel_size; ++y)
      for (int x = 0; x < kernel_size; ++x)
        weights[static_cast<std::size_t>(y) * kernel_size + x] = wrapped(fft_, y - c, x - c).real();
    // Clamping alone keeps the positive half of the noise, spread over the whole support, which
    // drags the centroid toward the centre. Negative weights are pure noise; their RMS sets a
    // floor below which positive weights are treated as noise too.
    double neg_sq = 0.0;
    std::size_t neg = 0;
    for (double w : weights)
      if (w < 0.0) {
        neg_sq += w * w;
        ++neg;
      }
    const double floor = neg > 0 ? kNoiseFloorSigmas * std::sqrt(neg_sq / static_cast<double>(neg)) : 0.0;
    for (double& w : weights)
      if (w <= floor) w = 0.0;
    try {
      return Kernel2D::normalized(kernel_size, std::move(weights));
    } catch (const DomainError&) {
      return std::nullopt;
    }
  }

 private:
  Fft2d fft_;
  std::vector<std::complex<double>> sharp_spec_;
  double reg_eff_ = 0.0;
  bool degenerate_ = true;
};

// One tile as a least-squares problem: blurred ~ gain * (sharp * k) + offset over the tile.
// The sharp window extends half a kernel past the tile on every side, so the convolution
// over the tile is exact (no truncated terms); both sides are handled mean-removed.
void centre(std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

class TileModel {
 public:
  TileModel(const ImagePlane& sharp, const ImagePlane& blurred, int row, int col, int patch, int kernel_size)
      : patch_(patch),
        size_(kernel_size),
        c_(kernel_size / 2),
        fft_(fft_friendly_size(patch + kernel_size - 1), fft_friendly_size(patch + kernel_size - 1)) {
    const int ext = fft_.rows();
    const ImagePlane window = sharp.crop(row - c_, col - c_, ext, ext);
    // Only in-frame pixels that can reach the tile count for flatness; the zero padding past the
    // frame edge is not texture.
    const int y0 = std::max(0, row - c_), x0 = std::max(0, col - c_);
    const ImagePlane support = sharp.crop(y0, x0, std::min(sharp.height(), row + patch + c_) - y0,
                                          std::min(sharp.width(), col + patch + c_) - x0);
    const double mean = support.mean();
    double var = 0.0;
    for (double v : support.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(support.size());
    degenerate_ = !(var > kFlatVariance);

    auto buf = fft_.buffer();
    for (int y = 0; y < ext; ++y)
      for (int x = 0; x < ext; ++x)
        fft_.at(y, x) = y < patch + 2 * c_ && x < patch + 2 * c_ ? window(y, x) : 0.0;
    fft_.forward();
    spec_.assign(buf.begin(), buf.end());
    column_energy_ = var * patch * patch;

    tile_.resize(static_cast<std::size_t>(patch) * patch);
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) tile_[static_cast<std::size_t>(y) * patch + x] = blurred(row + y, col + x);
    centre(tile_);
  }

  bool degenerate() const { return degenerate_; }
  int patch() const { return patch_; }

  // Tile of sharp * k for a kernel given as size x size weights. The sharp frame is not
  // mean-removed: outside the frame it is zero, exactly as in the forward model.
  std::vector<double> apply(std::span<const double> k) {
    auto buf = fft_.buffer();
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x) wrapped(fft_, y - c_, x - c_) = k[static_cast<std::size_t>(y) * size_ + x];
    fft_.forward();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= spec_[i];
    fft_.inverse();
    std::vector<double> out(tile_.size());
    for (int y = 0; y < patch_; ++y)
      for (int x = 0; x < patch_; ++x) out[static_cast<std::size_t>(y) * patch_ + x] = fft_.at(y + c_, x + c_).real();
    return out;
  }

  // Adjoint of apply(): correlation of the sharp window with a tile-shaped residual.
  std::vector<double> adjoint(std::span<const double> r) {
    auto buf = fft_.buffer();
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (int y = 0; y < patch_; ++y)
      for (int x = 0; x < patch_; ++x) fft_.at(y + c_, x + c_) = r[static_cast<std::size_t>(y) * patch_ + x];
    fft_.forward();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= std::conj(spec_[i]);
    fft_.inverse();
    std::vector<double> k(static_cast<std::size_t>(size_) * size_);
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x) k[static_cast<std::size_t>(y) * size_ + x] = wrapped(fft_, y - c_, x - c_).real();
    return k;
  }

  // Tile residual after the least-squares gain and offset for kernel k. Pixels with zero weight
  // neither enter the gain/offset fit nor the returned residual (their entries are 0).
  std::vector<double> residual(const Kernel2D& k) {
    std::vector<double> pred = apply(k.weights());
    double n = 0.0, sy = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double w = weight(i);
      n += w;
      sy += w * pred[i];
      sb += w * tile_[i];
    }
    if (!(n > 0.0)) return std::vector<double>(pred.size(), 0.0);
    const double my = sy / n, mb = sb / n;
    double syy = 0.0, syb = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double w = weight(i);
      syy += w * (pred[i] - my) * (pred[i] - my);
      syb += w * (pred[i] - my) * (tile_[i] - mb);
    }
    const double gain = syy > 0.0 ? syb / syy : 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = weight(i) * (gain * (pred[i] - my) - (tile_[i] - mb));
    return pred;
  }

  // Per-pixel weights in {0, 1}; empty means all ones.
  void set_mask(std::vector<double> mask) { mask_ = std::move(mask); }
  double active_pixels() const {
    return mask_.empty() ? static_cast<double>(tile_.size()) : std::accumulate(mask_.begin(), mask_.end(), 0.0);
  }

  // Kernel minimizing |apply(k) - tile|^2 + reg * E * |k|^2 (E: mean column energy) up to a
  // free offset (both sides mean-removed over the tile), by CGLS.
  std::optional<Kernel2D> estimate_kernel(double reg, int iterations) {
    const double lambda = reg * column_energy_;
    const std::size_t n = static_cast<std::size_t>(size_) * size_;
    std::vector<double> k(n, 0.0), r = tile_, s = adjoint(r), p = s;
    double gamma = sum_squares(s);
    for (int it = 0; it < iterations && gamma > 0.0; ++it) {
      std::vector<double> q = apply(p);
      centre(q);
      const double denom = sum_squares(q) + lambda * sum_squares(p);
      if (!(denom > 0.0)) break;
      const double alpha = gamma / denom;
      for (std::size_t i = 0; i < n; ++i) k[i] += alpha * p[i];
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= alpha * q[i];
      s = adjoint(r);
      for (std::size_t i = 0; i < n; ++i) s[i] -= lambda * k[i];
      const double next = sum_squares(s);
      for (std::size_t i = 0; i < n; ++i) p[i] = s[i] + next / gamma * p[i];
      gamma = next;
    }
    try {
      return Kernel2D::normalized(size_, std::move(k));
    } catch (const DomainError&) {
      return std::nullopt;
    }
  }

 private:
  static constexpr double kFlatVariance = 1e-10;

  double weight(std::size_t i) const { return mask_.empty() ? 1.0 : mask_[i]; }

  int patch_, size_, c_;
  Fft2d fft_;
  std::vector<std::complex<double>> spec_;
  std::vector<double> tile_;
  std::vector<double> mask_;
  double column_energy_ = 0.0;
  bool degenerate_ = true;
};

std::vector<int> tile_origins(int length, int patch, int stride) {
  std::vector<int> out;
  for (int p = 0; p + patch <= length; p += stride) out.push_back(p);
  if (out.back() + patch < length) out.push_back(length - patch);
  return out;
}

void check_tiling(Shape frame, const OpticsConfig& optics, const TileOptions& o) {
  optics.validate();
  if (o.stride < 1 || o.stride > o.patch) throw DomainError("tile stride must lie in [1, patch]");
  if (o.patch < 2 * optics.kernel_size_px)
    throw DomainError("patch must be at least twice kernel_size_px (" + std::to_string(2 * optics.kernel_size_px) + ")");
  if (frame.height < o.patch || frame.width < o.patch) throw DomainError("frame is smaller than one patch");
}

// Runs fn(index, tile) over all tiles in parallel and rethrows the first failure.
template <class Fn>
std::vector<TileResult> for_each_tile(Shape frame, const TileOptions& o, Fn&& fn) {
  std::vector<TileResult> tiles;
  for (int r : tile_origins(frame.height, o.patch, o.stride))
    for (int c : tile_origins(frame.width, o.patch, o.stride)) tiles.push_back({r, c, false, {}});
  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    try {
      fn(i, tiles[i]);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return tiles;
}

// Half-width of the window over which tile prediction errors are compared per pixel.
constexpr int kErrorRadius = 4;
// Local squared error above this multiple of the tile median marks a pixel as off-model.
constexpr double kOutlierRatio = 2.0;

// Mean of squared residuals over a (2r+1)^2 window clipped to the tile.
std::vector<double> local_error(std::span<const double> residual, int patch) {
  const int stride = patch + 1;
  std::vector<double> integral(static_cast<std::size_t>(stride) * stride, 0.0);
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const double v = residual[static_cast<std::size_t>(y) * patch + x];
      const std::size_t i = static_cast<std::size_t>(y + 1) * stride + x + 1;
      integral[i] = v * v + integral[i - 1] + integral[i - stride] - integral[i - stride - 1];
    }
  std::vector<double> out(residual.size());
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const int y0 = std::max(0, y - kErrorRadius), y1 = std::min(patch, y + kErrorRadius + 1);
      const int x0 = std::max(0, x - kErrorRadius), x1 = std::min(patch, x + kErrorRadius + 1);
      const auto at = [&](int yy, int xx) { return integral[static_cast<std::size_t>(yy) * stride + xx]; };
      out[static_cast<std::size_t>(y) * patch + x] =
          (at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0)) / ((y1 - y0) * (x1 - x0));
    }
  return out;
}

// Writes tile results to pixels. With error maps, each pixel takes the valid covering tile whose
// prediction error is locally smallest; otherwise the tile with the nearest centre. Ties go to the
// nearer centre, then the lower tile index.
EstimationReport assemble(Shape frame, int patch, std::vector<TileResult> tiles,
                          const std::vector<std::vector<double>>* errors = nullptr) {
  EstimationReport rep;
  rep.pred = {Plane(frame), Plane(frame), Plane(frame), Plane(frame), Plane(frame, 1.0)};
  rep.residual_map = Plane(frame);
  const double half = 0.5 * (patch - 1);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      std::optional<std::size_t> owner;
      double best_error = std::numeric_limits<double>::infinity(), best_dist = best_error;
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        const double dy = y - (tiles[t].row + half), dx = x - (tiles[t].col + half);
        const double dist = dy * dy + dx * dx;
        double error = 0.0;
        if (errors) {
          const int ty = y - tiles[t].row, tx = x - tiles[t].col;
          if (!tiles[t].valid || ty < 0 || tx < 0 || ty >= patch || tx >= patch) continue;
          error = (*errors)[t][static_cast<std::size_t>(ty) * patch + tx];
        }
        if (error < best_error || (error == best_error && dist < best_dist)) {
          best_error = error;
          best_dist = dist;
          owner = t;
        }
      }
      if (!owner || !tiles[*owner].valid) continue;
      const TileResult& t = tiles[*owner];
      rep.pred.v1(y, x) = t.fit.params.v1;
      rep.pred.v2(y, x) = t.fit.params.v2;
      rep.pred.v3(y, x) = t.fit.params.v3;
      rep.pred.z0(y, x) = t.fit.params.z0;
      rep.pred.w(y, x) = 0.0;
      rep.residual_map(y, x) = t.fit.residual;
    }
  rep.tiles = std::move(tiles);
  return rep;
}

std::string bank_key(const OpticsConfig& optics, const GridSpec& g) {
  return nlohmann::json(optics).dump() + "|" + std::to_string(g.v1_steps) + "," + std::to_string(g.v2_steps) + "," +
         std::to_string(g.v3_steps) + "," + std::to_string(g.z0_steps) + "," + std::to_string(g.halving_passes) + "," + std::to_string(g.starts) + "," +
         std::to_string(g.polish_iterations);
}

}  // namespace

KernelBank::KernelBank(const OpticsConfig& optics, const GridSpec& grid) : optics_(optics), grid_(grid) {
  if (grid.v1_steps < 1 || grid.v2_steps < 1 || grid.v3_steps < 1 || grid.z0_steps < 1 || grid.halving_passes < 0)
    throw DomainError("grid needs at least one step per axis and non-negative halving passes");
  auto spacing = [](int n, double span) { return n > 1 ? span / (n - 1) : span; };
  step_ = {spacing(grid.v1_steps, 2.0), spacing(grid.v2_steps, 2.0), spacing(grid.v3_steps, 1.0),
           spacing(grid.z0_steps, 1.0)};
  for (int a = 0; a < grid.v1_steps; ++a)
    for (int b = 0; b < grid.v2_steps; ++b)
      for (int c = 0; c < grid.v3_steps; ++c)
        for (int d = 0; d < grid.z0_steps; ++d)
          params_.push_back({lattice(a, grid.v1_steps, -1.0, 1.0), lattice(b, grid.v2_steps, -1.0, 1.0),
                             lattice(c, grid.v3_steps, 0.0, 1.0), lattice(d, grid.z0_steps, 0.0, 1.0)});
  kernels_.assign(params_.size(), Kernel2D::impulse(1));
  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel
  {
    std::unique_ptr<PsfModel> model;
#pragma omp for schedule(dynamic)
    for (std::size_t i = 0; i < params_.size(); ++i) {
      try {
        if (!model) model = std::make_unique<PsfModel>(optics_);
        kernels_[i] = model->motion_psf(params_[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::shared_ptr<const KernelBank> KernelBank::shared(const OpticsConfig& optics, const GridSpec& grid) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const KernelBank>> cache;
  const std::string key = bank_key(optics, grid);
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto bank = std::make_shared<const KernelBank>(optics, grid);
  cache.emplace(key, bank);
  return bank;
}

KernelEstimate fit_kernel_nonblind(const ImagePlane& sharp_patch, const ImagePlane& blurred_patch, double reg,
                                   int kernel_size) {
  if (sharp_patch.shape() != blurred_patch.shape()) throw DomainError("sharp and blurred patches differ in shape");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw DomainError("kernel size must be odd and positive");
  if (sharp_patch.height() < 2 * kernel_size || sharp_patch.width() < 2 * kernel_size)
    throw DomainError("patch sides must be at least twice the kernel size");
  WienerSolver solver(sharp_patch, reg);
  if (solver.degenerate()) return {Kernel2D::impulse(kernel_size), false};
  auto k = solver.solve(blurred_patch, kernel_size);
  if (!k) return {Kernel2D::impulse(kernel_size), false};
  return {*k, true};
}

ParamFit fit_params_to_kernel(const Kernel2D& kernel, const KernelBank& bank, PsfModel& model) {
  if (kernel.size() != bank.optics().kernel_size_px) throw DomainError("kernel size does not match the optics");
  const auto refined = grid_search(
      bank, [&](std::size_t i) { return l2_distance(kernel, bank.kernel(i)); },
      [&](const MotionParams& p) { return l2_distance(kernel, model.motion_psf(p)); });
  ParamFit best = refined.front();
  if (bank.grid().polish_iterations <= 0) return best;
  auto difference = [&](const MotionParams& p) {
    const Kernel2D k = model.motion_psf(p);
    std::vector<double> r(k.weights().begin(), k.weights().end());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= kernel.weights()[i];
    return r;
  };
  for (const ParamFit& start : refined) {
    const ParamFit p = levenberg_marquardt(start.params, difference, bank.grid().polish_iterations, 1e-10);
    if (better(p.residual, p.params, best.residual, best.params)) best = p;
  }
  return best;
}

ParamFit fit_params_to_kernel(const Kernel2D& kernel, const OpticsConfig& optics, const GridSpec& grid) {
  PsfModel model(optics);
  return fit_params_to_kernel(kernel, *KernelBank::shared(optics, grid), model);
}

EstimationReport estimate_field_nonblind(const ImagePlane& sharp, const ImagePlane& blurred, const OpticsConfig& optics,
                                         const TileOptions& options) {
  if (sharp.shape() != blurred.shape()) throw DomainError("sharp and blurred frames differ in shape");
  check_tiling(blurred.shape(), optics, options);
  const auto bank = KernelBank::shared(optics, options.grid);
  const int size = optics.kernel_size_px, patch = options.patch;
  const int steps = options.time_steps > 0 ? options.time_steps : optics.time_steps;
  std::vector<std::vector<double>> errors;

  auto tiles = for_each_tile(blurred.shape(), options, [&](std::size_t index, TileResult& tile) {
    thread_local std::unique_ptr<PsfModel> model;
    if (!model || !(model->optics() == optics)) model = std::make_unique<PsfModel>(optics);

    TileModel problem(sharp, blurred, tile.row, tile.col, patch, size);
    if (problem.degenerate()) return;
    // The kernel estimate pins down the lateral motion well but not (v3, z0), whose image-space
    // cost has several basins; those are scanned on the axial lattice against the tile itself
    // before the joint refinement from the best few.
    MotionParams start{0.0, 0.0, 0.0, 0.0};
    if (auto kernel = problem.estimate_kernel(options.kernel_reg, options.cg_iterations))
      start = fit_params_to_kernel(*kernel, *bank, *model).params;
    auto residual = [&](const MotionParams& p) { return problem.residual(model->motion_psf(p, steps)); };
    std::vector<ParamFit> axial;
    const GridSpec& g = options.grid;
    for (int a = 0; a < g.v3_steps; ++a)
      for (int b = 0; b < g.z0_steps; ++b) {
        const MotionParams p{start.v1, start.v2, lattice(a, g.v3_steps, 0.0, 1.0), lattice(b, g.z0_steps, 0.0, 1.0)};
        axial.push_back({p, sum_squares(residual(p))});
      }
    // Refine from the lattice's local minima, best first, so distinct basins each get a start.
    auto at = [&](int a, int b) -> const ParamFit& { return axial[static_cast<std::size_t>(a) * g.z0_steps + b]; };
    std::vector<ParamFit> minima;
    for (int a = 0; a < g.v3_steps; ++a)
      for (int b = 0; b < g.z0_steps; ++b) {
        const ParamFit& f = at(a, b);
        bool lowest = true;
        for (auto [da, db] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
          const int na = a + da, nb = b + db;
          if (na >= 0 && na < g.v3_steps && nb >= 0 && nb < g.z0_steps && at(na, nb).residual < f.residual) lowest = false;
        }
        if (lowest) minima.push_back(f);
      }
    std::sort(minima.begin(), minima.end(),
              [](const ParamFit& x, const ParamFit& y) { return better(x.residual, x.params, y.residual, y.params); });
    const std::size_t starts = std::min<std::size_t>(std::max(1, options.refine_starts), minima.size());
    ParamFit fit{start, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < starts; ++i) {
      const ParamFit f = levenberg_marquardt(minima[i].params, residual, options.refine_iterations, 1e-6);
      if (better(f.residual, f.params, fit.residual, fit.params)) fit = f;
    }
    // Pixels near a motion boundary inside the tile follow no single kernel. Drop those whose
    // local error stands out against the tile's typical level and refit on the rest.
    for (int round = 0; round < options.robust_rounds; ++round) {
      problem.set_mask({});
      const std::vector<double> e = local_error(residual(fit.params), patch);
      std::vector<double> sorted = e;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
      const double cutoff = kOutlierRatio * sorted[sorted.size() / 2];
      std::vector<double> mask(e.size());
      std::size_t kept = 0;
      for (std::size_t i = 0; i < e.size(); ++i) kept += (mask[i] = e[i] <= cutoff ? 1.0 : 0.0) > 0.0;
      if (kept == e.size()) break;
      problem.set_mask(std::move(mask));
      fit = levenberg_marquardt(fit.params, residual, options.refine_iterations, 1e-6);
    }
    // Along the (v3, z0) ridge the tile barely discriminates, so the minimizer wanders with the
    // noise. Report the posterior mean under the uniform sampling prior instead, with the noise
    // level taken from the best fit.
    if (const int m = options.posterior_steps; m > 1) {
      // The minimizer joins the lattice so noise-free tiles keep their exact fit.
      std::vector<ParamFit> cells{{fit.params, sum_squares(residual(fit.params))}};
      double floor = cells.front().residual;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          const MotionParams p{fit.params.v1, fit.params.v2, lattice(a, m, 0.0, 1.0), lattice(b, m, 0.0, 1.0)};
          cells.push_back({p, sum_squares(residual(p))});
          floor = std::min(floor, cells.back().residual);
        }
      const double two_var = 2.0 * floor / problem.active_pixels();
      double total = 0.0, v3 = 0.0, z0 = 0.0;
      for (const ParamFit& c : cells) {
        const double w = two_var > 0.0 ? std::exp(-(c.residual - floor) / two_var) : (c.residual == floor ? 1.0 : 0.0);
        total += w;
        v3 += w * c.params.v3;
        z0 += w * c.params.z0;
      }
      fit.params.v3 = v3 / total;
      fit.params.z0 = z0 / total;
    }
    problem.set_mask({});
    const std::vector<double> r = residual(fit.params);
    fit.residual = std::sqrt(sum_squares(r) / static_cast<double>(r.size()));
    tile.fit = fit;
    tile.valid = true;
    std::vector<double> e = local_error(r, patch);
#pragma omp critical(blurflow_tile_errors)
    {
      if (errors.size() <= index) errors.resize(index + 1);
      errors[index] = std::move(e);
    }
  });
  errors.resize(tiles.size());
  return assemble(blurred.shape(), patch, std::move(tiles), &errors);
}

namespace {

// |X|^2 of the transform in fft's buffer, box-averaged over (2r+1)^2 neighbouring frequencies.
std::vector<double> smoothed_power(Fft2d& fft, int r) {
  const int h = fft.rows(), w = fft.cols();
  std::vector<double> power(static_cast<std::size_t>(h) * w), out(power.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) power[static_cast<std::size_t>(y) * w + x] = std::norm(fft.at(y, x));
  const double n = static_cast<double>((2 * r + 1) * (2 * r + 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) s += power[static_cast<std::size_t>((y + dy + h) % h) * w + (x + dx + w) % w];
      out[static_cast<std::size_t>(y) * w + x] = s / n;
    }
  return out;
}

}  // namespace

EstimationReport estimate_field_blind(const ImagePlane& blurred, const OpticsConfig& optics,
                                      const TileOptions& options) {
  check_tiling(blurred.shape(), optics, options);
  const auto bank = KernelBank::shared(optics, options.grid);
  const int size = optics.kernel_size_px, c = size / 2, patch = options.patch;

  // Frequency band used for matching: radial bins [2, 0.75 * Nyquist].
  struct BandBin {
    std::size_t index;
    int radius;
  };
  std::vector<BandBin> band;
  const int max_radius = static_cast<int>(0.75 * patch / 2);
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const int fy = y <= patch / 2 ? y : y - patch, fx = x <= patch / 2 ? x : x - patch;
      const int r = static_cast<int>(std::lround(std::hypot(fx, fy)));
      if (r >= 2 && r <= max_radius) band.push_back({static_cast<std::size_t>(y) * patch + x, r});
    }
  constexpr double kOtfFloor = 1e-4;
  // A single periodogram bin is exponentially distributed; averaging neighbouring bins keeps
  // random texture anisotropy from reading as a small motion.
  constexpr int kSmoothRadius = 1;
  constexpr int kShrinkSteps = 20;

  auto log_otf = [&](Fft2d& fft, const Kernel2D& k, std::vector<float>& out) {
    auto buf = fft.buffer();
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) fft.at((y - c + patch) % patch, (x - c + patch) % patch) = k.at(y, x);
    fft.forward();
    const std::vector<double> power = smoothed_power(fft, kSmoothRadius);
    out.resize(band.size());
    for (std::size_t b = 0; b < band.size(); ++b) out[b] = static_cast<float>(std::log(power[band[b].index] + kOtfFloor));
  };

  std::vector<std::vector<float>> bank_otf(bank->size());
  {
    Fft2d fft(patch, patch);
    for (std::size_t i = 0; i < bank->size(); ++i) log_otf(fft, bank->kernel(i), bank_otf[i]);
  }

  const Plane validity = validity_map(blurred);
  std::vector<double> window(patch);
  for (int i = 0; i < patch; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 0.5) / patch);

  auto tiles = for_each_tile(blurred.shape(), options, [&](std::size_t, TileResult& tile) {
    std::size_t textured = 0;
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) textured += validity(tile.row + y, tile.col + x) == 0.0;
    if (2 * textured < static_cast<std::size_t>(patch) * patch) return;

    thread_local std::unique_ptr<PsfModel> model;
    if (!model || !(model->optics() == optics)) model = std::make_unique<PsfModel>(optics);
    Fft2d fft(patch, patch);
    const ImagePlane t = blurred.crop(tile.row, tile.col, patch, patch);
    const double mean = t.mean();
    auto buf = fft.buffer();
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) fft.at(y, x) = (t(y, x) - mean) * window[y] * window[x];
    fft.forward();
    const std::vector<double> power = smoothed_power(fft, kSmoothRadius);
    double band_power = 0.0;
    for (const auto& b : band) band_power += power[b.index];
    const double floor = 1e-4 * band_power / static_cast<double>(band.size()) + 1e-300;
    std::vector<double> log_power(band.size());
    for (std::size_t b = 0; b < band.size(); ++b) log_power[b] = std::log(power[band[b].index] + floor);

    std::vector<double> bin_sum(max_radius + 1), bin_count(max_radius + 1);
    for (const auto& b : band) bin_count[b.radius] += 1.0;
    // Mean squared residual of the log spectrum after removing its radial profile; with `se`,
    // also its standard error, counting each smoothing footprint as one independent sample.
    auto cost = [&](const std::vector<float>& otf, double* se = nullptr) {
      std::fill(bin_sum.begin(), bin_sum.end(), 0.0);
      for (std::size_t b = 0; b < band.size(); ++b) bin_sum[band[b].radius] += log_power[b] - otf[b];
      double acc = 0.0, acc2 = 0.0;
      for (std::size_t b = 0; b < band.size(); ++b) {
        const double r = log_power[b] - otf[b] - bin_sum[band[b].radius] / bin_count[band[b].radius];
        acc += r * r;
        acc2 += r * r * r * r;
      }
      const double n = static_cast<double>(band.size());
      if (se) {
        const double var = std::max(0.0, acc2 / n - (acc / n) * (acc / n));
        const double footprint = (2.0 * kSmoothRadius + 1) * (2.0 * kSmoothRadius + 1);
        *se = std::sqrt(var * footprint / n);
      }
      return acc / n;
    };
    std::vector<float> scratch;
    Fft2d otf_fft(patch, patch);
    auto param_cost = [&](const MotionParams& p, double* se = nullptr) {
      log_otf(otf_fft, model->motion_psf(p), scratch);
      return cost(scratch, se);
    };
    const ParamFit best = grid_search(
        *bank, [&](std::size_t i) { return cost(bank_otf[i]); }, [&](const MotionParams& p) { return param_cost(p); })
                              .front();
    // Texture anisotropy in one tile mimics a slight lateral blur. Take the slowest lateral speed
    // along the fitted direction whose cost is within one standard error of the best.
    double se = 0.0;
    param_cost(best.params, &se);
    tile.fit = best;
    for (int i = 0; i < kShrinkSteps; ++i) {
      const double scale = static_cast<double>(i) / kShrinkSteps;
      const MotionParams p{scale * best.params.v1, scale * best.params.v2, best.params.v3, best.params.z0};
      const double c = param_cost(p);
      if (c <= best.residual + se) {
        tile.fit = {p, c};
        break;
      }
    }
    tile.valid = true;
  });
  return assemble(blurred.shape(), patch, std::move(tiles));
}

void score(EstimationReport& report, const TargetMaps& gt) { report.r2 = evaluate_r2(report.pred, gt); }

nlohmann::json summarize(const EstimationReport& report) {
  std::vector<double> residuals;
  for (const auto& t : report.tiles)
    if (t.valid) residuals.push_back(t.fit.residual);
  nlohmann::json j{{"tiles", report.tiles.size()}, {"valid_tiles", residuals.size()}};
  if (!residuals.empty()) {
    std::sort(residuals.begin(), residuals.end());
    double mean = 0.0;
    for (double r : residuals) mean += r / static_cast<double>(residuals.size());
    j["residual"] = {{"mean", mean}, {"median", residuals[residuals.size() / 2]}, {"max", residuals.back()}};
  }
  if (report.r2) j["r2"] = *report.r2;
  return j;
}

}  // namespace blurflow
