#include "blurflow/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <random>
#include <tuple>

#include "blurflow/error.hpp"
#include "blurflow/fft.hpp"
#include "blurflow/psf.hpp"
#include "blurflow/rng.hpp"

namespace blurflow {

void TargetMaps::check_shape() const {
  const Shape s = v1.shape();
  if (v2.shape() != s || v3.shape() != s || z0.shape() != s || w.shape() != s)
    throw DomainError("target planes disagree in shape");
}

TargetMaps make_targets(const VelocityField& field, const Plane& validity) {
  if (validity.shape() != field.shape()) throw DomainError("validity map does not match the field");
  return {field.v1, field.v2, field.v3, field.z0, validity};
}

ImagePlane synthesize(const ImagePlane& sharp, const MaskSet& masks, std::span<const Kernel2D> kernels) {
  if (sharp.shape() != masks.shape()) throw DomainError("sharp image and masks differ in shape");
  if (kernels.size() != static_cast<std::size_t>(masks.count())) throw DomainError("need one kernel per mask");
  const int h = sharp.height(), w = sharp.width();
  const int size = kernels.front().size();
  for (const auto& k : kernels)
    if (k.size() != size) throw DomainError("kernels differ in size");
  const int c = size / 2;
  const int ph = fft_friendly_size(h + size - 1);
  const int pw = fft_friendly_size(w + size - 1);

  Fft2d image(ph, pw), kernel(ph, pw);
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(ph) * pw);
  for (int n = 0; n < masks.count(); ++n) {
    if (masks.area(n) == 0) continue;
    auto ib = image.buffer();
    std::fill(ib.begin(), ib.end(), std::complex<double>{});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (masks.label(y, x) == n) image.at(y, x) = sharp(y, x);
    image.forward();

    auto kb = kernel.buffer();
    std::fill(kb.begin(), kb.end(), std::complex<double>{});
    const Kernel2D& k = kernels[n];
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) kernel.at((y - c + ph) % ph, (x - c + pw) % pw) = k.at(y, x);
    kernel.forward();

    for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] += ib[i] * kb[i];
  }
  std::copy(spectrum.begin(), spectrum.end(), image.buffer().begin());
  image.inverse();

  ImagePlane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = std::max(0.0, image.at(y, x).real());
  return out;
}

ImagePlane form_image(const ImagePlane& sharp, const MaskSet& masks, std::span<const MotionParams> params,
                      const OpticsConfig& optics) {
  if (params.size() != static_cast<std::size_t>(masks.count())) throw DomainError("need one MotionParams per mask");
  PsfModel model(optics);
  std::vector<Kernel2D> kernels;
  kernels.reserve(params.size());
  for (const auto& p : params) kernels.push_back(model.motion_psf(p));
  return synthesize(sharp, masks, kernels);
}

ImagePlane form_image(const ImagePlane& sharp, const VelocityField& field, const OpticsConfig& optics) {
  if (sharp.shape() != field.shape()) throw DomainError("sharp image and field differ in shape");
  std::map<std::tuple<double, double, double, double>, int> regions;
  std::vector<MotionParams> params;
  std::vector<int> labels(sharp.size());
  for (int y = 0; y < sharp.height(); ++y)
    for (int x = 0; x < sharp.width(); ++x) {
      const MotionParams p = field.at(y, x);
      auto [it, inserted] = regions.try_emplace({p.v1, p.v2, p.v3, p.z0}, static_cast<int>(params.size()));
      if (inserted) params.push_back(p);
      labels[static_cast<std::size_t>(y) * sharp.width() + x] = it->second;
    }
  const MaskSet masks(sharp.shape(), static_cast<int>(params.size()), std::move(labels));
  return form_image(sharp, masks, params, optics);
}

ImagePlane apply_noise(const ImagePlane& clean, const OpticsConfig& optics, double photon_scale, std::uint64_t seed) {
  if (!(photon_scale > 0.0) || !std::isfinite(photon_scale)) throw DomainError("photon_scale must be > 0");
  optics.validate();
  const double beta = optics.quantum_efficiency_beta;
  const double sigma = optics.gaussian_sigma;
  ImagePlane out(clean.shape());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CounterRng rng(derive_key(seed, i));
    const double rate = photon_scale * std::max(0.0, clean[i]);
    double photons = 0.0;
    if (rate > 0.0) photons = static_cast<double>(std::poisson_distribution<long long>(rate)(rng));
    double background = 0.0;
    if (sigma > 0.0) background = std::abs(std::normal_distribution<double>(0.0, sigma)(rng));
    out[i] = beta * photons / photon_scale + background;
  }
  return out;
}

Plane validity_map(const ImagePlane& image, int window, double tau) {
  if (window < 3 || window % 2 == 0) throw DomainError("validity window must be odd and >= 3");
  if (!(tau >= 0.0)) throw DomainError("validity threshold must be >= 0");
  const int h = image.height(), w = image.width();
  if (h == 0 || w == 0) return Plane(h, w, 1.0);

  auto px = [&](int y, int x) { return image(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
  std::vector<double> laplacian(image.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      laplacian[static_cast<std::size_t>(y) * w + x] =
          px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1) - 4.0 * px(y, x);
  auto median = [](std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
  };
  const double centre = median(laplacian);
  for (double& v : laplacian) v = std::abs(v - centre);
  // The 4-neighbour stencil amplifies white noise by sqrt(20); undo that so the MAD estimate is
  // in intensity units, comparable with the local standard deviation.
  const double noise_sigma = 1.4826 * median(std::move(laplacian)) / std::sqrt(20.0);
  const double threshold = tau * noise_sigma;

  // Windowed variance via integral images of the mean-removed image.
  const double mean = image.mean();
  const int stride = w + 1;
  std::vector<long double> s1(static_cast<std::size_t>(h + 1) * stride, 0.0L), s2(s1.size(), 0.0L);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const long double v = image(y, x) - mean;
      const std::size_t i = static_cast<std::size_t>(y + 1) * stride + x + 1;
      s1[i] = v + s1[i - 1] + s1[i - stride] - s1[i - stride - 1];
      s2[i] = v * v + s2[i - 1] + s2[i - stride] - s2[i - stride - 1];
    }
  const int r = window / 2;
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      auto box = [&](const std::vector<long double>& s) {
        return s[static_cast<std::size_t>(y1) * stride + x1] - s[static_cast<std::size_t>(y0) * stride + x1] -
               s[static_cast<std::size_t>(y1) * stride + x0] + s[static_cast<std::size_t>(y0) * stride + x0];
      };
      const long double n = static_cast<long double>((y1 - y0) * (x1 - x0));
      const long double m1 = box(s1) / n;
      const long double var = std::max(0.0L, box(s2) / n - m1 * m1);
      out(y, x) = std::sqrt(static_cast<double>(var)) > threshold ? 0.0 : 1.0;
    }
  return out;
}

}  // namespace blurflow
