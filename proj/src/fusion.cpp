#include <algorithm>
#include <cmath>

#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"
#include "glassesim/reconstruct.hpp"

namespace glassesim {

namespace {

constexpr int kMinGainSamples = 64;
constexpr float kMinLuminance = 1e-4f;

double median(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

/// Median guide/source luminance ratio over weighted pixels of `rect`; 0 if too few.
double gain_in(const Image<float>& guide_lum, const Image<float>& src_lum,
               const Image<float>& weight, const PixelRect& rect) {
  std::vector<double> ratios;
  for (int y = rect.y; y < rect.y + rect.height; ++y) {
    for (int x = rect.x; x < rect.x + rect.width; ++x) {
      if (weight(x, y) <= 0.0f) continue;
      const float s = src_lum(x, y), g = guide_lum(x, y);
      if (s < kMinLuminance || g < kMinLuminance) continue;
      ratios.push_back(static_cast<double>(g) / s);
    }
  }
  if (static_cast<int>(ratios.size()) < kMinGainSamples) return 0.0;
  return median(ratios);
}

/// Raised-cosine ramp over the first `overlap` pixels of an interior tile edge.
float ramp(int offset, int overlap) {
  if (offset >= overlap) return 1.0f;
  const double t = (offset + 0.5) / overlap;
  return static_cast<float>(0.5 - 0.5 * std::cos(M_PI * t));
}

}  // namespace

FusionResult fuse(const LinearImage& guide_up, const std::vector<FusionSource>& sources,
                  const FusionConfig& cfg) {
  cfg.validate();
  const int w = guide_up.width(), h = guide_up.height(), nc = guide_up.channels();
  for (const auto& s : sources) {
    if (!s.image.same_shape(guide_up) || s.mask.width() != w || s.mask.height() != h ||
        s.confidence.width() != w || s.confidence.height() != h) {
      throw DomainError("fusion sources must match the upsampled guide");
    }
  }
  const std::size_t ns = sources.size();

  // Per-source weights: confidence inside the mask, zeroed below tau.
  std::vector<Image<float>> weights(ns, Image<float>(w, h));
  FusionResult result{guide_up, Image<float>(w, h, 1, 0.0f), std::vector<double>(ns, 1.0)};
  for (std::size_t i = 0; i < ns; ++i) {
    const auto& s = sources[i];
    auto& wt = weights[i];
    for (std::size_t p = 0; p < wt.values().size(); ++p) {
      const float c = s.mask.values()[p] ? std::clamp(s.confidence.values()[p], 0.0f, 1.0f) : 0.0f;
      wt.values()[p] = c < cfg.tau ? 0.0f : c;
      result.detail_weight.values()[p] = std::max(result.detail_weight.values()[p], wt.values()[p]);
    }
  }
  if (ns == 0) return result;

  const std::vector<PixelRect> tiles = tile_grid(w, h, cfg.tile_size, cfg.tile_overlap);
  std::vector<double> tile_gain(tiles.size() * ns, 1.0);
  if (cfg.gain_compensation) {
    const Image<float> guide_lum = luminance(guide_up);
    std::vector<Image<float>> src_lum(ns);
    for (std::size_t i = 0; i < ns; ++i) src_lum[i] = luminance(sources[i].image);
    for (std::size_t i = 0; i < ns; ++i) {
      const double g = gain_in(guide_lum, src_lum[i], weights[i], PixelRect{0, 0, w, h});
      result.gains[i] = g > 0.0 ? g : 1.0;
    }
    parallel_for(0, static_cast<int>(tiles.size()), [&](int t) {
      for (std::size_t i = 0; i < ns; ++i) {
        const double g = gain_in(guide_lum, src_lum[i], weights[i], tiles[static_cast<std::size_t>(t)]);
        tile_gain[static_cast<std::size_t>(t) * ns + i] = g > 0.0 ? g : result.gains[i];
      }
    });
  }

  // Tiles form a grid; index the ones covering each column and row.
  std::vector<int> starts_x, starts_y;
  for (const auto& t : tiles) {
    if (std::find(starts_x.begin(), starts_x.end(), t.x) == starts_x.end()) starts_x.push_back(t.x);
    if (std::find(starts_y.begin(), starts_y.end(), t.y) == starts_y.end()) starts_y.push_back(t.y);
  }
  auto covering = [&](const std::vector<int>& starts, int extent, int size) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(extent));
    for (std::size_t k = 0; k < starts.size(); ++k) {
      for (int v = starts[k]; v < std::min(extent, starts[k] + size); ++v) {
        out[static_cast<std::size_t>(v)].push_back(static_cast<int>(k));
      }
    }
    return out;
  };
  const auto cover_x = covering(starts_x, w, cfg.tile_size);
  const auto cover_y = covering(starts_y, h, cfg.tile_size);
  std::vector<int> tile_at(starts_x.size() * starts_y.size(), -1);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const auto kx = std::find(starts_x.begin(), starts_x.end(), tiles[t].x) - starts_x.begin();
    const auto ky = std::find(starts_y.begin(), starts_y.end(), tiles[t].y) - starts_y.begin();
    tile_at[static_cast<std::size_t>(ky) * starts_x.size() + static_cast<std::size_t>(kx)] =
        static_cast<int>(t);
  }
  auto tile_weight = [&](const PixelRect& t, int x, int y) {
    float wx = 1.0f, wy = 1.0f;
    if (t.x > 0) wx = std::min(wx, ramp(x - t.x, cfg.tile_overlap));
    if (t.x + t.width < w) wx = std::min(wx, ramp(t.x + t.width - 1 - x, cfg.tile_overlap));
    if (t.y > 0) wy = std::min(wy, ramp(y - t.y, cfg.tile_overlap));
    if (t.y + t.height < h) wy = std::min(wy, ramp(t.y + t.height - 1 - y, cfg.tile_overlap));
    return wx * wy;
  };

  parallel_for(0, h, [&](int y) {
    std::vector<double> acc(static_cast<std::size_t>(nc));
    std::vector<double> fused(static_cast<std::size_t>(nc));
    for (int x = 0; x < w; ++x) {
      const float wmax = result.detail_weight(x, y);
      if (wmax <= 0.0f) continue;  // guide only
      const double wg = std::max(cfg.guide_floor, 1.0 - wmax);
      std::fill(acc.begin(), acc.end(), 0.0);
      double acc_w = 0.0;
      for (const int ky : cover_y[static_cast<std::size_t>(y)]) {
      for (const int kx : cover_x[static_cast<std::size_t>(x)]) {
        const int ti = tile_at[static_cast<std::size_t>(ky) * starts_x.size() + static_cast<std::size_t>(kx)];
        if (ti < 0) continue;
        const auto t = static_cast<std::size_t>(ti);
        const PixelRect& r = tiles[t];
        const double tw = tile_weight(r, x, y);
        double sum_w = wg;
        for (int c = 0; c < nc; ++c) fused[static_cast<std::size_t>(c)] = wg * guide_up(x, y, c);
        for (std::size_t i = 0; i < ns; ++i) {
          const double wi = weights[i](x, y);
          if (wi <= 0.0) continue;
          const double g = tile_gain[t * ns + i];
          sum_w += wi;
          for (int c = 0; c < nc; ++c) {
            fused[static_cast<std::size_t>(c)] += wi * g * sources[i].image(x, y, c);
          }
        }
        for (int c = 0; c < nc; ++c) {
          acc[static_cast<std::size_t>(c)] += tw * fused[static_cast<std::size_t>(c)] / sum_w;
        }
        acc_w += tw;
      }
      }
      for (int c = 0; c < nc; ++c) {
        result.image(x, y, c) = static_cast<float>(acc[static_cast<std::size_t>(c)] / acc_w);
      }
    }
  });
  return result;
}

}  // namespace glassesim
