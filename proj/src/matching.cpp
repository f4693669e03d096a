#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"
#include "glassesim/reconstruct.hpp"

namespace glassesim {

void FusionConfig::validate() const {
  if (!(near > 0.0 && far > near)) throw ConfigError("depth range must satisfy 0 < near < far");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
  if (!(epipolar_tolerance >= 0.0)) throw ConfigError("epipolar tolerance must be >= 0");
  if (block_radius < 1) throw ConfigError("block radius must be >= 1");
  if (depth_samples < 2) throw ConfigError("need at least 2 depth samples");
  if (!(max_sample_spacing >= 0.0)) throw ConfigError("max sample spacing must be >= 0");
  if (fine_substeps < 1) throw ConfigError("fine substeps must be >= 1");
  if (tile_overlap < 8) throw ConfigError("tile overlap must be >= 8 px");
  if (tile_size <= 2 * tile_overlap) throw ConfigError("tile size must exceed twice the overlap");
  if (!(guide_floor >= 0.0 && guide_floor <= 1.0)) throw ConfigError("guide floor must be in [0, 1]");
  if (!(lr_tolerance > 0.0)) throw ConfigError("left-right tolerance must be > 0");
  if (min_invalid_component < 1) throw ConfigError("min invalid component must be >= 1");
  if (!(min_parallax >= 0.0)) throw ConfigError("min parallax must be >= 0");
}

void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = {{"tau", c.tau},
       {"epipolar_tolerance_px", c.epipolar_tolerance},
       {"block_radius", c.block_radius},
       {"near_m", c.near},
       {"far_m", c.far},
       {"depth_samples", c.depth_samples},
       {"max_sample_spacing_px", c.max_sample_spacing},
       {"fine_substeps", c.fine_substeps},
       {"lr_tolerance_px", c.lr_tolerance},
       {"min_invalid_component", c.min_invalid_component},
       {"lowpass_detail", c.lowpass_detail},
       {"tile_size", c.tile_size},
       {"tile_overlap", c.tile_overlap},
       {"guide_floor", c.guide_floor},
       {"gain_compensation", c.gain_compensation},
       {"min_parallax_px", c.min_parallax}};
}

void from_json(const nlohmann::json& j, FusionConfig& c) {
  static const char* known[] = {"tau", "epipolar_tolerance_px", "block_radius", "near_m", "far_m",
                                "depth_samples", "max_sample_spacing_px", "fine_substeps", "lr_tolerance_px",
                                "min_invalid_component", "lowpass_detail", "tile_size",
                                "tile_overlap", "guide_floor", "gain_compensation",
                                "min_parallax_px"};
  if (!j.is_object()) throw ConfigError("fusion config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("unknown fusion config key '" + key + "'");
    }
  }
  try {
    c.tau = j.value("tau", c.tau);
    c.epipolar_tolerance = j.value("epipolar_tolerance_px", c.epipolar_tolerance);
    c.block_radius = j.value("block_radius", c.block_radius);
    c.near = j.value("near_m", c.near);
    c.far = j.value("far_m", c.far);
    c.depth_samples = j.value("depth_samples", c.depth_samples);
    c.max_sample_spacing = j.value("max_sample_spacing_px", c.max_sample_spacing);
    c.fine_substeps = j.value("fine_substeps", c.fine_substeps);
    c.lr_tolerance = j.value("lr_tolerance_px", c.lr_tolerance);
    c.min_invalid_component = j.value("min_invalid_component", c.min_invalid_component);
    c.lowpass_detail = j.value("lowpass_detail", c.lowpass_detail);
    c.tile_size = j.value("tile_size", c.tile_size);
    c.tile_overlap = j.value("tile_overlap", c.tile_overlap);
    c.guide_floor = j.value("guide_floor", c.guide_floor);
    c.gain_compensation = j.value("gain_compensation", c.gain_compensation);
    c.min_parallax = j.value("min_parallax_px", c.min_parallax);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fusion config: ") + e.what());
  }
  c.validate();
}

CorrespondenceField::CorrespondenceField(int width, int height)
    : dx(width, height, 1, 0.0f),
      dy(width, height, 1, 0.0f),
      confidence(width, height, 1, 0.0f),
      rho(width, height, 1, 0.0f),
      valid(width, height, 1, 0) {}

double CorrespondenceField::valid_fraction() const {
  if (valid.empty()) return 0.0;
  const auto n = std::count(valid.values().begin(), valid.values().end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(valid.pixel_count());
}

double CorrespondenceField::mean_confidence() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < valid.values().size(); ++i) {
    if (valid.values()[i]) {
      sum += confidence.values()[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

// Squared 1D distance transform of a sampled function (lower envelope of parabolas).
void edt_1d(const float* f, float* d, int n, std::vector<int>& v, std::vector<float>& z) {
  constexpr float kInf = std::numeric_limits<float>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0f);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (true) {
      if (k < 0) {
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        k = 0;
        break;
      }
      const int p = v[static_cast<std::size_t>(k)];
      const float s = ((f[q] + static_cast<float>(q) * q) - (f[p] + static_cast<float>(p) * p)) /
                      (2.0f * (q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = s;
      z[static_cast<std::size_t>(k) + 1] = kInf;
      break;
    }
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[q] = static_cast<float>(q - p) * (q - p) + f[p];
  }
}

}  // namespace

Image<float> distance_transform(const Mask& mask) {
  constexpr float kInf = std::numeric_limits<float>::infinity();
  const int w = mask.width(), h = mask.height();
  Image<float> rows(w, h);
  parallel_for(0, h, [&](int y) {
    std::vector<float> f(static_cast<std::size_t>(w));
    std::vector<int> v;
    std::vector<float> z;
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = mask(x, y) ? kInf : 0.0f;
    edt_1d(f.data(), rows.row(y), w, v, z);
  });
  Image<float> out(w, h);
  parallel_for(0, w, [&](int x) {
    std::vector<float> f(static_cast<std::size_t>(h)), d(static_cast<std::size_t>(h));
    std::vector<int> v;
    std::vector<float> z;
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = rows(x, y);
    edt_1d(f.data(), d.data(), h, v, z);
    for (int y = 0; y < h; ++y) out(x, y) = std::sqrt(d[static_cast<std::size_t>(y)]);
  });
  return out;
}

namespace {

constexpr float kInvalidScore = -2.0f;
// Zero-variance windows: NCC is undefined, so they can never produce a valid match.
constexpr float kFlatScore = -1.0f;
constexpr double kMinVariance = 1e-10;
constexpr float kJumpPx = 2.0f;  // neighbour displacement difference treated as a discontinuity

double parabola_offset(double left, double mid, double right, double limit) {
  const double denom = left - 2.0 * mid + right;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -limit, limit);
}

/// Sums of C channels over every full (2r+1)^2 window of a w x h grid.
/// `load(x, y, v)` fills the channel values of one pixel; `emit(x, y, s)` receives
/// the window sums centred at (x, y) for r <= x < w - r, r <= y < h - r.
template <int C, typename Load, typename Emit>
void window_sums(int w, int h, int r, std::vector<double>& rows, Load&& load, Emit&& emit) {
  if (w <= 2 * r || h <= 2 * r) return;
  const int n = 2 * r + 1;
  rows.resize(static_cast<std::size_t>(w) * h * C);
  parallel_for(0, h, [&](int y) {
    double acc[C] = {};
    double v[C];
    std::vector<double> vals(static_cast<std::size_t>(w) * C);
    for (int x = 0; x < w; ++x) {
      load(x, y, v);
      for (int c = 0; c < C; ++c) vals[static_cast<std::size_t>(x) * C + c] = v[c];
    }
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < C; ++c) acc[c] += vals[static_cast<std::size_t>(x) * C + c];
    }
    double* out = rows.data() + static_cast<std::size_t>(y) * w * C;
    for (int x = r;; ++x) {
      for (int c = 0; c < C; ++c) out[static_cast<std::size_t>(x) * C + c] = acc[c];
      if (x + r + 1 >= w) break;
      for (int c = 0; c < C; ++c) {
        acc[c] += vals[static_cast<std::size_t>(x + r + 1) * C + c] -
                  vals[static_cast<std::size_t>(x - r) * C + c];
      }
    }
  });
  constexpr int kStrip = 64;
  const int xs = r, xe = w - r;
  parallel_for(0, (xe - xs + kStrip - 1) / kStrip, [&](int strip) {
    const int x0 = xs + strip * kStrip;
    const int x1 = std::min(xe, x0 + kStrip);
    const std::size_t span = static_cast<std::size_t>(x1 - x0) * C;
    std::vector<double> acc(span, 0.0);
    auto at = [&](int y) { return rows.data() + (static_cast<std::size_t>(y) * w + x0) * C; };
    for (int y = 0; y < n; ++y) {
      const double* p = at(y);
      for (std::size_t k = 0; k < span; ++k) acc[k] += p[k];
    }
    double s[C];
    for (int y = r;; ++y) {
      for (int x = x0; x < x1; ++x) {
        for (int c = 0; c < C; ++c) s[c] = acc[static_cast<std::size_t>(x - x0) * C + c];
        emit(x, y, s);
      }
      if (y + r + 1 >= h) break;
      const double* add = at(y + r + 1);
      const double* sub = at(y - r);
      for (std::size_t k = 0; k < span; ++k) acc[k] += add[k] - sub[k];
    }
  });
}

/// Normalised cross-correlation of a fixed template against warped images,
/// both evaluated over the same (2r+1)^2 windows. Windows that leave the
/// template grid or touch an outside sample score kInvalidScore.
class NccScorer {
 public:
  NccScorer(Image<float> templ, int radius)
      : t_(std::move(templ)),
        r_(radius),
        mean_(t_.width(), t_.height(), 1, 0.0f),
        var_(t_.width(), t_.height(), 1, 0.0f) {
    const double inv_n = 1.0 / ((2.0 * r_ + 1) * (2.0 * r_ + 1));
    std::vector<double> rows;
    window_sums<2>(
        t_.width(), t_.height(), r_, rows,
        [&](int x, int y, double* v) {
          v[0] = t_(x, y);
          v[1] = v[0] * v[0];
        },
        [&](int x, int y, const double* s) {
          const double m = s[0] * inv_n;
          mean_(x, y) = m;
          var_(x, y) = std::max(0.0, s[1] * inv_n - m * m);
        });
  }

  int width() const { return t_.width(); }
  int height() const { return t_.height(); }

  /// `warped` and `inside` are template-sized; `inside` holds 0 or 1.
  Image<float> score(const Image<float>& warped, const Image<float>& inside) const {
    const int w = t_.width(), h = t_.height();
    const double n = (2.0 * r_ + 1) * (2.0 * r_ + 1);
    const double inv_n = 1.0 / n;
    Image<float> out(w, h, 1, kInvalidScore);
    window_sums<4>(
        w, h, r_, scratch_,
        [&](int x, int y, double* v) {
          const double s = warped(x, y);
          v[0] = s;
          v[1] = s * s;
          v[2] = s * t_(x, y);
          v[3] = inside(x, y);
        },
        [&](int x, int y, const double* s) {
          if (s[3] < n - 0.5) return;
          const double mu_w = s[0] * inv_n;
          const double var_w = std::max(0.0, s[1] * inv_n - mu_w * mu_w);
          const double var_t = var_(x, y);
          if (var_w < kMinVariance || var_t < kMinVariance) {
            out(x, y) = kFlatScore;
            return;
          }
          const double cov = s[2] * inv_n - mean_(x, y) * mu_w;
          out(x, y) = static_cast<float>(std::clamp(cov / std::sqrt(var_w * var_t), -1.0, 1.0));
        });
    return out;
  }

 private:
  Image<float> t_;
  int r_;
  Image<double> mean_, var_;
  mutable std::vector<double> scratch_;
};

struct Region {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};

inline float bilinear_inside(const Image<float>& src, double x, double y) {
  const int x0 = std::min(static_cast<int>(x), src.width() - 2);
  const int y0 = std::min(static_cast<int>(y), src.height() - 2);
  const double tx = x - x0, ty = y - y0;
  const float* r0 = src.row(y0) + x0;
  const float* r1 = src.row(y0 + 1) + x0;
  const double top = r0[0] + tx * (r0[1] - r0[0]);
  const double bottom = r1[0] + tx * (r1[1] - r1[0]);
  return static_cast<float>(top + ty * (bottom - top));
}

/// Samples `src` at mapper(x, y) for every pixel of the region.
template <typename Mapper>
void warp_region(const Image<float>& src, const Region& reg, Mapper&& mapper, Image<float>& out,
                 Image<float>& inside) {
  const double maxx = src.width() - 1, maxy = src.height() - 1;
  parallel_for(0, reg.h, [&](int j) {
    for (int i = 0; i < reg.w; ++i) {
      const Vec2 p = mapper(reg.x0 + i, reg.y0 + j);
      const bool in = p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= maxx && p.y() <= maxy;
      inside(i, j) = in ? 1.0f : 0.0f;
      out(i, j) = in ? bilinear_inside(src, p.x(), p.y()) : 0.0f;
    }
  });
}

/// warp_region for a plain homography, stepping the homogeneous point along rows.
void warp_homography(const Image<float>& src, const Region& reg, const Mat3& hm,
                     Image<float>& out, Image<float>& inside) {
  const double maxx = src.width() - 1, maxy = src.height() - 1;
  parallel_for(0, reg.h, [&](int j) {
    const Vec3 start = hm * Vec3(reg.x0, reg.y0 + j, 1.0);
    const Vec3 dq = hm.col(0);
    float* o = out.row(j);
    float* in = inside.row(j);
    for (int i = 0; i < reg.w; ++i) {
      const double qx = start.x() + i * dq.x(), qy = start.y() + i * dq.y(),
                   qz = start.z() + i * dq.z();
      const double x = qx / qz, y = qy / qz;
      const bool ok = qz > 1e-12 && x >= 0.0 && y >= 0.0 && x <= maxx && y <= maxy;
      in[i] = ok ? 1.0f : 0.0f;
      o[i] = ok ? bilinear_inside(src, x, y) : 0.0f;
    }
  });
}

struct BestTracker {
  Image<float> best, left, right, prev;
  Image<int> index;

  BestTracker(int w, int h)
      : best(w, h, 1, kInvalidScore),
        left(w, h, 1, kInvalidScore),
        right(w, h, 1, kInvalidScore),
        prev(w, h, 1, kInvalidScore),
        index(w, h, 1, -1) {}

  void update(int k, const Image<float>& s) {
    for (std::size_t i = 0; i < s.values().size(); ++i) {
      const float v = s.values()[i];
      if (v > kInvalidScore && v > best.values()[i]) {
        best.values()[i] = v;
        index.values()[i] = k;
        left.values()[i] = prev.values()[i];
        right.values()[i] = kInvalidScore;
      } else if (index.values()[i] == k - 1 && index.values()[i] >= 0) {
        right.values()[i] = v;
      }
      prev.values()[i] = v;
    }
  }

  /// Sub-sample position of the maximum, k + offset in [-0.5, 0.5].
  double refined(std::size_t i) const {
    const float l = left.values()[i], r = right.values()[i];
    if (l <= kInvalidScore || r <= kInvalidScore) return index.values()[i];
    return index.values()[i] + parabola_offset(l, best.values()[i], r, 0.5);
  }
};

Image<float> lowpass_like_guide(const Image<float>& lum, int scale) {
  if (scale <= 1) return lum;
  // Box of `scale` samples centred on the pixel, half weights at the ends.
  std::vector<float> k(static_cast<std::size_t>(scale) + 1 + (scale % 2), 1.0f);
  k.front() = k.back() = 0.5f;
  const float sum = std::accumulate(k.begin(), k.end(), 0.0f);
  for (float& v : k) v /= sum;
  return convolve_separable(lum, k);
}

/// Maximum over the (2r+1)^2 neighbourhood, clipped at the borders.
Image<float> max_filter(const Image<float>& in, int r) {
  if (r <= 0) return in;
  const int w = in.width(), h = in.height();
  // Sliding maximum over a monotone deque of indices.
  auto pass = [r](const float* src, float* dst, int n, std::ptrdiff_t stride, std::vector<int>& dq) {
    dq.clear();
    std::size_t head = 0;
    int next = 0;
    for (int x = 0; x < n; ++x) {
      for (; next < n && next <= x + r; ++next) {
        while (dq.size() > head && src[dq.back() * stride] <= src[next * stride]) dq.pop_back();
        dq.push_back(next);
      }
      while (dq[head] < x - r) ++head;
      dst[x * stride] = src[dq[head] * stride];
    }
  };
  Image<float> tmp(w, h), out(w, h);
  parallel_for(0, h, [&](int y) {
    std::vector<int> dq;
    pass(in.row(y), tmp.row(y), w, 1, dq);
  });
  parallel_for(0, w, [&](int x) {
    std::vector<int> dq;
    pass(tmp.row(0) + x, out.row(0) + x, h, w, dq);
  });
  return out;
}

std::vector<int> component_sizes(const Mask& bad, Image<int>& label) {
  const int w = bad.width(), h = bad.height();
  label = Image<int>(w, h, 1, -1);
  std::vector<int> sizes;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!bad(x, y) || label(x, y) >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      int count = 0;
      stack.push_back({x, y});
      label(x, y) = id;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++count;
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
          if (!bad(nx[k], ny[k]) || label(nx[k], ny[k]) >= 0) continue;
          label(nx[k], ny[k]) = id;
          stack.push_back({nx[k], ny[k]});
        }
      }
      sizes.push_back(count);
    }
  }
  return sizes;
}

}  // namespace

CorrespondenceField match_epipolar(const LinearImage& guide_up, const LinearImage& detail,
                                   const RigSpec& rig, int detail_index,
                                   const FusionConfig& cfg) {
  cfg.validate();
  if (detail_index < 0 || detail_index >= static_cast<int>(rig.details.size())) {
    throw DomainError("detail index out of range");
  }
  const CameraSpec tcam = rig.target_camera();
  const CameraSpec& dcam = rig.details[static_cast<std::size_t>(detail_index)].camera;
  const int tw = tcam.sensor.width_px, th = tcam.sensor.height_px;
  if (guide_up.width() != tw || guide_up.height() != th) {
    throw DomainError("upsampled guide does not match the target resolution");
  }
  if (detail.width() != dcam.sensor.width_px || detail.height() != dcam.sensor.height_px) {
    throw DomainError("detail image does not match its camera");
  }
  CorrespondenceField field(tw, th);
  const int r = cfg.block_radius;

  const Image<float> lum_t = luminance(guide_up);
  const Image<float> lum_d =
      cfg.lowpass_detail ? lowpass_like_guide(luminance(detail), rig.target_scale)
                         : luminance(detail);

  const double rho_lo = 1.0 / cfg.far, rho_hi = 1.0 / cfg.near;
  const Mat3 a_mat = sweep_homography(rig, detail_index, 0.0);
  const Vec3 b_vec = sweep_homography(rig, detail_index, 1.0).col(2) - a_mat.col(2);
  auto to_detail = [&](double x, double y, double rho) {
    const Vec3 q = a_mat * Vec3(x, y, 1.0) + rho * b_vec;
    if (!(q.z() > 1e-12)) return Vec2(-1e9, -1e9);
    return Vec2(q.x() / q.z(), q.y() / q.z());
  };
  auto inverse_at = [&](double rho) {
    Mat3 h = a_mat;
    h.col(2) += rho * b_vec;
    return Mat3(h.inverse());
  };

  // Target-frame bounding box of everything the detail can see over the depth range.
  double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
  for (double rho : {rho_lo, rho_hi}) {
    const Mat3 inv = inverse_at(rho);
    const double dw = dcam.sensor.width_px - 0.5, dh = dcam.sensor.height_px - 0.5;
    for (const Vec2& c : {Vec2(-0.5, -0.5), Vec2(dw, -0.5), Vec2(dw, dh), Vec2(-0.5, dh)}) {
      const Vec3 q = inv * Vec3(c.x(), c.y(), 1.0);
      if (!(q.z() > 0.0)) {
        bx0 = by0 = -1e300;
        bx1 = by1 = 1e300;
        continue;
      }
      bx0 = std::min(bx0, q.x() / q.z());
      bx1 = std::max(bx1, q.x() / q.z());
      by0 = std::min(by0, q.y() / q.z());
      by1 = std::max(by1, q.y() / q.z());
    }
  }
  Region reg;
  reg.x0 = static_cast<int>(std::max(0.0, std::floor(bx0) - r - 1));
  reg.y0 = static_cast<int>(std::max(0.0, std::floor(by0) - r - 1));
  const int rx1 = static_cast<int>(std::min<double>(tw, std::ceil(bx1) + r + 2));
  const int ry1 = static_cast<int>(std::min<double>(th, std::ceil(by1) + r + 2));
  reg.w = rx1 - reg.x0;
  reg.h = ry1 - reg.y0;
  if (reg.w <= 2 * r || reg.h <= 2 * r) return field;

  // Enough planes that neighbouring samples lie at most max_sample_spacing apart
  // along every segment in the region.
  int n_planes = cfg.depth_samples;
  if (cfg.max_sample_spacing > 0.0) {
    double extent = 0.0;
    for (int sj = 0; sj <= 8; ++sj) {
      for (int si = 0; si <= 8; ++si) {
        const double x = reg.x0 + (reg.w - 1) * si / 8.0, y = reg.y0 + (reg.h - 1) * sj / 8.0;
        const Vec2 a = to_detail(x, y, rho_lo), b = to_detail(x, y, rho_hi);
        if (a.x() > -1e8 && b.x() > -1e8) extent = std::max(extent, (a - b).norm());
      }
    }
    const double needed = std::ceil(extent / cfg.max_sample_spacing) + 1.0;
    n_planes = static_cast<int>(std::clamp(needed, static_cast<double>(n_planes), 4096.0));
  }
  const double step = (rho_hi - rho_lo) / (n_planes - 1);

  const NccScorer scorer(crop(lum_t, reg.x0, reg.y0, reg.w, reg.h), r);
  Image<float> warped(reg.w, reg.h), inside(reg.w, reg.h);
  auto sweep = [&](auto&& mapper) {
    warp_region(lum_d, reg, mapper, warped, inside);
    return scorer.score(warped, inside);
  };
  const auto idx = [&](int i, int j) { return static_cast<std::size_t>(j) * reg.w + i; };

  // Coarse sweep over inverse-depth planes. Each pixel takes the best of the
  // windows shifted by up to r/2 that still contain it, so pixels near a depth
  // edge can use a window lying on their own side.
  const int shift = r / 2;
  BestTracker coarse(reg.w, reg.h);
  for (int k = 0; k < n_planes; ++k) {
    const double rho = rho_lo + k * step;
    Mat3 hm = a_mat;
    hm.col(2) += rho * b_vec;
    warp_homography(lum_d, reg, hm, warped, inside);
    coarse.update(k, max_filter(scorer.score(warped, inside), shift));
  }

  // Fine sweep around each pixel's winning plane.
  const int subs = cfg.fine_substeps;
  const double fine_step = step / subs;
  Image<float> rho_c(reg.w, reg.h, 1, 0.0f);
  for (std::size_t i = 0; i < rho_c.values().size(); ++i) {
    rho_c.values()[i] = static_cast<float>(rho_lo + std::max(0, coarse.index.values()[i]) * step);
  }
  BestTracker fine(reg.w, reg.h);
  for (int j = -subs; j <= subs; ++j) {
    fine.update(j + subs, sweep([&](int x, int y) {
                  const double rho = std::clamp(
                      rho_c(x - reg.x0, y - reg.y0) + j * fine_step, rho_lo, rho_hi);
                  return to_detail(x, y, rho);
                }));
  }
  Image<float> rho_f(reg.w, reg.h, 1, 0.0f);
  Image<float> score(reg.w, reg.h, 1, kInvalidScore);
  for (std::size_t i = 0; i < rho_f.values().size(); ++i) {
    if (coarse.index.values()[i] < 0 || fine.index.values()[i] < 0) continue;
    const double pos = fine.refined(i) - subs;
    rho_f.values()[i] =
        static_cast<float>(std::clamp(rho_c.values()[i] + pos * fine_step, rho_lo, rho_hi));
    score.values()[i] = fine.best.values()[i];
  }

  // Matched detail positions and the local epipolar normal.
  Image<float> mx(reg.w, reg.h), my(reg.w, reg.h), nx(reg.w, reg.h, 1, 0.0f),
      ny(reg.w, reg.h, 1, 0.0f);
  const double seg_span = rho_hi - rho_lo;
  parallel_for(0, reg.h, [&](int j) {
    for (int i = 0; i < reg.w; ++i) {
      const int x = reg.x0 + i, y = reg.y0 + j;
      const double rho = rho_f(i, j);
      const Vec2 m = to_detail(x, y, rho);
      mx(i, j) = static_cast<float>(m.x());
      my(i, j) = static_cast<float>(m.y());
      const Vec3 q = a_mat * Vec3(x, y, 1.0) + rho * b_vec;
      const Vec2 d((b_vec.x() * q.z() - q.x() * b_vec.z()) / (q.z() * q.z()),
                   (b_vec.y() * q.z() - q.y() * b_vec.z()) / (q.z() * q.z()));
      if (d.norm() * seg_span > 1e-6) {
        const Vec2 e = d.normalized();
        nx(i, j) = static_cast<float>(-e.y());
        ny(i, j) = static_cast<float>(e.x());
      }
    }
  });

  // Soft epipolar constraint: off-segment candidates scored with 1 / (1 + (d / eps)^2).
  Image<float> offset(reg.w, reg.h, 1, 0.0f);
  if (cfg.epipolar_tolerance > 0.0) {
    const double eps = cfg.epipolar_tolerance;
    const double wgt = 1.0 / (1.0 + 1.0 / (eps * eps));
    std::array<Image<float>, 2> side;
    for (int s = 0; s < 2; ++s) {
      const double o = s == 0 ? -1.0 : 1.0;
      side[static_cast<std::size_t>(s)] = sweep([&](int x, int y) {
        const int i = x - reg.x0, j = y - reg.y0;
        return Vec2(mx(i, j) + o * nx(i, j), my(i, j) + o * ny(i, j));
      });
    }
    for (std::size_t i = 0; i < offset.values().size(); ++i) {
      const float s0 = score.values()[i], sl = side[0].values()[i], sr = side[1].values()[i];
      if (s0 <= kInvalidScore || sl <= kInvalidScore || sr <= kInvalidScore) continue;
      if (nx.values()[i] == 0.0f && ny.values()[i] == 0.0f) continue;
      const double o = parabola_offset(sl * wgt, s0, sr * wgt, 1.0);
      offset.values()[i] = static_cast<float>(std::clamp(o, -eps, eps));
    }
  }

  // Reverse sweep (detail -> target) for the left-right check.
  const int dw = dcam.sensor.width_px, dh = dcam.sensor.height_px;
  const Region dreg{0, 0, dw, dh};
  const NccScorer reverse_scorer(lum_d, r);
  BestTracker reverse(dw, dh);
  {
    Image<float> rw(dw, dh), rin(dw, dh);
    for (int k = 0; k < n_planes; ++k) {
      warp_homography(lum_t, dreg, inverse_at(rho_lo + k * step), rw, rin);
      reverse.update(k, max_filter(reverse_scorer.score(rw, rin), shift));
    }
  }

  // Structure tensor of the target window: a displacement change along a
  // lone edge alters nothing in the window, so the left-right check and the
  // step tests below only count its visible part.
  const Image<float> tmpl = crop(lum_t, reg.x0, reg.y0, reg.w, reg.h);
  Image<float> gxx(reg.w, reg.h, 1, 0.0f), gxy(reg.w, reg.h, 1, 0.0f), gyy(reg.w, reg.h, 1, 0.0f);
  for (int j = 1; j + 1 < reg.h; ++j) {
    for (int i = 1; i + 1 < reg.w; ++i) {
      const float gx = 0.5f * (tmpl(i + 1, j) - tmpl(i - 1, j));
      const float gy = 0.5f * (tmpl(i, j + 1) - tmpl(i, j - 1));
      gxx(i, j) = gx * gx;
      gxy(i, j) = gx * gy;
      gyy(i, j) = gy * gy;
    }
  }
  gxx = box_mean(gxx, r);
  gxy = box_mean(gxy, r);
  gyy = box_mean(gyy, r);
  auto visible = [&](int i, int j, const Vec2& d) {
    const double a = gxx(i, j), b = gxy(i, j), c = gyy(i, j);
    const double top = 0.5 * (a + c) + std::hypot(0.5 * (a - c), b);
    if (!(top > 0.0)) return 0.0;
    return std::sqrt(std::max(0.0, a * d.x() * d.x() + 2.0 * b * d.x() * d.y() + c * d.y() * d.y()) / top);
  };
  Mask ok(reg.w, reg.h, 1, 0);
  parallel_for(0, reg.h, [&](int j) {
    for (int i = 0; i < reg.w; ++i) {
      const std::size_t id = idx(i, j);
      if (!(score.values()[id] >= 0.0f)) continue;
      const double fx = mx(i, j) + offset(i, j) * nx(i, j);
      const double fy = my(i, j) + offset(i, j) * ny(i, j);
      if (fx < 0.0 || fy < 0.0 || fx > dw - 1 || fy > dh - 1) continue;
      const int ux = static_cast<int>(std::lround(mx(i, j)));
      const int uy = static_cast<int>(std::lround(my(i, j)));
      if (ux < 0 || uy < 0 || ux >= dw || uy >= dh) continue;
      const std::size_t rid = static_cast<std::size_t>(uy) * dw + ux;
      if (reverse.index.values()[rid] < 0 || !(reverse.best.values()[rid] >= 0.0f)) continue;
      const double rho_back = rho_lo + reverse.refined(rid) * step;
      const Vec3 q = inverse_at(rho_back) * Vec3(mx(i, j), my(i, j), 1.0);
      const Vec2 back(q.x() / q.z(), q.y() / q.z());
      if (visible(i, j, back - Vec2(reg.x0 + i, reg.y0 + j)) > cfg.lr_tolerance) continue;
      ok(i, j) = 1;
      mx(i, j) = static_cast<float>(fx);
      my(i, j) = static_cast<float>(fy);
    }
  });

  // Erode around occlusion boundaries: windows that straddle one report the
  // foreground's displacement for a few px beyond the true edge. Only
  // confident pixels (confidence >= tau) count as matches here. Gaps between
  // them and displacement jumps seed the erosion when the confident
  // displacements on the two sides of the seed differ by J > kJumpPx px (a
  // depth step); a seed then erodes r + min(J, r). Gaps inside untextured
  // areas have no confident pixels beyond them and stay plain holes.
  const float strong = static_cast<float>(std::sqrt(cfg.tau));
  Image<float> jump(reg.w, reg.h, 1, 0.0f);
  Mask seeds(reg.w, reg.h, 1, 0);
  {
    Mask confident(reg.w, reg.h, 1, 0), bad(reg.w, reg.h, 1, 0);
    for (std::size_t i = 0; i < bad.values().size(); ++i) {
      const bool high = score.values()[i] >= strong;
      confident.values()[i] = ok.values()[i] && high;
      bad.values()[i] = !confident.values()[i];
    }
    auto disp = [&](int i, int j) { return Vec2(mx(i, j) - i, my(i, j) - j); };
    for (int j = 0; j < reg.h; ++j) {
      for (int i = 0; i < reg.w; ++i) {
        if (!confident(i, j)) continue;
        if (i + 1 < reg.w && confident(i + 1, j) && visible(i, j, disp(i + 1, j) - disp(i, j)) > kJumpPx) {
          bad(i, j) = bad(i + 1, j) = 1;
        }
        if (j + 1 < reg.h && confident(i, j + 1) && visible(i, j, disp(i, j + 1) - disp(i, j)) > kJumpPx) {
          bad(i, j) = bad(i, j + 1) = 1;
        }
      }
    }
    Image<int> label;
    const std::vector<int> sizes = component_sizes(bad, label);
    // Step across each seed: the nearest confident displacements on either side
    // along a row or column, searched up to 4r away.
    const int reach = 4 * r;
    auto step_along = [&](int i, int j, int di, int dj) {
      Vec2 side[2];
      for (int k = 0; k < 2; ++k) {
        const int sgn = k == 0 ? -1 : 1;
        int t = 1;
        for (; t <= reach; ++t) {
          const int ii = i + sgn * t * di, jj = j + sgn * t * dj;
          if (ii < 0 || jj < 0 || ii >= reg.w || jj >= reg.h) return 0.0;
          if (confident(ii, jj)) break;
        }
        if (t > reach) return 0.0;
        side[k] = disp(i + sgn * t * di, j + sgn * t * dj);
      }
      return visible(i, j, side[1] - side[0]);
    };
    parallel_for(0, reg.h, [&](int j) {
      for (int i = 0; i < reg.w; ++i) {
        const int l = label(i, j);
        if (l < 0 || sizes[static_cast<std::size_t>(l)] < cfg.min_invalid_component) continue;
        const double step = std::max(step_along(i, j, 1, 0), step_along(i, j, 0, 1));
        if (step <= kJumpPx) continue;
        seeds(i, j) = 1;
        jump(i, j) = static_cast<float>(step);
      }
    });
  }
  // Ranges are rounded up to powers of two so a handful of distance transforms suffice.
  Mask keep(reg.w, reg.h, 1, 1);
  for (int level = 0;; ++level) {
    const float lo = level == 0 ? -1.0f : std::ldexp(1.0f, level - 1);
    const float extra = std::ldexp(1.0f, level);
    const bool last = extra >= r;
    Mask clear(reg.w, reg.h, 1, 1);
    bool any = false;
    for (std::size_t i = 0; i < clear.values().size(); ++i) {
      const float jv = jump.values()[i];
      if (seeds.values()[i] && jv > lo && (last || jv <= extra)) {
        clear.values()[i] = 0;
        any = true;
      }
    }
    if (any) {
      const double reach = r + std::min<double>(extra, r);
      const Image<float> dist = distance_transform(clear);
      for (std::size_t i = 0; i < keep.values().size(); ++i) {
        if (dist.values()[i] <= reach) keep.values()[i] = 0;
      }
    }
    if (last) break;
  }

  for (int j = 0; j < reg.h; ++j) {
    for (int i = 0; i < reg.w; ++i) {
      if (!ok(i, j) || !keep(i, j) || score(i, j) < strong) continue;
      const int x = reg.x0 + i, y = reg.y0 + j;
      const float s = score(i, j);
      field.valid(x, y) = 1;
      field.dx(x, y) = mx(i, j) - static_cast<float>(x);
      field.dy(x, y) = my(i, j) - static_cast<float>(y);
      field.rho(x, y) = rho_f(i, j);
      field.confidence(x, y) = std::max(0.0f, s) * std::max(0.0f, s);
    }
  }
  return field;
}

WarpedDetail warp_detail(const LinearImage& detail, const CorrespondenceField& field) {
  const int w = field.width(), h = field.height();
  WarpedDetail out{LinearImage(w, h, detail.channels(), 0.0f), Mask(w, h, 1, 0)};
  const double maxx = detail.width() - 1, maxy = detail.height() - 1;
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!field.valid(x, y)) continue;
      const double sx = x + field.dx(x, y), sy = y + field.dy(x, y);
      if (sx < 0.0 || sy < 0.0 || sx > maxx || sy > maxy) continue;
      out.mask(x, y) = 1;
      for (int c = 0; c < detail.channels(); ++c) {
        out.image(x, y, c) = sample_bicubic(detail, sx, sy, c);
      }
    }
  });
  return out;
}

}  // namespace glassesim
