#include "glassesim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "glassesim/error.hpp"
#include "glassesim/io.hpp"
#include "glassesim/parallel.hpp"

namespace glassesim {

namespace {

nlohmann::json rgb_json(const Rgbf& c) { return {c[0], c[1], c[2]}; }

Rgbf rgb_from_json(const nlohmann::json& j) {
  if (j.is_number()) {
    const float v = j.get<float>();
    return {v, v, v};
  }
  if (!j.is_array() || j.size() != 3) throw ConfigError("colour must be a number or [r, g, b]");
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

float max3(const Rgbf& c) { return std::max({c[0], c[1], c[2]}); }

Rgbf mix(const Rgbf& a, const Rgbf& b, float t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

class ConstantTexture final : public Texture {
 public:
  explicit ConstantTexture(const Rgbf& v) : v_(v) {}
  Rgbf sample(double, double) const override { return v_; }
  float max_value() const override { return max3(v_); }
  nlohmann::json to_json() const override {
    return {{"type", "constant"}, {"value", rgb_json(v_)}};
  }

 private:
  Rgbf v_;
};

class ImageTexture final : public Texture {
 public:
  ImageTexture(LinearImage image, std::filesystem::path source)
      : image_(std::move(image)), source_(std::move(source)) {
    if (image_.empty()) throw ConfigError("texture image is empty");
    for (float v : image_.values()) max_ = std::max(max_, v);
  }
  Rgbf sample(double u, double v) const override {
    const double x = u * image_.width() - 0.5;
    const double y = v * image_.height() - 0.5;
    Rgbf out{};
    for (int c = 0; c < 3; ++c) {
      out[c] = sample_bilinear(image_, x, y, std::min(c, image_.channels() - 1));
    }
    return out;
  }
  float max_value() const override { return max_; }
  nlohmann::json to_json() const override {
    return {{"type", "png"}, {"path", source_.generic_string()}};
  }

 private:
  LinearImage image_;
  std::filesystem::path source_;
  float max_ = 0.0f;
};

class CheckerTexture final : public Texture {
 public:
  CheckerTexture(int nu, int nv, const Rgbf& a, const Rgbf& b) : nu_(nu), nv_(nv), a_(a), b_(b) {
    if (nu < 1 || nv < 1) throw ConfigError("checker needs at least one cell per axis");
  }
  Rgbf sample(double u, double v) const override {
    const int iu = std::clamp(static_cast<int>(std::floor(u * nu_)), 0, nu_ - 1);
    const int iv = std::clamp(static_cast<int>(std::floor(v * nv_)), 0, nv_ - 1);
    return ((iu + iv) & 1) ? b_ : a_;
  }
  float max_value() const override { return std::max(max3(a_), max3(b_)); }
  nlohmann::json to_json() const override {
    return {{"type", "checker"}, {"cells_u", nu_}, {"cells_v", nv_}, {"a", rgb_json(a_)},
            {"b", rgb_json(b_)}};
  }

 private:
  int nu_, nv_;
  Rgbf a_, b_;
};

std::uint64_t hash64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class NoiseTexture final : public Texture {
 public:
  NoiseTexture(std::uint64_t seed, int base_cells, int octaves, const Rgbf& dark,
               const Rgbf& bright)
      : seed_(seed), base_(base_cells), octaves_(octaves), dark_(dark), bright_(bright) {
    if (base_cells < 1 || octaves < 1 || octaves > 12) {
      throw ConfigError("noise texture needs base_cells >= 1 and 1..12 octaves");
    }
  }

  Rgbf sample(double u, double v) const override {
    double sum = 0.0, norm = 0.0, amp = 1.0;
    std::array<double, 3> tint{};
    double cells = base_;
    for (int o = 0; o < octaves_; ++o) {
      sum += amp * lattice(u * cells, v * cells, o, 0);
      for (int c = 0; c < 3; ++c) tint[c] += amp * lattice(u * cells, v * cells, o, c + 1);
      norm += amp;
      amp *= kPersistence;
      cells *= 2.0;
    }
    const double t = sum / norm;
    Rgbf out = mix(dark_, bright_, static_cast<float>(t));
    for (int c = 0; c < 3; ++c) {
      const double shade = 0.85 + 0.3 * (tint[c] / norm);
      out[c] = static_cast<float>(std::clamp(out[c] * shade, 0.0, 1.0));
    }
    return out;
  }
  float max_value() const override { return 1.0f; }
  nlohmann::json to_json() const override {
    return {{"type", "noise"},      {"seed", seed_},           {"base_cells", base_},
            {"octaves", octaves_}, {"dark", rgb_json(dark_)}, {"bright", rgb_json(bright_)}};
  }

 private:
  static constexpr double kPersistence = 0.7;

  double node(long long ix, long long iy, int octave, int lane) const {
    std::uint64_t h = hash64(seed_ ^ (static_cast<std::uint64_t>(octave) << 56) ^
                             (static_cast<std::uint64_t>(lane) << 60));
    h = hash64(h ^ static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL);
    h = hash64(h ^ static_cast<std::uint64_t>(iy) * 0x85157af5ULL);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  double lattice(double x, double y, int octave, int lane) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<long long>(fx);
    const auto iy = static_cast<long long>(fy);
    auto smooth = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
    const double tx = smooth(x - fx), ty = smooth(y - fy);
    const double a = node(ix, iy, octave, lane), b = node(ix + 1, iy, octave, lane);
    const double c = node(ix, iy + 1, octave, lane), d = node(ix + 1, iy + 1, octave, lane);
    return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
  }

  std::uint64_t seed_;
  int base_, octaves_;
  Rgbf dark_, bright_;
};

class EdgeTexture final : public Texture {
 public:
  EdgeTexture(double angle, const Rgbf& dark, const Rgbf& bright)
      : angle_(angle), c_(std::cos(angle)), s_(std::sin(angle)), dark_(dark), bright_(bright) {}
  Rgbf sample(double u, double v) const override {
    // Signed distance to the edge line through the centre, tilted from vertical.
    const double d = (u - 0.5) * c_ - (v - 0.5) * s_;
    return d < 0.0 ? dark_ : bright_;
  }
  float max_value() const override { return std::max(max3(dark_), max3(bright_)); }
  nlohmann::json to_json() const override {
    return {{"type", "edge"}, {"angle_rad", angle_}, {"dark", rgb_json(dark_)},
            {"bright", rgb_json(bright_)}};
  }

 private:
  double angle_, c_, s_;
  Rgbf dark_, bright_;
};

}  // namespace

TexturePtr constant_texture(const Rgbf& value) { return std::make_shared<ConstantTexture>(value); }
TexturePtr image_texture(LinearImage image, std::filesystem::path source) {
  return std::make_shared<ImageTexture>(std::move(image), std::move(source));
}
TexturePtr checker_texture(int cells_u, int cells_v, const Rgbf& a, const Rgbf& b) {
  return std::make_shared<CheckerTexture>(cells_u, cells_v, a, b);
}
TexturePtr noise_texture(std::uint64_t seed, int base_cells, int octaves, const Rgbf& dark,
                         const Rgbf& bright) {
  return std::make_shared<NoiseTexture>(seed, base_cells, octaves, dark, bright);
}
TexturePtr edge_texture(double angle, const Rgbf& dark, const Rgbf& bright) {
  return std::make_shared<EdgeTexture>(angle, dark, bright);
}

TexturePtr texture_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") return constant_texture(rgb_from_json(j.at("value")));
  if (type == "png") {
    std::filesystem::path p = j.at("path").get<std::string>();
    const std::filesystem::path resolved = p.is_absolute() ? p : base_dir / p;
    return image_texture(io::read_png(resolved), p);
  }
  if (type == "checker") {
    return checker_texture(j.at("cells_u").get<int>(), j.at("cells_v").get<int>(),
                           rgb_from_json(j.at("a")), rgb_from_json(j.at("b")));
  }
  if (type == "noise") {
    return noise_texture(j.at("seed").get<std::uint64_t>(), j.at("base_cells").get<int>(),
                         j.at("octaves").get<int>(), rgb_from_json(j.at("dark")),
                         rgb_from_json(j.at("bright")));
  }
  if (type == "edge") {
    return edge_texture(j.at("angle_rad").get<double>(), rgb_from_json(j.at("dark")),
                        rgb_from_json(j.at("bright")));
  }
  throw ConfigError("unknown texture type '" + type + "'");
}

void SceneSpec::validate() const {
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const Quad& q = quads[i];
    if (!(q.width > 0.0 && q.height > 0.0)) {
      throw ConfigError("quad " + std::to_string(i) + " must have positive extent");
    }
    if (!q.texture) throw ConfigError("quad " + std::to_string(i) + " has no texture");
    if (!(q.albedo >= 0.0f)) throw ConfigError("albedo must be >= 0");
    q.pose.validate();
  }
  for (float b : background) {
    if (!(b >= 0.0f) || !std::isfinite(b)) throw ConfigError("background must be finite, >= 0");
  }
}

Vec3 scene_light_direction() { return Vec3(0.3, -0.6, -1.0).normalized(); }

nlohmann::json scene_to_json(const SceneSpec& scene) {
  nlohmann::json quads = nlohmann::json::array();
  for (const Quad& q : scene.quads) {
    nlohmann::json jq = {{"id", q.id},
                         {"pose", q.pose},
                         {"width_m", q.width},
                         {"height_m", q.height},
                         {"albedo", q.albedo},
                         {"texture", q.texture->to_json()}};
    if (q.specular) {
      jq["specular"] = {{"strength", q.specular->strength},
                        {"shininess", q.specular->shininess}};
    }
    quads.push_back(jq);
  }
  return {{"background", rgb_json(scene.background)}, {"quads", quads}};
}

SceneSpec scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  SceneSpec scene;
  try {
    if (j.contains("background")) scene.background = rgb_from_json(j.at("background"));
    int next_id = 0;
    for (const auto& jq : j.at("quads")) {
      Quad q;
      q.pose = jq.at("pose").get<Pose>();
      q.width = jq.at("width_m").get<double>();
      q.height = jq.at("height_m").get<double>();
      q.albedo = jq.value("albedo", 1.0f);
      q.texture = texture_from_json(jq.at("texture"), base_dir);
      q.id = jq.value("id", next_id);
      next_id = q.id + 1;
      if (jq.contains("specular")) {
        q.specular = Specular{jq["specular"].value("strength", 0.0f),
                              jq["specular"].value("shininess", 32.0f)};
      }
      scene.quads.push_back(std::move(q));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  scene.validate();
  return scene;
}

Quad fronto_quad(const Vec3& center, double width, double height, TexturePtr texture, int id) {
  Quad q;
  q.pose.center = center;
  q.width = width;
  q.height = height;
  q.texture = std::move(texture);
  q.id = id;
  return q;
}

std::optional<Hit> intersect(const SceneSpec& scene, const Vec3& origin, const Vec3& direction) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < scene.quads.size(); ++i) {
    const Quad& q = scene.quads[i];
    const Vec3 n = q.pose.rotation.col(2);
    const double denom = n.dot(direction);
    if (denom == 0.0) continue;
    const double s = n.dot(q.pose.center - origin) / denom;
    if (!(s > 0.0)) continue;
    if (best && s >= best->depth) continue;
    const Vec3 p = origin + s * direction;
    const Vec3 rel = p - q.pose.center;
    if (std::abs(rel.dot(q.pose.rotation.col(0))) > 0.5 * q.width) continue;
    if (std::abs(rel.dot(q.pose.rotation.col(1))) > 0.5 * q.height) continue;
    best = Hit{s, static_cast<int>(i), p};
  }
  return best;
}

namespace {

Rgbf shade(const SceneSpec& scene, const Hit& hit, const Vec3& direction) {
  const Quad& q = scene.quads[static_cast<std::size_t>(hit.quad)];
  const Vec3 rel = hit.point - q.pose.center;
  const double u = rel.dot(q.pose.rotation.col(0)) / q.width + 0.5;
  const double v = rel.dot(q.pose.rotation.col(1)) / q.height + 0.5;
  Rgbf c = q.texture->sample(u, v);
  for (float& x : c) x *= q.albedo;
  if (q.specular && q.specular->strength > 0.0f) {
    Vec3 n = q.pose.rotation.col(2);
    const Vec3 view = -direction.normalized();
    if (n.dot(view) < 0.0) n = -n;
    const Vec3 l = scene_light_direction();
    const Vec3 r = 2.0 * n.dot(l) * n - l;
    const double lobe = std::pow(std::max(0.0, r.dot(view)), q.specular->shininess);
    for (float& x : c) x = std::min(1.0f, x + q.specular->strength * static_cast<float>(lobe));
  }
  return c;
}

}  // namespace

LinearImage render(const SceneSpec& scene, const CameraSpec& camera, const Pose& pose,
                   int supersample) {
  if (supersample < 1 || supersample > 8) throw DomainError("supersample must be in [1, 8]");
  camera.validate();
  const int w = camera.sensor.width_px, h = camera.sensor.height_px;
  const Mat3 ray_basis = pose.rotation * intrinsics(camera).inverse();
  LinearImage out(w, h, 3);
  const double inv_n = 1.0 / (supersample * supersample);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const double px = x + (sx + 0.5) / supersample - 0.5;
          const double py = y + (sy + 0.5) / supersample - 0.5;
          const Vec3 dir = ray_basis * Vec3(px, py, 1.0);
          const auto hit = intersect(scene, pose.center, dir);
          const Rgbf c = hit ? shade(scene, *hit, dir) : scene.background;
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      }
      for (int k = 0; k < 3; ++k) out(x, y, k) = static_cast<float>(acc[k] * inv_n);
    }
  });
  return out;
}

Image<float> ground_truth_depth(const SceneSpec& scene, const CameraSpec& camera,
                                const Pose& pose) {
  camera.validate();
  const int w = camera.sensor.width_px, h = camera.sensor.height_px;
  const Mat3 ray_basis = pose.rotation * intrinsics(camera).inverse();
  Image<float> depth(w, h, 1, std::numeric_limits<float>::infinity());
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      // Rays with unit z in the camera frame: the hit parameter is the z-depth.
      const auto hit = intersect(scene, pose.center, ray_basis * Vec3(x, y, 1.0));
      if (hit) depth(x, y) = static_cast<float>(hit->depth);
    }
  });
  return depth;
}

Image<int> quad_index_map(const SceneSpec& scene, const CameraSpec& camera, const Pose& pose) {
  const int w = camera.sensor.width_px, h = camera.sensor.height_px;
  const Mat3 ray_basis = pose.rotation * intrinsics(camera).inverse();
  Image<int> ids(w, h, 1, -1);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const auto hit = intersect(scene, pose.center, ray_basis * Vec3(x, y, 1.0));
      if (hit) ids(x, y) = hit->quad;
    }
  });
  return ids;
}

Mask visible_from(const SceneSpec& scene, const CameraSpec& camera, const Pose& pose,
                  const CameraSpec& other, const Pose& other_pose) {
  const int w = camera.sensor.width_px, h = camera.sensor.height_px;
  const Mat3 ray_basis = pose.rotation * intrinsics(camera).inverse();
  const double ow = other.sensor.width_px, oh = other.sensor.height_px;
  Mask mask(w, h, 1, 0);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 dir = ray_basis * Vec3(x, y, 1.0);
      const auto hit = intersect(scene, pose.center, dir);
      std::optional<Vec2> p;
      if (hit) {
        p = project(other, other_pose, hit->point);
      } else {
        // Background lies at infinity: only the direction matters.
        const Vec3 dc = other_pose.rotation.transpose() * dir;
        if (dc.z() > 0.0) {
          const Vec3 q = intrinsics(other) * dc;
          p = Vec2(q.x() / q.z(), q.y() / q.z());
        }
      }
      if (!p || p->x() < -0.5 || p->y() < -0.5 || p->x() > ow - 0.5 || p->y() > oh - 0.5) {
        continue;
      }
      bool visible;
      if (hit) {
        const Vec3 to_point = hit->point - other_pose.center;
        const auto blocker = intersect(scene, other_pose.center, to_point);
        visible = !blocker || blocker->depth >= 1.0 - 1e-6 || blocker->quad == hit->quad;
      } else {
        visible = !intersect(scene, other_pose.center, dir);
      }
      mask(x, y) = visible ? 1 : 0;
    }
  });
  return mask;
}

SceneSpec three_plane_scene(std::uint64_t seed) {
  SceneSpec scene;
  scene.background = {0.05f, 0.05f, 0.06f};
  scene.quads.push_back(fronto_quad(Vec3(0.0, 0.0, 4.0), 5.0, 5.0,
                                    noise_texture(seed, 40, 6, {0.08f, 0.1f, 0.12f},
                                                  {0.85f, 0.8f, 0.7f}),
                                    0));
  // Chart plane: slanted edge on the left half, checker on the right.
  scene.quads.push_back(fronto_quad(Vec3(-0.55, -0.35, 2.5), 0.5, 0.5,
                                    edge_texture(5.0 * kDegToRad, {0.15f, 0.15f, 0.15f},
                                                 {0.75f, 0.75f, 0.75f}),
                                    1));
  scene.quads.push_back(fronto_quad(Vec3(0.05, -0.45, 2.5), 0.4, 0.4,
                                    checker_texture(16, 16, {0.1f, 0.12f, 0.1f},
                                                    {0.8f, 0.75f, 0.7f}),
                                    2));
  scene.quads.push_back(fronto_quad(Vec3(0.3, 0.25, 1.5), 0.4, 0.4,
                                    noise_texture(seed + 1, 8, 6, {0.3f, 0.05f, 0.05f},
                                                  {0.95f, 0.7f, 0.4f}),
                                    3));
  return scene;
}

}  // namespace glassesim
