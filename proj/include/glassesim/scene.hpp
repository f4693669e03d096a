#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "glassesim/image.hpp"
#include "glassesim/rig.hpp"

namespace glassesim {

using Rgbf = std::array<float, 3>;

/// Reflectance pattern over texture coordinates (u, v) in [0, 1]^2, u right, v down.
class Texture {
 public:
  virtual ~Texture() = default;
  virtual Rgbf sample(double u, double v) const = 0;
  /// Upper bound of any channel value.
  virtual float max_value() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

using TexturePtr = std::shared_ptr<const Texture>;

TexturePtr constant_texture(const Rgbf& value);
TexturePtr image_texture(LinearImage image, std::filesystem::path source = {});
/// cells_u x cells_v squares alternating between a and b.
TexturePtr checker_texture(int cells_u, int cells_v, const Rgbf& a, const Rgbf& b);
/// Multi-octave value noise; the finest octave has base_cells * 2^(octaves-1) cells across u.
TexturePtr noise_texture(std::uint64_t seed, int base_cells, int octaves, const Rgbf& dark,
                         const Rgbf& bright);
/// Two-tone step through (0.5, 0.5) tilted by `angle` from vertical; `dark` on the left.
TexturePtr edge_texture(double angle, const Rgbf& dark, const Rgbf& bright);

/// Builds a texture from its JSON description; relative PNG paths resolve against `base_dir`.
TexturePtr texture_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct Specular {
  float strength = 0.0f;
  float shininess = 32.0f;
};

/// Rectangle centred on pose.center, spanning the pose's local x (width) and y (height).
struct Quad {
  Pose pose;
  double width = 0.0;   // m
  double height = 0.0;  // m
  TexturePtr texture;
  float albedo = 1.0f;
  std::optional<Specular> specular;
  int id = 0;  // stable label, used by provenance masks
};

struct SceneSpec {
  std::vector<Quad> quads;
  Rgbf background{0.0f, 0.0f, 0.0f};

  void validate() const;
};

/// Unit vector towards the fixed light used by specular lobes (rig frame).
Vec3 scene_light_direction();

nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Fronto-parallel quad facing the rig origin, centre at (x, y, z).
Quad fronto_quad(const Vec3& center, double width, double height, TexturePtr texture,
                 int id = 0);

struct Hit {
  double depth = 0.0;  // z in the casting camera frame
  int quad = -1;       // index into SceneSpec::quads
  Vec3 point = Vec3::Zero();
};

/// Nearest intersection of the ray origin + s * direction, s > 0. `direction`
/// need not be normalised; depth is reported in units of s.
std::optional<Hit> intersect(const SceneSpec& scene, const Vec3& origin, const Vec3& direction);

LinearImage render(const SceneSpec& scene, const CameraSpec& camera, const Pose& pose,
                   int supersample = 1);

/// z-depth of the nearest hit through each pixel centre; +inf on background.
Image<float> ground_truth_depth(const SceneSpec& scene, const CameraSpec& camera,
                                const Pose& pose);

/// Index of the nearest quad through each pixel centre; -1 on background.
Image<int> quad_index_map(const SceneSpec& scene, const CameraSpec& camera, const Pose& pose);

/// 1 where the surface seen through a pixel centre of (camera, pose) is also
/// directly visible from `other`: in frame and not hidden by another quad.
Mask visible_from(const SceneSpec& scene, const CameraSpec& camera, const Pose& pose,
                  const CameraSpec& other, const Pose& other_pose);

/// The pinned evaluation scene: a noise-textured backdrop, a mid-depth checker
/// and slanted-edge chart, and a foreground occluder, all in front of the rig.
SceneSpec three_plane_scene(std::uint64_t seed = 7);

}  // namespace glassesim
