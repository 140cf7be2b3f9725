#pragma once

// Analytic 2.5D scene renderer producing six-tuples: a primitive (sphere or
// box) standing on a ground plane in front of a backdrop, a background
// occluder with its own cast shadow, and a single directional light.
//
// World frame: X right, Y up, Z toward the viewer. Objects are drawn with a
// frontal orthographic projection; the ground plane maps image row y (below
// the horizon) to depth Z = (y - horizon) / kGroundForeshortening.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "sigan/core.hpp"

namespace sigan::scenegen {

using Vec3 = std::array<double, 3>;

class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kLobeSigma = 0.2;
inline constexpr double kGroundForeshortening = 0.5;
inline constexpr double kMinObjectRatio = 0.05;
inline constexpr double kMaxObjectRatio = 0.3;

struct DirectionalLight {
    double azimuth = 0.0;    ///< radians in [0, 2π)
    double elevation = 1.0;  ///< radians in (0, π/2]
    double intensity = 0.8;
    double ambient = 0.2;
    Vec3 color{1.0, 1.0, 1.0};

    /// Unit vector pointing toward the light.
    [[nodiscard]] Vec3 direction() const;
    void validate() const;
    bool operator==(const DirectionalLight&) const = default;
};

enum class Primitive { sphere, box };

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

struct SceneSpec {
    int side = 64;
    Primitive primitive = Primitive::sphere;
    /// Centre of the object's silhouette bounding box, image pixels.
    Point2 object_center;
    /// Sphere diameter or box width, as a fraction of the image side.
    double object_scale = 0.3;
    /// Box height / width; ignored for spheres.
    double box_aspect = 1.0;
    Vec3 albedo_object{0.8, 0.8, 0.8};
    Vec3 albedo_ground{0.6, 0.6, 0.6};
    bool checkered_ground = true;
    Vec3 albedo_backdrop{0.7, 0.7, 0.7};
    /// Horizon row as a fraction of the side; the ground lies below it.
    double horizon = 0.4;
    /// Background occluder (a box): centre x and base row in pixels, size in pixels.
    Point2 occluder_base;
    double occluder_width = 3.0;
    double occluder_height = 16.0;
    DirectionalLight scene_light;
    DirectionalLight object_light;
    std::uint64_t seed = 0;

    /// Throws ContractError naming the violated constraint.
    void validate() const;
    bool operator==(const SceneSpec&) const = default;
};

void to_json(nlohmann::json& j, const DirectionalLight& l);
void from_json(const nlohmann::json& j, DirectionalLight& l);
void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

/// albedo ⊙ color · clamp(intensity·max(0, n·l) + ambient, 0, 1).
/// Throws ContractError when `normal` is not unit length.
Vec3 lambert_shade(const Vec3& normal, const DirectionalLight& light, const Vec3& albedo);

/// ambient·color plus a Gaussian lobe (σ = kLobeSigma rad) of peak
/// intensity·color centred on the light direction.
EnvMap envmap_from_light(const DirectionalLight& light, int height = 16, int width = 32);

/// Pixels covered by the inserted object.
Mask object_mask(const SceneSpec& spec);

/// Visible ground pixels occluded from `light` by the inserted object.
Mask cast_shadow_mask(const SceneSpec& spec, const DirectionalLight& light);

/// Renders the tuple; `object_illum`/`background_illum` use the given env-map shape.
SixTuple render_six_tuple(const SceneSpec& spec, int envmap_height = 16, int envmap_width = 32);

/// Deterministic pseudo-random spec. Throws GenerationError when the
/// footprint/area constraints cannot be met within the retry budget.
SceneSpec sample_spec(std::uint64_t seed, int side);

/// Two specs sharing geometry, albedo and scene light but with independently
/// drawn object lights.
std::pair<SceneSpec, SceneSpec> sample_spec_pair(std::uint64_t seed, int side);

/// validate_six_tuple with the shadow region recomputed from the spec.
std::vector<std::string> validate_rendered(const SixTuple& t, const SceneSpec& spec);

}  // namespace sigan::scenegen
