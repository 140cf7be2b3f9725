#include "sigan/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "sigan/util/hash.hpp"

namespace sigan::scenegen {

namespace {

constexpr double kPi = std::numbers::pi;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

/// Axis-aligned solid in world coordinates.
struct Box3 {
    Vec3 lo;
    Vec3 hi;
};

struct Sphere3 {
    Vec3 center;
    double radius;
};

/// Image-space and world-space layout derived from a spec.
struct Layout {
    double side;
    double horizon_px;
    double cx;
    double base_y;
    double radius;    // sphere
    double width;     // box
    double height;    // box front face
    double top_band;  // box top face in image rows
    double z0;
};

Layout layout_of(const SceneSpec& s) {
    Layout g{};
    g.side = s.side;
    g.horizon_px = s.horizon * s.side;
    g.cx = s.object_center.x;
    if (s.primitive == Primitive::sphere) {
        g.radius = 0.5 * s.object_scale * s.side;
        g.base_y = s.object_center.y + g.radius;
    } else {
        g.width = s.object_scale * s.side;
        g.height = g.width * s.box_aspect;
        g.top_band = 0.25 * g.width;
        g.base_y = s.object_center.y + 0.5 * (g.height + g.top_band);
    }
    g.z0 = (g.base_y - g.horizon_px) / kGroundForeshortening;
    return g;
}

double ground_depth(const Layout& g, double py) { return (py - g.horizon_px) / kGroundForeshortening; }

bool ray_hits_box(const Vec3& origin, const Vec3& dir, const Box3& b) {
    double tmin = 0.0;
    double tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-12) {
            if (origin[a] < b.lo[a] || origin[a] > b.hi[a]) return false;
            continue;
        }
        double t0 = (b.lo[a] - origin[a]) / dir[a];
        double t1 = (b.hi[a] - origin[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    return tmax > 0.0;
}

bool ray_hits_sphere(const Vec3& origin, const Vec3& dir, const Sphere3& s) {
    const Vec3 oc{origin[0] - s.center[0], origin[1] - s.center[1], origin[2] - s.center[2]};
    const double b = dot(oc, dir);
    const double c = dot(oc, oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    return -b + std::sqrt(disc) > 0.0;
}

bool object_blocks(const Layout& g, Primitive p, const Vec3& origin, const Vec3& l) {
    if (p == Primitive::sphere) {
        return ray_hits_sphere(origin, l, Sphere3{{g.cx, g.radius, g.z0}, g.radius});
    }
    const Box3 box{{g.cx - 0.5 * g.width, 0.0, g.z0 - g.width}, {g.cx + 0.5 * g.width, g.height, g.z0}};
    return ray_hits_box(origin, l, box);
}

Box3 occluder_solid(const SceneSpec& s, const Layout& g) {
    const double oz = ground_depth(g, s.occluder_base.y);
    return {{s.occluder_base.x - 0.5 * s.occluder_width, 0.0, oz - s.occluder_width},
            {s.occluder_base.x + 0.5 * s.occluder_width, s.occluder_height, oz}};
}

bool in_occluder(const SceneSpec& s, double px, double py) {
    return std::abs(px - s.occluder_base.x) <= 0.5 * s.occluder_width && py <= s.occluder_base.y &&
           py >= s.occluder_base.y - s.occluder_height;
}

/// Object surface normal at an image point, or nullopt outside the silhouette.
std::optional<Vec3> object_normal(const SceneSpec& s, const Layout& g, double px, double py) {
    if (s.primitive == Primitive::sphere) {
        const double cy = g.base_y - g.radius;
        const double dx = (px - g.cx) / g.radius;
        const double dy = (py - cy) / g.radius;
        const double r2 = dx * dx + dy * dy;
        if (r2 > 1.0) return std::nullopt;
        const double nz = std::sqrt(std::max(0.0, 1.0 - r2));
        const double len = std::sqrt(dx * dx + dy * dy + nz * nz);
        return Vec3{dx / len, -dy / len, nz / len};
    }
    if (std::abs(px - g.cx) > 0.5 * g.width || py > g.base_y) return std::nullopt;
    if (py >= g.base_y - g.height) return Vec3{0.0, 0.0, 1.0};
    if (py >= g.base_y - g.height - g.top_band) return Vec3{0.0, 1.0, 0.0};
    return std::nullopt;
}

Vec3 ground_albedo(const SceneSpec& s, int x, int y) {
    if (!s.checkered_ground) return s.albedo_ground;
    const int tile = std::max(1, s.side / 8);
    const bool dark = ((x / tile) + (y / tile)) % 2 == 1;
    const double f = dark ? 0.6 : 1.0;
    return {s.albedo_ground[0] * f, s.albedo_ground[1] * f, s.albedo_ground[2] * f};
}

Vec3 ambient_only(const DirectionalLight& light, const Vec3& albedo) {
    const double a = std::clamp(light.ambient, 0.0, 1.0);
    return {albedo[0] * light.color[0] * a, albedo[1] * light.color[1] * a, albedo[2] * light.color[2] * a};
}

void put(Image& img, int y, int x, const Vec3& rgb) {
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
}

Vec3 uniform3(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = u(rng);
    const double b = u(rng);
    return {a, b, u(rng)};
}

DirectionalLight sample_light(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DirectionalLight l;
    l.azimuth = 2.0 * kPi * u(rng);
    l.elevation = (20.0 + 50.0 * u(rng)) * kPi / 180.0;
    l.intensity = 0.5 + 0.4 * u(rng);
    l.ambient = 0.15 + 0.2 * u(rng);
    l.color = {0.75 + 0.25 * u(rng), 0.75 + 0.25 * u(rng), 0.75 + 0.25 * u(rng)};
    return l;
}

Vec3 sample_albedo(std::mt19937_64& rng, double lo, double hi) {
    const Vec3 r = uniform3(rng);
    return {lo + (hi - lo) * r[0], lo + (hi - lo) * r[1], lo + (hi - lo) * r[2]};
}

}  // namespace

Vec3 DirectionalLight::direction() const {
    const double ce = std::cos(elevation);
    return {ce * std::sin(azimuth), std::sin(elevation), ce * std::cos(azimuth)};
}

void DirectionalLight::validate() const {
    if (!(elevation > 0.0 && elevation <= kPi / 2 + 1e-12)) throw ContractError("light elevation must lie in (0, pi/2]");
    if (!(azimuth >= 0.0 && azimuth < 2 * kPi)) throw ContractError("light azimuth must lie in [0, 2pi)");
    if (!(intensity >= 0.0)) throw ContractError("light intensity must be non-negative");
    if (!(ambient >= 0.0 && ambient <= 1.0)) throw ContractError("light ambient must lie in [0, 1]");
    for (double c : color)
        if (!(c >= 0.0 && c <= 1.0)) throw ContractError("light color must lie in [0, 1]^3");
}

void SceneSpec::validate() const {
    if (side <= 0 || side % 32 != 0) throw ContractError("side must be a positive multiple of 32");
    scene_light.validate();
    object_light.validate();
    const Layout g = layout_of(*this);
    double x0, x1, y0;
    if (primitive == Primitive::sphere) {
        x0 = g.cx - g.radius;
        x1 = g.cx + g.radius;
        y0 = g.base_y - 2 * g.radius;
    } else {
        x0 = g.cx - 0.5 * g.width;
        x1 = g.cx + 0.5 * g.width;
        y0 = g.base_y - g.height - g.top_band;
    }
    if (x0 < 0.0 || x1 > side || y0 < 0.0 || g.base_y > side) throw ContractError("object footprint leaves the image");
    if (g.base_y <= g.horizon_px) throw ContractError("object base must stand below the horizon");
    const double ratio = static_cast<double>(object_mask(*this).count()) / (double(side) * side);
    if (ratio < kMinObjectRatio || ratio > kMaxObjectRatio) {
        throw ContractError("object area ratio " + std::to_string(ratio) + " outside [0.05, 0.3]");
    }
}

Vec3 lambert_shade(const Vec3& normal, const DirectionalLight& light, const Vec3& albedo) {
    const double len = std::sqrt(dot(normal, normal));
    if (std::abs(len - 1.0) > 1e-6) throw ContractError("lambert_shade: normal is not unit length");
    const double diffuse = std::max(0.0, dot(normal, light.direction()));
    const double shade = std::clamp(light.intensity * diffuse + light.ambient, 0.0, 1.0);
    return {albedo[0] * light.color[0] * shade, albedo[1] * light.color[1] * shade,
            albedo[2] * light.color[2] * shade};
}

EnvMap envmap_from_light(const DirectionalLight& light, int height, int width) {
    if (height <= 0 || width != 2 * height) throw ContractError("envmap shape must satisfy W == 2H");
    EnvMap env(height, width);
    const Vec3 l = light.direction();
    const double inv2s2 = 1.0 / (2.0 * kLobeSigma * kLobeSigma);
    for (int r = 0; r < height; ++r) {
        const double elev = kPi / 2 - kPi * (r + 0.5) / height;
        for (int c = 0; c < width; ++c) {
            const double az = 2.0 * kPi * (c + 0.5) / width;
            const Vec3 d{std::cos(elev) * std::sin(az), std::sin(elev), std::cos(elev) * std::cos(az)};
            const double ang = std::acos(std::clamp(dot(d, l), -1.0, 1.0));
            const double v = light.ambient + light.intensity * std::exp(-ang * ang * inv2s2);
            for (int ch = 0; ch < 3; ++ch) env.at(ch, r, c) = static_cast<float>(light.color[ch] * v);
        }
    }
    return env;
}

Mask object_mask(const SceneSpec& spec) {
    const Layout g = layout_of(spec);
    Mask m(spec.side, spec.side);
    for (int y = 0; y < spec.side; ++y)
        for (int x = 0; x < spec.side; ++x)
            if (object_normal(spec, g, x + 0.5, y + 0.5)) m.at(y, x) = 1.0f;
    return m;
}

Mask cast_shadow_mask(const SceneSpec& spec, const DirectionalLight& light) {
    const Layout g = layout_of(spec);
    const Vec3 l = light.direction();
    Mask m(spec.side, spec.side);
    for (int y = 0; y < spec.side; ++y) {
        const double py = y + 0.5;
        if (py < g.horizon_px) continue;
        for (int x = 0; x < spec.side; ++x) {
            const double px = x + 0.5;
            if (in_occluder(spec, px, py) || object_normal(spec, g, px, py)) continue;
            const Vec3 origin{px, 0.0, ground_depth(g, py)};
            if (object_blocks(g, spec.primitive, origin, l)) m.at(y, x) = 1.0f;
        }
    }
    return m;
}

SixTuple render_six_tuple(const SceneSpec& spec, int envmap_height, int envmap_width) {
    spec.validate();
    const int n = spec.side;
    const Layout g = layout_of(spec);
    const DirectionalLight& sl = spec.scene_light;
    const Vec3 l = sl.direction();
    const Box3 occ = occluder_solid(spec, g);
    const Vec3 occluder_albedo{0.45, 0.42, 0.4};

    Image background(n, n);
    for (int y = 0; y < n; ++y) {
        const double py = y + 0.5;
        for (int x = 0; x < n; ++x) {
            const double px = x + 0.5;
            Vec3 rgb;
            if (in_occluder(spec, px, py)) {
                rgb = lambert_shade({0.0, 0.0, 1.0}, sl, occluder_albedo);
            } else if (py < g.horizon_px) {
                const double t = 0.85 + 0.15 * py / g.horizon_px;
                const Vec3 a{spec.albedo_backdrop[0] * t, spec.albedo_backdrop[1] * t, spec.albedo_backdrop[2] * t};
                rgb = lambert_shade({0.0, 0.0, 1.0}, sl, a);
            } else {
                const Vec3 a = ground_albedo(spec, x, y);
                const Vec3 origin{px, 0.0, ground_depth(g, py)};
                rgb = ray_hits_box(origin, l, occ) ? ambient_only(sl, a) : lambert_shade({0.0, 1.0, 0.0}, sl, a);
            }
            put(background, y, x, rgb);
        }
    }

    const Mask obj = object_mask(spec);
    const Mask shadow = cast_shadow_mask(spec, sl);
    SixTuple t;
    t.composite = background;
    t.gt_harmonized = background;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            if (shadow.at(y, x) != 0.0f) put(t.gt_harmonized, y, x, ambient_only(sl, ground_albedo(spec, x, y)));
            if (obj.at(y, x) == 0.0f) continue;
            const Vec3 nrm = *object_normal(spec, g, x + 0.5, y + 0.5);
            put(t.gt_harmonized, y, x, lambert_shade(nrm, sl, spec.albedo_object));
            put(t.composite, y, x, lambert_shade(nrm, spec.object_light, spec.albedo_object));
        }
    }
    t.object_mask = obj;
    t.background_mask = Mask(n, n);
    for (std::size_t i = 0; i < obj.pixels.size(); ++i) t.background_mask.pixels[i] = 1.0f - obj.pixels[i];
    t.object_illum = envmap_from_light(spec.object_light, envmap_height, envmap_width);
    t.background_illum = envmap_from_light(sl, envmap_height, envmap_width);
    t.sample_id = "seed" + std::to_string(spec.seed);
    return t;
}

SceneSpec sample_spec(std::uint64_t seed, int side) {
    if (side <= 0 || side % 32 != 0) throw ContractError("side must be a positive multiple of 32");
    std::mt19937_64 rng(util::splitmix64(seed));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr int kRetries = 64;
    for (int attempt = 0; attempt < kRetries; ++attempt) {
        SceneSpec s;
        s.side = side;
        s.seed = seed;
        s.primitive = u(rng) < 0.5 ? Primitive::sphere : Primitive::box;
        s.horizon = 0.3 + 0.15 * u(rng);
        double half_w;
        double height;
        if (s.primitive == Primitive::sphere) {
            s.object_scale = 0.27 + 0.33 * u(rng);
            half_w = 0.5 * s.object_scale * side;
            height = s.object_scale * side;
        } else {
            s.object_scale = 0.22 + 0.23 * u(rng);
            s.box_aspect = 0.7 + 0.7 * u(rng);
            const double w = s.object_scale * side;
            half_w = 0.5 * w;
            height = w * s.box_aspect + 0.25 * w;
        }
        const double ground_lo = s.horizon * side + 0.12 * side;
        const double ground_hi = 0.94 * side;
        const double base = ground_lo + (ground_hi - ground_lo) * u(rng);
        const double cx = half_w + 1.0 + (side - 2.0 * half_w - 2.0) * u(rng);
        s.object_center = {cx, base - 0.5 * height};
        s.albedo_object = sample_albedo(rng, 0.3, 0.95);
        s.albedo_ground = sample_albedo(rng, 0.35, 0.85);
        s.albedo_backdrop = sample_albedo(rng, 0.4, 0.9);
        s.checkered_ground = u(rng) < 0.5;
        // Occluder on the side of the image away from the object.
        s.occluder_width = std::max(2.0, 0.05 * side);
        s.occluder_height = (0.2 + 0.15 * u(rng)) * side;
        const bool left = cx > 0.5 * side;
        const double ox = left ? (0.06 + 0.16 * u(rng)) * side : (0.78 + 0.16 * u(rng)) * side;
        const double obase = s.horizon * side + (0.05 + 0.2 * u(rng)) * side;
        s.occluder_base = {ox, std::min(obase, double(side) - 1.0)};
        s.scene_light = sample_light(rng);
        s.object_light = sample_light(rng);
        if (s.object_center.y - 0.5 * height < 0.0) continue;
        try {
            s.validate();
        } catch (const ContractError&) {
            continue;
        }
        return s;
    }
    throw GenerationError("sample_spec: could not satisfy footprint/area-ratio constraints for seed " +
                          std::to_string(seed) + " within " + std::to_string(kRetries) + " attempts");
}

std::pair<SceneSpec, SceneSpec> sample_spec_pair(std::uint64_t seed, int side) {
    SceneSpec a = sample_spec(seed, side);
    SceneSpec b = a;
    std::mt19937_64 rng(util::splitmix64(seed ^ 0x5bd1e995ULL));
    b.object_light = sample_light(rng);
    return {a, b};
}

std::vector<std::string> validate_rendered(const SixTuple& t, const SceneSpec& spec) {
    const Mask shadow = cast_shadow_mask(spec, spec.scene_light);
    return validate_six_tuple(t, &shadow);
}

void to_json(nlohmann::json& j, const DirectionalLight& l) {
    j = {{"azimuth", l.azimuth},
         {"elevation", l.elevation},
         {"intensity", l.intensity},
         {"ambient", l.ambient},
         {"color", l.color}};
}

void from_json(const nlohmann::json& j, DirectionalLight& l) {
    l.azimuth = j.at("azimuth").get<double>();
    l.elevation = j.at("elevation").get<double>();
    l.intensity = j.at("intensity").get<double>();
    l.ambient = j.at("ambient").get<double>();
    l.color = j.at("color").get<Vec3>();
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
    j = {{"side", s.side},
         {"primitive", s.primitive == Primitive::sphere ? "sphere" : "box"},
         {"object_center", {s.object_center.x, s.object_center.y}},
         {"object_scale", s.object_scale},
         {"box_aspect", s.box_aspect},
         {"albedo_object", s.albedo_object},
         {"albedo_ground", s.albedo_ground},
         {"checkered_ground", s.checkered_ground},
         {"albedo_backdrop", s.albedo_backdrop},
         {"horizon", s.horizon},
         {"occluder_base", {s.occluder_base.x, s.occluder_base.y}},
         {"occluder_width", s.occluder_width},
         {"occluder_height", s.occluder_height},
         {"scene_light", s.scene_light},
         {"object_light", s.object_light},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
    s.side = j.at("side").get<int>();
    const auto prim = j.at("primitive").get<std::string>();
    if (prim != "sphere" && prim != "box") throw ContractError("unknown primitive " + prim);
    s.primitive = prim == "sphere" ? Primitive::sphere : Primitive::box;
    const auto c = j.at("object_center").get<std::array<double, 2>>();
    s.object_center = {c[0], c[1]};
    s.object_scale = j.at("object_scale").get<double>();
    s.box_aspect = j.at("box_aspect").get<double>();
    s.albedo_object = j.at("albedo_object").get<Vec3>();
    s.albedo_ground = j.at("albedo_ground").get<Vec3>();
    s.checkered_ground = j.at("checkered_ground").get<bool>();
    s.albedo_backdrop = j.at("albedo_backdrop").get<Vec3>();
    s.horizon = j.at("horizon").get<double>();
    const auto o = j.at("occluder_base").get<std::array<double, 2>>();
    s.occluder_base = {o[0], o[1]};
    s.occluder_width = j.at("occluder_width").get<double>();
    s.occluder_height = j.at("occluder_height").get<double>();
    s.scene_light = j.at("scene_light").get<DirectionalLight>();
    s.object_light = j.at("object_light").get<DirectionalLight>();
    s.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace sigan::scenegen
