#include "sigan/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "sigan/png_io.hpp"
#include "sigan/util/hash.hpp"

namespace sigan::dataset {

static_assert(std::endian::native == std::endian::little, "env-map files are written as native little-endian floats");

namespace {

nlohmann::json read_json(const fs::path& p) {
    if (!fs::exists(p)) throw MissingFileError(p);
    std::ifstream in(p);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedSidecarError(p, e.what());
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + p.string(), p);
    out << j.dump(2) << '\n';
}

void write_envmap(const fs::path& p, const EnvMap& e) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + p.string(), p);
    out.write(reinterpret_cast<const char*>(e.radiance.data()),
              static_cast<std::streamsize>(e.radiance.size() * sizeof(float)));
}

EnvMap read_envmap(const fs::path& p, int channels, int height, int width) {
    if (!fs::exists(p)) throw MissingFileError(p);
    if (channels != 3 || height <= 0 || width <= 0) throw ShapeMismatchError(p, "sidecar shape is not [3, H, W]");
    const std::uintmax_t expected = std::uintmax_t(3) * height * width * sizeof(float);
    const std::uintmax_t actual = fs::file_size(p);
    if (actual != expected) {
        throw ShapeMismatchError(p, "expected " + std::to_string(expected) + " bytes, found " + std::to_string(actual));
    }
    EnvMap e(height, width);
    std::ifstream in(p, std::ios::binary);
    in.read(reinterpret_cast<char*>(e.radiance.data()), static_cast<std::streamsize>(expected));
    if (!in) throw ShapeMismatchError(p, "short read");
    return e;
}

template <class Fn>
auto guarded_png(const fs::path& p, Fn&& fn) {
    if (!fs::exists(p)) throw MissingFileError(p);
    try {
        return fn(p);
    } catch (const png::PngError& e) {
        throw DatasetError(e.what(), p);
    }
}

}  // namespace

void DatasetManifest::validate() const {
    std::set<std::string> seen;
    for (const auto& id : sample_ids) {
        if (!seen.insert(id).second) throw DatasetError("duplicate sample id " + id, {});
    }
    if (pair_map) {
        for (const auto& [a, b] : *pair_map) {
            if (a == b) throw DatasetError("pair_map maps " + a + " to itself", {});
            auto it = pair_map->find(b);
            if (it == pair_map->end() || it->second != a) throw DatasetError("pair_map is not symmetric at " + a, {});
            if (!seen.count(a) || !seen.count(b)) throw DatasetError("pair_map names unknown sample " + a, {});
        }
    }
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"version", m.version},
         {"sample_ids", m.sample_ids},
         {"image_side", m.image_side},
         {"envmap_shape", {m.envmap_height, m.envmap_width}},
         {"generator_config_digest", m.generator_config_digest}};
    if (m.pair_map) j["pair_map"] = *m.pair_map;
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    m.version = j.at("version").get<std::string>();
    m.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    m.image_side = j.at("image_side").get<int>();
    const auto shape = j.at("envmap_shape").get<std::vector<int>>();
    if (shape.size() != 2) throw nlohmann::json::other_error::create(501, "envmap_shape must be [H, W]", &j);
    m.envmap_height = shape[0];
    m.envmap_width = shape[1];
    m.generator_config_digest = j.value("generator_config_digest", std::string{});
    if (j.contains("pair_map")) m.pair_map = j.at("pair_map").get<std::map<std::string, std::string>>();
}

Image quantize(const Image& img) {
    Image out = img;
    for (float& v : out.pixels) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    return out;
}

SixTuple quantize(const SixTuple& t) {
    SixTuple out = t;
    out.composite = quantize(t.composite);
    out.gt_harmonized = quantize(t.gt_harmonized);
    return out;
}

void write_sample(const fs::path& dir, const SixTuple& t, const nlohmann::json& extra_meta) {
    const fs::path d = dir / t.sample_id;
    fs::create_directories(d);
    png::write_image(d / "composite.png", t.composite);
    png::write_image(d / "gt.png", t.gt_harmonized);
    png::write_mask(d / "object_mask.png", t.object_mask);
    png::write_mask(d / "background_mask.png", t.background_mask);
    write_envmap(d / "obj_illum.f32", t.object_illum);
    write_envmap(d / "bg_illum.f32", t.background_illum);
    nlohmann::json meta = {{"sample_id", t.sample_id},
                           {"image_side", t.composite.height},
                           {"obj_illum_shape", {3, t.object_illum.height, t.object_illum.width}},
                           {"bg_illum_shape", {3, t.background_illum.height, t.background_illum.width}}};
    for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
    write_json(d / "meta.json", meta);
}

nlohmann::json read_sample_meta(const fs::path& dir, const std::string& id) {
    return read_json(dir / id / "meta.json");
}

SixTuple read_sample(const fs::path& dir, const std::string& id) {
    const fs::path d = dir / id;
    const fs::path meta_path = d / "meta.json";
    const nlohmann::json meta = read_json(meta_path);
    std::vector<int> obj_shape;
    std::vector<int> bg_shape;
    try {
        obj_shape = meta.at("obj_illum_shape").get<std::vector<int>>();
        bg_shape = meta.at("bg_illum_shape").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw MalformedSidecarError(meta_path, e.what());
    }
    if (obj_shape.size() != 3 || bg_shape.size() != 3) throw MalformedSidecarError(meta_path, "env-map shape must be [C, H, W]");

    SixTuple t;
    t.sample_id = id;
    t.composite = guarded_png(d / "composite.png", [](const fs::path& p) { return png::read_image(p); });
    t.gt_harmonized = guarded_png(d / "gt.png", [](const fs::path& p) { return png::read_image(p); });
    t.object_mask = guarded_png(d / "object_mask.png", [](const fs::path& p) { return png::read_mask(p); });
    t.background_mask = guarded_png(d / "background_mask.png", [](const fs::path& p) { return png::read_mask(p); });
    t.object_illum = read_envmap(d / "obj_illum.f32", obj_shape[0], obj_shape[1], obj_shape[2]);
    t.background_illum = read_envmap(d / "bg_illum.f32", bg_shape[0], bg_shape[1], bg_shape[2]);
    const int side = t.composite.height;
    auto same = [side](int h, int w) { return h == side && w == side; };
    if (!same(t.gt_harmonized.height, t.gt_harmonized.width)) throw ShapeMismatchError(d / "gt.png", "size differs from composite");
    if (!same(t.object_mask.height, t.object_mask.width)) throw ShapeMismatchError(d / "object_mask.png", "size differs from composite");
    if (!same(t.background_mask.height, t.background_mask.width)) {
        throw ShapeMismatchError(d / "background_mask.png", "size differs from composite");
    }
    return t;
}

void write_manifest(const fs::path& dir, const DatasetManifest& m) {
    m.validate();
    fs::create_directories(dir);
    write_json(dir / "manifest.json", m);
}

DatasetManifest read_manifest(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    const nlohmann::json j = read_json(p);
    DatasetManifest m;
    try {
        m = j.get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw MalformedSidecarError(p, e.what());
    }
    m.validate();
    return m;
}

std::vector<SixTuple> load_samples(const fs::path& dir, const DatasetManifest& m) {
    std::vector<SixTuple> out;
    out.reserve(m.sample_ids.size());
    for (const auto& id : m.sample_ids) out.push_back(read_sample(dir, id));
    return out;
}

Split split(const DatasetManifest& m, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
    }
    // Units are single ids or partner pairs; whole units are assigned.
    std::vector<std::vector<std::string>> units;
    std::set<std::string> placed;
    for (const auto& id : m.sample_ids) {
        if (placed.count(id)) continue;
        std::vector<std::string> unit{id};
        placed.insert(id);
        if (m.pair_map) {
            auto it = m.pair_map->find(id);
            if (it != m.pair_map->end()) {
                unit.push_back(it->second);
                placed.insert(it->second);
            }
        }
        units.push_back(std::move(unit));
    }
    std::mt19937_64 rng(util::splitmix64(seed));
    std::shuffle(units.begin(), units.end(), rng);
    const auto target = static_cast<std::size_t>(std::llround(train_fraction * m.sample_ids.size()));
    std::set<std::string> train_set;
    std::size_t train_count = 0;
    for (const auto& u : units) {
        if (train_count + u.size() <= target) {
            train_set.insert(u.begin(), u.end());
            train_count += u.size();
        }
    }
    Split s;
    for (const auto& id : m.sample_ids) (train_set.count(id) ? s.train : s.test).push_back(id);
    return s;
}

std::optional<std::size_t> Histogram::bin_of(double v) const {
    if (edges.size() < 2 || v < edges.front() || v > edges.back()) return std::nullopt;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (v <= edges[i + 1]) return i;
    }
    return edges.size() - 2;
}

std::vector<double> uniform_edges(int bins, double lo, double hi) {
    std::vector<double> e(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * i / bins;
    return e;
}

void to_json(nlohmann::json& j, const DatasetStats& s) {
    j = {{"sample_count", s.sample_count},
         {"object_ratio_histogram", {{"edges", s.object_ratio.edges}, {"counts", s.object_ratio.counts}}},
         {"shadow_ratio_histogram", {{"edges", s.shadow_ratio.edges}, {"counts", s.shadow_ratio.counts}}},
         {"illum_probability_map",
          {{"height", s.map_height}, {"width", s.map_width}, {"values", s.illum_probability}}}};
}

DatasetStats compute_stats(std::span<const SixTuple> samples, const std::vector<double>& edges) {
    if (samples.empty()) throw std::invalid_argument("compute_stats: no samples");
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
        throw std::invalid_argument("compute_stats: bin edges must be ascending with at least two entries");
    }
    DatasetStats st;
    st.sample_count = samples.size();
    st.object_ratio = {edges, std::vector<std::size_t>(edges.size() - 1, 0)};
    st.shadow_ratio = st.object_ratio;
    st.map_height = samples.front().gt_harmonized.height;
    st.map_width = samples.front().gt_harmonized.width;
    const std::size_t plane = std::size_t(st.map_height) * st.map_width;
    std::vector<std::size_t> bright(plane, 0);

    auto add = [](Histogram& h, double v) {
        if (auto b = h.bin_of(v)) ++h.counts[*b];
    };
    std::vector<float> lum(plane);
    for (const auto& t : samples) {
        if (t.gt_harmonized.plane() != plane || t.object_mask.pixels.size() != plane) {
            throw std::invalid_argument("compute_stats: samples differ in size (" + t.sample_id + ")");
        }
        const double total = static_cast<double>(plane);
        add(st.object_ratio, static_cast<double>(t.object_mask.count()) / total);
        std::size_t shadow = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            if (t.object_mask.pixels[i] != 0.0f) continue;
            for (int c = 0; c < 3; ++c) {
                if (t.gt_harmonized.pixels[c * plane + i] != t.composite.pixels[c * plane + i]) {
                    ++shadow;
                    break;
                }
            }
        }
        add(st.shadow_ratio, static_cast<double>(shadow) / total);

        for (std::size_t i = 0; i < plane; ++i) {
            const auto& g = t.gt_harmonized.pixels;
            lum[i] = 0.2126f * g[i] + 0.7152f * g[plane + i] + 0.0722f * g[2 * plane + i];
        }
        std::vector<float> sorted = lum;
        const std::size_t k = static_cast<std::size_t>(std::floor(0.9 * (plane - 1)));
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
        const float threshold = sorted[k];
        for (std::size_t i = 0; i < plane; ++i) bright[i] += lum[i] >= threshold;
    }
    st.illum_probability.resize(plane);
    for (std::size_t i = 0; i < plane; ++i) st.illum_probability[i] = static_cast<double>(bright[i]) / samples.size();
    return st;
}

Image render_histogram(const Histogram& h, int height, int width) {
    Image img(height, width, 1.0f);
    const std::size_t bins = h.counts.size();
    const std::size_t peak = bins ? *std::max_element(h.counts.begin(), h.counts.end()) : 0;
    if (bins == 0 || peak == 0) return img;
    for (std::size_t b = 0; b < bins; ++b) {
        const int x0 = static_cast<int>(b * width / bins);
        const int x1 = static_cast<int>((b + 1) * width / bins);
        const int bar = static_cast<int>(std::lround(double(h.counts[b]) / peak * (height - 1)));
        for (int x = x0; x < x1 - (x1 - x0 > 2 ? 1 : 0); ++x)
            for (int y = height - bar; y < height; ++y)
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = c == 2 ? 0.7f : 0.2f;
    }
    return img;
}

Image render_probability_map(const DatasetStats& s) {
    Image img(s.map_height, s.map_width);
    const std::size_t plane = img.plane();
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) img.pixels[c * plane + i] = static_cast<float>(s.illum_probability[i]);
    return img;
}

}  // namespace sigan::dataset
