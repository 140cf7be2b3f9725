#pragma once

// On-disk dataset layout:
//
//   <root>/manifest.json
//   <root>/<id>/composite.png        8-bit RGB
//   <root>/<id>/object_mask.png      8-bit gray, 0 or 255
//   <root>/<id>/background_mask.png  8-bit gray, 0 or 255
//   <root>/<id>/gt.png               8-bit RGB
//   <root>/<id>/obj_illum.f32        raw float32 little-endian, planar RGB
//   <root>/<id>/bg_illum.f32         raw float32 little-endian, planar RGB
//   <root>/<id>/meta.json            id, image side, env-map shapes, optional scene spec

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigan/core.hpp"

namespace sigan::dataset {

namespace fs = std::filesystem;

class DatasetError : public std::runtime_error {
public:
    DatasetError(const std::string& what, fs::path path) : std::runtime_error(what), path_(std::move(path)) {}
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

class MissingFileError : public DatasetError {
public:
    explicit MissingFileError(const fs::path& p) : DatasetError("missing file: " + p.string(), p) {}
};

class MalformedSidecarError : public DatasetError {
public:
    MalformedSidecarError(const fs::path& p, const std::string& why)
        : DatasetError("malformed sidecar " + p.string() + ": " + why, p) {}
};

class ShapeMismatchError : public DatasetError {
public:
    ShapeMismatchError(const fs::path& p, const std::string& why)
        : DatasetError("shape mismatch in " + p.string() + ": " + why, p) {}
};

struct DatasetManifest {
    std::string version = "1";
    std::vector<std::string> sample_ids;
    int image_side = 0;
    int envmap_height = 16;
    int envmap_width = 32;
    std::string generator_config_digest;
    /// sample_id -> partner sample_id; a symmetric involution without fixed points.
    std::optional<std::map<std::string, std::string>> pair_map;

    /// Throws DatasetError when ids repeat or the pair map is not a fixed-point-free involution.
    void validate() const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

/// 8-bit quantization applied at the storage boundary: round(v*255)/255.
Image quantize(const Image& img);
SixTuple quantize(const SixTuple& t);

/// Writes <dir>/<t.sample_id>/. `extra_meta` entries are merged into meta.json.
void write_sample(const fs::path& dir, const SixTuple& t, const nlohmann::json& extra_meta = nlohmann::json::object());
SixTuple read_sample(const fs::path& dir, const std::string& id);
nlohmann::json read_sample_meta(const fs::path& dir, const std::string& id);

void write_manifest(const fs::path& dir, const DatasetManifest& m);
DatasetManifest read_manifest(const fs::path& dir);

/// Every sample listed in the manifest, in manifest order.
std::vector<SixTuple> load_samples(const fs::path& dir, const DatasetManifest& m);

struct Split {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Seeded random split; partners of a pair always land on the same side.
/// Both lists preserve manifest order.
Split split(const DatasetManifest& m, double train_fraction, std::uint64_t seed);

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;

    /// Bin index for v under (e_i, e_{i+1}] bins, the first bin also holding e_0;
    /// nullopt when v lies outside [e_0, e_n].
    [[nodiscard]] std::optional<std::size_t> bin_of(double v) const;
};

struct DatasetStats {
    std::size_t sample_count = 0;
    Histogram object_ratio;
    Histogram shadow_ratio;
    int map_height = 0;
    int map_width = 0;
    /// Per-pixel frequency of membership in the brightest decile of gt luminance.
    std::vector<double> illum_probability;
};

void to_json(nlohmann::json& j, const DatasetStats& s);

std::vector<double> uniform_edges(int bins, double lo = 0.0, double hi = 1.0);

/// Object ratio: object-mask pixels / all pixels. Shadow ratio: pixels outside
/// the object mask where gt and composite differ, over all pixels.
DatasetStats compute_stats(std::span<const SixTuple> samples, const std::vector<double>& edges);

/// Bar chart of a histogram, for quick inspection.
Image render_histogram(const Histogram& h, int height = 128, int width = 256);
/// Gray image of a per-pixel probability map.
Image render_probability_map(const DatasetStats& s);

}  // namespace sigan::dataset
