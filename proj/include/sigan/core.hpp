#pragma once

// Value types shared by the whole pipeline: images, masks, environment maps,
// the six-tuple training sample, loss weights and model configuration.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sigan {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Planar RGB image, values in [0,1]. pixels[(c*height + y)*width + x].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    static constexpr int channels = 3;

    Image() = default;
    Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(std::size_t(3) * h * w, fill) {}

    float& at(int c, int y, int x) { return pixels[(std::size_t(c) * height + y) * width + x]; }
    [[nodiscard]] float at(int c, int y, int x) const { return pixels[(std::size_t(c) * height + y) * width + x]; }
    [[nodiscard]] std::size_t plane() const { return std::size_t(height) * width; }
    bool operator==(const Image&) const = default;
};

/// Single-channel binary mask; every value is exactly 0 or 1.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Mask() = default;
    Mask(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(std::size_t(h) * w, fill) {}

    float& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
    [[nodiscard]] float at(int y, int x) const { return pixels[std::size_t(y) * width + x]; }
    [[nodiscard]] std::size_t count() const;
    bool operator==(const Mask&) const = default;
};

/// Equirectangular radiance map, planar RGB, non-negative and unbounded.
/// Row r spans elevation +90° (r = 0) down to -90°; column c sits at azimuth
/// 2π(c + 0.5)/width.
struct EnvMap {
    int height = 0;
    int width = 0;
    std::vector<float> radiance;

    static constexpr int channels = 3;

    EnvMap() = default;
    EnvMap(int h, int w, float fill = 0.0f) : height(h), width(w), radiance(std::size_t(3) * h * w, fill) {}

    float& at(int c, int r, int col) { return radiance[(std::size_t(c) * height + r) * width + col]; }
    [[nodiscard]] float at(int c, int r, int col) const {
        return radiance[(std::size_t(c) * height + r) * width + col];
    }
    [[nodiscard]] double total() const;
    bool operator==(const EnvMap&) const = default;
};

struct SixTuple {
    Image composite;
    Mask object_mask;
    Mask background_mask;
    EnvMap object_illum;
    EnvMap background_illum;
    Image gt_harmonized;
    std::string sample_id;

    bool operator==(const SixTuple&) const = default;
};

struct LossWeights {
    double beta1 = 25.0;  ///< illumination
    double beta2 = 6.0;   ///< non-illumination feature
    double beta3 = 0.04;  ///< perceptual
    double beta4 = 0.5;   ///< adversarial

    void validate() const;
};

struct AblationFlags {
    bool use_msa = true;
    bool use_iem = true;
    bool use_l_per = true;
    bool use_l_nonillu = true;
    bool use_l_adv = true;

    static AblationFlags all_on() { return {}; }
    static AblationFlags all_off() { return {false, false, false, false, false}; }
    bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
    int image_side = 256;
    int base_channels = 32;
    int max_channels = 512;
    int envmap_height = 16;
    int envmap_width = 32;
    double illu_channel_fraction = 0.5;
    AblationFlags ablation;
    /// Feed the background mask to the illumination encoder as a 4th channel.
    bool illum_encoder_uses_mask = true;
    int illum_decoder_channels = 64;
    int disc_base_channels = 32;
    int disc_max_channels = 256;
    /// Width divisor for the perceptual extractor (1 = 64/128/256 channels).
    int perceptual_width_divisor = 1;

    static constexpr int stages = 5;

    /// Throws ConfigError naming the violated constraint.
    void validate() const;

    [[nodiscard]] int stage_channels(int stage) const;
    [[nodiscard]] int bottleneck_channels() const { return stage_channels(stages - 1); }
    [[nodiscard]] int illu_channels() const;
    [[nodiscard]] int noillu_channels() const { return bottleneck_channels() - illu_channels(); }
    [[nodiscard]] int bottleneck_side() const { return image_side >> stages; }

    /// Stable hex digest of the canonical JSON form.
    [[nodiscard]] std::string digest() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Lists every violated SixTuple invariant; empty when the tuple is well formed.
/// Composite/ground-truth agreement outside object ∪ shadow is checked only
/// when `shadow_region` is supplied, since the shadow is not part of the tuple.
std::vector<std::string> validate_six_tuple(const SixTuple& t, const Mask* shadow_region = nullptr);

}  // namespace sigan
