#include "sigan/core.hpp"

#include <algorithm>
#include <cmath>

#include "sigan/util/hash.hpp"

namespace sigan {

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (float v : pixels) n += v != 0.0f;
    return n;
}

double EnvMap::total() const {
    double acc = 0;
    for (float v : radiance) acc += v;
    return acc;
}

void LossWeights::validate() const {
    if (beta1 < 0 || beta2 < 0 || beta3 < 0 || beta4 < 0) throw ConfigError("loss weights must be non-negative");
}

void ModelConfig::validate() const {
    if (image_side <= 0 || image_side % (1 << stages) != 0) {
        throw ConfigError("image_side " + std::to_string(image_side) + " must be a positive multiple of 32");
    }
    if (base_channels <= 0 || max_channels < base_channels) throw ConfigError("invalid channel widths");
    if (envmap_height <= 0 || envmap_width != 2 * envmap_height || envmap_height % 4 != 0) {
        throw ConfigError("envmap shape must be (H, 2H) with H divisible by 4");
    }
    if (!(illu_channel_fraction > 0.0 && illu_channel_fraction < 1.0)) {
        throw ConfigError("illu_channel_fraction must lie strictly between 0 and 1");
    }
    const double split = bottleneck_channels() * illu_channel_fraction;
    if (std::abs(split - std::round(split)) > 1e-9 || illu_channels() == 0 || noillu_channels() == 0) {
        throw ConfigError("illu_channel_fraction does not split " + std::to_string(bottleneck_channels()) +
                          " bottleneck channels into integer parts");
    }
    if (illum_decoder_channels < 2 || disc_base_channels <= 0 || disc_max_channels < disc_base_channels) {
        throw ConfigError("invalid head widths");
    }
    if (perceptual_width_divisor <= 0 || 64 % perceptual_width_divisor != 0) {
        throw ConfigError("perceptual_width_divisor must divide 64");
    }
}

int ModelConfig::stage_channels(int stage) const {
    long long c = static_cast<long long>(base_channels) << stage;
    return static_cast<int>(std::min<long long>(c, max_channels));
}

int ModelConfig::illu_channels() const {
    return static_cast<int>(std::floor(bottleneck_channels() * illu_channel_fraction + 1e-9));
}

std::string ModelConfig::digest() const {
    nlohmann::json j = *this;
    return util::digest_hex(j.dump());
}

void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"beta1", w.beta1}, {"beta2", w.beta2}, {"beta3", w.beta3}, {"beta4", w.beta4}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    w.beta1 = j.value("beta1", w.beta1);
    w.beta2 = j.value("beta2", w.beta2);
    w.beta3 = j.value("beta3", w.beta3);
    w.beta4 = j.value("beta4", w.beta4);
}

void to_json(nlohmann::json& j, const AblationFlags& f) {
    j = {{"use_msa", f.use_msa},
         {"use_iem", f.use_iem},
         {"use_l_per", f.use_l_per},
         {"use_l_nonillu", f.use_l_nonillu},
         {"use_l_adv", f.use_l_adv}};
}

void from_json(const nlohmann::json& j, AblationFlags& f) {
    f.use_msa = j.value("use_msa", f.use_msa);
    f.use_iem = j.value("use_iem", f.use_iem);
    f.use_l_per = j.value("use_l_per", f.use_l_per);
    f.use_l_nonillu = j.value("use_l_nonillu", f.use_l_nonillu);
    f.use_l_adv = j.value("use_l_adv", f.use_l_adv);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"image_side", c.image_side},
         {"base_channels", c.base_channels},
         {"max_channels", c.max_channels},
         {"envmap_shape", {c.envmap_height, c.envmap_width}},
         {"illu_channel_fraction", c.illu_channel_fraction},
         {"ablation", c.ablation},
         {"illum_encoder_uses_mask", c.illum_encoder_uses_mask},
         {"illum_decoder_channels", c.illum_decoder_channels},
         {"disc_base_channels", c.disc_base_channels},
         {"disc_max_channels", c.disc_max_channels},
         {"perceptual_width_divisor", c.perceptual_width_divisor}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.image_side = j.value("image_side", c.image_side);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.max_channels = j.value("max_channels", c.max_channels);
    if (j.contains("envmap_shape")) {
        const auto& s = j.at("envmap_shape");
        if (!s.is_array() || s.size() != 2) throw ConfigError("envmap_shape must be [H, W]");
        c.envmap_height = s[0].get<int>();
        c.envmap_width = s[1].get<int>();
    }
    c.illu_channel_fraction = j.value("illu_channel_fraction", c.illu_channel_fraction);
    if (j.contains("ablation")) c.ablation = j.at("ablation").get<AblationFlags>();
    c.illum_encoder_uses_mask = j.value("illum_encoder_uses_mask", c.illum_encoder_uses_mask);
    c.illum_decoder_channels = j.value("illum_decoder_channels", c.illum_decoder_channels);
    c.disc_base_channels = j.value("disc_base_channels", c.disc_base_channels);
    c.disc_max_channels = j.value("disc_max_channels", c.disc_max_channels);
    c.perceptual_width_divisor = j.value("perceptual_width_divisor", c.perceptual_width_divisor);
}

namespace {

template <class V>
bool values_in_unit_range(const V& values) {
    for (float v : values)
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) return false;
    return true;
}

void check_image(const Image& img, const char* name, std::vector<std::string>& out) {
    if (img.height <= 0 || img.width <= 0 || img.pixels.size() != std::size_t(3) * img.height * img.width) {
        out.push_back(std::string(name) + ": malformed dimensions");
        return;
    }
    if (img.height != img.width) out.push_back(std::string(name) + ": image must be square");
    if (!values_in_unit_range(img.pixels)) out.push_back(std::string(name) + ": values must be finite and in [0,1]");
}

void check_mask(const Mask& m, const Image& ref, const char* name, std::vector<std::string>& out) {
    if (m.pixels.size() != std::size_t(m.height) * m.width || m.height <= 0) {
        out.push_back(std::string(name) + ": malformed dimensions");
        return;
    }
    if (m.height != ref.height || m.width != ref.width) out.push_back(std::string(name) + ": size differs from composite");
    for (float v : m.pixels) {
        if (v != 0.0f && v != 1.0f) {
            out.push_back(std::string(name) + ": mask must be binary");
            break;
        }
    }
}

void check_envmap(const EnvMap& e, const char* name, std::vector<std::string>& out) {
    if (e.height <= 0 || e.radiance.size() != std::size_t(3) * e.height * e.width) {
        out.push_back(std::string(name) + ": malformed dimensions");
        return;
    }
    if (e.width != 2 * e.height) out.push_back(std::string(name) + ": width must equal twice the height");
    for (float v : e.radiance) {
        if (!std::isfinite(v) || v < 0.0f) {
            out.push_back(std::string(name) + ": radiance must be finite and non-negative");
            break;
        }
    }
}

}  // namespace

std::vector<std::string> validate_six_tuple(const SixTuple& t, const Mask* shadow_region) {
    std::vector<std::string> out;
    check_image(t.composite, "composite", out);
    check_image(t.gt_harmonized, "gt_harmonized", out);
    if (t.composite.height != t.gt_harmonized.height || t.composite.width != t.gt_harmonized.width) {
        out.push_back("gt_harmonized: size differs from composite");
    }
    check_mask(t.object_mask, t.composite, "object_mask", out);
    check_mask(t.background_mask, t.composite, "background_mask", out);
    check_envmap(t.object_illum, "object_illum", out);
    check_envmap(t.background_illum, "background_illum", out);
    if (!out.empty()) return out;  // element-wise rules below need consistent shapes

    for (std::size_t i = 0; i < t.object_mask.pixels.size(); ++i) {
        if (t.background_mask.pixels[i] != 1.0f - t.object_mask.pixels[i]) {
            out.push_back("background_mask: must equal 1 - object_mask (mask complementarity)");
            break;
        }
    }
    if (shadow_region) {
        if (shadow_region->height != t.composite.height || shadow_region->width != t.composite.width) {
            out.push_back("shadow_region: size differs from composite");
            return out;
        }
        const std::size_t plane = t.composite.plane();
        bool bad = false;
        for (std::size_t i = 0; i < plane && !bad; ++i) {
            if (t.object_mask.pixels[i] != 0.0f || shadow_region->pixels[i] != 0.0f) continue;
            for (int c = 0; c < 3; ++c) {
                if (t.composite.pixels[c * plane + i] != t.gt_harmonized.pixels[c * plane + i]) {
                    bad = true;
                    break;
                }
            }
        }
        if (bad) out.push_back("composite: differs from gt_harmonized outside object mask and shadow (outside-region agreement)");
    }
    return out;
}

}  // namespace sigan
