#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigan/core.hpp"
#include "sigan/model.hpp"

namespace sigan::eval {

namespace fs = std::filesystem;

/// Throws std::invalid_argument when shapes differ.
double rmse(const Image& a, const Image& b);
/// 10 log10(max^2 / MSE); +infinity for identical images.
double psnr(const Image& a, const Image& b, double max_value = 1.0);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Gaussian-windowed SSIM over every full window position, averaged over
/// windows and channels. Throws std::invalid_argument when a side is below the window.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

struct Metrics {
    double rmse = 0;
    double ssim = 0;
    double psnr = 0;

    double operator[](int i) const { return i == 0 ? rmse : i == 1 ? ssim : psnr; }
};

Metrics measure(const Image& pred, const Image& gt);

struct SampleMetrics {
    std::string sample_id;
    Metrics relit;
    Metrics baseline;  ///< composite vs gt
};

struct MetricReport {
    std::string config_digest;
    std::string region = "whole_image";
    std::vector<SampleMetrics> per_sample;
    Metrics aggregate;
    Metrics baseline;
};

/// Means over per-sample entries. An infinite PSNR makes the mean infinite.
void aggregate(MetricReport& r);

/// PSNR infinities are written as the string "inf".
void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

/// composite | relit | gt side by side.
Image comparison_grid(const Image& composite, const Image& relit, const Image& gt);

/// Inference-mode relit image for one sample.
Image relight(const model::Generator<float>& gen, const SixTuple& t);

struct EvaluateOptions {
    /// Directory for per-sample grid PNGs; empty skips them.
    fs::path grid_dir;
};

/// Runs inference on each listed sample. Missing samples raise the dataset error.
MetricReport evaluate(const model::Generator<float>& gen, const std::vector<std::string>& ids,
                      const fs::path& data_dir, const EvaluateOptions& options = {});

}  // namespace sigan::eval
