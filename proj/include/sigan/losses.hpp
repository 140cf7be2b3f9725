#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigan/core.hpp"
#include "sigan/nn/ops.hpp"

namespace sigan::losses {

using nn::Tensor;
using nn::Var;

/// Sum of squared errors of both illumination maps.
template <class T>
Var<T> l_illu(const Var<T>& pred_obj, const Var<T>& gt_obj, const Var<T>& pred_bg, const Var<T>& gt_bg);

/// Mean squared difference between two non-illumination features.
template <class T>
Var<T> l_nonillu(const Var<T>& f1, const Var<T>& f2);

/// Frozen convolutional feature extractor with the VGG-16 prefix topology:
/// conv64 conv64 pool conv128 conv128 pool conv256 conv256 conv256 pool
/// (3x3 convs, ReLU after each, 2x2 max pools). The ten weight/pool layers
/// give three taps, one after each pool. Inputs are ImageNet mean/std
/// normalised first. Weights are He-normal from `seed`; channel counts are
/// divided by `width_divisor`.
template <class T>
class PerceptualExtractor {
public:
    explicit PerceptualExtractor(std::uint64_t seed = 0x5eed, int width_divisor = 1);

    /// Features after each pool, fine to coarse. Input (N,3,H,W), H and W divisible by 8.
    [[nodiscard]] std::vector<Var<T>> features(const Var<T>& image) const;

    /// Smallest side fed to the extractor; env maps are upsampled to reach it.
    static constexpr int min_side = 32;

    /// Nearest upsample by the smallest integer factor reaching min_side.
    [[nodiscard]] static Var<T> fit_input(const Var<T>& image);

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] int width_divisor() const { return divisor_; }
    /// Conv weights (Cout,Cin,3,3) and biases (1,Cout,1,1), in layer order.
    [[nodiscard]] const std::vector<Var<T>>& weights() const { return weights_; }
    [[nodiscard]] const std::vector<Var<T>>& biases() const { return biases_; }

private:
    std::uint64_t seed_;
    int divisor_;
    std::vector<Var<T>> weights_;
    std::vector<Var<T>> biases_;
    Var<T> norm_weight_;
    Var<T> norm_bias_;
};

/// Feature MSE of one prediction/target slot, averaged over the extractor's taps.
template <class T>
Var<T> perceptual_term(const Var<T>& pred, const Var<T>& gt, const PerceptualExtractor<T>& extractor);

/// Sum of the object-illumination, background-illumination and relit-image
/// perceptual terms.
template <class T>
Var<T> l_per(const Var<T>& pred_obj, const Var<T>& gt_obj, const Var<T>& pred_bg, const Var<T>& gt_bg,
             const Var<T>& relit, const Var<T>& gt_image, const PerceptualExtractor<T>& extractor);

inline constexpr double kAdvEps = 1e-7;

template <class T>
struct AdvLoss {
    Var<T> d_loss;  ///< -[log D(real) + log(1 - D(fake))], batch mean
    Var<T> g_loss;  ///< -log D(fake), batch mean
};

/// Probabilities are clamped to [eps, 1 - eps] before the logs.
template <class T>
AdvLoss<T> l_adv(const Var<T>& d_real, const Var<T>& d_fake);

/// Scalar form: {d_loss, g_loss}.
std::pair<double, double> l_adv(double d_real, double d_fake);

struct LossReport {
    double l_illu = 0;
    double l_nonillu = 0;
    double l_per = 0;
    double l_adv_g = 0;
    double l_adv_d = 0;
    double l_total = 0;
};

void to_json(nlohmann::json& j, const LossReport& r);
void from_json(const nlohmann::json& j, LossReport& r);

/// β1·l_illu + β2·l_nonillu + β3·l_per + β4·l_adv_g, each of the last three
/// only when its flag is set. Disabled terms contribute exactly 0.
double l_total(const LossReport& components, const LossWeights& weights, const AblationFlags& flags);

/// Differentiable counterpart of l_total. Disabled or undefined terms are skipped.
template <class T>
Var<T> l_total(const Var<T>& illu, const Var<T>& nonillu, const Var<T>& per, const Var<T>& adv_g,
               const LossWeights& weights, const AblationFlags& flags);

}  // namespace sigan::losses
