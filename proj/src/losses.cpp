#include "sigan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sigan/nn/params.hpp"

namespace sigan::losses {

template <class T>
Var<T> l_illu(const Var<T>& pred_obj, const Var<T>& gt_obj, const Var<T>& pred_bg, const Var<T>& gt_bg) {
    return nn::add(nn::sse(pred_obj, gt_obj), nn::sse(pred_bg, gt_bg));
}

template <class T>
Var<T> l_nonillu(const Var<T>& f1, const Var<T>& f2) {
    return nn::mse(f1, f2);
}

namespace {

// Output channels per conv (0 marks a pool).
constexpr int kLayout[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0};

}  // namespace

template <class T>
PerceptualExtractor<T>::PerceptualExtractor(std::uint64_t seed, int width_divisor)
    : seed_(seed), divisor_(width_divisor) {
    if (width_divisor < 1 || 64 % width_divisor != 0) throw ConfigError("perceptual width divisor must divide 64");
    nn::ParameterStore<T> store(seed);
    int in = 3;
    int k = 0;
    for (int width : kLayout) {
        if (width == 0) continue;
        const int out = width / width_divisor;
        const std::string name = "vgg.conv" + std::to_string(k++);
        weights_.push_back(nn::constant(store.add_param(name + ".weight", nn::Shape{out, in, 3, 3}, nn::Init::he_normal).value()));
        biases_.push_back(nn::constant(store.add_param(name + ".bias", nn::Shape{1, out, 1, 1}, nn::Init::zeros).value()));
        in = out;
    }
    // ImageNet mean/std normalisation, the preprocessing VGG-16 weights expect.
    constexpr double mean[3] = {0.485, 0.456, 0.406};
    constexpr double stdev[3] = {0.229, 0.224, 0.225};
    Tensor<T> w(nn::Shape{3, 3, 1, 1});
    Tensor<T> b(nn::Shape{1, 3, 1, 1});
    for (int c = 0; c < 3; ++c) {
        w.data()[static_cast<std::size_t>(c * 3 + c)] = static_cast<T>(1.0 / stdev[c]);
        b.data()[static_cast<std::size_t>(c)] = static_cast<T>(-mean[c] / stdev[c]);
    }
    norm_weight_ = nn::constant(std::move(w));
    norm_bias_ = nn::constant(std::move(b));
}

template <class T>
std::vector<Var<T>> PerceptualExtractor<T>::features(const Var<T>& image) const {
    if (image.shape().c != 3 || image.shape().h % 8 != 0 || image.shape().w % 8 != 0) {
        throw nn::ShapeError("perceptual extractor needs RGB input with sides divisible by 8, got " +
                             image.shape().str());
    }
    const nn::Conv2dOptions opt{1, 1, 1, nn::PadMode::zeros};
    std::vector<Var<T>> taps;
    Var<T> h = nn::conv2d(image, norm_weight_, norm_bias_, nn::Conv2dOptions{});
    std::size_t k = 0;
    for (int width : kLayout) {
        if (width == 0) {
            h = nn::max_pool2(h);
            taps.push_back(h);
        } else {
            h = nn::relu(nn::conv2d(h, weights_[k], biases_[k], opt));
            ++k;
        }
    }
    return taps;
}

template <class T>
Var<T> PerceptualExtractor<T>::fit_input(const Var<T>& image) {
    const int side = std::min(image.shape().h, image.shape().w);
    if (side >= min_side) return image;
    const int factor = (min_side + side - 1) / side;
    return nn::upsample_nearest(image, factor);
}

template <class T>
Var<T> perceptual_term(const Var<T>& pred, const Var<T>& gt, const PerceptualExtractor<T>& extractor) {
    nn::require_same_shape(pred.shape(), gt.shape(), "perceptual term");
    const auto fp = extractor.features(PerceptualExtractor<T>::fit_input(pred));
    const auto fg = extractor.features(PerceptualExtractor<T>::fit_input(gt));
    std::vector<Var<T>> terms;
    for (std::size_t i = 0; i < fp.size(); ++i) terms.push_back(nn::mse(fp[i], fg[i]));
    return nn::scale(nn::add_n<T>(terms), T(1) / static_cast<T>(terms.size()));
}

template <class T>
Var<T> l_per(const Var<T>& pred_obj, const Var<T>& gt_obj, const Var<T>& pred_bg, const Var<T>& gt_bg,
             const Var<T>& relit, const Var<T>& gt_image, const PerceptualExtractor<T>& extractor) {
    return nn::add_n<T>({perceptual_term(pred_obj, gt_obj, extractor), perceptual_term(pred_bg, gt_bg, extractor),
                         perceptual_term(relit, gt_image, extractor)});
}

template <class T>
AdvLoss<T> l_adv(const Var<T>& d_real, const Var<T>& d_fake) {
    const T lo = static_cast<T>(kAdvEps);
    const T hi = T(1) - lo;
    const Var<T> log_real = nn::log_clamped(d_real, lo, hi);
    const Var<T> log_not_fake = nn::log_clamped(nn::add_scalar(nn::scale(d_fake, T(-1)), T(1)), lo, hi);
    const Var<T> log_fake = nn::log_clamped(d_fake, lo, hi);
    AdvLoss<T> r;
    r.d_loss = nn::scale(nn::mean(nn::add(log_real, log_not_fake)), T(-1));
    r.g_loss = nn::scale(nn::mean(log_fake), T(-1));
    return r;
}

std::pair<double, double> l_adv(double d_real, double d_fake) {
    auto clamp = [](double p) { return std::clamp(p, kAdvEps, 1.0 - kAdvEps); };
    const double d = -(std::log(clamp(d_real)) + std::log(clamp(1.0 - d_fake)));
    const double g = -std::log(clamp(d_fake));
    return {d, g};
}

void to_json(nlohmann::json& j, const LossReport& r) {
    j = {{"l_illu", r.l_illu},   {"l_nonillu", r.l_nonillu}, {"l_per", r.l_per},
         {"l_adv_g", r.l_adv_g}, {"l_adv_d", r.l_adv_d},     {"l_total", r.l_total}};
}

void from_json(const nlohmann::json& j, LossReport& r) {
    r.l_illu = j.at("l_illu").get<double>();
    r.l_nonillu = j.at("l_nonillu").get<double>();
    r.l_per = j.at("l_per").get<double>();
    r.l_adv_g = j.at("l_adv_g").get<double>();
    r.l_adv_d = j.at("l_adv_d").get<double>();
    r.l_total = j.at("l_total").get<double>();
}

double l_total(const LossReport& c, const LossWeights& w, const AblationFlags& f) {
    double total = w.beta1 * c.l_illu;
    if (f.use_l_nonillu) total += w.beta2 * c.l_nonillu;
    if (f.use_l_per) total += w.beta3 * c.l_per;
    if (f.use_l_adv) total += w.beta4 * c.l_adv_g;
    return total;
}

template <class T>
Var<T> l_total(const Var<T>& illu, const Var<T>& nonillu, const Var<T>& per, const Var<T>& adv_g,
               const LossWeights& w, const AblationFlags& f) {
    std::vector<Var<T>> terms{nn::scale(illu, static_cast<T>(w.beta1))};
    if (f.use_l_nonillu && nonillu.defined()) terms.push_back(nn::scale(nonillu, static_cast<T>(w.beta2)));
    if (f.use_l_per && per.defined()) terms.push_back(nn::scale(per, static_cast<T>(w.beta3)));
    if (f.use_l_adv && adv_g.defined()) terms.push_back(nn::scale(adv_g, static_cast<T>(w.beta4)));
    return nn::add_n(terms);
}

#define SIGAN_INSTANTIATE_LOSSES(T)                                                                           \
    template Var<T> l_illu<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                    \
    template Var<T> l_nonillu<T>(const Var<T>&, const Var<T>&);                                               \
    template class PerceptualExtractor<T>;                                                                    \
    template Var<T> perceptual_term<T>(const Var<T>&, const Var<T>&, const PerceptualExtractor<T>&);          \
    template Var<T> l_per<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,       \
                             const Var<T>&, const PerceptualExtractor<T>&);                                   \
    template AdvLoss<T> l_adv<T>(const Var<T>&, const Var<T>&);                                               \
    template Var<T> l_total<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const LossWeights&, \
                               const AblationFlags&);

SIGAN_INSTANTIATE_LOSSES(float)
SIGAN_INSTANTIATE_LOSSES(double)

}  // namespace sigan::losses
