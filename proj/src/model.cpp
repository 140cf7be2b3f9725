#include "sigan/model.hpp"

#include <algorithm>
#include <string>

namespace sigan::model {

using nn::Conv2d;
using nn::Conv2dOptions;
using nn::PadMode;

namespace {

Conv2dOptions same(int kernel, int stride = 1, int dilation = 1, PadMode mode = PadMode::zeros) {
    return {stride, dilation * (kernel / 2), dilation, mode};
}

}  // namespace

// ---------------------------------------------------------------- MSA

template <class T>
MsaBlock<T>::MsaBlock(ParameterStore<T>& store, const std::string& name, int channels) {
    const int half = std::max(1, channels / 2);
    // Gate convs feed a sigmoid rather than a ReLU.
    const auto gate = nn::Init::lecun_normal;
    b1a_ = Conv2d<T>(store, name + ".b1a", channels, half, 1, same(1));
    b1b_ = Conv2d<T>(store, name + ".b1b", half, channels, 1, same(1), true, gate);
    b3a_ = Conv2d<T>(store, name + ".b3a", channels, half, 3, same(3, 2));
    b3b_ = Conv2d<T>(store, name + ".b3b", half, channels, 3, same(3), true, gate);
    b5a_ = Conv2d<T>(store, name + ".b5a", channels, half, 5, same(5, 2));
    b5b_ = Conv2d<T>(store, name + ".b5b", half, channels, 5, same(5), true, gate);
    // Zero fuse weights make a fresh block the identity, so stacked residual
    // attention does not compound activation scale across stages.
    fuse_ = Conv2d<T>(store, name + ".fuse", 3 * channels, channels, 1, same(1), true, nn::Init::zeros);
}

template <class T>
Var<T> MsaBlock<T>::operator()(const Var<T>& x, std::vector<Var<T>>* attention) const {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) {
        throw ConfigError("multi-scale attention needs even spatial size, got " + std::to_string(s.h) + "x" +
                          std::to_string(s.w));
    }
    const Var<T> a1 = nn::sigmoid(b1b_(nn::relu(b1a_(x))));
    const Var<T> a3 = nn::sigmoid(nn::upsample_nearest(b3b_(nn::relu(b3a_(x))), 2));
    const Var<T> a5 = nn::sigmoid(nn::upsample_nearest(b5b_(nn::relu(b5a_(x))), 2));
    if (attention) {
        attention->push_back(a1);
        attention->push_back(a3);
        attention->push_back(a5);
    }
    const Var<T> fused = fuse_(nn::concat_channels<T>({nn::mul(a1, x), nn::mul(a3, x), nn::mul(a5, x)}));
    return nn::add(x, fused);
}

template <class T>
std::vector<Var<T>> MsaBlock<T>::gate_biases() const {
    return {b1b_.bias(), b3b_.bias(), b5b_.bias()};
}

// ---------------------------------------------------------------- encoder

template <class T>
ResidualBlock<T>::ResidualBlock(ParameterStore<T>& store, const std::string& name, int in_channels,
                                int out_channels) {
    for (int i = 0; i < 3; ++i) {
        const std::string layer = name + ".c" + std::to_string(i);
        conv_[i] = Conv2d<T>(store, layer, i == 0 ? in_channels : out_channels, out_channels, 3, same(3), false);
        bn_[i] = nn::BatchNorm2d<T>(store, layer + ".bn", out_channels);
    }
    proj_ = Conv2d<T>(store, name + ".proj", in_channels, out_channels, 1, same(1));
}

template <class T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x, const ForwardContext<T>& ctx) const {
    Var<T> h = x;
    for (int i = 0; i < 3; ++i) h = nn::relu(bn_[i](conv_[i](h), ctx));
    return nn::add(h, proj_(x));
}

template <class T>
Encoder<T>::Encoder(ParameterStore<T>& store, const std::string& name, int in_channels, std::vector<int> widths,
                    bool use_msa)
    : widths_(std::move(widths)) {
    int in = in_channels;
    for (std::size_t i = 0; i < widths_.size(); ++i) {
        const std::string stage = name + ".s" + std::to_string(i);
        blocks_.emplace_back(store, stage + ".res", in, widths_[i]);
        if (use_msa) msa_.emplace_back(store, stage + ".msa", widths_[i]);
        in = widths_[i];
    }
}

template <class T>
std::vector<Var<T>> Encoder<T>::operator()(const Var<T>& x, const ForwardContext<T>& ctx,
                                           std::vector<Var<T>>* attention) const {
    if (x.shape().h % (1 << widths_.size()) != 0 || x.shape().w % (1 << widths_.size()) != 0) {
        throw ConfigError("encoder input side must be divisible by " + std::to_string(1 << widths_.size()));
    }
    std::vector<Var<T>> outs;
    Var<T> h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        h = nn::avg_pool2(blocks_[i](h, ctx));
        if (!msa_.empty()) h = msa_[i](h, attention);
        outs.push_back(h);
    }
    return outs;
}

// ---------------------------------------------------------------- exchange

template <class T>
Tensor<T> resize_mask(const Tensor<T>& mask, int height, int width) {
    const Shape s = mask.shape();
    if (s.c != 1 || height <= 0 || width <= 0 || s.h % height != 0 || s.w % width != 0) {
        throw nn::ShapeError("resize_mask: cannot reduce " + s.str() + " to " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
    const int fy = s.h / height;
    const int fx = s.w / width;
    Tensor<T> out(Shape{s.n, 1, height, width});
    for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double acc = 0;
                for (int dy = 0; dy < fy; ++dy)
                    for (int dx = 0; dx < fx; ++dx) acc += mask.at(n, 0, y * fy + dy, x * fx + dx);
                out.at(n, 0, y, x) = static_cast<T>(acc / (fy * fx));
            }
    return out;
}

template <class T>
ExchangeResult<T> illumination_exchange(const Var<T>& bottleneck, const Var<T>& f_illu_bg,
                                        const Tensor<T>& object_mask, int illu_channels, bool use_iem) {
    const Shape s = bottleneck.shape();
    if (illu_channels <= 0 || illu_channels >= s.c) {
        throw ConfigError("illumination channel count must lie strictly between 0 and " + std::to_string(s.c));
    }
    const Shape bs = f_illu_bg.shape();
    if (bs.n != s.n || bs.c != illu_channels || bs.h != s.h || bs.w != s.w) {
        throw nn::ShapeError("illumination exchange: background illumination feature " + bs.str() +
                             " does not match the illumination part of " + s.str());
    }
    const int split = s.c - illu_channels;
    ExchangeResult<T> r;
    auto& b = r.split;
    b.f_noillu = nn::slice_channels(bottleneck, 0, split);
    b.f_illu = nn::slice_channels(bottleneck, split, s.c);
    b.f_obj = nn::mul_mask(bottleneck, resize_mask(object_mask, s.h, s.w));
    b.f_noillu_obj = nn::slice_channels(b.f_obj, 0, split);
    b.f_illu_obj = nn::slice_channels(b.f_obj, split, s.c);
    b.f_illu_bg = f_illu_bg;
    if (use_iem) {
        r.decoder_input = nn::concat_channels<T>({b.f_noillu, f_illu_bg});
        r.obj_illum_feature = nn::upsample_nearest(b.f_illu_obj, 2);
    } else {
        r.decoder_input = bottleneck;
        r.obj_illum_feature = nn::upsample_nearest(b.f_illu, 2);
    }
    return r;
}

// ---------------------------------------------------------------- decoders

template <class T>
RelightingDecoder<T>::RelightingDecoder(ParameterStore<T>& store, const std::string& name, int in_channels,
                                        std::vector<int> skip_channels, std::vector<int> widths) {
    if (skip_channels.size() != widths.size()) throw ConfigError("decoder needs one skip per stage");
    int in = in_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::string stage = name + ".s" + std::to_string(i);
        conv_.emplace_back(store, stage + ".conv", in + skip_channels[i], widths[i], 3, same(3, 1, 2), false);
        bn_.emplace_back(store, stage + ".bn", widths[i]);
        in = widths[i];
    }
    out_ = Conv2d<T>(store, name + ".out", in, 3, 3, same(3));
}

template <class T>
Var<T> RelightingDecoder<T>::operator()(const Var<T>& x, const std::vector<Var<T>>& skips,
                                        const ForwardContext<T>& ctx) const {
    if (skips.size() != conv_.size()) throw nn::ShapeError("decoder: wrong number of skip features");
    Var<T> h = x;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
        h = nn::upsample_nearest(h, 2);
        const Shape hs = h.shape();
        const Shape ss = skips[i].shape();
        if (hs.n != ss.n || hs.h != ss.h || hs.w != ss.w) {
            throw nn::ShapeError("decoder stage " + std::to_string(i) + ": skip " + ss.str() + " vs " + hs.str());
        }
        h = nn::relu(bn_[i](conv_[i](nn::concat_channels<T>({h, skips[i]})), ctx));
    }
    return nn::sigmoid(out_(h));
}

template <class T>
IlluminationDecoder<T>::IlluminationDecoder(ParameterStore<T>& store, const std::string& name, int in_channels,
                                            int hidden, int envmap_height, int envmap_width)
    : height_(envmap_height), width_(envmap_width) {
    if (envmap_height % 4 != 0 || envmap_width % 4 != 0) {
        throw ConfigError("environment map sides must be divisible by 4");
    }
    const auto wrap = same(3, 1, 1, PadMode::wrap_width);
    c0_ = Conv2d<T>(store, name + ".c0", in_channels, hidden, 3, wrap);
    c1_ = Conv2d<T>(store, name + ".c1", hidden, hidden, 3, wrap);
    c2_ = Conv2d<T>(store, name + ".c2", hidden, 3, 3, wrap);
}

template <class T>
Var<T> IlluminationDecoder<T>::operator()(const Var<T>& feature) const {
    Var<T> h = nn::resize_nearest(feature, height_ / 4, width_ / 4);
    h = nn::upsample_nearest(nn::relu(c0_(h)), 2);
    h = nn::upsample_nearest(nn::relu(c1_(h)), 2);
    return nn::softplus(c2_(h));
}

// ---------------------------------------------------------------- generator

template <class T>
Generator<T>::Generator(const ModelConfig& config, std::uint64_t seed) : config_(config), store_(seed) {
    config_.validate();
    if (config_.ablation.use_msa && config_.bottleneck_side() % 2 != 0) {
        throw ConfigError("multi-scale attention needs an even bottleneck side; image_side " +
                          std::to_string(config_.image_side) + " gives " + std::to_string(config_.bottleneck_side()));
    }
    const int stages = ModelConfig::stages;
    std::vector<int> widths;
    for (int i = 0; i < stages; ++i) widths.push_back(config_.stage_channels(i));
    std::vector<int> i_widths = widths;
    i_widths.back() = config_.illu_channels();

    r_enc_ = Encoder<T>(store_, "r_enc", 5, widths, config_.ablation.use_msa);
    i_enc_ = Encoder<T>(store_, "i_enc", config_.illum_encoder_uses_mask ? 4 : 3, i_widths, false);

    std::vector<int> skip_ch;
    std::vector<int> dec_widths;
    for (int i = stages - 2; i >= 0; --i) {
        skip_ch.push_back(widths[i]);
        dec_widths.push_back(widths[i]);
    }
    skip_ch.push_back(5);
    dec_widths.push_back(config_.base_channels);
    r_dec_ = RelightingDecoder<T>(store_, "r_dec", config_.bottleneck_channels(), skip_ch, dec_widths);

    const int illu = config_.illu_channels();
    obj_dec_ = IlluminationDecoder<T>(store_, "obj_dec", illu, config_.illum_decoder_channels, config_.envmap_height,
                                      config_.envmap_width);
    bg_dec_ = IlluminationDecoder<T>(store_, "bg_dec", illu, config_.illum_decoder_channels, config_.envmap_height,
                                     config_.envmap_width);
}

template <class T>
GeneratorOutput<T> Generator<T>::run(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx,
                                     int drop_skip) const {
    const Shape cs = in.composite.shape();
    if (cs.c != 3 || cs.h != config_.image_side || cs.w != config_.image_side) {
        throw nn::ShapeError("generator: composite " + cs.str() + " does not match image_side " +
                             std::to_string(config_.image_side));
    }
    const Shape ms{cs.n, 1, cs.h, cs.w};
    nn::require_same_shape(in.object_mask.shape(), ms, "generator object mask");
    nn::require_same_shape(in.background_mask.shape(), ms, "generator background mask");

    const Var<T> comp = nn::constant(in.composite);
    const Var<T> omask = nn::constant(in.object_mask);
    const Var<T> bmask = nn::constant(in.background_mask);
    const Var<T> r_in = nn::concat_channels<T>({comp, omask, bmask});
    const Var<T> i_in = config_.illum_encoder_uses_mask ? nn::concat_channels<T>({comp, bmask}) : comp;

    GeneratorOutput<T> out;
    out.skips = r_enc_(r_in, ctx, &out.attention);
    const Var<T> f_illu_bg = i_enc_(i_in, ctx).back();
    auto ex = illumination_exchange(out.skips.back(), f_illu_bg, in.object_mask, config_.illu_channels(),
                                    config_.ablation.use_iem);
    out.bottleneck = ex.split;

    std::vector<Var<T>> skips;
    for (int i = ModelConfig::stages - 2; i >= 0; --i) skips.push_back(out.skips[i]);
    skips.push_back(r_in);
    if (drop_skip >= 0) {
        if (drop_skip >= static_cast<int>(skips.size())) throw std::out_of_range("skip index");
        skips[drop_skip] = nn::constant(Tensor<T>(skips[drop_skip].shape()));
    }
    out.relit = r_dec_(ex.decoder_input, skips, ctx);
    out.obj_illum = obj_dec_(ex.obj_illum_feature);
    out.bg_illum = bg_dec_(nn::upsample_nearest(f_illu_bg, 2));
    return out;
}

template <class T>
GeneratorOutput<T> Generator<T>::forward(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx) const {
    return run(in, ctx, -1);
}

template <class T>
GeneratorOutput<T> Generator<T>::forward_without_skip(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx,
                                                      int skip_index) const {
    return run(in, ctx, skip_index);
}

template <class T>
Var<T> Generator<T>::nonillu_object_feature(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx) const {
    const Var<T> r_in = nn::concat_channels<T>(
        {nn::constant(in.composite), nn::constant(in.object_mask), nn::constant(in.background_mask)});
    const Var<T> bottleneck = r_enc_(r_in, ctx).back();
    const Shape s = bottleneck.shape();
    const Var<T> gated = nn::mul_mask(bottleneck, resize_mask(in.object_mask, s.h, s.w));
    return nn::slice_channels(gated, 0, s.c - config_.illu_channels());
}

// ---------------------------------------------------------------- discriminator

template <class T>
Discriminator<T>::Discriminator(const ModelConfig& config, std::uint64_t seed) : config_(config), store_(seed) {
    config_.validate();
    int in = 4;
    int side = config_.image_side;
    for (int i = 0; i < stages; ++i) {
        const int width = std::min(config_.disc_base_channels << i, config_.disc_max_channels);
        const int stride = side >= 8 ? 2 : 1;
        conv_.emplace_back(store_, "disc.s" + std::to_string(i), in, width, 3, same(3, stride));
        side = stride == 2 ? side / 2 : side;
        in = width;
    }
    out_ = Conv2d<T>(store_, "disc.out", in, 1, 3, same(3));
}

template <class T>
Var<T> Discriminator<T>::forward(const Var<T>& image, const Tensor<T>& mask) const {
    const Shape s = image.shape();
    if (s.c != 3 || s.h != config_.image_side || s.w != config_.image_side) {
        throw nn::ShapeError("discriminator: image " + s.str() + " does not match image_side");
    }
    nn::require_same_shape(mask.shape(), Shape{s.n, 1, s.h, s.w}, "discriminator mask");
    Var<T> h = nn::concat_channels<T>({image, nn::constant(mask)});
    for (const auto& c : conv_) h = nn::relu(nn::instance_norm(c(h), T(1e-5)));
    return nn::mean_spatial(nn::sigmoid(out_(h)));
}

// ---------------------------------------------------------------- conversions

template <class T>
Tensor<T> to_tensor(const Image& img) {
    Tensor<T> t(Shape{1, 3, img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<T>(img.pixels[i]);
    return t;
}

template <class T>
Tensor<T> to_tensor(const Mask& m) {
    Tensor<T> t(Shape{1, 1, m.height, m.width});
    for (std::size_t i = 0; i < m.pixels.size(); ++i) t[i] = static_cast<T>(m.pixels[i]);
    return t;
}

template <class T>
Tensor<T> to_tensor(const EnvMap& e) {
    Tensor<T> t(Shape{1, 3, e.height, e.width});
    for (std::size_t i = 0; i < e.radiance.size(); ++i) t[i] = static_cast<T>(e.radiance[i]);
    return t;
}

template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& items) {
    if (items.empty()) throw nn::ShapeError("stack of nothing");
    Shape s = items.front().shape();
    s.n = 0;
    for (const auto& it : items) s.n += it.shape().n;
    Tensor<T> out(s);
    std::size_t off = 0;
    for (const auto& it : items) {
        const Shape is = it.shape();
        if (is.c != s.c || is.h != s.h || is.w != s.w) throw nn::ShapeError("stack: mismatched item " + is.str());
        std::copy(it.data().begin(), it.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += it.numel();
    }
    return out;
}

template <class T>
Image image_from(const Tensor<T>& t, int n) {
    const Shape s = t.shape();
    if (s.c != 3 || n < 0 || n >= s.n) throw nn::ShapeError("image_from: bad tensor " + s.str());
    Image img(s.h, s.w);
    const std::size_t off = static_cast<std::size_t>(n) * 3 * s.plane();
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(t[off + i]);
    return img;
}

template <class T>
EnvMap envmap_from(const Tensor<T>& t, int n) {
    const Shape s = t.shape();
    if (s.c != 3 || n < 0 || n >= s.n) throw nn::ShapeError("envmap_from: bad tensor " + s.str());
    EnvMap e(s.h, s.w);
    const std::size_t off = static_cast<std::size_t>(n) * 3 * s.plane();
    for (std::size_t i = 0; i < e.radiance.size(); ++i) e.radiance[i] = static_cast<float>(t[off + i]);
    return e;
}

template <class T>
GeneratorInputs<T> make_inputs(std::span<const SixTuple* const> batch) {
    std::vector<Tensor<T>> c, o, b;
    for (const SixTuple* t : batch) {
        c.push_back(to_tensor<T>(t->composite));
        o.push_back(to_tensor<T>(t->object_mask));
        b.push_back(to_tensor<T>(t->background_mask));
    }
    return {stack(c), stack(o), stack(b)};
}

template <class T>
GeneratorInputs<T> make_inputs(const Image& composite, const Mask& object_mask, const Mask& background_mask) {
    return {to_tensor<T>(composite), to_tensor<T>(object_mask), to_tensor<T>(background_mask)};
}

#define SIGAN_INSTANTIATE_MODEL(T)                                                                              \
    template class MsaBlock<T>;                                                                                 \
    template class ResidualBlock<T>;                                                                            \
    template class Encoder<T>;                                                                                  \
    template class RelightingDecoder<T>;                                                                        \
    template class IlluminationDecoder<T>;                                                                      \
    template class Generator<T>;                                                                                \
    template class Discriminator<T>;                                                                            \
    template ExchangeResult<T> illumination_exchange<T>(const Var<T>&, const Var<T>&, const Tensor<T>&, int,    \
                                                        bool);                                                  \
    template Tensor<T> resize_mask<T>(const Tensor<T>&, int, int);                                             \
    template Tensor<T> to_tensor<T>(const Image&);                                                              \
    template Tensor<T> to_tensor<T>(const Mask&);                                                               \
    template Tensor<T> to_tensor<T>(const EnvMap&);                                                             \
    template Tensor<T> stack<T>(const std::vector<Tensor<T>>&);                                                 \
    template Image image_from<T>(const Tensor<T>&, int);                                                        \
    template EnvMap envmap_from<T>(const Tensor<T>&, int);                                                      \
    template GeneratorInputs<T> make_inputs<T>(std::span<const SixTuple* const>);                               \
    template GeneratorInputs<T> make_inputs<T>(const Image&, const Mask&, const Mask&);

SIGAN_INSTANTIATE_MODEL(float)
SIGAN_INSTANTIATE_MODEL(double)

}  // namespace sigan::model
