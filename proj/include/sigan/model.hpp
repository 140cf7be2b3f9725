#pragma once

// Generator (relighting network + illumination network) and discriminator.
//
// Tensors are NCHW. Parameter names are dotted paths such as
// "r_enc.s2.res.c1.weight"; initial values depend only on (seed, name), so a
// disabled block simply has no parameters and leaves every other tensor alone.

#include <cstdint>
#include <span>
#include <vector>

#include "sigan/core.hpp"
#include "sigan/nn/params.hpp"

namespace sigan::model {

using nn::ForwardContext;
using nn::ParameterStore;
using nn::Shape;
using nn::Tensor;
using nn::Var;

/// Multi-scale attention block. Three gating branches (1x1; 3x3 stride 2 then
/// x2 nearest; 5x5 stride 2 then x2 nearest), each ending in a sigmoid, gate
/// the input; the gated maps are concatenated, fused by a 1x1 conv and added
/// to the input.
template <class T>
class MsaBlock {
public:
    MsaBlock() = default;
    MsaBlock(ParameterStore<T>& store, const std::string& name, int channels);

    /// Throws ConfigError when the spatial size is odd. Appends the three
    /// attention maps to `attention` when given.
    Var<T> operator()(const Var<T>& x, std::vector<Var<T>>* attention = nullptr) const;

    /// Pre-sigmoid branch biases, exposed for saturation tests.
    [[nodiscard]] std::vector<Var<T>> gate_biases() const;
    [[nodiscard]] const nn::Conv2d<T>& fuse() const { return fuse_; }

private:
    nn::Conv2d<T> b1a_, b1b_, b3a_, b3b_, b5a_, b5b_, fuse_;
};

/// Three [conv3x3, BN, ReLU] layers plus a 1x1 projection of the input.
template <class T>
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(ParameterStore<T>& store, const std::string& name, int in_channels, int out_channels);
    Var<T> operator()(const Var<T>& x, const ForwardContext<T>& ctx) const;

private:
    nn::Conv2d<T> conv_[3];
    nn::BatchNorm2d<T> bn_[3];
    nn::Conv2d<T> proj_;
};

/// Five stages of [residual block, 2x2 average pool, optional MSA]. Returns
/// the five stage outputs; the last is the bottleneck.
template <class T>
class Encoder {
public:
    Encoder() = default;
    Encoder(ParameterStore<T>& store, const std::string& name, int in_channels, std::vector<int> widths, bool use_msa);

    std::vector<Var<T>> operator()(const Var<T>& x, const ForwardContext<T>& ctx,
                                   std::vector<Var<T>>* attention = nullptr) const;
    [[nodiscard]] const std::vector<int>& widths() const { return widths_; }

private:
    std::vector<int> widths_;
    std::vector<ResidualBlock<T>> blocks_;
    std::vector<MsaBlock<T>> msa_;
};

template <class T>
struct BottleneckSplit {
    Var<T> f_noillu;      ///< first C - C_illu bottleneck channels
    Var<T> f_illu;        ///< last C_illu bottleneck channels
    Var<T> f_obj;         ///< bottleneck gated by the resized object mask
    Var<T> f_noillu_obj;  ///< non-illumination channels of f_obj
    Var<T> f_illu_obj;    ///< illumination channels of f_obj
    Var<T> f_illu_bg;     ///< illumination encoder output
};

template <class T>
struct ExchangeResult {
    BottleneckSplit<T> split;
    Var<T> decoder_input;
    Var<T> obj_illum_feature;
};

/// Block-average reduction of a (N,1,H,W) mask to (N,1,height,width); sides
/// must divide evenly. Zero exactly where the block holds no mask pixel.
template <class T>
Tensor<T> resize_mask(const Tensor<T>& mask, int height, int width);

/// Splits the bottleneck, gates it with the object mask (full resolution,
/// resized here) and routes features. With IEM the decoder sees
/// [f_noillu, f_illu_bg] and the object-illumination head sees x2 f_illu_obj;
/// without IEM the decoder sees the bottleneck and the head sees x2 f_illu.
template <class T>
ExchangeResult<T> illumination_exchange(const Var<T>& bottleneck, const Var<T>& f_illu_bg,
                                        const Tensor<T>& object_mask, int illu_channels, bool use_iem);

/// Five stages of [x2 nearest, concat skip, dilated 3x3 conv, BN, ReLU],
/// then conv3x3 to RGB and a sigmoid. Skips are ordered coarse to fine; the
/// last one is at full resolution.
template <class T>
class RelightingDecoder {
public:
    RelightingDecoder() = default;
    RelightingDecoder(ParameterStore<T>& store, const std::string& name, int in_channels,
                      std::vector<int> skip_channels, std::vector<int> widths);
    Var<T> operator()(const Var<T>& x, const std::vector<Var<T>>& skips, const ForwardContext<T>& ctx) const;

private:
    std::vector<nn::Conv2d<T>> conv_;
    std::vector<nn::BatchNorm2d<T>> bn_;
    nn::Conv2d<T> out_;
};

/// Resize to (H_e/4, W_e/4), then conv-ReLU, x2, conv-ReLU, x2, conv to RGB,
/// softplus. Width-wrapping padding keeps a constant input constant.
template <class T>
class IlluminationDecoder {
public:
    IlluminationDecoder() = default;
    IlluminationDecoder(ParameterStore<T>& store, const std::string& name, int in_channels, int hidden,
                        int envmap_height, int envmap_width);
    Var<T> operator()(const Var<T>& feature) const;

private:
    int height_ = 0;
    int width_ = 0;
    nn::Conv2d<T> c0_, c1_, c2_;
};

/// Input batch: composite (N,3,H,W), object and background masks (N,1,H,W).
template <class T>
struct GeneratorInputs {
    Tensor<T> composite;
    Tensor<T> object_mask;
    Tensor<T> background_mask;
};

template <class T>
struct GeneratorOutput {
    Var<T> relit;      ///< (N,3,H,W) in [0,1]
    Var<T> obj_illum;  ///< (N,3,H_e,W_e), non-negative
    Var<T> bg_illum;   ///< (N,3,H_e,W_e), non-negative
    BottleneckSplit<T> bottleneck;
    std::vector<Var<T>> skips;      ///< relighting encoder stage outputs, fine to coarse
    std::vector<Var<T>> attention;  ///< every MSA attention map, in evaluation order
};

template <class T>
class Generator {
public:
    /// Validates the config; ConfigError also when MSA would see an odd size.
    Generator(const ModelConfig& config, std::uint64_t seed);

    GeneratorOutput<T> forward(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx) const;

    /// Same as forward with one skip feature replaced by zeros (sensitivity probes).
    GeneratorOutput<T> forward_without_skip(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx,
                                            int skip_index) const;

    /// Relighting encoder and gating only: f_noillu_obj for the pairing loss.
    Var<T> nonillu_object_feature(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx) const;

    [[nodiscard]] ParameterStore<T>& params() { return store_; }
    [[nodiscard]] const ParameterStore<T>& params() const { return store_; }
    [[nodiscard]] const ModelConfig& config() const { return config_; }

    [[nodiscard]] const Encoder<T>& relighting_encoder() const { return r_enc_; }
    [[nodiscard]] const Encoder<T>& illumination_encoder() const { return i_enc_; }
    [[nodiscard]] const RelightingDecoder<T>& relighting_decoder() const { return r_dec_; }
    [[nodiscard]] const IlluminationDecoder<T>& object_illum_decoder() const { return obj_dec_; }
    [[nodiscard]] const IlluminationDecoder<T>& background_illum_decoder() const { return bg_dec_; }

private:
    GeneratorOutput<T> run(const GeneratorInputs<T>& in, const ForwardContext<T>& ctx, int drop_skip) const;

    ModelConfig config_;
    ParameterStore<T> store_;
    Encoder<T> r_enc_;
    Encoder<T> i_enc_;
    RelightingDecoder<T> r_dec_;
    IlluminationDecoder<T> obj_dec_;
    IlluminationDecoder<T> bg_dec_;
};

/// Six [conv3x3, instance norm, ReLU] stages on image ⊕ mask, a conv to one
/// channel, sigmoid, global average pool. Convs stride 2 while the input side
/// is at least 8, then stride 1, so small images keep a spatial extent.
template <class T>
class Discriminator {
public:
    Discriminator(const ModelConfig& config, std::uint64_t seed);

    /// image (N,3,H,W), mask (N,1,H,W) -> (N,1,1,1) in (0,1).
    Var<T> forward(const Var<T>& image, const Tensor<T>& mask) const;

    [[nodiscard]] ParameterStore<T>& params() { return store_; }
    [[nodiscard]] const ParameterStore<T>& params() const { return store_; }
    [[nodiscard]] const nn::Conv2d<T>& final_conv() const { return out_; }

    static constexpr int stages = 6;

private:
    ModelConfig config_;
    ParameterStore<T> store_;
    std::vector<nn::Conv2d<T>> conv_;
    nn::Conv2d<T> out_;
};

// Conversions between pipeline value types and batched tensors.
template <class T> Tensor<T> to_tensor(const Image& img);
template <class T> Tensor<T> to_tensor(const Mask& m);
template <class T> Tensor<T> to_tensor(const EnvMap& e);
/// Stacks images/masks/env maps along the batch axis.
template <class T> Tensor<T> stack(const std::vector<Tensor<T>>& items);
template <class T> Image image_from(const Tensor<T>& t, int n = 0);
template <class T> EnvMap envmap_from(const Tensor<T>& t, int n = 0);

template <class T>
GeneratorInputs<T> make_inputs(std::span<const SixTuple* const> batch);
template <class T>
GeneratorInputs<T> make_inputs(const Image& composite, const Mask& object_mask, const Mask& background_mask);

}  // namespace sigan::model
