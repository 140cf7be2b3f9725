#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "sigan/nn/ops.hpp"
#include "sigan/util/hash.hpp"

namespace sigan::nn {

enum class Init {
    zeros,
    ones,
    /// N(0, 2/fan_in), fan_in = C*k*k.
    he_normal,
    /// N(0, 1/fan_in), for layers not followed by a ReLU.
    lecun_normal,
};

/// Named, ordered collection of trainable tensors and non-trainable buffers
/// (batch-norm running statistics). Each tensor's initial values are a pure
/// function of (seed, name), so adding or removing one group never perturbs
/// another.
template <class T>
class ParameterStore {
public:
    struct Param {
        std::string name;
        Var<T> var;
    };
    struct Buffer {
        std::string name;
        std::unique_ptr<Tensor<T>> tensor;
    };

    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    Var<T> add_param(const std::string& name, Shape shape, Init init) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
        Tensor<T> t(shape);
        switch (init) {
            case Init::zeros:
                break;
            case Init::ones:
                t.fill(T(1));
                break;
            case Init::he_normal:
            case Init::lecun_normal: {
                const double gain = init == Init::he_normal ? 2.0 : 1.0;
                std::mt19937_64 rng(util::splitmix64(seed_ ^ util::fnv1a64(name)));
                std::normal_distribution<double> dist(0.0, std::sqrt(gain / (shape.c * shape.h * shape.w)));
                for (auto& v : t.data()) v = static_cast<T>(dist(rng));
                break;
            }
        }
        index_[name] = params_.size();
        params_.push_back({name, leaf(std::move(t))});
        return params_.back().var;
    }

    Tensor<T>& add_buffer(const std::string& name, Shape shape, T fill) {
        if (buffer_index_.count(name)) throw std::invalid_argument("duplicate buffer name " + name);
        buffer_index_[name] = buffers_.size();
        buffers_.push_back({name, std::make_unique<Tensor<T>>(shape, fill)});
        return *buffers_.back().tensor;
    }

    [[nodiscard]] const std::vector<Param>& params() const { return params_; }
    [[nodiscard]] const std::vector<Buffer>& buffers() const { return buffers_; }

    [[nodiscard]] const Var<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second].var;
    }
    [[nodiscard]] Tensor<T>* find_buffer(const std::string& name) const {
        auto it = buffer_index_.find(name);
        return it == buffer_index_.end() ? nullptr : buffers_[it->second].tensor.get();
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.var.value().numel();
        return n;
    }

    void zero_grad() const {
        for (const auto& p : params_) p.var.zero_grad();
    }

    [[nodiscard]] std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<Param> params_;
    std::vector<Buffer> buffers_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, std::size_t> buffer_index_;
};

/// Forward-pass mode shared by every layer in one model evaluation.
template <class T>
struct ForwardContext {
    bool training = true;
    /// Running-statistics decay for batch normalization.
    T bn_momentum = T(0.9);
    T bn_eps = T(1e-5);
};

template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParameterStore<T>& store, const std::string& name, int in_channels, int out_channels, int kernel,
           Conv2dOptions opt = {}, bool with_bias = true, Init weight_init = Init::he_normal)
        : opt_(opt) {
        weight_ = store.add_param(name + ".weight", Shape{out_channels, in_channels, kernel, kernel}, weight_init);
        if (with_bias) bias_ = store.add_param(name + ".bias", Shape{1, out_channels, 1, 1}, Init::zeros);
    }

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_, opt_); }

    [[nodiscard]] const Var<T>& weight() const { return weight_; }
    [[nodiscard]] const Var<T>& bias() const { return bias_; }
    [[nodiscard]] int out_channels() const { return weight_.shape().n; }

private:
    Var<T> weight_;
    Var<T> bias_;
    Conv2dOptions opt_;
};

template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
        gamma_ = store.add_param(name + ".gamma", Shape{1, channels, 1, 1}, Init::ones);
        beta_ = store.add_param(name + ".beta", Shape{1, channels, 1, 1}, Init::zeros);
        mean_ = &store.add_buffer(name + ".running_mean", Shape{1, channels, 1, 1}, T(0));
        var_ = &store.add_buffer(name + ".running_var", Shape{1, channels, 1, 1}, T(1));
    }

    Var<T> operator()(const Var<T>& x, const ForwardContext<T>& ctx) const {
        return batch_norm(x, gamma_, beta_, *mean_, *var_, ctx.training, ctx.bn_momentum, ctx.bn_eps);
    }

private:
    Var<T> gamma_;
    Var<T> beta_;
    Tensor<T>* mean_ = nullptr;
    Tensor<T>* var_ = nullptr;
};

}  // namespace sigan::nn
