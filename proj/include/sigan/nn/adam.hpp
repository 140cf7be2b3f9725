#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sigan/nn/params.hpp"

namespace sigan::nn {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over every parameter of one store. Moment
/// tensors are kept in the store's parameter order.
template <class T>
class Adam {
public:
    Adam(const ParameterStore<T>& store, AdamOptions opt) : store_(&store), opt_(opt) {
        for (const auto& p : store.params()) {
            m_.emplace_back(p.var.shape());
            v_.emplace_back(p.var.shape());
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(opt_.beta1);
        const T b2 = static_cast<T>(opt_.beta2);
        const T step_size = static_cast<T>(opt_.learning_rate / c1);
        const T inv_c2 = static_cast<T>(1.0 / c2);
        const T eps = static_cast<T>(opt_.eps);
        const auto& params = store_->params();
        for (std::size_t k = 0; k < params.size(); ++k) {
            Var<T> p = params[k].var;
            if (!p.has_grad()) continue;
            Tensor<T>& w = p.mutable_value();
            const Tensor<T>& g = p.grad();
            Tensor<T>& m = m_[k];
            Tensor<T>& v = v_[k];
            for (std::size_t i = 0; i < w.numel(); ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
                w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
            }
        }
    }

    [[nodiscard]] std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    [[nodiscard]] std::vector<Tensor<T>>& first_moments() { return m_; }
    [[nodiscard]] std::vector<Tensor<T>>& second_moments() { return v_; }
    [[nodiscard]] const AdamOptions& options() const { return opt_; }

private:
    const ParameterStore<T>* store_;
    AdamOptions opt_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    std::int64_t t_ = 0;
};

/// L2 norm over all parameter gradients of a store.
template <class T>
double global_grad_norm(const ParameterStore<T>& store) {
    double acc = 0;
    for (const auto& p : store.params()) {
        if (!p.var.has_grad()) continue;
        for (T g : p.var.grad().data()) acc += static_cast<double>(g) * g;
    }
    return std::sqrt(acc);
}

/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
template <class T>
double clip_grad_norm(const ParameterStore<T>& store, double max_norm) {
    const double norm = global_grad_norm(store);
    if (norm > max_norm && norm > 0) {
        const T f = static_cast<T>(max_norm / norm);
        for (const auto& p : store.params()) {
            if (!p.var.has_grad()) continue;
            for (T& g : p.var.grad().data()) g *= f;
        }
    }
    return norm;
}

}  // namespace sigan::nn
