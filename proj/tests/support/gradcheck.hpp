#pragma once

// Central finite-difference checks against reverse-mode gradients, in double.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sigan/nn/ops.hpp"

namespace sigan::testing {

struct GradCheckOptions {
    double step = 1e-6;
    double rel_tol = 1e-3;
    /// Differences below this are finite-difference noise, not gradient errors.
    double abs_floor = 1e-8;
    /// The floor also grows with the loss: central differences of a value L
    /// carry roughly eps * |L| / step of rounding error; this is the multiple allowed.
    double roundoff_factor = 100.0;
    std::size_t samples_per_tensor = 20;
    std::uint64_t seed = 7;
};

struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst_rel = 0.0;
    std::string worst_where;

    [[nodiscard]] bool ok() const { return checked > 0 && failed == 0; }
};

inline double relative_error(double analytic, double numeric) {
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    return denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
}

/// Every element when the tensor is small, else `k` distinct random indices.
inline std::vector<std::size_t> pick_indices(std::size_t numel, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(numel);
    for (std::size_t i = 0; i < numel; ++i) idx[i] = i;
    if (numel <= k) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

struct NamedTensor {
    std::string name;
    nn::Var<double> var;
};

/// `loss` rebuilds the graph from the current values of `inputs` and returns a scalar.
inline GradCheckResult grad_check(const std::function<nn::Var<double>()>& loss, const std::vector<NamedTensor>& inputs,
                                  const GradCheckOptions& opt = {}) {
    for (const auto& in : inputs) in.var.zero_grad();
    const nn::Var<double> root = loss();
    nn::backward(root);
    std::vector<nn::Tensor<double>> analytic;
    for (const auto& in : inputs) {
        analytic.push_back(in.var.has_grad() ? in.var.grad() : nn::Tensor<double>(in.var.shape()));
    }

    GradCheckResult res;
    std::mt19937_64 rng(opt.seed);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        nn::Var<double> v = inputs[t].var;
        auto& values = v.mutable_value();
        for (std::size_t i : pick_indices(values.numel(), opt.samples_per_tensor, rng)) {
            const double orig = values[i];
            double up = 0;
            double down = 0;
            {
                nn::NoGradGuard guard;
                values[i] = orig + opt.step;
                up = loss().item();
                values[i] = orig - opt.step;
                down = loss().item();
                values[i] = orig;
            }
            const double numeric = (up - down) / (2 * opt.step);
            const double a = analytic[t][i];
            const double rel = relative_error(a, numeric);
            ++res.checked;
            const double noise = opt.roundoff_factor * std::numeric_limits<double>::epsilon() *
                                 std::max(std::abs(up), std::abs(down)) / opt.step;
            const bool pass = rel < opt.rel_tol || std::abs(a - numeric) < std::max(opt.abs_floor, noise);
            if (!pass) ++res.failed;
            if (!pass && rel > res.worst_rel) {
                res.worst_rel = rel;
                char buf[96];
                std::snprintf(buf, sizeof buf, "[%zu] analytic %.6e numeric %.6e", i, a, numeric);
                res.worst_where = inputs[t].name + buf;
            }
        }
    }
    return res;
}

/// Dot product of `x` with fixed random weights: a scalar probe that sees every output element.
inline nn::Var<double> random_probe(const nn::Var<double>& x, std::uint64_t seed) {
    nn::Tensor<double> w(x.shape());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : w.data()) v = u(rng);
    return nn::sum(nn::mul(x, nn::constant(std::move(w))));
}

}  // namespace sigan::testing
