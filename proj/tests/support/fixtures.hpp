#pragma once

#include <random>

#include "sigan/core.hpp"
#include "sigan/model.hpp"
#include "sigan/scenegen.hpp"

namespace sigan::testing {

/// Narrow model that keeps the full topology but runs in milliseconds.
inline ModelConfig tiny_model(int side, AblationFlags flags = AblationFlags::all_on()) {
    ModelConfig c;
    c.image_side = side;
    c.base_channels = 4;
    c.max_channels = 32;
    c.illum_decoder_channels = 4;
    c.disc_base_channels = 4;
    c.disc_max_channels = 16;
    c.perceptual_width_divisor = 16;
    c.ablation = flags;
    return c;
}

template <class T>
nn::Tensor<T> random_tensor(nn::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    nn::Tensor<T> t(s);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
}

/// Batch of `n` rendered samples as generator inputs.
template <class T>
model::GeneratorInputs<T> rendered_inputs(int side, int n, std::uint64_t seed) {
    std::vector<SixTuple> tuples;
    for (int i = 0; i < n; ++i) tuples.push_back(scenegen::render_six_tuple(scenegen::sample_spec(seed + i, side)));
    std::vector<const SixTuple*> ptrs;
    for (const auto& t : tuples) ptrs.push_back(&t);
    return model::make_inputs<T>(ptrs);
}

}  // namespace sigan::testing
