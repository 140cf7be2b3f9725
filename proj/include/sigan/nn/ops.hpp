#pragma once

#include <vector>

#include "sigan/nn/autograd.hpp"

namespace sigan::nn {

/// How convolution taps outside the input are sourced.
enum class PadMode {
    zeros,
    replicate,
    /// Circular along width, clamped along height (equirectangular maps).
    wrap_width,
};

struct Conv2dOptions {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    PadMode pad_mode = PadMode::zeros;
};

[[nodiscard]] int conv_output_size(int in, int kernel, const Conv2dOptions& opt);

// Elementwise arithmetic. Shapes must match exactly.
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
/// Sum of several same-shaped Vars.
template <class T> Var<T> add_n(const std::vector<Var<T>>& terms);

/// x ⊙ mask, mask of shape (N,1,H,W) broadcast over channels. The mask is data.
template <class T> Var<T> mul_mask(const Var<T>& x, const Tensor<T>& mask);

template <class T> Var<T> relu(const Var<T>& x);
template <class T> Var<T> sigmoid(const Var<T>& x);
template <class T> Var<T> softplus(const Var<T>& x);
/// log(clamp(x, lo, hi)); the gradient is zero where the clamp is active.
template <class T> Var<T> log_clamped(const Var<T>& x, T lo, T hi);

/// 2-D convolution. weight is (Cout, Cin, k, k) stored as Shape{Cout, Cin, k, k};
/// bias is (1, Cout, 1, 1) or undefined.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const Conv2dOptions& opt);

/// Batch normalization over (N,H,W) per channel. In training mode the running
/// statistics are blended as running = momentum*running + (1-momentum)*batch.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps);

/// Per-sample, per-channel normalization over (H,W); no affine parameters.
template <class T> Var<T> instance_norm(const Var<T>& x, T eps);

template <class T> Var<T> avg_pool2(const Var<T>& x);
template <class T> Var<T> max_pool2(const Var<T>& x);
template <class T> Var<T> upsample_nearest(const Var<T>& x, int factor);
/// Nearest-neighbour resize, source index floor(dst * in / out).
template <class T> Var<T> resize_nearest(const Var<T>& x, int height, int width);

template <class T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
/// Channels [begin, end).
template <class T> Var<T> slice_channels(const Var<T>& x, int begin, int end);
/// Rows [begin, end) along the batch axis.
template <class T> Var<T> slice_batch(const Var<T>& x, int begin, int end);

template <class T> Var<T> sum(const Var<T>& x);
template <class T> Var<T> mean(const Var<T>& x);
/// Per-(n,c) spatial mean, result (N,C,1,1).
template <class T> Var<T> mean_spatial(const Var<T>& x);
/// Sum of squared differences.
template <class T> Var<T> sse(const Var<T>& a, const Var<T>& b);
/// Mean of squared differences.
template <class T> Var<T> mse(const Var<T>& a, const Var<T>& b);

/// Nearest resize of a plain tensor (used for masks).
template <class T> Tensor<T> resize_nearest(const Tensor<T>& x, int height, int width);

}  // namespace sigan::nn
