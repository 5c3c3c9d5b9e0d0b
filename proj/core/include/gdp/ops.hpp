#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gdp/autodiff.hpp"

namespace gdp {

// Cross-correlation (no kernel flip). input [c,h,w] or [b,c,h,w];
// kernel [d,c,kh,kw]; optional bias [d].
Var conv2d(const Var& input, const Var& kernel, std::size_t stride, std::size_t padding,
           const std::optional<Var>& bias = std::nullopt);

// Per-channel filtering. input [c,h,w] or [b,c,h,w]; kernel [c,kh,kw].
Var depthwise_conv2d(const Var& input, const Var& kernel, std::size_t stride, std::size_t padding,
                     const std::optional<Var>& bias = std::nullopt);

// output[.., i, ..] = gains[i] * input[.., i, ..] along the channel axis.
Var channel_scale(const Var& input, const Var& gains);

// output[.., i, ..] = input[.., i, ..] + bias[i].
Var channel_bias(const Var& input, const Var& bias);

// input [m] or [b,m]; weight [n,m]; optional bias [n].
Var dense(const Var& input, const Var& weight, const std::optional<Var>& bias = std::nullopt);

Var relu(const Var& x);

// Non-overlapping window average (kernel == stride == window); trailing rows
// and columns that do not fill a window are dropped.
Var avgpool2d(const Var& x, std::size_t window);

// [c,h,w] -> [c], [b,c,h,w] -> [b,c].
Var global_avgpool(const Var& x);

struct BatchNormStats {
  Tensor& running_mean;
  Tensor& running_var;
  Scalar momentum = 0.1;
  Scalar eps = 1e-5;
};

// Training mode normalizes with batch statistics and updates the running
// estimates (unbiased variance); inference mode uses the running estimates.
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormStats stats, bool training);

// Mean negative log-likelihood of softmax(logits) over the batch.
// logits [k] (one sample) or [b,k].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, Scalar factor);
Var sum(const Var& x);

// Elementwise smoothed-L0 gate x^2/(x^2+eps). `eps` has one entry shared by
// every element or one entry per element.
Var gate_values(const Var& x, std::span<const Scalar> eps);

// L2 norm of every input-channel slice W[:, i, ...], pooled across several
// kernels that consume the same channels. Kernels are [d,c,kh,kw] or [n,c].
// The subgradient at a zero slice is taken as 0.
Var input_channel_norms(const std::vector<Var>& kernels);

}  // namespace gdp
