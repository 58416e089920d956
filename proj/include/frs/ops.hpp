#pragma once

#include "frs/tensor.hpp"

namespace frs {

// Differentiable ops over rank-4 [N,C,H,W] tensors (reductions return [N,1,H,W]
// or [1]). All ops validate shapes and raise ShapeError naming the offending
// axis. Elementwise ops require identical shapes; no broadcasting.

/// Cross-correlation with square odd kernel. Requires (H + 2*padding - k) and
/// (W + 2*padding - k) exactly divisible by stride; spatial downsampling in
/// the detector goes through avg_pool2x instead of strided convs for this
/// reason. Gradients flow to input, weight and bias.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, double s);

/// Per-site maximum over the channel axis: [N,C,H,W] -> [N,1,H,W].
/// Backward routes the gradient to the argmax channel only, lowest channel
/// index on ties.
Tensor max_over_channels(const Tensor& x);

/// Each value replicated into a 2x2 block; backward sums the block gradients.
Tensor upsample_nearest2x(const Tensor& x);

/// Mean over non-overlapping 2x2 blocks; requires even H and W.
Tensor avg_pool2x(const Tensor& x);

Tensor mse_elementwise(const Tensor& a, const Tensor& b);
Tensor abs_diff(const Tensor& a, const Tensor& b);

/// Elementwise -(t*ln p + (1-t)*ln(1-p)) with p clamped to [eps, 1-eps],
/// eps = 1e-7. The target carries no gradient.
Tensor bce_prob(const Tensor& p, const Tensor& target);

/// Focal binary cross-entropy on probabilities; target carries no gradient.
Tensor focal_bce(const Tensor& p, const Tensor& target, double gamma, double alpha);

/// [N,C,H,W] -> [N,1,H,W] sum over channels.
Tensor sum_channels(const Tensor& x);

/// Sum of every element -> scalar [1].
Tensor sum_all(const Tensor& x);

constexpr double kProbEps = 1e-7;

}  // namespace frs
