#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "xrf/tensor.h"

namespace xrf {

// Elementwise binary ops broadcast NumPy-style: shapes are aligned at the
// trailing axis and an extent of 1 (or a missing leading axis) expands.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);

Tensor relu(const Tensor& x);
/// Exact form x * Phi(x) with Phi the standard normal CDF.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Throws NonFiniteError on overflow.
Tensor exp(const Tensor& x);
/// Throws NonFiniteError for x <= 0.
Tensor log(const Tensor& x);

Shape broadcast_shape(const Shape& a, const Shape& b);

/// 2-D [m,k]x[k,n] or batched [B,m,k]x[B,k,n].
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ReduceOp { sum, mean, max };

/// Reduces over `axes` (negative values count from the back). With an empty
/// axis list every axis is reduced and the result has shape [1].
/// Max routes the gradient to the first maximal element (lowest flat index).
Tensor reduce(ReduceOp op, const Tensor& x, std::vector<int> axes = {}, bool keepdim = false);
Tensor sum(const Tensor& x, std::vector<int> axes = {}, bool keepdim = false);
Tensor mean(const Tensor& x, std::vector<int> axes = {}, bool keepdim = false);
Tensor max(const Tensor& x, std::vector<int> axes = {}, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Normalizes over the last axis and applies gain/shift of that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps);

struct BatchStats {
    std::vector<double> mean;
    std::vector<double> var;  // biased (population) variance
};

/// Per-channel normalization of [N,C] or [N,C,H,W]. When `stats` is null the
/// batch statistics are computed (and reported through `batch_stats_out` if
/// given); otherwise the supplied statistics are treated as constants.
Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps,
                  const BatchStats* stats, BatchStats* batch_stats_out = nullptr);

struct Conv2dGeometry {
    int stride = 1;
    int padding = 0;
};

/// Cross-correlation of x[N,C,H,W] with weights[O,C,kh,kw]; bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, Conv2dGeometry geometry);

/// Max over window; padded cells never win. Ties route to the lowest index.
Tensor maxpool2d(const Tensor& x, int window, int stride, int padding = 0);

std::int64_t conv_output_extent(std::int64_t input, int kernel, int stride, int padding);

/// [N,C,H,W] -> [N,T,P*P*C]; patches ordered row-major over the grid and each
/// patch flattened as (row, col, channel).
Tensor patchify(const Tensor& x, int patch);
/// Inverse of patchify.
Tensor unpatchify(const Tensor& tokens, std::int64_t channels, std::int64_t height, std::int64_t width,
                  int patch);

/// Inverted dropout. Identity when `training` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

}  // namespace xrf
