#pragma once

#include "xrf/tensor.h"

namespace xrf {

inline constexpr double kBceEpsilon = 1e-12;

/// Mean binary cross entropy over all entries of probability-form predictions.
/// Probabilities are clamped to [eps, 1-eps]. Throws DimensionError on shape
/// mismatch.
Tensor bce_loss(const Tensor& probs, const Tensor& targets);

/// Mean binary cross entropy computed directly from logits in the stable form
/// max(z,0) - z*y + log1p(exp(-|z|)).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

enum class LossKind { bce, bce_logits };

}  // namespace xrf
