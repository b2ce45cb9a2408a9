#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "xrf/layers.h"

namespace xrf {

enum class OptimizerKind { sgd, adam, adamw };

std::string_view optimizer_name(OptimizerKind kind);
/// Throws ConfigError naming the `optimizer` field for unknown names.
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void validate() const;
};

/// First-order optimizer over a fixed parameter list.
///
/// sgd:   v = mu*v + g;  w -= lr*v
/// adam:  bias-corrected first/second moments
/// adamw: w *= (1 - lr*lambda), then the adam update
class OptimizerState {
 public:
    explicit OptimizerState(OptimizerConfig config);

    const OptimizerConfig& config() const { return config_; }
    double lr() const { return config_.lr; }
    void set_lr(double lr);
    std::int64_t steps() const { return steps_; }

    /// Applies one update using the accumulated grads. Parameters without a
    /// grad buffer are treated as having zero gradient. A non-finite gradient
    /// throws NonFiniteError naming the parameter, before anything is updated.
    void step(TensorList& params);

    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
    OptimizerConfig config_;
    std::int64_t steps_ = 0;
    std::vector<std::vector<double>> m_;  // velocity for sgd
    std::vector<std::vector<double>> v_;
};

}  // namespace xrf
