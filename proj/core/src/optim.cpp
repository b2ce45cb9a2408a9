#include "xrf/optim.h"

#include <cmath>

#include "xrf/error.h"

namespace xrf {

std::string_view optimizer_name(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd:
            return "sgd";
        case OptimizerKind::adam:
            return "adam";
        case OptimizerKind::adamw:
            return "adamw";
    }
    return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    if (name == "adamw") return OptimizerKind::adamw;
    throw ConfigError("optimizer: unknown value '" + std::string(name) + "' (expected sgd, adam or adamw)");
}

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

OptimizerState::OptimizerState(OptimizerConfig config) : config_(config) { config_.validate(); }

void OptimizerState::set_lr(double lr) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
    config_.lr = lr;
}

void OptimizerState::step(TensorList& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(static_cast<std::size_t>(params[i].tensor.numel()), 0.0);
            if (config_.kind != OptimizerKind::sgd) v_[i].assign(m_[i].size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw DimensionError("optimizer: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (static_cast<std::size_t>(p.tensor.numel()) != m_[i].size()) {
            throw DimensionError("optimizer: parameter '" + p.name + "' changed shape");
        }
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter '" + p.name + "'");
        }
    }

    ++steps_;
    const double lr = config_.lr;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].tensor.mutable_data();
        const bool has_grad = params[i].tensor.has_grad();
        const auto g = has_grad ? params[i].tensor.grad() : std::span<const double>{};
        auto& m = m_[i];
        switch (config_.kind) {
            case OptimizerKind::sgd:
                for (std::size_t j = 0; j < w.size(); ++j) {
                    m[j] = config_.momentum * m[j] + (has_grad ? g[j] : 0.0);
                    w[j] -= lr * m[j];
                }
                break;
            case OptimizerKind::adamw:
                if (config_.weight_decay > 0.0) {
                    const double decay = 1.0 - lr * config_.weight_decay;
                    for (auto& x : w) x *= decay;
                }
                [[fallthrough]];
            case OptimizerKind::adam: {
                auto& v = v_[i];
                for (std::size_t j = 0; j < w.size(); ++j) {
                    const double gj = has_grad ? g[j] : 0.0;
                    m[j] = b1 * m[j] + (1.0 - b1) * gj;
                    v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                    w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
                }
                break;
            }
        }
    }
}

}  // namespace xrf
