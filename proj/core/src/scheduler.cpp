#include "xrf/scheduler.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "xrf/error.h"

namespace xrf {

std::string_view metric_mode_name(MetricMode mode) { return mode == MetricMode::min ? "min" : "max"; }

MetricMode parse_metric_mode(std::string_view name) {
    if (name == "min") return MetricMode::min;
    if (name == "max") return MetricMode::max;
    throw ConfigError("monitor_mode: unknown value '" + std::string(name) + "' (expected min or max)");
}

PlateauScheduler::PlateauScheduler(double initial_lr, MetricMode mode, double factor, int patience, double min_lr,
                                   double threshold)
    : lr_(initial_lr), mode_(mode), factor_(factor), patience_(patience), min_lr_(min_lr), threshold_(threshold) {
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
    if (patience < 1) throw ConfigError("plateau patience must be at least 1");
    if (!(min_lr >= 0.0)) throw ConfigError("min_lr must be non-negative");
    if (!(threshold >= 0.0)) throw ConfigError("plateau threshold must be non-negative");
    if (!(initial_lr > 0.0)) throw ConfigError("lr must be positive");
    lr_ = std::max(initial_lr, min_lr);
}

bool PlateauScheduler::is_improvement(double metric) const {
    if (!has_best_) return true;
    if (mode_ == MetricMode::min) return metric < best_ - threshold_ * std::abs(best_);
    return metric > best_ + threshold_ * std::abs(best_);
}

double PlateauScheduler::step(double metric) {
    if (!std::isfinite(metric)) throw NonFiniteError("scheduler metric is not finite");
    if (is_improvement(metric)) {
        best_ = metric;
        has_best_ = true;
        counter_ = 0;
        return lr_;
    }
    ++counter_;
    if (counter_ >= patience_) {
        lr_ = std::max(lr_ * factor_, min_lr_);
        counter_ = 0;
    }
    return lr_;
}

}  // namespace xrf
