#pragma once

#include <cstdint>
#include <string_view>

namespace xrf {

enum class MetricMode { min, max };

std::string_view metric_mode_name(MetricMode mode);
MetricMode parse_metric_mode(std::string_view name);

/// Reduce-on-plateau learning-rate control.
///
/// A metric improves when it beats the best seen by more than a relative
/// threshold. Each non-improving epoch increments a counter; once the counter
/// reaches `patience` the rate is multiplied by `factor` (never below
/// `min_lr`) and the counter resets.
class PlateauScheduler {
 public:
    PlateauScheduler(double initial_lr, MetricMode mode, double factor = 0.5, int patience = 2,
                     double min_lr = 1e-6, double threshold = 1e-4);

    /// Records one epoch's metric and returns the learning rate to use next.
    double step(double metric);

    double lr() const { return lr_; }
    double best() const { return best_; }
    bool has_best() const { return has_best_; }
    int epochs_since_improvement() const { return counter_; }
    MetricMode mode() const { return mode_; }
    double factor() const { return factor_; }
    int patience() const { return patience_; }
    double min_lr() const { return min_lr_; }

    /// True when `metric` counts as an improvement over the current best.
    bool is_improvement(double metric) const;

 private:
    double lr_;
    MetricMode mode_;
    double factor_;
    int patience_;
    double min_lr_;
    double threshold_;
    double best_ = 0.0;
    bool has_best_ = false;
    int counter_ = 0;
};

}  // namespace xrf
