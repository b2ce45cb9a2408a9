#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xrf/augment.h"
#include "xrf/dataset.h"
#include "xrf/kvconfig.h"
#include "xrf/losses.h"
#include "xrf/models.h"
#include "xrf/optim.h"
#include "xrf/scheduler.h"
#include "xrf/synth.h"

namespace xrf {

std::string_view loss_name(LossKind kind);
/// Throws ConfigError naming the `loss` field for unknown names.
LossKind parse_loss(std::string_view name);
/// The loss each family is trained with: logits heads use bce_logits,
/// probability heads use bce.
LossKind paired_loss(Family family);

enum class Monitor { val_auc, val_loss };

/// Everything a training run needs, read from a flat key=value file.
struct TrainConfig {
    ModelSpec model;
    std::int64_t epochs = 10;
    std::int64_t batch = 16;
    OptimizerConfig optimizer;
    LossKind loss = LossKind::bce;
    Monitor monitor = Monitor::val_loss;
    double plateau_factor = 0.5;
    int plateau_patience = 2;
    double min_lr = 1e-6;
    double plateau_threshold = 1e-4;
    bool augment = true;
    double hflip_prob = 0.5;
    double rotation_degrees = 10.0;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    int workers = 1;
    /// Stop after this many optimizer steps; 0 means no limit.
    std::int64_t max_steps = 0;
    /// When false the seconds column is written as 0.
    bool report_timing = true;
    SynthConfig synth;

    std::uint64_t seed() const { return model.seed; }
    MetricMode monitor_mode() const { return monitor == Monitor::val_auc ? MetricMode::max : MetricMode::min; }
    AugmentationConfig augmentation() const;

    /// Family defaults for optimizer, learning rate, loss and monitor.
    static TrainConfig defaults_for(Family family);
    /// Family defaults overlaid with the keys present in `kv`. Unknown keys
    /// and malformed values throw ConfigError naming the field.
    static TrainConfig from_kv(const KeyValueConfig& kv);
    /// Complete resolved configuration; from_kv(to_kv()) reproduces *this.
    KeyValueConfig to_kv() const;
    /// Range checks plus the family/loss pairing.
    void validate() const;
};

struct EpochRecord {
    std::int64_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double val_auc = 0.0;
    double lr = 0.0;  // rate used during the epoch
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::int64_t best_epoch = 0;
    double best_metric = 0.0;
    std::int64_t steps = 0;
};

/// `epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds`.
void write_report_csv(const std::filesystem::path& path, const TrainReport& report);

struct StepResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct Validation {
    double loss = 0.0;
    double accuracy = 0.0;
    double macro_auc = 0.0;
};

class Trainer {
 public:
    /// Returning false from the callback stops training after that epoch.
    using EpochCallback = std::function<bool(const EpochRecord&)>;

    Trainer(Model& model, TrainConfig config);

    const TrainConfig& config() const { return config_; }
    OptimizerState& optimizer() { return optimizer_; }
    PlateauScheduler& scheduler() { return scheduler_; }
    std::int64_t steps() const { return steps_; }

    /// Forward, loss, backward and one optimizer update on a batch.
    /// Throws DivergenceError when the loss is not finite.
    StepResult train_step(const Tensor& images, const Tensor& targets);

    /// Loss on a batch in evaluation mode, without updating anything.
    double eval_loss(const Tensor& images, const Tensor& targets);

    Validation validate(const Dataset& val);

    /// Runs the configured epochs. Each epoch shuffles, augments, trains,
    /// validates and steps the scheduler. When `checkpoint` is given the best
    /// model by the monitored metric is saved there; on return the model
    /// holds the best weights. Throws DataError for empty splits and
    /// DivergenceError (best checkpoint kept) when the loss goes non-finite.
    TrainReport fit(const Dataset& train, const Dataset& val,
                    const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                    const EpochCallback& on_epoch = {});

    /// Training batches of one epoch as index lists: a seeded shuffle cut into
    /// `batch`-sized pieces, with a trailing single sample folded into the
    /// previous batch.
    std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::int64_t epoch) const;

    /// Loads (and, if enabled, augments) the samples of one batch.
    std::vector<LabeledSample> prepare_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                                             std::int64_t epoch) const;

 private:
    Tensor compute_loss(const Tensor& outputs, const Tensor& targets) const;

    Model& model_;
    TrainConfig config_;
    OptimizerState optimizer_;
    PlateauScheduler scheduler_;
    std::mt19937_64 dropout_rng_;
    std::int64_t steps_ = 0;
};

}  // namespace xrf
