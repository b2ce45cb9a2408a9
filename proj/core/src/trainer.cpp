#include "xrf/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "xrf/checkpoint.h"
#include "xrf/error.h"
#include "xrf/metrics.h"
#include "xrf/ops.h"
#include "xrf/rng.h"

namespace xrf {

std::string_view loss_name(LossKind kind) { return kind == LossKind::bce ? "bce" : "bce_logits"; }

LossKind parse_loss(std::string_view name) {
    if (name == "bce") return LossKind::bce;
    if (name == "bce_logits") return LossKind::bce_logits;
    throw ConfigError("loss: unknown value '" + std::string(name) + "' (expected bce or bce_logits)");
}

LossKind paired_loss(Family family) { return family_emits_logits(family) ? LossKind::bce_logits : LossKind::bce; }

namespace {

std::string_view monitor_name(Monitor m) { return m == Monitor::val_auc ? "val_auc" : "val_loss"; }

Monitor parse_monitor(std::string_view name) {
    if (name == "val_auc") return Monitor::val_auc;
    if (name == "val_loss") return Monitor::val_loss;
    throw ConfigError("monitor: unknown value '" + std::string(name) + "' (expected val_auc or val_loss)");
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "family", "height", "width", "channels", "num_classes", "vit_dim", "vit_depth", "vit_heads",
        "vit_mlp_ratio", "vit_dropout", "cnn_filters1", "cnn_filters2", "cnn_dense", "resnet_width",
        "resnet_blocks", "seed", "epochs", "batch", "lr", "optimizer", "momentum", "beta1", "beta2", "adam_eps",
        "weight_decay", "loss", "monitor", "plateau_factor", "plateau_patience", "min_lr", "plateau_threshold",
        "augment", "hflip_prob", "rotation_degrees", "val_fraction", "test_fraction", "workers", "max_steps",
        "report_timing", "synth_n", "synth_height", "synth_width", "synth_no_finding_rate", "synth_max_diseases",
        "synth_noise", "synth_intensity"};
    return keys;
}

}  // namespace

AugmentationConfig TrainConfig::augmentation() const {
    AugmentationConfig a;
    a.height = model.height;
    a.width = model.width;
    a.hflip_prob = hflip_prob;
    a.rotation_max_degrees = rotation_degrees;
    a.seed = seed();
    return a;
}

TrainConfig TrainConfig::defaults_for(Family family) {
    TrainConfig c;
    c.model.family = family;
    c.loss = paired_loss(family);
    switch (family) {
        case Family::vit_v1_32:
            c.optimizer.kind = OptimizerKind::adamw;
            c.optimizer.lr = 1e-3;
            c.optimizer.weight_decay = 0.01;
            c.monitor = Monitor::val_auc;
            break;
        case Family::vit_v2_32:
            c.optimizer.kind = OptimizerKind::sgd;
            c.optimizer.lr = 1e-2;
            c.optimizer.momentum = 0.9;
            c.monitor = Monitor::val_auc;
            break;
        case Family::vit_resnet_16:
        case Family::cnn:
        case Family::resnet:
            c.optimizer.kind = OptimizerKind::adam;
            c.optimizer.lr = 1e-3;
            c.monitor = Monitor::val_loss;
            break;
    }
    return c;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
    for (const auto& [key, value] : kv.entries()) {
        if (!known_keys().contains(key)) throw ConfigError("unknown configuration field '" + key + "'");
    }
    const ModelSpec spec = ModelSpec::read(kv);
    TrainConfig c = defaults_for(spec.family);
    c.model = spec;
    c.epochs = kv.get_int("epochs", c.epochs);
    c.batch = kv.get_int("batch", c.batch);
    if (auto v = kv.find("optimizer")) {
        const auto kind = parse_optimizer(*v);
        if (kind != c.optimizer.kind) {
            // Switching optimizer family picks that optimizer's default rate.
            c.optimizer.kind = kind;
            c.optimizer.lr = kind == OptimizerKind::sgd ? 1e-2 : 1e-3;
            c.optimizer.weight_decay = kind == OptimizerKind::adamw ? 0.01 : 0.0;
        }
    }
    c.optimizer.lr = kv.get_double("lr", c.optimizer.lr);
    c.optimizer.momentum = kv.get_double("momentum", c.optimizer.momentum);
    c.optimizer.beta1 = kv.get_double("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = kv.get_double("beta2", c.optimizer.beta2);
    c.optimizer.eps = kv.get_double("adam_eps", c.optimizer.eps);
    c.optimizer.weight_decay = kv.get_double("weight_decay", c.optimizer.weight_decay);
    if (auto v = kv.find("loss")) c.loss = parse_loss(*v);
    if (auto v = kv.find("monitor")) c.monitor = parse_monitor(*v);
    c.plateau_factor = kv.get_double("plateau_factor", c.plateau_factor);
    c.plateau_patience = static_cast<int>(kv.get_int("plateau_patience", c.plateau_patience));
    c.min_lr = kv.get_double("min_lr", c.min_lr);
    c.plateau_threshold = kv.get_double("plateau_threshold", c.plateau_threshold);
    c.augment = kv.get_bool("augment", c.augment);
    c.hflip_prob = kv.get_double("hflip_prob", c.hflip_prob);
    c.rotation_degrees = kv.get_double("rotation_degrees", c.rotation_degrees);
    c.val_fraction = kv.get_double("val_fraction", c.val_fraction);
    c.test_fraction = kv.get_double("test_fraction", c.test_fraction);
    c.workers = static_cast<int>(kv.get_int("workers", c.workers));
    c.max_steps = kv.get_int("max_steps", c.max_steps);
    c.report_timing = kv.get_bool("report_timing", c.report_timing);
    const auto synth_n = kv.get_int("synth_n", static_cast<std::int64_t>(c.synth.n));
    if (synth_n < 1) throw ConfigError("field 'synth_n' must be at least 1");
    c.synth.n = static_cast<std::size_t>(synth_n);
    c.synth.height = kv.get_int("synth_height", c.synth.height);
    c.synth.width = kv.get_int("synth_width", c.synth.width);
    c.synth.no_finding_rate = kv.get_double("synth_no_finding_rate", c.synth.no_finding_rate);
    c.synth.max_diseases = static_cast<int>(kv.get_int("synth_max_diseases", c.synth.max_diseases));
    c.synth.noise = kv.get_double("synth_noise", c.synth.noise);
    c.synth.disc_intensity = kv.get_double("synth_intensity", c.synth.disc_intensity);
    c.synth.seed = c.seed();
    c.validate();
    return c;
}

KeyValueConfig TrainConfig::to_kv() const {
    KeyValueConfig kv;
    model.write(kv);
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch", std::to_string(batch));
    kv.set("optimizer", std::string(optimizer_name(optimizer.kind)));
    kv.set("lr", format_double(optimizer.lr));
    kv.set("momentum", format_double(optimizer.momentum));
    kv.set("beta1", format_double(optimizer.beta1));
    kv.set("beta2", format_double(optimizer.beta2));
    kv.set("adam_eps", format_double(optimizer.eps));
    kv.set("weight_decay", format_double(optimizer.weight_decay));
    kv.set("loss", std::string(loss_name(loss)));
    kv.set("monitor", std::string(monitor_name(monitor)));
    kv.set("plateau_factor", format_double(plateau_factor));
    kv.set("plateau_patience", std::to_string(plateau_patience));
    kv.set("min_lr", format_double(min_lr));
    kv.set("plateau_threshold", format_double(plateau_threshold));
    kv.set("augment", augment ? "true" : "false");
    kv.set("hflip_prob", format_double(hflip_prob));
    kv.set("rotation_degrees", format_double(rotation_degrees));
    kv.set("val_fraction", format_double(val_fraction));
    kv.set("test_fraction", format_double(test_fraction));
    kv.set("workers", std::to_string(workers));
    kv.set("max_steps", std::to_string(max_steps));
    kv.set("report_timing", report_timing ? "true" : "false");
    kv.set("synth_n", std::to_string(synth.n));
    kv.set("synth_height", std::to_string(synth.height));
    kv.set("synth_width", std::to_string(synth.width));
    kv.set("synth_no_finding_rate", format_double(synth.no_finding_rate));
    kv.set("synth_max_diseases", std::to_string(synth.max_diseases));
    kv.set("synth_noise", format_double(synth.noise));
    kv.set("synth_intensity", format_double(synth.disc_intensity));
    return kv;
}

void TrainConfig::validate() const {
    model.validate();
    optimizer.validate();
    if (!(optimizer.lr > 0.0)) throw ConfigError("field 'lr' must be positive");
    if (epochs < 1) throw ConfigError("field 'epochs' must be at least 1");
    if (batch < 2) throw ConfigError("field 'batch' must be at least 2");
    if (workers < 1) throw ConfigError("field 'workers' must be at least 1");
    if (max_steps < 0) throw ConfigError("field 'max_steps' must be non-negative");
    if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0)) {
        throw ConfigError("fields 'val_fraction' and 'test_fraction' must be non-negative and sum below 1");
    }
    const LossKind required = paired_loss(model.family);
    if (loss != required) {
        throw ConfigError("loss: '" + std::string(loss_name(loss)) + "' is not paired with family " +
                          std::string(family_name(model.family)) + " (required pairing: " +
                          std::string(loss_name(required)) + ")");
    }
    PlateauScheduler(optimizer.lr, monitor_mode(), plateau_factor, plateau_patience, min_lr, plateau_threshold);
    augmentation().validate();
    synth.validate();
}

void write_report_csv(const std::filesystem::path& path, const TrainReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds\n";
    for (const auto& e : report.epochs) {
        out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_acc) << ','
            << format_double(e.val_loss) << ',' << format_double(e.val_acc) << ',' << format_double(e.lr) << ','
            << format_double(e.seconds) << '\n';
    }
}

Trainer::Trainer(Model& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      optimizer_((config_.validate(), config_.optimizer)),
      scheduler_(config_.optimizer.lr, config_.monitor_mode(), config_.plateau_factor, config_.plateau_patience,
                 config_.min_lr, config_.plateau_threshold),
      dropout_rng_(make_rng(config_.seed(), "dropout")) {
    if (model.family() != config_.model.family) throw ConfigError("model family differs from the training config");
}

Tensor Trainer::compute_loss(const Tensor& outputs, const Tensor& targets) const {
    return config_.loss == LossKind::bce_logits ? bce_with_logits(outputs, targets) : bce_loss(outputs, targets);
}

StepResult Trainer::train_step(const Tensor& images, const Tensor& targets) {
    model_.zero_grad();
    ForwardContext ctx;
    ctx.training = true;
    ctx.rng = &dropout_rng_;
    Tensor outputs;
    Tensor loss;
    try {
        outputs = model_.forward(images, ctx);
        loss = compute_loss(outputs, targets);
    } catch (const NonFiniteError& e) {
        throw DivergenceError(std::string("training diverged: ") + e.what());
    }
    const double value = loss.item();
    if (!std::isfinite(value)) throw DivergenceError("training diverged: loss is not finite");
    loss.backward();
    optimizer_.step(model_.parameters());
    ++steps_;
    StepResult r;
    r.loss = value;
    const Tensor probs = config_.loss == LossKind::bce_logits ? sigmoid(outputs.detach()) : outputs.detach();
    r.accuracy = binary_accuracy(probs, targets);
    return r;
}

double Trainer::eval_loss(const Tensor& images, const Tensor& targets) {
    NoGradGuard no_grad;
    ForwardContext ctx;
    return compute_loss(model_.forward(images, ctx), targets).item();
}

Validation Trainer::validate(const Dataset& val) {
    const auto pred = predict_dataset(model_, val, config_.batch);
    const Shape shape{static_cast<std::int64_t>(pred.n), static_cast<std::int64_t>(pred.k)};
    Validation v;
    v.loss = compute_loss(Tensor::from(shape, pred.outputs), Tensor::from(shape, pred.targets)).item();
    const auto report = evaluate_scores(pred.probs, pred.targets, pred.k);
    v.accuracy = report.accuracy;
    v.macro_auc = report.macro_auc;
    return v;
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t n, std::int64_t epoch) const {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(config_.seed(), "shuffle", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    std::vector<std::vector<std::size_t>> batches;
    const auto b = static_cast<std::size_t>(config_.batch);
    for (std::size_t start = 0; start < n; start += b) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + b)));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

std::vector<LabeledSample> Trainer::prepare_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                                                  std::int64_t epoch) const {
    std::vector<LabeledSample> samples(indices.size());
    const auto aug = config_.augmentation();
    const auto epoch_seed = derive_seed(config_.seed(), "augment", static_cast<std::uint64_t>(epoch));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            auto s = data.load(indices[j], config_.model.height, config_.model.width);
            if (config_.augment) {
                auto rng = make_rng(epoch_seed, "sample", indices[j]);
                s = augment(s, aug, rng);
            }
            samples[j] = std::move(s);
        }
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config_.workers), indices.size());
    if (workers <= 1) {
        work(0, indices.size());
        return samples;
    }
    std::vector<std::thread> threads;
    const std::size_t chunk = (indices.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const auto begin = w * chunk;
        const auto end = std::min(indices.size(), begin + chunk);
        if (begin < end) threads.emplace_back(work, begin, end);
    }
    for (auto& t : threads) t.join();
    return samples;
}

TrainReport Trainer::fit(const Dataset& train, const Dataset& val,
                         const std::optional<std::filesystem::path>& checkpoint, const EpochCallback& on_epoch) {
    if (train.size() < 2) throw DataError("training split needs at least 2 samples");
    if (val.empty()) throw DataError("validation split is empty");
    TrainReport report;
    std::optional<ModelState> best_state;
    const MetricMode mode = config_.monitor_mode();
    bool stop = false;
    for (std::int64_t epoch = 1; epoch <= config_.epochs && !stop; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = optimizer_.lr();
        double loss_sum = 0.0, acc_sum = 0.0;
        std::size_t seen = 0;
        for (const auto& batch : epoch_batches(train.size(), epoch)) {
            const auto samples = prepare_batch(train, batch, epoch);
            StepResult step;
            try {
                step = train_step(stack_images(samples), stack_labels(samples));
            } catch (const DivergenceError& e) {
                if (best_state) model_.restore(*best_state);
                std::string msg = std::string(e.what()) + " at epoch " + std::to_string(epoch);
                if (checkpoint && best_state) msg += "; best checkpoint kept at " + checkpoint->string();
                throw DivergenceError(msg);
            }
            loss_sum += step.loss * static_cast<double>(batch.size());
            acc_sum += step.accuracy * static_cast<double>(batch.size());
            seen += batch.size();
            if (config_.max_steps > 0 && steps_ >= config_.max_steps) {
                stop = true;
                break;
            }
        }
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.train_acc = acc_sum / static_cast<double>(seen);
        const Validation v = validate(val);
        rec.val_loss = v.loss;
        rec.val_acc = v.accuracy;
        rec.val_auc = v.macro_auc;
        const double metric = config_.monitor == Monitor::val_auc ? v.macro_auc : v.loss;
        if (!std::isfinite(metric)) {
            if (config_.monitor == Monitor::val_auc) {
                throw DataError("validation split has no class with both positive and negative samples");
            }
            if (best_state) model_.restore(*best_state);
            throw DivergenceError("validation loss is not finite at epoch " + std::to_string(epoch));
        }
        const bool better = !best_state || (mode == MetricMode::max ? metric > report.best_metric
                                                                    : metric < report.best_metric);
        if (better) {
            best_state = model_.snapshot();
            report.best_epoch = epoch;
            report.best_metric = metric;
            if (checkpoint) save_checkpoint(model_, *checkpoint);
        }
        optimizer_.set_lr(scheduler_.step(metric));
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        rec.seconds = config_.report_timing ? elapsed : 0.0;
        report.epochs.push_back(rec);
        if (on_epoch && !on_epoch(rec)) stop = true;
    }
    report.steps = steps_;
    if (best_state) model_.restore(*best_state);
    return report;
}

}  // namespace xrf
