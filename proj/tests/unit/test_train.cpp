#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/desk.h"
#include "../support/gradcheck.h"
#include "xrf/checkpoint.h"
#include "xrf/error.h"
#include "xrf/losses.h"
#include "xrf/ops.h"
#include "xrf/optim.h"
#include "xrf/rng.h"
#include "xrf/scheduler.h"
#include "xrf/synth.h"
#include "xrf/trainer.h"

using namespace xrf;
using xrf::testing::desk_spec;
using xrf::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

double bce_value(double p, double y) { return bce_loss(Tensor::scalar(p), Tensor::scalar(y)).item(); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

NamedTensor param(std::vector<double> v) {
    const auto n = static_cast<std::int64_t>(v.size());
    return {"w", Tensor::from({n}, std::move(v), true)};
}

void set_grad(Tensor& t, std::vector<double> g) {
    auto dst = t.mutable_grad();
    std::copy(g.begin(), g.end(), dst.begin());
}

}  // namespace

TEST(Losses, BceExamples) {
    EXPECT_NEAR(bce_value(0.5, 1.0), std::log(2.0), 1e-15);
    EXPECT_LT(bce_value(1.0, 1.0), 1e-11);
    EXPECT_LT(bce_value(0.0, 0.0), 1e-11);
    auto p = Tensor::scalar(0.5, true);
    bce_loss(p, Tensor::scalar(1.0)).backward();
    EXPECT_NEAR(p.grad()[0], -2.0, 1e-12);
    EXPECT_THROW(bce_loss(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
}

TEST(Losses, LogitExamples) {
    EXPECT_NEAR(bce_with_logits(Tensor::scalar(0.0), Tensor::scalar(1.0)).item(), std::log(2.0), 1e-15);
    const double big = bce_with_logits(Tensor::scalar(100.0), Tensor::scalar(1.0)).item();
    EXPECT_TRUE(std::isfinite(big));
    EXPECT_LT(big, 1e-40);
    const double neg = bce_with_logits(Tensor::scalar(-100.0), Tensor::scalar(0.0)).item();
    EXPECT_LT(neg, 1e-40);
    EXPECT_NEAR(bce_with_logits(Tensor::scalar(-100.0), Tensor::scalar(1.0)).item(), 100.0, 1e-12);
}

TEST(Losses, LogitFormMatchesProbabilityForm) {
    auto rng = make_rng(2, "equiv");
    for (int trial = 0; trial < 200; ++trial) {
        auto z = random_tensor({4, 15}, rng, -10.0, 10.0, false);
        auto y = random_tensor({4, 15}, rng, 0.0, 1.0, false);
        for (auto& v : y.mutable_data()) v = v < 0.5 ? 0.0 : 1.0;
        EXPECT_NEAR(bce_with_logits(z, y).item(), bce_loss(sigmoid(z), y).item(), 1e-9);
    }
}

TEST(Optimizer, SgdStep) {
    TensorList ps{param({1.0, 1.0})};
    set_grad(ps[0].tensor, {2.0, -1.0});
    OptimizerState opt({OptimizerKind::sgd, 0.1, 0.0});
    opt.step(ps);
    EXPECT_NEAR(ps[0].tensor.data()[0], 0.8, 1e-15);
    EXPECT_NEAR(ps[0].tensor.data()[1], 1.1, 1e-15);
}

TEST(Optimizer, SgdMomentumAccumulates) {
    TensorList ps{param({0.0})};
    OptimizerState opt({OptimizerKind::sgd, 0.1, 0.9});
    set_grad(ps[0].tensor, {1.0});
    opt.step(ps);  // v = 1
    opt.step(ps);  // v = 1.9
    EXPECT_NEAR(ps[0].tensor.data()[0], -0.1 - 0.19, 1e-15);
}

TEST(Optimizer, AdamFirstStepIsLearningRate) {
    TensorList ps{param({0.5, -2.0, 3.0})};
    set_grad(ps[0].tensor, {1.0, 1.0, 1.0});
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    cfg.lr = 1e-3;
    OptimizerState opt(cfg);
    opt.step(ps);
    EXPECT_NEAR(ps[0].tensor.data()[0], 0.5 - 1e-3, 1e-10);
    EXPECT_NEAR(ps[0].tensor.data()[1], -2.0 - 1e-3, 1e-10);
}

TEST(Optimizer, AdamwDecoupledDecay) {
    TensorList ps{param({2.0, -4.0})};
    set_grad(ps[0].tensor, {0.0, 0.0});
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adamw;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    OptimizerState opt(cfg);
    opt.step(ps);
    EXPECT_NEAR(ps[0].tensor.data()[0], 2.0 * 0.999, 1e-15);
    EXPECT_NEAR(ps[0].tensor.data()[1], -4.0 * 0.999, 1e-15);
}

TEST(Optimizer, ZeroLearningRate) {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw}) {
        TensorList ps{param({1.5, -0.5})};
        set_grad(ps[0].tensor, {0.3, -0.7});
        OptimizerConfig cfg;
        cfg.kind = kind;
        cfg.lr = 0.0;
        cfg.weight_decay = 0.01;
        OptimizerState opt(cfg);
        opt.step(ps);
        EXPECT_EQ(ps[0].tensor.data()[0], 1.5);
        EXPECT_EQ(ps[0].tensor.data()[1], -0.5);
    }
}

TEST(Optimizer, NanGradientNamesParameter) {
    TensorList ps{{"stage2.block0.conv1.weight", Tensor::from({2}, {1.0, 1.0}, true)}};
    set_grad(ps[0].tensor, {0.0, std::nan("")});
    OptimizerState opt({OptimizerKind::adam, 1e-3});
    try {
        opt.step(ps);
        FAIL();
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("stage2.block0.conv1.weight"), std::string::npos);
    }
    EXPECT_EQ(ps[0].tensor.data()[0], 1.0);
    EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

TEST(Scheduler, HalvesAfterStagnation) {
    PlateauScheduler s(0.1, MetricMode::min, 0.5, 2);
    EXPECT_EQ(s.step(1.0), 0.1);
    EXPECT_EQ(s.step(1.0), 0.1);
    EXPECT_EQ(s.step(1.0), 0.05);
}

TEST(Scheduler, ImprovingMetricKeepsRate) {
    PlateauScheduler lo(0.1, MetricMode::min);
    PlateauScheduler hi(0.1, MetricMode::max);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(lo.step(1.0 - 0.01 * i), 0.1);
        EXPECT_EQ(hi.step(0.5 + 0.01 * i), 0.1);
    }
}

TEST(Scheduler, ThresholdIsRelative) {
    PlateauScheduler s(0.1, MetricMode::min, 0.5, 1, 0.0, 1e-4);
    s.step(1.0);
    EXPECT_EQ(s.step(0.99995), 0.05);  // below the relative threshold
    EXPECT_EQ(s.step(0.9), 0.05);
}

TEST(Scheduler, NonIncreasingAndFloored) {
    auto rng = make_rng(3, "sched");
    for (int trial = 0; trial < 50; ++trial) {
        PlateauScheduler s(1e-2, trial % 2 ? MetricMode::max : MetricMode::min, uniform(rng, 0.1, 0.9),
                           1 + static_cast<int>(uniform_index(rng, 3)), 1e-4);
        double prev = s.lr();
        for (int i = 0; i < 60; ++i) {
            const double lr = s.step(uniform01(rng));
            EXPECT_LE(lr, prev);
            EXPECT_GE(lr, 1e-4);
            prev = lr;
        }
    }
    PlateauScheduler s(0.1, MetricMode::min);
    EXPECT_THROW(s.step(std::nan("")), NonFiniteError);
    EXPECT_THROW(PlateauScheduler(0.1, MetricMode::min, 1.5), ConfigError);
}

TEST(TrainConfig, FamilyDefaults) {
    const auto v1 = TrainConfig::defaults_for(Family::vit_v1_32);
    EXPECT_EQ(v1.optimizer.kind, OptimizerKind::adamw);
    EXPECT_EQ(v1.monitor, Monitor::val_auc);
    const auto v2 = TrainConfig::defaults_for(Family::vit_v2_32);
    EXPECT_EQ(v2.optimizer.kind, OptimizerKind::sgd);
    EXPECT_EQ(v2.optimizer.lr, 1e-2);
    const auto hy = TrainConfig::defaults_for(Family::vit_resnet_16);
    EXPECT_EQ(hy.loss, LossKind::bce_logits);
    EXPECT_EQ(hy.monitor, Monitor::val_loss);
    EXPECT_EQ(hy.epochs, 10);
    EXPECT_EQ(hy.batch, 16);
}

TEST(TrainConfig, PairingEnforced) {
    auto kv = KeyValueConfig::parse("family=vit_resnet_16\nloss=bce\n");
    try {
        TrainConfig::from_kv(kv);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("pair"), std::string::npos);
    }
    EXPECT_THROW(TrainConfig::from_kv(KeyValueConfig::parse("family=cnn\nloss=bce_logits\n")), ConfigError);
    EXPECT_THROW(TrainConfig::from_kv(KeyValueConfig::parse("family=vgg\n")), ConfigError);
    EXPECT_THROW(TrainConfig::from_kv(KeyValueConfig::parse("family=cnn\nepoch=3\n")), ConfigError);
    EXPECT_THROW(TrainConfig::from_kv(KeyValueConfig::parse("family=cnn\nbatch=x\n")), ConfigError);
}

TEST(TrainConfig, ResolvedFormReproduces) {
    auto kv = KeyValueConfig::parse("family=vit_v2_32\nheight=64\nwidth=64\nlr=0.05\nresnet_blocks=1,1,1,1\n");
    const auto cfg = TrainConfig::from_kv(kv);
    const auto again = TrainConfig::from_kv(cfg.to_kv());
    EXPECT_EQ(again.to_kv().dump(), cfg.to_kv().dump());
    EXPECT_EQ(again.optimizer.lr, 0.05);
    EXPECT_EQ(again.model, cfg.model);
}

TEST(Trainer, BatchingMergesTrailingSingleton) {
    auto cfg = TrainConfig::defaults_for(Family::cnn);
    cfg.model = desk_spec(Family::cnn);
    Model m = build_model(cfg.model);
    Trainer t(m, cfg);
    const auto b = t.epoch_batches(33, 1);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[1].size(), 17u);
    std::vector<bool> seen(33, false);
    for (const auto& batch : b)
        for (auto i : batch) seen[i] = true;
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));
    EXPECT_NE(t.epoch_batches(33, 1), t.epoch_batches(33, 2));
    EXPECT_EQ(t.epoch_batches(33, 1), t.epoch_batches(33, 1));
}

TEST(Trainer, ParallelBatchPreparationMatchesSerial) {
    auto cfg = TrainConfig::defaults_for(Family::cnn);
    cfg.model = desk_spec(Family::cnn);
    const auto data = Dataset::from_samples(synthesize_dataset(12, 1));
    Model m = build_model(cfg.model);
    Trainer serial(m, cfg);
    cfg.workers = 3;
    Trainer parallel(m, cfg);
    std::vector<std::size_t> idx{0, 5, 3, 11, 7, 2, 9};
    const auto a = serial.prepare_batch(data, idx, 2), b = parallel.prepare_batch(data, idx, 2);
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(a[i].image, b[i].image);
}

TEST(Trainer, FitRecordsEpochsAndIsDeterministic) {
    const fs::path dir = fs::temp_directory_path() / "xrf_unit" / "fit";
    fs::create_directories(dir);
    auto cfg = TrainConfig::defaults_for(Family::cnn);
    cfg.model = desk_spec(Family::cnn, 32);
    cfg.epochs = 3;
    cfg.report_timing = false;
    SynthConfig sc;
    sc.n = 80;
    sc.height = 32;
    sc.width = 32;
    const auto all = Dataset::from_samples(synthesize_dataset(sc));
    const auto train = all.split(Split::train, 0.25, 0.0), val = all.split(Split::val, 0.25, 0.0);
    std::string first;
    for (int run = 0; run < 2; ++run) {
        Model m = build_model(cfg.model);
        Trainer t(m, cfg);
        const auto report = t.fit(train, val, dir / "best.ckpt");
        ASSERT_EQ(report.epochs.size(), 3u);
        EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
        EXPECT_GE(report.best_epoch, 1);
        write_report_csv(dir / "report.csv", report);
        const auto text = read_file(dir / "report.csv");
        EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds");
        if (run == 0) first = text;
        else EXPECT_EQ(text, first);
        Model best = load_checkpoint(dir / "best.ckpt");
        EXPECT_EQ(best.snapshot(), m.snapshot());
    }
}

TEST(Trainer, EmptySplitsRejected) {
    auto cfg = TrainConfig::defaults_for(Family::cnn);
    cfg.model = desk_spec(Family::cnn, 32);
    Model m = build_model(cfg.model);
    Trainer t(m, cfg);
    SynthConfig sc;
    sc.n = 4;
    sc.height = sc.width = 32;
    const auto d = Dataset::from_samples(synthesize_dataset(sc));
    EXPECT_THROW(t.fit(d, Dataset()), DataError);
    EXPECT_THROW(t.fit(Dataset(), d), DataError);
}

TEST(Trainer, DivergenceAborts) {
    auto cfg = TrainConfig::defaults_for(Family::cnn);
    cfg.model = desk_spec(Family::cnn, 32);
    Model m = build_model(cfg.model);
    for (auto& p : m.parameters())
        if (p.name == "dense2.bias") p.tensor.mutable_data()[0] = std::nan("");
    Trainer t(m, cfg);
    SynthConfig sc;
    sc.n = 4;
    sc.height = sc.width = 32;
    const auto samples = synthesize_dataset(sc);
    EXPECT_THROW(t.train_step(stack_images(samples), stack_labels(samples)), DivergenceError);
}

TEST(Trainer, MaxStepsStopsEarly) {
    auto cfg = TrainConfig::defaults_for(Family::vit_v1_32);
    cfg.model = desk_spec(Family::vit_v1_32, 32);
    cfg.epochs = 5;
    cfg.max_steps = 3;
    SynthConfig sc;
    sc.n = 64;
    sc.height = sc.width = 32;
    const auto d = Dataset::from_samples(synthesize_dataset(sc));
    Model m = build_model(cfg.model);
    Trainer t(m, cfg);
    const auto report = t.fit(d, d);
    EXPECT_EQ(report.steps, 3);
    EXPECT_EQ(report.epochs.size(), 1u);
}
