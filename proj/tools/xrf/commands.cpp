#include "commands.h"

#include <cstdlib>
#include <iostream>

#include "xrf/attnviz.h"
#include "xrf/checkpoint.h"
#include "xrf/error.h"
#include "xrf/metrics.h"
#include "xrf/synth.h"
#include "xrf/trainer.h"

namespace xrf::cli {

namespace {

namespace fs = std::filesystem;

fs::path resolve_out(const RunConfig& run) {
    fs::path out;
    if (run.out_dir) {
        out = *run.out_dir;
    } else if (const char* env = std::getenv("XRF_OUT"); env != nullptr && *env != '\0') {
        out = env;
    } else {
        throw ConfigError("no output directory: pass --out or set XRF_OUT");
    }
    fs::create_directories(out);
    return out;
}

KeyValueConfig base_config(const RunConfig& run, const std::optional<fs::path>& fallback = std::nullopt) {
    KeyValueConfig kv;
    if (run.config_path) {
        kv = KeyValueConfig::load(*run.config_path);
    } else if (fallback && fs::exists(*fallback)) {
        kv = KeyValueConfig::load(*fallback);
    }
    for (const auto& o : run.overrides) kv.apply_override(o);
    if (run.seed) kv.set("seed", std::to_string(*run.seed));
    return kv;
}

struct Splits {
    Dataset all;
    Dataset train;
    Dataset val;
    Dataset test;
};

Splits load_splits(const std::string& data, const TrainConfig& cfg) {
    Splits s;
    std::optional<SplitManifest> manifest;
    if (data == "synth") {
        s.all = Dataset::from_samples(synthesize_dataset(cfg.synth));
    } else {
        const fs::path dir(data);
        if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
        s.all = Dataset::from_directory(dir);
        if (fs::exists(dir / "split.tsv")) manifest = read_split_manifest(dir / "split.tsv");
    }
    const SplitManifest* m = manifest ? &*manifest : nullptr;
    s.train = s.all.split(Split::train, cfg.val_fraction, cfg.test_fraction, m);
    s.val = s.all.split(Split::val, cfg.val_fraction, cfg.test_fraction, m);
    s.test = s.all.split(Split::test, cfg.val_fraction, cfg.test_fraction, m);
    return s;
}

const Dataset& pick_split(const Splits& s, const std::string& name) {
    switch (parse_split(name)) {
        case Split::train:
            return s.train;
        case Split::val:
            return s.val;
        case Split::test:
            return s.test;
    }
    return s.test;
}

// Loads the checkpoint and the configuration describing its data. The config
// is the explicit --config file, else config.resolved beside the checkpoint.
struct Loaded {
    TrainConfig cfg;
    Model model;
};

Loaded load_run(const RunConfig& run, const fs::path& out) {
    const fs::path ckpt = run.checkpoint ? *run.checkpoint : out / "best.ckpt";
    if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
    Model model = load_checkpoint(ckpt);
    KeyValueConfig kv = base_config(run, ckpt.parent_path() / "config.resolved");
    if (!kv.contains("family")) model.spec().write(kv);
    TrainConfig cfg = TrainConfig::from_kv(kv);
    if (!(cfg.model == model.spec())) {
        throw DataError("checkpoint " + ckpt.string() + " does not match the configured model (family " +
                        std::string(family_name(model.family())) + " vs " +
                        std::string(family_name(cfg.model.family)) + ")");
    }
    return {std::move(cfg), std::move(model)};
}

void write_roc_files(const fs::path& out, const EvalReport& report) {
    for (const auto& c : report.classes) {
        if (c.skipped) {
            std::cerr << "skipped degenerate class " << kClassNames.at(c.class_index) << " (" << c.n_pos
                      << " positives, " << c.n_neg << " negatives)\n";
            continue;
        }
        write_roc_csv(out / ("roc_" + class_file_stem(c.class_index) + ".csv"), c.curve);
    }
    write_roc_summary_csv(out / "roc_summary.csv", report);
}

}  // namespace

int cmd_train(const RunConfig& run) {
    const fs::path out = resolve_out(run);
    const TrainConfig cfg = TrainConfig::from_kv(base_config(run));
    cfg.to_kv().save(out / "config.resolved");
    const Splits splits = load_splits(run.data, cfg);
    Model model = build_model(cfg.model);
    Trainer trainer(model, cfg);
    const auto report = trainer.fit(splits.train, splits.val, out / "best.ckpt", [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " train_loss=" << e.train_loss << " val_loss=" << e.val_loss
                  << " val_auc=" << e.val_auc << " lr=" << e.lr << '\n';
        return true;
    });
    write_report_csv(out / "report.csv", report);
    std::cout << "best epoch " << report.best_epoch << "; wrote " << (out / "report.csv").string() << '\n';
    return kExitOk;
}

int cmd_evaluate(const RunConfig& run) {
    const fs::path out = resolve_out(run);
    auto [cfg, model] = load_run(run, out);
    const Splits splits = load_splits(run.data, cfg);
    const Dataset& data = pick_split(splits, run.split);
    const auto report = evaluate(model, data, cfg.batch);
    write_eval_csv(out / "eval.csv", report, std::string(family_name(model.family())), run.split);
    write_roc_files(out, report);
    std::cout << "accuracy=" << report.accuracy << " macro_auc=" << report.macro_auc << " n=" << report.n_samples
              << '\n';
    return kExitOk;
}

int cmd_roc(const RunConfig& run) {
    const fs::path out = resolve_out(run);
    auto [cfg, model] = load_run(run, out);
    const Splits splits = load_splits(run.data, cfg);
    write_roc_files(out, evaluate(model, pick_split(splits, run.split), cfg.batch));
    return kExitOk;
}

int cmd_attend(const RunConfig& run) {
    const fs::path out = resolve_out(run);
    if (!run.image) throw ConfigError("attend needs --image");
    const fs::path ckpt = run.checkpoint ? *run.checkpoint : out / "best.ckpt";
    if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
    Model model = load_checkpoint(ckpt);
    const Image image = read_png(*run.image);
    const AttentionMap map = extract_attention(model, image);
    const std::string stem = run.image->stem().string();
    write_png(render_heatmap(map, image, run.alpha), out / (stem + "_attn.png"));
    write_grid_csv(out / (stem + "_attn.csv"), map);
    std::cout << "wrote " << (out / (stem + "_attn.png")).string() << '\n';
    return kExitOk;
}

int cmd_synth(const RunConfig& run) {
    const fs::path out = resolve_out(run);
    KeyValueConfig kv = base_config(run);
    TrainConfig cfg = TrainConfig::from_kv(kv);
    if (run.count > 0) cfg.synth.n = static_cast<std::size_t>(run.count);
    const auto samples = synthesize_dataset(cfg.synth);
    fs::create_directories(out / "images");
    std::vector<LabelRecord> records;
    std::vector<std::pair<std::string, Split>> splits;
    for (const auto& s : samples) {
        write_png(s.image, out / "images" / s.image_id);
        records.push_back({s.image_id, s.labels});
        splits.emplace_back(s.image_id, split_for(s.image_id, cfg.val_fraction, cfg.test_fraction));
    }
    write_label_csv(out / "Data_Entry_2017.csv", records);
    write_split_manifest(out / "split.tsv", splits);
    std::cout << "wrote " << samples.size() << " images to " << out.string() << '\n';
    return kExitOk;
}

int run_command(const RunConfig& run) {
    try {
        switch (run.command) {
            case Command::train:
                return cmd_train(run);
            case Command::evaluate:
                return cmd_evaluate(run);
            case Command::roc:
                return cmd_roc(run);
            case Command::attend:
                return cmd_attend(run);
            case Command::synth:
                return cmd_synth(run);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const UnsupportedFamilyError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const NonFiniteError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitConfig;
}

}  // namespace xrf::cli
