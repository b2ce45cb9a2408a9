#include <CLI11.hpp>

#include "commands.h"

int main(int argc, char** argv) {
    using namespace xrf::cli;
    CLI::App app{"Multi-label chest radiograph classifiers: train, evaluate, visualise"};
    app.require_subcommand(1);

    RunConfig run;
    std::string config, out, checkpoint, image;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "key=value configuration file");
        sub->add_option("--data", run.data, "dataset directory, or 'synth'")->capture_default_str();
        sub->add_option("--out", out, "output directory (default: $XRF_OUT)");
        sub->add_option("--seed", seed, "root seed (overrides the config)");
        sub->add_option("--set", run.overrides, "override a config field, key=value (repeatable)");
    };

    auto* train = app.add_subcommand("train", "train a model and write report.csv, best.ckpt, config.resolved");
    common(train);

    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint: eval.csv and per-class ROC files");
    auto* roc = app.add_subcommand("roc", "write per-class ROC files only");
    for (auto* sub : {evaluate, roc}) {
        common(sub);
        sub->add_option("--checkpoint", checkpoint, "checkpoint (default: <out>/best.ckpt)");
        sub->add_option("--split", run.split, "train, val or test")->capture_default_str();
    }

    auto* attend = app.add_subcommand("attend", "overlay the last attention layer on an image");
    common(attend);
    attend->add_option("--checkpoint", checkpoint, "checkpoint (default: <out>/best.ckpt)");
    attend->add_option("--image", image, "PNG image")->required();
    attend->add_option("--alpha", run.alpha, "heatmap opacity in [0,1]")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset directory");
    common(synth);
    synth->add_option("--n", run.count, "number of images (default: synth_n)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (!config.empty()) run.config_path = config;
    if (!out.empty()) run.out_dir = out;
    if (!checkpoint.empty()) run.checkpoint = checkpoint;
    if (!image.empty()) run.image = image;
    for (auto* sub : {train, evaluate, roc, attend, synth}) {
        if (sub->count_all() > 0 && sub->count("--seed") > 0) run.seed = seed;
    }
    if (*train) run.command = Command::train;
    if (*evaluate) run.command = Command::evaluate;
    if (*roc) run.command = Command::roc;
    if (*attend) run.command = Command::attend;
    if (*synth) run.command = Command::synth;
    return run_command(run);
}
