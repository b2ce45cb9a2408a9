#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace xrf::cli {

enum class Command { train, evaluate, roc, attend, synth };

struct RunConfig {
    Command command = Command::train;
    std::optional<std::filesystem::path> config_path;
    std::string data = "synth";  // "synth" or a dataset directory
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> image;
    std::string split = "test";
    double alpha = 0.4;
    std::int64_t count = 0;  // synth: number of images (0 = config value)
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;

int cmd_train(const RunConfig& run);
int cmd_evaluate(const RunConfig& run);
int cmd_roc(const RunConfig& run);
int cmd_attend(const RunConfig& run);
int cmd_synth(const RunConfig& run);

/// Dispatches and maps library exceptions to exit codes with a one-line
/// diagnostic on stderr.
int run_command(const RunConfig& run);

}  // namespace xrf::cli
