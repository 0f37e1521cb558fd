#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cgmatch/config.hpp"
#include "cgmatch/fds.hpp"
#include "cgmatch/trainer.hpp"

namespace cgmatch::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kAbort = 3, kPartialGrid = 4 };

// $CGMATCH_OUTPUT_ROOT, or "runs".
std::filesystem::path output_root();

trainer::RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                                  const std::vector<config::Override>& overrides);

std::string default_run_name(const trainer::RunConfig& config);

void gen_data(const trainer::RunConfig& config, const std::filesystem::path& out);

// Final test metrics of one completed run directory.
struct RunSummary {
    std::filesystem::path dir;
    trainer::RunConfig config;
    double final_accuracy = 0.0;
    double final_ece = 0.0;
};

RunSummary summarize_run(const std::filesystem::path& dir);

struct AblationCell {
    fds::ThresholdMode mode;
    std::uint64_t seed;
    std::filesystem::path dir;
    bool completed = false;
    std::string error;
    double seconds = 0.0;
};

struct AblationResult {
    std::vector<AblationCell> cells;
    std::string table;
    bool all_completed() const;
};

// One run per distinct (mode, seed) under out/<mode>-seed<seed>, at most
// `jobs` at a time; failed cells are recorded and the rest continue. The
// table (also written to out/ablation.tsv) is built from the run
// directories on disk.
AblationResult ablate(const trainer::RunConfig& base, const std::vector<fds::ThresholdMode>& modes,
                      const std::vector<std::uint64_t>& seeds, std::size_t jobs,
                      const std::filesystem::path& out);

std::string ablation_table(const std::vector<AblationCell>& cells);

// Aggregate tables over completed run directories that share a dataset.
// Rows are ordered by method label, runs within a group by seed and path.
std::string report(std::vector<std::filesystem::path> dirs);

// Writes data_map.tsv, ece_curve.tsv, utilization.tsv and subset_accuracy.tsv.
void diagnose(const std::filesystem::path& run_dir, const std::filesystem::path& out);

}  // namespace cgmatch::cli
