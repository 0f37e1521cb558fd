#pragma once

// Run directory layout:
//   config.ini        fully resolved configuration
//   dataset.tsv       dataset snapshot
//   dynamics.jsonl    one JSON record per iteration (losses, thresholds, subset sizes)
//   partitions.tsv    subset membership with pseudo-labels at the logging cadence
//   checkpoints.tsv   model outputs on the unlabeled pool at checkpoint iterations
//   eval.tsv          test accuracy and ECE curve
//   model.txt         final parameters
//   queues.tsv        final Count-Gap queues
//   COMPLETE | PARTIAL  completion marker (PARTIAL holds the error message)

#include <filesystem>
#include <fstream>
#include <vector>

#include "cgmatch/diagnostics.hpp"
#include "cgmatch/trainer.hpp"

namespace cgmatch::run_io {

namespace files {
inline constexpr const char* kConfig = "config.ini";
inline constexpr const char* kDataset = "dataset.tsv";
inline constexpr const char* kDynamics = "dynamics.jsonl";
inline constexpr const char* kPartitions = "partitions.tsv";
inline constexpr const char* kCheckpoints = "checkpoints.tsv";
inline constexpr const char* kEval = "eval.tsv";
inline constexpr const char* kModel = "model.txt";
inline constexpr const char* kQueues = "queues.tsv";
inline constexpr const char* kComplete = "COMPLETE";
inline constexpr const char* kPartial = "PARTIAL";
}  // namespace files

class RunDirectory : public trainer::RunObserver {
public:
    RunDirectory(const std::filesystem::path& dir, int classes);

    void on_iteration(const trainer::IterationRecord& rec) override;
    void on_partition(std::uint64_t iteration, const fds::Partition& p) override;
    void on_eval(const trainer::EvalRecord& rec) override;
    void on_checkpoint(const trainer::CheckpointProbe& probe) override;

    void flush();

private:
    std::ofstream dynamics_, partitions_, checkpoints_, eval_;
};

// Persists the resolved config and dataset snapshot, trains, writes the
// final model, queues and COMPLETE. On failure writes PARTIAL (keeping all
// logs so far) and rethrows.
trainer::RunArtifacts execute_run(trainer::RunConfig config, const std::filesystem::path& dir);

bool is_complete(const std::filesystem::path& dir);

std::vector<trainer::IterationRecord> read_dynamics(const std::filesystem::path& file);
std::vector<diagnostics::PartitionRecord> read_partitions(const std::filesystem::path& file);
std::vector<diagnostics::CheckpointRow> read_checkpoints(const std::filesystem::path& file);

}  // namespace cgmatch::run_io
