#pragma once

// Evaluation-side analysis of training logs: calibration error, data maps,
// unlabeled-data utilization and per-subset pseudo-label accuracy. Nothing
// here writes to training state.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgmatch/datasets.hpp"
#include "cgmatch/fds.hpp"
#include "cgmatch/trainer.hpp"

namespace cgmatch::diagnostics {

// Equal-width bins over [0, 1]; sum_b |B_b|/N * |acc(B_b) - conf(B_b)|.
// A confidence of exactly 1 falls in the last bin.
double ece(std::span<const double> confidences, const std::vector<bool>& correct,
           std::size_t bins = 15);

enum class SubsetTag { Easy, Ambiguous, Hard, Unseen };

char to_char(SubsetTag t);
SubsetTag subset_from_char(char c);

struct DynamicsRecord {
    SampleId sample;
    std::uint64_t iteration = 0;
    int predicted = 0;
    double max_prob = 0.0;
    double reference_prob = 0.0;  // probability of the gold label
    std::uint32_t count_gap = 0;
    SubsetTag subset = SubsetTag::Unseen;
};

struct DataMapPoint {
    SampleId sample;
    double confidence = 0.0;   // mean reference probability
    double variability = 0.0;  // population std of the same
    double mean_cg = 0.0;

    bool operator==(const DataMapPoint&) const = default;
};

struct DataMap {
    std::vector<DataMapPoint> points;  // sorted by sample id
    std::size_t omitted = 0;           // samples with fewer than 2 checkpoints
};

DataMap data_map(std::span<const DynamicsRecord> records);

struct UtilizationRow {
    std::uint64_t iteration = 0;
    std::size_t n_easy = 0;
    std::size_t n_ambiguous = 0;
    std::size_t n_used = 0;
    std::size_t n_confident = 0;
    std::size_t batch_unlabeled = 0;
    double used_ratio = 0.0;

    bool operator==(const UtilizationRow&) const = default;
};

// Rows for every post-warm-up iteration; a missing iteration is an error
// naming the first gap.
std::vector<UtilizationRow> utilization_series(std::span<const trainer::IterationRecord> log);

struct PartitionRecord {
    std::uint64_t iteration = 0;
    fds::Partition partition;
};

struct SubsetAccuracyRow {
    std::uint64_t iteration = 0;
    SubsetTag subset = SubsetTag::Easy;
    std::size_t n = 0;
    std::size_t n_correct = 0;
    std::optional<double> fraction;  // unset when n == 0

    bool operator==(const SubsetAccuracyRow&) const = default;
};

// Three rows (easy, ambiguous, hard) per logged iteration.
std::vector<SubsetAccuracyRow> subset_accuracy(std::span<const PartitionRecord> partitions,
                                               const datasets::Dataset& dataset);

// One model-output row per pool sample per checkpoint, as written to the
// run directory.
struct CheckpointRow {
    std::uint64_t iteration = 0;
    SampleId sample;
    std::uint32_t count_gap = 0;
    SubsetTag subset = SubsetTag::Unseen;
    std::vector<double> probs;
};

// Joins checkpoint rows with the hidden gold labels.
std::vector<DynamicsRecord> dynamics_records(std::span<const CheckpointRow> rows,
                                             const datasets::Dataset& dataset);

// Tab-separated exports with a fixed header line. Importers accept exactly
// what the exporters write.
void export_data_map(const std::filesystem::path& path, const DataMap& map);
DataMap import_data_map(const std::filesystem::path& path);

void export_utilization(const std::filesystem::path& path, std::span<const UtilizationRow> rows);
std::vector<UtilizationRow> import_utilization(const std::filesystem::path& path);

void export_subset_accuracy(const std::filesystem::path& path,
                            std::span<const SubsetAccuracyRow> rows);
std::vector<SubsetAccuracyRow> import_subset_accuracy(const std::filesystem::path& path);

void export_eval_curve(const std::filesystem::path& path,
                       std::span<const trainer::EvalRecord> rows);
std::vector<trainer::EvalRecord> import_eval_curve(const std::filesystem::path& path);

}  // namespace cgmatch::diagnostics
