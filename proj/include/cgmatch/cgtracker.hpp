#pragma once

// Per-sample cumulative pseudo-label count queues and the Count-Gap derived
// from them.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "cgmatch/datasets.hpp"

namespace cgmatch::cgtracker {

using Count = std::uint32_t;

// max(counts) minus the largest count left after removing one instance of
// the maximum. Tied maxima give 0.
Count count_gap(std::span<const Count> counts);

struct PredictionEntry {
    std::uint64_t iteration = 0;
    SampleId sample;
    int predicted_class = 0;
};

class CountTracker;
CountTracker read_queues(std::istream& is);

class CountTracker {
public:
    // One queue per id in [first_id, first_id + n_samples).
    CountTracker(SampleId first_id, std::size_t n_samples, int classes);
    // Tracks every id of the unlabeled pool.
    explicit CountTracker(const datasets::UnlabeledPool& pool, int classes);

    void record_prediction(SampleId id, int pseudo_label);
    Count count_gap(SampleId id) const;
    std::span<const Count> queue(SampleId id) const;

    // Replaces every queue with the tally of that sample's logged predictions
    // over iterations [warmup_end - window, warmup_end). The log must hold
    // only warm-up iterations (< warmup_end).
    void warmup_initialize(std::span<const PredictionEntry> log, std::uint64_t warmup_end,
                           std::uint64_t window = 1000);

    int classes() const { return classes_; }
    std::size_t size() const { return n_; }
    SampleId first_id() const { return first_; }

    bool operator==(const CountTracker&) const = default;

private:
    std::size_t index_of(SampleId id) const;

    SampleId first_;
    std::size_t n_ = 0;
    int classes_ = 0;
    std::vector<Count> counts_;  // [n x classes]

    friend CountTracker read_queues(std::istream& is);
};

// Text format: "cgmatch-queues v1", "classes K", then "<id> c0 .. c{K-1}".
void write_queues(std::ostream& os, const CountTracker& tracker);

}  // namespace cgmatch::cgtracker
