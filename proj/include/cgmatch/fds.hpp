#pragma once

// Fine-grained dynamic selection: EMA-driven confidence and ambiguity
// thresholds, and the per-batch split of unlabeled samples into
// easy-to-learn, ambiguous and hard-to-learn subsets.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgmatch/datasets.hpp"
#include "cgmatch/matrix.hpp"

namespace cgmatch::fds {

enum class ThresholdMode { GlobalEMA, SelfAdaptive, Fixed };

std::string to_string(ThresholdMode m);
ThresholdMode parse_threshold_mode(const std::string& s);

struct ClampRange {
    double lo = 0.9;
    double hi = 0.95;
};

// min(hi, max(lo, tau)); lo > hi is a ConfigError.
double clamp_threshold(double tau, double lo, double hi);

struct BatchMeans {
    double confidence = 0.0;  // mean of max probabilities
    double count_gap = 0.0;   // mean Count-Gap
};

BatchMeans batch_means(std::span<const double> max_probs, std::span<const double> count_gaps);

// Per-class state for self-adaptive thresholding: EMA of the batch mean
// confidence and EMA of the batch mean probability of each class.
struct ClassWiseState {
    double global = 0.0;
    std::vector<double> per_class;
    bool initialized = false;
};

struct ThresholdState {
    ThresholdMode mode = ThresholdMode::GlobalEMA;
    double tau_e = 0.0;  // probability units
    double tau_a = 0.0;  // count units
    double momentum = 0.999;
    std::optional<ClampRange> clamp;
    bool initialized = false;
    ClassWiseState classwise;  // SelfAdaptive only

    void validate() const;
};

// Fixed mode keeps tau_e at the given value; the others start uninitialized.
ThresholdState make_threshold_state(ThresholdMode mode, double momentum,
                                    std::optional<ClampRange> clamp, double fixed_tau_e = 0.95);

// First post-warm-up batch: thresholds start at the batch means.
void initialize(ThresholdState& state, const BatchMeans& means);

// tau <- m tau + (1 - m) mu for both thresholds (tau_e untouched in Fixed
// mode), then the optional clamp on tau_e.
void ema_update(ThresholdState& state, const BatchMeans& means);

// Self-adaptive per-class thresholds: updates the class-wise EMAs from the
// batch probabilities, then tau_e(c) = p~(c) / max p~ * global, clamped when
// the state has a clamp range.
std::vector<double> sat_thresholds(ThresholdState& state, const Matrix& probs);

struct SelectionThresholds {
    std::vector<double> easy_by_class;  // tau_e applied per pseudo-label
    double ambiguity = 0.0;

    static SelectionThresholds uniform(double tau_e, double tau_a, int classes);
};

struct Selection {
    std::size_t row = 0;  // position in the unlabeled batch
    SampleId id;
    int pseudo_label = 0;
};

struct Partition {
    std::vector<Selection> easy;
    std::vector<Selection> ambiguous;
    std::vector<Selection> hard;

    std::size_t size() const { return easy.size() + ambiguous.size() + hard.size(); }
};

// easy: max_prob >= tau_e(label); ambiguous: max_prob < tau_e(label) and
// cg >= tau_a; hard: the rest.
Partition partition(std::span<const SampleId> ids, std::span<const double> max_probs,
                    std::span<const int> pseudo_labels, std::span<const double> count_gaps,
                    const SelectionThresholds& thresholds);

}  // namespace cgmatch::fds
