#pragma once

// End-to-end training: supervised warm-up with unlabeled prediction logging,
// Count-Gap queue initialization, then the per-iteration
// pseudo-label -> queues -> thresholds -> partition -> optimize cycle.
// The FixMatch baseline and a supervised-only run share the same harness.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cgmatch/cgtracker.hpp"
#include "cgmatch/datasets.hpp"
#include "cgmatch/diffnet.hpp"
#include "cgmatch/fds.hpp"
#include "cgmatch/losses.hpp"

namespace cgmatch::trainer {

enum class Method { CGMatch, FixMatchBaseline, SupervisedOnly };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct DataSpec {
    datasets::Kind kind = datasets::Kind::Blobs;
    datasets::BlobsSpec blobs;
    datasets::TwoMoonsSpec moons;
    // When set, the dataset is read from this file instead of generated.
    std::string file;
};

struct RunConfig {
    DataSpec data;

    std::vector<std::size_t> hidden{64, 64};
    kernels::Backend backend = kernels::Backend::OpenMP;

    double lr = 0.03;
    double momentum = 0.9;

    Method method = Method::CGMatch;
    fds::ThresholdMode thresholding = fds::ThresholdMode::GlobalEMA;
    double fixed_tau = 0.95;     // Fixed thresholding mode
    double fixmatch_tau = 0.95;  // FixMatch baseline
    double ema_momentum = 0.999;
    double q = 0.7;
    double lambda_e = 1.0;
    double lambda_u = 1.0;
    std::optional<fds::ClampRange> clamp;
    bool detach_weak = false;
    std::uint64_t warmup_window = 1000;

    // Unset: derived from the dataset's spread.
    std::optional<datasets::AugmentConfig> augment;

    std::uint64_t seed = 0;
    std::uint64_t iterations = 20000;  // T
    std::uint64_t warmup = 2048;       // t0
    std::size_t batch_labeled = 64;
    std::size_t ratio = 7;
    std::uint64_t eval_every = 500;
    std::uint64_t checkpoint_every = 500;    // 0 disables data-map probes
    std::uint64_t partition_log_every = 10;  // 0 disables partition logging

    void validate() const;
    losses::ScheduleConfig schedule() const;
};

datasets::Dataset make_dataset(const DataSpec& spec);

// Per-iteration summary; warm-up iterations carry only the supervised part.
struct IterationRecord {
    std::uint64_t iteration = 0;
    bool warmup = false;
    double lr = 0.0;
    losses::LossBreakdown loss;
    double tau_e = 0.0;
    double tau_a = 0.0;
    double mean_confidence = 0.0;
    double mean_count_gap = 0.0;
    std::size_t n_easy = 0;
    std::size_t n_ambiguous = 0;
    std::size_t n_hard = 0;
    // |{i : max_prob_i >= tau_e}| at the same threshold (confidence-only selection).
    std::size_t n_confident = 0;
    std::size_t batch_unlabeled = 0;
};

struct EvalRecord {
    std::uint64_t iteration = 0;
    double accuracy = 0.0;
    double ece = 0.0;
};

// Model outputs on the clean unlabeled pool at a checkpoint iteration.
struct CheckpointProbe {
    std::uint64_t iteration = 0;
    const std::vector<SampleId>* ids = nullptr;
    const Matrix* probs = nullptr;
    std::vector<cgtracker::Count> count_gaps;
    // Subset of each pool sample at this iteration: 'e', 'a', 'h' or 'u' (not in batch).
    std::vector<char> subsets;
};

class RunObserver {
public:
    virtual ~RunObserver() = default;
    virtual void on_iteration(const IterationRecord&) {}
    virtual void on_partition(std::uint64_t /*iteration*/, const fds::Partition&) {}
    virtual void on_eval(const EvalRecord&) {}
    virtual void on_checkpoint(const CheckpointProbe&) {}
};

// Everything a step mutates. Steps take it by const reference and return an
// updated copy, so a failing step leaves the caller's state untouched.
struct TrainerState {
    diffnet::ModelParams model;
    diffnet::OptimizerState optimizer;
    cgtracker::CountTracker tracker;
    fds::ThresholdState thresholds;
};

TrainerState make_initial_state(const RunConfig& config, const datasets::Dataset& dataset);

struct WarmupResult {
    std::vector<cgtracker::PredictionEntry> prediction_log;  // last warmup_window iterations
};

// t0 supervised iterations (T + 1 for SupervisedOnly). Each iteration also
// draws an unlabeled batch and logs the weak-view argmax predictions inside
// the final window; afterwards the tracker is initialized from that log.
WarmupResult warmup(const RunConfig& config, const datasets::Dataset& dataset, TrainerState& state,
                    datasets::BatchRng& rng, RunObserver* observer = nullptr);

struct StepResult {
    TrainerState state;
    losses::LossBreakdown loss;
    fds::Partition partition;
    IterationRecord record;
};

StepResult train_step(const RunConfig& config, const TrainerState& state,
                      const datasets::Batch& batch, std::uint64_t t);

// Phases of one training step, in the order they must run.
enum class Phase { Start, PseudoLabel, UpdateQueues, UpdateThresholds, Select, Optimize };

// One CGMatch step split into its phases. Calling a phase out of order
// throws ConsistencyError.
class CgmatchStep {
public:
    CgmatchStep(const RunConfig& config, TrainerState& state, const datasets::Batch& batch,
                std::uint64_t t);

    void pseudo_label();
    void update_queues();
    void update_thresholds();
    void select();
    void optimize();

    const fds::Partition& partition() const { return partition_; }
    const losses::LossBreakdown& loss() const { return loss_; }
    const IterationRecord& record() const { return record_; }

private:
    void enter(Phase next);

    const RunConfig& config_;
    TrainerState& state_;
    const datasets::Batch& batch_;
    std::uint64_t t_;
    Phase phase_ = Phase::Start;

    diffnet::ForwardCache cache_;
    Matrix probs_labeled_, probs_weak_, probs_strong_;
    std::vector<double> max_probs_;
    std::vector<int> pseudo_labels_;
    std::vector<double> count_gaps_;
    fds::SelectionThresholds selection_;
    fds::Partition partition_;
    losses::LossBreakdown loss_;
    IterationRecord record_;
};

// Gradient of the CGMatch objective for one batch given its partition and
// loss weights (exposed for the empty-set neutrality checks).
struct ObjectiveGradient {
    diffnet::GradientSet grads;
    losses::LossBreakdown loss;
};

ObjectiveGradient cgmatch_gradient(const RunConfig& config, const diffnet::ModelParams& model,
                                   const datasets::Batch& batch, const fds::Partition& partition,
                                   double lambda_e, double lambda_a);

struct EvalResult {
    double accuracy = 0.0;
    double ece = 0.0;
};

EvalResult evaluate(const diffnet::ModelParams& model, const datasets::LabeledPool& split);

struct RunArtifacts {
    diffnet::ModelParams model;
    cgtracker::CountTracker tracker;
    std::vector<EvalRecord> eval_curve;
    std::vector<IterationRecord> iterations;
};

// Warm-up, queue initialization, then the training loop t = t0..T with
// periodic evaluation on the test split.
RunArtifacts run(const RunConfig& config, const datasets::Dataset& dataset,
                 RunObserver* observer = nullptr);

}  // namespace cgmatch::trainer
