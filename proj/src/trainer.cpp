#include "cgmatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <spdlog/spdlog.h>

#include "cgmatch/diagnostics.hpp"
#include "cgmatch/errors.hpp"

namespace cgmatch::trainer {

std::string to_string(Method m) {
    switch (m) {
        case Method::CGMatch: return "CGMatch";
        case Method::FixMatchBaseline: return "FixMatchBaseline";
        case Method::SupervisedOnly: return "SupervisedOnly";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "CGMatch") return Method::CGMatch;
    if (s == "FixMatchBaseline") return Method::FixMatchBaseline;
    if (s == "SupervisedOnly") return Method::SupervisedOnly;
    throw ConfigError("unknown method '" + s + "' (CGMatch, FixMatchBaseline, SupervisedOnly)");
}

void RunConfig::validate() const {
    if (iterations == 0) throw ConfigError("run.iterations must be positive");
    if (warmup >= iterations) throw ConfigError("run.warmup must be smaller than run.iterations");
    if (warmup_window == 0) throw ConfigError("ssl.warmup_window must be positive");
    if (batch_labeled == 0) throw ConfigError("run.batch_labeled must be positive");
    if (method != Method::SupervisedOnly && ratio == 0)
        throw ConfigError("run.ratio must be positive for semi-supervised methods");
    if (eval_every == 0) throw ConfigError("run.eval_every must be positive");
    for (auto h : hidden)
        if (h == 0) throw ConfigError("model.hidden widths must be positive");
    if (!(lr > 0.0)) throw ConfigError("optim.lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim.momentum must be in [0, 1)");
    if (!(fixed_tau >= 0.0 && fixed_tau <= 1.0)) throw ConfigError("ssl.fixed_tau must be in [0, 1]");
    if (!(fixmatch_tau >= 0.0 && fixmatch_tau <= 1.0))
        throw ConfigError("ssl.fixmatch_tau must be in [0, 1]");
    fds::ThresholdState probe;
    probe.momentum = ema_momentum;
    probe.clamp = clamp;
    probe.validate();
    schedule().validate();
    if (augment) augment->validate();
}

losses::ScheduleConfig RunConfig::schedule() const {
    return losses::ScheduleConfig{lambda_e, q, lambda_u, warmup, iterations};
}

datasets::Dataset make_dataset(const DataSpec& spec) {
    if (!spec.file.empty()) {
        std::ifstream in(spec.file);
        if (!in) throw ConfigError("cannot open dataset file '" + spec.file + "'");
        return datasets::read_dataset(in);
    }
    return spec.kind == datasets::Kind::Blobs ? datasets::make_blobs(spec.blobs)
                                              : datasets::make_two_moons(spec.moons);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream, 0x9e3779b9u};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

bool on_cadence(std::uint64_t t, std::uint64_t every, std::uint64_t last) {
    return every > 0 && ((t > 0 && t % every == 0) || t == last);
}

datasets::AugmentConfig resolve_augment(const RunConfig& config, const datasets::Dataset& ds) {
    auto a = config.augment.value_or(datasets::AugmentConfig::relative_to(ds.info().spread));
    a.validate();
    return a;
}

// Softmax of training-path logits; overflowing logits mean the run has
// diverged rather than received bad input.
Matrix train_probs(const Matrix& logits) {
    for (double v : logits.flat())
        if (!std::isfinite(v)) throw DivergenceError("non-finite logits; training diverged");
    return diffnet::softmax_rows(logits);
}

struct RowStats {
    std::vector<double> max_probs;
    std::vector<int> labels;
};

RowStats row_stats(const Matrix& probs) {
    RowStats s;
    s.max_probs.reserve(probs.rows());
    s.labels.reserve(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        auto it = std::max_element(row.begin(), row.end());
        s.max_probs.push_back(*it);
        s.labels.push_back(static_cast<int>(it - row.begin()));
    }
    return s;
}

Matrix stack(const Matrix& a, const Matrix& b, const Matrix& c) {
    Matrix out(a.rows() + b.rows() + c.rows(), a.cols());
    std::size_t r = 0;
    for (const Matrix* m : {&a, &b, &c})
        for (std::size_t i = 0; i < m->rows(); ++i, ++r)
            std::copy(m->row(i).begin(), m->row(i).end(), out.row(r).begin());
    return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
    Matrix out(count, m.cols());
    for (std::size_t i = 0; i < count; ++i)
        std::copy(m.row(begin + i).begin(), m.row(begin + i).end(), out.row(i).begin());
    return out;
}

// Forward pass over [labeled; weak; strong] with a cache for backward.
struct ViewOutputs {
    diffnet::ForwardCache cache;
    Matrix labeled, weak, strong;
};

ViewOutputs forward_views(const diffnet::ModelParams& model, const datasets::Batch& batch) {
    if (batch.unlabeled_ids.empty() || batch.unlabeled_strong.rows() != batch.unlabeled_ids.size())
        throw InvalidInput("training step needs an unlabeled batch with weak and strong views");
    ViewOutputs v;
    const Matrix x = stack(batch.labeled_features, batch.unlabeled_weak, batch.unlabeled_strong);
    const Matrix probs = train_probs(diffnet::forward(model, x, &v.cache));
    const std::size_t nl = batch.labeled_features.rows();
    const std::size_t nu = batch.unlabeled_ids.size();
    v.labeled = slice_rows(probs, 0, nl);
    v.weak = slice_rows(probs, nl, nu);
    v.strong = slice_rows(probs, nl + nu, nu);
    return v;
}

// Backward over the rows that carry a non-zero gradient.
diffnet::GradientSet backward_views(const diffnet::ModelParams& model,
                                    const diffnet::ForwardCache& cache, const Matrix& dl,
                                    const Matrix& dw, const Matrix& ds) {
    const Matrix g = stack(dl, dw, ds);
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        if (std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; })) rows.push_back(r);
    }
    if (rows.empty()) return diffnet::GradientSet::zeros_like(model);
    if (rows.size() == g.rows()) return diffnet::backward(model, cache, g);
    return diffnet::backward(model, cache.gather_rows(rows), g.gather_rows(rows));
}

ObjectiveGradient objective(const RunConfig& config, const diffnet::ModelParams& model,
                            const ViewOutputs& v, const datasets::Batch& batch,
                            const fds::Partition& partition, double lambda_e, double lambda_a) {
    Matrix dl(v.labeled.rows(), v.labeled.cols());
    Matrix dw(v.weak.rows(), v.weak.cols());
    Matrix ds(v.strong.rows(), v.strong.cols());
    const double ls = losses::supervised_ce(v.labeled, batch.labels, &dl);
    const double le = losses::easy_ce(partition.easy, v.strong, &ds, lambda_e);
    const double la = losses::ambiguous_gce(partition.ambiguous, v.weak, v.strong, config.q, &dw,
                                            &ds, lambda_a, config.detach_weak);
    ObjectiveGradient out;
    out.loss = losses::total_loss(ls, le, la, lambda_e, lambda_a, partition.easy.size(),
                                  partition.ambiguous.size());
    out.grads = backward_views(model, v.cache, dl, dw, ds);
    return out;
}

StepResult fixmatch_step(const RunConfig& config, const TrainerState& state,
                         const datasets::Batch& batch, std::uint64_t t) {
    StepResult res{state, {}, {}, {}};
    TrainerState& s = res.state;
    const ViewOutputs v = forward_views(s.model, batch);
    const RowStats weak = row_stats(v.weak);

    // Queues are tracked for diagnostics only; they do not affect this method.
    for (std::size_t i = 0; i < batch.unlabeled_ids.size(); ++i)
        s.tracker.record_prediction(batch.unlabeled_ids[i], weak.labels[i]);
    std::vector<double> cgs;
    for (auto id : batch.unlabeled_ids) cgs.push_back(s.tracker.count_gap(id));

    for (std::size_t i = 0; i < batch.unlabeled_ids.size(); ++i) {
        const fds::Selection sel{i, batch.unlabeled_ids[i], weak.labels[i]};
        (weak.max_probs[i] > config.fixmatch_tau ? res.partition.easy : res.partition.hard)
            .push_back(sel);
    }

    Matrix dl(v.labeled.rows(), v.labeled.cols());
    Matrix dw(v.weak.rows(), v.weak.cols());
    Matrix ds(v.strong.rows(), v.strong.cols());
    const double ls = losses::supervised_ce(v.labeled, batch.labels, &dl);
    const double lu = losses::fixmatch_unsup(v.weak, v.strong, config.fixmatch_tau, &ds,
                                             config.lambda_u);
    res.loss = losses::total_loss(ls, lu, 0.0, config.lambda_u, 0.0, res.partition.easy.size(), 0);
    const auto grads = backward_views(s.model, v.cache, dl, dw, ds);
    const double lr = diffnet::cosine_lr(s.optimizer.iteration, s.optimizer.total_iterations,
                                         s.optimizer.base_lr);
    diffnet::sgd_step(s.model, grads, s.optimizer);

    const auto means = fds::batch_means(weak.max_probs, cgs);
    auto& r = res.record;
    r.iteration = t;
    r.lr = lr;
    r.loss = res.loss;
    r.tau_e = config.fixmatch_tau;
    r.mean_confidence = means.confidence;
    r.mean_count_gap = means.count_gap;
    r.n_easy = res.partition.easy.size();
    r.n_hard = res.partition.hard.size();
    r.n_confident = r.n_easy;
    r.batch_unlabeled = batch.unlabeled_ids.size();
    return res;
}

}  // namespace

TrainerState make_initial_state(const RunConfig& config, const datasets::Dataset& dataset) {
    diffnet::Architecture arch{dataset.dim(), config.hidden,
                               static_cast<std::size_t>(dataset.classes())};
    auto model = diffnet::init_params(arch, derive_seed(config.seed, 0));
    model.backend = config.backend;
    auto optimizer = diffnet::make_optimizer(model, config.lr, config.momentum, config.iterations);
    return TrainerState{std::move(model), std::move(optimizer),
                        cgtracker::CountTracker(dataset.unlabeled(), dataset.classes()),
                        fds::make_threshold_state(config.thresholding, config.ema_momentum,
                                                  config.clamp, config.fixed_tau)};
}

EvalResult evaluate(const diffnet::ModelParams& model, const datasets::LabeledPool& split) {
    if (split.size() == 0) throw InvalidInput("evaluate: empty split");
    const Matrix probs = train_probs(diffnet::forward(model, split.features));
    const RowStats s = row_stats(probs);
    std::vector<bool> correct(split.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
        correct[i] = s.labels[i] == split.labels[i];
        hits += correct[i];
    }
    return {static_cast<double>(hits) / static_cast<double>(split.size()),
            diagnostics::ece(s.max_probs, correct)};
}

namespace {

void emit_eval_and_probe(const RunConfig& config, const datasets::Dataset& dataset,
                         const TrainerState& state, std::uint64_t t,
                         const fds::Partition* partition, RunArtifacts& artifacts,
                         RunObserver* observer) {
    if (on_cadence(t, config.eval_every, config.iterations)) {
        const auto e = evaluate(state.model, dataset.test());
        EvalRecord rec{t, e.accuracy, e.ece};
        artifacts.eval_curve.push_back(rec);
        if (observer) observer->on_eval(rec);
    }
    if (observer && on_cadence(t, config.checkpoint_every, config.iterations) &&
        dataset.unlabeled().size() > 0) {
        const auto& pool = dataset.unlabeled();
        const Matrix probs = train_probs(diffnet::forward(state.model, pool.features));
        CheckpointProbe probe{t, &pool.ids, &probs, {}, std::vector<char>(pool.size(), 'u')};
        probe.count_gaps.reserve(pool.size());
        for (auto id : pool.ids) probe.count_gaps.push_back(state.tracker.count_gap(id));
        if (partition) {
            auto mark = [&](const std::vector<fds::Selection>& set, char tag) {
                for (const auto& s : set) probe.subsets[dataset.unlabeled_index(s.id)] = tag;
            };
            mark(partition->easy, 'e');
            mark(partition->ambiguous, 'a');
            mark(partition->hard, 'h');
        }
        observer->on_checkpoint(probe);
    }
}

WarmupResult warmup_impl(const RunConfig& config, const datasets::Dataset& dataset,
                         TrainerState& state, datasets::BatchRng& rng, RunObserver* observer,
                         RunArtifacts* artifacts) {
    const bool ssl = config.method != Method::SupervisedOnly;
    const std::uint64_t steps = ssl ? config.warmup : config.iterations + 1;
    const std::uint64_t window_start =
        config.warmup > config.warmup_window ? config.warmup - config.warmup_window : 0;
    const auto augment = resolve_augment(config, dataset);
    const datasets::BatchRequest request{config.batch_labeled, ssl ? config.ratio : 0, false};

    WarmupResult result;
    for (std::uint64_t t = 0; t < steps; ++t) {
        const auto batch = datasets::draw_batch(dataset, request, augment, rng);

        diffnet::ForwardCache cache;
        const Matrix probs =
            train_probs(diffnet::forward(state.model, batch.labeled_features, &cache));
        Matrix dl(probs.rows(), probs.cols());
        const double ls = losses::supervised_ce(probs, batch.labels, &dl);
        IterationRecord rec;
        rec.iteration = t;
        rec.warmup = true;
        rec.loss = losses::total_loss(ls, 0.0, 0.0, 0.0, 0.0);

        if (ssl && t >= window_start && !batch.unlabeled_ids.empty()) {
            const RowStats weak =
                row_stats(train_probs(diffnet::forward(state.model, batch.unlabeled_weak)));
            for (std::size_t i = 0; i < batch.unlabeled_ids.size(); ++i)
                result.prediction_log.push_back({t, batch.unlabeled_ids[i], weak.labels[i]});
        }
        rec.batch_unlabeled = batch.unlabeled_ids.size();

        rec.lr = diffnet::cosine_lr(state.optimizer.iteration, state.optimizer.total_iterations,
                                    state.optimizer.base_lr);
        diffnet::sgd_step(state.model, diffnet::backward(state.model, cache, dl), state.optimizer);
        if (artifacts) artifacts->iterations.push_back(rec);
        if (observer) observer->on_iteration(rec);
        if (artifacts) emit_eval_and_probe(config, dataset, state, t, nullptr, *artifacts, observer);
    }
    if (ssl) state.tracker.warmup_initialize(result.prediction_log, config.warmup, config.warmup_window);
    return result;
}

}  // namespace

WarmupResult warmup(const RunConfig& config, const datasets::Dataset& dataset, TrainerState& state,
                    datasets::BatchRng& rng, RunObserver* observer) {
    config.validate();
    return warmup_impl(config, dataset, state, rng, observer, nullptr);
}

CgmatchStep::CgmatchStep(const RunConfig& config, TrainerState& state,
                         const datasets::Batch& batch, std::uint64_t t)
    : config_(config), state_(state), batch_(batch), t_(t) {
    if (t < config.warmup) throw InvalidInput("train_step called during warm-up");
}

void CgmatchStep::enter(Phase next) {
    if (static_cast<int>(next) != static_cast<int>(phase_) + 1)
        throw ConsistencyError("training step phase out of order: phase " +
                               std::to_string(static_cast<int>(next)) + " requested after phase " +
                               std::to_string(static_cast<int>(phase_)));
    phase_ = next;
}

void CgmatchStep::pseudo_label() {
    enter(Phase::PseudoLabel);
    ViewOutputs v = forward_views(state_.model, batch_);
    cache_ = std::move(v.cache);
    probs_labeled_ = std::move(v.labeled);
    probs_weak_ = std::move(v.weak);
    probs_strong_ = std::move(v.strong);
    RowStats s = row_stats(probs_weak_);
    max_probs_ = std::move(s.max_probs);
    pseudo_labels_ = std::move(s.labels);
}

void CgmatchStep::update_queues() {
    enter(Phase::UpdateQueues);
    for (std::size_t i = 0; i < batch_.unlabeled_ids.size(); ++i)
        state_.tracker.record_prediction(batch_.unlabeled_ids[i], pseudo_labels_[i]);
    count_gaps_.clear();
    for (auto id : batch_.unlabeled_ids)
        count_gaps_.push_back(static_cast<double>(state_.tracker.count_gap(id)));
}

void CgmatchStep::update_thresholds() {
    enter(Phase::UpdateThresholds);
    const auto means = fds::batch_means(max_probs_, count_gaps_);
    auto& th = state_.thresholds;
    if (!th.initialized)
        fds::initialize(th, means);
    else
        fds::ema_update(th, means);
    const int k = state_.tracker.classes();
    if (th.mode == fds::ThresholdMode::SelfAdaptive)
        selection_ = {fds::sat_thresholds(th, probs_weak_), th.tau_a};
    else
        selection_ = fds::SelectionThresholds::uniform(th.tau_e, th.tau_a, k);
    record_.mean_confidence = means.confidence;
    record_.mean_count_gap = means.count_gap;
}

void CgmatchStep::select() {
    enter(Phase::Select);
    partition_ = fds::partition(batch_.unlabeled_ids, max_probs_, pseudo_labels_, count_gaps_,
                                selection_);
    std::size_t confident = 0;
    for (std::size_t i = 0; i < max_probs_.size(); ++i)
        confident += max_probs_[i] >= selection_.easy_by_class[pseudo_labels_[i]];
    record_.n_confident = confident;
}

void CgmatchStep::optimize() {
    enter(Phase::Optimize);
    const double lambda_a = losses::lambda_a_schedule(t_, config_.warmup, config_.iterations);
    ViewOutputs v{std::move(cache_), probs_labeled_, probs_weak_, probs_strong_};
    auto obj = objective(config_, state_.model, v, batch_, partition_, config_.lambda_e, lambda_a);
    loss_ = obj.loss;
    record_.lr = diffnet::cosine_lr(state_.optimizer.iteration, state_.optimizer.total_iterations,
                                    state_.optimizer.base_lr);
    diffnet::sgd_step(state_.model, obj.grads, state_.optimizer);

    record_.iteration = t_;
    record_.loss = loss_;
    record_.tau_e = state_.thresholds.tau_e;
    record_.tau_a = state_.thresholds.tau_a;
    record_.n_easy = partition_.easy.size();
    record_.n_ambiguous = partition_.ambiguous.size();
    record_.n_hard = partition_.hard.size();
    record_.batch_unlabeled = batch_.unlabeled_ids.size();
}

ObjectiveGradient cgmatch_gradient(const RunConfig& config, const diffnet::ModelParams& model,
                                   const datasets::Batch& batch, const fds::Partition& partition,
                                   double lambda_e, double lambda_a) {
    const ViewOutputs v = forward_views(model, batch);
    return objective(config, model, v, batch, partition, lambda_e, lambda_a);
}

StepResult train_step(const RunConfig& config, const TrainerState& state,
                      const datasets::Batch& batch, std::uint64_t t) {
    switch (config.method) {
        case Method::FixMatchBaseline:
            return fixmatch_step(config, state, batch, t);
        case Method::CGMatch: {
            StepResult res{state, {}, {}, {}};
            CgmatchStep step(config, res.state, batch, t);
            step.pseudo_label();
            step.update_queues();
            step.update_thresholds();
            step.select();
            step.optimize();
            res.loss = step.loss();
            res.partition = step.partition();
            res.record = step.record();
            return res;
        }
        case Method::SupervisedOnly:
            break;
    }
    throw InvalidInput("train_step: SupervisedOnly has no unsupervised phase");
}

RunArtifacts run(const RunConfig& config, const datasets::Dataset& dataset, RunObserver* observer) {
    config.validate();
    TrainerState state = make_initial_state(config, dataset);
    auto rng = datasets::BatchRng::from_seed(derive_seed(config.seed, 1));
    RunArtifacts artifacts{state.model, state.tracker, {}, {}};

    warmup_impl(config, dataset, state, rng, observer, &artifacts);

    if (config.method != Method::SupervisedOnly) {
        const auto augment = resolve_augment(config, dataset);
        const datasets::BatchRequest request{config.batch_labeled, config.ratio, true};
        for (std::uint64_t t = config.warmup; t <= config.iterations; ++t) {
            const auto batch = datasets::draw_batch(dataset, request, augment, rng);
            StepResult res = train_step(config, state, batch, t);
            state = std::move(res.state);
            artifacts.iterations.push_back(res.record);
            if (observer) {
                observer->on_iteration(res.record);
                if (config.partition_log_every > 0 &&
                    on_cadence(t, config.partition_log_every, config.iterations))
                    observer->on_partition(t, res.partition);
            }
            emit_eval_and_probe(config, dataset, state, t, &res.partition, artifacts, observer);
        }
    }
    artifacts.model = std::move(state.model);
    artifacts.tracker = std::move(state.tracker);
    return artifacts;
}

}  // namespace cgmatch::trainer
