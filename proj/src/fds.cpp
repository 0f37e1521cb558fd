#include "cgmatch/fds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cgmatch/errors.hpp"

namespace cgmatch::fds {

std::string to_string(ThresholdMode m) {
    switch (m) {
        case ThresholdMode::GlobalEMA: return "GlobalEMA";
        case ThresholdMode::SelfAdaptive: return "SelfAdaptive";
        case ThresholdMode::Fixed: return "Fixed";
    }
    return "?";
}

ThresholdMode parse_threshold_mode(const std::string& s) {
    if (s == "GlobalEMA") return ThresholdMode::GlobalEMA;
    if (s == "SelfAdaptive") return ThresholdMode::SelfAdaptive;
    if (s == "Fixed") return ThresholdMode::Fixed;
    throw ConfigError("unknown thresholding mode '" + s + "' (GlobalEMA, SelfAdaptive, Fixed)");
}

double clamp_threshold(double tau, double lo, double hi) {
    if (lo > hi) throw ConfigError("clamp range has lo > hi");
    return std::min(hi, std::max(lo, tau));
}

BatchMeans batch_means(std::span<const double> max_probs, std::span<const double> count_gaps) {
    if (max_probs.empty()) throw InvalidInput("batch_means: empty batch");
    if (max_probs.size() != count_gaps.size())
        throw InvalidInput("batch_means: confidence and Count-Gap arrays differ in length");
    double se = 0.0, sa = 0.0;
    for (std::size_t i = 0; i < max_probs.size(); ++i) {
        se += max_probs[i];
        sa += count_gaps[i];
    }
    const auto n = static_cast<double>(max_probs.size());
    return {se / n, sa / n};
}

void ThresholdState::validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("EMA momentum must be in [0, 1)");
    if (clamp && clamp->lo > clamp->hi) throw ConfigError("clamp range has lo > hi");
    if (clamp && (clamp->lo < 0.0 || clamp->hi > 1.0))
        throw ConfigError("clamp range must lie inside [0, 1]");
}

ThresholdState make_threshold_state(ThresholdMode mode, double momentum,
                                    std::optional<ClampRange> clamp, double fixed_tau_e) {
    ThresholdState s;
    s.mode = mode;
    s.momentum = momentum;
    s.clamp = clamp;
    s.validate();
    if (mode == ThresholdMode::Fixed) {
        if (!(fixed_tau_e >= 0.0 && fixed_tau_e <= 1.0))
            throw ConfigError("fixed confidence threshold must be in [0, 1]");
        s.tau_e = clamp ? clamp_threshold(fixed_tau_e, clamp->lo, clamp->hi) : fixed_tau_e;
    }
    return s;
}

namespace {

double clamped(const ThresholdState& s, double tau) {
    return s.clamp ? clamp_threshold(tau, s.clamp->lo, s.clamp->hi) : tau;
}

}  // namespace

void initialize(ThresholdState& state, const BatchMeans& means) {
    if (state.mode != ThresholdMode::Fixed) state.tau_e = clamped(state, means.confidence);
    state.tau_a = means.count_gap;
    state.initialized = true;
}

void ema_update(ThresholdState& state, const BatchMeans& means) {
    const double m = state.momentum;
    if (state.mode != ThresholdMode::Fixed)
        state.tau_e = clamped(state, m * state.tau_e + (1.0 - m) * means.confidence);
    state.tau_a = m * state.tau_a + (1.0 - m) * means.count_gap;
}

std::vector<double> sat_thresholds(ThresholdState& state, const Matrix& probs) {
    if (probs.rows() == 0) throw InvalidInput("sat_thresholds: empty batch");
    const std::size_t k = probs.cols();
    const auto n = static_cast<double>(probs.rows());
    std::vector<double> mean_probs(k, 0.0);
    double mean_conf = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        mean_conf += *std::max_element(row.begin(), row.end());
        for (std::size_t c = 0; c < k; ++c) mean_probs[c] += row[c];
    }
    mean_conf /= n;
    for (double& v : mean_probs) v /= n;

    auto& cw = state.classwise;
    const double m = state.momentum;
    if (!cw.initialized) {
        cw.global = mean_conf;
        cw.per_class = mean_probs;
        cw.initialized = true;
    } else {
        if (cw.per_class.size() != k) throw InvalidInput("sat_thresholds: class count changed");
        cw.global = m * cw.global + (1.0 - m) * mean_conf;
        for (std::size_t c = 0; c < k; ++c)
            cw.per_class[c] = m * cw.per_class[c] + (1.0 - m) * mean_probs[c];
    }
    const double mx = *std::max_element(cw.per_class.begin(), cw.per_class.end());
    std::vector<double> tau(k);
    for (std::size_t c = 0; c < k; ++c)
        tau[c] = clamped(state, mx > 0.0 ? cw.per_class[c] / mx * cw.global : cw.global);
    return tau;
}

SelectionThresholds SelectionThresholds::uniform(double tau_e, double tau_a, int classes) {
    return SelectionThresholds{std::vector<double>(static_cast<std::size_t>(classes), tau_e), tau_a};
}

Partition partition(std::span<const SampleId> ids, std::span<const double> max_probs,
                    std::span<const int> pseudo_labels, std::span<const double> count_gaps,
                    const SelectionThresholds& thresholds) {
    const std::size_t n = ids.size();
    if (max_probs.size() != n || pseudo_labels.size() != n || count_gaps.size() != n)
        throw InvalidInput("partition: input arrays differ in length");
    if (!std::isfinite(thresholds.ambiguity) ||
        std::any_of(thresholds.easy_by_class.begin(), thresholds.easy_by_class.end(),
                    [](double t) { return !std::isfinite(t); }))
        throw InvalidInput("partition: non-finite threshold");
    Partition p;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = pseudo_labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= thresholds.easy_by_class.size())
            throw InvalidInput("partition: pseudo-label out of range");
        const Selection s{i, ids[i], y};
        if (max_probs[i] >= thresholds.easy_by_class[y])
            p.easy.push_back(s);
        else if (count_gaps[i] >= thresholds.ambiguity)
            p.ambiguous.push_back(s);
        else
            p.hard.push_back(s);
    }
    return p;
}

}  // namespace cgmatch::fds
