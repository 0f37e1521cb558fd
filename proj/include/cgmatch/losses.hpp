#pragma once

// Training objectives on softmax outputs. Each loss returns its value and,
// when given a gradient matrix, accumulates scale * dL/dlogits into it.
// Pseudo-labels and selection masks are treated as constants. A scale of
// exactly 0 adds nothing to the gradient.

#include <cstdint>
#include <span>

#include "cgmatch/errors.hpp"
#include "cgmatch/fds.hpp"
#include "cgmatch/matrix.hpp"

namespace cgmatch::losses {

// Probabilities are clamped to [kProbFloor, 1] before log and pow.
inline constexpr double kProbFloor = 1e-12;

// Mean cross-entropy of labeled predictions.
double supervised_ce(const Matrix& probs, std::span<const int> labels, Matrix* dlogits = nullptr,
                     double scale = 1.0);

// Confidence-masked consistency loss on the strong view:
// (1/B) sum 1(max p_weak > tau) H(argmax p_weak, p_strong).
double fixmatch_unsup(const Matrix& probs_weak, const Matrix& probs_strong, double tau,
                      Matrix* dlogits_strong = nullptr, double scale = 1.0);

// Mean cross-entropy of strong-view predictions against the easy set's
// pseudo-labels; 0 for an empty set.
double easy_ce(std::span<const fds::Selection> easy, const Matrix& probs_strong,
               Matrix* dlogits_strong = nullptr, double scale = 1.0);

// Two-view generalized cross-entropy over the ambiguous set:
// (1/|A|) sum (1 - p_w(y)^q)/q + (1 - p_s(y)^q)/q; 0 for an empty set.
// Gradients flow through both views unless detach_weak is set.
double ambiguous_gce(std::span<const fds::Selection> ambiguous, const Matrix& probs_weak,
                     const Matrix& probs_strong, double q, Matrix* dlogits_weak = nullptr,
                     Matrix* dlogits_strong = nullptr, double scale = 1.0,
                     bool detach_weak = false);

// ((t - t0) / (T - t0))^2 for t0 <= t <= T.
double lambda_a_schedule(std::uint64_t t, std::uint64_t t0, std::uint64_t total);

struct ScheduleConfig {
    double lambda_e = 1.0;
    double q = 0.7;
    double lambda_u = 1.0;  // FixMatch baseline weight
    std::uint64_t warmup = 2048;
    std::uint64_t total = 20000;

    void validate() const;
};

struct LossBreakdown {
    double supervised = 0.0;
    double easy = 0.0;
    double ambiguous = 0.0;
    double lambda_e = 0.0;
    double lambda_a = 0.0;
    double total = 0.0;
    std::size_t n_easy = 0;
    std::size_t n_ambiguous = 0;
};

class NonFiniteLoss : public DivergenceError {
public:
    NonFiniteLoss(const std::string& what, LossBreakdown breakdown)
        : DivergenceError(what), breakdown_(breakdown) {}
    const LossBreakdown& breakdown() const { return breakdown_; }

private:
    LossBreakdown breakdown_;
};

// L_s + lambda_e L_e + lambda_a L_a; throws NonFiniteLoss if anything is
// not finite.
LossBreakdown total_loss(double supervised, double easy, double ambiguous, double lambda_e,
                         double lambda_a, std::size_t n_easy = 0, std::size_t n_ambiguous = 0);

}  // namespace cgmatch::losses
