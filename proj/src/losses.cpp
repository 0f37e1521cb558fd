#include "cgmatch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cgmatch::losses {

namespace {

std::size_t argmax(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Adds coef * dH(y, softmax(z))/dz = coef * (p - e_y) to grad, unless p_y was
// clamped.
void add_ce_grad(std::span<const double> p, std::size_t y, double coef, std::span<double> grad) {
    if (p[y] < kProbFloor) return;
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] += coef * p[j];
    grad[y] -= coef;
}

// Adds coef * d[(1 - p_y^q)/q]/dz = -coef * p_y^q (e_y - p) to grad.
void add_gce_grad(std::span<const double> p, std::size_t y, double q, double coef,
                  std::span<double> grad) {
    if (p[y] < kProbFloor) return;
    const double pq = std::pow(p[y], q);
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] += coef * pq * p[j];
    grad[y] -= coef * pq;
}

double ce_term(double p) { return -std::log(std::max(p, kProbFloor)); }
double gce_term(double p, double q) { return (1.0 - std::pow(std::max(p, kProbFloor), q)) / q; }

void check_grad_shape(const Matrix* g, const Matrix& probs, const char* who) {
    if (g && (g->rows() != probs.rows() || g->cols() != probs.cols()))
        throw InvalidInput(std::string(who) + ": gradient matrix shape differs from probabilities");
}

}  // namespace

double supervised_ce(const Matrix& probs, std::span<const int> labels, Matrix* dlogits,
                     double scale) {
    if (probs.rows() == 0) throw InvalidInput("supervised_ce: empty batch");
    if (labels.size() != probs.rows()) throw InvalidInput("supervised_ce: label count mismatch");
    check_grad_shape(dlogits, probs, "supervised_ce");
    const auto n = static_cast<double>(probs.rows());
    double sum = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
            throw InvalidInput("supervised_ce: label out of range");
        sum += ce_term(probs(r, y));
        if (dlogits && scale != 0.0) add_ce_grad(probs.row(r), y, scale / n, dlogits->row(r));
    }
    return sum / n;
}

double fixmatch_unsup(const Matrix& probs_weak, const Matrix& probs_strong, double tau,
                      Matrix* dlogits_strong, double scale) {
    if (probs_weak.rows() == 0) throw InvalidInput("fixmatch_unsup: empty batch");
    if (probs_weak.rows() != probs_strong.rows() || probs_weak.cols() != probs_strong.cols())
        throw InvalidInput("fixmatch_unsup: weak and strong batches are not aligned");
    check_grad_shape(dlogits_strong, probs_strong, "fixmatch_unsup");
    const auto n = static_cast<double>(probs_weak.rows());
    double sum = 0.0;
    for (std::size_t r = 0; r < probs_weak.rows(); ++r) {
        auto pw = probs_weak.row(r);
        const std::size_t y = argmax(pw);
        if (!(pw[y] > tau)) continue;
        sum += ce_term(probs_strong(r, y));
        if (dlogits_strong && scale != 0.0)
            add_ce_grad(probs_strong.row(r), y, scale / n, dlogits_strong->row(r));
    }
    return sum / n;
}

double easy_ce(std::span<const fds::Selection> easy, const Matrix& probs_strong,
               Matrix* dlogits_strong, double scale) {
    if (easy.empty()) return 0.0;
    check_grad_shape(dlogits_strong, probs_strong, "easy_ce");
    const auto n = static_cast<double>(easy.size());
    double sum = 0.0;
    for (const auto& s : easy) {
        if (s.row >= probs_strong.rows()) throw InvalidInput("easy_ce: selection row out of range");
        const auto y = static_cast<std::size_t>(s.pseudo_label);
        sum += ce_term(probs_strong(s.row, y));
        if (dlogits_strong && scale != 0.0)
            add_ce_grad(probs_strong.row(s.row), y, scale / n, dlogits_strong->row(s.row));
    }
    return sum / n;
}

double ambiguous_gce(std::span<const fds::Selection> ambiguous, const Matrix& probs_weak,
                     const Matrix& probs_strong, double q, Matrix* dlogits_weak,
                     Matrix* dlogits_strong, double scale, bool detach_weak) {
    if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("ambiguous_gce: q must be in (0, 1]");
    if (ambiguous.empty()) return 0.0;
    if (probs_weak.rows() != probs_strong.rows() || probs_weak.cols() != probs_strong.cols())
        throw InvalidInput("ambiguous_gce: weak and strong batches are not aligned");
    check_grad_shape(dlogits_weak, probs_weak, "ambiguous_gce");
    check_grad_shape(dlogits_strong, probs_strong, "ambiguous_gce");
    const auto n = static_cast<double>(ambiguous.size());
    double sum = 0.0;
    for (const auto& s : ambiguous) {
        if (s.row >= probs_weak.rows()) throw InvalidInput("ambiguous_gce: selection row out of range");
        const auto y = static_cast<std::size_t>(s.pseudo_label);
        sum += gce_term(probs_weak(s.row, y), q) + gce_term(probs_strong(s.row, y), q);
        if (scale == 0.0) continue;
        if (dlogits_weak && !detach_weak)
            add_gce_grad(probs_weak.row(s.row), y, q, scale / n, dlogits_weak->row(s.row));
        if (dlogits_strong)
            add_gce_grad(probs_strong.row(s.row), y, q, scale / n, dlogits_strong->row(s.row));
    }
    return sum / n;
}

double lambda_a_schedule(std::uint64_t t, std::uint64_t t0, std::uint64_t total) {
    if (t0 >= total) throw ConfigError("lambda_a_schedule: warm-up must end before the last iteration");
    if (t < t0) throw InvalidInput("lambda_a_schedule: undefined during warm-up (t < t0)");
    if (t > total) throw InvalidInput("lambda_a_schedule: t exceeds total iterations");
    const double r = static_cast<double>(t - t0) / static_cast<double>(total - t0);
    return r * r;
}

void ScheduleConfig::validate() const {
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("GCE exponent q must be in (0, 1]");
    if (!(lambda_e >= 0.0) || !(lambda_u >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (warmup >= total) throw ConfigError("warm-up iterations must be fewer than total iterations");
}

LossBreakdown total_loss(double supervised, double easy, double ambiguous, double lambda_e,
                         double lambda_a, std::size_t n_easy, std::size_t n_ambiguous) {
    LossBreakdown b{supervised, easy, ambiguous, lambda_e, lambda_a, 0.0, n_easy, n_ambiguous};
    b.total = supervised + lambda_e * easy + lambda_a * ambiguous;
    for (double v : {supervised, easy, ambiguous, lambda_e, lambda_a, b.total})
        if (!std::isfinite(v))
            throw NonFiniteLoss("non-finite loss component (L_s=" + std::to_string(supervised) +
                                    ", L_e=" + std::to_string(easy) +
                                    ", L_a=" + std::to_string(ambiguous) + ")",
                                b);
    return b;
}

}  // namespace cgmatch::losses
