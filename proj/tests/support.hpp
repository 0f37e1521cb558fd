#pragma once

// Shared fixtures for the unit and acceptance tests: random instances and a
// central-difference gradient checker for the training losses.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cgmatch/diffnet.hpp"
#include "cgmatch/fds.hpp"
#include "cgmatch/losses.hpp"

namespace cgmatch::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = n(rng);
    return m;
}

inline int argmax(std::span<const double> row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

enum class LossKind { SupervisedCE, FixMatchUnsup, EasyCE, AmbiguousGCE };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::SupervisedCE: return "supervised CE";
        case LossKind::FixMatchUnsup: return "FixMatch unsupervised";
        case LossKind::EasyCE: return "easy CE";
        case LossKind::AmbiguousGCE: return "two-view GCE";
    }
    return "?";
}

// One random (model, batch) draw. Inputs are stacked as [weak; strong] for
// the unlabeled losses.
struct GradInstance {
    diffnet::ModelParams model;
    Matrix x;
    std::vector<int> labels;          // SupervisedCE
    std::vector<fds::Selection> set;  // EasyCE / AmbiguousGCE
    double tau = 0.0;                 // FixMatchUnsup
    std::size_t n = 0;                // rows per view
};

// Scalar loss of the instance as a function of the model parameters, with
// the analytic logit gradient when requested.
inline double instance_loss(LossKind kind, const GradInstance& g, const diffnet::ModelParams& model,
                            Matrix* dlogits) {
    const Matrix probs = diffnet::softmax_rows(diffnet::forward(model, g.x));
    if (kind == LossKind::SupervisedCE) {
        if (dlogits) *dlogits = Matrix(probs.rows(), probs.cols());
        return losses::supervised_ce(probs, g.labels, dlogits);
    }
    Matrix pw(g.n, probs.cols()), ps(g.n, probs.cols());
    for (std::size_t i = 0; i < g.n; ++i) {
        std::copy(probs.row(i).begin(), probs.row(i).end(), pw.row(i).begin());
        std::copy(probs.row(g.n + i).begin(), probs.row(g.n + i).end(), ps.row(i).begin());
    }
    Matrix dw(g.n, probs.cols()), ds(g.n, probs.cols());
    double loss = 0.0;
    switch (kind) {
        case LossKind::FixMatchUnsup:
            loss = losses::fixmatch_unsup(pw, ps, g.tau, &ds);
            break;
        case LossKind::EasyCE:
            loss = losses::easy_ce(g.set, ps, &ds);
            break;
        case LossKind::AmbiguousGCE:
            loss = losses::ambiguous_gce(g.set, pw, ps, 0.7, &dw, &ds);
            break;
        case LossKind::SupervisedCE:
            break;
    }
    if (dlogits) {
        *dlogits = Matrix(2 * g.n, probs.cols());
        for (std::size_t i = 0; i < g.n; ++i) {
            std::copy(dw.row(i).begin(), dw.row(i).end(), dlogits->row(i).begin());
            std::copy(ds.row(i).begin(), ds.row(i).end(), dlogits->row(g.n + i).begin());
        }
    }
    return loss;
}

inline GradInstance make_instance(LossKind kind, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(2, 5), width(3, 6), classes(2, 5), rows(2, 6);
    const std::size_t d = dim(rng), k = classes(rng);
    GradInstance g;
    g.model = diffnet::init_params({d, {width(rng), width(rng)}, k}, rng());
    g.n = rows(rng);
    // Larger inputs give peaked predictions, so some rows pass the masks.
    const Matrix base = random_matrix(g.n, d, rng, 2.0);
    if (kind == LossKind::SupervisedCE) {
        g.x = base;
        std::uniform_int_distribution<int> label(0, static_cast<int>(k) - 1);
        for (std::size_t i = 0; i < g.n; ++i) g.labels.push_back(label(rng));
        return g;
    }
    // Strong view: the weak view plus noise.
    g.x = Matrix(2 * g.n, d);
    const Matrix noise = random_matrix(g.n, d, rng, 0.5);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            g.x(i, c) = base(i, c);
            g.x(g.n + i, c) = base(i, c) + noise(i, c);
        }
    const Matrix pw = diffnet::softmax_rows(diffnet::forward(g.model, base));
    std::vector<double> maxp;
    for (std::size_t i = 0; i < g.n; ++i) maxp.push_back(*std::max_element(pw.row(i).begin(), pw.row(i).end()));
    if (kind == LossKind::FixMatchUnsup) {
        // A threshold between the two middle confidences keeps both mask
        // values present and far from the finite-difference perturbation.
        auto sorted = maxp;
        std::sort(sorted.begin(), sorted.end());
        g.tau = 0.5 * (sorted[g.n / 2 - 1] + sorted[g.n / 2]);
        if (sorted[g.n / 2] - sorted[g.n / 2 - 1] < 1e-6) g.tau = sorted.front() - 1e-3;
        return g;
    }
    std::bernoulli_distribution pick(0.7);
    for (std::size_t i = 0; i < g.n; ++i)
        if (pick(rng) || g.set.empty()) g.set.push_back({i, SampleId{static_cast<std::uint32_t>(i)}, argmax(pw.row(i))});
    return g;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t parameters = 0;
};

// |a - n| / max(|a|, |n|, 1e-6) over every parameter, central differences
// with step h.
inline GradCheck check_gradient(LossKind kind, const GradInstance& g, double h = 1e-5) {
    Matrix dlogits;
    instance_loss(kind, g, g.model, &dlogits);
    diffnet::ForwardCache cache;
    diffnet::forward(g.model, g.x, &cache);
    const auto analytic = diffnet::backward(g.model, cache, dlogits);

    GradCheck out;
    auto model = g.model;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double saved = params[i];
                params[i] = saved + h;
                const double up = instance_loss(kind, g, model, nullptr);
                params[i] = saved - h;
                const double down = instance_loss(kind, g, model, nullptr);
                params[i] = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double a = grad[i];
                const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
                out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
                ++out.parameters;
            }
        };
        probe(model.layers[l].weights, analytic.layers[l].weights);
        probe(model.layers[l].bias, analytic.layers[l].bias);
    }
    return out;
}

}  // namespace cgmatch::testing
