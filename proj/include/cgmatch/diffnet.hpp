#pragma once

// Minimal differentiable MLP classifier: dense layers with ReLU hidden units
// and a linear logit head, reverse-mode gradients, SGD with momentum and a
// cosine learning-rate schedule.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "cgmatch/kernels.hpp"
#include "cgmatch/matrix.hpp"

namespace cgmatch::diffnet {

struct Architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t classes = 0;

    bool operator==(const Architecture&) const = default;
};

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // [in x out]
    std::vector<double> bias;     // [out]

    bool operator==(const DenseLayer&) const = default;
};

struct ModelParams {
    Architecture arch;
    std::vector<DenseLayer> layers;
    kernels::Backend backend = kernels::Backend::OpenMP;

    std::size_t parameter_count() const;
    bool all_finite() const;
};

// Same shape as the parameters it was computed for.
struct GradientSet {
    std::vector<DenseLayer> layers;

    static GradientSet zeros_like(const ModelParams& params);
    bool all_finite() const;
};

// Activations kept by forward() for the matching backward() call.
// inputs[l] is the input to layer l (post-ReLU for l > 0).
struct ForwardCache {
    std::vector<Matrix> inputs;

    std::size_t rows() const { return inputs.empty() ? 0 : inputs.front().rows(); }
    ForwardCache gather_rows(std::span<const std::size_t> rows) const;
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], deterministic per seed.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

Matrix forward(const ModelParams& params, const Matrix& features, ForwardCache* cache = nullptr);

// Gradient of a scalar loss with respect to every parameter given dL/dlogits.
GradientSet backward(const ModelParams& params, const ForwardCache& cache,
                     const Matrix& output_grad);

std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

// eta0 * cos(7 pi t / (16 T)).
double cosine_lr(std::uint64_t t, std::uint64_t total, double base_lr);

struct OptimizerState {
    std::vector<DenseLayer> velocity;
    double base_lr = 0.03;
    double momentum = 0.9;
    std::uint64_t iteration = 0;
    std::uint64_t total_iterations = 1;
};

OptimizerState make_optimizer(const ModelParams& params, double base_lr, double momentum,
                              std::uint64_t total_iterations);

// v <- beta v + g; theta <- theta - eta_t v, with eta_t from cosine_lr at the
// state's current iteration; the iteration counter then advances. A
// non-finite gradient throws DivergenceError and leaves both untouched.
void sgd_step(ModelParams& params, const GradientSet& grads, OptimizerState& state);

void save_model(std::ostream& os, const ModelParams& params);
ModelParams load_model(std::istream& is);

}  // namespace cgmatch::diffnet
