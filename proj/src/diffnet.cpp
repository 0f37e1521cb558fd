#include "cgmatch/diffnet.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "cgmatch/errors.hpp"
#include "cgmatch/text_io.hpp"

namespace cgmatch::diffnet {

namespace {

bool finite_all(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

DenseLayer zero_layer(const DenseLayer& like) {
    return DenseLayer{like.in, like.out, std::vector<double>(like.weights.size(), 0.0),
                      std::vector<double>(like.bias.size(), 0.0)};
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

bool ModelParams::all_finite() const {
    return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
        return finite_all(l.weights) && finite_all(l.bias);
    });
}

GradientSet GradientSet::zeros_like(const ModelParams& params) {
    GradientSet g;
    for (const auto& l : params.layers) g.layers.push_back(zero_layer(l));
    return g;
}

bool GradientSet::all_finite() const {
    return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
        return finite_all(l.weights) && finite_all(l.bias);
    });
}

ForwardCache ForwardCache::gather_rows(std::span<const std::size_t> rows) const {
    ForwardCache out;
    out.inputs.reserve(inputs.size());
    for (const auto& m : inputs) out.inputs.push_back(m.gather_rows(rows));
    return out;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
    if (arch.input_dim == 0 || arch.classes < 2)
        throw ConfigError("architecture needs input_dim >= 1 and classes >= 2");
    ModelParams p;
    p.arch = arch;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> dims{arch.input_dim};
    dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
    dims.push_back(arch.classes);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l + 1] == 0) throw ConfigError("hidden width must be positive");
        DenseLayer layer{dims[l], dims[l + 1], std::vector<double>(dims[l] * dims[l + 1]),
                         std::vector<double>(dims[l + 1])};
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& w : layer.weights) w = u(rng);
        for (double& b : layer.bias) b = u(rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

Matrix forward(const ModelParams& params, const Matrix& features, ForwardCache* cache) {
    if (features.rows() == 0) throw InvalidInput("forward: empty batch");
    if (features.cols() != params.arch.input_dim)
        throw InvalidInput("forward: feature dim " + std::to_string(features.cols()) +
                           " does not match model input dim " +
                           std::to_string(params.arch.input_dim));
    if (cache) cache->inputs.clear();

    Matrix x = features;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Matrix y(x.rows(), layer.out);
        kernels::dense_forward(params.backend, {x.rows(), layer.in, layer.out}, x.flat(),
                               layer.weights, layer.bias, y.flat());
        if (l + 1 < params.layers.size()) kernels::relu_forward(params.backend, y.flat());
        if (cache)
            cache->inputs.push_back(std::move(x));
        x = std::move(y);
    }
    return x;
}

GradientSet backward(const ModelParams& params, const ForwardCache& cache,
                     const Matrix& output_grad) {
    if (cache.inputs.size() != params.layers.size())
        throw ConsistencyError("backward: cache has " + std::to_string(cache.inputs.size()) +
                               " layers, model has " + std::to_string(params.layers.size()));
    if (output_grad.rows() != cache.rows() || output_grad.cols() != params.arch.classes)
        throw ConsistencyError("backward: output gradient shape does not match the cache");
    for (std::size_t l = 0; l < params.layers.size(); ++l)
        if (cache.inputs[l].cols() != params.layers[l].in || cache.inputs[l].rows() != cache.rows())
            throw ConsistencyError("backward: cache was not produced by these parameters");

    GradientSet grads = GradientSet::zeros_like(params);
    Matrix g = output_grad;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const auto& layer = params.layers[l];
        const kernels::DenseShape shape{g.rows(), layer.in, layer.out};
        kernels::dense_backward_params(params.backend, shape, cache.inputs[l].flat(), g.flat(),
                                       grads.layers[l].weights, grads.layers[l].bias);
        if (l == 0) break;
        Matrix dx(g.rows(), layer.in);
        kernels::dense_backward_input(params.backend, shape, g.flat(), layer.weights, dx.flat());
        kernels::relu_backward(params.backend, cache.inputs[l].flat(), dx.flat());
        g = std::move(dx);
    }
    return grads;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw InvalidInput("softmax: empty logits");
    if (!finite_all(logits)) throw InvalidInput("softmax: non-finite logit");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = softmax(logits.row(r));
        std::copy(row.begin(), row.end(), p.row(r).begin());
    }
    return p;
}

double cosine_lr(std::uint64_t t, std::uint64_t total, double base_lr) {
    if (total == 0) throw ConfigError("cosine_lr: total iterations must be positive");
    if (t > total) throw InvalidInput("cosine_lr: iteration exceeds total");
    return base_lr * std::cos(7.0 * std::numbers::pi * static_cast<double>(t) /
                              (16.0 * static_cast<double>(total)));
}

OptimizerState make_optimizer(const ModelParams& params, double base_lr, double momentum,
                              std::uint64_t total_iterations) {
    if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (total_iterations == 0) throw ConfigError("total iterations must be positive");
    OptimizerState s;
    for (const auto& l : params.layers) s.velocity.push_back(zero_layer(l));
    s.base_lr = base_lr;
    s.momentum = momentum;
    s.total_iterations = total_iterations;
    return s;
}

void sgd_step(ModelParams& params, const GradientSet& grads, OptimizerState& state) {
    if (grads.layers.size() != params.layers.size() ||
        state.velocity.size() != params.layers.size())
        throw ConsistencyError("sgd_step: gradient/parameter layer count mismatch");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (grads.layers[l].weights.size() != params.layers[l].weights.size() ||
            grads.layers[l].bias.size() != params.layers[l].bias.size())
            throw ConsistencyError("sgd_step: gradient shape mismatch at layer " +
                                   std::to_string(l));
        if (!finite_all(grads.layers[l].weights) || !finite_all(grads.layers[l].bias))
            throw DivergenceError("sgd_step: non-finite gradient in layer " + std::to_string(l) +
                                  " at iteration " + std::to_string(state.iteration));
    }
    const double lr = cosine_lr(state.iteration, state.total_iterations, state.base_lr);
    const double beta = state.momentum;
    auto update = [&](std::vector<double>& theta, std::vector<double>& v,
                      const std::vector<double>& g) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = beta * v[i] + g[i];
            theta[i] -= lr * v[i];
        }
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weights, state.velocity[l].weights, grads.layers[l].weights);
        update(params.layers[l].bias, state.velocity[l].bias, grads.layers[l].bias);
    }
    ++state.iteration;
}

void save_model(std::ostream& os, const ModelParams& params) {
    os << "cgmatch-model v1\n";
    os << "arch " << params.arch.input_dim;
    for (auto h : params.arch.hidden) os << ' ' << h;
    os << ' ' << params.arch.classes << '\n';
    auto write_vec = [&](const char* tag, const std::vector<double>& v) {
        os << tag;
        for (double x : v) os << ' ' << text_io::format_double(x);
        os << '\n';
    };
    for (const auto& l : params.layers) {
        write_vec("w", l.weights);
        write_vec("b", l.bias);
    }
}

ModelParams load_model(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "cgmatch-model v1")
        throw InvalidInput("load_model: missing model header");
    if (!std::getline(is, line) || line.rfind("arch ", 0) != 0)
        throw InvalidInput("load_model: missing arch line");
    std::vector<std::size_t> dims;
    for (auto tok : text_io::split(std::string_view(line).substr(5), ' '))
        dims.push_back(static_cast<std::size_t>(text_io::parse_int(tok)));
    if (dims.size() < 2) throw InvalidInput("load_model: malformed arch line");
    Architecture arch{dims.front(), std::vector<std::size_t>(dims.begin() + 1, dims.end() - 1),
                      dims.back()};
    ModelParams p = init_params(arch, 0);
    auto read_vec = [&](const char* tag, std::vector<double>& v) {
        if (!std::getline(is, line)) throw InvalidInput("load_model: truncated file");
        auto toks = text_io::split(line, ' ');
        if (toks.empty() || toks[0] != tag || toks.size() != v.size() + 1)
            throw InvalidInput("load_model: malformed '" + std::string(tag) + "' line");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = text_io::parse_double(toks[i + 1]);
    };
    for (auto& l : p.layers) {
        read_vec("w", l.weights);
        read_vec("b", l.bias);
    }
    return p;
}

}  // namespace cgmatch::diffnet
