#include "cgmatch/kernels.hpp"

#include <algorithm>
#include <vector>

#include <omp.h>

namespace cgmatch::kernels {

namespace {

constexpr std::size_t kBlock = 16;  // columns held in registers

// out[j] = init[j] + sum_k a[k] * m[k * ld + j] for j < width, with k
// ascending. init may be null (zeros).
inline void combine_row(std::size_t n, const double* __restrict a, const double* __restrict m,
                        std::size_t ld, std::size_t width, const double* __restrict init,
                        double* __restrict out) {
    std::size_t j0 = 0;
    for (; j0 + kBlock <= width; j0 += kBlock) {
        double acc[kBlock];
        for (std::size_t j = 0; j < kBlock; ++j) acc[j] = init ? init[j0 + j] : 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double* mk = m + k * ld + j0;
            for (std::size_t j = 0; j < kBlock; ++j) acc[j] += a[k] * mk[j];
        }
        for (std::size_t j = 0; j < kBlock; ++j) out[j0 + j] = acc[j];
    }
    for (std::size_t j = j0; j < width; ++j) {
        double acc = init ? init[j] : 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += a[k] * m[k * ld + j];
        out[j] = acc;
    }
}

std::vector<double> transpose(std::size_t rows, std::size_t cols, const double* a) {
    std::vector<double> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
    return t;
}

inline void forward_row(DenseShape s, std::size_t r, const double* x, const double* w,
                        const double* b, double* y) {
    combine_row(s.in, x + r * s.in, w, s.out, s.out, b, y + r * s.out);
}

// wt is W transposed, [out x in].
inline void backward_input_row(DenseShape s, std::size_t r, const double* dy, const double* wt,
                               double* dx) {
    combine_row(s.out, dy + r * s.out, wt, s.in, s.in, nullptr, dx + r * s.in);
}

// Rows [k_begin, k_end) of dW = x^T dy, summed over batch rows in ascending
// order.
inline void weight_grad_rows(DenseShape s, std::size_t k_begin, std::size_t k_end,
                             const double* __restrict x, const double* __restrict dy,
                             double* __restrict dw) {
    std::fill(dw + k_begin * s.out, dw + k_end * s.out, 0.0);
    for (std::size_t r = 0; r < s.rows; ++r) {
        const double* xr = x + r * s.in;
        const double* dyr = dy + r * s.out;
        for (std::size_t k = k_begin; k < k_end; ++k) {
            double* dwk = dw + k * s.out;
            for (std::size_t j = 0; j < s.out; ++j) dwk[j] += xr[k] * dyr[j];
        }
    }
}

inline void bias_grad(DenseShape s, const double* dy, double* db) {
    std::fill(db, db + s.out, 0.0);
    for (std::size_t r = 0; r < s.rows; ++r) {
        const double* dyr = dy + r * s.out;
        for (std::size_t j = 0; j < s.out; ++j) db[j] += dyr[j];
    }
}

}  // namespace

namespace serial {

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
    for (std::size_t r = 0; r < s.rows; ++r) forward_row(s, r, x.data(), w.data(), b.data(), y.data());
}

void dense_backward_input(DenseShape s, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx) {
    const auto wt = transpose(s.in, s.out, w.data());
    for (std::size_t r = 0; r < s.rows; ++r) backward_input_row(s, r, dy.data(), wt.data(), dx.data());
}

void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db) {
    weight_grad_rows(s, 0, s.in, x.data(), dy.data(), dw.data());
    bias_grad(s, dy.data(), db.data());
}

void relu_forward(std::span<double> z) {
    for (double& v : z) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> activated, std::span<double> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(activated[i] > 0.0)) grad[i] = 0.0;
}

}  // namespace serial

namespace omp {

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
    const auto rows = static_cast<long>(s.rows);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r)
        forward_row(s, static_cast<std::size_t>(r), x.data(), w.data(), b.data(), y.data());
}

void dense_backward_input(DenseShape s, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx) {
    const auto wt = transpose(s.in, s.out, w.data());
    const auto rows = static_cast<long>(s.rows);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r)
        backward_input_row(s, static_cast<std::size_t>(r), dy.data(), wt.data(), dx.data());
}

void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db) {
#pragma omp parallel
    {
        const auto nt = static_cast<std::size_t>(omp_get_num_threads());
        const auto t = static_cast<std::size_t>(omp_get_thread_num());
        const std::size_t begin = s.in * t / nt, end = s.in * (t + 1) / nt;
        if (begin < end) weight_grad_rows(s, begin, end, x.data(), dy.data(), dw.data());
    }
    bias_grad(s, dy.data(), db.data());
}

void relu_forward(std::span<double> z) {
    const auto n = static_cast<long>(z.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) z[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward(std::span<const double> activated, std::span<double> grad) {
    const auto n = static_cast<long>(grad.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        if (!(activated[i] > 0.0)) grad[i] = 0.0;
}

}  // namespace omp

void dense_forward(Backend be, DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
    be == Backend::OpenMP ? omp::dense_forward(s, x, w, b, y) : serial::dense_forward(s, x, w, b, y);
}

void dense_backward_input(Backend be, DenseShape s, std::span<const double> dy,
                          std::span<const double> w, std::span<double> dx) {
    be == Backend::OpenMP ? omp::dense_backward_input(s, dy, w, dx)
                          : serial::dense_backward_input(s, dy, w, dx);
}

void dense_backward_params(Backend be, DenseShape s, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dw,
                           std::span<double> db) {
    be == Backend::OpenMP ? omp::dense_backward_params(s, x, dy, dw, db)
                          : serial::dense_backward_params(s, x, dy, dw, db);
}

void relu_forward(Backend be, std::span<double> z) {
    be == Backend::OpenMP ? omp::relu_forward(z) : serial::relu_forward(z);
}

void relu_backward(Backend be, std::span<const double> activated, std::span<double> grad) {
    be == Backend::OpenMP ? omp::relu_backward(activated, grad)
                          : serial::relu_backward(activated, grad);
}

}  // namespace cgmatch::kernels
