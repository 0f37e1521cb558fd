#pragma once

// Dense-layer kernels. Every kernel has a serial reference and an OpenMP
// version. Both compute each output element with the same summation order,
// so results agree regardless of thread count.
//
// Layouts (all row-major):
//   x   [rows x in]      layer input
//   W   [in x out]       weights
//   b   [out]            bias
//   y   [rows x out]     layer output
//   dy  [rows x out]     gradient w.r.t. y

#include <cstddef>
#include <span>

namespace cgmatch::kernels {

enum class Backend { Serial, OpenMP };

struct DenseShape {
    std::size_t rows = 0;
    std::size_t in = 0;
    std::size_t out = 0;
};

namespace serial {
void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(DenseShape s, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx);
void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db);
void relu_forward(std::span<double> z);
void relu_backward(std::span<const double> activated, std::span<double> grad);
}  // namespace serial

namespace omp {
void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(DenseShape s, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx);
void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db);
void relu_forward(std::span<double> z);
void relu_backward(std::span<const double> activated, std::span<double> grad);
}  // namespace omp

// Runtime dispatch on the chosen backend.
void dense_forward(Backend be, DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(Backend be, DenseShape s, std::span<const double> dy,
                          std::span<const double> w, std::span<double> dx);
void dense_backward_params(Backend be, DenseShape s, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dw,
                           std::span<double> db);
void relu_forward(Backend be, std::span<double> z);
void relu_backward(Backend be, std::span<const double> activated, std::span<double> grad);

}  // namespace cgmatch::kernels
