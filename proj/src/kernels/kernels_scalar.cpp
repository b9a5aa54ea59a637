/*
 Copyright 2026 The koopmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "koopmpc/kernels.hpp"

namespace koopmpc::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* W, const double* x, const double* bias, double* y, std::size_t rows,
                 std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = W + r * cols;
        double s = bias ? bias[r] : 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
}

void gemv_t_acc_scalar(const double* W, const double* d, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double dr = d[r];
        const double* row = W + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += dr * row[c];
    }
}

void ger_scalar(double alpha, const double* d, const double* x, double* W, std::size_t rows,
                std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = alpha * d[r];
        double* row = W + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += s * x[c];
    }
}

const KernelTable kScalar{"scalar", dot_scalar, axpy_scalar, gemv_scalar, gemv_t_acc_scalar, ger_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace koopmpc::kernels
