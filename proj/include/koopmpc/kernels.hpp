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

#pragma once

// Dense inner-loop kernels used by the encoder and the bilinear map.
//
// Every kernel has a scalar reference implementation; an AVX2/FMA variant
// is compiled when the toolchain supports it and picked at runtime when the
// CPU does; select() overrides the choice.
// Matrices are row-major, `rows x cols`, densely packed.

#include <cstddef>
#include <span>
#include <string_view>

namespace koopmpc::kernels {

struct KernelTable {
    const char* name;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y = W x + bias (bias may be null)
    void (*gemv)(const double* W, const double* x, const double* bias, double* y, std::size_t rows,
                 std::size_t cols);
    // out += W^T d
    void (*gemv_t_acc)(const double* W, const double* d, double* out, std::size_t rows, std::size_t cols);
    // W += alpha * d x^T
    void (*ger)(double alpha, const double* d, const double* x, double* W, std::size_t rows,
                std::size_t cols);
};

const KernelTable& scalar_table();

// Null when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// Table in use. Resolved once from the CPU.
const KernelTable& active();

// Force a table by name ("scalar", "avx2", "auto"). Returns false when the
// requested variant is unavailable; the active table is then unchanged.
bool select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace koopmpc::kernels
