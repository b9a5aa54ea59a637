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

// Encoder phi(x; theta) and the bilinear one-step map with exact
// reverse-mode gradients of the joint prediction / lifted-consistency loss.
//
// All trainable parameters live in one flat vector. Layout, in order:
//   for each encoder layer l:  W_l (out x in, row-major), b_l (out)
//   F (n x n, row-major), then G_1 .. G_m (n x n, row-major)
// where n = state_dim + feature_dim + fixed_dim. Hidden layers use tanh,
// the output layer is affine. `fixed_dim` counts parameter-free lifted
// coordinates supplied by the caller (the optional constraint observables).

#include <cstdint>
#include <span>
#include <vector>

#include "koopmpc/common.hpp"

namespace koopmpc {

struct NetworkShape {
    int state_dim = 13;
    int input_dim = 4;
    int feature_dim = 10;
    std::vector<int> hidden{100, 100};
    int fixed_dim = 0;

    int lifted_dim() const { return state_dim + feature_dim + fixed_dim; }
    bool operator==(const NetworkShape&) const = default;
};

struct Block {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct NetworkLayout {
    NetworkShape shape;
    std::vector<Block> weights;  // one per encoder layer
    std::vector<Block> biases;   // cols == 1
    Block F;
    std::vector<Block> G;
    std::size_t size = 0;

    static NetworkLayout make(const NetworkShape& shape);
    int layers() const { return static_cast<int>(weights.size()); }
    // True for entries penalised by the l2 term (all weights, F, G; no biases).
    std::vector<bool> regularized_mask() const;
};

class Parameters {
public:
    Parameters() = default;
    explicit Parameters(const NetworkShape& shape);

    const NetworkLayout& layout() const { return layout_; }
    const NetworkShape& shape() const { return layout_.shape; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

    Eigen::Map<RowMat> matrix(const Block& b) { return {values_.data() + b.offset, b.rows, b.cols}; }
    Eigen::Map<const RowMat> matrix(const Block& b) const { return {values_.data() + b.offset, b.rows, b.cols}; }
    Eigen::Map<Vec> vector(const Block& b) { return {values_.data() + b.offset, static_cast<Eigen::Index>(b.size())}; }
    Eigen::Map<const Vec> vector(const Block& b) const {
        return {values_.data() + b.offset, static_cast<Eigen::Index>(b.size())};
    }

    Eigen::Map<const RowMat> F() const { return matrix(layout_.F); }
    Eigen::Map<const RowMat> G(int j) const { return matrix(layout_.G[static_cast<std::size_t>(j)]); }

    void set_zero();
    bool all_finite() const;

private:
    NetworkLayout layout_;
    std::vector<double> values_;
};

// Uniform(+-1/sqrt(fan_in)) weights and biases, F = I, G_j = 0.
Parameters initialize_parameters(const NetworkShape& shape, std::uint64_t seed);

// Normalised one-step pair. `fixed` / `fixed_next` hold the parameter-free
// lifted coordinates of x and x_next (empty when fixed_dim == 0).
struct TrainingPair {
    Vec x;
    Vec u;
    Vec x_next;
    Vec fixed;
    Vec fixed_next;
};

struct LossTerms {
    double prediction = 0.0;   // batch mean of ||x' - C z'||^2
    double consistency = 0.0;  // batch mean of ||lift(x')[d:] - z'[d:]||^2
    double regularizer = 0.0;  // l2 * sum of squared regularised entries
    double total = 0.0;        // prediction + beta * consistency + regularizer
};

struct LossOptions {
    double beta = 0.2;
    double l2 = 5e-4;
};

Vec encode(const Parameters& params, const Vec& x);
Vec lift(const Parameters& params, const Vec& x, const Vec& fixed = Vec());
Vec bilinear_step(const Parameters& params, const Vec& z, const Vec& u);

// Batch is `pairs[indices[i]]`; an empty index list means every pair.
LossTerms loss(const Parameters& params, std::span<const TrainingPair> pairs, const LossOptions& opts,
               std::span<const std::size_t> indices = {});

// Returns the loss and writes d(total)/d(params) into `grad` (resized).
LossTerms loss_gradient(const Parameters& params, std::span<const TrainingPair> pairs, const LossOptions& opts,
                        Parameters& grad, std::span<const std::size_t> indices = {});

}  // namespace koopmpc
