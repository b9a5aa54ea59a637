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

// Convex QP solver for
//   minimize 0.5 x'Px + q'x  subject to  l <= Ax <= u
// by operator splitting (ADMM) with Ruiz equilibration, adaptive penalty,
// infeasibility detection and optional active-set polishing. Dual sign
// convention: y_i > 0 on an active upper bound, y_i < 0 on a lower one.

#include <memory>
#include <optional>
#include <string>

#include <Eigen/Sparse>

#include "koopmpc/common.hpp"

namespace koopmpc {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct QuadraticProgram {
    SpMat P;  // full symmetric storage
    Vec q;
    SpMat A;
    Vec l;
    Vec u;

    int num_vars() const { return static_cast<int>(q.size()); }
    int num_constraints() const { return static_cast<int>(l.size()); }
    // Shapes, symmetry, l <= u and PSD (dense eigen check, small problems only
    // unless `check_psd` is false).
    void validate(bool check_psd = true) const;
};

enum class QPStatus { solved, max_iter, primal_infeasible, dual_infeasible };
const char* to_string(QPStatus s);

struct QPSolution {
    Vec x;
    Vec y;
    QPStatus status = QPStatus::max_iter;
    int iterations = 0;
    double primal_residual = 0.0;  // recomputed from x, y
    double dual_residual = 0.0;
    int factorizations = 0;
    bool polished = false;
};

struct QPSettings {
    double eps_abs = 1e-5;
    double eps_rel = 1e-5;
    double eps_primal_infeasible = 1e-5;
    double eps_dual_infeasible = 1e-5;
    int max_iterations = 4000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    bool adaptive_rho = true;
    int adaptive_rho_interval = 25;
    double adaptive_rho_tolerance = 5.0;
    int scaling_iterations = 10;
    int check_interval = 5;
    bool polish = false;
    double polish_delta = 1e-6;
    int polish_refine_iterations = 3;

    void validate() const;
};

struct WarmStart {
    std::optional<Vec> x;
    std::optional<Vec> y;
};

struct KKTResiduals {
    double primal = 0.0;          // ||Ax - proj_[l,u](Ax)||_inf
    double dual = 0.0;            // ||Px + q + A'y||_inf
    double complementarity = 0.0; // max_i |y_i^+ (u_i - a_i x)| + |y_i^- (a_i x - l_i)|
};

KKTResiduals kkt_residuals(const QuadraticProgram& qp, const Vec& x, const Vec& y);

// Reusable workspace. The symbolic factorisation of the KKT matrix is kept
// between calls while the sparsity pattern of P and A stays the same.
class QPSolver {
public:
    QPSolver();
    ~QPSolver();
    QPSolver(QPSolver&&) noexcept;
    QPSolver& operator=(QPSolver&&) noexcept;

    QPSolution solve(const QuadraticProgram& qp, const QPSettings& settings = {}, const WarmStart& warm = {});

    // Number of symbolic analyses performed so far (pattern changes).
    int symbolic_analyses() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

QPSolution solve_qp(const QuadraticProgram& qp, const QPSettings& settings = {}, const WarmStart& warm = {});

// Debug dump for offline reproduction; dense row-major matrices.
void dump_qp_json(const QuadraticProgram& qp, const std::string& path);
QuadraticProgram load_qp_json(const std::string& path);

}  // namespace koopmpc
