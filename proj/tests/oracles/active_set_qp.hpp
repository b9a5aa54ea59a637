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

// Brute-force active-set oracle for small strictly convex QPs:
// enumerate every (inactive, at-lower, at-upper) assignment of the
// constraint rows, solve the equality-constrained KKT system directly and
// keep the assignment that is primal and dual feasible.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct ActiveSetResult {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

inline std::optional<ActiveSetResult> active_set_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                                                    const Eigen::MatrixXd& A, const Eigen::VectorXd& l,
                                                    const Eigen::VectorXd& u, double tol = 1e-9) {
    const int n = static_cast<int>(q.size());
    const int m = static_cast<int>(l.size());
    long combos = 1;
    for (int i = 0; i < m; ++i) combos *= 3;
    for (long code = 0; code < combos; ++code) {
        std::vector<int> state(static_cast<std::size_t>(m));
        long c = code;
        bool skip = false;
        for (int i = 0; i < m; ++i) {
            state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);  // 0 free, 1 lower, 2 upper
            c /= 3;
            const int s = state[static_cast<std::size_t>(i)];
            if (s == 1 && !std::isfinite(l(i))) skip = true;
            if (s == 2 && !std::isfinite(u(i))) skip = true;
            if (s == 2 && l(i) == u(i)) skip = true;  // equality rows use the "lower" label
        }
        if (skip) continue;
        std::vector<int> rows;
        for (int i = 0; i < m; ++i)
            if (state[static_cast<std::size_t>(i)] != 0) rows.push_back(i);
        const int r = static_cast<int>(rows.size());
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + r, n + r);
        Eigen::VectorXd rhs(n + r);
        K.topLeftCorner(n, n) = P;
        rhs.head(n) = -q;
        for (int k = 0; k < r; ++k) {
            const int i = rows[static_cast<std::size_t>(k)];
            K.block(n + k, 0, 1, n) = A.row(i);
            K.block(0, n + k, n, 1) = A.row(i).transpose();
            rhs(n + k) = state[static_cast<std::size_t>(i)] == 1 ? l(i) : u(i);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
        if (lu.rank() < n + r) continue;
        const Eigen::VectorXd sol = lu.solve(rhs);
        const Eigen::VectorXd x = sol.head(n);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
        for (int k = 0; k < r; ++k) y(rows[static_cast<std::size_t>(k)]) = sol(n + k);
        const Eigen::VectorXd ax = A * x;
        bool ok = true;
        for (int i = 0; i < m && ok; ++i) {
            const double scale = 1.0 + std::abs(ax(i));
            if (ax(i) < l(i) - tol * scale || ax(i) > u(i) + tol * scale) ok = false;
            const int s = state[static_cast<std::size_t>(i)];
            const bool eq = l(i) == u(i);
            if (s == 1 && !eq && y(i) > tol) ok = false;
            if (s == 2 && y(i) < -tol) ok = false;
        }
        if (ok) return ActiveSetResult{x, y};
    }
    return std::nullopt;
}

}  // namespace oracle
