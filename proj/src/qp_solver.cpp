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

#include "koopmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "koopmpc/json_util.hpp"

namespace koopmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqualityScale = 1e3;
constexpr double kEqualityTol = 1e-4;
constexpr double kScaleMin = 1e-4;
constexpr double kScaleMax = 1e4;

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Vec col_inf_norms(const SpMat& M) {
    Vec out = Vec::Zero(M.cols());
    for (int k = 0; k < M.outerSize(); ++k)
        for (SpMat::InnerIterator it(M, k); it; ++it) out(k) = std::max(out(k), std::abs(it.value()));
    return out;
}

Vec row_inf_norms(const SpMat& M) {
    Vec out = Vec::Zero(M.rows());
    for (int k = 0; k < M.outerSize(); ++k)
        for (SpMat::InnerIterator it(M, k); it; ++it) out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    return out;
}

Vec limit_scaling(Vec v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v(i) < kScaleMin) v(i) = 1.0;
        v(i) = std::min(v(i), kScaleMax);
    }
    return v;
}

Vec clamp(const Vec& z, const Vec& l, const Vec& u) { return z.cwiseMax(l).cwiseMin(u); }

using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

// Lower triangle of [P + sigma I, A'; A, -diag(1/rho)] (or -delta I).
SpMat assemble_kkt(const SpMat& P, const SpMat& A, double sigma, const Vec& neg_diag) {
    const int n = static_cast<int>(P.rows());
    const int m = static_cast<int>(A.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(P.nonZeros() + A.nonZeros() + n + m));
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, sigma);
    for (int k = 0; k < P.outerSize(); ++k)
        for (SpMat::InnerIterator it(P, k); it; ++it)
            if (it.row() >= it.col()) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it)
            trip.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -neg_diag(i));
    SpMat K(n + m, n + m);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

bool same_pattern(const SpMat& a, const std::vector<int>& outer, const std::vector<int>& inner, Eigen::Index dim) {
    if (a.rows() != dim || static_cast<std::size_t>(a.nonZeros()) != inner.size()) return false;
    return std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1, outer.begin()) &&
           std::equal(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros(), inner.begin());
}

}  // namespace

const char* to_string(QPStatus s) {
    switch (s) {
        case QPStatus::solved: return "solved";
        case QPStatus::max_iter: return "max_iter";
        case QPStatus::primal_infeasible: return "primal_infeasible";
        case QPStatus::dual_infeasible: return "dual_infeasible";
    }
    return "unknown";
}

void QuadraticProgram::validate(bool check_psd) const {
    const Eigen::Index n = q.size();
    const Eigen::Index m = l.size();
    if (P.rows() != n || P.cols() != n) throw ConfigError("qp: P must be n x n");
    if (A.cols() != n || A.rows() != m || u.size() != m) throw ConfigError("qp: A, l, u shapes inconsistent");
    for (Eigen::Index i = 0; i < m; ++i)
        if (!(l(i) <= u(i))) throw ConfigError("qp: l <= u violated at row " + std::to_string(i));
    const SpMat Pt = P.transpose();
    const double pmax = P.nonZeros() ? Vec(Eigen::Map<const Vec>(P.valuePtr(), P.nonZeros())).cwiseAbs().maxCoeff() : 0.0;
    if ((P - Pt).norm() > 1e-9 * std::max(1.0, pmax)) throw ConfigError("qp: P is not symmetric");
    if (check_psd && n > 0) {
        const Mat Pd = Mat(P);
        const double emin = Eigen::SelfAdjointEigenSolver<Mat>(Pd, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
        if (emin < -1e-9 * std::max(1.0, pmax)) throw ConfigError("qp: P is not positive semidefinite");
    }
}

void QPSettings::validate() const {
    if (!(eps_abs > 0.0) || !(eps_rel >= 0.0)) throw ConfigError("qp settings: tolerances must be > 0");
    if (max_iterations < 1) throw ConfigError("qp settings: max_iterations must be >= 1");
    if (!(rho > 0.0) || !(sigma > 0.0) || !(alpha > 0.0 && alpha < 2.0))
        throw ConfigError("qp settings: rho, sigma > 0 and alpha in (0, 2) required");
    if (check_interval < 1 || adaptive_rho_interval < 1) throw ConfigError("qp settings: intervals must be >= 1");
}

KKTResiduals kkt_residuals(const QuadraticProgram& qp, const Vec& x, const Vec& y) {
    KKTResiduals r;
    const Vec ax = qp.A * x;
    r.primal = inf_norm(ax - clamp(ax, qp.l, qp.u));
    r.dual = inf_norm(qp.P * x + qp.q + qp.A.transpose() * y);
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
        double term = 0.0;
        if (y(i) > 0.0) term += std::isinf(qp.u(i)) ? kInf : std::abs(y(i) * (qp.u(i) - ax(i)));
        if (y(i) < 0.0) term += std::isinf(qp.l(i)) ? kInf : std::abs(y(i) * (ax(i) - qp.l(i)));
        r.complementarity = std::max(r.complementarity, term);
    }
    return r;
}

struct QPSolver::Impl {
    Ldlt ldlt;
    std::vector<int> outer, inner;
    Eigen::Index dim = -1;
    int analyses = 0;

    // Factorise K; reuse the symbolic analysis when the pattern matches.
    bool factorize(const SpMat& K) {
        if (!same_pattern(K, outer, inner, dim)) {
            ldlt.analyzePattern(K);
            outer.assign(K.outerIndexPtr(), K.outerIndexPtr() + K.outerSize() + 1);
            inner.assign(K.innerIndexPtr(), K.innerIndexPtr() + K.nonZeros());
            dim = K.rows();
            ++analyses;
        }
        ldlt.factorize(K);
        return ldlt.info() == Eigen::Success;
    }
};

QPSolver::QPSolver() : impl_(std::make_unique<Impl>()) {}
QPSolver::~QPSolver() = default;
QPSolver::QPSolver(QPSolver&&) noexcept = default;
QPSolver& QPSolver::operator=(QPSolver&&) noexcept = default;
int QPSolver::symbolic_analyses() const { return impl_->analyses; }

namespace {

// Equality-constrained refinement on a guessed active set.
bool polish(const QuadraticProgram& qp, const QPSettings& set, Vec& x, Vec& y) {
    const int n = qp.num_vars();
    const int m = qp.num_constraints();
    const Vec z = qp.A * x;
    std::vector<int> rows;
    std::vector<double> rhs_b;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (int i = 0; i < m; ++i) {
        const bool eq = std::abs(qp.u(i) - qp.l(i)) < kEqualityTol * std::max(1.0, std::abs(qp.l(i)));
        if (eq && std::isfinite(qp.l(i))) {
            rows.push_back(i);
            rhs_b.push_back(qp.l(i));
            side.push_back(0);
        } else if (std::isfinite(qp.l(i)) && z(i) - qp.l(i) < -y(i)) {
            rows.push_back(i);
            rhs_b.push_back(qp.l(i));
            side.push_back(-1);
        } else if (std::isfinite(qp.u(i)) && qp.u(i) - z(i) < y(i)) {
            rows.push_back(i);
            rhs_b.push_back(qp.u(i));
            side.push_back(1);
        }
    }
    const int r = static_cast<int>(rows.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < qp.A.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.A, k); it; ++it) {
            auto pos = std::find(rows.begin(), rows.end(), static_cast<int>(it.row()));
            if (pos != rows.end()) trip.emplace_back(static_cast<int>(pos - rows.begin()), static_cast<int>(it.col()), it.value());
        }
    SpMat Ared(r, n);
    Ared.setFromTriplets(trip.begin(), trip.end());

    const SpMat Kreg = assemble_kkt(qp.P, Ared, set.polish_delta, Vec::Constant(r, set.polish_delta));
    Ldlt ldlt;
    ldlt.compute(Kreg);
    if (ldlt.info() != Eigen::Success) return false;

    Vec rhs(n + r);
    rhs.head(n) = -qp.q;
    for (int i = 0; i < r; ++i) rhs(n + i) = rhs_b[static_cast<std::size_t>(i)];
    Vec sol = ldlt.solve(rhs);
    for (int it = 0; it < set.polish_refine_iterations; ++it) {
        Vec res(n + r);
        const Vec xs = sol.head(n);
        const Vec ys = sol.tail(r);
        res.head(n) = rhs.head(n) - (qp.P * xs + Ared.transpose() * ys);
        res.tail(r) = rhs.tail(r) - Ared * xs;
        sol += ldlt.solve(res);
    }
    Vec xp = sol.head(n);
    Vec yp = Vec::Zero(m);
    for (int i = 0; i < r; ++i) {
        const double yi = sol(n + i);
        const int s = side[static_cast<std::size_t>(i)];
        if ((s < 0 && yi > set.eps_abs) || (s > 0 && yi < -set.eps_abs)) return false;
        yp(rows[static_cast<std::size_t>(i)]) = yi;
    }
    const KKTResiduals before = kkt_residuals(qp, x, y);
    const KKTResiduals after = kkt_residuals(qp, xp, yp);
    if (!xp.allFinite() || !yp.allFinite()) return false;
    if (std::max(after.primal, after.dual) > std::max({before.primal, before.dual, set.eps_abs})) return false;
    x = std::move(xp);
    y = std::move(yp);
    return true;
}

}  // namespace

QPSolution QPSolver::solve(const QuadraticProgram& qp, const QPSettings& set, const WarmStart& warm) {
    set.validate();
    qp.validate(false);
    const int n = qp.num_vars();
    const int m = qp.num_constraints();

    // Ruiz equilibration of the KKT matrix plus cost scaling.
    SpMat Ps = qp.P;
    SpMat As = qp.A;
    Vec qs = qp.q;
    Vec D = Vec::Ones(n), E = Vec::Ones(m);
    double c = 1.0;
    for (int it = 0; it < set.scaling_iterations; ++it) {
        Vec dcol = col_inf_norms(Ps).cwiseMax(m ? col_inf_norms(As) : Vec::Zero(n));
        Vec erow = m ? row_inf_norms(As) : Vec();
        dcol = limit_scaling(dcol).cwiseSqrt().cwiseInverse();
        if (m) erow = limit_scaling(erow).cwiseSqrt().cwiseInverse();
        Ps = dcol.asDiagonal() * Ps * dcol.asDiagonal();
        if (m) As = erow.asDiagonal() * As * dcol.asDiagonal();
        qs = dcol.cwiseProduct(qs);
        D = D.cwiseProduct(dcol);
        if (m) E = E.cwiseProduct(erow);
        const double pmean = n ? col_inf_norms(Ps).mean() : 0.0;
        double gamma = std::max(pmean, inf_norm(qs));
        gamma = gamma < kScaleMin ? 1.0 : std::min(gamma, kScaleMax);
        gamma = 1.0 / gamma;
        Ps *= gamma;
        qs *= gamma;
        c *= gamma;
    }
    const Vec ls = E.cwiseProduct(qp.l);
    const Vec us = E.cwiseProduct(qp.u);
    const Vec Dinv = D.cwiseInverse();
    const Vec Einv = E.cwiseInverse();

    // Per-row penalty: stiff on equalities, tiny on free rows.
    Vec rho_kind(m);
    for (int i = 0; i < m; ++i) {
        if (std::isinf(qp.l(i)) && std::isinf(qp.u(i)))
            rho_kind(i) = 0.0;
        else if (std::abs(qp.u(i) - qp.l(i)) < kEqualityTol)
            rho_kind(i) = kRhoEqualityScale;
        else
            rho_kind(i) = 1.0;
    }
    double rho = set.rho;
    auto make_rho = [&](double base) {
        Vec r(m);
        for (int i = 0; i < m; ++i) r(i) = rho_kind(i) == 0.0 ? kRhoMin : std::clamp(base * rho_kind(i), kRhoMin, kRhoMax);
        return r;
    };
    Vec rho_vec = make_rho(rho);

    QPSolution sol;
    if (!impl_->factorize(assemble_kkt(Ps, As, set.sigma, rho_vec.cwiseInverse())))
        throw Error("qp: KKT factorization failed");
    sol.factorizations = 1;

    Vec x = Vec::Zero(n), z = Vec::Zero(m), y = Vec::Zero(m);
    if (warm.x && warm.x->size() == n) {
        x = Dinv.cwiseProduct(*warm.x);
        z = clamp(As * x, ls, us);
    }
    if (warm.y && warm.y->size() == m) y = c * Einv.cwiseProduct(*warm.y);

    Vec rhs(n + m), xt, zt, x_new, z_relax, z_new, y_new;
    Vec best_x = x, best_y = y;
    double best_merit = kInf;
    QPStatus status = QPStatus::max_iter;
    int iter = 0;

    for (iter = 1; iter <= set.max_iterations; ++iter) {
        rhs.head(n) = set.sigma * x - qs;
        rhs.tail(m) = z - y.cwiseQuotient(rho_vec);
        const Vec kkt_sol = impl_->ldlt.solve(rhs);
        xt = kkt_sol.head(n);
        zt = z + (kkt_sol.tail(m) - y).cwiseQuotient(rho_vec);
        x_new = set.alpha * xt + (1.0 - set.alpha) * x;
        z_relax = set.alpha * zt + (1.0 - set.alpha) * z;
        z_new = clamp(z_relax + y.cwiseQuotient(rho_vec), ls, us);
        y_new = y + rho_vec.cwiseProduct(z_relax - z_new);
        const Vec dx = x_new - x;
        const Vec dy = y_new - y;
        x.swap(x_new);
        z.swap(z_new);
        y.swap(y_new);

        const bool check = iter % set.check_interval == 0 || iter == set.max_iterations;
        const bool adapt = set.adaptive_rho && iter % set.adaptive_rho_interval == 0;
        if (!check && !adapt) continue;

        const Vec Ax = As * x;
        const Vec Px = Ps * x;
        const Vec Aty = As.transpose() * y;
        const double prim = inf_norm(Einv.cwiseProduct(Ax - z));
        const double dual = inf_norm(Dinv.cwiseProduct(Px + qs + Aty)) / c;
        const double eps_p = set.eps_abs + set.eps_rel * std::max(inf_norm(Einv.cwiseProduct(Ax)), inf_norm(Einv.cwiseProduct(z)));
        const double eps_d =
            set.eps_abs + set.eps_rel *
                              std::max({inf_norm(Dinv.cwiseProduct(Px)), inf_norm(Dinv.cwiseProduct(Aty)),
                                        inf_norm(Dinv.cwiseProduct(qs))}) / c;
        const double merit = std::max(prim / eps_p, dual / eps_d);
        if (merit < best_merit) {
            best_merit = merit;
            best_x = x;
            best_y = y;
        }
        if (prim <= eps_p && dual <= eps_d) {
            status = QPStatus::solved;
            break;
        }

        // Primal infeasibility certificate from the dual increment.
        Vec dyc = dy;
        for (int i = 0; i < m; ++i) {
            if (dyc(i) > 0.0 && std::isinf(us(i))) dyc(i) = 0.0;
            if (dyc(i) < 0.0 && std::isinf(ls(i))) dyc(i) = 0.0;
        }
        const double ndy = inf_norm(E.cwiseProduct(dyc));
        if (ndy > 1e-30) {
            double support = 0.0;
            for (int i = 0; i < m; ++i) {
                if (dyc(i) > 0.0) support += us(i) * dyc(i);
                if (dyc(i) < 0.0) support += ls(i) * dyc(i);
            }
            if (support < -set.eps_primal_infeasible * ndy &&
                inf_norm(Dinv.cwiseProduct(As.transpose() * dyc)) < set.eps_primal_infeasible * ndy) {
                status = QPStatus::primal_infeasible;
                break;
            }
        }
        // Dual infeasibility certificate from the primal increment.
        const double ndx = inf_norm(D.cwiseProduct(dx));
        if (ndx > 1e-30) {
            const double tol = set.eps_dual_infeasible * ndx;
            if (qs.dot(dx) < -c * tol && inf_norm(Dinv.cwiseProduct(Ps * dx)) < c * tol) {
                const Vec Adx = Einv.cwiseProduct(As * dx);
                bool recession = true;
                for (int i = 0; i < m && recession; ++i) {
                    const bool lo = std::isfinite(qp.l(i)), hi = std::isfinite(qp.u(i));
                    if (hi && Adx(i) > tol) recession = false;
                    if (lo && Adx(i) < -tol) recession = false;
                }
                if (recession) {
                    status = QPStatus::dual_infeasible;
                    break;
                }
            }
        }

        if (adapt) {
            const double prim_s = inf_norm(Ax - z) / std::max({inf_norm(Ax), inf_norm(z), 1e-30});
            const double dual_s =
                inf_norm(Px + qs + Aty) / std::max({inf_norm(Px), inf_norm(Aty), inf_norm(qs), 1e-30});
            double rho_new = rho * std::sqrt(prim_s / std::max(dual_s, 1e-30));
            rho_new = std::clamp(rho_new, kRhoMin, kRhoMax);
            if (rho_new > rho * set.adaptive_rho_tolerance || rho_new < rho / set.adaptive_rho_tolerance) {
                rho = rho_new;
                rho_vec = make_rho(rho);
                if (!impl_->factorize(assemble_kkt(Ps, As, set.sigma, rho_vec.cwiseInverse())))
                    throw Error("qp: KKT refactorization failed");
                ++sol.factorizations;
            }
        }
    }

    sol.status = status;
    sol.iterations = std::min(iter, set.max_iterations);
    if (status == QPStatus::max_iter) {
        x = best_x;
        y = best_y;
    }
    sol.x = D.cwiseProduct(x);
    sol.y = E.cwiseProduct(y) / c;
    if (status == QPStatus::solved && set.polish) sol.polished = polish(qp, set, sol.x, sol.y);
    const KKTResiduals res = kkt_residuals(qp, sol.x, sol.y);
    sol.primal_residual = res.primal;
    sol.dual_residual = res.dual;
    return sol;
}

QPSolution solve_qp(const QuadraticProgram& qp, const QPSettings& settings, const WarmStart& warm) {
    QPSolver solver;
    return solver.solve(qp, settings, warm);
}

namespace {
using json_util::json;

json bounds_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isinf(v(i)))
            a.push_back(v(i) > 0 ? "inf" : "-inf");
        else
            a.push_back(v(i));
    }
    return a;
}

Vec bounds_from(const json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        const json& e = a[i];
        if (e.is_string())
            v(static_cast<Eigen::Index>(i)) = e.get<std::string>() == "inf" ? kInf : -kInf;
        else
            v(static_cast<Eigen::Index>(i)) = e.get<double>();
    }
    return v;
}
}  // namespace

void dump_qp_json(const QuadraticProgram& qp, const std::string& path) {
    const json j{{"n", qp.num_vars()},
                 {"m", qp.num_constraints()},
                 {"P", json_util::to_json_rowmajor(Mat(qp.P))},
                 {"q", json_util::to_json(qp.q)},
                 {"A", json_util::to_json_rowmajor(Mat(qp.A))},
                 {"l", bounds_json(qp.l)},
                 {"u", bounds_json(qp.u)}};
    json_util::write_file(path, j.dump() + "\n");
}

QuadraticProgram load_qp_json(const std::string& path) {
    const json j = json_util::parse_file(path);
    try {
        const auto n = j.at("n").get<Eigen::Index>();
        const auto m = j.at("m").get<Eigen::Index>();
        QuadraticProgram qp;
        qp.P = json_util::mat_from_json_rowmajor(j.at("P"), n, n, "P").sparseView();
        qp.q = json_util::vec_from_json(j.at("q"), "q", n);
        qp.A = json_util::mat_from_json_rowmajor(j.at("A"), m, n, "A").sparseView();
        qp.l = bounds_from(j.at("l"));
        qp.u = bounds_from(j.at("u"));
        qp.validate(false);
        return qp;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed QP dump: ") + e.what());
    }
}

}  // namespace koopmpc
