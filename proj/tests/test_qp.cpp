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


#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include <doctest.h>

#include "koopmpc/qp.hpp"
#include "oracles/active_set_qp.hpp"
#include "oracles/random_qp.hpp"

using namespace koopmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QuadraticProgram scalar_qp(double P, double q, double l, double u) {
    QuadraticProgram qp;
    qp.P = Mat::Constant(1, 1, P).sparseView();
    qp.q = Vec::Constant(1, q);
    qp.A = Mat::Constant(1, 1, 1.0).sparseView();
    qp.l = Vec::Constant(1, l);
    qp.u = Vec::Constant(1, u);
    return qp;
}

}  // namespace

TEST_CASE("unconstrained least norm") {
    QuadraticProgram qp;
    qp.P = Mat(2.0 * Mat::Identity(4, 4)).sparseView();
    qp.q = Vec::Zero(4);
    qp.A = SpMat(0, 4);
    qp.l = Vec(0);
    qp.u = Vec(0);
    const auto s = solve_qp(qp);
    CHECK(s.status == QPStatus::solved);
    CHECK(s.x.norm() < 1e-8);
}

TEST_CASE("active upper bound: x = 1, y = 4") {
    // (x - 3)^2 = 0.5 * 2 x^2 - 6 x + 9
    const auto qp = scalar_qp(2.0, -6.0, -kInf, 1.0);
    QPSettings set;
    set.polish = true;
    const auto s = solve_qp(qp, set);
    CHECK(s.status == QPStatus::solved);
    CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.y(0) == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(s.polished);

    // Mirror image: active lower bound carries a negative dual.
    const auto lo = solve_qp(scalar_qp(2.0, 6.0, -1.0, kInf), set);
    CHECK(lo.x(0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(lo.y(0) == doctest::Approx(-4.0).epsilon(1e-8));
}

TEST_CASE("random QPs agree with the active-set oracle") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> nv(1, 30), nc(1, 6);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = nv(rng), m = nc(rng);
        const auto d = oracle::random_qp(n, m, rng);
        const auto ref = oracle::active_set_qp(d.P, d.q, d.A, d.l, d.u);
        REQUIRE(ref.has_value());
        QPSettings set;
        set.polish = true;
        const auto s = solve_qp(d.sparse(), set);
        CHECK(s.status == QPStatus::solved);
        CHECK((s.x - ref->x).cwiseAbs().maxCoeff() < 1e-4);
        const auto k = kkt_residuals(d.sparse(), s.x, s.y);
        CHECK(k.primal < 1e-5);
        CHECK(k.dual < 1e-5);
    }
}

TEST_CASE("kkt residuals: exact solution, linear growth, hand evaluation") {
    const auto qp = scalar_qp(2.0, -6.0, -kInf, 1.0);
    const auto exact = kkt_residuals(qp, Vec::Constant(1, 1.0), Vec::Constant(1, 4.0));
    CHECK(exact.primal < 1e-12);
    CHECK(exact.dual < 1e-12);
    CHECK(exact.complementarity < 1e-12);
    const auto r1 = kkt_residuals(qp, Vec::Constant(1, 1.0 + 1e-3), Vec::Constant(1, 4.0));
    const auto r2 = kkt_residuals(qp, Vec::Constant(1, 1.0 + 2e-3), Vec::Constant(1, 4.0));
    CHECK(r1.primal == doctest::Approx(1e-3).epsilon(1e-9));
    CHECK(r2.primal == doctest::Approx(2 * r1.primal).epsilon(1e-9));
    CHECK(r1.dual == doctest::Approx(2e-3).epsilon(1e-9));

    // Two variables, one two-sided row, arbitrary point: values by hand.
    QuadraticProgram qp2;
    Mat P(2, 2);
    P << 2, 1, 1, 3;
    qp2.P = P.sparseView();
    qp2.q = Eigen::Vector2d(1, -1);
    Mat A(1, 2);
    A << 1, 1;
    qp2.A = A.sparseView();
    qp2.l = Vec::Constant(1, -1.0);
    qp2.u = Vec::Constant(1, 0.5);
    const auto k = kkt_residuals(qp2, Eigen::Vector2d(0.5, 0.25), Vec::Constant(1, 0.2));
    // Ax = 0.75 -> 0.25 above u; Px + q + A'y = (2.45, -0.05) -> inf-norm 2.45; y+ (u - Ax) = 0.2 * -0.25
    CHECK(k.primal == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(k.dual == doctest::Approx(2.45).epsilon(1e-14));
    CHECK(k.complementarity == doctest::Approx(0.05).epsilon(1e-14));
}

TEST_CASE("warm start from the solution terminates quickly") {
    std::mt19937_64 rng(3);
    const auto d = oracle::random_qp(20, 6, rng);
    const auto qp = d.sparse();
    QPSettings set;
    set.eps_abs = set.eps_rel = 1e-7;
    const auto cold = solve_qp(qp, set);
    REQUIRE(cold.status == QPStatus::solved);
    const auto warm = solve_qp(qp, set, WarmStart{cold.x, cold.y});
    CHECK(warm.status == QPStatus::solved);
    CHECK(warm.iterations <= 10);
    CHECK(warm.iterations < cold.iterations);
}

TEST_CASE("objective scaling leaves the minimiser unchanged; solves are deterministic") {
    std::mt19937_64 rng(4);
    const auto d = oracle::random_qp(15, 5, rng);
    auto qp = d.sparse();
    QPSettings set;
    set.polish = true;
    const auto a = solve_qp(qp, set);
    qp.P *= 37.0;
    qp.q *= 37.0;
    const auto b = solve_qp(qp, set);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() < 1e-5);
    const auto c = solve_qp(d.sparse(), set);
    CHECK((a.x.array() == c.x.array()).all());
    CHECK(a.iterations == c.iterations);
}

TEST_CASE("infeasibility certificates") {
    QuadraticProgram qp;
    qp.P = Mat::Constant(1, 1, 1.0).sparseView();
    qp.q = Vec::Zero(1);
    qp.A = Mat::Constant(2, 1, 1.0).sparseView();
    qp.l = Eigen::Vector2d(1.0, -kInf);
    qp.u = Eigen::Vector2d(kInf, 0.0);
    CHECK(solve_qp(qp).status == QPStatus::primal_infeasible);

    QuadraticProgram unb;
    unb.P = SpMat(2, 2);
    unb.q = Eigen::Vector2d(-1.0, 0.0);
    unb.A = Mat::Constant(1, 2, 1.0).sparseView();
    unb.A.coeffRef(0, 1) = 0.0;
    unb.A.prune(0.0);
    unb.l = Vec::Constant(1, 0.0);
    unb.u = Vec::Constant(1, kInf);
    CHECK(solve_qp(unb).status == QPStatus::dual_infeasible);
}

TEST_CASE("max_iter returns the best iterate") {
    std::mt19937_64 rng(5);
    const auto d = oracle::random_qp(30, 8, rng);
    QPSettings set;
    set.max_iterations = 3;
    set.check_interval = 1;
    const auto s = solve_qp(d.sparse(), set);
    CHECK(s.status == QPStatus::max_iter);
    CHECK(s.iterations == 3);
    CHECK(s.x.allFinite());
    const auto k = kkt_residuals(d.sparse(), s.x, s.y);
    CHECK(k.primal == doctest::Approx(s.primal_residual));
    CHECK(k.dual == doctest::Approx(s.dual_residual));
}

TEST_CASE("validation") {
    auto qp = scalar_qp(2.0, -6.0, 2.0, 1.0);
    CHECK_THROWS_AS(qp.validate(), ConfigError);
    qp = scalar_qp(-1.0, 0.0, 0.0, 1.0);
    CHECK_THROWS_AS(qp.validate(), ConfigError);
    QuadraticProgram asym;
    Mat P(2, 2);
    P << 1, 0.5, 0, 1;
    asym.P = P.sparseView();
    asym.q = Vec::Zero(2);
    asym.A = SpMat(0, 2);
    asym.l = Vec(0);
    asym.u = Vec(0);
    CHECK_THROWS_AS(asym.validate(), ConfigError);
    QPSettings s;
    s.eps_abs = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("symbolic factorisation is reused while the pattern is unchanged") {
    std::mt19937_64 rng(6);
    const auto d = oracle::random_qp(12, 4, rng);
    QPSolver solver;
    auto qp = d.sparse();
    solver.solve(qp);
    const int first = solver.symbolic_analyses();
    CHECK(first == 1);
    qp.q *= 2.0;
    for (int k = 0; k < qp.P.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.P, k); it; ++it) it.valueRef() *= 1.5;
    solver.solve(qp);
    CHECK(solver.symbolic_analyses() == first);
    const auto other = oracle::random_qp(13, 4, rng);
    solver.solve(other.sparse());
    CHECK(solver.symbolic_analyses() == first + 1);
}

TEST_CASE("json dump round trip") {
    std::mt19937_64 rng(7);
    const auto d = oracle::random_qp(5, 3, rng);
    const auto path = (std::filesystem::temp_directory_path() / "koopmpc_qp_rt.json").string();
    dump_qp_json(d.sparse(), path);
    const auto back = load_qp_json(path);
    CHECK((Mat(back.P) - d.P).norm() == 0.0);
    CHECK((Mat(back.A) - d.A).norm() == 0.0);
    CHECK(back.l == d.l);
    CHECK(back.u == d.u);
    std::filesystem::remove(path);
}
