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
#include <limits>
#include <memory>
#include <random>

#include <doctest.h>

#include "koopmpc/nmpc.hpp"
#include "oracles/finite_difference.hpp"
#include "oracles/grid_search.hpp"

using namespace koopmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::shared_ptr<const BilinearPredictionModel> toy2() {
    Mat F(2, 2);
    F << 1.0, 0.1, 0.0, 0.95;
    Mat G(2, 2);
    G << 0.0, 0.0, 0.2, 0.05;
    return std::make_shared<BilinearPredictionModel>(F, std::vector<Mat>{G});
}

NMPCConfig toy_config(int N, double box) {
    NMPCConfig c;
    c.horizon = N;
    c.output_weight = Eigen::Vector2d(10.0, 1.0);
    c.input_weight = Vec::Constant(1, 0.5);
    c.input_lower = Vec::Constant(1, -box);
    c.input_upper = Vec::Constant(1, box);
    c.qp.eps_abs = c.qp.eps_rel = 1e-7;
    c.qp.max_iterations = 20000;
    c.qp.polish = true;
    return c;
}

SQPIterate zero_guess(int n, int m, int N, const Vec& z0) {
    return {z0.replicate(1, N + 1), Mat::Zero(m, N)};
}

ReferenceWindow constant_ref(const Vec& y, int N) { return y.replicate(1, N + 1); }

NominalModel nominal() { return NominalModel(VehicleParams{}, 0.02); }

Vec random_vehicle_state(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 0.3);
    Vec x(13);
    for (auto& v : x) v = g(rng);
    x.segment<4>(6) = Vec4(1.0, g(rng), g(rng), g(rng)).normalized();
    return x;
}

}  // namespace

TEST_CASE("build_subproblem matches a hand assembly for n = 1") {
    const double f = 0.9, gg = 0.3;
    auto model = std::make_shared<BilinearPredictionModel>(Mat::Constant(1, 1, f), std::vector<Mat>{Mat::Constant(1, 1, gg)});
    NMPCConfig c;
    c.horizon = 2;
    c.output_weight = Vec::Constant(1, 4.0);
    c.terminal_scale = 3.0;
    c.input_weight = Vec::Constant(1, 0.5);
    c.input_lower = Vec::Constant(1, -1.0);
    c.input_upper = Vec::Constant(1, 2.0);
    c.state_lower = Vec::Constant(1, -5.0);
    c.state_upper = Vec::Constant(1, 6.0);
    NMPCController ctl(model, c);

    SQPIterate it;
    it.Z.resize(1, 3);
    it.Z << 1.0, 0.7, 0.4;
    it.U.resize(1, 2);
    it.U << 0.2, -0.1;
    ReferenceWindow ref(1, 3);
    ref << 0.0, 0.5, 0.25;
    const double zm = 1.1;
    const auto qp = ctl.build_subproblem(it, Vec::Constant(1, zm), ref);

    // Variables: dz0 du0 dz1 du1 dz2
    Mat P = Mat::Zero(5, 5);
    P(1, 1) = 0.5;
    P(2, 2) = 4.0;
    P(3, 3) = 0.5;
    P(4, 4) = 3.0 * 4.0;
    Vec q(5);
    q << 0.0, 0.5 * 0.2, 4.0 * (0.7 - 0.5), 0.5 * -0.1, 3.0 * 4.0 * (0.4 - 0.25);
    Mat A = Mat::Zero(7, 5);
    Vec l(7), u(7);
    A(0, 0) = 1.0;
    l(0) = u(0) = zm - 1.0;
    A(1, 2) = 1.0;
    A(1, 0) = -(f + gg * 0.2);
    A(1, 1) = -(gg * 1.0);
    l(1) = u(1) = f * 1.0 + gg * 1.0 * 0.2 - 0.7;
    A(2, 4) = 1.0;
    A(2, 2) = -(f + gg * -0.1);
    A(2, 3) = -(gg * 0.7);
    l(2) = u(2) = f * 0.7 + gg * 0.7 * -0.1 - 0.4;
    A(3, 1) = 1.0;
    l(3) = -1.0 - 0.2;
    u(3) = 2.0 - 0.2;
    A(4, 3) = 1.0;
    l(4) = -1.0 + 0.1;
    u(4) = 2.0 + 0.1;
    A(5, 2) = 1.0;
    l(5) = -5.0 - 0.7;
    u(5) = 6.0 - 0.7;
    A(6, 4) = 1.0;
    l(6) = -5.0 - 0.4;
    u(6) = 6.0 - 0.4;

    CHECK((Mat(qp.P) - P).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((qp.q - q).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((Mat(qp.A) - A).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((qp.l - l).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((qp.u - u).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(ctl.num_variables() == 5);
    CHECK(ctl.num_constraints() == 7);
}

TEST_CASE("equilibrium iterate with matching reference is stationary") {
    auto model = toy2();
    NMPCController ctl(model, toy_config(5, 1.0));
    const SQPIterate it = zero_guess(2, 1, 5, Vec::Zero(2));
    const auto qp = ctl.build_subproblem(it, Vec::Zero(2), constant_ref(Vec::Zero(2), 5));
    CHECK(qp.q.norm() == 0.0);
    CHECK(qp.l.head(2 + 10).norm() == 0.0);
    const auto s = solve_qp(qp, ctl.config().qp);
    CHECK(s.status == QPStatus::solved);
    CHECK(s.x.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("feasible iterate has zero dynamics residual") {
    auto model = toy2();
    NMPCController ctl(model, toy_config(4, 1.0));
    Mat U(1, 4);
    U << 0.3, -0.2, 0.5, 0.1;
    SQPIterate it{ctl.rollout(Eigen::Vector2d(1.0, -0.5), U), U};
    const auto qp = ctl.build_subproblem(it, it.Z.col(0), constant_ref(Vec::Zero(2), 4));
    CHECK(qp.l.segment(2, 8).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(qp.u.segment(2, 8).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sqp_initialize: zero-step optimality and tol = inf") {
    auto model = toy2();
    auto cfg = toy_config(6, 2.0);
    NMPCController ctl(model, cfg);
    const Vec z0 = Eigen::Vector2d(1.0, 0.5);
    const auto ref = constant_ref(Eigen::Vector2d(0.5, 0.0), 6);
    const auto res = ctl.sqp_initialize(z0, ref, zero_guess(2, 1, 6, z0));
    CHECK(res.converged);
    const auto qp = ctl.build_subproblem(res.iterate, z0, ref);
    QPSettings set = cfg.qp;
    const auto s = solve_qp(qp, set);
    CHECK(s.x.cwiseAbs().maxCoeff() < 10.0 * cfg.sqp_convergence_tol);

    cfg.sqp_convergence_tol = kInf;
    NMPCController once(model, cfg);
    CHECK(once.sqp_initialize(z0, ref, zero_guess(2, 1, 6, z0)).iterations == 1);
}

TEST_CASE("sqp_initialize: tight input box matches a grid search") {
    auto model = toy2();
    const int N = 3;
    const double box = 0.3;
    NMPCController ctl(model, toy_config(N, box));
    const Vec z0 = Eigen::Vector2d(1.0, 0.5);
    const auto ref = constant_ref(Eigen::Vector2d(0.5, -0.5), N);
    const auto res = ctl.sqp_initialize(z0, ref, zero_guess(2, 1, N, z0));
    auto cost_of = [&](const std::vector<double>& u) {
        Mat U(1, N);
        for (int k = 0; k < N; ++k) U(0, k) = u[static_cast<std::size_t>(k)];
        return ctl.cost({ctl.rollout(z0, U), U}, ref);
    };
    const auto grid = oracle::grid_search(N, -box, box, 41, cost_of);
    const double sqp = ctl.cost(res.iterate, ref);
    CHECK(sqp <= grid.cost * (1.0 + 1e-3));
    CHECK(res.iterate.U.cwiseAbs().maxCoeff() == doctest::Approx(box).epsilon(1e-6));

    // The unconstrained optimum leaves the box.
    NMPCController loose(model, toy_config(N, 100.0));
    const auto free = loose.sqp_initialize(z0, ref, zero_guess(2, 1, N, z0));
    CHECK(free.iterate.U.cwiseAbs().maxCoeff() > box);
}

TEST_CASE("shift") {
    auto model = toy2();
    NMPCController ctl(model, toy_config(5, 1.0));
    const SQPIterate eq = zero_guess(2, 1, 5, Vec::Zero(2));
    const auto s0 = NMPCController::shift(eq, *model);
    CHECK((s0.Z - eq.Z).norm() == 0.0);
    CHECK((s0.U - eq.U).norm() == 0.0);

    Mat U(1, 5);
    U << 0.1, 0.2, 0.3, 0.4, 0.5;
    const SQPIterate it{ctl.rollout(Eigen::Vector2d(1.0, 0.3), U), U};
    const auto s = NMPCController::shift(it, *model);
    for (int k = 0; k < 4; ++k) CHECK(s.U(0, k) == U(0, k + 1));
    CHECK(s.U(0, 4) == U(0, 4));
    for (int k = 0; k < 5; ++k) CHECK((s.Z.col(k) - it.Z.col(k + 1)).norm() == 0.0);
    CHECK((model->predict(s.Z.col(4), s.U.col(4)) - s.Z.col(5)).norm() == 0.0);
    for (int k = 0; k < 5; ++k) {
        const Vec r = model->linearize(s.Z.col(k), s.U.col(k), s.Z.col(k + 1)).r;
        CHECK(r.norm() == 0.0);
    }
}

TEST_CASE("closed loop on the toy system drives the output to the reference") {
    auto model = toy2();
    NMPCController ctl(model, toy_config(10, 1.0));
    Vec z = Eigen::Vector2d(1.0, 0.5);
    const auto ref = constant_ref(Eigen::Vector2d(0.6, 0.0), 10);
    ctl.sqp_initialize(z, ref, zero_guess(2, 1, 10, z));
    std::vector<double> err;
    for (int t = 0; t < 60; ++t) {
        const auto tick = ctl.step(z, ref);
        CHECK(tick.u(0) >= -1.0);
        CHECK(tick.u(0) <= 1.0);
        z = model->predict(z, tick.u);
        err.push_back((z - ref.col(0)).norm());
    }
    CHECK(err.back() < 0.05 * err.front());
}

TEST_CASE("nominal Jacobians agree with finite differences") {
    const auto nm = nominal();
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const Vec x = random_vehicle_state(rng);
        const Vec u = Vec4(0.3, 2e-4, -1e-4, 5e-5);
        const auto jac = nm.step_jacobian(x, u);
        CHECK((jac.x_next - nm.step(x, u)).norm() == 0.0);
        const Mat fa = oracle::fd_jacobian([&](const Vec& xx) { return nm.step(xx, u); }, x, 1e-6);
        const Mat fb = oracle::fd_jacobian([&](const Vec& uu) { return nm.step(x, uu); }, u, 1e-6);
        for (int c = 0; c < 13; ++c) {
            const double scale = std::max(fa.col(c).cwiseAbs().maxCoeff(), 1e-12);
            CHECK((jac.A.col(c) - fa.col(c)).cwiseAbs().maxCoeff() / scale < 1e-5);
        }
        for (int c = 0; c < 4; ++c) {
            const double scale = std::max(fb.col(c).cwiseAbs().maxCoeff(), 1e-12);
            CHECK((jac.B.col(c) - fb.col(c)).cwiseAbs().maxCoeff() / scale < 1e-5);
        }
        Mat fx, fu;
        nm.deriv_jacobian(x, u, fx, fu);
        const Mat cx = oracle::fd_jacobian([&](const Vec& xx) { return nm.deriv(xx, u); }, x, 1e-6);
        CHECK((fx - cx).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, cx.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("nominal NMPC regulates hover") {
    const VehicleParams vp;
    auto model = std::make_shared<NominalPredictionModel>(nominal());
    auto cfg = vehicle_nmpc_defaults(vp);
    NMPCController ctl(model, cfg);
    const Vec x = nominal().hover_state(Vec3(0.0, 0.0, 1.0));
    const ReferenceWindow ref = Vec3(0.0, 0.0, 1.0).replicate(1, cfg.horizon + 1);
    const auto init = ctl.sqp_initialize(x, ref, ctl.make_guess(std::vector<Vec>(static_cast<std::size_t>(cfg.horizon + 1), x)));
    CHECK(init.converged);
    CHECK(init.iterations <= 2);
    Simulator sim(vp, GroundEffectParams{1.0, 0.0, 0.02, false});
    RigidBodyState s;
    s.p = Vec3(0.0, 0.0, 1.0);
    sim.set_state(s);
    for (int t = 0; t < 50; ++t) {
        const auto tick = ctl.step(sim.state().flatten(), ref);
        CHECK(std::abs(tick.u(0) - vp.hover_thrust()) < 0.01 * vp.hover_thrust());
        CHECK(tick.u.tail(3).cwiseAbs().maxCoeff() < 1e-4);
        CHECK((tick.u.array() >= cfg.input_lower.array()).all());
        CHECK((tick.u.array() <= cfg.input_upper.array()).all());
        sim.advance(ControlInput::from_vector(Vec4(tick.u)), 0.02);
    }
    CHECK((sim.state().p - Vec3(0, 0, 1)).norm() < 1e-3);
}

TEST_CASE("degraded ticks hold the last input and fault after the limit") {
    auto model = toy2();
    auto cfg = toy_config(5, 1.0);
    NMPCController ctl(model, cfg);
    const Vec z = Eigen::Vector2d(1.0, 0.5);
    const auto ref = constant_ref(Eigen::Vector2d(0.5, 0.0), 5);
    ctl.sqp_initialize(z, ref, zero_guess(2, 1, 5, z));
    const auto good = ctl.step(z, ref);
    CHECK_FALSE(good.degraded);

    auto starved = cfg;
    starved.qp.max_iterations = 1;
    starved.qp.polish = false;
    NMPCController weak(model, starved);
    weak.sqp_initialize(z, ref, zero_guess(2, 1, 5, z));
    const Vec first_u = model->to_physical_input(weak.iterate().U.col(0));
    const Vec far = Eigen::Vector2d(-3.0, 2.0);
    auto t1 = weak.step(far, ref);
    CHECK(t1.degraded);
    CHECK((t1.u - first_u).norm() == 0.0);
    CHECK(weak.step(far, ref).degraded);
    CHECK_THROWS_AS(weak.step(far, ref), ControllerFault);

    NMPCController fresh(model, cfg);
    CHECK_THROWS_AS(fresh.step(z, ref), InvalidStateError);
}

TEST_CASE("config validation") {
    auto model = toy2();
    auto c = toy_config(5, 1.0);
    c.horizon = 0;
    CHECK_THROWS_AS(NMPCController(model, c), ConfigError);
    c = toy_config(5, 1.0);
    c.output_weight = Eigen::Vector2d(0.0, 0.0);
    c.input_weight = Vec::Zero(1);
    CHECK_THROWS_AS(NMPCController(model, c), ConfigError);
    c = toy_config(5, 1.0);
    c.input_lower = Vec::Constant(1, 2.0);
    CHECK_THROWS_AS(NMPCController(model, c), ConfigError);
    c = toy_config(5, 1.0);
    c.output_weight = Vec::Constant(3, 1.0);
    CHECK_THROWS_AS(NMPCController(model, c), ConfigError);
}
