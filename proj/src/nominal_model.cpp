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

#include "koopmpc/nominal_model.hpp"

#include "koopmpc/dataset.hpp"

namespace koopmpc {

namespace {

constexpr int kN = RigidBodyState::kDim;

Mat3 skew(const Vec3& a) {
    Mat3 S;
    S << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
    return S;
}

}  // namespace

NominalModel::NominalModel(VehicleParams params, double dt, int substeps)
    : params_(std::move(params)), dt_(dt), substeps_(substeps) {
    params_.validate();
    if (!(dt_ > 0.0)) throw ConfigError("nominal model: dt must be > 0");
    if (substeps_ < 1) throw ConfigError("nominal model: substeps must be >= 1");
}

Vec NominalModel::deriv(const Vec& x, const Vec& u) const {
    const Vec4 q = x.segment<4>(6);
    const Vec3 w = x.segment<3>(10);
    const Vec3& J = params_.inertia;
    Vec f(kN);
    f.segment<3>(0) = x.segment<3>(3);
    f.segment<3>(3) = Vec3(0.0, 0.0, -params_.gravity) + quat_to_rotation(q).col(2) * (u(0) / params_.mass);
    f.segment<4>(6) = quat_rate(q, w);
    f.segment<3>(10) = (J.cwiseProduct(w).cross(w) + u.segment<3>(1)).cwiseQuotient(J);
    return f;
}

void NominalModel::deriv_jacobian(const Vec& x, const Vec& u, Mat& fx, Mat& fu) const {
    const double qw = x(6), qx = x(7), qy = x(8), qz = x(9);
    const Vec3 w = x.segment<3>(10);
    const Vec3& J = params_.inertia;
    const double tm = u(0) / params_.mass;
    fx = Mat::Zero(kN, kN);
    fu = Mat::Zero(kN, 4);

    fx.block<3, 3>(0, 3).setIdentity();

    Eigen::Matrix<double, 3, 4> dcol;
    dcol << 2 * qy, 2 * qz, 2 * qw, 2 * qx,
            -2 * qx, -2 * qw, 2 * qz, 2 * qy,
            0.0, -4 * qx, -4 * qy, 0.0;
    fx.block<3, 4>(3, 6) = tm * dcol;
    fu.block<3, 1>(3, 0) = quat_to_rotation(x.segment<4>(6)).col(2) / params_.mass;

    Mat4 om;
    om << 0.0, -w.x(), -w.y(), -w.z(),
          w.x(), 0.0, w.z(), -w.y(),
          w.y(), -w.z(), 0.0, w.x(),
          w.z(), w.y(), -w.x(), 0.0;
    fx.block<4, 4>(6, 6) = 0.5 * om;
    Eigen::Matrix<double, 4, 3> xi;
    xi << -qx, -qy, -qz,
          qw, -qz, qy,
          qz, qw, -qx,
          -qy, qx, qw;
    fx.block<4, 3>(6, 10) = 0.5 * xi;

    const Mat3 Jinv = J.cwiseInverse().asDiagonal();
    fx.block<3, 3>(10, 10) = Jinv * (skew(J.cwiseProduct(w)) - skew(w) * J.asDiagonal());
    fu.block<3, 3>(10, 1) = Jinv;
}

Vec NominalModel::step(const Vec& x, const Vec& u) const {
    const double h = dt_ / substeps_;
    Vec s = x;
    for (int i = 0; i < substeps_; ++i) {
        const Vec k1 = deriv(s, u);
        const Vec k2 = deriv(s + 0.5 * h * k1, u);
        const Vec k3 = deriv(s + 0.5 * h * k2, u);
        const Vec k4 = deriv(s + h * k3, u);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    s.segment<4>(6).normalize();
    return s;
}

DiscreteJacobian NominalModel::step_jacobian(const Vec& x, const Vec& u) const {
    const double h = dt_ / substeps_;
    Vec s = x;
    Mat Sx = Mat::Identity(kN, kN);
    Mat Su = Mat::Zero(kN, 4);
    Mat fx, fu;
    for (int i = 0; i < substeps_; ++i) {
        deriv_jacobian(s, u, fx, fu);
        const Vec k1 = deriv(s, u);
        const Mat k1x = fx * Sx, k1u = fx * Su + fu;

        const Vec s2 = s + 0.5 * h * k1;
        deriv_jacobian(s2, u, fx, fu);
        const Vec k2 = deriv(s2, u);
        const Mat k2x = fx * (Sx + 0.5 * h * k1x), k2u = fx * (Su + 0.5 * h * k1u) + fu;

        const Vec s3 = s + 0.5 * h * k2;
        deriv_jacobian(s3, u, fx, fu);
        const Vec k3 = deriv(s3, u);
        const Mat k3x = fx * (Sx + 0.5 * h * k2x), k3u = fx * (Su + 0.5 * h * k2u) + fu;

        const Vec s4 = s + h * k3;
        deriv_jacobian(s4, u, fx, fu);
        const Vec k4 = deriv(s4, u);
        const Mat k4x = fx * (Sx + h * k3x), k4u = fx * (Su + h * k3u) + fu;

        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        Sx += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        Su += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    }
    // q <- q / |q|
    const Vec4 q = s.segment<4>(6);
    const double nq = q.norm();
    const Vec4 qn = q / nq;
    const Mat4 dn = (Mat4::Identity() - qn * qn.transpose()) / nq;
    DiscreteJacobian out;
    out.x_next = s;
    out.x_next.segment<4>(6) = qn;
    out.A = Sx;
    out.B = Su;
    out.A.middleRows<4>(6) = dn * Sx.middleRows<4>(6);
    out.B.middleRows<4>(6) = dn * Su.middleRows<4>(6);
    return out;
}

Vec NominalModel::hover_state(const Vec3& p) const {
    RigidBodyState s;
    s.p = p;
    return s.flatten();
}

Vec NominalModel::hover_input() const { return Vec4(params_.hover_thrust(), 0.0, 0.0, 0.0); }

HoverLinearPredictor::HoverLinearPredictor(const NominalModel& model)
    : x_h_(model.hover_state()), u_h_(model.hover_input()) {
    const DiscreteJacobian jac = model.step_jacobian(x_h_, u_h_);
    A_ = jac.A;
    B_ = jac.B;
}

std::vector<Vec> HoverLinearPredictor::rollout(const Vec& x0_raw, const std::vector<Vec>& inputs_raw, int K) const {
    if (static_cast<int>(inputs_raw.size()) < K) throw ConfigError("rollout: fewer inputs than steps");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(K) + 1);
    out.push_back(x0_raw);
    Vec dx = canonical_state(x0_raw) - x_h_;
    for (int k = 0; k < K; ++k) {
        dx = A_ * dx + B_ * (inputs_raw[static_cast<std::size_t>(k)] - u_h_);
        out.push_back(x_h_ + dx);
    }
    return out;
}

}  // namespace koopmpc
