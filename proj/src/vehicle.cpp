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

#include "koopmpc/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace koopmpc {

void VehicleParams::validate() const {
    if (!(mass > 0.0)) throw ConfigError("vehicle.mass must be > 0");
    if (!(inertia.array() > 0.0).all()) throw ConfigError("vehicle.inertia entries must be > 0");
    if (!(arm_length > 0.0)) throw ConfigError("vehicle.arm_length must be > 0");
    if (!(thrust_coeff > 0.0)) throw ConfigError("vehicle.thrust_coeff must be > 0");
    if (!(torque_coeff > 0.0)) throw ConfigError("vehicle.torque_coeff must be > 0");
    if (!(gravity > 0.0)) throw ConfigError("vehicle.gravity must be > 0");
    if (!(max_total_thrust > mass * gravity)) throw ConfigError("vehicle.max_total_thrust must exceed m*g");
    if (!(max_torque.array() > 0.0).all()) throw ConfigError("vehicle.max_torque entries must be > 0");
}

void GroundEffectParams::validate() const {
    if (!(rotor_radius > 0.0)) throw ConfigError("ground_effect.rotor_radius must be > 0");
    if (!(min_height > 0.0)) throw ConfigError("ground_effect.min_height must be > 0");
    const double bound = 16.0 * (min_height / rotor_radius) * (min_height / rotor_radius);
    if (!(strength >= 0.0 && strength < bound)) {
        throw ConfigError("ground_effect.strength must lie in [0, " + std::to_string(bound) + ")");
    }
}

Mat3 quat_to_rotation(const Vec4& q) {
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

Vec4 quat_rate(const Vec4& q, const Vec3& w) {
    const double qw = q(0), qx = q(1), qy = q(2), qz = q(3);
    return 0.5 * Vec4(-qx * w.x() - qy * w.y() - qz * w.z(),
                      qw * w.x() + qy * w.z() - qz * w.y(),
                      qw * w.y() - qx * w.z() + qz * w.x(),
                      qw * w.z() + qx * w.y() - qy * w.x());
}

Mat3 RigidBodyState::rotation() const { return quat_to_rotation(q); }

Vec RigidBodyState::flatten() const {
    Vec x(kDim);
    x << p, v, q, omega;
    return x;
}

RigidBodyState RigidBodyState::unflatten(const Eigen::Ref<const Vec>& x) {
    if (x.size() != kDim) throw InvalidStateError("flattened state must have 13 entries");
    RigidBodyState s;
    s.p = x.segment<3>(0);
    s.v = x.segment<3>(3);
    s.q = x.segment<4>(6);
    s.omega = x.segment<3>(10);
    return s;
}

Vec3 RigidBodyState::euler() const {
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    const double roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
    const double sp = std::clamp(2.0 * (w * y - z * x), -1.0, 1.0);
    const double pitch = std::asin(sp);
    const double yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
    return {roll, pitch, yaw};
}

double ground_effect_multiplier(double height, const GroundEffectParams& ge) {
    const double h = std::max(height, ge.min_height);
    const double ratio = ge.rotor_radius / (4.0 * h);
    return 1.0 / (1.0 - ge.strength * ratio * ratio);
}

namespace {

StateDerivative deriv_unchecked(const RigidBodyState& s, const ControlInput& u, const VehicleParams& params,
                                const GroundEffectParams& ge) {
    StateDerivative d;
    const double thrust = ge.enabled ? ground_effect_multiplier(s.p.z(), ge) * u.thrust : u.thrust;
    d.p_dot = s.v;
    d.v_dot = Vec3(0.0, 0.0, -params.gravity) + quat_to_rotation(s.q).col(2) * (thrust / params.mass);
    d.q_dot = quat_rate(s.q, s.omega);
    const Vec3 Jw = params.inertia.cwiseProduct(s.omega);
    d.omega_dot = (Jw.cross(s.omega) + u.torque).cwiseQuotient(params.inertia);
    return d;
}

RigidBodyState add_scaled(const RigidBodyState& s, const StateDerivative& d, double h) {
    RigidBodyState r;
    r.p = s.p + h * d.p_dot;
    r.v = s.v + h * d.v_dot;
    r.q = s.q + h * d.q_dot;
    r.omega = s.omega + h * d.omega_dot;
    return r;
}

void check_state(const RigidBodyState& s, const ControlInput& u) {
    if (std::abs(s.q.norm() - 1.0) > 1e-6) throw InvalidStateError("attitude quaternion is not unit norm");
    if (!u.finite()) throw InvalidStateError("control input is not finite");
}

}  // namespace

StateDerivative dynamics_deriv(const RigidBodyState& state, const ControlInput& u, const VehicleParams& params,
                               const GroundEffectParams& ge) {
    check_state(state, u);
    return deriv_unchecked(state, u, params, ge);
}

RigidBodyState rk4_step(const RigidBodyState& s, const ControlInput& u, double dt, const VehicleParams& params,
                        const GroundEffectParams& ge) {
    if (!(dt > 0.0)) throw ConfigError("rk4_step: dt must be > 0");
    check_state(s, u);
    const StateDerivative k1 = deriv_unchecked(s, u, params, ge);
    const StateDerivative k2 = deriv_unchecked(add_scaled(s, k1, 0.5 * dt), u, params, ge);
    const StateDerivative k3 = deriv_unchecked(add_scaled(s, k2, 0.5 * dt), u, params, ge);
    const StateDerivative k4 = deriv_unchecked(add_scaled(s, k3, dt), u, params, ge);
    RigidBodyState r;
    const double w = dt / 6.0;
    r.p = s.p + w * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
    r.v = s.v + w * (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot);
    r.q = s.q + w * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot);
    r.omega = s.omega + w * (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot);
    r.q.normalize();
    return r;
}

Mat4 mixing_matrix(const VehicleParams& params) {
    const double cT = params.thrust_coeff;
    const double cQ = params.torque_coeff;
    const double l = params.arm_length;
    Mat4 T;
    T << cT, cT, cT, cT,
         0.0, cT * l, 0.0, -cT * l,
         -cT * l, 0.0, cT * l, 0.0,
         -cQ, cQ, -cQ, cQ;
    return T;
}

ControlInput mix(const Vec4& rotor_speeds_sq, const VehicleParams& params) {
    return ControlInput::from_vector(mixing_matrix(params) * rotor_speeds_sq);
}

MixInverse mix_inverse(const ControlInput& u, const VehicleParams& params) {
    MixInverse out;
    out.rotor_speeds_sq = mixing_matrix(params).partialPivLu().solve(u.vector());
    out.saturated = (out.rotor_speeds_sq.array() < 0.0).any();
    return out;
}

Saturation saturate_actuators(const ControlInput& u, const VehicleParams& params) {
    MixInverse inv = mix_inverse(u, params);
    const double eta_max = params.max_rotor_speed_sq();
    Vec4 eta = inv.rotor_speeds_sq.cwiseMax(0.0).cwiseMin(eta_max);
    Saturation s;
    s.saturated = inv.saturated || (inv.rotor_speeds_sq.array() > eta_max).any();
    s.applied = s.saturated ? mix(eta, params) : u;
    return s;
}

Simulator::Simulator(VehicleParams params, GroundEffectParams ge, double internal_dt)
    : params_(std::move(params)), ge_(std::move(ge)), internal_dt_(internal_dt) {
    params_.validate();
    if (ge_.enabled) ge_.validate();
    if (!(internal_dt_ > 0.0)) throw ConfigError("simulator internal_dt must be > 0");
}

ControlInput Simulator::advance(const ControlInput& u, double duration) {
    const ControlInput applied = saturate_actuators(u, params_).applied;
    const long steps = std::max(1L, std::lround(duration / internal_dt_));
    const double h = duration / static_cast<double>(steps);
    for (long i = 0; i < steps; ++i) state_ = rk4_step(state_, applied, h, params_, ge_);
    t_ += duration;
    return applied;
}

}  // namespace koopmpc
