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

#include <array>
#include <vector>

#include "koopmpc/common.hpp"

namespace koopmpc {

struct VehicleParams {
    double mass = 0.0336;                   // kg
    Vec3 inertia{1.7e-5, 1.7e-5, 2.9e-5};   // kg m^2, body principal axes
    double arm_length = 0.046;              // m
    double thrust_coeff = 2.88e-8;          // N s^2
    double torque_coeff = 7.24e-10;         // N m s^2
    double gravity = 9.81;                  // m/s^2
    double max_total_thrust = 0.0570 * 9.81;  // N
    Vec3 max_torque{1.0e-3, 1.0e-3, 5.0e-4};  // N m, symmetric box

    double hover_thrust() const { return mass * gravity; }
    // Each rotor saturates at a quarter of the total thrust envelope.
    double max_rotor_speed_sq() const { return max_total_thrust / (4.0 * thrust_coeff); }
    void validate() const;
};

struct GroundEffectParams {
    double rotor_radius = 0.04;  // m
    double strength = 3.0;
    double min_height = 0.02;  // m
    bool enabled = true;

    void validate() const;
};

// Flattened layout: p(3) v(3) q(4, scalar first) omega(3).
struct RigidBodyState {
    static constexpr int kDim = 13;

    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    Vec4 q{1.0, 0.0, 0.0, 0.0};
    Vec3 omega = Vec3::Zero();

    Mat3 rotation() const;
    Vec flatten() const;
    static RigidBodyState unflatten(const Eigen::Ref<const Vec>& x);
    // Roll, pitch, yaw (ZYX) in radians.
    Vec3 euler() const;
};

struct StateDerivative {
    Vec3 p_dot;
    Vec3 v_dot;
    Vec4 q_dot;
    Vec3 omega_dot;
};

struct ControlInput {
    double thrust = 0.0;
    Vec3 torque = Vec3::Zero();

    Vec4 vector() const { return {thrust, torque.x(), torque.y(), torque.z()}; }
    static ControlInput from_vector(const Eigen::Ref<const Vec4>& u) { return {u(0), u.tail<3>()}; }
    bool finite() const { return std::isfinite(thrust) && torque.allFinite(); }
};

// Rotation matrix of a (not necessarily unit) scalar-first quaternion,
// using the unit-quaternion formula.
Mat3 quat_to_rotation(const Vec4& q);
// q (x) [0, w]
Vec4 quat_rate(const Vec4& q, const Vec3& omega);

double ground_effect_multiplier(double height, const GroundEffectParams& ge);

// Throws InvalidStateError when |q| deviates from 1 by more than 1e-6.
StateDerivative dynamics_deriv(const RigidBodyState& state, const ControlInput& u, const VehicleParams& params,
                               const GroundEffectParams& ge);

// Classical RK4 with u held over dt; quaternion renormalised afterwards.
RigidBodyState rk4_step(const RigidBodyState& state, const ControlInput& u, double dt, const VehicleParams& params,
                        const GroundEffectParams& ge);

Mat4 mixing_matrix(const VehicleParams& params);
ControlInput mix(const Vec4& rotor_speeds_sq, const VehicleParams& params);

struct MixInverse {
    Vec4 rotor_speeds_sq;
    bool saturated = false;  // some component came out negative
};
MixInverse mix_inverse(const ControlInput& u, const VehicleParams& params);

// Clamp implied rotor speeds to [0, max] and re-mix.
struct Saturation {
    ControlInput applied;
    bool saturated = false;
};
Saturation saturate_actuators(const ControlInput& u, const VehicleParams& params);

// The 6-DoF simulator. Integrates at `internal_dt` and holds u between calls.
class Simulator {
public:
    Simulator(VehicleParams params, GroundEffectParams ge, double internal_dt = 1e-3);

    const RigidBodyState& state() const { return state_; }
    void set_state(const RigidBodyState& s) { state_ = s; }
    double time() const { return t_; }
    void set_time(double t) { t_ = t; }

    // Advance by `duration` seconds (a multiple of internal_dt up to rounding)
    // and return the input actually applied after actuator saturation.
    ControlInput advance(const ControlInput& u, double duration);

    const VehicleParams& params() const { return params_; }
    const GroundEffectParams& ground_effect() const { return ge_; }

private:
    VehicleParams params_;
    GroundEffectParams ge_;
    double internal_dt_;
    RigidBodyState state_;
    double t_ = 0.0;
};

struct PidGains {
    Vec3 kp{6.0, 6.0, 8.0};
    Vec3 ki{0.5, 0.5, 1.0};
    Vec3 kd{4.0, 4.0, 5.0};
    Vec3 attitude_kp{400.0, 400.0, 100.0};  // rad/s^2 per rad
    Vec3 attitude_kd{40.0, 40.0, 20.0};     // rad/s^2 per rad/s
    double max_tilt = 0.6;                  // rad
    double max_horizontal_accel = 6.0;      // m/s^2
    double integral_limit = 0.5;            // m s

    void validate() const;
};

// Cascaded position -> attitude PID. Stateful only through the integrator.
class PidWaypointController {
public:
    PidWaypointController(PidGains gains, VehicleParams params);

    ControlInput update(const RigidBodyState& state, const Vec3& waypoint, double dt);
    void reset() { integral_.setZero(); }

private:
    PidGains gains_;
    VehicleParams params_;
    Vec3 integral_ = Vec3::Zero();
};

// One-shot evaluation with zero integrator state.
ControlInput pid_waypoint_controller(const RigidBodyState& state, const Vec3& waypoint, const PidGains& gains,
                                     const VehicleParams& params);

struct ReferencePoint {
    double t = 0.0;
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
};

struct ReferenceTrajectory {
    std::vector<ReferencePoint> points;
    double duration = 0.0;
    double timestep = 0.0;

    // Sample index for time t, clamped to the ends; past the end the last
    // position is held with zero velocity.
    ReferencePoint at(double t) const;
    ReferencePoint at_index(long k) const;
    void validate() const;
};

// Ramped lemniscate: p(t) = (Ax sin(w s), Ay sin(2 w s)/2, altitude) with
// w = 2 pi / period and phase s(t) = t - D/(2 pi) sin(2 pi t / D), so the
// reference starts and stops at rest.
ReferenceTrajectory figure8_reference(double period, const Eigen::Vector2d& amplitude_xy, double altitude,
                                      double duration, double dt);

ReferenceTrajectory hover_reference(const Vec3& position, double duration, double dt);

}  // namespace koopmpc
