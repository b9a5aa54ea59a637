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

#include <algorithm>
#include <cmath>

#include "koopmpc/vehicle.hpp"

namespace koopmpc {

namespace {

Vec3 vee(const Mat3& S) { return {S(2, 1), S(0, 2), S(1, 0)}; }

}  // namespace

void PidGains::validate() const {
    auto finite = [](const Vec3& v) { return v.allFinite(); };
    if (!finite(kp) || !finite(ki) || !finite(kd) || !finite(attitude_kp) || !finite(attitude_kd) ||
        !std::isfinite(max_tilt) || !std::isfinite(max_horizontal_accel) || !std::isfinite(integral_limit)) {
        throw ConfigError("pid gains must be finite");
    }
}

PidWaypointController::PidWaypointController(PidGains gains, VehicleParams params)
    : gains_(std::move(gains)), params_(std::move(params)) {
    gains_.validate();
}

ControlInput PidWaypointController::update(const RigidBodyState& s, const Vec3& waypoint, double dt) {
    const double g = params_.gravity;
    const Vec3 e_p = waypoint - s.p;
    integral_ = (integral_ + dt * e_p).cwiseMax(-gains_.integral_limit).cwiseMin(gains_.integral_limit);

    Vec3 a_des = gains_.kp.cwiseProduct(e_p) + gains_.ki.cwiseProduct(integral_) - gains_.kd.cwiseProduct(s.v);
    const double a_xy_max = std::min(gains_.max_horizontal_accel, g * std::tan(gains_.max_tilt));
    const double a_xy = a_des.head<2>().norm();
    if (a_xy > a_xy_max) a_des.head<2>() *= a_xy_max / a_xy;

    Vec3 a_total = a_des + Vec3(0.0, 0.0, g);
    a_total.z() = std::max(a_total.z(), 0.2 * g);

    const Mat3 R = s.rotation();
    ControlInput u;
    u.thrust = std::clamp(params_.mass * a_total.dot(R.col(2)), 0.0, params_.max_total_thrust);

    const Vec3 b3 = a_total.normalized();
    const Vec3 b2 = b3.cross(Vec3::UnitX()).normalized();
    const Vec3 b1 = b2.cross(b3);
    Mat3 R_des;
    R_des << b1, b2, b3;
    const Vec3 e_R = 0.5 * vee(R_des.transpose() * R - R.transpose() * R_des);

    const Vec3 J = params_.inertia;
    const Vec3 alpha = -(gains_.attitude_kp.cwiseProduct(e_R) + gains_.attitude_kd.cwiseProduct(s.omega));
    u.torque = J.cwiseProduct(alpha) + s.omega.cross(J.cwiseProduct(s.omega));
    u.torque = u.torque.cwiseMax(-params_.max_torque).cwiseMin(params_.max_torque);
    return u;
}

ControlInput pid_waypoint_controller(const RigidBodyState& state, const Vec3& waypoint, const PidGains& gains,
                                     const VehicleParams& params) {
    PidWaypointController c(gains, params);
    return c.update(state, waypoint, 0.0);
}

}  // namespace koopmpc
