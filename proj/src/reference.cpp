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
#include <numbers>

#include "koopmpc/vehicle.hpp"

namespace koopmpc {

void ReferenceTrajectory::validate() const {
    if (points.empty()) throw ConfigError("reference trajectory is empty");
    if (!(timestep > 0.0)) throw ConfigError("reference timestep must be > 0");
    for (std::size_t k = 1; k < points.size(); ++k) {
        if (!(points[k].t > points[k - 1].t)) throw ConfigError("reference times must be strictly increasing");
    }
}

ReferencePoint ReferenceTrajectory::at_index(long k) const {
    if (k < 0) return points.front();
    if (k >= static_cast<long>(points.size())) {
        ReferencePoint last = points.back();
        last.v.setZero();
        last.t = points.front().t + static_cast<double>(k) * timestep;
        return last;
    }
    return points[static_cast<std::size_t>(k)];
}

ReferencePoint ReferenceTrajectory::at(double t) const {
    const long k = std::lround((t - points.front().t) / timestep);
    return at_index(k);
}

ReferenceTrajectory figure8_reference(double period, const Eigen::Vector2d& amplitude_xy, double altitude,
                                      double duration, double dt) {
    if (!(period > 0.0) || !(duration > 0.0) || !(dt > 0.0)) {
        throw ConfigError("figure8_reference: period, duration and dt must be > 0");
    }
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    const double w = kTwoPi / period;
    const double ax = amplitude_xy.x();
    const double ay = amplitude_xy.y();

    ReferenceTrajectory ref;
    ref.duration = duration;
    ref.timestep = dt;
    const long n = std::lround(duration / dt);
    ref.points.reserve(static_cast<std::size_t>(n + 1));
    for (long k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double s = t - duration / kTwoPi * std::sin(kTwoPi * t / duration);
        const double s_dot = 1.0 - std::cos(kTwoPi * t / duration);
        ReferencePoint pt;
        pt.t = t;
        pt.p = Vec3(ax * std::sin(w * s), 0.5 * ay * std::sin(2.0 * w * s), altitude);
        pt.v = Vec3(ax * w * std::cos(w * s), ay * w * std::cos(2.0 * w * s), 0.0) * s_dot;
        ref.points.push_back(pt);
    }
    return ref;
}

ReferenceTrajectory hover_reference(const Vec3& position, double duration, double dt) {
    if (!(duration > 0.0) || !(dt > 0.0)) throw ConfigError("hover_reference: duration and dt must be > 0");
    ReferenceTrajectory ref;
    ref.duration = duration;
    ref.timestep = dt;
    const long n = std::lround(duration / dt);
    for (long k = 0; k <= n; ++k) ref.points.push_back({static_cast<double>(k) * dt, position, Vec3::Zero()});
    return ref;
}

}  // namespace koopmpc
