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

#include "koopmpc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace koopmpc {

Normalization Normalization::identity(int state_dim, int input_dim) {
    Normalization n;
    n.state_mean = Vec::Zero(state_dim);
    n.state_scale = Vec::Ones(state_dim);
    n.input_offset = Vec::Zero(input_dim);
    n.input_scale = Vec::Ones(input_dim);
    return n;
}

int SampleSet::state_dim() const {
    for (const auto& t : trajectories)
        if (!t.samples.empty()) return static_cast<int>(t.samples.front().x.size());
    return normalization.state_dim();
}

int SampleSet::input_dim() const {
    for (const auto& t : trajectories)
        if (!t.samples.empty()) return static_cast<int>(t.samples.front().u.size());
    return normalization.input_dim();
}

std::size_t SampleSet::sample_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.samples.size();
    return n;
}

bool operator==(const Sample& a, const Sample& b) {
    return a.x.size() == b.x.size() && a.u.size() == b.u.size() && a.x_next.size() == b.x_next.size() &&
           a.x == b.x && a.u == b.u && a.x_next == b.x_next;
}

bool operator==(const Trajectory& a, const Trajectory& b) { return a.id == b.id && a.samples == b.samples; }

bool operator==(const SampleSet& a, const SampleSet& b) {
    return a.dt == b.dt && a.hover_thrust_offset == b.hover_thrust_offset && a.normalization == b.normalization &&
           a.trajectories == b.trajectories;
}

Vec canonical_state(const Vec& x) {
    Vec y = x;
    if (y.size() == RigidBodyState::kDim && y(6) < 0.0) y.segment<4>(6) = -y.segment<4>(6);
    return y;
}

void CollectConfig::validate() const {
    if (!(waypoint_lower.array() <= waypoint_upper.array()).all())
        throw ConfigError("collect: waypoint box is not well ordered");
    if (!(total_duration > 0.0) || !(segment_duration > 0.0)) throw ConfigError("collect: durations must be > 0");
    if (!(fast_rate > 0.0) || !(sample_rate > 0.0)) throw ConfigError("collect: rates must be > 0");
    const double ratio = fast_rate / sample_rate;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
        throw ConfigError("collect: fast_rate must be an integer multiple of sample_rate");
    const double per_segment = segment_duration * sample_rate;
    const double segments = total_duration / segment_duration;
    if (std::abs(per_segment - std::round(per_segment)) > 1e-9 || std::abs(segments - std::round(segments)) > 1e-9)
        throw ConfigError("collect: durations must split into whole segments and samples");
    if (!(hold_min > 0.0) || hold_max < hold_min) throw ConfigError("collect: invalid waypoint hold range");
    if (thrust_excitation < 0.0 || torque_excitation < 0.0) throw ConfigError("collect: excitation must be >= 0");
}

int CollectConfig::decimation() const { return static_cast<int>(std::lround(fast_rate / sample_rate)); }

SampleSet collect(const CollectConfig& config, const VehicleConfig& vehicle, const FastInputObserver& fast_input) {
    config.validate();
    const VehicleParams& params = vehicle.params;
    Simulator sim(params, vehicle.ground_effect, 1e-3);
    PidWaypointController pid(vehicle.pid, params);

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int ratio = config.decimation();
    const double fast_dt = 1.0 / config.fast_rate;
    const long samples_per_segment = std::lround(config.segment_duration * config.sample_rate);
    const long segments = std::lround(config.total_duration / config.segment_duration);
    const long total_samples = samples_per_segment * segments;

    RigidBodyState s0;
    s0.p = config.start_position;
    sim.set_state(s0);

    auto draw_waypoint = [&] {
        Vec3 w;
        for (int i = 0; i < 3; ++i)
            w(i) = config.waypoint_lower(i) + (config.waypoint_upper(i) - config.waypoint_lower(i)) * unit(rng);
        return w;
    };

    Vec3 waypoint = config.start_position;
    double next_switch = 0.0;
    ControlInput excitation;

    std::vector<Vec> states;
    std::vector<Vec4> inputs;
    states.reserve(static_cast<std::size_t>(total_samples + 1));
    inputs.reserve(static_cast<std::size_t>(total_samples));

    for (long k = 0; k < total_samples; ++k) {
        states.push_back(canonical_state(sim.state().flatten()));
        excitation.thrust = config.thrust_excitation * params.hover_thrust() * gauss(rng);
        excitation.torque = config.torque_excitation * params.max_torque.cwiseProduct(
                                                           Vec3(gauss(rng), gauss(rng), gauss(rng)));
        Vec4 acc = Vec4::Zero();
        for (int j = 0; j < ratio; ++j) {
            if (sim.time() >= next_switch - 1e-12) {
                waypoint = draw_waypoint();
                next_switch = sim.time() + config.hold_min + (config.hold_max - config.hold_min) * unit(rng);
            }
            ControlInput u = pid.update(sim.state(), waypoint, fast_dt);
            u.thrust += excitation.thrust;
            u.torque += excitation.torque;
            const ControlInput applied = sim.advance(u, fast_dt);
            if (fast_input) fast_input(k, applied);
            acc += applied.vector();
            if (!sim.state().p.allFinite() || sim.state().p.norm() > 100.0) {
                std::ostringstream msg;
                msg << "collect: simulation diverged at t=" << sim.time() << " s, |p|=" << sim.state().p.norm();
                throw DivergenceError(msg.str());
            }
        }
        inputs.push_back(acc / static_cast<double>(ratio));
    }
    states.push_back(canonical_state(sim.state().flatten()));

    SampleSet set;
    set.dt = 1.0 / config.sample_rate;
    set.hover_thrust_offset = params.hover_thrust();
    set.normalization = Normalization::identity(RigidBodyState::kDim, 4);
    set.normalization.input_offset(0) = set.hover_thrust_offset;
    for (long j = 0; j < segments; ++j) {
        Trajectory traj;
        traj.id = static_cast<int>(j);
        traj.samples.reserve(static_cast<std::size_t>(samples_per_segment));
        for (long k = 0; k < samples_per_segment; ++k) {
            const auto idx = static_cast<std::size_t>(j * samples_per_segment + k);
            traj.samples.push_back({states[idx], Vec(inputs[idx]), states[idx + 1]});
        }
        set.trajectories.push_back(std::move(traj));
    }
    return set;
}

SplitResult split(const SampleSet& set, double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("split: fraction must be in (0, 1)");
    const long n = static_cast<long>(set.trajectories.size());
    if (n < 3) throw ConfigError("split: need at least 3 trajectories");
    const long holdout = std::lround(holdout_fraction * static_cast<double>(n));
    if (holdout < 1) throw ConfigError("split: holdout rounds to zero trajectories");
    if (holdout >= n) throw ConfigError("split: holdout leaves no training trajectories");
    const long n_val = holdout - holdout / 2;

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    SplitResult out;
    for (SampleSet* s : {&out.train, &out.val, &out.test}) {
        s->dt = set.dt;
        s->normalization = set.normalization;
        s->hover_thrust_offset = set.hover_thrust_offset;
    }
    const long n_train = n - holdout;
    for (long i = 0; i < n; ++i) {
        SampleSet& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
        dst.trajectories.push_back(set.trajectories[order[static_cast<std::size_t>(i)]]);
    }
    // Keep a stable, readable order inside each split.
    for (SampleSet* s : {&out.train, &out.val, &out.test}) {
        std::sort(s->trajectories.begin(), s->trajectories.end(),
                  [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
    }
    return out;
}

Normalization fit_normalization(const SampleSet& train) {
    const int d = train.state_dim();
    const int m = train.input_dim();
    const double count = static_cast<double>(train.sample_count());
    if (count < 1.0) throw ConfigError("fit_normalization: empty training set");

    Normalization norm = Normalization::identity(d, m);
    norm.input_offset(0) = train.hover_thrust_offset;

    Vec sx = Vec::Zero(d), su = Vec::Zero(m);
    for (const auto& t : train.trajectories)
        for (const auto& s : t.samples) {
            sx += s.x;
            su += s.u - norm.input_offset;
        }
    norm.state_mean = sx / count;
    const Vec u_mean = su / count;

    Vec vx = Vec::Zero(d), vu = Vec::Zero(m);
    for (const auto& t : train.trajectories)
        for (const auto& s : t.samples) {
            vx += (s.x - norm.state_mean).cwiseAbs2();
            vu += (s.u - norm.input_offset - u_mean).cwiseAbs2();
        }
    auto to_scale = [count](const Vec& var) {
        Vec sc = (var / count).cwiseSqrt();
        for (Eigen::Index i = 0; i < sc.size(); ++i)
            if (!(sc(i) > 1e-12)) sc(i) = 1.0;
        return sc;
    };
    norm.state_scale = to_scale(vx);
    norm.input_scale = to_scale(vu);
    norm.fitted = true;
    return norm;
}

SampleSet with_normalization(SampleSet set, const Normalization& norm) {
    set.normalization = norm;
    return set;
}

}  // namespace koopmpc
