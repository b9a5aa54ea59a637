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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "koopmpc/common.hpp"
#include "koopmpc/vehicle.hpp"

namespace koopmpc {

// One-step training triple. States are raw (physical) flattened states.
struct Sample {
    Vec x;
    Vec u;
    Vec x_next;
};

// Per-dimension affine preprocessing. States: (x - mean) / scale.
// Inputs: (u - offset) / scale, where the offset moves hover to zero.
struct Normalization {
    Vec state_mean;
    Vec state_scale;
    Vec input_offset;
    Vec input_scale;
    bool fitted = false;

    static Normalization identity(int state_dim, int input_dim);

    Vec apply_state(const Vec& x) const { return (x - state_mean).cwiseQuotient(state_scale); }
    Vec invert_state(const Vec& xn) const { return xn.cwiseProduct(state_scale) + state_mean; }
    Vec apply_input(const Vec& u) const { return (u - input_offset).cwiseQuotient(input_scale); }
    Vec invert_input(const Vec& un) const { return un.cwiseProduct(input_scale) + input_offset; }

    int state_dim() const { return static_cast<int>(state_mean.size()); }
    int input_dim() const { return static_cast<int>(input_offset.size()); }
    bool operator==(const Normalization&) const = default;
};

struct Trajectory {
    int id = 0;
    std::vector<Sample> samples;
};

struct SampleSet {
    std::vector<Trajectory> trajectories;
    double dt = 0.02;
    Normalization normalization;
    double hover_thrust_offset = 0.0;

    int state_dim() const;
    int input_dim() const;
    std::size_t sample_count() const;
};

bool operator==(const Sample& a, const Sample& b);
bool operator==(const Trajectory& a, const Trajectory& b);
bool operator==(const SampleSet& a, const SampleSet& b);

struct CollectConfig {
    Vec3 waypoint_lower{-0.3, -0.3, 0.1};
    Vec3 waypoint_upper{0.3, 0.3, 1.0};
    double total_duration = 240.0;  // s
    double segment_duration = 10.0;  // s, length T_t of one trajectory
    double fast_rate = 500.0;       // Hz
    double sample_rate = 50.0;      // Hz
    double hold_min = 1.0;          // s a waypoint is held
    double hold_max = 2.5;
    // Zero-mean excitation added to the PID output, held over each sample
    // interval. Fractions of hover thrust and of the torque box.
    double thrust_excitation = 0.05;
    double torque_excitation = 0.05;
    std::uint64_t seed = 1;
    Vec3 start_position{0.0, 0.0, 0.5};

    void validate() const;
    int decimation() const;
};

struct VehicleConfig {
    VehicleParams params;
    GroundEffectParams ground_effect;
    PidGains pid;
};

// Simulated PID waypoint flight; states decimated, inputs averaged over
// each sample interval. Throws DivergenceError when |p| exceeds 100 m.
// `fast_input`, when set, sees every applied fast-rate input with the index
// of the sample interval it belongs to.
using FastInputObserver = std::function<void(long sample, const ControlInput& applied)>;
SampleSet collect(const CollectConfig& config, const VehicleConfig& vehicle, const FastInputObserver& fast_input = {});

struct SplitResult {
    SampleSet train;
    SampleSet val;
    SampleSet test;
};

// Whole-trajectory split; the holdout is rounded to whole trajectories and
// shared between validation (ceil half) and test (floor half).
SplitResult split(const SampleSet& set, double holdout_fraction, std::uint64_t seed);

// Statistics from the given set only. Dimensions with zero variance get
// scale 1. `input_offset` is (hover_thrust_offset, 0, ...).
Normalization fit_normalization(const SampleSet& train);

// Copy of `set` carrying `norm` as its preprocessing metadata.
SampleSet with_normalization(SampleSet set, const Normalization& norm);

void save_dataset(const SampleSet& set, const std::string& path);
SampleSet load_dataset(const std::string& path);
std::string dataset_to_jsonl(const SampleSet& set);
SampleSet dataset_from_jsonl(const std::string& text);

// Flip quaternion sign so the scalar part is non-negative.
Vec canonical_state(const Vec& x);

}  // namespace koopmpc
