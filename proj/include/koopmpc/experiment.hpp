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

// Closed-loop tracking experiments: simulator + NMPC on a figure-8,
// per-tick telemetry and aggregate reports.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmpc/dataset.hpp"
#include "koopmpc/nmpc.hpp"
#include "koopmpc/vehicle.hpp"

namespace koopmpc {

struct TrackConfig {
    double period = 6.0;    // s
    double duration = 6.0;  // s
    Eigen::Vector2d amplitude{0.4, 0.4};
    double altitude = 0.25;
    int repeats = 10;
    std::uint64_t seed = 1;
    // Additive Gaussian measurement noise (standard deviations).
    bool noise = true;
    double position_noise = 1e-3;   // m
    double velocity_noise = 5e-3;   // m/s
    double attitude_noise = 2e-3;   // rad, small-angle perturbation of q
    double rate_noise = 1e-2;       // rad/s
    double crash_tilt = 60.0;       // deg
    bool record_timing = true;      // false writes zero solve_ms for bit-identical telemetry

    void validate() const;
};

struct RunReport {
    int run = 0;
    std::uint64_t seed = 0;
    int ticks = 0;
    double mse = 0.0;                 // mean |p - p_ref|^2 over ticks, m^2
    Vec3 axis_mse = Vec3::Zero();
    double thrust_norm = 0.0;         // mean applied thrust magnitude, N
    bool crashed = false;
    bool faulted = false;
    std::string reason;
    int degraded_ticks = 0;
    std::vector<double> tick_ms;
};

struct ExperimentReport {
    std::string controller;
    double altitude = 0.0;
    std::vector<RunReport> runs;
    int completed = 0;
    int crashed = 0;
    double mean_mse = 0.0;  // over completed runs only
    double std_mse = 0.0;
    Vec3 mean_axis_mse = Vec3::Zero();
    double mean_thrust_norm = 0.0;
    double std_thrust_norm = 0.0;
    double median_tick_ms = 0.0;
    double p99_tick_ms = 0.0;
    double max_tick_ms = 0.0;
    std::string model_checksum;
    nlohmann::json config;
};

struct ControllerSpec {
    std::string name;  // "koopman" or "nominal"
    std::shared_ptr<const PredictionModel> model;
    NMPCConfig nmpc;
    std::string model_checksum;
};

// Runs `track.repeats` closed-loop flights. Telemetry goes to
// `<telemetry_prefix>_run<k>.jsonl` when the prefix is non-empty. Runs may
// execute on KOOPMPC_THREADS worker threads; results are ordered by run.
ExperimentReport run_tracking(const ControllerSpec& controller, const VehicleConfig& vehicle, const TrackConfig& track,
                              const std::string& telemetry_prefix = "");

// Single flight; `run` selects the noise stream.
RunReport run_single(const ControllerSpec& controller, const VehicleConfig& vehicle, const TrackConfig& track, int run,
                     const std::string& telemetry_path = "");

// Aggregates the per-run entries (excludes crashed runs from MSE means).
void summarize(ExperimentReport& report);

// Recompute a run's MSE figures from its telemetry file.
RunReport summarize_telemetry(const std::string& path);

nlohmann::json report_to_json(const ExperimentReport& report);
std::string sweep_csv(const std::vector<ExperimentReport>& reports);

// Worker count from KOOPMPC_THREADS (default 1).
int worker_threads();

}  // namespace koopmpc
