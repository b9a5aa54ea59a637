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

#include "koopmpc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "koopmpc/json_util.hpp"

namespace koopmpc {

namespace {

using nlohmann::json;

std::uint64_t run_seed(std::uint64_t base, int run) {
    // splitmix64 finaliser over (base, run)
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(run) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class MeasurementNoise {
public:
    MeasurementNoise(const TrackConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

    Vec apply(const RigidBodyState& s) {
        RigidBodyState m = s;
        if (cfg_.noise) {
            for (int i = 0; i < 3; ++i) m.p(i) += cfg_.position_noise * gauss_(rng_);
            for (int i = 0; i < 3; ++i) m.v(i) += cfg_.velocity_noise * gauss_(rng_);
            Vec3 dth;
            for (int i = 0; i < 3; ++i) dth(i) = cfg_.attitude_noise * gauss_(rng_);
            const Vec4 dq(1.0, 0.5 * dth.x(), 0.5 * dth.y(), 0.5 * dth.z());
            // q (x) dq
            const Vec4& q = s.q;
            Vec4 r(q(0) * dq(0) - q(1) * dq(1) - q(2) * dq(2) - q(3) * dq(3),
                   q(0) * dq(1) + q(1) * dq(0) + q(2) * dq(3) - q(3) * dq(2),
                   q(0) * dq(2) - q(1) * dq(3) + q(2) * dq(0) + q(3) * dq(1),
                   q(0) * dq(3) + q(1) * dq(2) - q(2) * dq(1) + q(3) * dq(0));
            m.q = r.normalized();
            for (int i = 0; i < 3; ++i) m.omega(i) += cfg_.rate_noise * gauss_(rng_);
        }
        return m.flatten();
    }

private:
    const TrackConfig& cfg_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
};

bool crashed_state(const RigidBodyState& s, double tilt_deg, std::string& why) {
    if (!s.p.allFinite() || !s.q.allFinite()) {
        why = "non-finite state";
        return true;
    }
    if (s.p.z() < 0.0) {
        why = "ground penetration";
        return true;
    }
    const Vec3 e = s.euler();
    const double lim = tilt_deg * std::numbers::pi / 180.0;
    if (std::abs(e.x()) > lim || std::abs(e.y()) > lim) {
        why = "attitude limit exceeded";
        return true;
    }
    return false;
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
    return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace

void TrackConfig::validate() const {
    if (!(period > 0.0) || !(duration > 0.0)) throw ConfigError("track.period and track.duration must be > 0");
    if (!(altitude >= 0.0)) throw ConfigError("track.altitude must be >= 0");
    if (repeats < 1) throw ConfigError("track.repeats must be >= 1");
    if (position_noise < 0.0 || velocity_noise < 0.0 || attitude_noise < 0.0 || rate_noise < 0.0)
        throw ConfigError("track noise levels must be >= 0");
    if (!(crash_tilt > 0.0)) throw ConfigError("track.crash_tilt must be > 0");
}

int worker_threads() {
    const char* env = std::getenv("KOOPMPC_THREADS");
    if (!env || !*env) return 1;
    try {
        return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
        throw ConfigError(std::string("KOOPMPC_THREADS is not an integer: ") + env);
    }
}

RunReport run_single(const ControllerSpec& spec, const VehicleConfig& vehicle, const TrackConfig& track, int run,
                     const std::string& telemetry_path) {
    track.validate();
    const NMPCConfig& ncfg = spec.nmpc;
    const int N = ncfg.horizon;
    const ReferenceTrajectory ref =
        figure8_reference(track.period, track.amplitude, track.altitude, track.duration, ncfg.dt);
    const long ticks = std::lround(track.duration / ncfg.dt);

    RunReport rep;
    rep.run = run;
    rep.seed = run_seed(track.seed, run);
    MeasurementNoise noise(track, rep.seed);

    Simulator sim(vehicle.params, vehicle.ground_effect);
    RigidBodyState s0;
    s0.p = ref.points.front().p;
    sim.set_state(s0);

    std::ofstream tele;
    if (!telemetry_path.empty()) {
        tele.open(telemetry_path);
        if (!tele) throw Error("cannot open telemetry file " + telemetry_path);
    }

    NMPCController ctl(spec.model, ncfg);
    auto window = [&](long i) {
        ReferenceWindow w(spec.model->output_matrix().rows(), N + 1);
        for (int k = 0; k <= N; ++k) w.col(k) = ref.at_index(i + k).p;
        return w;
    };

    Vec3 err_sum = Vec3::Zero();
    double thrust_sum = 0.0;
    try {
        std::vector<Vec> guess;
        for (int k = 0; k <= N; ++k) {
            RigidBodyState g;
            g.p = ref.at_index(k).p;
            g.v = ref.at_index(k).v;
            guess.push_back(g.flatten());
        }
        ctl.sqp_initialize(noise.apply(sim.state()), window(0), ctl.make_guess(guess));

        for (long i = 0; i < ticks; ++i) {
            const RigidBodyState& s = sim.state();
            if (crashed_state(s, track.crash_tilt, rep.reason)) {
                rep.crashed = true;
                break;
            }
            const Vec3 p_ref = ref.at_index(i).p;
            const Vec3 e = s.p - p_ref;
            err_sum += e.cwiseAbs2();

            const TickResult tick = ctl.step(noise.apply(s), window(i));
            rep.tick_ms.push_back(tick.solve_ms);
            if (tick.degraded) ++rep.degraded_ticks;
            thrust_sum += std::abs(tick.u(0));
            ++rep.ticks;
            if (tele) {
                const json line{{"t", static_cast<double>(i) * ncfg.dt},
                                {"x", json_util::to_json(s.flatten())},
                                {"u", json_util::to_json(tick.u)},
                                {"p_ref", json_util::to_json(p_ref)},
                                {"qp_iters", tick.qp_iterations},
                                {"qp_status", to_string(tick.qp_status)},
                                {"solve_ms", track.record_timing ? tick.solve_ms : 0.0},
                                {"sqp_residual", tick.step_norm}};
                tele << line.dump() << '\n';
            }
            sim.advance(ControlInput::from_vector(tick.u.head<4>()), ncfg.dt);
        }
        if (!rep.crashed && crashed_state(sim.state(), track.crash_tilt, rep.reason)) rep.crashed = true;
    } catch (const ControllerFault& e) {
        rep.crashed = rep.faulted = true;
        rep.reason = e.what();
    } catch (const InvalidStateError& e) {
        rep.crashed = true;
        rep.reason = e.what();
    } catch (const DivergenceError& e) {
        rep.crashed = true;
        rep.reason = e.what();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        // QP failure during initialisation counts as a controller fault.
        rep.crashed = rep.faulted = true;
        rep.reason = e.what();
    }
    if (rep.ticks > 0) {
        rep.axis_mse = err_sum / static_cast<double>(rep.ticks);
        rep.mse = rep.axis_mse.sum();
        rep.thrust_norm = thrust_sum / static_cast<double>(rep.ticks);
    }
    return rep;
}

RunReport summarize_telemetry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open telemetry file " + path);
    RunReport rep;
    Vec3 err_sum = Vec3::Zero();
    double thrust_sum = 0.0;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const Vec x = json_util::vec_from_json(j.at("x"), "x", 13);
            const Vec pr = json_util::vec_from_json(j.at("p_ref"), "p_ref", 3);
            const Vec u = json_util::vec_from_json(j.at("u"), "u");
            const Vec3 e = x.head<3>() - pr;
            err_sum += e.cwiseAbs2();
            thrust_sum += std::abs(u(0));
            if (j.at("qp_status").get<std::string>() != "solved") ++rep.degraded_ticks;
            ++rep.ticks;
        } catch (const json::exception& e) {
            throw FormatError(std::string("telemetry: ") + e.what(), line_no);
        }
    }
    if (rep.ticks > 0) {
        rep.axis_mse = err_sum / static_cast<double>(rep.ticks);
        rep.mse = rep.axis_mse.sum();
        rep.thrust_norm = thrust_sum / static_cast<double>(rep.ticks);
    }
    return rep;
}

void summarize(ExperimentReport& r) {
    r.completed = 0;
    r.crashed = 0;
    std::vector<double> mse, thrust, ticks;
    Vec3 axis = Vec3::Zero();
    for (const RunReport& run : r.runs) {
        ticks.insert(ticks.end(), run.tick_ms.begin(), run.tick_ms.end());
        if (run.crashed) {
            ++r.crashed;
            continue;
        }
        ++r.completed;
        mse.push_back(run.mse);
        thrust.push_back(run.thrust_norm);
        axis += run.axis_mse;
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
    };
    auto stdev = [&](const std::vector<double>& v) {
        if (v.empty()) return std::nan("");
        const double mu = mean(v);
        double s = 0.0;
        for (double x : v) s += (x - mu) * (x - mu);
        return std::sqrt(s / static_cast<double>(v.size()));
    };
    r.mean_mse = mean(mse);
    r.std_mse = stdev(mse);
    r.mean_thrust_norm = mean(thrust);
    r.std_thrust_norm = stdev(thrust);
    r.mean_axis_mse = r.completed ? Vec3(axis / r.completed) : Vec3::Constant(std::nan(""));
    r.median_tick_ms = percentile(ticks, 0.5);
    r.p99_tick_ms = percentile(ticks, 0.99);
    r.max_tick_ms = ticks.empty() ? 0.0 : *std::max_element(ticks.begin(), ticks.end());
}

ExperimentReport run_tracking(const ControllerSpec& spec, const VehicleConfig& vehicle, const TrackConfig& track,
                              const std::string& telemetry_prefix) {
    track.validate();
    ExperimentReport report;
    report.controller = spec.name;
    report.altitude = track.altitude;
    report.model_checksum = spec.model_checksum;
    report.runs.resize(static_cast<std::size_t>(track.repeats));

    auto path_for = [&](int k) {
        if (telemetry_prefix.empty()) return std::string();
        std::ostringstream os;
        os << telemetry_prefix << "_run" << std::setw(2) << std::setfill('0') << k << ".jsonl";
        return os.str();
    };
    const int threads = std::min(worker_threads(), track.repeats);
    if (threads <= 1) {
        for (int k = 0; k < track.repeats; ++k)
            report.runs[static_cast<std::size_t>(k)] = run_single(spec, vehicle, track, k, path_for(k));
    } else {
        std::atomic<int> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(track.repeats));
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (int k = next++; k < track.repeats; k = next++) {
                    try {
                        report.runs[static_cast<std::size_t>(k)] = run_single(spec, vehicle, track, k, path_for(k));
                    } catch (...) {
                        errors[static_cast<std::size_t>(k)] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    summarize(report);
    return report;
}

json report_to_json(const ExperimentReport& r) {
    auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    json runs = json::array();
    for (const RunReport& run : r.runs) {
        runs.push_back({{"run", run.run},
                        {"seed", run.seed},
                        {"ticks", run.ticks},
                        {"mse", run.mse},
                        {"axis_mse", json_util::to_json(run.axis_mse)},
                        {"thrust_norm", run.thrust_norm},
                        {"crashed", run.crashed},
                        {"faulted", run.faulted},
                        {"reason", run.reason},
                        {"degraded_ticks", run.degraded_ticks}});
    }
    json axis = json::array();
    for (int i = 0; i < 3; ++i) axis.push_back(num(r.mean_axis_mse(i)));
    return {{"controller", r.controller},
            {"altitude", r.altitude},
            {"completed", r.completed},
            {"crashed", r.crashed},
            {"mean_mse", num(r.mean_mse)},
            {"std_mse", num(r.std_mse)},
            {"mean_axis_mse", axis},
            {"mean_thrust_norm", num(r.mean_thrust_norm)},
            {"std_thrust_norm", num(r.std_thrust_norm)},
            {"runtime_ms", {{"median", r.median_tick_ms}, {"p99", r.p99_tick_ms}, {"max", r.max_tick_ms}}},
            {"model_checksum", r.model_checksum},
            {"config", r.config},
            {"runs", runs}};
}

std::string sweep_csv(const std::vector<ExperimentReport>& reports) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "controller,altitude,runs,completed,crashed,mean_mse,std_mse,mean_x_mse,mean_y_mse,mean_z_mse,"
          "mean_thrust_norm,std_thrust_norm,median_tick_ms,p99_tick_ms\n";
    for (const auto& r : reports) {
        os << r.controller << ',' << r.altitude << ',' << r.runs.size() << ',' << r.completed << ',' << r.crashed
           << ',' << r.mean_mse << ',' << r.std_mse << ',' << r.mean_axis_mse.x() << ',' << r.mean_axis_mse.y() << ','
           << r.mean_axis_mse.z() << ',' << r.mean_thrust_norm << ',' << r.std_thrust_norm << ',' << r.median_tick_ms
           << ',' << r.p99_tick_ms << '\n';
    }
    return os.str();
}

}  // namespace koopmpc
