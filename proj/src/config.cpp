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

#include "koopmpc/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "koopmpc/json_util.hpp"

namespace koopmpc {

namespace {

using nlohmann::json;
using json_util::read;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& block) {
    if (!j.is_object()) throw ConfigError("config block '" + block + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known =
            std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
        if (!known) throw ConfigError("unknown config key '" + block + "." + it.key() + "'");
    }
}

double bound_value(const json& e, const char* key) {
    if (e.is_null()) throw ConfigError(std::string("config key '") + key + "': null bound");
    if (e.is_string()) {
        const std::string s = e.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ConfigError(std::string("config key '") + key + "': bad bound '" + s + "'");
    }
    if (!e.is_number()) throw ConfigError(std::string("config key '") + key + "': bounds must be numbers");
    return e.get<double>();
}

void read_vec(const json& j, const char* key, Vec& out) {
    if (!j.contains(key)) return;
    const json& a = j.at(key);
    if (!a.is_array()) throw ConfigError(std::string("config key '") + key + "' must be an array");
    out.resize(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) out(static_cast<Eigen::Index>(i)) = bound_value(a[i], key);
}

json bounds_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isinf(v(i)))
            a.push_back(v(i) > 0 ? "inf" : "-inf");
        else
            a.push_back(v(i));
    }
    return a;
}

const char* kind_name(ConstraintObservable::Kind k) {
    switch (k) {
        case ConstraintObservable::Kind::cos: return "cos";
        case ConstraintObservable::Kind::sin: return "sin";
        case ConstraintObservable::Kind::square: return "square";
    }
    return "cos";
}

ConstraintObservable::Kind kind_from(const std::string& s) {
    if (s == "cos") return ConstraintObservable::Kind::cos;
    if (s == "sin") return ConstraintObservable::Kind::sin;
    if (s == "square") return ConstraintObservable::Kind::square;
    throw ConfigError("unknown constraint observable kind '" + s + "'");
}

void read_vehicle(const json& j, VehicleConfig& v) {
    check_keys(j, {"mass", "inertia", "arm_length", "thrust_coeff", "torque_coeff", "gravity", "max_total_thrust",
                   "max_torque", "ground_effect", "pid"},
               "vehicle");
    VehicleParams& p = v.params;
    read(j, "mass", p.mass);
    read(j, "inertia", p.inertia);
    read(j, "arm_length", p.arm_length);
    read(j, "thrust_coeff", p.thrust_coeff);
    read(j, "torque_coeff", p.torque_coeff);
    read(j, "gravity", p.gravity);
    read(j, "max_total_thrust", p.max_total_thrust);
    read(j, "max_torque", p.max_torque);
    if (j.contains("ground_effect")) {
        const json& g = j.at("ground_effect");
        check_keys(g, {"enabled", "rotor_radius", "strength", "min_height"}, "vehicle.ground_effect");
        read(g, "enabled", v.ground_effect.enabled);
        read(g, "rotor_radius", v.ground_effect.rotor_radius);
        read(g, "strength", v.ground_effect.strength);
        read(g, "min_height", v.ground_effect.min_height);
    }
    if (j.contains("pid")) {
        const json& g = j.at("pid");
        check_keys(g, {"kp", "ki", "kd", "attitude_kp", "attitude_kd", "max_tilt", "max_horizontal_accel",
                       "integral_limit"},
                   "vehicle.pid");
        read(g, "kp", v.pid.kp);
        read(g, "ki", v.pid.ki);
        read(g, "kd", v.pid.kd);
        read(g, "attitude_kp", v.pid.attitude_kp);
        read(g, "attitude_kd", v.pid.attitude_kd);
        read(g, "max_tilt", v.pid.max_tilt);
        read(g, "max_horizontal_accel", v.pid.max_horizontal_accel);
        read(g, "integral_limit", v.pid.integral_limit);
    }
}

void read_collect(const json& j, CollectConfig& c) {
    check_keys(j, {"waypoint_lower", "waypoint_upper", "total_duration", "segment_duration", "fast_rate",
                   "sample_rate", "hold_min", "hold_max", "thrust_excitation", "torque_excitation", "seed",
                   "start_position"},
               "collect");
    read(j, "waypoint_lower", c.waypoint_lower);
    read(j, "waypoint_upper", c.waypoint_upper);
    read(j, "total_duration", c.total_duration);
    read(j, "segment_duration", c.segment_duration);
    read(j, "fast_rate", c.fast_rate);
    read(j, "sample_rate", c.sample_rate);
    read(j, "hold_min", c.hold_min);
    read(j, "hold_max", c.hold_max);
    read(j, "thrust_excitation", c.thrust_excitation);
    read(j, "torque_excitation", c.torque_excitation);
    read(j, "seed", c.seed);
    read(j, "start_position", c.start_position);
}

void read_train(const json& j, TrainConfig& t) {
    check_keys(j, {"learning_rate", "beta_kct", "l2_strength", "epochs", "batch_size", "seed", "beta1", "beta2",
                   "epsilon", "eval_horizon", "average_fraction", "feature_dim", "hidden", "constraint_observables"},
               "train");
    read(j, "learning_rate", t.learning_rate);
    read(j, "beta_kct", t.beta_kct);
    read(j, "l2_strength", t.l2_strength);
    read(j, "epochs", t.epochs);
    read(j, "batch_size", t.batch_size);
    read(j, "seed", t.seed);
    read(j, "beta1", t.beta1);
    read(j, "beta2", t.beta2);
    read(j, "epsilon", t.epsilon);
    read(j, "eval_horizon", t.eval_horizon);
    read(j, "average_fraction", t.average_fraction);
    read(j, "feature_dim", t.shape.feature_dim);
    try {
        if (j.contains("hidden")) t.shape.hidden = j.at("hidden").get<std::vector<int>>();
        if (j.contains("constraint_observables")) {
            t.observables.clear();
            for (const json& o : j.at("constraint_observables")) {
                check_keys(o, {"kind", "index", "lower", "upper"}, "train.constraint_observables[]");
                ConstraintObservable c;
                c.kind = kind_from(o.at("kind").get<std::string>());
                c.index = o.at("index").get<int>();
                if (o.contains("lower")) c.lower = bound_value(o.at("lower"), "lower");
                if (o.contains("upper")) c.upper = bound_value(o.at("upper"), "upper");
                t.observables.push_back(c);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    t.shape.fixed_dim = static_cast<int>(t.observables.size());
}

void read_qp(const json& j, QPSettings& q) {
    check_keys(j, {"eps_abs", "eps_rel", "eps_primal_infeasible", "eps_dual_infeasible", "max_iterations", "rho",
                   "sigma", "alpha", "adaptive_rho", "adaptive_rho_interval", "adaptive_rho_tolerance",
                   "scaling_iterations", "check_interval", "polish", "polish_delta", "polish_refine_iterations"},
               "nmpc.qp");
    read(j, "eps_abs", q.eps_abs);
    read(j, "eps_rel", q.eps_rel);
    read(j, "eps_primal_infeasible", q.eps_primal_infeasible);
    read(j, "eps_dual_infeasible", q.eps_dual_infeasible);
    read(j, "max_iterations", q.max_iterations);
    read(j, "rho", q.rho);
    read(j, "sigma", q.sigma);
    read(j, "alpha", q.alpha);
    read(j, "adaptive_rho", q.adaptive_rho);
    read(j, "adaptive_rho_interval", q.adaptive_rho_interval);
    read(j, "adaptive_rho_tolerance", q.adaptive_rho_tolerance);
    read(j, "scaling_iterations", q.scaling_iterations);
    read(j, "check_interval", q.check_interval);
    read(j, "polish", q.polish);
    read(j, "polish_delta", q.polish_delta);
    read(j, "polish_refine_iterations", q.polish_refine_iterations);
}

void read_nmpc(const json& j, NMPCConfig& n) {
    check_keys(j, {"horizon", "dt", "Q", "terminal_scale", "R", "input_cost_scale", "state_lower", "state_upper",
                   "input_lower", "input_upper", "sqp_init_max_iters", "sqp_convergence_tol", "max_degraded_ticks",
                   "qp"},
               "nmpc");
    read(j, "horizon", n.horizon);
    read(j, "dt", n.dt);
    read_vec(j, "Q", n.output_weight);
    read(j, "terminal_scale", n.terminal_scale);
    read_vec(j, "R", n.input_weight);
    read_vec(j, "input_cost_scale", n.input_cost_scale);
    read_vec(j, "state_lower", n.state_lower);
    read_vec(j, "state_upper", n.state_upper);
    read_vec(j, "input_lower", n.input_lower);
    read_vec(j, "input_upper", n.input_upper);
    read(j, "sqp_init_max_iters", n.sqp_init_max_iters);
    read(j, "sqp_convergence_tol", n.sqp_convergence_tol);
    read(j, "max_degraded_ticks", n.max_degraded_ticks);
    if (j.contains("qp")) read_qp(j.at("qp"), n.qp);
}

void read_track(const json& j, TrackConfig& t) {
    check_keys(j, {"period", "duration", "amplitude", "altitude", "repeats", "seed", "noise", "position_noise",
                   "velocity_noise", "attitude_noise", "rate_noise", "crash_tilt", "record_timing"},
               "track");
    read(j, "period", t.period);
    read(j, "duration", t.duration);
    read(j, "amplitude", t.amplitude);
    read(j, "altitude", t.altitude);
    read(j, "repeats", t.repeats);
    read(j, "seed", t.seed);
    read(j, "noise", t.noise);
    read(j, "position_noise", t.position_noise);
    read(j, "velocity_noise", t.velocity_noise);
    read(j, "attitude_noise", t.attitude_noise);
    read(j, "rate_noise", t.rate_noise);
    read(j, "crash_tilt", t.crash_tilt);
    read(j, "record_timing", t.record_timing);
}

}  // namespace

void AppConfig::validate() const {
    vehicle.params.validate();
    if (vehicle.ground_effect.enabled) vehicle.ground_effect.validate();
    vehicle.pid.validate();
    collect.validate();
    if (!(split.holdout_fraction > 0.0 && split.holdout_fraction < 1.0))
        throw ConfigError("split.holdout_fraction must lie in (0, 1)");
    train.validate();
    nmpc.validate(3, RigidBodyState::kDim, 4);
    track.validate();
    if (sweep_altitudes.empty()) throw ConfigError("sweep.altitudes must not be empty");
}

AppConfig default_config() {
    AppConfig cfg;
    cfg.nmpc = vehicle_nmpc_defaults(cfg.vehicle.params);
    return cfg;
}

AppConfig config_from_json(const json& j) {
    check_keys(j, {"vehicle", "collect", "split", "train", "nmpc", "track", "sweep"}, "<root>");
    AppConfig cfg;
    if (j.contains("vehicle")) read_vehicle(j.at("vehicle"), cfg.vehicle);
    // Input box and cost scaling follow the (possibly overridden) vehicle.
    cfg.nmpc = vehicle_nmpc_defaults(cfg.vehicle.params);
    if (j.contains("collect")) read_collect(j.at("collect"), cfg.collect);
    if (j.contains("split")) {
        const json& s = j.at("split");
        check_keys(s, {"holdout_fraction", "seed"}, "split");
        read(s, "holdout_fraction", cfg.split.holdout_fraction);
        read(s, "seed", cfg.split.seed);
    }
    if (j.contains("train")) read_train(j.at("train"), cfg.train);
    if (j.contains("nmpc")) read_nmpc(j.at("nmpc"), cfg.nmpc);
    if (j.contains("track")) read_track(j.at("track"), cfg.track);
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        check_keys(s, {"altitudes"}, "sweep");
        try {
            if (s.contains("altitudes")) cfg.sweep_altitudes = s.at("altitudes").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("sweep.altitudes: ") + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

AppConfig load_config(const std::string& path) {
    json j;
    try {
        j = json_util::parse_file(path);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(j);
}

json config_to_json(const AppConfig& c) {
    using json_util::to_json;
    const VehicleParams& p = c.vehicle.params;
    const GroundEffectParams& g = c.vehicle.ground_effect;
    const PidGains& pid = c.vehicle.pid;
    json obs = json::array();
    for (const auto& o : c.train.observables) {
        obs.push_back({{"kind", kind_name(o.kind)},
                       {"index", o.index},
                       {"lower", bounds_json(Vec::Constant(1, o.lower))[0]},
                       {"upper", bounds_json(Vec::Constant(1, o.upper))[0]}});
    }
    const QPSettings& q = c.nmpc.qp;
    return {
        {"vehicle",
         {{"mass", p.mass},
          {"inertia", to_json(p.inertia)},
          {"arm_length", p.arm_length},
          {"thrust_coeff", p.thrust_coeff},
          {"torque_coeff", p.torque_coeff},
          {"gravity", p.gravity},
          {"max_total_thrust", p.max_total_thrust},
          {"max_torque", to_json(p.max_torque)},
          {"ground_effect",
           {{"enabled", g.enabled}, {"rotor_radius", g.rotor_radius}, {"strength", g.strength},
            {"min_height", g.min_height}}},
          {"pid",
           {{"kp", to_json(pid.kp)},
            {"ki", to_json(pid.ki)},
            {"kd", to_json(pid.kd)},
            {"attitude_kp", to_json(pid.attitude_kp)},
            {"attitude_kd", to_json(pid.attitude_kd)},
            {"max_tilt", pid.max_tilt},
            {"max_horizontal_accel", pid.max_horizontal_accel},
            {"integral_limit", pid.integral_limit}}}}},
        {"collect",
         {{"waypoint_lower", to_json(c.collect.waypoint_lower)},
          {"waypoint_upper", to_json(c.collect.waypoint_upper)},
          {"total_duration", c.collect.total_duration},
          {"segment_duration", c.collect.segment_duration},
          {"fast_rate", c.collect.fast_rate},
          {"sample_rate", c.collect.sample_rate},
          {"hold_min", c.collect.hold_min},
          {"hold_max", c.collect.hold_max},
          {"thrust_excitation", c.collect.thrust_excitation},
          {"torque_excitation", c.collect.torque_excitation},
          {"seed", c.collect.seed},
          {"start_position", to_json(c.collect.start_position)}}},
        {"split", {{"holdout_fraction", c.split.holdout_fraction}, {"seed", c.split.seed}}},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"beta_kct", c.train.beta_kct},
          {"l2_strength", c.train.l2_strength},
          {"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"seed", c.train.seed},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"epsilon", c.train.epsilon},
          {"eval_horizon", c.train.eval_horizon},
          {"average_fraction", c.train.average_fraction},
          {"feature_dim", c.train.shape.feature_dim},
          {"hidden", c.train.shape.hidden},
          {"constraint_observables", obs}}},
        {"nmpc",
         {{"horizon", c.nmpc.horizon},
          {"dt", c.nmpc.dt},
          {"Q", bounds_json(c.nmpc.output_weight)},
          {"terminal_scale", c.nmpc.terminal_scale},
          {"R", bounds_json(c.nmpc.input_weight)},
          {"input_cost_scale", bounds_json(c.nmpc.input_cost_scale)},
          {"state_lower", bounds_json(c.nmpc.state_lower)},
          {"state_upper", bounds_json(c.nmpc.state_upper)},
          {"input_lower", bounds_json(c.nmpc.input_lower)},
          {"input_upper", bounds_json(c.nmpc.input_upper)},
          {"sqp_init_max_iters", c.nmpc.sqp_init_max_iters},
          {"sqp_convergence_tol", c.nmpc.sqp_convergence_tol},
          {"max_degraded_ticks", c.nmpc.max_degraded_ticks},
          {"qp",
           {{"eps_abs", q.eps_abs},
            {"eps_rel", q.eps_rel},
            {"eps_primal_infeasible", q.eps_primal_infeasible},
            {"eps_dual_infeasible", q.eps_dual_infeasible},
            {"max_iterations", q.max_iterations},
            {"rho", q.rho},
            {"sigma", q.sigma},
            {"alpha", q.alpha},
            {"adaptive_rho", q.adaptive_rho},
            {"adaptive_rho_interval", q.adaptive_rho_interval},
            {"adaptive_rho_tolerance", q.adaptive_rho_tolerance},
            {"scaling_iterations", q.scaling_iterations},
            {"check_interval", q.check_interval},
            {"polish", q.polish},
            {"polish_delta", q.polish_delta},
            {"polish_refine_iterations", q.polish_refine_iterations}}}}},
        {"track",
         {{"period", c.track.period},
          {"duration", c.track.duration},
          {"amplitude", to_json(c.track.amplitude)},
          {"altitude", c.track.altitude},
          {"repeats", c.track.repeats},
          {"seed", c.track.seed},
          {"noise", c.track.noise},
          {"position_noise", c.track.position_noise},
          {"velocity_noise", c.track.velocity_noise},
          {"attitude_noise", c.track.attitude_noise},
          {"rate_noise", c.track.rate_noise},
          {"crash_tilt", c.track.crash_tilt},
          {"record_timing", c.track.record_timing}}},
        {"sweep", {{"altitudes", c.sweep_altitudes}}}};
}

void apply_seed(AppConfig& cfg, std::uint64_t seed) {
    cfg.collect.seed = seed;
    cfg.split.seed = seed;
    cfg.train.seed = seed;
    cfg.track.seed = seed;
}

}  // namespace koopmpc
