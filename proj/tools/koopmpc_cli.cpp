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

// koopmpc: collect | train | eval | track | sweep

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "koopmpc/config.hpp"
#include "koopmpc/dataset.hpp"
#include "koopmpc/experiment.hpp"
#include "koopmpc/json_util.hpp"
#include "koopmpc/kernels.hpp"
#include "koopmpc/koopman_model.hpp"
#include "koopmpc/nominal_model.hpp"
#include "koopmpc/trainer.hpp"

using namespace koopmpc;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAllFaulted = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

AppConfig resolve(const Common& c) {
    AppConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
    if (c.seed) apply_seed(cfg, *c.seed);
    return cfg;
}

std::string stem_of(const std::string& path) {
    const std::filesystem::path p(path);
    return (p.parent_path() / p.stem()).string();
}

ControllerSpec make_controller(const std::string& which, const std::string& model_path, const AppConfig& cfg) {
    ControllerSpec spec;
    spec.name = which;
    spec.nmpc = cfg.nmpc;
    if (which == "nominal") {
        spec.model = std::make_shared<NominalPredictionModel>(NominalModel(cfg.vehicle.params, cfg.nmpc.dt));
        spec.model_checksum = "nominal";
    } else if (which == "koopman") {
        if (model_path.empty()) throw ConfigError("--model is required for the koopman controller");
        const json j = json_util::parse_file(model_path);
        auto model = std::make_shared<KoopmanModel>(model_from_json(j));
        if (std::abs(model->dt() - cfg.nmpc.dt) > 1e-12)
            throw ConfigError("model dt does not match nmpc.dt");
        spec.model_checksum = j.at("checksum").get<std::string>();
        spec.model = std::make_shared<KoopmanPredictionModel>(model);
    } else {
        throw ConfigError("unknown controller '" + which + "'");
    }
    return spec;
}

int cmd_collect(const Common& c) {
    const AppConfig cfg = resolve(c);
    const SampleSet set = collect(cfg.collect, cfg.vehicle);
    save_dataset(set, c.out);
    std::cout << "collected " << set.trajectories.size() << " trajectories, " << set.sample_count()
              << " samples -> " << c.out << "\n";
    return kExitOk;
}

int cmd_train(const Common& c, const std::string& data) {
    AppConfig cfg = resolve(c);
    const SampleSet all = load_dataset(data);
    SplitResult parts = split(all, cfg.split.holdout_fraction, cfg.split.seed);
    const Normalization norm = fit_normalization(parts.train);
    parts.train = with_normalization(std::move(parts.train), norm);
    parts.val = with_normalization(std::move(parts.val), norm);
    cfg.train.shape.state_dim = all.state_dim();
    cfg.train.shape.input_dim = all.input_dim();
    const TrainResult res = train(parts.train, parts.val, cfg.train);
    if (res.report.diverged) {
        std::cerr << "training diverged: " << res.report.diagnostic << "\n";
        return kExitError;
    }
    save_model(res.model, c.out);
    const std::string stem = stem_of(c.out);
    write_loss_curves_csv(res.report, stem + "_loss.csv");
    json rep{{"best_epoch", res.report.best_epoch},
             {"initial_train_loss", res.report.initial_train_loss},
             {"final_train_loss", res.report.train_loss.back()},
             {"best_is_average", res.report.best_is_average},
             {"best_val_loss", res.model.metadata().best_val_loss},
             {"val_openloop_mse", res.report.openloop_mse},
             {"lifted_dim", res.model.lifted_dim()},
             {"model_checksum", model_checksum(model_to_json(res.model))},
             {"config", config_to_json(cfg)}};
    json_util::write_file(stem + "_train_report.json", rep.dump(2) + "\n");
    std::cout << "trained n=" << res.model.lifted_dim() << " best epoch " << res.report.best_epoch << " -> " << c.out
              << "\n";
    return kExitOk;
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& data, int horizon, bool whole) {
    const AppConfig cfg = resolve(c);
    const KoopmanModel model = load_model(model_path);
    SampleSet test = load_dataset(data);
    if (!whole) test = split(test, cfg.split.holdout_fraction, cfg.split.seed).test;
    OpenLoopOptions opts;
    opts.horizon = horizon;
    const OpenLoopResult learned = evaluate_openloop(model, test, opts);
    const HoverLinearPredictor baseline(NominalModel(cfg.vehicle.params, model.dt()));
    const OpenLoopResult hover = evaluate_openloop(baseline, test, opts);
    std::ostringstream os;
    os.precision(10);
    os << "step,koopman_mse,hover_linear_mse\n";
    for (int k = 0; k < horizon; ++k) os << k + 1 << ',' << learned.per_step_mse(k) << ',' << hover.per_step_mse(k) << '\n';
    json_util::write_file(c.out, os.str());
    std::cout << "windows " << learned.windows << "; " << horizon << "-step position MSE koopman "
              << learned.per_step_mse(horizon - 1) << " m^2, hover-linear " << hover.per_step_mse(horizon - 1)
              << " m^2 -> " << c.out << "\n";
    return kExitOk;
}

ExperimentReport track_one(const ControllerSpec& spec, const AppConfig& cfg, const std::string& telemetry_prefix) {
    ExperimentReport rep = run_tracking(spec, cfg.vehicle, cfg.track, telemetry_prefix);
    rep.config = config_to_json(cfg);
    return rep;
}

int cmd_track(const Common& c, const std::string& controller, const std::string& model_path,
              std::optional<double> altitude, std::optional<int> repeats) {
    AppConfig cfg = resolve(c);
    if (altitude) cfg.track.altitude = *altitude;
    if (repeats) cfg.track.repeats = *repeats;
    cfg.validate();
    const ControllerSpec spec = make_controller(controller, model_path, cfg);
    const ExperimentReport rep = track_one(spec, cfg, stem_of(c.out));
    json_util::write_file(c.out, report_to_json(rep).dump(2) + "\n");
    std::cout << controller << " @ " << cfg.track.altitude << " m: " << rep.completed << "/" << rep.runs.size()
              << " completed, mean MSE " << rep.mean_mse << " m^2, mean thrust " << rep.mean_thrust_norm
              << " N, median tick " << rep.median_tick_ms << " ms -> " << c.out << "\n";
    bool all_faulted = true;
    for (const auto& r : rep.runs) all_faulted = all_faulted && r.faulted;
    return all_faulted ? kExitAllFaulted : kExitOk;
}

int cmd_sweep(const Common& c, const std::string& model_path, std::vector<double> altitudes,
              std::optional<int> repeats) {
    AppConfig cfg = resolve(c);
    if (!altitudes.empty()) cfg.sweep_altitudes = altitudes;
    if (repeats) cfg.track.repeats = *repeats;
    cfg.validate();
    std::vector<ExperimentReport> reports;
    json all = json::array();
    bool all_faulted = true;
    for (const std::string name : {"koopman", "nominal"}) {
        const ControllerSpec spec = make_controller(name, model_path, cfg);
        for (double alt : cfg.sweep_altitudes) {
            AppConfig run_cfg = cfg;
            run_cfg.track.altitude = alt;
            std::ostringstream prefix;
            prefix << stem_of(c.out) << "_" << name << "_" << alt;
            reports.push_back(track_one(spec, run_cfg, prefix.str()));
            for (const auto& r : reports.back().runs) all_faulted = all_faulted && r.faulted;
            all.push_back(report_to_json(reports.back()));
            std::cout << name << " @ " << alt << " m: " << reports.back().completed << "/" << run_cfg.track.repeats
                      << " completed, mean MSE " << reports.back().mean_mse << "\n";
        }
    }
    json_util::write_file(c.out, sweep_csv(reports));
    json_util::write_file(stem_of(c.out) + "_reports.json", all.dump(2) + "\n");
    return all_faulted ? kExitAllFaulted : kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool need_out = true) {
    sub->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Override every seed in the configuration");
    auto* out = sub->add_option("--out", c.out, "Output path");
    if (need_out) out->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman bilinear model learning and NMPC for quadrotor tracking"};
    app.require_subcommand(1);
    std::string kernels = "auto";
    app.add_option("--kernels", kernels, "Numeric kernel variant")
        ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    Common c;
    std::string data, model, controller = "koopman";
    int horizon = 25;
    bool whole = false;
    std::optional<double> altitude;
    std::optional<int> repeats;
    std::vector<double> altitudes;

    auto* collect_cmd = app.add_subcommand("collect", "Fly the PID data-collection protocol and write a dataset");
    add_common(collect_cmd, c);

    auto* train_cmd = app.add_subcommand("train", "Learn the lifting and bilinear model from a dataset");
    add_common(train_cmd, c);
    train_cmd->add_option("--data", data, "Dataset JSONL")->required()->check(CLI::ExistingFile);

    auto* eval_cmd = app.add_subcommand("eval", "Open-loop prediction error on the held-out split");
    add_common(eval_cmd, c);
    eval_cmd->add_option("--model", model, "Model JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--horizon", horizon, "Prediction horizon in steps")->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--all", whole, "Evaluate on the whole dataset instead of the test split");

    auto* track_cmd = app.add_subcommand("track", "Closed-loop figure-8 tracking");
    add_common(track_cmd, c);
    track_cmd->add_option("--controller", controller, "koopman or nominal")
        ->check(CLI::IsMember({"koopman", "nominal"}));
    track_cmd->add_option("--model", model, "Model JSON (koopman controller)");
    track_cmd->add_option("--altitude", altitude, "Altitude setpoint in m");
    track_cmd->add_option("--repeats", repeats, "Number of runs")->check(CLI::PositiveNumber);

    auto* sweep_cmd = app.add_subcommand("sweep", "Both controllers across altitudes");
    add_common(sweep_cmd, c);
    sweep_cmd->add_option("--model", model, "Model JSON")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--altitudes", altitudes, "Altitude list in m");
    sweep_cmd->add_option("--repeats", repeats, "Runs per altitude")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (!kernels::select(kernels)) {
        std::cerr << "config error: kernel variant '" << kernels << "' is not available on this machine\n";
        return kExitConfig;
    }

    try {
        if (*collect_cmd) return cmd_collect(c);
        if (*train_cmd) return cmd_train(c, data);
        if (*eval_cmd) return cmd_eval(c, model, data, horizon, whole);
        if (*track_cmd) return cmd_track(c, controller, model, altitude, repeats);
        if (*sweep_cmd) return cmd_sweep(c, model, altitudes, repeats);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
