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


// Acceptance gate. Runs every criterion at its stated tolerance and prints
// one PASS/FAIL line each. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koopmpc/config.hpp"
#include "koopmpc/experiment.hpp"
#include "koopmpc/kernels.hpp"
#include "oracles/active_set_qp.hpp"
#include "oracles/gradient_check.hpp"
#include "oracles/grid_search.hpp"
#include "oracles/random_qp.hpp"
#include "oracles/synthetic.hpp"

using namespace koopmpc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    NetworkShape shape{13, 4, 10, {100, 100}, 0};
    const LossOptions opts{0.2, 5e-4};
    double worst = 0.0;
    std::size_t checked = std::numeric_limits<std::size_t>::max();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        const auto pairs = oracle::random_pairs(shape, 8, rng);
        const auto params = oracle::random_parameters(shape, seed);
        const auto audit = oracle::audit_gradient(params, pairs, opts, 250, seed);
        worst = std::max(worst, audit.max_relative_error);
        checked = std::min(checked, audit.checked);
    }
    const double t = seconds_since(t0);
    return {worst < 1e-5 && checked >= 200 && t < 60.0,
            "max rel err " + fmt(worst) + " over >= " + std::to_string(checked) + " params/seed, " + fmt(t) + " s"};
}

// --- 2 ---------------------------------------------------------------------

Outcome qp_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> nv(1, 50), nc(1, 8);
    QPSettings set;
    set.eps_abs = set.eps_rel = 1e-8;
    set.max_iterations = 50000;
    set.polish = true;
    double worst_x = 0.0, worst_kkt = 0.0;
    int solved = 0, compared = 0;
    while (compared < 100) {
        const auto dq = oracle::random_qp(nv(rng), nc(rng), rng);
        const auto ref = oracle::active_set_qp(dq.P, dq.q, dq.A, dq.l, dq.u);
        if (!ref) continue;
        ++compared;
        const auto qp = dq.sparse();
        const auto sol = solve_qp(qp, set);
        if (sol.status == QPStatus::solved) ++solved;
        worst_x = std::max(worst_x, (sol.x - ref->x).cwiseAbs().maxCoeff());
        const auto r = kkt_residuals(qp, sol.x, sol.y);
        worst_kkt = std::max({worst_kkt, r.primal, r.dual, r.complementarity});
    }
    const double t = seconds_since(t0);
    return {solved == 100 && worst_x < 1e-4 && worst_kkt < 1e-5 && t < 60.0,
            std::to_string(solved) + "/100 solved, max |x - x*| " + fmt(worst_x) + ", max KKT residual " +
                fmt(worst_kkt) + ", " + fmt(t) + " s"};
}

// --- 3 ---------------------------------------------------------------------

Outcome sqp_toy() {
    const auto t0 = std::chrono::steady_clock::now();
    Mat F(2, 2);
    F << 1.0, 0.1, 0.0, 0.95;
    Mat G(2, 2);
    G << 0.0, 0.0, 0.2, 0.05;
    auto model = std::make_shared<BilinearPredictionModel>(F, std::vector<Mat>{G});
    const int N = 3;
    // Wide enough that only the first input saturates.
    const double box = 1.0;
    NMPCConfig c;
    c.horizon = N;
    c.output_weight = Eigen::Vector2d(10.0, 1.0);
    c.input_weight = Vec::Constant(1, 0.5);
    c.input_lower = Vec::Constant(1, -box);
    c.input_upper = Vec::Constant(1, box);
    c.sqp_init_max_iters = 50;
    c.sqp_convergence_tol = 1e-9;
    NMPCController ctl(model, c);
    const Vec z0 = Eigen::Vector2d(1.0, 0.5);
    const Mat ref = Eigen::Vector2d(0.5, -0.5).replicate(1, N + 1);
    const auto res = ctl.sqp_initialize(z0, ref, {z0.replicate(1, N + 1), Mat::Zero(1, N)});
    const double sqp = ctl.cost(res.iterate, ref);
    const auto grid = oracle::grid_search(N, -box, box, 101, [&](const std::vector<double>& u) {
        Mat U(1, N);
        for (int k = 0; k < N; ++k) U(0, k) = u[static_cast<std::size_t>(k)];
        return ctl.cost({ctl.rollout(z0, U), U}, ref);
    });
    const double t = seconds_since(t0);
    const double rel = (sqp - grid.cost) / grid.cost;
    return {rel <= 1e-3 && t < 120.0, "sqp cost " + fmt(sqp) + ", grid " + fmt(grid.cost) + " (rel " + fmt(rel) +
                                          "), " + std::to_string(res.iterations) + " SQP iterations, " + fmt(t) +
                                          " s"};
}

// --- 4 ---------------------------------------------------------------------

SplitResult normalized_pairs(const SampleSet& set, int train_pairs, int val_pairs) {
    SplitResult p = oracle::split_pairs(set, train_pairs, val_pairs);
    const auto norm = fit_normalization(p.train);
    p.train = with_normalization(p.train, norm);
    p.val = with_normalization(p.val, norm);
    p.test = with_normalization(p.test, norm);
    return p;
}

Outcome known_systems() {
    const auto t0 = std::chrono::steady_clock::now();
    // 3-state bilinear system.
    const auto set3 = oracle::synthetic_dataset(oracle::three_state_bilinear_system(), 20, 100, 1.0, 11);
    const auto p3 = normalized_pairs(set3, 14, 3);
    TrainConfig c3;
    c3.shape = NetworkShape{3, 1, 4, {32, 32}, 0};
    c3.batch_size = 64;
    const auto r3 = train(p3.train, p3.val, c3);
    OpenLoopOptions ol;
    ol.horizon = 25;
    ol.normalized = true;
    const double mse3 = evaluate_openloop(r3.model, p3.test, ol, &p3.train.normalization).per_step_mse(24) / 3.0;

    // Scalar linear system.
    const auto set1 = oracle::synthetic_dataset(oracle::scalar_linear_system(), 10, 40, 0.0, 3);
    const auto p1 = normalized_pairs(set1, 7, 2);
    TrainConfig c1;
    c1.shape = NetworkShape{1, 1, 0, {}, 0};
    c1.batch_size = 32;
    c1.eval_horizon = 5;
    const auto r1 = train(p1.train, p1.val, c1);
    const double F = r1.model.parameters().F()(0, 0);
    const double t = seconds_since(t0);
    return {mse3 < 1e-4 && std::abs(F - 0.9) < 1e-3, "3-state 25-step MSE " + fmt(mse3) + " (normalized), scalar F " +
                                                          fmt(F) + ", " + fmt(t) + " s"};
}

// --- pipeline shared by 5 to 9 ---------------------------------------------

struct Pipeline {
    AppConfig cfg;
    SampleSet data;
    SplitResult parts;
    std::unique_ptr<KoopmanModel> model;
    std::string dataset_path, model_path;
    double collect_s = 0.0, train_s = 0.0;
};

TrainResult train_pipeline(const AppConfig& cfg, const SampleSet& data, SplitResult& parts) {
    parts = split(data, cfg.split.holdout_fraction, cfg.split.seed);
    const Normalization norm = fit_normalization(parts.train);
    parts.train = with_normalization(std::move(parts.train), norm);
    parts.val = with_normalization(std::move(parts.val), norm);
    TrainConfig tc = cfg.train;
    tc.shape.state_dim = data.state_dim();
    tc.shape.input_dim = data.input_dim();
    return train(parts.train, parts.val, tc);
}

Pipeline build_pipeline(const fs::path& work) {
    Pipeline p;
    p.cfg = default_config();
    p.dataset_path = (work / "data.jsonl").string();
    p.model_path = (work / "model.json").string();
    auto t0 = std::chrono::steady_clock::now();
    p.data = collect(p.cfg.collect, p.cfg.vehicle);
    save_dataset(p.data, p.dataset_path);
    p.collect_s = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    TrainResult r = train_pipeline(p.cfg, p.data, p.parts);
    p.train_s = seconds_since(t0);
    save_model(r.model, p.model_path);
    p.model = std::make_unique<KoopmanModel>(std::move(r.model));
    return p;
}

Outcome openloop_quadrotor(const Pipeline& p) {
    OpenLoopOptions ol;
    ol.horizon = 25;
    const double learned = evaluate_openloop(*p.model, p.parts.test, ol).per_step_mse(24);
    const HoverLinearPredictor hover(NominalModel(p.cfg.vehicle.params, p.model->dt()));
    const double base = evaluate_openloop(hover, p.parts.test, ol).per_step_mse(24);
    return {learned < base && learned < 1e-2, "n = " + std::to_string(p.model->lifted_dim()) + ", koopman " +
                                                  fmt(learned) + " m^2, hover-linear " + fmt(base) + " m^2"};
}

ControllerSpec koopman_spec(const Pipeline& p) {
    ControllerSpec s;
    s.name = "koopman";
    s.nmpc = p.cfg.nmpc;
    s.model = std::make_shared<KoopmanPredictionModel>(std::make_shared<KoopmanModel>(*p.model));
    s.model_checksum = model_checksum(model_to_json(*p.model));
    return s;
}

ControllerSpec nominal_spec(const Pipeline& p) {
    ControllerSpec s;
    s.name = "nominal";
    s.nmpc = p.cfg.nmpc;
    s.model = std::make_shared<NominalPredictionModel>(NominalModel(p.cfg.vehicle.params, p.cfg.nmpc.dt));
    s.model_checksum = "nominal";
    return s;
}

struct Sweep {
    std::map<double, ExperimentReport> koopman, nominal;
};

Sweep run_sweep(const Pipeline& p, const std::vector<double>& altitudes) {
    Sweep s;
    const auto ks = koopman_spec(p);
    const auto ns = nominal_spec(p);
    for (double alt : altitudes) {
        TrackConfig t = p.cfg.track;
        t.altitude = alt;
        s.koopman[alt] = run_tracking(ks, p.cfg.vehicle, t);
        s.nominal[alt] = run_tracking(ns, p.cfg.vehicle, t);
        std::cout << "  altitude " << alt << " m: koopman " << s.koopman[alt].completed << "/" << t.repeats
                  << " MSE " << fmt(s.koopman[alt].mean_mse) << " z " << fmt(s.koopman[alt].mean_axis_mse.z())
                  << " thrust " << fmt(s.koopman[alt].mean_thrust_norm) << "; nominal " << s.nominal[alt].completed
                  << "/" << t.repeats << " MSE " << fmt(s.nominal[alt].mean_mse) << " z "
                  << fmt(s.nominal[alt].mean_axis_mse.z()) << " thrust " << fmt(s.nominal[alt].mean_thrust_norm)
                  << std::endl;
    }
    return s;
}

Outcome closed_loop_parity(const Pipeline& p, const Sweep& s) {
    const auto& k = s.koopman.at(0.25);
    const auto& n = s.nominal.at(0.25);
    const int runs = p.cfg.track.repeats;
    const bool all_done = runs == 10 && k.completed == runs && n.completed == runs;
    bool each = true;
    for (const auto* rep : {&k, &n})
        for (const auto& r : rep->runs) each = each && !r.crashed && !r.faulted;
    const double ratio = std::max(k.mean_mse, n.mean_mse) / std::min(k.mean_mse, n.mean_mse);
    return {all_done && each && k.mean_mse <= 2e-2 && n.mean_mse <= 2e-2 && ratio <= 2.0,
            "koopman " + std::to_string(k.completed) + "/" + std::to_string(runs) + " MSE " + fmt(k.mean_mse) +
                ", nominal " + std::to_string(n.completed) + "/" + std::to_string(runs) + " MSE " + fmt(n.mean_mse) +
                ", ratio " + fmt(ratio)};
}

Outcome ground_effect(const Sweep& s) {
    bool z_ok = true;
    std::string detail;
    for (double alt : {0.10, 0.05}) {
        const auto& k = s.koopman.at(alt);
        const auto& n = s.nominal.at(alt);
        const bool nominal_all_crashed = n.completed == 0;
        const bool better = nominal_all_crashed ? k.completed > 0 : k.mean_axis_mse.z() < n.mean_axis_mse.z();
        z_ok = z_ok && better && k.completed > 0;
        detail += "z-MSE @" + fmt(alt) + " koopman " + fmt(k.mean_axis_mse.z()) + " nominal " +
                  (nominal_all_crashed ? std::string("crashed") : fmt(n.mean_axis_mse.z()));
        if (n.crashed > 0) detail += " (" + std::to_string(n.crashed) + " nominal crashes)";
        detail += "; ";
    }
    const double low = s.koopman.at(0.05).mean_thrust_norm;
    const double high = s.koopman.at(0.5).mean_thrust_norm;
    detail += "koopman thrust " + fmt(low) + " N @0.05 vs " + fmt(high) + " N @0.5";
    return {z_ok && low < high, detail};
}

Outcome tick_budget(const Sweep& s) {
    std::vector<double> ticks;
    for (const auto& r : s.koopman.at(0.25).runs) ticks.insert(ticks.end(), r.tick_ms.begin(), r.tick_ms.end());
    std::sort(ticks.begin(), ticks.end());
    if (ticks.empty()) return {false, "no ticks recorded"};
    const double median = ticks[ticks.size() / 2];
    const double p99 = ticks[std::min(ticks.size() - 1, static_cast<std::size_t>(0.99 * static_cast<double>(ticks.size())))];
    return {median < 20.0 && p99 < 40.0, "koopman N = 25, n = 23: median " + fmt(median) + " ms, p99 " + fmt(p99) +
                                             " ms over " + std::to_string(ticks.size()) + " ticks (kernels: " +
                                             kernels::active().name + ")"};
}

Outcome determinism(const Pipeline& p, const fs::path& work) {
    // Collect and train again from scratch with the same seeds.
    const SampleSet again = collect(p.cfg.collect, p.cfg.vehicle);
    const std::string second = (work / "data_again.jsonl").string();
    save_dataset(again, second);
    const bool same_data = slurp(p.dataset_path) == slurp(second);

    SplitResult parts;
    const TrainResult r = train_pipeline(p.cfg, again, parts);
    const std::string model_again = (work / "model_again.json").string();
    save_model(r.model, model_again);
    const bool same_model = slurp(p.model_path) == slurp(model_again);

    TrackConfig t = p.cfg.track;
    t.record_timing = false;
    t.repeats = 2;
    bool same_tele = true;
    for (const auto& spec : {koopman_spec(p), nominal_spec(p)}) {
        for (int run = 0; run < t.repeats; ++run) {
            const std::string a = (work / (spec.name + "_a.jsonl")).string();
            const std::string b = (work / (spec.name + "_b.jsonl")).string();
            run_single(spec, p.cfg.vehicle, t, run, a);
            run_single(spec, p.cfg.vehicle, t, run, b);
            same_tele = same_tele && slurp(a) == slurp(b) && !slurp(a).empty();
        }
    }
    return {same_data && same_model && same_tele, std::string("dataset ") + (same_data ? "identical" : "DIFFERS") +
                                                      ", model " + (same_model ? "identical" : "DIFFERS") +
                                                      ", telemetry " + (same_tele ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"koopmpc acceptance suite"};
    std::string workdir = "acceptance_work";
    std::vector<int> only;
    app.add_option("--workdir", workdir, "Scratch directory for datasets, models and telemetry");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);
    const fs::path work(workdir);
    fs::create_directories(work);
    const std::set<int> wanted(only.begin(), only.end());
    auto want = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };

    int failures = 0;
    auto report = [&](int k, const std::string& name, const Outcome& o) {
        std::cout << "CRITERION " << k << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
                  << std::endl;
        if (!o.pass) ++failures;
    };
    auto guarded = [&](int k, const std::string& name, const std::function<Outcome()>& f) {
        if (!want(k)) return;
        try {
            report(k, name, f());
        } catch (const std::exception& e) {
            report(k, name, {false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, "gradient check", gradient_check);
    guarded(2, "QP oracle equivalence", qp_oracle);
    guarded(3, "SQP optimality on toy system", sqp_toy);
    guarded(4, "learning recovers known systems", known_systems);

    if (want(5) || want(6) || want(7) || want(8) || want(9)) {
        std::cout << "building pipeline (collect + train) in " << work.string() << std::endl;
        std::unique_ptr<Pipeline> p;
        try {
            p = std::make_unique<Pipeline>(build_pipeline(work));
            std::cout << "  collected " << p->data.sample_count() << " samples in " << fmt(p->collect_s)
                      << " s, trained in " << fmt(p->train_s) << " s" << std::endl;
        } catch (const std::exception& e) {
            for (int k = 5; k <= 9; ++k)
                if (want(k)) report(k, "pipeline", {false, std::string("pipeline failed: ") + e.what()});
            return failures;
        }
        guarded(5, "open-loop quadrotor prediction", [&] { return openloop_quadrotor(*p); });
        if (want(6) || want(7) || want(8)) {
            Sweep s;
            try {
                s = run_sweep(*p, {0.5, 0.25, 0.10, 0.05});
            } catch (const std::exception& e) {
                for (int k = 6; k <= 8; ++k)
                    if (want(k)) report(k, "tracking sweep", {false, std::string("sweep failed: ") + e.what()});
            }
            if (!s.koopman.empty()) {
                guarded(6, "closed-loop parity at 0.25 m", [&] { return closed_loop_parity(*p, s); });
                guarded(7, "ground-effect separation", [&] { return ground_effect(s); });
                guarded(8, "real-time budget", [&] { return tick_budget(s); });
            }
        }
        guarded(9, "determinism", [&] { return determinism(*p, work); });
    }
    std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
    return failures;
}
