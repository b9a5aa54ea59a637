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

#include "koopmpc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

namespace koopmpc {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !(beta_kct > 0.0) || !(l2_strength > 0.0))
        throw ConfigError("train: learning_rate, beta_kct and l2_strength must be > 0");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
        throw ConfigError("train: optimizer moment decays must lie in (0, 1)");
    if (eval_horizon < 1) throw ConfigError("train: eval_horizon must be >= 1");
    if (!(average_fraction >= 0.0 && average_fraction < 1.0))
        throw ConfigError("train: average_fraction must lie in [0, 1)");
    if (static_cast<int>(observables.size()) != shape.fixed_dim)
        throw ConfigError("train: observables must match shape.fixed_dim");
}

std::vector<TrainingPair> make_pairs(const SampleSet& set, const Normalization& norm,
                                     const std::vector<ConstraintObservable>& observables) {
    std::vector<TrainingPair> pairs;
    pairs.reserve(set.sample_count());
    for (const auto& t : set.trajectories)
        for (const auto& s : t.samples) {
            pairs.push_back({norm.apply_state(s.x), norm.apply_input(s.u), norm.apply_state(s.x_next),
                             evaluate_observables(observables, s.x), evaluate_observables(observables, s.x_next)});
        }
    return pairs;
}

namespace {

class Adam {
public:
    Adam(std::size_t n, const TrainConfig& cfg) : m_(n, 0.0), v_(n, 0.0), cfg_(cfg) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            theta[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
        }
    }

private:
    std::vector<double> m_, v_;
    const TrainConfig& cfg_;
    int t_ = 0;
};

}  // namespace

TrainResult train(const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& cfg) {
    cfg.validate();
    const Normalization& norm = train_set.normalization;
    if (!norm.fitted) throw ConfigError("train: normalization must be fitted on the training split");
    if (train_set.state_dim() != cfg.shape.state_dim || train_set.input_dim() != cfg.shape.input_dim)
        throw ConfigError("train: dataset dimensions do not match the network shape");
    if (train_set.sample_count() == 0 || val_set.sample_count() == 0)
        throw ConfigError("train: training and validation sets must be non-empty");

    const std::vector<TrainingPair> train_pairs = make_pairs(train_set, norm, cfg.observables);
    const std::vector<TrainingPair> val_pairs = make_pairs(val_set, norm, cfg.observables);
    const LossOptions opts{cfg.beta_kct, cfg.l2_strength};

    Parameters params = initialize_parameters(cfg.shape, cfg.seed);
    Parameters best = params;
    Parameters grad(cfg.shape);
    Adam adam(params.raw().size(), cfg);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const int average_from =
        cfg.average_fraction > 0.0 ? cfg.epochs - std::max(1, static_cast<int>(cfg.epochs * cfg.average_fraction))
                                   : cfg.epochs;
    std::vector<double> sum(params.raw().size(), 0.0);
    long averaged_steps = 0;

    try {
        report.initial_train_loss = loss(params, train_pairs, opts).total;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size(); start += batch) {
                const std::size_t len = std::min(batch, order.size() - start);
                loss_gradient(params, train_pairs, opts, grad, std::span<const std::size_t>(order).subspan(start, len));
                adam.step(params.raw(), grad.raw());
                if (epoch >= average_from) {
                    const auto& raw = params.raw();
                    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += raw[i];
                    ++averaged_steps;
                }
            }
            if (!params.all_finite()) throw DivergenceError("parameters became non-finite");
            const double tl = loss(params, train_pairs, opts).total;
            const double vl = loss(params, val_pairs, opts).total;
            report.train_loss.push_back(tl);
            report.val_loss.push_back(vl);
            if (vl < best_val) {
                best_val = vl;
                best = params;
                report.best_epoch = epoch;
                report.best_is_average = false;
            }
        }
        if (averaged_steps > 0) {
            Parameters avg = params;
            auto& raw = avg.raw();
            for (std::size_t i = 0; i < sum.size(); ++i) raw[i] = sum[i] / static_cast<double>(averaged_steps);
            const double vl = loss(avg, val_pairs, opts).total;
            report.average_val_loss = vl;
            if (std::isfinite(vl) && vl < best_val) {
                best_val = vl;
                best = std::move(avg);
                report.best_epoch = cfg.epochs - 1;
                report.best_is_average = true;
            }
        }
    } catch (const DivergenceError& e) {
        report.diverged = true;
        report.diagnostic = std::string("training aborted at epoch ") + std::to_string(report.train_loss.size()) +
                            ": " + e.what();
    }

    KoopmanModel model(best, norm, train_set.hover_thrust_offset, train_set.dt, cfg.observables);
    TrainingMetadata& meta = model.metadata();
    meta.learning_rate = cfg.learning_rate;
    meta.beta = cfg.beta_kct;
    meta.l2 = cfg.l2_strength;
    meta.epochs = cfg.epochs;
    meta.batch_size = cfg.batch_size;
    meta.seed = cfg.seed;
    meta.best_epoch = report.best_epoch;
    meta.best_val_loss = std::isfinite(best_val) ? best_val : 0.0;
    meta.optimizer = "adam";

    OpenLoopOptions ol;
    ol.horizon = cfg.eval_horizon;
    ol.dims.clear();
    for (int i = 0; i < std::min(3, cfg.shape.state_dim); ++i) ol.dims.push_back(i);
    {
        const Vec mse = evaluate_openloop(model, val_set, ol).per_step_mse;
        report.openloop_mse.assign(mse.data(), mse.data() + mse.size());
    }
    return {std::move(model), std::move(report)};
}

OpenLoopResult evaluate_openloop(const StatePredictor& model, const SampleSet& test, const OpenLoopOptions& opts,
                                 const Normalization* norm) {
    if (opts.horizon < 1) throw ConfigError("evaluate_openloop: horizon must be >= 1");
    if (opts.normalized && !norm) throw ConfigError("evaluate_openloop: normalized errors need a normalization");
    OpenLoopResult out;
    out.per_step_mse = Vec::Zero(opts.horizon);
    const int H = opts.horizon;
    std::vector<Vec> inputs(static_cast<std::size_t>(H));
    for (const auto& traj : test.trajectories) {
        const int M = static_cast<int>(traj.samples.size());
        if (M < H) {
            ++out.skipped_trajectories;
            continue;
        }
        for (int k = 0; k + H <= M; ++k) {
            for (int j = 0; j < H; ++j) inputs[static_cast<std::size_t>(j)] = traj.samples[static_cast<std::size_t>(k + j)].u;
            const std::vector<Vec> pred = model.rollout(traj.samples[static_cast<std::size_t>(k)].x, inputs, H);
            for (int j = 0; j < H; ++j) {
                const Vec& truth = traj.samples[static_cast<std::size_t>(k + j)].x_next;
                Vec e = pred[static_cast<std::size_t>(j + 1)] - truth;
                if (opts.normalized) e = e.cwiseQuotient(norm->state_scale);
                double s = 0.0;
                for (int d : opts.dims) s += e(d) * e(d);
                out.per_step_mse(j) += s;
            }
            ++out.windows;
        }
    }
    if (out.windows > 0) out.per_step_mse /= static_cast<double>(out.windows);
    return out;
}

void write_loss_curves_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
    for (std::size_t e = 0; e < report.train_loss.size(); ++e)
        out << e << ',' << report.train_loss[e] << ',' << report.val_loss[e] << '\n';
}

}  // namespace koopmpc
