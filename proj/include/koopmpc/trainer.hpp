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
#include <string>
#include <vector>

#include "koopmpc/dataset.hpp"
#include "koopmpc/diffnet.hpp"
#include "koopmpc/koopman_model.hpp"

namespace koopmpc {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta_kct = 2e-1;
    double l2_strength = 5e-4;
    int epochs = 200;
    int batch_size = 256;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int eval_horizon = 25;
    // Iterates are averaged over this trailing fraction of epochs; the average
    // competes with the per-epoch snapshots on validation loss. 0 disables.
    double average_fraction = 0.25;
    NetworkShape shape;
    std::vector<ConstraintObservable> observables;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss;  // full-pass training loss after each epoch
    std::vector<double> val_loss;
    double initial_train_loss = 0.0;
    int best_epoch = -1;             // 0-based index into the curves
    bool best_is_average = false;    // best_epoch then marks where averaging ended
    double average_val_loss = 0.0;
    std::vector<double> openloop_mse;  // per-step position MSE on the validation split
    bool diverged = false;
    std::string diagnostic;
};

struct TrainResult {
    KoopmanModel model;
    TrainReport report;
};

// Adam over shuffled minibatches; returns the snapshot with the lowest
// validation loss. The training set must carry fitted normalization.
TrainResult train(const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& cfg);

// Normalised training pairs for a set under the given preprocessing.
std::vector<TrainingPair> make_pairs(const SampleSet& set, const Normalization& norm,
                                     const std::vector<ConstraintObservable>& observables);

struct OpenLoopOptions {
    int horizon = 25;
    std::vector<int> dims{0, 1, 2};
    bool normalized = false;  // errors in normalised units instead of raw
};

struct OpenLoopResult {
    Vec per_step_mse;        // entry j: mean over windows of ||e_{j+1}||^2 on `dims`
    long windows = 0;
    long skipped_trajectories = 0;  // shorter than the horizon
};

// Lift once at each window start, roll forward with the recorded inputs and
// compare against the logged states.
OpenLoopResult evaluate_openloop(const StatePredictor& model, const SampleSet& test, const OpenLoopOptions& opts,
                                 const Normalization* norm = nullptr);

void write_loss_curves_csv(const TrainReport& report, const std::string& path);

}  // namespace koopmpc
