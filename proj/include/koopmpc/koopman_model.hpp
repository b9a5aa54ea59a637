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

#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmpc/common.hpp"
#include "koopmpc/dataset.hpp"
#include "koopmpc/diffnet.hpp"

namespace koopmpc {

// Hand-chosen lifted coordinate phi_con(x) = kind(x_raw[index]) appended to
// the lifted state, with optional bounds enforced by the controller.
struct ConstraintObservable {
    enum class Kind { cos, sin, square };
    Kind kind = Kind::cos;
    int index = 0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();

    double evaluate(const Vec& x_raw) const;
    bool operator==(const ConstraintObservable&) const = default;
};

Vec evaluate_observables(const std::vector<ConstraintObservable>& obs, const Vec& x_raw);

// Anything that rolls raw states forward under raw inputs.
class StatePredictor {
public:
    virtual ~StatePredictor() = default;
    // States x_1 .. x_K (raw) for inputs u_0 .. u_{K-1}; element 0 is x0.
    virtual std::vector<Vec> rollout(const Vec& x0_raw, const std::vector<Vec>& inputs_raw, int K) const = 0;
};

struct TrainingMetadata {
    double learning_rate = 0.0;
    double beta = 0.0;
    double l2 = 0.0;
    int epochs = 0;
    int batch_size = 0;
    std::uint64_t seed = 0;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::string optimizer;
};

struct Linearization {
    Mat A;  // F + sum_j u_j G_j
    Mat B;  // [G_1 z ... G_m z]
    Vec r;  // F z + sum_j G_j z u_j - z_next
};

class KoopmanModel : public StatePredictor {
public:
    KoopmanModel() = default;
    KoopmanModel(Parameters params, Normalization norm, double hover_offset, double dt,
                 std::vector<ConstraintObservable> observables = {});

    int state_dim() const { return params_.shape().state_dim; }
    int input_dim() const { return params_.shape().input_dim; }
    int lifted_dim() const { return params_.shape().lifted_dim(); }
    double dt() const { return dt_; }
    const Parameters& parameters() const { return params_; }
    const Normalization& normalization() const { return norm_; }
    double hover_offset() const { return hover_offset_; }
    const std::vector<ConstraintObservable>& observables() const { return observables_; }
    TrainingMetadata& metadata() { return meta_; }
    const TrainingMetadata& metadata() const { return meta_; }

    // Normalise then z = [x_n; phi(x_n); phi_con(x_raw)].
    Vec lift_state(const Vec& x_raw) const;
    // z' = F z + sum_j G_j z u_j with u the preprocessed input.
    Vec predict_step(const Vec& z, const Vec& u_raw) const;
    Vec predict_step_normalized(const Vec& z, const Vec& u_norm) const;
    // Exact Jacobians of the bilinear map, in preprocessed input units.
    Linearization linearize(const Vec& z_init, const Vec& u_init_norm, const Vec& z_next_init) const;
    // C^x z in normalised units.
    Vec project(const Vec& z) const { return z.head(state_dim()); }
    Vec to_raw_state(const Vec& z) const { return norm_.invert_state(project(z)); }

    std::vector<Vec> rollout(const Vec& x0_raw, const std::vector<Vec>& inputs_raw, int K) const override;

    void validate() const;

private:
    Parameters params_;
    Normalization norm_;
    double hover_offset_ = 0.0;
    double dt_ = 0.0;
    std::vector<ConstraintObservable> observables_;
    TrainingMetadata meta_;
};

nlohmann::json model_to_json(const KoopmanModel& model);
KoopmanModel model_from_json(const nlohmann::json& j);
void save_model(const KoopmanModel& model, const std::string& path);
KoopmanModel load_model(const std::string& path);
// Checksum of the serialised payload (every field except "checksum").
std::string model_checksum(const nlohmann::json& j);

}  // namespace koopmpc
