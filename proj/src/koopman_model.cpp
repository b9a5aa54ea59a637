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

#include "koopmpc/koopman_model.hpp"

#include <cmath>

namespace koopmpc {

double ConstraintObservable::evaluate(const Vec& x_raw) const {
    const double v = x_raw(index);
    switch (kind) {
        case Kind::cos: return std::cos(v);
        case Kind::sin: return std::sin(v);
        case Kind::square: return v * v;
    }
    return 0.0;
}

Vec evaluate_observables(const std::vector<ConstraintObservable>& obs, const Vec& x_raw) {
    Vec out(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) out(static_cast<Eigen::Index>(i)) = obs[i].evaluate(x_raw);
    return out;
}

KoopmanModel::KoopmanModel(Parameters params, Normalization norm, double hover_offset, double dt,
                           std::vector<ConstraintObservable> observables)
    : params_(std::move(params)),
      norm_(std::move(norm)),
      hover_offset_(hover_offset),
      dt_(dt),
      observables_(std::move(observables)) {
    validate();
}

void KoopmanModel::validate() const {
    const NetworkShape& s = params_.shape();
    if (!(dt_ > 0.0)) throw ConfigError("koopman model: dt must be > 0");
    if (norm_.state_dim() != s.state_dim || norm_.input_dim() != s.input_dim || norm_.state_scale.size() != s.state_dim ||
        norm_.input_scale.size() != s.input_dim)
        throw ConfigError("koopman model: normalization metadata missing or mis-sized");
    if (static_cast<int>(observables_.size()) != s.fixed_dim)
        throw ConfigError("koopman model: constraint observable count does not match fixed_dim");
    for (const auto& o : observables_)
        if (o.index < 0 || o.index >= s.state_dim) throw ConfigError("koopman model: observable index out of range");
}

Vec KoopmanModel::lift_state(const Vec& x_raw) const {
    if (norm_.state_dim() != state_dim()) throw ConfigError("lift_state: model has no normalization metadata");
    if (x_raw.size() != state_dim()) throw ConfigError("lift_state: state dimension mismatch");
    const Vec x = canonical_state(x_raw);
    return lift(params_, norm_.apply_state(x), evaluate_observables(observables_, x));
}

Vec KoopmanModel::predict_step(const Vec& z, const Vec& u_raw) const {
    return bilinear_step(params_, z, norm_.apply_input(u_raw));
}

Vec KoopmanModel::predict_step_normalized(const Vec& z, const Vec& u_norm) const {
    return bilinear_step(params_, z, u_norm);
}

Linearization KoopmanModel::linearize(const Vec& z, const Vec& u, const Vec& z_next) const {
    const int n = lifted_dim();
    const int m = input_dim();
    if (z.size() != n || z_next.size() != n || u.size() != m) throw ConfigError("linearize: dimension mismatch");
    Linearization lin;
    lin.A = params_.F();
    lin.B.resize(n, m);
    Vec drift = params_.F() * z;
    for (int j = 0; j < m; ++j) {
        const auto Gj = params_.G(j);
        lin.A += u(j) * Gj;
        lin.B.col(j) = Gj * z;
        drift += lin.B.col(j) * u(j);
    }
    lin.r = drift - z_next;
    return lin;
}

std::vector<Vec> KoopmanModel::rollout(const Vec& x0_raw, const std::vector<Vec>& inputs_raw, int K) const {
    if (K < 0 || K > static_cast<int>(inputs_raw.size())) throw ConfigError("rollout: K exceeds input sequence");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(K + 1));
    out.push_back(x0_raw);
    Vec z = lift_state(x0_raw);
    for (int k = 0; k < K; ++k) {
        z = predict_step(z, inputs_raw[static_cast<std::size_t>(k)]);
        out.push_back(to_raw_state(z));
    }
    return out;
}

}  // namespace koopmpc
