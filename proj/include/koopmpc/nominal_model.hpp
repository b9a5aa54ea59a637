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

// Physics-based prediction model: the rigid-body dynamics with no
// ground effect, discretised by RK4, with its exact Jacobians.

#include <vector>

#include "koopmpc/common.hpp"
#include "koopmpc/koopman_model.hpp"
#include "koopmpc/vehicle.hpp"

namespace koopmpc {

struct DiscreteJacobian {
    Vec x_next;
    Mat A;  // d x_next / d x
    Mat B;  // d x_next / d u  (physical input units)
};

class NominalModel {
public:
    explicit NominalModel(VehicleParams params, double dt = 0.02, int substeps = 1);

    const VehicleParams& params() const { return params_; }
    double dt() const { return dt_; }
    int substeps() const { return substeps_; }

    // Continuous dynamics and Jacobians with respect to x (13) and u (4).
    Vec deriv(const Vec& x, const Vec& u) const;
    void deriv_jacobian(const Vec& x, const Vec& u, Mat& fx, Mat& fu) const;

    // One controller step: `substeps` RK4 stages, then quaternion normalisation.
    Vec step(const Vec& x, const Vec& u) const;
    DiscreteJacobian step_jacobian(const Vec& x, const Vec& u) const;

    Vec hover_state(const Vec3& p = Vec3::Zero()) const;
    Vec hover_input() const;

private:
    VehicleParams params_;
    double dt_;
    int substeps_;
};

// x' = x_h + A (x - x_h) + B (u - u_h), linearised once at hover.
class HoverLinearPredictor : public StatePredictor {
public:
    explicit HoverLinearPredictor(const NominalModel& model);
    std::vector<Vec> rollout(const Vec& x0_raw, const std::vector<Vec>& inputs_raw, int K) const override;

    const Mat& A() const { return A_; }
    const Mat& B() const { return B_; }

private:
    Vec x_h_;
    Vec u_h_;
    Mat A_;
    Mat B_;
};

}  // namespace koopmpc
