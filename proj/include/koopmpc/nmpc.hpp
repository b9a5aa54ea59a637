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

// Sequential-QP model predictive control over a discrete-time prediction
// model z' = f(z, u). The same SQP machinery drives the learned bilinear
// model, the physics model and small test systems.

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "koopmpc/common.hpp"
#include "koopmpc/koopman_model.hpp"
#include "koopmpc/nominal_model.hpp"
#include "koopmpc/qp.hpp"

namespace koopmpc {

// Model coordinates versus physical quantities:
//   tracked output  y = C z + c       (physical, e.g. position in m)
//   projected state s = S z + s0      (physical raw state, for the state box)
//   input           u_phys = g .* u + o
class PredictionModel {
public:
    virtual ~PredictionModel() = default;
    virtual int state_dim() const = 0;
    virtual int input_dim() const = 0;
    virtual Vec lift(const Vec& x_raw) const = 0;
    virtual Vec predict(const Vec& z, const Vec& u) const = 0;
    // A = df/dz, B = df/du at (z, u); r = f(z, u) - z_next.
    virtual Linearization linearize(const Vec& z, const Vec& u, const Vec& z_next) const = 0;

    virtual const Mat& output_matrix() const = 0;
    virtual const Vec& output_offset() const = 0;
    virtual const Mat& state_matrix() const = 0;
    virtual const Vec& state_offset() const = 0;
    virtual const Vec& input_gain() const = 0;
    virtual const Vec& input_offset() const = 0;
    // Physical input the input cost is measured against (hover for the vehicle).
    virtual const Vec& input_reference() const = 0;
    // Bounds on individual lifted coordinates (+-inf when inactive).
    virtual Vec lifted_lower() const { return Vec::Constant(state_dim(), -kInfinity); }
    virtual Vec lifted_upper() const { return Vec::Constant(state_dim(), kInfinity); }

    Vec to_physical_input(const Vec& u) const { return input_gain().cwiseProduct(u) + input_offset(); }
    Vec to_model_input(const Vec& u_phys) const { return (u_phys - input_offset()).cwiseQuotient(input_gain()); }

    static constexpr double kInfinity = std::numeric_limits<double>::infinity();
};

// Learned bilinear model in normalised coordinates; position is the output.
class KoopmanPredictionModel : public PredictionModel {
public:
    explicit KoopmanPredictionModel(std::shared_ptr<const KoopmanModel> model);

    int state_dim() const override { return model_->lifted_dim(); }
    int input_dim() const override { return model_->input_dim(); }
    Vec lift(const Vec& x_raw) const override { return model_->lift_state(x_raw); }
    Vec predict(const Vec& z, const Vec& u) const override { return model_->predict_step_normalized(z, u); }
    Linearization linearize(const Vec& z, const Vec& u, const Vec& z_next) const override;
    const Mat& output_matrix() const override { return C_; }
    const Vec& output_offset() const override { return c_; }
    const Mat& state_matrix() const override { return S_; }
    const Vec& state_offset() const override { return s0_; }
    const Vec& input_gain() const override { return gain_; }
    const Vec& input_offset() const override { return offset_; }
    const Vec& input_reference() const override { return u_ref_; }
    Vec lifted_lower() const override;
    Vec lifted_upper() const override;

    const KoopmanModel& model() const { return *model_; }

private:
    std::shared_ptr<const KoopmanModel> model_;
    Mat C_, S_;
    Vec c_, s0_, gain_, offset_, u_ref_;
};

// Physics model on the raw 13-state; inputs scaled about hover by (m g, tau_max).
class NominalPredictionModel : public PredictionModel {
public:
    explicit NominalPredictionModel(NominalModel model);

    int state_dim() const override { return RigidBodyState::kDim; }
    int input_dim() const override { return 4; }
    Vec lift(const Vec& x_raw) const override;
    Vec predict(const Vec& z, const Vec& u) const override;
    Linearization linearize(const Vec& z, const Vec& u, const Vec& z_next) const override;
    const Mat& output_matrix() const override { return C_; }
    const Vec& output_offset() const override { return c_; }
    const Mat& state_matrix() const override { return S_; }
    const Vec& state_offset() const override { return s0_; }
    const Vec& input_gain() const override { return gain_; }
    const Vec& input_offset() const override { return offset_; }
    const Vec& input_reference() const override { return offset_; }

    const NominalModel& model() const { return model_; }

private:
    NominalModel model_;
    Mat C_, S_;
    Vec c_, s0_, gain_, offset_;
};

// z' = F z + sum_j G_j z u_j with identity output and input maps.
class BilinearPredictionModel : public PredictionModel {
public:
    BilinearPredictionModel(Mat F, std::vector<Mat> G);

    int state_dim() const override { return static_cast<int>(F_.rows()); }
    int input_dim() const override { return static_cast<int>(G_.size()); }
    Vec lift(const Vec& x_raw) const override { return x_raw; }
    Vec predict(const Vec& z, const Vec& u) const override;
    Linearization linearize(const Vec& z, const Vec& u, const Vec& z_next) const override;
    const Mat& output_matrix() const override { return I_; }
    const Vec& output_offset() const override { return zero_n_; }
    const Mat& state_matrix() const override { return I_; }
    const Vec& state_offset() const override { return zero_n_; }
    const Vec& input_gain() const override { return ones_m_; }
    const Vec& input_offset() const override { return zero_m_; }
    const Vec& input_reference() const override { return zero_m_; }

private:
    Mat F_;
    std::vector<Mat> G_;
    Mat I_;
    Vec zero_n_, ones_m_, zero_m_;
};

struct NMPCConfig {
    int horizon = 25;
    double dt = 0.02;
    Vec output_weight = Vec3(10.0, 10.0, 10.0);  // Q, per tracked output
    double terminal_scale = 1.0;                  // Q_N = terminal_scale * Q
    Vec input_weight = Vec4(1.0, 1.0, 1.0, 1.0);  // R, on (u - u_ref) ./ input_cost_scale
    Vec input_cost_scale;                         // physical; empty means ones
    Vec state_lower;                              // c_l on the projected state; empty means inactive
    Vec state_upper;                              // c_u
    Vec input_lower;                              // d_l, physical
    Vec input_upper;                              // d_u
    int sqp_init_max_iters = 20;
    double sqp_convergence_tol = 1e-4;
    int max_degraded_ticks = 3;
    QPSettings qp;

    void validate(int output_dim, int state_dim, int input_dim) const;
};

// Input box from the vehicle envelope and default cost scaling.
NMPCConfig vehicle_nmpc_defaults(const VehicleParams& params);

// Z: n x (N+1) lifted states, U: m x N inputs, both in model coordinates.
struct SQPIterate {
    Mat Z;
    Mat U;
};

// Tracked-output references y_ref_0 .. y_ref_N as columns (physical units).
using ReferenceWindow = Mat;

struct SQPInitResult {
    SQPIterate iterate;
    int iterations = 0;
    double step_norm = 0.0;
    bool converged = false;
};

struct TickResult {
    Vec u;  // physical, clamped to the input box
    bool degraded = false;
    QPStatus qp_status = QPStatus::solved;
    int qp_iterations = 0;
    double step_norm = 0.0;  // ||(dZ, dU)||_inf of the applied step
    double solve_ms = 0.0;
};

class NMPCController {
public:
    NMPCController(std::shared_ptr<const PredictionModel> model, NMPCConfig cfg);

    const NMPCConfig& config() const { return cfg_; }
    const PredictionModel& model() const { return *model_; }
    int num_variables() const;
    int num_constraints() const;
    // Offsets into the interleaved decision vector [dz_0, du_0, ..., dz_N].
    int z_offset(int k) const;
    int u_offset(int k) const;

    QuadraticProgram build_subproblem(const SQPIterate& it, const Vec& z_measured, const ReferenceWindow& ref) const;
    // 0.5 * sum_k |y_k - y_ref_k|_Q^2 + 0.5 * sum_k |du_k|_R^2 over a trajectory.
    double cost(const SQPIterate& it, const ReferenceWindow& ref) const;
    // Lift each guess state and pair it with the reference input.
    SQPIterate make_guess(const std::vector<Vec>& x_raw) const;
    // Simulate the model from z0 under U.
    Mat rollout(const Vec& z0, const Mat& U) const;

    // Full-step SQP to convergence; also installs the result as the current iterate.
    SQPInitResult sqp_initialize(const Vec& x_hat, const ReferenceWindow& ref, SQPIterate guess);
    // One tick of the real-time loop. Throws ControllerFault on too many degraded ticks.
    TickResult step(const Vec& x_hat, const ReferenceWindow& ref);

    static SQPIterate shift(const SQPIterate& it, const PredictionModel& model);

    const SQPIterate& iterate() const { return iterate_; }
    bool initialized() const { return initialized_; }
    int consecutive_degraded() const { return degraded_run_; }
    // Input limits in model coordinates.
    const Vec& model_input_lower() const { return u_lo_; }
    const Vec& model_input_upper() const { return u_hi_; }

private:
    double apply_step(SQPIterate& it, const Vec& delta) const;

    std::shared_ptr<const PredictionModel> model_;
    NMPCConfig cfg_;
    int n_, m_, p_, N_;
    Mat Hz_, HzN_;  // C' Q C and its terminal version
    Vec hu_;        // diagonal input Hessian in model coordinates
    Vec u_lo_, u_hi_;
    Vec u_phys_lo_, u_phys_hi_;
    Mat box_rows_;  // state-box rows acting on z, one per active bound
    Vec box_lo_, box_hi_;
    SQPIterate iterate_;
    bool initialized_ = false;
    Vec last_u_;
    int degraded_run_ = 0;
    QPSolver solver_;
    std::optional<Vec> warm_y_;
};

}  // namespace koopmpc
