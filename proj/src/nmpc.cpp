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

#include "koopmpc/nmpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "koopmpc/dataset.hpp"

namespace koopmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Triplets = std::vector<Eigen::Triplet<double>>;

void add_dense(Triplets& t, int r0, int c0, const Mat& M, double sign = 1.0) {
    for (Eigen::Index j = 0; j < M.cols(); ++j)
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            t.emplace_back(r0 + static_cast<int>(i), c0 + static_cast<int>(j), sign * M(i, j));
}

void add_identity(Triplets& t, int r0, int c0, int n) {
    for (int i = 0; i < n; ++i) t.emplace_back(r0 + i, c0 + i, 1.0);
}

bool ordered(const Vec& lo, const Vec& hi) { return (lo.array() <= hi.array()).all(); }

}  // namespace

KoopmanPredictionModel::KoopmanPredictionModel(std::shared_ptr<const KoopmanModel> model) : model_(std::move(model)) {
    if (!model_) throw ConfigError("koopman prediction model: null model");
    const int n = model_->lifted_dim();
    const int d = model_->state_dim();
    const int m = model_->input_dim();
    const Normalization& nm = model_->normalization();
    const int p = std::min(3, d);
    C_ = Mat::Zero(p, n);
    for (int i = 0; i < p; ++i) C_(i, i) = nm.state_scale(i);
    c_ = nm.state_mean.head(p);
    S_ = Mat::Zero(d, n);
    for (int i = 0; i < d; ++i) S_(i, i) = nm.state_scale(i);
    s0_ = nm.state_mean;
    gain_ = nm.input_scale;
    offset_ = nm.input_offset;
    u_ref_ = Vec::Zero(m);
    u_ref_(0) = model_->hover_offset();
}

Linearization KoopmanPredictionModel::linearize(const Vec& z, const Vec& u, const Vec& z_next) const {
    return model_->linearize(z, u, z_next);
}

Vec KoopmanPredictionModel::lifted_lower() const {
    Vec lo = Vec::Constant(state_dim(), -kInf);
    const auto& obs = model_->observables();
    const int base = state_dim() - static_cast<int>(obs.size());
    for (std::size_t j = 0; j < obs.size(); ++j) lo(base + static_cast<int>(j)) = obs[j].lower;
    return lo;
}

Vec KoopmanPredictionModel::lifted_upper() const {
    Vec hi = Vec::Constant(state_dim(), kInf);
    const auto& obs = model_->observables();
    const int base = state_dim() - static_cast<int>(obs.size());
    for (std::size_t j = 0; j < obs.size(); ++j) hi(base + static_cast<int>(j)) = obs[j].upper;
    return hi;
}

NominalPredictionModel::NominalPredictionModel(NominalModel model) : model_(std::move(model)) {
    const int n = RigidBodyState::kDim;
    C_ = Mat::Zero(3, n);
    C_.leftCols(3).setIdentity();
    c_ = Vec::Zero(3);
    S_ = Mat::Identity(n, n);
    s0_ = Vec::Zero(n);
    const VehicleParams& vp = model_.params();
    gain_ = Vec4(vp.hover_thrust(), vp.max_torque.x(), vp.max_torque.y(), vp.max_torque.z());
    offset_ = model_.hover_input();
}

Vec NominalPredictionModel::lift(const Vec& x_raw) const {
    if (x_raw.size() != state_dim()) throw ConfigError("nominal model: state must have 13 entries");
    Vec z = canonical_state(x_raw);
    z.segment<4>(6).normalize();
    return z;
}

Vec NominalPredictionModel::predict(const Vec& z, const Vec& u) const { return model_.step(z, to_physical_input(u)); }

Linearization NominalPredictionModel::linearize(const Vec& z, const Vec& u, const Vec& z_next) const {
    const DiscreteJacobian jac = model_.step_jacobian(z, to_physical_input(u));
    return {jac.A, jac.B * gain_.asDiagonal(), jac.x_next - z_next};
}

BilinearPredictionModel::BilinearPredictionModel(Mat F, std::vector<Mat> G) : F_(std::move(F)), G_(std::move(G)) {
    const Eigen::Index n = F_.rows();
    if (F_.cols() != n || n == 0) throw ConfigError("bilinear model: F must be square and non-empty");
    for (const Mat& g : G_)
        if (g.rows() != n || g.cols() != n) throw ConfigError("bilinear model: G_j must match F");
    I_ = Mat::Identity(n, n);
    zero_n_ = Vec::Zero(n);
    ones_m_ = Vec::Ones(static_cast<Eigen::Index>(G_.size()));
    zero_m_ = Vec::Zero(static_cast<Eigen::Index>(G_.size()));
}

Vec BilinearPredictionModel::predict(const Vec& z, const Vec& u) const {
    Vec out = F_ * z;
    for (std::size_t j = 0; j < G_.size(); ++j) out += u(static_cast<Eigen::Index>(j)) * (G_[j] * z);
    return out;
}

Linearization BilinearPredictionModel::linearize(const Vec& z, const Vec& u, const Vec& z_next) const {
    Linearization lin;
    lin.A = F_;
    lin.B.resize(F_.rows(), input_dim());
    for (int j = 0; j < input_dim(); ++j) {
        lin.A += u(j) * G_[static_cast<std::size_t>(j)];
        lin.B.col(j) = G_[static_cast<std::size_t>(j)] * z;
    }
    lin.r = predict(z, u) - z_next;
    return lin;
}

void NMPCConfig::validate(int output_dim, int state_dim, int input_dim) const {
    if (horizon < 1) throw ConfigError("nmpc.horizon must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("nmpc.dt must be > 0");
    if (output_weight.size() != output_dim) throw ConfigError("nmpc.Q has the wrong length");
    if (input_weight.size() != input_dim) throw ConfigError("nmpc.R has the wrong length");
    if ((output_weight.array() < 0.0).any() || (input_weight.array() < 0.0).any() || !(terminal_scale >= 0.0))
        throw ConfigError("nmpc weights must be >= 0");
    if (output_weight.sum() + input_weight.sum() <= 0.0) throw ConfigError("nmpc weights must not all be zero");
    if (input_cost_scale.size() != 0 &&
        (input_cost_scale.size() != input_dim || !(input_cost_scale.array() > 0.0).all()))
        throw ConfigError("nmpc.input_cost_scale must hold one positive entry per input");
    if (state_lower.size() != state_upper.size() || (state_lower.size() != 0 && state_lower.size() != state_dim))
        throw ConfigError("nmpc state box must be empty or match the state dimension");
    if (input_lower.size() != input_upper.size() || (input_lower.size() != 0 && input_lower.size() != input_dim))
        throw ConfigError("nmpc input box must be empty or match the input dimension");
    if (!ordered(state_lower, state_upper) || !ordered(input_lower, input_upper))
        throw ConfigError("nmpc boxes must satisfy lower <= upper");
    if (sqp_init_max_iters < 1) throw ConfigError("nmpc.sqp_init_max_iters must be >= 1");
    if (!(sqp_convergence_tol > 0.0)) throw ConfigError("nmpc.sqp_convergence_tol must be > 0");
    if (max_degraded_ticks < 1) throw ConfigError("nmpc.max_degraded_ticks must be >= 1");
    qp.validate();
}

NMPCConfig vehicle_nmpc_defaults(const VehicleParams& params) {
    NMPCConfig cfg;
    cfg.input_lower = Vec4(0.0, -params.max_torque.x(), -params.max_torque.y(), -params.max_torque.z());
    cfg.input_upper = Vec4(params.max_total_thrust, params.max_torque.x(), params.max_torque.y(), params.max_torque.z());
    cfg.input_cost_scale = Vec4(params.hover_thrust(), params.max_torque.x(), params.max_torque.y(), params.max_torque.z());
    cfg.qp.eps_abs = 1e-4;
    cfg.qp.eps_rel = 1e-4;
    cfg.qp.max_iterations = 1000;
    // Full Ruiz equilibration stalls ADMM on these KKT systems (zero-cost
    // lifted coordinates next to stiff dynamics rows); one pass is enough.
    cfg.qp.scaling_iterations = 1;
    return cfg;
}

NMPCController::NMPCController(std::shared_ptr<const PredictionModel> model, NMPCConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
    if (!model_) throw ConfigError("nmpc: null model");
    n_ = model_->state_dim();
    m_ = model_->input_dim();
    p_ = static_cast<int>(model_->output_matrix().rows());
    N_ = cfg_.horizon;
    const int d = static_cast<int>(model_->state_matrix().rows());
    cfg_.validate(p_, d, m_);
    if (!(model_->input_gain().array() > 0.0).all()) throw ConfigError("nmpc: input gains must be positive");

    const Mat& C = model_->output_matrix();
    Hz_ = C.transpose() * cfg_.output_weight.asDiagonal() * C;
    HzN_ = cfg_.terminal_scale * Hz_;
    const Vec scale = cfg_.input_cost_scale.size() ? cfg_.input_cost_scale : Vec::Ones(m_);
    hu_ = cfg_.input_weight.cwiseProduct(model_->input_gain().cwiseQuotient(scale).cwiseAbs2());

    u_phys_lo_ = cfg_.input_lower.size() ? cfg_.input_lower : Vec::Constant(m_, -kInf);
    u_phys_hi_ = cfg_.input_upper.size() ? cfg_.input_upper : Vec::Constant(m_, kInf);
    u_lo_ = model_->to_model_input(u_phys_lo_);
    u_hi_ = model_->to_model_input(u_phys_hi_);

    std::vector<Vec> rows;
    std::vector<double> lo, hi;
    const Mat& S = model_->state_matrix();
    const Vec& s0 = model_->state_offset();
    for (int i = 0; i < d && cfg_.state_lower.size(); ++i) {
        if (std::isinf(cfg_.state_lower(i)) && std::isinf(cfg_.state_upper(i))) continue;
        rows.push_back(S.row(i).transpose());
        lo.push_back(cfg_.state_lower(i) - s0(i));
        hi.push_back(cfg_.state_upper(i) - s0(i));
    }
    const Vec llo = model_->lifted_lower(), lhi = model_->lifted_upper();
    for (int i = 0; i < n_; ++i) {
        if (std::isinf(llo(i)) && std::isinf(lhi(i))) continue;
        rows.push_back(Vec::Unit(n_, i));
        lo.push_back(llo(i));
        hi.push_back(lhi(i));
    }
    box_rows_.resize(static_cast<Eigen::Index>(rows.size()), n_);
    box_lo_.resize(static_cast<Eigen::Index>(rows.size()));
    box_hi_.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        box_rows_.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        box_lo_(static_cast<Eigen::Index>(r)) = lo[r];
        box_hi_(static_cast<Eigen::Index>(r)) = hi[r];
    }
    last_u_ = model_->input_reference().cwiseMax(u_phys_lo_).cwiseMin(u_phys_hi_);
}

int NMPCController::num_variables() const { return (N_ + 1) * n_ + N_ * m_; }
int NMPCController::num_constraints() const {
    return n_ + N_ * n_ + N_ * m_ + N_ * static_cast<int>(box_rows_.rows());
}
int NMPCController::z_offset(int k) const { return k * (n_ + m_); }
int NMPCController::u_offset(int k) const { return k * (n_ + m_) + n_; }

QuadraticProgram NMPCController::build_subproblem(const SQPIterate& it, const Vec& z_measured,
                                                  const ReferenceWindow& ref) const {
    if (it.Z.rows() != n_ || it.Z.cols() != N_ + 1 || it.U.rows() != m_ || it.U.cols() != N_)
        throw ConfigError("build_subproblem: iterate shape does not match the horizon");
    if (ref.rows() != p_ || ref.cols() != N_ + 1) throw ConfigError("build_subproblem: reference window shape");
    if (z_measured.size() != n_) throw ConfigError("build_subproblem: measured state dimension");

    const int nv = num_variables();
    const int nc = num_constraints();
    const int nb = static_cast<int>(box_rows_.rows());
    const Mat& C = model_->output_matrix();
    const Vec& c = model_->output_offset();
    const Vec u_ref = model_->to_model_input(model_->input_reference());

    QuadraticProgram qp;
    qp.q = Vec::Zero(nv);
    Triplets pt;
    for (int k = 1; k <= N_; ++k) {
        const Mat& H = k == N_ ? HzN_ : Hz_;
        const int o = z_offset(k);
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i)
                if (Hz_(i, j) != 0.0) pt.emplace_back(o + i, o + j, H(i, j));
        const double w = k == N_ ? cfg_.terminal_scale : 1.0;
        const Vec e = C * it.Z.col(k) + c - ref.col(k);
        qp.q.segment(o, n_) = w * (C.transpose() * cfg_.output_weight.cwiseProduct(e));
    }
    for (int k = 0; k < N_; ++k) {
        const int o = u_offset(k);
        for (int j = 0; j < m_; ++j) pt.emplace_back(o + j, o + j, hu_(j));
        qp.q.segment(o, m_) = hu_.cwiseProduct(it.U.col(k) - u_ref);
    }
    qp.P.resize(nv, nv);
    qp.P.setFromTriplets(pt.begin(), pt.end());

    Triplets at;
    at.reserve(static_cast<std::size_t>(N_) * static_cast<std::size_t>(n_ * (n_ + m_ + 1) + m_ + nb * n_) + n_);
    qp.l.resize(nc);
    qp.u.resize(nc);
    add_identity(at, 0, z_offset(0), n_);
    qp.l.head(n_) = z_measured - it.Z.col(0);
    qp.u.head(n_) = qp.l.head(n_);
    int row = n_;
    for (int k = 0; k < N_; ++k, row += n_) {
        const Linearization lin = model_->linearize(it.Z.col(k), it.U.col(k), it.Z.col(k + 1));
        add_identity(at, row, z_offset(k + 1), n_);
        add_dense(at, row, z_offset(k), lin.A, -1.0);
        add_dense(at, row, u_offset(k), lin.B, -1.0);
        qp.l.segment(row, n_) = lin.r;
        qp.u.segment(row, n_) = lin.r;
    }
    for (int k = 0; k < N_; ++k, row += m_) {
        add_identity(at, row, u_offset(k), m_);
        qp.l.segment(row, m_) = u_lo_ - it.U.col(k);
        qp.u.segment(row, m_) = u_hi_ - it.U.col(k);
    }
    for (int k = 1; k <= N_ && nb > 0; ++k, row += nb) {
        add_dense(at, row, z_offset(k), box_rows_);
        const Vec cur = box_rows_ * it.Z.col(k);
        qp.l.segment(row, nb) = box_lo_ - cur;
        qp.u.segment(row, nb) = box_hi_ - cur;
    }
    qp.A.resize(nc, nv);
    qp.A.setFromTriplets(at.begin(), at.end());
    return qp;
}

double NMPCController::cost(const SQPIterate& it, const ReferenceWindow& ref) const {
    const Mat& C = model_->output_matrix();
    const Vec& c = model_->output_offset();
    const Vec u_ref = model_->to_model_input(model_->input_reference());
    double J = 0.0;
    for (int k = 1; k <= N_; ++k) {
        const Vec e = C * it.Z.col(k) + c - ref.col(k);
        const double w = k == N_ ? cfg_.terminal_scale : 1.0;
        J += 0.5 * w * e.dot(cfg_.output_weight.cwiseProduct(e));
    }
    for (int k = 0; k < N_; ++k) {
        const Vec du = it.U.col(k) - u_ref;
        J += 0.5 * du.dot(hu_.cwiseProduct(du));
    }
    return J;
}

SQPIterate NMPCController::make_guess(const std::vector<Vec>& x_raw) const {
    if (static_cast<int>(x_raw.size()) != N_ + 1) throw ConfigError("make_guess: need N+1 states");
    SQPIterate it;
    it.Z.resize(n_, N_ + 1);
    for (int k = 0; k <= N_; ++k) it.Z.col(k) = model_->lift(x_raw[static_cast<std::size_t>(k)]);
    it.U = model_->to_model_input(model_->input_reference()).replicate(1, N_);
    return it;
}

Mat NMPCController::rollout(const Vec& z0, const Mat& U) const {
    Mat Z(n_, U.cols() + 1);
    Z.col(0) = z0;
    for (Eigen::Index k = 0; k < U.cols(); ++k) Z.col(k + 1) = model_->predict(Z.col(k), U.col(k));
    return Z;
}

double NMPCController::apply_step(SQPIterate& it, const Vec& delta) const {
    for (int k = 0; k <= N_; ++k) it.Z.col(k) += delta.segment(z_offset(k), n_);
    for (int k = 0; k < N_; ++k) it.U.col(k) += delta.segment(u_offset(k), m_);
    return delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0;
}

SQPInitResult NMPCController::sqp_initialize(const Vec& x_hat, const ReferenceWindow& ref, SQPIterate guess) {
    QPSettings set = cfg_.qp;
    set.eps_abs = std::min(set.eps_abs, 1e-7);
    set.eps_rel = std::min(set.eps_rel, 1e-7);
    set.max_iterations = std::max(set.max_iterations, 20000);
    set.polish = true;
    const Vec z0 = model_->lift(x_hat);
    SQPInitResult res;
    res.iterate = std::move(guess);
    std::vector<double> history;
    for (int i = 0; i < cfg_.sqp_init_max_iters; ++i) {
        const QuadraticProgram qp = build_subproblem(res.iterate, z0, ref);
        const QPSolution sol = solver_.solve(qp, set);
        if (sol.status != QPStatus::solved) {
            std::ostringstream msg;
            msg << "sqp_initialize: QP " << to_string(sol.status) << " at SQP iteration " << i << " after "
                << sol.iterations << " ADMM iterations (primal " << sol.primal_residual << ", dual " << sol.dual_residual
                << "); step norms so far:";
            for (double h : history) msg << ' ' << h;
            throw Error(msg.str());
        }
        res.step_norm = apply_step(res.iterate, sol.x);
        history.push_back(res.step_norm);
        res.iterations = i + 1;
        if (res.step_norm < cfg_.sqp_convergence_tol) {
            res.converged = true;
            break;
        }
    }
    iterate_ = res.iterate;
    initialized_ = true;
    degraded_run_ = 0;
    warm_y_.reset();
    last_u_ = model_->to_physical_input(iterate_.U.col(0)).cwiseMax(u_phys_lo_).cwiseMin(u_phys_hi_);
    return res;
}

TickResult NMPCController::step(const Vec& x_hat, const ReferenceWindow& ref) {
    if (!initialized_) throw InvalidStateError("nmpc: step called before sqp_initialize");
    const auto t0 = std::chrono::steady_clock::now();
    const Vec z0 = model_->lift(x_hat);
    const QuadraticProgram qp = build_subproblem(iterate_, z0, ref);
    WarmStart warm;
    warm.y = warm_y_;
    const QPSolution sol = solver_.solve(qp, cfg_.qp, warm);

    TickResult out;
    out.qp_status = sol.status;
    out.qp_iterations = sol.iterations;
    if (sol.status == QPStatus::solved) {
        out.step_norm = apply_step(iterate_, sol.x);
        out.u = model_->to_physical_input(iterate_.U.col(0)).cwiseMax(u_phys_lo_).cwiseMin(u_phys_hi_);
        last_u_ = out.u;
        warm_y_ = sol.y;
        degraded_run_ = 0;
    } else {
        out.degraded = true;
        out.u = last_u_;
        warm_y_.reset();
        ++degraded_run_;
    }
    iterate_ = shift(iterate_, *model_);
    out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (degraded_run_ >= cfg_.max_degraded_ticks) {
        throw ControllerFault("nmpc: " + std::to_string(degraded_run_) + " consecutive degraded ticks (last QP status " +
                              to_string(sol.status) + ")");
    }
    return out;
}

SQPIterate NMPCController::shift(const SQPIterate& it, const PredictionModel& model) {
    const Eigen::Index N = it.U.cols();
    SQPIterate out;
    out.U.resize(it.U.rows(), N);
    out.Z.resize(it.Z.rows(), N + 1);
    if (N > 1) out.U.leftCols(N - 1) = it.U.rightCols(N - 1);
    out.U.col(N - 1) = it.U.col(N - 1);
    out.Z.leftCols(N) = it.Z.rightCols(N);
    out.Z.col(N) = model.predict(out.Z.col(N - 1), out.U.col(N - 1));
    return out;
}

}  // namespace koopmpc
