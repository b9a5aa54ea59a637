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

#include "koopmpc/diffnet.hpp"

#include <cmath>
#include <random>

#include "koopmpc/kernels.hpp"

namespace koopmpc {

NetworkLayout NetworkLayout::make(const NetworkShape& shape) {
    if (shape.state_dim < 1 || shape.input_dim < 1 || shape.feature_dim < 0 || shape.fixed_dim < 0)
        throw ConfigError("network shape: dimensions must be positive");
    NetworkLayout lay;
    lay.shape = shape;
    std::size_t off = 0;
    if (shape.feature_dim > 0) {
        std::vector<int> sizes{shape.state_dim};
        for (int h : shape.hidden) {
            if (h < 1) throw ConfigError("network shape: hidden widths must be >= 1");
            sizes.push_back(h);
        }
        sizes.push_back(shape.feature_dim);
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            Block w{off, sizes[l + 1], sizes[l]};
            off += w.size();
            Block b{off, sizes[l + 1], 1};
            off += b.size();
            lay.weights.push_back(w);
            lay.biases.push_back(b);
        }
    }
    const int n = shape.lifted_dim();
    lay.F = {off, n, n};
    off += lay.F.size();
    for (int j = 0; j < shape.input_dim; ++j) {
        lay.G.push_back({off, n, n});
        off += lay.G.back().size();
    }
    lay.size = off;
    return lay;
}

std::vector<bool> NetworkLayout::regularized_mask() const {
    std::vector<bool> mask(size, true);
    for (const Block& b : biases)
        for (std::size_t i = 0; i < b.size(); ++i) mask[b.offset + i] = false;
    return mask;
}

Parameters::Parameters(const NetworkShape& shape) : layout_(NetworkLayout::make(shape)), values_(layout_.size, 0.0) {}

void Parameters::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

bool Parameters::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

Parameters initialize_parameters(const NetworkShape& shape, std::uint64_t seed) {
    Parameters p(shape);
    std::mt19937_64 rng(seed);
    const NetworkLayout& lay = p.layout();
    for (int l = 0; l < lay.layers(); ++l) {
        const Block& w = lay.weights[static_cast<std::size_t>(l)];
        const Block& b = lay.biases[static_cast<std::size_t>(l)];
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < w.size(); ++i) p.raw()[w.offset + i] = dist(rng);
        for (std::size_t i = 0; i < b.size(); ++i) p.raw()[b.offset + i] = dist(rng);
    }
    auto F = p.matrix(lay.F);
    F.setIdentity();
    return p;
}

namespace {

// Activations of one encoder pass: acts[0] is the input.
struct EncoderTrace {
    std::vector<Vec> acts;
};

void forward(const Parameters& p, const Vec& x, EncoderTrace& tr) {
    const auto& k = kernels::active();
    const NetworkLayout& lay = p.layout();
    const int L = lay.layers();
    tr.acts.resize(static_cast<std::size_t>(L + 1));
    tr.acts[0] = x;
    for (int l = 0; l < L; ++l) {
        const Block& w = lay.weights[static_cast<std::size_t>(l)];
        const Block& b = lay.biases[static_cast<std::size_t>(l)];
        Vec& out = tr.acts[static_cast<std::size_t>(l + 1)];
        out.resize(w.rows);
        k.gemv(p.raw().data() + w.offset, tr.acts[static_cast<std::size_t>(l)].data(), p.raw().data() + b.offset,
               out.data(), static_cast<std::size_t>(w.rows), static_cast<std::size_t>(w.cols));
        if (l + 1 < L) out = out.array().tanh();
    }
}

// Accumulates d(loss)/d(theta) given d(loss)/d(phi) in `delta` (consumed).
void backward(const Parameters& p, const EncoderTrace& tr, Vec delta, Parameters& grad, Vec& scratch) {
    const auto& k = kernels::active();
    const NetworkLayout& lay = p.layout();
    for (int l = lay.layers() - 1; l >= 0; --l) {
        const Block& w = lay.weights[static_cast<std::size_t>(l)];
        const Block& b = lay.biases[static_cast<std::size_t>(l)];
        const Vec& in = tr.acts[static_cast<std::size_t>(l)];
        k.ger(1.0, delta.data(), in.data(), grad.raw().data() + w.offset, static_cast<std::size_t>(w.rows),
              static_cast<std::size_t>(w.cols));
        k.axpy(1.0, delta.data(), grad.raw().data() + b.offset, static_cast<std::size_t>(b.rows));
        if (l == 0) break;
        scratch.setZero(w.cols);
        k.gemv_t_acc(p.raw().data() + w.offset, delta.data(), scratch.data(), static_cast<std::size_t>(w.rows),
                     static_cast<std::size_t>(w.cols));
        delta = scratch.array() * (1.0 - in.array().square());
    }
}

void bilinear_into(const Parameters& p, const Vec& z, const Vec& u, Vec& out, Vec& tmp) {
    const auto& k = kernels::active();
    const NetworkLayout& lay = p.layout();
    const auto n = static_cast<std::size_t>(z.size());
    out.resize(z.size());
    tmp.resize(z.size());
    k.gemv(p.raw().data() + lay.F.offset, z.data(), nullptr, out.data(), n, n);
    for (std::size_t j = 0; j < lay.G.size(); ++j) {
        const double uj = u(static_cast<Eigen::Index>(j));
        if (uj == 0.0) continue;
        k.gemv(p.raw().data() + lay.G[j].offset, z.data(), nullptr, tmp.data(), n, n);
        k.axpy(uj, tmp.data(), out.data(), n);
    }
}

Vec assemble_lift(const NetworkShape& s, const Vec& x, const Vec& phi, const Vec& fixed) {
    if (fixed.size() != s.fixed_dim) throw ConfigError("lift: fixed-coordinate dimension mismatch");
    Vec z(s.lifted_dim());
    z.head(s.state_dim) = x;
    z.segment(s.state_dim, s.feature_dim) = phi;
    z.tail(s.fixed_dim) = fixed;
    return z;
}

double regularizer(const Parameters& p, double l2) {
    const NetworkLayout& lay = p.layout();
    double s = 0.0;
    auto add = [&](const Block& b) {
        const double* v = p.raw().data() + b.offset;
        s += kernels::active().dot(v, v, b.size());
    };
    for (const Block& w : lay.weights) add(w);
    add(lay.F);
    for (const Block& g : lay.G) add(g);
    return l2 * s;
}

void check_pair(const NetworkShape& s, const TrainingPair& tp) {
    if (tp.x.size() != s.state_dim || tp.x_next.size() != s.state_dim || tp.u.size() != s.input_dim)
        throw ConfigError("training pair dimensions do not match the network shape");
}

template <bool kWithGrad>
LossTerms evaluate(const Parameters& p, std::span<const TrainingPair> pairs, const LossOptions& opts,
                   std::span<const std::size_t> indices, Parameters* grad) {
    const NetworkShape& shape = p.shape();
    const std::size_t batch = indices.empty() ? pairs.size() : indices.size();
    if (batch == 0) throw ConfigError("loss: empty batch");
    const auto& k = kernels::active();
    const NetworkLayout& lay = p.layout();
    const int d = shape.state_dim;
    const int nf = shape.feature_dim;
    const int n = shape.lifted_dim();
    const double inv_b = 1.0 / static_cast<double>(batch);

    if constexpr (kWithGrad) {
        if (grad->layout().size != lay.size || !(grad->shape() == shape)) *grad = Parameters(shape);
        grad->set_zero();
    }

    EncoderTrace tr_x, tr_next;
    Vec zp, tmp, g, dz, scratch, gu;
    double sum_pred = 0.0, sum_kct = 0.0;
    const Vec empty;

    for (std::size_t i = 0; i < batch; ++i) {
        const TrainingPair& tp = pairs[indices.empty() ? i : indices[i]];
        check_pair(shape, tp);
        Vec phi, phi_next;
        if (nf > 0) {
            forward(p, tp.x, tr_x);
            forward(p, tp.x_next, tr_next);
            phi = tr_x.acts.back();
            phi_next = tr_next.acts.back();
        }
        const Vec z = assemble_lift(shape, tp.x, phi, shape.fixed_dim ? tp.fixed : empty);
        const Vec target = assemble_lift(shape, tp.x_next, phi_next, shape.fixed_dim ? tp.fixed_next : empty);
        bilinear_into(p, z, tp.u, zp, tmp);
        const Vec e = target - zp;
        const double pred = e.head(d).squaredNorm();
        const double kct = e.tail(n - d).squaredNorm();
        sum_pred += pred;
        sum_kct += kct;

        if constexpr (kWithGrad) {
            // d(loss)/d(z') for the predicted lifted state.
            g.resize(n);
            g.head(d) = (-2.0 * inv_b) * e.head(d);
            g.tail(n - d) = (-2.0 * inv_b * opts.beta) * e.tail(n - d);
            const auto nn = static_cast<std::size_t>(n);
            double* gv = grad->raw().data();
            k.ger(1.0, g.data(), z.data(), gv + lay.F.offset, nn, nn);
            dz.setZero(n);
            k.gemv_t_acc(p.raw().data() + lay.F.offset, g.data(), dz.data(), nn, nn);
            for (std::size_t j = 0; j < lay.G.size(); ++j) {
                const double uj = tp.u(static_cast<Eigen::Index>(j));
                if (uj == 0.0) continue;
                k.ger(uj, g.data(), z.data(), gv + lay.G[j].offset, nn, nn);
                gu = uj * g;
                k.gemv_t_acc(p.raw().data() + lay.G[j].offset, gu.data(), dz.data(), nn, nn);
            }
            if (nf > 0) {
                backward(p, tr_x, dz.segment(d, nf), *grad, scratch);
                backward(p, tr_next, (2.0 * inv_b * opts.beta) * e.segment(d, nf), *grad, scratch);
            }
        }
    }

    LossTerms out;
    out.prediction = sum_pred * inv_b;
    out.consistency = sum_kct * inv_b;
    out.regularizer = regularizer(p, opts.l2);
    out.total = out.prediction + opts.beta * out.consistency + out.regularizer;
    if (!std::isfinite(out.total)) throw DivergenceError("loss is not finite");

    if constexpr (kWithGrad) {
        auto add_reg = [&](const Block& b) {
            k.axpy(2.0 * opts.l2, p.raw().data() + b.offset, grad->raw().data() + b.offset, b.size());
        };
        for (const Block& w : lay.weights) add_reg(w);
        add_reg(lay.F);
        for (const Block& gb : lay.G) add_reg(gb);
        if (!grad->all_finite()) throw DivergenceError("loss gradient is not finite");
    }
    return out;
}

}  // namespace

Vec encode(const Parameters& params, const Vec& x) {
    if (x.size() != params.shape().state_dim) throw ConfigError("encode: state dimension mismatch");
    if (params.shape().feature_dim == 0) return Vec();
    EncoderTrace tr;
    forward(params, x, tr);
    return tr.acts.back();
}

Vec lift(const Parameters& params, const Vec& x, const Vec& fixed) {
    return assemble_lift(params.shape(), x, encode(params, x), fixed);
}

Vec bilinear_step(const Parameters& params, const Vec& z, const Vec& u) {
    if (z.size() != params.shape().lifted_dim() || u.size() != params.shape().input_dim)
        throw ConfigError("bilinear_step: dimension mismatch");
    Vec out, tmp;
    bilinear_into(params, z, u, out, tmp);
    return out;
}

LossTerms loss(const Parameters& params, std::span<const TrainingPair> pairs, const LossOptions& opts,
               std::span<const std::size_t> indices) {
    return evaluate<false>(params, pairs, opts, indices, nullptr);
}

LossTerms loss_gradient(const Parameters& params, std::span<const TrainingPair> pairs, const LossOptions& opts,
                        Parameters& grad, std::span<const std::size_t> indices) {
    return evaluate<true>(params, pairs, opts, indices, &grad);
}

}  // namespace koopmpc
