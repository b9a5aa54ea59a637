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

// Data from known generating systems. Every trajectory is paired with its
// negation under the same inputs; both systems are odd in x, so the state
// mean is zero and standardisation keeps them exactly representable.

#include <cstdint>
#include <random>
#include <vector>

#include "koopmpc/dataset.hpp"

namespace oracle {

struct BilinearSystem {
    Eigen::MatrixXd F;
    std::vector<Eigen::MatrixXd> G;

    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
        Eigen::VectorXd y = F * x;
        for (std::size_t j = 0; j < G.size(); ++j) y += u(static_cast<Eigen::Index>(j)) * (G[j] * x);
        return y;
    }
};

inline BilinearSystem scalar_linear_system() {
    BilinearSystem s;
    s.F = Eigen::MatrixXd::Constant(1, 1, 0.9);
    s.G = {Eigen::MatrixXd::Zero(1, 1)};
    return s;
}

inline BilinearSystem three_state_bilinear_system() {
    BilinearSystem s;
    s.F.resize(3, 3);
    s.F << 0.97, 0.10, 0.00,
          -0.10, 0.97, 0.05,
           0.00, 0.00, 0.96;
    Eigen::MatrixXd G(3, 3);
    G << 0.00, 0.05, 0.00,
        -0.05, 0.00, 0.00,
         0.03, 0.00, 0.04;
    s.G = {G};
    return s;
}

// `input_amplitude` 0 gives u = 0 throughout.
inline koopmpc::SampleSet synthetic_dataset(const BilinearSystem& sys, int pairs_of_trajectories, int length,
                                            double input_amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> x0(-1.0, 1.0);
    std::uniform_real_distribution<double> uu(-1.0, 1.0);
    const auto d = sys.F.rows();
    const auto m = static_cast<Eigen::Index>(sys.G.size());
    koopmpc::SampleSet set;
    set.dt = 0.02;
    set.hover_thrust_offset = 0.0;
    set.normalization = koopmpc::Normalization::identity(static_cast<int>(d), static_cast<int>(m));
    int id = 0;
    for (int p = 0; p < pairs_of_trajectories; ++p) {
        Eigen::VectorXd x(d);
        for (auto& v : x) v = x0(rng);
        std::vector<Eigen::VectorXd> us;
        for (int k = 0; k < length; ++k) {
            Eigen::VectorXd u(m);
            for (auto& v : u) v = input_amplitude * uu(rng);
            us.push_back(u);
        }
        for (double sign : {1.0, -1.0}) {
            koopmpc::Trajectory t;
            t.id = id++;
            Eigen::VectorXd s = sign * x;
            for (int k = 0; k < length; ++k) {
                const Eigen::VectorXd next = sys.step(s, us[static_cast<std::size_t>(k)]);
                t.samples.push_back({s, us[static_cast<std::size_t>(k)], next});
                s = next;
            }
            set.trajectories.push_back(std::move(t));
        }
    }
    return set;
}

// Split that keeps each +/- pair together (trajectories 2i and 2i+1).
inline koopmpc::SplitResult split_pairs(const koopmpc::SampleSet& set, int train_pairs, int val_pairs) {
    koopmpc::SplitResult out;
    for (auto* s : {&out.train, &out.val, &out.test}) {
        s->dt = set.dt;
        s->hover_thrust_offset = set.hover_thrust_offset;
        s->normalization = set.normalization;
    }
    for (std::size_t i = 0; i < set.trajectories.size(); ++i) {
        const int pair = static_cast<int>(i / 2);
        auto& dst = pair < train_pairs ? out.train : (pair < train_pairs + val_pairs ? out.val : out.test);
        dst.trajectories.push_back(set.trajectories[i]);
    }
    return out;
}

}  // namespace oracle
