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


#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>

#include "koopmpc/dataset.hpp"

using namespace koopmpc;

namespace {

const SampleSet& default_set() {
    static const SampleSet set = collect(CollectConfig{}, VehicleConfig{});
    return set;
}

SampleSet small_set(int segments) {
    CollectConfig c;
    c.total_duration = 2.0 * segments;
    c.segment_duration = 2.0;
    return collect(c, VehicleConfig{});
}

std::set<int> ids(const SampleSet& s) {
    std::set<int> out;
    for (const auto& t : s.trajectories) out.insert(t.id);
    return out;
}

}  // namespace

TEST_CASE("collect: 240 s at 50 Hz gives 12000 samples") {
    const auto& set = default_set();
    CHECK(set.sample_count() == 12000);
    CHECK(set.trajectories.size() == 24);
    for (const auto& t : set.trajectories) CHECK(t.samples.size() == 500);
    CHECK(set.dt == doctest::Approx(0.02));
    CHECK(set.hover_thrust_offset == doctest::Approx(VehicleParams{}.hover_thrust()));
}

TEST_CASE("collect: states chain and quaternions stay unit") {
    const auto& set = default_set();
    for (const auto& t : set.trajectories) {
        for (std::size_t k = 0; k < t.samples.size(); ++k) {
            const auto& s = t.samples[k];
            CHECK(std::abs(s.x.segment<4>(6).norm() - 1.0) < 1e-9);
            CHECK(s.x(6) >= 0.0);
            if (k + 1 < t.samples.size()) CHECK((s.x_next.array() == t.samples[k + 1].x.array()).all());
        }
    }
    for (std::size_t j = 0; j + 1 < set.trajectories.size(); ++j) {
        const auto& a = set.trajectories[j].samples.back().x_next;
        const auto& b = set.trajectories[j + 1].samples.front().x;
        CHECK((a.array() == b.array()).all());
    }
}

TEST_CASE("collect: deterministic for a fixed seed") {
    CollectConfig c;
    c.total_duration = 20.0;
    const auto a = collect(c, VehicleConfig{});
    const auto b = collect(c, VehicleConfig{});
    CHECK(dataset_to_jsonl(a) == dataset_to_jsonl(b));
    c.seed = 2;
    CHECK(dataset_to_jsonl(collect(c, VehicleConfig{})) != dataset_to_jsonl(a));
}

TEST_CASE("collect: averaged inputs lie inside the fast-rate envelope") {
    CollectConfig c;
    c.total_duration = 20.0;
    std::vector<Vec4> lo(1000, Vec4::Constant(1e300)), hi(1000, Vec4::Constant(-1e300));
    const auto set = collect(c, VehicleConfig{}, [&](long k, const ControlInput& u) {
        lo[static_cast<std::size_t>(k)] = lo[static_cast<std::size_t>(k)].cwiseMin(u.vector());
        hi[static_cast<std::size_t>(k)] = hi[static_cast<std::size_t>(k)].cwiseMax(u.vector());
    });
    long k = 0;
    for (const auto& t : set.trajectories) {
        for (const auto& s : t.samples) {
            const auto i = static_cast<std::size_t>(k++);
            CHECK(((s.u.array() >= lo[i].array() - 1e-15) && (s.u.array() <= hi[i].array() + 1e-15)).all());
        }
    }
    CHECK(k == 1000);
}

TEST_CASE("collect: unit averaging window passes inputs through") {
    CollectConfig c;
    c.total_duration = 4.0;
    c.segment_duration = 2.0;
    c.fast_rate = 50.0;
    std::vector<Vec4> applied;
    const auto set = collect(c, VehicleConfig{}, [&](long, const ControlInput& u) { applied.push_back(u.vector()); });
    long k = 0;
    for (const auto& t : set.trajectories)
        for (const auto& s : t.samples) CHECK((s.u - Vec(applied[static_cast<std::size_t>(k++)])).norm() == 0.0);
}

TEST_CASE("collect: config validation") {
    CollectConfig c;
    c.fast_rate = 475.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = CollectConfig{};
    c.segment_duration = 7.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("split: 0.3 on 10 segments is 7/2/1 and partitions the set") {
    const auto set = small_set(10);
    const auto parts = split(set, 0.3, 4);
    CHECK(parts.train.trajectories.size() == 7);
    CHECK(parts.val.trajectories.size() == 2);
    CHECK(parts.test.trajectories.size() == 1);
    std::set<int> all;
    for (const auto* s : {&parts.train, &parts.val, &parts.test}) {
        for (int id : ids(*s)) CHECK(all.insert(id).second);
    }
    CHECK(all == ids(set));
    for (const auto& t : parts.train.trajectories)
        CHECK(t == set.trajectories[static_cast<std::size_t>(t.id)]);

    const auto again = split(set, 0.3, 4);
    CHECK(ids(again.test) == ids(parts.test));
}

TEST_CASE("split: boundaries") {
    CHECK_THROWS_AS(split(small_set(2), 0.5, 1), ConfigError);
    CHECK_THROWS_AS(split(small_set(4), 0.01, 1), ConfigError);
    CHECK_NOTHROW(split(small_set(4), 0.25, 1));
    CHECK_THROWS_AS(split(small_set(4), 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(small_set(4), 1.0, 1), ConfigError);
}

TEST_CASE("normalization: standardises the training split") {
    const auto& set = default_set();
    const auto parts = split(set, 0.3, 1);
    const auto norm = fit_normalization(parts.train);
    CHECK(norm.fitted);
    const int d = parts.train.state_dim();
    Vec sum = Vec::Zero(d), sq = Vec::Zero(d);
    double n = 0;
    for (const auto& t : parts.train.trajectories) {
        for (const auto& s : t.samples) {
            const Vec z = norm.apply_state(s.x);
            sum += z;
            sq += z.cwiseAbs2();
            n += 1;
        }
    }
    const Vec mean = sum / n;
    const Vec scale = (sq / n - mean.cwiseAbs2()).cwiseSqrt();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(scale.minCoeff() > 0.999);
    CHECK(scale.maxCoeff() < 1.001);
    CHECK(norm.input_offset(0) == set.hover_thrust_offset);
    CHECK(norm.input_offset.tail(3).norm() == 0.0);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (int i = 0; i < 50; ++i) {
        Vec x(d), u(4);
        for (int j = 0; j < d; ++j) x(j) = g(rng);
        for (int j = 0; j < 4; ++j) u(j) = g(rng);
        CHECK((norm.invert_state(norm.apply_state(x)) - x).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((norm.invert_input(norm.apply_input(u)) - u).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("normalization: constant dimension gets unit scale") {
    SampleSet s;
    s.hover_thrust_offset = 0.3;
    Trajectory t;
    for (int k = 0; k < 5; ++k) {
        Vec x = Vec::Zero(2);
        x << 4.0, k;
        t.samples.push_back({x, Vec::Constant(1, 0.3), x});
    }
    s.trajectories.push_back(t);
    const auto norm = fit_normalization(s);
    CHECK(norm.state_mean(0) == 4.0);
    CHECK(norm.state_scale(0) == 1.0);
    CHECK(norm.input_scale(0) == 1.0);
    CHECK(norm.state_scale(1) > 1.0);
}

TEST_CASE("jsonl round trip is exact") {
    CollectConfig c;
    c.total_duration = 20.0;
    auto set = collect(c, VehicleConfig{});
    set = with_normalization(set, fit_normalization(set));
    const std::string text = dataset_to_jsonl(set);
    const auto back = dataset_from_jsonl(text);
    CHECK(back == set);
    CHECK(dataset_to_jsonl(back) == text);
    long lines = std::count(text.begin(), text.end(), '\n');
    CHECK(lines == 1 + static_cast<long>(set.sample_count()));
}

TEST_CASE("jsonl: malformed input reports the line") {
    CollectConfig c;
    c.total_duration = 4.0;
    c.segment_duration = 2.0;
    const std::string text = dataset_to_jsonl(collect(c, VehicleConfig{}));
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 201);

    // Truncate in the middle of record 120 (file line 121).
    std::string cut;
    for (int i = 0; i < 120; ++i) cut += lines[static_cast<std::size_t>(i)] + "\n";
    cut += lines[120].substr(0, lines[120].size() / 2);
    try {
        dataset_from_jsonl(cut);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line() == 121);
    }

    // Whole records missing: detected against the header count.
    std::string shortened;
    for (int i = 0; i < 150; ++i) shortened += lines[static_cast<std::size_t>(i)] + "\n";
    CHECK_THROWS_AS(dataset_from_jsonl(shortened), FormatError);

    std::string bad_field = text;
    const auto pos = bad_field.find("\"x\":[");
    bad_field.replace(pos, 5, "\"x\":[\"a\",");
    try {
        dataset_from_jsonl(bad_field);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line() >= 1);
    }
    CHECK_THROWS_AS(dataset_from_jsonl(""), FormatError);
}
