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

#include <sstream>

#include "koopmpc/dataset.hpp"
#include "koopmpc/json_util.hpp"

namespace koopmpc {

namespace {

constexpr int kDatasetSchemaVersion = 1;

using json_util::json;

json normalization_to_json(const Normalization& n) {
    return json{{"state_mean", json_util::to_json(n.state_mean)},
                {"state_scale", json_util::to_json(n.state_scale)},
                {"input_offset", json_util::to_json(n.input_offset)},
                {"input_scale", json_util::to_json(n.input_scale)},
                {"fitted", n.fitted}};
}

}  // namespace

namespace detail {

json normalization_json(const Normalization& n) { return normalization_to_json(n); }

Normalization normalization_from_json(const json& j, int d, int m) {
    Normalization n;
    n.state_mean = json_util::vec_from_json(j.at("state_mean"), "normalization.state_mean", d);
    n.state_scale = json_util::vec_from_json(j.at("state_scale"), "normalization.state_scale", d);
    n.input_offset = json_util::vec_from_json(j.at("input_offset"), "normalization.input_offset", m);
    n.input_scale = json_util::vec_from_json(j.at("input_scale"), "normalization.input_scale", m);
    n.fitted = j.value("fitted", false);
    if (!(n.state_scale.array() > 0.0).all() || !(n.input_scale.array() > 0.0).all())
        throw FormatError("normalization scales must be > 0");
    return n;
}

}  // namespace detail

std::string dataset_to_jsonl(const SampleSet& set) {
    std::ostringstream out;
    const json header{{"schema_version", kDatasetSchemaVersion},
                      {"dt", set.dt},
                      {"state_dim", set.state_dim()},
                      {"input_dim", set.input_dim()},
                      {"trajectories", set.trajectories.size()},
                      {"sample_count", set.sample_count()},
                      {"hover_thrust_offset", set.hover_thrust_offset},
                      {"normalization", normalization_to_json(set.normalization)}};
    out << header.dump() << '\n';
    for (const auto& t : set.trajectories) {
        for (std::size_t k = 0; k < t.samples.size(); ++k) {
            const Sample& s = t.samples[k];
            const json rec{{"traj", t.id},
                           {"k", k},
                           {"x", json_util::to_json(s.x)},
                           {"u", json_util::to_json(s.u)},
                           {"x_next", json_util::to_json(s.x_next)}};
            out << rec.dump() << '\n';
        }
    }
    return out.str();
}

SampleSet dataset_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    SampleSet set;
    int d = -1, m = -1;
    std::size_t expected_samples = 0, expected_trajs = 0;
    bool have_header = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(std::string("malformed dataset record: ") + e.what(), line_no);
        }
        try {
            if (!have_header) {
                if (j.value("schema_version", -1) != kDatasetSchemaVersion)
                    throw FormatError("unsupported dataset schema_version", line_no);
                set.dt = j.at("dt").get<double>();
                d = j.at("state_dim").get<int>();
                m = j.at("input_dim").get<int>();
                expected_trajs = j.at("trajectories").get<std::size_t>();
                expected_samples = j.at("sample_count").get<std::size_t>();
                set.hover_thrust_offset = j.at("hover_thrust_offset").get<double>();
                set.normalization = detail::normalization_from_json(j.at("normalization"), d, m);
                have_header = true;
                continue;
            }
            const int traj = j.at("traj").get<int>();
            const std::size_t k = j.at("k").get<std::size_t>();
            if (set.trajectories.empty() || set.trajectories.back().id != traj) {
                for (const auto& t : set.trajectories)
                    if (t.id == traj) throw FormatError("trajectory records are not contiguous", line_no);
                set.trajectories.push_back({traj, {}});
            }
            auto& samples = set.trajectories.back().samples;
            if (k != samples.size()) throw FormatError("sample index out of sequence", line_no);
            samples.push_back({json_util::vec_from_json(j.at("x"), "x", d), json_util::vec_from_json(j.at("u"), "u", m),
                               json_util::vec_from_json(j.at("x_next"), "x_next", d)});
        } catch (const FormatError& e) {
            if (e.line() > 0) throw;
            throw FormatError(e.what(), line_no);
        } catch (const json::exception& e) {
            throw FormatError(std::string("malformed dataset record: ") + e.what(), line_no);
        }
    }
    if (!have_header) throw FormatError("dataset has no header", line_no > 0 ? line_no : 1);
    if (set.sample_count() != expected_samples || set.trajectories.size() != expected_trajs) {
        throw FormatError("dataset record count " + std::to_string(set.sample_count()) + " does not match header " +
                              std::to_string(expected_samples),
                          line_no + 1);
    }
    return set;
}

void save_dataset(const SampleSet& set, const std::string& path) { json_util::write_file(path, dataset_to_jsonl(set)); }

SampleSet load_dataset(const std::string& path) { return dataset_from_jsonl(json_util::read_file(path)); }

}  // namespace koopmpc
