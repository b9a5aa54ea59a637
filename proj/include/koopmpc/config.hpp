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

// Resolved run configuration: defaults overlaid with a JSON file.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmpc/dataset.hpp"
#include "koopmpc/experiment.hpp"
#include "koopmpc/nmpc.hpp"
#include "koopmpc/trainer.hpp"

namespace koopmpc {

struct SplitConfig {
    double holdout_fraction = 0.3;
    std::uint64_t seed = 1;
};

struct AppConfig {
    VehicleConfig vehicle;
    CollectConfig collect;
    SplitConfig split;
    TrainConfig train;
    NMPCConfig nmpc;
    TrackConfig track;
    std::vector<double> sweep_altitudes{0.5, 0.25, 0.15, 0.10, 0.05};

    void validate() const;
};

AppConfig default_config();
// Unknown blocks or keys are rejected with ConfigError.
AppConfig config_from_json(const nlohmann::json& j);
AppConfig load_config(const std::string& path);
nlohmann::json config_to_json(const AppConfig& cfg);
// Replace every seed (collection, split, training, tracking).
void apply_seed(AppConfig& cfg, std::uint64_t seed);

}  // namespace koopmpc
