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

#include "koopmpc/json_util.hpp"
#include "koopmpc/koopman_model.hpp"

namespace koopmpc {

namespace detail {
nlohmann::json normalization_json(const Normalization& n);
Normalization normalization_from_json(const nlohmann::json& j, int d, int m);
}  // namespace detail

namespace {

constexpr int kModelSchemaVersion = 1;
using json_util::json;

const char* kind_name(ConstraintObservable::Kind k) {
    switch (k) {
        case ConstraintObservable::Kind::cos: return "cos";
        case ConstraintObservable::Kind::sin: return "sin";
        case ConstraintObservable::Kind::square: return "square";
    }
    return "cos";
}

ConstraintObservable::Kind kind_from(const std::string& s) {
    if (s == "cos") return ConstraintObservable::Kind::cos;
    if (s == "sin") return ConstraintObservable::Kind::sin;
    if (s == "square") return ConstraintObservable::Kind::square;
    throw FormatError("unknown constraint observable kind '" + s + "'");
}

json bound_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double bound_from(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw FormatError("bad bound '" + s + "'");
    }
    return j.get<double>();
}

}  // namespace

std::string model_checksum(const json& j) {
    json payload = j;
    payload.erase("checksum");
    return json_util::fnv1a_hex(payload.dump());
}

json model_to_json(const KoopmanModel& model) {
    const Parameters& p = model.parameters();
    const NetworkLayout& lay = p.layout();
    const NetworkShape& s = p.shape();

    json layers = json::array();
    for (int l = 0; l < lay.layers(); ++l) {
        const auto i = static_cast<std::size_t>(l);
        layers.push_back({{"W", json_util::to_json_rowmajor(p.matrix(lay.weights[i]))},
                          {"b", json_util::to_json(p.vector(lay.biases[i]))},
                          {"rows", lay.weights[i].rows},
                          {"cols", lay.weights[i].cols},
                          {"activation", l + 1 < lay.layers() ? "tanh" : "linear"}});
    }
    json G = json::array();
    for (int j = 0; j < s.input_dim; ++j) G.push_back(json_util::to_json_rowmajor(p.G(j)));
    Mat Cx = Mat::Zero(s.state_dim, s.lifted_dim());
    Cx.leftCols(s.state_dim).setIdentity();

    json obs = json::array();
    for (const auto& o : model.observables())
        obs.push_back({{"kind", kind_name(o.kind)}, {"index", o.index}, {"lower", bound_json(o.lower)},
                       {"upper", bound_json(o.upper)}});

    const TrainingMetadata& m = model.metadata();
    json j{{"schema_version", kModelSchemaVersion},
           {"d", s.state_dim},
           {"n", s.lifted_dim()},
           {"m", s.input_dim},
           {"feature_dim", s.feature_dim},
           {"hidden", s.hidden},
           {"dt", model.dt()},
           {"encoder", {{"layers", layers}}},
           {"F", json_util::to_json_rowmajor(p.F())},
           {"G", G},
           {"Cx", json_util::to_json_rowmajor(Cx)},
           {"normalization", detail::normalization_json(model.normalization())},
           {"hover_offset", model.hover_offset()},
           {"constraint_observables", obs},
           {"training",
            {{"learning_rate", m.learning_rate},
             {"beta_kct", m.beta},
             {"l2_strength", m.l2},
             {"epochs", m.epochs},
             {"batch_size", m.batch_size},
             {"seed", m.seed},
             {"best_epoch", m.best_epoch},
             {"best_val_loss", m.best_val_loss},
             {"optimizer", m.optimizer}}}};
    j["checksum"] = model_checksum(j);
    return j;
}

KoopmanModel model_from_json(const json& j) {
    try {
        if (j.value("schema_version", -1) != kModelSchemaVersion) throw FormatError("unsupported model schema_version");
        if (!j.contains("checksum") || j.at("checksum").get<std::string>() != model_checksum(j))
            throw FormatError("model checksum mismatch");
        NetworkShape s;
        s.state_dim = j.at("d").get<int>();
        s.input_dim = j.at("m").get<int>();
        s.feature_dim = j.at("feature_dim").get<int>();
        s.hidden = j.at("hidden").get<std::vector<int>>();
        s.fixed_dim = static_cast<int>(j.at("constraint_observables").size());
        if (s.lifted_dim() != j.at("n").get<int>()) throw FormatError("model lifted dimension inconsistent");
        if (s.feature_dim == 0) s.hidden.clear();

        Parameters p(s);
        const NetworkLayout& lay = p.layout();
        const json& layers = j.at("encoder").at("layers");
        if (static_cast<int>(layers.size()) != lay.layers()) throw FormatError("model encoder layer count mismatch");
        for (int l = 0; l < lay.layers(); ++l) {
            const auto i = static_cast<std::size_t>(l);
            const Block& w = lay.weights[i];
            p.matrix(w) = json_util::mat_from_json_rowmajor(layers[i].at("W"), w.rows, w.cols, "encoder W");
            p.vector(lay.biases[i]) = json_util::vec_from_json(layers[i].at("b"), "encoder b", w.rows);
        }
        const int n = s.lifted_dim();
        p.matrix(lay.F) = json_util::mat_from_json_rowmajor(j.at("F"), n, n, "F");
        const json& G = j.at("G");
        if (static_cast<int>(G.size()) != s.input_dim) throw FormatError("model G count mismatch");
        for (int k = 0; k < s.input_dim; ++k)
            p.matrix(lay.G[static_cast<std::size_t>(k)]) =
                json_util::mat_from_json_rowmajor(G[static_cast<std::size_t>(k)], n, n, "G");

        std::vector<ConstraintObservable> obs;
        for (const json& o : j.at("constraint_observables")) {
            obs.push_back({kind_from(o.at("kind").get<std::string>()), o.at("index").get<int>(),
                           bound_from(o.at("lower")), bound_from(o.at("upper"))});
        }
        KoopmanModel model(std::move(p), detail::normalization_from_json(j.at("normalization"), s.state_dim, s.input_dim),
                           j.at("hover_offset").get<double>(), j.at("dt").get<double>(), std::move(obs));
        const json& t = j.at("training");
        TrainingMetadata& m = model.metadata();
        m.learning_rate = t.at("learning_rate").get<double>();
        m.beta = t.at("beta_kct").get<double>();
        m.l2 = t.at("l2_strength").get<double>();
        m.epochs = t.at("epochs").get<int>();
        m.batch_size = t.at("batch_size").get<int>();
        m.seed = t.at("seed").get<std::uint64_t>();
        m.best_epoch = t.at("best_epoch").get<int>();
        m.best_val_loss = t.at("best_val_loss").get<double>();
        m.optimizer = t.at("optimizer").get<std::string>();
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const KoopmanModel& model, const std::string& path) {
    json_util::write_file(path, model_to_json(model).dump(1) + "\n");
}

KoopmanModel load_model(const std::string& path) { return model_from_json(json_util::parse_file(path)); }

}  // namespace koopmpc
