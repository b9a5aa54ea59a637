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

#include <cstdint>
#include <fstream>
#include <sstream>

namespace koopmpc::json_util {

json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json to_json_rowmajor(const Mat& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
    return a;
}

Vec vec_from_json(const json& j, const char* what, Eigen::Index expected) {
    if (!j.is_array()) throw FormatError(std::string(what) + ": expected an array");
    if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected) {
        throw FormatError(std::string(what) + ": expected " + std::to_string(expected) + " entries, got " +
                          std::to_string(j.size()));
    }
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError(std::string(what) + ": non-numeric entry");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Mat mat_from_json_rowmajor(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
    const Vec flat = vec_from_json(j, what, rows * cols);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat(r * cols + c);
    return m;
}

namespace {
template <typename T>
void read_scalar(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

template <int N>
void read_fixed(const json& j, const char* key, Eigen::Matrix<double, N, 1>& out) {
    if (!j.contains(key)) return;
    try {
        out = vec_from_json(j.at(key), key, N);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}
}  // namespace

void read(const json& j, const char* key, double& out) { read_scalar(j, key, out); }
void read(const json& j, const char* key, int& out) { read_scalar(j, key, out); }
void read(const json& j, const char* key, long& out) { read_scalar(j, key, out); }
void read(const json& j, const char* key, bool& out) { read_scalar(j, key, out); }
void read(const json& j, const char* key, std::uint64_t& out) { read_scalar(j, key, out); }
void read(const json& j, const char* key, std::string& out) { read_scalar(j, key, out); }
void read(const json& j, const char* key, Vec3& out) { read_fixed<3>(j, key, out); }
void read(const json& j, const char* key, Vec4& out) { read_fixed<4>(j, key, out); }
void read(const json& j, const char* key, Eigen::Vector2d& out) { read_fixed<2>(j, key, out); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_file(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
    if (!out) throw ConfigError("write failed for " + path);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

}  // namespace koopmpc::json_util
