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

// Helpers shared by the JSON/JSONL readers and writers.

#include <string>

#include <json.hpp>

#include "koopmpc/common.hpp"

namespace koopmpc::json_util {

using nlohmann::json;

json to_json(const Vec& v);
// Row-major nested-free flat array of a matrix.
json to_json_rowmajor(const Mat& m);

Vec vec_from_json(const json& j, const char* what, Eigen::Index expected = -1);
Mat mat_from_json_rowmajor(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what);

// Optional-field readers: leave `out` untouched when the key is absent.
void read(const json& j, const char* key, double& out);
void read(const json& j, const char* key, int& out);
void read(const json& j, const char* key, long& out);
void read(const json& j, const char* key, bool& out);
void read(const json& j, const char* key, std::uint64_t& out);
void read(const json& j, const char* key, std::string& out);
void read(const json& j, const char* key, Vec3& out);
void read(const json& j, const char* key, Vec4& out);
void read(const json& j, const char* key, Eigen::Vector2d& out);

json parse_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

// 64-bit FNV-1a over a byte string, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace koopmpc::json_util
