/* Copyright 2026 The mpmdpp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef MPMD_SRC_JSON_UTIL_H_
#define MPMD_SRC_JSON_UTIL_H_

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

namespace mpmd::internal {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Throws ValidationError "<origin>:<line>:<col>: <what>" on malformed text.
Json ParseJson(std::string_view text, std::string_view origin);

std::string ReadFile(const std::string& path, std::string_view what);
void WriteFile(const std::string& path, std::string_view contents);

// Pretty-printed with sorted keys and a trailing newline.
std::string Dump(const Json& j);

}  // namespace mpmd::internal

#endif  // MPMD_SRC_JSON_UTIL_H_
