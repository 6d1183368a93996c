//*****************************************************************************
// Copyright 2026 The flowgrad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//*****************************************************************************
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace flowgrad {

using json = nlohmann::json;

/// Canonical form: sorted keys (nlohmann's default object map), two-space
/// indent, UTF-8 passthrough, single trailing LF.
std::string canonical_dump(const json& value);

/// One-line canonical form, used for JSONL rows and hashing.
std::string compact_dump(const json& value);

/// Parses the first well-formed ```json fenced block, else the whole body.
/// Throws NoJsonFound or MalformedJson.
json extract_json(std::string_view content);

/// Inverse of extract_json for a single value.
std::string render_fenced(const json& value);

std::string sha256_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);

/// Writes via a sibling temporary and rename.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Truncates at a UTF-8 code point boundary so the result never exceeds max_bytes.
std::string utf8_truncate(std::string_view text, std::size_t max_bytes);

}  // namespace flowgrad
