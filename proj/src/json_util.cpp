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
#include "flowgrad/json_util.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "flowgrad/error.hpp"

namespace flowgrad {

std::string canonical_dump(const json& value) {
    return value.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string compact_dump(const json& value) {
    return value.dump(-1, ' ', false, json::error_handler_t::replace);
}

namespace {

bool starts_json_fence(std::string_view text, std::size_t pos) {
    static constexpr std::string_view kTag = "```json";
    if (text.size() - pos < kTag.size())
        return false;
    for (std::size_t i = 0; i < kTag.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(text[pos + i])) != kTag[i])
            return false;
    }
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

}  // namespace

json extract_json(std::string_view content) {
    bool saw_fence = false;
    std::string first_error;

    std::size_t pos = 0;
    while ((pos = content.find("```", pos)) != std::string_view::npos) {
        if (!starts_json_fence(content, pos)) {
            pos += 3;
            continue;
        }
        std::size_t body_start = content.find('\n', pos);
        if (body_start == std::string_view::npos)
            break;
        ++body_start;
        std::size_t close = content.find("```", body_start);
        if (close == std::string_view::npos)
            close = content.size();
        saw_fence = true;
        auto body = content.substr(body_start, close - body_start);
        try {
            return json::parse(body);
        } catch (const json::parse_error& e) {
            if (first_error.empty())
                first_error = e.what();
        }
        pos = close == content.size() ? close : close + 3;
    }

    auto whole = trim(content);
    try {
        return json::parse(whole);
    } catch (const json::parse_error& e) {
        if (saw_fence)
            throw MalformedJson(first_error, std::string(content));
        if (!whole.empty() && (whole.front() == '{' || whole.front() == '['))
            throw MalformedJson(e.what(), std::string(content));
    }
    throw NoJsonFound(std::string(content));
}

std::string render_fenced(const json& value) {
    return "```json\n" + value.dump(2, ' ', false, json::error_handler_t::replace) + "\n```";
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string utf8_truncate(std::string_view text, std::size_t max_bytes) {
    if (text.size() <= max_bytes)
        return std::string(text);
    std::size_t cut = max_bytes;
    // back off continuation bytes (10xxxxxx)
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80)
        --cut;
    return std::string(text.substr(0, cut));
}

}  // namespace flowgrad
