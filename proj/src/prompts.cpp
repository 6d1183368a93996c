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
#include "flowgrad/prompts.hpp"

#include "flowgrad/error.hpp"
#include "flowgrad/json_util.hpp"

namespace flowgrad {

namespace {

bool is_name_char(char c, bool first) {
    if (c == '_' || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))
        return true;
    return !first && c >= '0' && c <= '9';
}

}  // namespace

std::string render_template(std::string_view tmpl, const TemplateValues& values) {
    std::string out;
    out.reserve(tmpl.size() * 2);
    for (std::size_t i = 0; i < tmpl.size();) {
        const char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out.push_back('{');
            i += 2;
            continue;
        }
        if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out.push_back('}');
            i += 2;
            continue;
        }
        if (c == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_name_char(tmpl[j], j == i + 1))
                ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
                const auto name = tmpl.substr(i + 1, j - i - 1);
                auto it = values.find(name);
                if (it == values.end())
                    throw Error("template placeholder {" + std::string(name) + "} has no value");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    for (const auto& [key, content] : embedded_prompt_files()) {
        const auto dot = key.rfind('.');
        auto& pair = lib.prompts_[key.substr(0, dot)];
        (key.substr(dot + 1) == "system" ? pair.system : pair.user) = content;
    }
    return lib;
}

PromptLibrary PromptLibrary::with_overrides(const std::filesystem::path& dir) {
    auto lib = builtin();
    if (!std::filesystem::is_directory(dir))
        throw ConfigError("prompt directory not found: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto filename = entry.path().filename().string();
        static constexpr std::string_view kSystem = ".system.txt";
        static constexpr std::string_view kUser = ".user.txt";
        auto ends_with = [&](std::string_view suffix) {
            return filename.size() > suffix.size() &&
                   filename.compare(filename.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        if (ends_with(kSystem))
            lib.prompts_[filename.substr(0, filename.size() - kSystem.size())].system =
                read_text_file(entry.path());
        else if (ends_with(kUser))
            lib.prompts_[filename.substr(0, filename.size() - kUser.size())].user = read_text_file(entry.path());
    }
    return lib;
}

const PromptPair& PromptLibrary::get(std::string_view name) const {
    auto it = prompts_.find(name);
    if (it == prompts_.end())
        throw Error("no prompt template named " + std::string(name));
    return it->second;
}

bool PromptLibrary::contains(std::string_view name) const {
    return prompts_.find(name) != prompts_.end();
}

}  // namespace flowgrad
