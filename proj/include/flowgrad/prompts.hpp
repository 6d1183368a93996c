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
#include <map>
#include <string>
#include <string_view>

namespace flowgrad {

struct PromptPair {
    std::string system;
    std::string user;
};

/// Named system/user template pairs. The builtin set is compiled in from the
/// `prompts/` directory; a directory of `<name>.system.txt` / `<name>.user.txt`
/// files overrides individual entries.
class PromptLibrary {
public:
    static PromptLibrary builtin();
    static PromptLibrary with_overrides(const std::filesystem::path& dir);

    const PromptPair& get(std::string_view name) const;
    bool contains(std::string_view name) const;

private:
    std::map<std::string, PromptPair, std::less<>> prompts_;
};

namespace prompt_names {
inline constexpr std::string_view kGradWorkflow = "grad_workflow";
inline constexpr std::string_view kGradLoss = "grad_loss";
inline constexpr std::string_view kGradBackprop = "grad_backprop";
inline constexpr std::string_view kOptimWorkflow = "optim_workflow";
inline constexpr std::string_view kOptimCall = "optim_call";
inline constexpr std::string_view kInitExecutor = "init_executor";
inline constexpr std::string_view kJointGradient = "joint_gradient";
inline constexpr std::string_view kJointUpdate = "joint_update";
inline constexpr std::string_view kSingleLayerGradient = "single_layer_gradient";
inline constexpr std::string_view kSingleLayerUpdate = "single_layer_update";
inline constexpr std::string_view kJudge = "judge";
}  // namespace prompt_names

using TemplateValues = std::map<std::string, std::string, std::less<>>;

/// `{name}` placeholders are substituted in one pass (values are not
/// rescanned); `{{` and `}}` are literal braces. Throws Error on a placeholder
/// without a value.
std::string render_template(std::string_view tmpl, const TemplateValues& values);

/// The raw compiled-in template files, keyed "<name>.<system|user>".
const std::map<std::string, std::string>& embedded_prompt_files();

}  // namespace flowgrad
