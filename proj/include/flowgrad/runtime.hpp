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

#include <cstddef>
#include <string>

#include "flowgrad/backend.hpp"
#include "flowgrad/chat.hpp"
#include "flowgrad/prompts.hpp"
#include "flowgrad/tools.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

struct EngineSettings {
    /// Runs workflow steps.
    ModelSettings executor{"gpt-4.1-mini", 0.2, 4096};
    /// Gradient, optimizer, init and bootstrap calls.
    ModelSettings meta{"gpt-4.1-mini", 0.0, 4096};
    int json_repairs = 3;
    std::string loop_sentinel = "VERDICT: DONE";
    ValidationLimits limits;
    std::size_t gradient_char_cap = 4000;
    std::string metrics_info;
};

inline constexpr std::string_view kTruncationMarker = "\n[... truncated]";

/// Everything the engine operations share. Not owning.
struct Runtime {
    LlmClient& client;
    const ToolRegistry& tools;
    const PromptLibrary& prompts;
    EngineSettings settings;

    ChatRequest meta_request(Purpose purpose, const PromptPair& pair, std::string user) const {
        ChatRequest request;
        request.model_id = settings.meta.model_id;
        request.temperature = settings.meta.temperature;
        request.max_output_tokens = settings.meta.max_output_tokens;
        request.purpose = purpose;
        request.messages.push_back({Role::System, pair.system});
        request.messages.push_back({Role::User, std::move(user)});
        return request;
    }
};

}  // namespace flowgrad
