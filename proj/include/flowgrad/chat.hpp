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

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flowgrad/json_util.hpp"

namespace flowgrad {

enum class Role { System, User };

/// What a model call is for. Ledger rows carry it, and mode contracts are
/// asserted on the resulting tag sequence.
enum class Purpose {
    Forward,
    GradLoss,
    GradCall,
    GradWorkflow,
    OptimCall,
    OptimWorkflow,
    InitExecutor,
    Bootstrap,
    Judge,
};

std::string to_string(Role role);
Role role_from_string(std::string_view s);
std::string to_string(Purpose purpose);
Purpose purpose_from_string(std::string_view s);

struct Message {
    Role role = Role::User;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    Purpose purpose = Purpose::Forward;

    /// Content of the last user message, or empty.
    const std::string& last_user_content() const;
    /// Content of the leading system message, or empty.
    const std::string& system_content() const;
};

/// Model id and sampling settings for one family of calls (executor or meta).
struct ModelSettings {
    std::string model_id = "gpt-4.1-mini";
    double temperature = 0.0;
    int max_output_tokens = 4096;
};

struct ChatResponse {
    std::string content;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::chrono::milliseconds latency{0};
};

/// (model_id, messages, temperature) -> canonical JSON. max_output_tokens is
/// deliberately absent so token-cap tuning keeps recorded stores valid.
json request_key_material(const ChatRequest& request);
std::string request_key(const ChatRequest& request);

json to_json(const ChatRequest& request);
ChatRequest request_from_json(const json& j);

}  // namespace flowgrad
