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
#include "flowgrad/chat.hpp"

#include <array>
#include <utility>

#include "flowgrad/error.hpp"

namespace flowgrad {

namespace {

constexpr std::array<std::pair<Purpose, std::string_view>, 9> kPurposeNames{{
    {Purpose::Forward, "Forward"},
    {Purpose::GradLoss, "GradLoss"},
    {Purpose::GradCall, "GradCall"},
    {Purpose::GradWorkflow, "GradWorkflow"},
    {Purpose::OptimCall, "OptimCall"},
    {Purpose::OptimWorkflow, "OptimWorkflow"},
    {Purpose::InitExecutor, "InitExecutor"},
    {Purpose::Bootstrap, "Bootstrap"},
    {Purpose::Judge, "Judge"},
}};

const std::string kEmpty;

}  // namespace

std::string to_string(Role role) {
    return role == Role::System ? "system" : "user";
}

Role role_from_string(std::string_view s) {
    if (s == "system")
        return Role::System;
    if (s == "user")
        return Role::User;
    throw Error("unsupported message role: " + std::string(s));
}

std::string to_string(Purpose purpose) {
    for (const auto& [p, name] : kPurposeNames) {
        if (p == purpose)
            return std::string(name);
    }
    return "Unknown";
}

Purpose purpose_from_string(std::string_view s) {
    for (const auto& [p, name] : kPurposeNames) {
        if (name == s)
            return p;
    }
    throw Error("unknown purpose tag: " + std::string(s));
}

const std::string& ChatRequest::last_user_content() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::User)
            return it->content;
    }
    return kEmpty;
}

const std::string& ChatRequest::system_content() const {
    if (!messages.empty() && messages.front().role == Role::System)
        return messages.front().content;
    return kEmpty;
}

json request_key_material(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return {
        {"model", request.model_id},
        {"messages", messages},
        {"temperature", request.temperature},
    };
}

std::string request_key(const ChatRequest& request) {
    return sha256_hex(compact_dump(request_key_material(request)));
}

json to_json(const ChatRequest& request) {
    auto j = request_key_material(request);
    j["max_tokens"] = request.max_output_tokens;
    j["purpose"] = to_string(request.purpose);
    return j;
}

ChatRequest request_from_json(const json& j) {
    ChatRequest request;
    request.model_id = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages"))
        request.messages.push_back({role_from_string(m.at("role").get<std::string>()),
                                    m.at("content").get<std::string>()});
    request.temperature = j.value("temperature", 0.0);
    request.max_output_tokens = j.value("max_tokens", 1024);
    request.purpose = purpose_from_string(j.value("purpose", std::string("Forward")));
    return request;
}

}  // namespace flowgrad
