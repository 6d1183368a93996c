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
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "flowgrad/backend.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "flowgrad/error.hpp"

namespace flowgrad {

std::int64_t approx_tokens(std::string_view text) {
    std::int64_t count = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word)
            ++count;
        in_word = !space;
    }
    return count;
}

// ---------------------------------------------------------------------------
// ScriptedBackend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(ScriptFn script) : script_(std::move(script)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::echo() {
    return std::make_shared<ScriptedBackend>([](const ChatRequest& r) { return r.last_user_content(); });
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_rules(const json& script) {
    struct Rule {
        std::optional<Purpose> purpose;
        std::string contains;
        std::string system_contains;
        std::vector<std::string> responses;
        bool echo = false;
        std::shared_ptr<std::atomic<std::size_t>> served = std::make_shared<std::atomic<std::size_t>>(0);
    };
    std::vector<Rule> rules;
    for (const auto& j : script.at("rules")) {
        Rule rule;
        if (j.contains("purpose"))
            rule.purpose = purpose_from_string(j.at("purpose").get<std::string>());
        rule.contains = j.value("contains", std::string());
        rule.system_contains = j.value("system_contains", std::string());
        rule.echo = j.value("echo", false);
        if (j.contains("response"))
            rule.responses.push_back(j.at("response").get<std::string>());
        if (j.contains("response_json"))
            rule.responses.push_back(render_fenced(j.at("response_json")));
        if (j.contains("responses")) {
            for (const auto& r : j.at("responses"))
                rule.responses.push_back(r.is_string() ? r.get<std::string>() : render_fenced(r));
        }
        if (!rule.echo && rule.responses.empty())
            throw ConfigError("script rule without a response: " + j.dump());
        rules.push_back(std::move(rule));
    }
    return std::make_shared<ScriptedBackend>([rules = std::move(rules)](const ChatRequest& request) {
        for (const auto& rule : rules) {
            if (rule.purpose && *rule.purpose != request.purpose)
                continue;
            if (!rule.contains.empty() && request.last_user_content().find(rule.contains) == std::string::npos)
                continue;
            if (!rule.system_contains.empty() &&
                request.system_content().find(rule.system_contains) == std::string::npos)
                continue;
            if (rule.echo)
                return request.last_user_content();
            const auto n = rule.served->fetch_add(1);
            return rule.responses[n % rule.responses.size()];
        }
        throw Error("script has no rule for " + to_string(request.purpose) + " request");
    });
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    std::string content;
    {
        std::lock_guard lock(mu_);
        log_.push_back(request);
        content = script_(request);
    }
    ChatResponse response;
    for (const auto& m : request.messages)
        response.input_tokens += approx_tokens(m.content);
    response.output_tokens = approx_tokens(content);
    response.content = std::move(content);
    return response;
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mu_);
    return log_;
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
    auto endpoint = config_.endpoint;
    while (!endpoint.empty() && endpoint.back() == '/')
        endpoint.pop_back();
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint must include a scheme: " + config_.endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    scheme_host_port_ = endpoint.substr(0, path_start);
    base_path_ = path_start == std::string::npos ? "" : endpoint.substr(path_start);
}

json HttpBackend::request_body(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return {
        {"model", request.model_id},
        {"messages", messages},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0')
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto started = std::chrono::steady_clock::now();
    ++calls_;
    auto result = client.Post(base_path_ + "/chat/completions", headers,
                              compact_dump(request_body(request)), "application/json");
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    if (!result)
        throw TransportError("HTTP request failed: " + httplib::to_string(result.error()));
    const int status = result->status;
    if (status != 200) {
        const bool retryable = status == 408 || status == 429 || status >= 500;
        throw TransportError("HTTP " + std::to_string(status) + ": " + result->body.substr(0, 512), retryable);
    }

    ChatResponse response;
    try {
        const auto body = json::parse(result->body);
        const auto& content = body.at("choices").at(0).at("message").at("content");
        response.content = content.is_null() ? std::string() : content.get<std::string>();
        if (body.contains("usage") && body["usage"].is_object()) {
            response.input_tokens = body["usage"].value("prompt_tokens", std::int64_t{0});
            response.output_tokens = body["usage"].value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected response body: ") + e.what(), false);
    }
    response.latency = latency;
    return response;
}

// ---------------------------------------------------------------------------
// ReplayBackend
// ---------------------------------------------------------------------------

namespace {

json response_to_json(const ChatResponse& r) {
    return {{"content", r.content}, {"input_tokens", r.input_tokens}, {"output_tokens", r.output_tokens}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    r.input_tokens = j.value("input_tokens", std::int64_t{0});
    r.output_tokens = j.value("output_tokens", std::int64_t{0});
    return r;
}

}  // namespace

ReplayBackend::ReplayBackend(std::filesystem::path store, ReplayMode mode, std::shared_ptr<Backend> inner)
    : store_(std::move(store)), mode_(mode), inner_(std::move(inner)) {
    if (mode_ == ReplayMode::Record) {
        if (!inner_)
            throw ConfigError("record mode needs an inner backend");
        if (store_.has_parent_path())
            std::filesystem::create_directories(store_.parent_path());
        return;
    }
    std::ifstream in(store_, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open replay store " + store_.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            const auto row = json::parse(line);
            recorded_[row.at("key").get<std::string>()].push_back(response_from_json(row.at("response")));
        } catch (const json::exception& e) {
            throw ParseError(store_.string(), lineno, e.what());
        }
    }
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    const auto key = request_key(request);
    if (mode_ == ReplayMode::Replay) {
        std::lock_guard lock(mu_);
        auto it = recorded_.find(key);
        if (it == recorded_.end())
            throw ReplayMiss(key);
        auto& n = served_[key];
        const auto& response = it->second[std::min(n, it->second.size() - 1)];
        ++n;
        return response;
    }

    auto response = inner_->complete(request);
    std::lock_guard lock(mu_);
    json row = {
        {"key", key},
        {"seq", seq_++},
        {"request", to_json(request)},
        {"response", response_to_json(response)},
    };
    std::ofstream out(store_, std::ios::binary | std::ios::app);
    if (!out)
        throw Error("cannot append to replay store " + store_.string());
    out << compact_dump(row) << '\n';
    return response;
}

std::size_t ReplayBackend::network_calls() const {
    return mode_ == ReplayMode::Record ? inner_->network_calls() : 0;
}

// ---------------------------------------------------------------------------
// LlmClient
// ---------------------------------------------------------------------------

void require_string_field(const json& j, const std::string& key) {
    if (!j.is_object())
        throw MalformedJson("expected a JSON object", j.dump());
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
        throw MalformedJson("missing nonempty string field '" + key + "'", j.dump());
}

LlmClient::LlmClient(std::shared_ptr<Backend> backend, std::shared_ptr<Ledger> ledger, RetryPolicy retry,
                     Budget budget)
    : backend_(std::move(backend)), ledger_(std::move(ledger)), retry_(retry), budget_(budget) {
    if (!backend_ || !ledger_)
        throw ConfigError("LlmClient needs a backend and a ledger");
}

ChatResponse LlmClient::complete(const ChatRequest& request) {
    if (request.messages.empty())
        throw Error("chat request has no messages");
    if (budget_.max_calls && ledger_->size() >= *budget_.max_calls)
        throw BudgetExceeded("call budget of " + std::to_string(*budget_.max_calls) + " reached");
    if (budget_.max_cost_micro_usd && ledger_->total_cost_micro_usd() >= *budget_.max_cost_micro_usd)
        throw BudgetExceeded("cost budget of $" + format_usd(*budget_.max_cost_micro_usd) + " reached");

    auto backoff = retry_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            auto response = backend_->complete(request);
            ledger_->record_call(request.purpose, request.model_id, response.input_tokens,
                                 response.output_tokens);
            return response;
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= retry_.max_attempts)
                throw;
        }
        if (backoff.count() > 0)
            std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, retry_.max_backoff);
    }
}

json LlmClient::complete_json(ChatRequest request, const JsonValidator& validate, int max_repairs) {
    const auto original = request.messages.back().content;
    std::string last_error;
    for (int attempt = 0; attempt <= max_repairs; ++attempt) {
        if (attempt > 0)
            request.messages.back().content = original + "\n\n" + std::string(kJsonRepairInstruction);
        auto response = complete(request);
        try {
            auto value = extract_json(response.content);
            if (validate)
                validate(value);
            return value;
        } catch (const JsonExtractionError& e) {
            last_error = e.what();
        }
    }
    throw JsonUnavailable(to_string(request.purpose) + ": " + last_error);
}

}  // namespace flowgrad
