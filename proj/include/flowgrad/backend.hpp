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

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flowgrad/chat.hpp"
#include "flowgrad/run_store.hpp"

namespace flowgrad {

/// A chat-completion provider. Implementations accept concurrent calls.
class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    /// Calls that left the process (HTTP requests).
    virtual std::size_t network_calls() const { return 0; }
};

/// Whitespace-delimited word count; the token estimate mocks report.
std::int64_t approx_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

using ScriptFn = std::function<std::string(const ChatRequest&)>;

class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(ScriptFn script);

    /// Returns the last user message unchanged.
    static std::shared_ptr<ScriptedBackend> echo();

    /// Rule list script: `{"rules": [{"purpose", "contains", "system_contains",
    /// "response" | "response_json" | "responses" | "echo"}]}`. First match wins.
    static std::shared_ptr<ScriptedBackend> from_rules(const json& script);

    ChatResponse complete(const ChatRequest& request) override;
    std::vector<ChatRequest> requests() const;

private:
    ScriptFn script_;
    mutable std::mutex mu_;
    std::vector<ChatRequest> log_;
};

// ---------------------------------------------------------------------------
// HTTP (OpenAI-compatible)
// ---------------------------------------------------------------------------

struct HttpConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    std::string endpoint;
    /// Name of the environment variable holding the bearer token.
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{120};
};

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpConfig config);
    ChatResponse complete(const ChatRequest& request) override;
    std::size_t network_calls() const override { return calls_.load(); }

    /// Request body for POST /chat/completions.
    static json request_body(const ChatRequest& request);

private:
    HttpConfig config_;
    std::string scheme_host_port_;
    std::string base_path_;
    std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Record / replay
// ---------------------------------------------------------------------------

enum class ReplayMode { Record, Replay };

/// Store rows: `{"key", "seq", "request", "response": {content, input_tokens,
/// output_tokens}}`, one per call, append-only. In replay mode the n-th request
/// with a given key receives the n-th recorded response for it (the last one
/// once exhausted); a key that was never recorded is a ReplayMiss.
class ReplayBackend final : public Backend {
public:
    ReplayBackend(std::filesystem::path store, ReplayMode mode, std::shared_ptr<Backend> inner = nullptr);

    ChatResponse complete(const ChatRequest& request) override;
    std::size_t network_calls() const override;
    ReplayMode mode() const noexcept { return mode_; }

private:
    std::filesystem::path store_;
    ReplayMode mode_;
    std::shared_ptr<Backend> inner_;
    std::mutex mu_;
    std::map<std::string, std::vector<ChatResponse>> recorded_;
    std::map<std::string, std::size_t> served_;
    std::size_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// Client: retries, ledger, budget, JSON repair
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
};

struct Budget {
    std::optional<std::size_t> max_calls;
    std::optional<std::int64_t> max_cost_micro_usd;
};

using JsonValidator = std::function<void(const json&)>;

/// Throws MalformedJson unless `j` is an object with a string member `key`.
void require_string_field(const json& j, const std::string& key);

inline constexpr std::string_view kJsonRepairInstruction =
    "Your previous reply was not the requested JSON object; reply again with valid JSON only.";

class LlmClient {
public:
    LlmClient(std::shared_ptr<Backend> backend, std::shared_ptr<Ledger> ledger, RetryPolicy retry = {},
              Budget budget = {});

    /// One ledger row per successful call. Transport errors are retried with
    /// exponential backoff; BudgetExceeded is thrown before a call that would
    /// start past the budget.
    ChatResponse complete(const ChatRequest& request);

    /// Re-asks up to `max_repairs` times on unparseable or invalid JSON, then
    /// throws JsonUnavailable.
    json complete_json(ChatRequest request, const JsonValidator& validate, int max_repairs = 3);

    Ledger& ledger() { return *ledger_; }
    const Ledger& ledger() const { return *ledger_; }
    Backend& backend() { return *backend_; }
    void set_budget(Budget budget) { budget_ = budget; }

private:
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<Ledger> ledger_;
    RetryPolicy retry_;
    Budget budget_;
};

}  // namespace flowgrad
