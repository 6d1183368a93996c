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
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flowgrad/chat.hpp"
#include "flowgrad/json_util.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

class LlmClient;

struct ToolSpec {
    std::string name;
    std::string description;
    /// JSON schema for the `arguments` object.
    std::string parameter_schema;
};

class Tool {
public:
    virtual ~Tool() = default;
    virtual const ToolSpec& spec() const = 0;
    /// Returns the text appended to the conversation.
    virtual std::string invoke(const json& arguments) const = 0;
};

// ---------------------------------------------------------------------------
// Local corpus search
// ---------------------------------------------------------------------------

struct CorpusDoc {
    std::string doc_id;
    std::string title;
    std::string body;
};

struct SearchHit {
    std::string doc_id;
    std::string title;
    std::string snippet;
    double score = 0.0;
};

/// Lowercased alphanumeric runs; bytes >= 0x80 count as word characters.
std::vector<std::string> tokenize(std::string_view text);

/// Lexical index over title + body. Score of document d for query q:
///   sum over distinct query terms t of tf(t, d) * ln(1 + N / df(t)) / sqrt(|d|)
/// Documents scoring zero are omitted; ties go to the smaller doc_id.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<CorpusDoc> docs);

    /// JSONL rows `{doc_id, title, body}`.
    static Corpus load(const std::filesystem::path& path);

    /// Throws EmptyCorpus; k must be >= 1.
    std::vector<SearchHit> search_topk(std::string_view query, std::size_t k) const;

    std::size_t size() const noexcept { return docs_.size(); }
    const std::vector<CorpusDoc>& docs() const noexcept { return docs_; }

private:
    struct Indexed {
        std::map<std::string, int> tf;
        std::size_t length = 0;
    };
    std::vector<CorpusDoc> docs_;
    std::vector<Indexed> index_;
    std::map<std::string, int> df_;
};

/// `{"query": string, "k": integer}` over a Corpus.
class SearchTool final : public Tool {
public:
    SearchTool(std::string name, std::shared_ptr<const Corpus> corpus, std::size_t default_k = 5,
               std::size_t snippet_chars = 600);

    const ToolSpec& spec() const override { return spec_; }
    std::string invoke(const json& arguments) const override;

private:
    ToolSpec spec_;
    std::shared_ptr<const Corpus> corpus_;
    std::size_t default_k_;
    std::size_t snippet_chars_;
};

// ---------------------------------------------------------------------------
// Registry and tool-use protocol
// ---------------------------------------------------------------------------

/// Immutable after startup.
class ToolRegistry {
public:
    void add(std::shared_ptr<const Tool> tool);
    const Tool* find(const std::string& name) const;
    std::set<std::string> names() const;
    bool empty() const noexcept { return tools_.empty(); }

    /// "- name: description (arguments: schema)" lines, or "None".
    std::string describe() const;
    std::string describe(std::span<const std::string> subset) const;

private:
    std::map<std::string, std::shared_ptr<const Tool>> tools_;
};

inline constexpr int kMaxToolRounds = 4;

enum class ToolStepError { UnknownTool, RoundLimitExceeded };

struct ToolStepResult {
    std::string text;
    std::vector<ToolInvocation> invocations;
    int rounds = 0;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t latency_ms = 0;
    std::optional<ToolStepError> error;
    std::string error_detail;
};

/// The parsed tool call in a model reply, if any: a JSON object with a "tool"
/// member (fenced or bare).
std::optional<std::pair<std::string, json>> parse_tool_call(std::string_view reply);

/// System prompt for a tool step: the executor prompt plus the calling protocol.
std::string tool_system_prompt(const ExecutorSpec& executor, const ToolRegistry& registry,
                               std::span<const std::string> tools);

/// Runs up to kMaxToolRounds model rounds. Each round the model either emits a
/// fenced JSON tool call `{"tool": name, "arguments": {...}}` or a final answer.
/// Tool results are appended to the user message for the next round.
ToolStepResult run_tool_step(LlmClient& client, const ModelSettings& model, const ExecutorSpec& executor,
                             std::span<const std::string> tools, const ToolRegistry& registry,
                             const std::string& input_envelope);

}  // namespace flowgrad
