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
#include "flowgrad/tools.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowgrad/backend.hpp"
#include "flowgrad/error.hpp"

namespace flowgrad {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        out.push_back(std::move(current));
    return out;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<CorpusDoc> docs) : docs_(std::move(docs)) {
    std::set<std::string> ids;
    index_.reserve(docs_.size());
    for (const auto& doc : docs_) {
        if (!ids.insert(doc.doc_id).second)
            throw DuplicateId(doc.doc_id);
        Indexed entry;
        auto tokens = tokenize(doc.title);
        auto body = tokenize(doc.body);
        tokens.insert(tokens.end(), body.begin(), body.end());
        entry.length = tokens.size();
        for (const auto& t : tokens)
            ++entry.tf[t];
        for (const auto& [term, count] : entry.tf)
            ++df_[term];
        index_.push_back(std::move(entry));
    }
}

Corpus Corpus::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open corpus " + path.string());
    std::vector<CorpusDoc> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = json::parse(line);
            docs.push_back({j.at("doc_id").get<std::string>(), j.value("title", std::string()),
                            j.at("body").get<std::string>()});
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    return Corpus(std::move(docs));
}

std::vector<SearchHit> Corpus::search_topk(std::string_view query, std::size_t k) const {
    if (docs_.empty())
        throw EmptyCorpus();
    if (k == 0)
        throw Error("search_topk: k must be >= 1");

    auto terms = tokenize(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const auto n = static_cast<double>(docs_.size());
    std::vector<SearchHit> hits;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        const auto& entry = index_[i];
        double score = 0.0;
        for (const auto& term : terms) {
            auto tf = entry.tf.find(term);
            if (tf == entry.tf.end())
                continue;
            const double idf = std::log(1.0 + n / df_.at(term));
            score += tf->second * idf;
        }
        if (score <= 0.0)
            continue;
        score /= std::sqrt(static_cast<double>(std::max<std::size_t>(entry.length, 1)));
        hits.push_back({docs_[i].doc_id, docs_[i].title, docs_[i].body, score});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > k)
        hits.resize(k);
    return hits;
}

// ---------------------------------------------------------------------------
// SearchTool
// ---------------------------------------------------------------------------

SearchTool::SearchTool(std::string name, std::shared_ptr<const Corpus> corpus, std::size_t default_k,
                       std::size_t snippet_chars)
    : corpus_(std::move(corpus)), default_k_(default_k), snippet_chars_(snippet_chars) {
    spec_.name = std::move(name);
    spec_.description = "Search the document corpus and return the top-k passages ranked by lexical relevance.";
    spec_.parameter_schema =
        R"({"type": "object", "properties": {"query": {"type": "string"}, "k": {"type": "integer", "minimum": 1}}, "required": ["query"]})";
}

std::string SearchTool::invoke(const json& arguments) const {
    if (!arguments.is_object() || !arguments.contains("query") || !arguments["query"].is_string())
        return "Error: missing string argument 'query'.";
    const auto query = arguments["query"].get<std::string>();
    std::size_t k = default_k_;
    if (arguments.contains("k") && arguments["k"].is_number_integer())
        k = static_cast<std::size_t>(std::clamp<std::int64_t>(arguments["k"].get<std::int64_t>(), 1, 20));

    const auto hits = corpus_->search_topk(query, k);
    if (hits.empty())
        return "No results found for query: " + query;
    std::ostringstream out;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i > 0)
            out << "\n\n";
        out << "Passage " << (i + 1) << " [" << hits[i].doc_id << "] " << hits[i].title << "\n"
            << utf8_truncate(hits[i].snippet, snippet_chars_);
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void ToolRegistry::add(std::shared_ptr<const Tool> tool) {
    const auto name = tool->spec().name;
    if (!is_valid_identifier(name))
        throw ConfigError("invalid tool name: " + name);
    if (!tools_.emplace(name, std::move(tool)).second)
        throw ConfigError("duplicate tool name: " + name);
}

const Tool* ToolRegistry::find(const std::string& name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : it->second.get();
}

std::set<std::string> ToolRegistry::names() const {
    std::set<std::string> out;
    for (const auto& [name, tool] : tools_)
        out.insert(name);
    return out;
}

std::string ToolRegistry::describe() const {
    std::vector<std::string> all;
    for (const auto& [name, tool] : tools_)
        all.push_back(name);
    return describe(all);
}

std::string ToolRegistry::describe(std::span<const std::string> subset) const {
    std::string out;
    for (const auto& name : subset) {
        const auto* tool = find(name);
        if (tool == nullptr)
            continue;
        out += "- " + name + ": " + tool->spec().description + " (arguments: " + tool->spec().parameter_schema +
               ")\n";
    }
    return out.empty() ? "None" : out.substr(0, out.size() - 1);
}

// ---------------------------------------------------------------------------
// Tool-use protocol
// ---------------------------------------------------------------------------

std::optional<std::pair<std::string, json>> parse_tool_call(std::string_view reply) {
    json value;
    try {
        value = extract_json(reply);
    } catch (const JsonExtractionError&) {
        return std::nullopt;
    }
    if (!value.is_object() || !value.contains("tool") || !value["tool"].is_string())
        return std::nullopt;
    json args = value.value("arguments", json::object());
    return std::make_pair(value["tool"].get<std::string>(), std::move(args));
}

std::string tool_system_prompt(const ExecutorSpec& executor, const ToolRegistry& registry,
                               std::span<const std::string> tools) {
    std::string out = executor.prompt;
    out += "\n\n## Tool Use Protocol\nYou can call these tools:\n";
    out += registry.describe(tools);
    out += "\n\nTo call a tool, reply with only a fenced JSON block:\n```json\n"
           "{\"tool\": \"<tool name>\", \"arguments\": {...}}\n```\n"
           "Tool results are appended to your input under \"## Tool Results\". "
           "When you have what you need, reply with your final answer as plain text (no tool call). "
           "You have at most " +
           std::to_string(kMaxToolRounds) + " replies in total.";
    return out;
}

ToolStepResult run_tool_step(LlmClient& client, const ModelSettings& model, const ExecutorSpec& executor,
                             std::span<const std::string> tools, const ToolRegistry& registry,
                             const std::string& input_envelope) {
    ToolStepResult result;
    const auto system = tool_system_prompt(executor, registry, tools);
    std::string tool_log;

    for (int round = 1; round <= kMaxToolRounds; ++round) {
        ChatRequest request;
        request.model_id = model.model_id;
        request.temperature = model.temperature;
        request.max_output_tokens = model.max_output_tokens;
        request.purpose = Purpose::Forward;
        request.messages.push_back({Role::System, system});
        request.messages.push_back(
            {Role::User, tool_log.empty() ? input_envelope : input_envelope + "\n\n## Tool Results\n" + tool_log});

        auto response = client.complete(request);
        result.rounds = round;
        result.input_tokens += response.input_tokens;
        result.output_tokens += response.output_tokens;
        result.latency_ms += response.latency.count();
        result.text = response.content;

        auto call = parse_tool_call(response.content);
        if (!call)
            return result;
        if (round == kMaxToolRounds) {
            result.error = ToolStepError::RoundLimitExceeded;
            result.error_detail = "model still calling tools after " + std::to_string(kMaxToolRounds) + " rounds";
            return result;
        }

        auto& [name, args] = *call;
        const bool allowed = std::find(tools.begin(), tools.end(), name) != tools.end();
        const Tool* tool = allowed ? registry.find(name) : nullptr;
        if (tool == nullptr) {
            result.invocations.push_back({name, args, "UnknownTool: " + name, true});
            result.error = ToolStepError::UnknownTool;
            result.error_detail = "UnknownTool: " + name;
            return result;
        }

        ToolInvocation invocation{name, args, {}, false};
        try {
            invocation.result = tool->invoke(args);
        } catch (const Error& e) {
            invocation.result = std::string("Error: ") + e.what();
            invocation.error = true;
        }
        tool_log += "### Call " + std::to_string(result.invocations.size() + 1) + ": " + name + " " +
                    compact_dump(args) + "\n" + invocation.result + "\n\n";
        result.invocations.push_back(std::move(invocation));
    }
    return result;
}

}  // namespace flowgrad
