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
#include "flowgrad/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flowgrad/backend.hpp"
#include "flowgrad/error.hpp"
#include "flowgrad/prompts.hpp"

namespace flowgrad {

namespace {

bool is_ascii_punct(unsigned char c) {
    return c < 0x80 && std::ispunct(c);
}

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string format_score(double score) {
    std::ostringstream out;
    out.precision(4);
    out << std::fixed << score;
    return out.str();
}

}  // namespace

std::vector<std::string> normalized_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && current != "a" && current != "an" && current != "the")
            tokens.push_back(current);
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_ascii_punct(c))
            continue;
        if (is_space(c)) {
            flush();
            continue;
        }
        current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
    flush();
    return tokens;
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    for (const auto& token : normalized_tokens(text)) {
        if (!out.empty())
            out.push_back(' ');
        out += token;
    }
    return out;
}

std::string render_feedback(std::string_view metric, double score, std::string_view prediction,
                            std::string_view truth, std::string_view detail) {
    std::string out = "Metric: " + std::string(metric) + "\nScore: " + format_score(score) +
                      "\nPrediction: " + std::string(prediction) + "\nGround truth: " + std::string(truth);
    if (!detail.empty())
        out += "\n" + std::string(detail);
    return out;
}

EvalResult exact_match(std::string_view prediction, std::string_view truth) {
    const auto p = normalize_answer(prediction);
    const auto t = normalize_answer(truth);
    const double score = p == t ? 1.0 : 0.0;
    const std::string detail = score == 1.0 ? "Normalized prediction matches the ground truth."
                                            : "Mismatch: normalized prediction \"" + p +
                                                  "\" differs from normalized ground truth \"" + t + "\".";
    return {"em", score, render_feedback("exact match", score, prediction, truth, detail)};
}

EvalResult token_f1(std::string_view prediction, std::string_view truth) {
    const auto p = normalized_tokens(prediction);
    const auto t = normalized_tokens(truth);
    double score = 0.0;
    if (p.empty() && t.empty()) {
        score = 1.0;
    } else if (!p.empty() && !t.empty()) {
        std::map<std::string, int> counts;
        for (const auto& tok : t)
            ++counts[tok];
        int common = 0;
        for (const auto& tok : p) {
            auto it = counts.find(tok);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++common;
            }
        }
        if (common > 0) {
            const double precision = static_cast<double>(common) / static_cast<double>(p.size());
            const double recall = static_cast<double>(common) / static_cast<double>(t.size());
            score = 2.0 * precision * recall / (precision + recall);
        }
    }
    std::string detail = "Normalized prediction: \"" + normalize_answer(prediction) +
                         "\"; normalized ground truth: \"" + normalize_answer(truth) + "\".";
    return {"f1", score, render_feedback("token F1", score, prediction, truth, detail)};
}

std::vector<Sample> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open dataset " + path.string());
    std::vector<Sample> samples;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        Sample sample;
        try {
            const auto j = json::parse(line);
            if (!j.is_object())
                throw ParseError(path.string(), lineno, "row is not an object");
            for (const char* key : {"id", "question", "answer"}) {
                if (!j.contains(key) || !j[key].is_string())
                    throw ParseError(path.string(), lineno, std::string("missing string field '") + key + "'");
            }
            sample.id = j["id"].get<std::string>();
            sample.question = j["question"].get<std::string>();
            sample.answer = j["answer"].get<std::string>();
            if (j.contains("context") && j["context"].is_string())
                sample.context = j["context"].get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        if (sample.question.empty())
            throw ParseError(path.string(), lineno, "empty question");
        if (!ids.insert(sample.id).second)
            throw DuplicateId(sample.id);
        samples.push_back(std::move(sample));
    }
    return samples;
}

EvalResult ExactMatchMetric::score(const Sample& sample, std::string_view prediction) const {
    return exact_match(prediction, sample.answer);
}

std::string ExactMatchMetric::info() const {
    return "Exact match (EM): 1 if the final output equals the ground truth after lowercasing, removing "
           "punctuation and articles (a, an, the), and collapsing whitespace; otherwise 0. The final step "
           "must output only the answer.";
}

EvalResult TokenF1Metric::score(const Sample& sample, std::string_view prediction) const {
    return token_f1(prediction, sample.answer);
}

std::string TokenF1Metric::info() const {
    return "Token F1: harmonic mean of token precision and recall between the normalized final output and "
           "the normalized ground truth (lowercased, punctuation and articles removed). Extra words lower "
           "precision; missing words lower recall.";
}

JudgeMetric::JudgeMetric(LlmClient& client, const PromptLibrary& prompts, ModelSettings model, std::string rubric)
    : client_(client), prompts_(prompts), model_(std::move(model)), rubric_(std::move(rubric)) {}

EvalResult JudgeMetric::score(const Sample& sample, std::string_view prediction) const {
    const auto& pair = prompts_.get(prompt_names::kJudge);
    ChatRequest request;
    request.model_id = model_.model_id;
    request.temperature = model_.temperature;
    request.max_output_tokens = model_.max_output_tokens;
    request.purpose = Purpose::Judge;
    request.messages.push_back({Role::System, pair.system});
    request.messages.push_back({Role::User, render_template(pair.user, {{"question", sample.question},
                                                                        {"ground_truth", sample.answer},
                                                                        {"prediction", std::string(prediction)},
                                                                        {"rubric", rubric_}})});
    const auto j = client_.complete_json(request, [](const json& v) {
        if (!v.is_object() || !v.contains("score") || !v["score"].is_number())
            throw MalformedJson("expected numeric 'score'", v.dump());
    });
    const double score = std::clamp(j["score"].get<double>(), 0.0, 1.0);
    const auto feedback = j.value("feedback", std::string());
    return {"judge", score, render_feedback("judge", score, prediction, sample.answer, feedback)};
}

std::string JudgeMetric::info() const {
    return "LLM judge score in [0, 1] under this rubric: " + rubric_;
}

std::unique_ptr<Metric> make_metric(std::string_view name) {
    if (name == "em")
        return std::make_unique<ExactMatchMetric>();
    if (name == "f1")
        return std::make_unique<TokenF1Metric>();
    throw ConfigError("unknown metric: " + std::string(name));
}

}  // namespace flowgrad
