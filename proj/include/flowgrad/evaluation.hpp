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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowgrad/chat.hpp"

namespace flowgrad {

class LlmClient;
class PromptLibrary;

struct Sample {
    std::string id;
    std::string question;
    std::string answer;
    std::optional<std::string> context;

    bool operator==(const Sample&) const = default;
};

struct EvalResult {
    std::string metric_name;
    double score = 0.0;
    /// The loss rendered as text for meta prompts.
    std::string feedback;
};

/// Lowercase, ASCII punctuation removed, articles a/an/the dropped, whitespace
/// collapsed to single spaces.
std::string normalize_answer(std::string_view text);

std::vector<std::string> normalized_tokens(std::string_view text);

EvalResult exact_match(std::string_view prediction, std::string_view truth);
EvalResult token_f1(std::string_view prediction, std::string_view truth);

/// Fixed feedback template: metric, score, prediction, ground truth, and (for
/// string metrics) both normalized forms.
std::string render_feedback(std::string_view metric, double score, std::string_view prediction,
                            std::string_view truth, std::string_view detail = {});

/// JSONL rows `{"id", "question", "answer", "context"?}` in file order.
/// Throws ParseError (with the line number) and DuplicateId.
std::vector<Sample> load_dataset(const std::filesystem::path& path);

class Metric {
public:
    virtual ~Metric() = default;
    virtual std::string name() const = 0;
    virtual EvalResult score(const Sample& sample, std::string_view prediction) const = 0;
    /// Text describing the metric for meta prompts.
    virtual std::string info() const = 0;
};

class ExactMatchMetric final : public Metric {
public:
    std::string name() const override { return "em"; }
    EvalResult score(const Sample& sample, std::string_view prediction) const override;
    std::string info() const override;
};

class TokenF1Metric final : public Metric {
public:
    std::string name() const override { return "f1"; }
    EvalResult score(const Sample& sample, std::string_view prediction) const override;
    std::string info() const override;
};

/// LLM-as-judge scored through the backend. Not a default metric.
class JudgeMetric final : public Metric {
public:
    JudgeMetric(LlmClient& client, const PromptLibrary& prompts, ModelSettings model, std::string rubric);

    std::string name() const override { return "judge"; }
    EvalResult score(const Sample& sample, std::string_view prediction) const override;
    std::string info() const override;

private:
    LlmClient& client_;
    const PromptLibrary& prompts_;
    ModelSettings model_;
    std::string rubric_;
};

/// "em" or "f1"; "judge" needs a client and is built by the caller.
std::unique_ptr<Metric> make_metric(std::string_view name);

}  // namespace flowgrad
