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
#include "flowgrad/forward.hpp"

#include <algorithm>

#include "flowgrad/error.hpp"

namespace flowgrad {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct StepOutcome {
    StepRecord record;
    bool failed = false;
};

StepOutcome execute_step(Runtime& rt, const WorkflowState& state, const StepSpec& step, const Sample& sample,
                         const std::string& previous_output, int iteration) {
    StepOutcome out;
    auto& record = out.record;
    record.step_id = step.step_id;
    record.iteration = iteration;
    record.input_text = render_envelope(sample.question, previous_output, step, sample.context.value_or(""));

    const auto* executor = state.find_executor(step.executor_name);
    if (executor == nullptr) {
        record.error = "UnresolvedExecutor(" + step.executor_name + ")";
        out.failed = true;
        return out;
    }

    try {
        if (step.tool_names.empty()) {
            ChatRequest request;
            request.model_id = rt.settings.executor.model_id;
            request.temperature = rt.settings.executor.temperature;
            request.max_output_tokens = rt.settings.executor.max_output_tokens;
            request.purpose = Purpose::Forward;
            request.messages.push_back({Role::System, executor->prompt});
            request.messages.push_back({Role::User, record.input_text});
            const auto response = rt.client.complete(request);
            record.output_text = response.content;
            record.token_usage = {response.input_tokens, response.output_tokens};
            record.wall_time_ms = response.latency.count();
        } else {
            auto result = run_tool_step(rt.client, rt.settings.executor, *executor, step.tool_names, rt.tools,
                                        record.input_text);
            record.output_text = std::move(result.text);
            record.tool_invocations = std::move(result.invocations);
            record.token_usage = {result.input_tokens, result.output_tokens};
            record.wall_time_ms = result.latency_ms;
            if (result.error == ToolStepError::RoundLimitExceeded) {
                record.flags.push_back("RoundLimitExceeded");
            } else if (result.error == ToolStepError::UnknownTool) {
                record.error = result.error_detail;
                out.failed = true;
            }
        }
    } catch (const TransportError& e) {
        record.error = std::string("TransportError: ") + e.what();
        out.failed = true;
    }
    return out;
}

}  // namespace

std::string render_envelope(std::string_view question, std::string_view previous_output, const StepSpec& step,
                            std::string_view context) {
    std::string out;
    out.reserve(question.size() + previous_output.size() + step.description.size() + 128);
    out += kEnvelopeStepHeader;
    out += "\nStep ";
    out += std::to_string(step.step_id);
    out += ": ";
    out += step.description;
    out += "\n\n";
    out += kEnvelopeQuestionHeader;
    out += "\n";
    out += question;
    out += "\n\n";
    if (!context.empty()) {
        out += kEnvelopeContextHeader;
        out += "\n";
        out += context;
        out += "\n\n";
    }
    out += kEnvelopePreviousHeader;
    out += "\n";
    out += previous_output;
    return out;
}

std::optional<std::string> parse_route_label(std::string_view output) {
    std::size_t pos = 0;
    while (pos <= output.size()) {
        auto end = output.find('\n', pos);
        if (end == std::string_view::npos)
            end = output.size();
        const auto line = trim(output.substr(pos, end - pos));
        if (!line.empty()) {
            static constexpr std::string_view kPrefix = "ROUTE:";
            if (line.substr(0, kPrefix.size()) != kPrefix)
                return std::nullopt;
            auto label = std::string(trim(line.substr(kPrefix.size())));
            if (label.empty())
                return std::nullopt;
            return label;
        }
        pos = end + 1;
    }
    return std::nullopt;
}

bool has_sentinel_line(std::string_view output, std::string_view sentinel) {
    std::size_t pos = 0;
    while (pos <= output.size()) {
        auto end = output.find('\n', pos);
        if (end == std::string_view::npos)
            end = output.size();
        if (trim(output.substr(pos, end - pos)) == sentinel)
            return true;
        pos = end + 1;
    }
    return false;
}

ExecutionTrace run_workflow(Runtime& rt, const WorkflowState& state, const Sample& sample) {
    ExecutionTrace trace;
    trace.sample_id = sample.id;
    std::string previous;

    std::size_t index = 0;
    while (index < state.sketch.size()) {
        const auto& step = state.sketch[index];
        std::size_t next = index + 1;

        const int iterations = std::holds_alternative<Loop>(step.control) ? std::get<Loop>(step.control).max_iterations
                                                                         : 1;
        for (int it = 1; it <= iterations; ++it) {
            auto outcome = execute_step(rt, state, step, sample, previous, it);
            if (outcome.failed) {
                trace.failed_step = step.step_id;
                trace.records.push_back(std::move(outcome.record));
                trace.final_output.clear();
                return trace;
            }
            previous = outcome.record.output_text;
            trace.records.push_back(std::move(outcome.record));
            if (iterations > 1 && has_sentinel_line(previous, rt.settings.loop_sentinel))
                break;
        }

        if (const auto* route = std::get_if<Route>(&step.control)) {
            const auto label = parse_route_label(previous);
            if (!label) {
                trace.warnings.push_back("RouteLabelUnparseable at step " + std::to_string(step.step_id));
            } else if (auto it = route->targets.find(*label); it == route->targets.end()) {
                trace.warnings.push_back("RouteLabelUnknown at step " + std::to_string(step.step_id) + ": " + *label);
            } else {
                for (std::size_t j = index + 1; j < state.sketch.size(); ++j) {
                    if (state.sketch[j].step_id == it->second) {
                        next = j;
                        break;
                    }
                }
            }
        }
        index = next;
    }
    trace.final_output = previous;
    return trace;
}

}  // namespace flowgrad
