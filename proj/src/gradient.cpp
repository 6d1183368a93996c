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
#include "flowgrad/gradient.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "flowgrad/error.hpp"

namespace flowgrad {

namespace {

std::string join(std::span<const std::string> items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0)
            out += sep;
        out += items[i];
    }
    return out;
}

std::string record_output(const StepRecord& record) {
    if (record.error)
        return "[step failed: " + *record.error + "]";
    return record.output_text;
}

/// Index of the last record of `step` in the trace.
std::optional<std::size_t> last_record_index(const ExecutionTrace& trace, StepId step) {
    for (std::size_t i = trace.records.size(); i-- > 0;) {
        if (trace.records[i].step_id == step)
            return i;
    }
    return std::nullopt;
}

StepId gradient_step(const TextualGradient& g) {
    if (const auto* s = std::get_if<StepScope>(&g.scope))
        return s->step_id;
    throw std::invalid_argument("expected a step-scoped gradient");
}

TextualGradient run_text_gradient(Runtime& rt, ChatRequest request, GradientScope scope, const std::string& sample_id,
                                  bool with_reasoning) {
    json j;
    try {
        j = rt.client.complete_json(
            std::move(request),
            [&](const json& v) {
                require_string_field(v, "text_gradient");
                if (v["text_gradient"].get<std::string>().empty())
                    throw MalformedJson("empty text_gradient", v.dump());
            },
            rt.settings.json_repairs);
    } catch (const JsonUnavailable& e) {
        throw GradientUnavailable(std::string("gradient unavailable for sample ") + sample_id + ": " + e.what());
    }
    TextualGradient g;
    g.scope = scope;
    g.sample_id = sample_id;
    g.text = cap_gradient_text(j["text_gradient"].get<std::string>(), rt.settings.gradient_char_cap);
    if (with_reasoning && j.contains("reasoning") && j["reasoning"].is_string())
        g.reasoning = cap_gradient_text(j["reasoning"].get<std::string>(), rt.settings.gradient_char_cap);
    return g;
}

TextualGradient synthesized(StepId step, const std::string& sample_id, std::string text) {
    TextualGradient g;
    g.scope = StepScope{step};
    g.text = std::move(text);
    g.sample_id = sample_id;
    g.synthesized = true;
    return g;
}

const ExecutorSpec& executor_for(const WorkflowState& state, const StepSpec& step) {
    const auto* exec = state.find_executor(step.executor_name);
    if (exec == nullptr)
        throw InvalidState("step " + std::to_string(step.step_id) + " has unresolved executor " + step.executor_name);
    return *exec;
}

const StepSpec& step_of(const WorkflowState& state, StepId id) {
    const auto* step = state.find_step(id);
    if (step == nullptr)
        throw InvalidState("no step " + std::to_string(id) + " in sketch");
    return *step;
}

TemplateValues sample_values(const Runtime& rt, const GradientInputs& in) {
    return {{"question", in.sample.question},
            {"ground_truth", in.sample.answer},
            {"evaluation_result", in.eval.feedback},
            {"metrics_info", rt.settings.metrics_info}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string cap_gradient_text(std::string text, std::size_t cap) {
    if (text.size() <= cap)
        return text;
    const auto keep = cap > kTruncationMarker.size() ? cap - kTruncationMarker.size() : 0;
    return utf8_truncate(text, keep) + std::string(kTruncationMarker);
}

std::string render_tool_list(std::span<const std::string> tools) {
    return tools.empty() ? "None" : join(tools, ", ");
}

std::string render_workflow_structure(const WorkflowState& state) {
    return render_sketch_table(state);
}

std::string render_agents(const WorkflowState& state) {
    std::string out;
    for (const auto& [name, exec] : state.executors) {
        out += "- **" + name + "** (" + to_string(exec.kind) + ", tools: " + render_tool_list(exec.tool_names) +
               "): " + exec.description + "\n";
    }
    return out.empty() ? "None" : out.substr(0, out.size() - 1);
}

std::string render_agents_with_prompts(const WorkflowState& state) {
    std::string out;
    for (const auto& step : state.sketch) {
        const auto* exec = state.find_executor(step.executor_name);
        if (exec == nullptr)
            continue;
        if (out.find("### " + exec->name + "\n") != std::string::npos)
            continue;
        out += "### " + exec->name + "\n**Type**: " + to_string(exec->kind) +
               "\n**Tools**: " + render_tool_list(exec->tool_names) + "\n**Prompt**:\n```\n" + exec->prompt +
               "\n```\n\n";
    }
    return out;
}

std::string render_trace(const WorkflowState& state, const ExecutionTrace& trace) {
    std::ostringstream out;
    for (const auto& record : trace.records) {
        const auto* step = state.find_step(record.step_id);
        out << "### Step " << record.step_id;
        if (record.iteration > 1)
            out << " (iteration " << record.iteration << ")";
        if (step != nullptr)
            out << ": " << step->description << "\n**Executor**: " << step->executor_name;
        out << "\n";
        for (const auto& inv : record.tool_invocations) {
            out << "**Tool call**: " << inv.tool << " " << compact_dump(inv.arguments) << "\n"
                << "**Tool result**:\n" << inv.result << "\n";
        }
        for (const auto& flag : record.flags)
            out << "**Flag**: " << flag << "\n";
        out << "**Output**:\n" << record_output(record) << "\n\n";
    }
    for (const auto& warning : trace.warnings)
        out << "**Warning**: " << warning << "\n";
    if (trace.failed_step)
        out << "**Execution stopped**: step " << *trace.failed_step << " failed\n";
    out << "**Final output**: " << trace.final_output;
    return out.str();
}

std::string render_aggregated_gradients(std::span<const TextualGradient> gradients) {
    std::string out;
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        const auto& g = gradients[i];
        if (i > 0)
            out += "\n\n";
        out += "### Sample " + std::to_string(i + 1);
        if (!g.sample_id.empty())
            out += " (" + g.sample_id + ")";
        if (const auto* s = std::get_if<StepScope>(&g.scope))
            out += ", step " + std::to_string(s->step_id);
        out += "\n";
        if (g.reasoning)
            out += "**Reasoning**: " + *g.reasoning + "\n**Gradient**: ";
        out += g.text;
    }
    return out;
}

std::string with_sketch(const WorkflowState& state, std::string user_prompt) {
    return "## Workflow Sketch\n" + render_sketch_table(state) + "\n" + user_prompt;
}

const StepRecord* last_record(const ExecutionTrace& trace, StepId step) {
    const auto i = last_record_index(trace, step);
    return i ? &trace.records[*i] : nullptr;
}

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

ChatRequest grad_loss_request(const Runtime& rt, const GradientInputs& in) {
    if (in.trace.records.empty())
        throw std::invalid_argument("grad_loss: empty trace");
    const auto& record = in.trace.records.back();
    const auto& step = step_of(in.state, record.step_id);
    const auto& exec = executor_for(in.state, step);
    auto values = sample_values(rt, in);
    values["step_id"] = std::to_string(step.step_id);
    values["step_description"] = step.description;
    values["executor_name"] = exec.name;
    values["executor_tools"] = render_tool_list(step.tool_names);
    values["step_input"] = record.input_text;
    values["step_output"] = record_output(record);
    const auto& pair = rt.prompts.get(prompt_names::kGradLoss);
    return rt.meta_request(Purpose::GradLoss, pair, with_sketch(in.state, render_template(pair.user, values)));
}

ChatRequest grad_backprop_request(const Runtime& rt, const GradientInputs& in, StepId k,
                                  const TextualGradient& next_gradient) {
    const auto index = last_record_index(in.trace, k);
    if (!index)
        throw std::invalid_argument("grad_backprop: step " + std::to_string(k) + " did not run");
    const StepId next_id = gradient_step(next_gradient);
    const auto next_index = last_record_index(in.trace, next_id);
    if (next_id <= k || !next_index || *next_index <= *index)
        throw std::invalid_argument("grad_backprop: next gradient must belong to a later executed step");

    const auto& record = in.trace.records[*index];
    const auto& step = step_of(in.state, k);
    const auto& next_step = step_of(in.state, next_id);
    const auto& exec = executor_for(in.state, step);
    const StepId prev = *index > 0 ? in.trace.records[*index - 1].step_id : 0;

    TemplateValues values{{"question", in.sample.question},
                          {"prev_step", std::to_string(prev)},
                          {"step_id", std::to_string(k)},
                          {"step_description", step.description},
                          {"executor_name", exec.name},
                          {"executor_tools", render_tool_list(step.tool_names)},
                          {"step_input", record.input_text},
                          {"step_output", record_output(record)},
                          {"next_step_id", std::to_string(next_id)},
                          {"next_step_description", next_step.description},
                          {"next_step_output", record_output(in.trace.records[*next_index])},
                          {"next_gradient", next_gradient.text}};
    const auto& pair = rt.prompts.get(prompt_names::kGradBackprop);
    return rt.meta_request(Purpose::GradCall, pair, with_sketch(in.state, render_template(pair.user, values)));
}

ChatRequest grad_workflow_request(const Runtime& rt, const GradientInputs& in) {
    auto values = sample_values(rt, in);
    values["available_tools"] = rt.tools.describe();
    values["workflow_structure"] = render_workflow_structure(in.state);
    values["execution_trace"] = render_trace(in.state, in.trace);
    const auto& pair = rt.prompts.get(prompt_names::kGradWorkflow);
    return rt.meta_request(Purpose::GradWorkflow, pair, render_template(pair.user, values));
}

// ---------------------------------------------------------------------------
// Gradient operations
// ---------------------------------------------------------------------------

TextualGradient grad_loss(Runtime& rt, const GradientInputs& in) {
    auto request = grad_loss_request(rt, in);
    return run_text_gradient(rt, std::move(request), StepScope{in.trace.records.back().step_id}, in.sample.id, false);
}

TextualGradient grad_backprop(Runtime& rt, const GradientInputs& in, StepId k, const TextualGradient& next_gradient) {
    auto request = grad_backprop_request(rt, in, k, next_gradient);
    return run_text_gradient(rt, std::move(request), StepScope{k}, in.sample.id, false);
}

TextualGradient grad_workflow(Runtime& rt, const GradientInputs& in) {
    auto request = grad_workflow_request(rt, in);
    return run_text_gradient(rt, std::move(request), WorkflowScope{}, in.sample.id, true);
}

TextualGradient single_layer_gradient(Runtime& rt, const GradientInputs& in) {
    auto values = sample_values(rt, in);
    values["available_tools"] = rt.tools.describe();
    values["workflow_with_prompts"] = render_workflow_structure(in.state) + "\n" + render_agents_with_prompts(in.state);
    values["execution_trace"] = render_trace(in.state, in.trace);
    const auto& pair = rt.prompts.get(prompt_names::kSingleLayerGradient);
    auto request = rt.meta_request(Purpose::GradLoss, pair, render_template(pair.user, values));
    return run_text_gradient(rt, std::move(request), WorkflowScope{}, in.sample.id, false);
}

std::map<StepId, TextualGradient> backward(Runtime& rt, const GradientInputs& in, BackwardMode mode) {
    std::map<StepId, TextualGradient> out;
    if (in.trace.records.empty()) {
        for (const auto& step : in.state.sketch)
            out[step.step_id] = synthesized(step.step_id, in.sample.id, "not executed: workflow produced no records");
        return out;
    }

    // Executed steps in execution order (last iteration of loops counts).
    std::vector<StepId> executed;
    for (const auto& record : in.trace.records) {
        if (std::find(executed.begin(), executed.end(), record.step_id) == executed.end())
            executed.push_back(record.step_id);
    }
    std::sort(executed.begin(), executed.end(), [&](StepId a, StepId b) {
        return *last_record_index(in.trace, a) < *last_record_index(in.trace, b);
    });

    for (const auto& step : in.state.sketch) {
        if (std::find(executed.begin(), executed.end(), step.step_id) != executed.end())
            continue;
        const auto reason = in.trace.failed_step
                                ? "not executed: upstream failure at step " + std::to_string(*in.trace.failed_step)
                                : std::string("not executed: skipped by route");
        out[step.step_id] = synthesized(step.step_id, in.sample.id, reason);
    }

    if (mode == BackwardMode::Joint) {
        std::string ids;
        for (auto id : executed)
            ids += (ids.empty() ? "" : ", ") + std::to_string(id);
        auto values = sample_values(rt, in);
        values["step_ids"] = ids;
        values["workflow_structure"] = render_workflow_structure(in.state);
        values["execution_trace"] = render_trace(in.state, in.trace);
        const auto& pair = rt.prompts.get(prompt_names::kJointGradient);
        auto request = rt.meta_request(Purpose::GradLoss, pair, render_template(pair.user, values));
        const std::set<StepId> wanted(executed.begin(), executed.end());
        json j;
        try {
            j = rt.client.complete_json(
                std::move(request),
                [&](const json& v) {
                    if (!v.is_object() || !v.contains("gradients") || !v["gradients"].is_array())
                        throw MalformedJson("expected a 'gradients' array", v.dump());
                    std::set<StepId> seen;
                    for (const auto& g : v["gradients"]) {
                        if (!g.is_object() || !g.contains("step_id") || !g["step_id"].is_number_integer() ||
                            !g.contains("text_gradient") || !g["text_gradient"].is_string())
                            throw MalformedJson("bad gradient entry", v.dump());
                        seen.insert(g["step_id"].get<StepId>());
                    }
                    for (auto id : wanted) {
                        if (!seen.count(id))
                            throw MalformedJson("missing gradient for step " + std::to_string(id), v.dump());
                    }
                },
                rt.settings.json_repairs);
        } catch (const JsonUnavailable& e) {
            throw GradientUnavailable(std::string("gradient unavailable for sample ") + in.sample.id + ": " +
                                      e.what());
        }
        for (const auto& g : j["gradients"]) {
            const auto id = g["step_id"].get<StepId>();
            if (!wanted.count(id) || out.count(id))
                continue;
            TextualGradient tg;
            tg.scope = StepScope{id};
            tg.sample_id = in.sample.id;
            tg.text = cap_gradient_text(g["text_gradient"].get<std::string>(), rt.settings.gradient_char_cap);
            out[id] = std::move(tg);
        }
        return out;
    }

    // Layerwise: loss at the last executed step, then the chain rule back.
    auto g_last = grad_loss(rt, in);
    const StepId last = gradient_step(g_last);
    out[last] = g_last;
    for (std::size_t i = executed.size() - 1; i-- > 0;) {
        const StepId k = executed[i];
        const StepId consumer = executed[i + 1];
        if (consumer <= k) {
            out[k] = synthesized(k, in.sample.id, "not attributed: consumer step precedes this step");
            continue;
        }
        out[k] = grad_backprop(rt, in, k, out.at(consumer));
    }
    return out;
}

}  // namespace flowgrad
