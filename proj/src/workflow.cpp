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
#include "flowgrad/workflow.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "flowgrad/error.hpp"

namespace flowgrad {

const ExecutorSpec* WorkflowState::find_executor(const std::string& name) const {
    auto it = executors.find(name);
    return it == executors.end() ? nullptr : &it->second;
}

const StepSpec* WorkflowState::find_step(StepId id) const {
    for (const auto& step : sketch) {
        if (step.step_id == id)
            return &step;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string to_string(ViolationCode code) {
    switch (code) {
    case ViolationCode::EmptySketch: return "EmptySketch";
    case ViolationCode::TooManySteps: return "TooManySteps";
    case ViolationCode::NonContiguousStepIds: return "NonContiguousStepIds";
    case ViolationCode::UnresolvedExecutor: return "UnresolvedExecutor";
    case ViolationCode::ExecutorKeyMismatch: return "ExecutorKeyMismatch";
    case ViolationCode::InvalidExecutorName: return "InvalidExecutorName";
    case ViolationCode::EmptyPrompt: return "EmptyPrompt";
    case ViolationCode::ExecutorKindMismatch: return "ExecutorKindMismatch";
    case ViolationCode::StepToolKindMismatch: return "StepToolKindMismatch";
    case ViolationCode::UnregisteredTool: return "UnregisteredTool";
    case ViolationCode::RouteTargetMissing: return "RouteTargetMissing";
    case ViolationCode::RouteTargetNotForward: return "RouteTargetNotForward";
    case ViolationCode::LoopIterationsOutOfRange: return "LoopIterationsOutOfRange";
    }
    return "Unknown";
}

std::string Violation::str() const {
    return to_string(code) + "(" + subject + ")";
}

bool is_valid_identifier(std::string_view name) {
    if (name.empty())
        return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

std::vector<Violation> validate_state(const WorkflowState& state,
                                      const ValidationLimits& limits,
                                      const std::set<std::string>* registered_tools) {
    std::vector<Violation> out;
    auto add = [&out](ViolationCode code, std::string subject) {
        out.push_back({code, std::move(subject)});
    };

    if (state.sketch.empty())
        add(ViolationCode::EmptySketch, "");
    if (state.sketch.size() > limits.max_steps)
        add(ViolationCode::TooManySteps, std::to_string(state.sketch.size()));

    for (const auto& [key, exec] : state.executors) {
        if (key != exec.name)
            add(ViolationCode::ExecutorKeyMismatch, key);
        if (!is_valid_identifier(exec.name))
            add(ViolationCode::InvalidExecutorName, exec.name);
        if (exec.prompt.empty())
            add(ViolationCode::EmptyPrompt, exec.name);
        if ((exec.kind == ExecutorKind::Tool) != !exec.tool_names.empty())
            add(ViolationCode::ExecutorKindMismatch, exec.name);
    }

    for (std::size_t i = 0; i < state.sketch.size(); ++i) {
        const auto& step = state.sketch[i];
        const auto sid = std::to_string(step.step_id);
        if (step.step_id != static_cast<StepId>(i + 1))
            add(ViolationCode::NonContiguousStepIds, sid);

        const auto* exec = state.find_executor(step.executor_name);
        if (exec == nullptr) {
            add(ViolationCode::UnresolvedExecutor, step.executor_name);
        } else if ((exec->kind == ExecutorKind::Tool) != !step.tool_names.empty()) {
            add(ViolationCode::StepToolKindMismatch, sid);
        }

        if (registered_tools != nullptr) {
            for (const auto& tool : step.tool_names) {
                if (!registered_tools->contains(tool))
                    add(ViolationCode::UnregisteredTool, tool);
            }
        }

        if (const auto* route = std::get_if<Route>(&step.control)) {
            for (const auto& [label, target] : route->targets) {
                if (target < 1 || target > static_cast<StepId>(state.sketch.size()))
                    add(ViolationCode::RouteTargetMissing, sid + ":" + label);
                else if (target <= step.step_id)
                    add(ViolationCode::RouteTargetNotForward, sid + ":" + label);
            }
        } else if (const auto* loop = std::get_if<Loop>(&step.control)) {
            if (loop->max_iterations < 1 || loop->max_iterations > limits.max_loop_iterations)
                add(ViolationCode::LoopIterationsOutOfRange, sid);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Diff
// ---------------------------------------------------------------------------

bool SketchDiff::empty() const {
    if (!removed.empty() || !added.empty() || reordered)
        return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto* carried = std::get_if<CarriedStep>(&entries[i]);
        if (carried == nullptr)
            return false;
        CarriedStep identity;
        identity.from = static_cast<StepId>(i + 1);
        if (*carried != identity)
            return false;
    }
    return true;
}

namespace {

void require_valid(const WorkflowState& state, const char* which) {
    // Diff inputs only need structural validity; prompt limits are irrelevant here.
    ValidationLimits limits{.max_steps = std::numeric_limits<std::size_t>::max(),
                            .max_loop_iterations = std::numeric_limits<int>::max()};
    auto violations = validate_state(state, limits);
    if (!violations.empty())
        throw InvalidState(std::string(which) + " state invalid: " + violations.front().str());
}

template <typename T>
void push_unique(std::vector<T>& v, const T& value) {
    if (std::find(v.begin(), v.end(), value) == v.end())
        v.push_back(value);
}

}  // namespace

SketchDiff diff_sketch(const WorkflowState& before, const WorkflowState& after) {
    require_valid(before, "before");
    require_valid(after, "after");

    SketchDiff diff;
    std::vector<bool> matched(before.sketch.size(), false);
    StepId last_from = 0;

    for (const auto& step : after.sketch) {
        std::optional<std::size_t> source;
        for (std::size_t i = 0; i < before.sketch.size(); ++i) {
            if (!matched[i] && before.sketch[i].executor_name == step.executor_name) {
                source = i;
                break;
            }
        }

        if (before.executors.contains(step.executor_name))
            push_unique(diff.reused_executors, step.executor_name);
        else
            push_unique(diff.new_executors, step.executor_name);

        if (!source) {
            diff.entries.emplace_back(AddedStep{step});
            diff.added.push_back(step.step_id);
            continue;
        }

        matched[*source] = true;
        const auto& old = before.sketch[*source];
        CarriedStep carried;
        carried.from = old.step_id;
        if (old.description != step.description)
            carried.description = step.description;
        if (old.tool_names != step.tool_names)
            carried.tool_names = step.tool_names;
        if (old.control != step.control)
            carried.control = step.control;
        if (old.origin != step.origin)
            carried.origin = step.origin;
        if (old.generation_guideline != step.generation_guideline)
            carried.generation_guideline = step.generation_guideline;
        if (old.step_id < last_from)
            diff.reordered = true;
        last_from = old.step_id;
        diff.entries.emplace_back(std::move(carried));
    }

    for (std::size_t i = 0; i < before.sketch.size(); ++i) {
        if (!matched[i])
            diff.removed.push_back(before.sketch[i].step_id);
    }
    return diff;
}

Sketch apply_diff(const SketchDiff& diff, const Sketch& before) {
    Sketch out;
    out.reserve(diff.entries.size());
    for (const auto& entry : diff.entries) {
        StepSpec step;
        if (const auto* added = std::get_if<AddedStep>(&entry)) {
            step = added->spec;
        } else {
            const auto& carried = std::get<CarriedStep>(entry);
            auto it = std::find_if(before.begin(), before.end(),
                                   [&](const StepSpec& s) { return s.step_id == carried.from; });
            if (it == before.end())
                throw InvalidState("diff references missing step " + std::to_string(carried.from));
            step = *it;
            if (carried.description)
                step.description = *carried.description;
            if (carried.tool_names)
                step.tool_names = *carried.tool_names;
            if (carried.control)
                step.control = *carried.control;
            if (carried.origin)
                step.origin = *carried.origin;
            if (carried.generation_guideline)
                step.generation_guideline = *carried.generation_guideline;
        }
        step.step_id = static_cast<StepId>(out.size() + 1);
        out.push_back(std::move(step));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string to_string(ExecutorKind kind) {
    return kind == ExecutorKind::Tool ? "ToolExecutor" : "LLMExecutor";
}

ExecutorKind executor_kind_from_string(std::string_view s) {
    if (s == "ToolExecutor" || s == "Tool" || s == "tool")
        return ExecutorKind::Tool;
    if (s == "LLMExecutor" || s == "LLM" || s == "llm")
        return ExecutorKind::LLM;
    throw InvalidState("unknown executor type: " + std::string(s));
}

json to_json(const Control& control) {
    return std::visit(
        [](const auto& c) -> json {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Sequential>) {
                return {{"kind", "sequential"}};
            } else if constexpr (std::is_same_v<T, Route>) {
                json targets = json::object();
                for (const auto& [label, target] : c.targets)
                    targets[label] = target;
                return {{"kind", "route"}, {"routes", targets}};
            } else {
                return {{"kind", "loop"}, {"max_iterations", c.max_iterations}};
            }
        },
        control);
}

Control control_from_json(const json& j) {
    if (j.is_null())
        return Sequential{};
    const auto kind = j.value("kind", std::string("sequential"));
    if (kind == "sequential")
        return Sequential{};
    if (kind == "route") {
        Route route;
        for (const auto& [label, target] : j.at("routes").items())
            route.targets[label] = target.get<StepId>();
        return route;
    }
    if (kind == "loop")
        return Loop{j.at("max_iterations").get<int>()};
    throw InvalidState("unknown control kind: " + kind);
}

json to_json(const StepSpec& step) {
    return {
        {"step_id", step.step_id},
        {"description", step.description},
        {"tools", step.tool_names},
        {"executor_type", step.origin == ExecutorOrigin::New ? "new" : "reuse"},
        {"executor_name", step.executor_name},
        {"generation_guideline", step.generation_guideline},
        {"control", to_json(step.control)},
    };
}

StepSpec step_from_json(const json& j) {
    StepSpec step;
    step.step_id = j.at("step_id").get<StepId>();
    step.description = j.at("description").get<std::string>();
    step.tool_names = j.value("tools", std::vector<std::string>{});
    step.executor_name = j.at("executor_name").get<std::string>();
    const auto origin = j.value("executor_type", std::string("reuse"));
    if (origin != "reuse" && origin != "new")
        throw InvalidState("executor_type must be reuse or new, got " + origin);
    step.origin = origin == "new" ? ExecutorOrigin::New : ExecutorOrigin::Reuse;
    step.generation_guideline = j.value("generation_guideline", std::string());
    step.control = control_from_json(j.value("control", json()));
    return step;
}

json to_json(const ExecutorSpec& exec) {
    return {
        {"name", exec.name},
        {"type", to_string(exec.kind)},
        {"description", exec.description},
        {"prompt", exec.prompt},
        {"tools", exec.tool_names},
        {"version", exec.version},
    };
}

ExecutorSpec executor_from_json(const json& j) {
    ExecutorSpec exec;
    exec.name = j.at("name").get<std::string>();
    exec.kind = executor_kind_from_string(j.at("type").get<std::string>());
    exec.description = j.value("description", std::string());
    exec.prompt = j.at("prompt").get<std::string>();
    exec.tool_names = j.value("tools", std::vector<std::string>{});
    exec.version = j.value("version", std::uint64_t{0});
    return exec;
}

json to_json(const WorkflowState& state) {
    json sketch = json::array();
    for (const auto& step : state.sketch)
        sketch.push_back(to_json(step));
    json executors = json::object();
    for (const auto& [name, exec] : state.executors)
        executors[name] = to_json(exec);
    return {
        {"schema_version", kCheckpointSchemaVersion},
        {"revision", state.revision},
        {"sketch_revision", state.sketch_revision},
        {"sketch", sketch},
        {"executors", executors},
    };
}

WorkflowState state_from_json(const json& j) {
    const auto version = j.value("schema_version", kCheckpointSchemaVersion);
    if (version != kCheckpointSchemaVersion) {
        throw SchemaVersionMismatch("checkpoint schema_version " + std::to_string(version) +
                                    " is not supported (expected " +
                                    std::to_string(kCheckpointSchemaVersion) + ")");
    }
    try {
        WorkflowState state;
        state.revision = j.value("revision", std::uint64_t{0});
        state.sketch_revision = j.value("sketch_revision", std::uint64_t{0});
        for (const auto& step : j.at("sketch"))
            state.sketch.push_back(step_from_json(step));
        for (const auto& [name, exec] : j.at("executors").items())
            state.executors.emplace(name, executor_from_json(exec));
        return state;
    } catch (const json::exception& e) {
        throw InvalidState(std::string("malformed workflow state: ") + e.what());
    }
}

json to_json(const ExecutionTrace& trace) {
    json records = json::array();
    for (const auto& r : trace.records) {
        json calls = json::array();
        for (const auto& call : r.tool_invocations) {
            calls.push_back({{"tool", call.tool},
                             {"arguments", call.arguments},
                             {"result", call.result},
                             {"error", call.error}});
        }
        json row = {
            {"step_id", r.step_id},
            {"iteration", r.iteration},
            {"input", r.input_text},
            {"output", r.output_text},
            {"tool_invocations", calls},
            {"input_tokens", r.token_usage.input},
            {"output_tokens", r.token_usage.output},
            {"wall_time_ms", r.wall_time_ms},
            {"flags", r.flags},
        };
        if (r.error)
            row["error"] = *r.error;
        records.push_back(std::move(row));
    }
    json out = {
        {"sample_id", trace.sample_id},
        {"records", records},
        {"final_output", trace.final_output},
        {"warnings", trace.warnings},
    };
    if (trace.failed_step)
        out["failed_step"] = *trace.failed_step;
    return out;
}

json to_json(const TextualGradient& gradient) {
    json out = {{"text", gradient.text}, {"sample_id", gradient.sample_id}};
    if (const auto* step = std::get_if<StepScope>(&gradient.scope))
        out["scope"] = {{"step", step->step_id}};
    else
        out["scope"] = "workflow";
    if (gradient.reasoning)
        out["reasoning"] = *gradient.reasoning;
    if (gradient.synthesized)
        out["synthesized"] = true;
    return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string step_type_label(const WorkflowState& state, const StepSpec& step) {
    const auto* exec = state.find_executor(step.executor_name);
    const bool tool = !step.tool_names.empty() || (exec != nullptr && exec->kind == ExecutorKind::Tool);
    const std::string base = tool ? "Tool" : "LLM";
    if (std::holds_alternative<Route>(step.control))
        return "Cond. / " + base;
    if (std::holds_alternative<Loop>(step.control))
        return "Loop / " + base;
    return base;
}

namespace {

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0)
            out += sep;
        out += items[i];
    }
    return out;
}

std::string control_note(const Control& control) {
    if (const auto* route = std::get_if<Route>(&control)) {
        std::vector<std::string> parts;
        for (const auto& [label, target] : route->targets)
            parts.push_back(label + " -> step " + std::to_string(target));
        return " [routes: " + join(parts, ", ") + "]";
    }
    if (const auto* loop = std::get_if<Loop>(&control))
        return " [repeats up to " + std::to_string(loop->max_iterations) + " times]";
    return "";
}

}  // namespace

std::string render_sketch_table(const WorkflowState& state) {
    std::ostringstream out;
    out << "| Step | Type | Tools | Executor | Description |\n";
    out << "|------|------|-------|----------|-------------|\n";
    for (const auto& step : state.sketch) {
        out << "| " << step.step_id << " | " << step_type_label(state, step) << " | "
            << (step.tool_names.empty() ? "-" : join(step.tool_names, ", ")) << " | "
            << step.executor_name << " | " << step.description << control_note(step.control)
            << " |\n";
    }
    return out.str();
}

}  // namespace flowgrad
