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
#include "flowgrad/optimizer.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "flowgrad/error.hpp"
#include "flowgrad/gradient.hpp"

namespace flowgrad {

namespace {

std::vector<std::string> string_list(const json& j, const char* key, const json& whole) {
    if (!j.contains(key) || j[key].is_null())
        return {};
    if (!j[key].is_array())
        throw MalformedJson(std::string("'") + key + "' must be an array", whole.dump());
    std::vector<std::string> out;
    for (const auto& item : j[key]) {
        if (!item.is_string())
            throw MalformedJson(std::string("'") + key + "' must hold strings", whole.dump());
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::string string_field(const json& j, const char* key, const json& whole, bool required) {
    if (!j.contains(key) || j[key].is_null()) {
        if (required)
            throw MalformedJson(std::string("missing '") + key + "'", whole.dump());
        return {};
    }
    if (!j[key].is_string())
        throw MalformedJson(std::string("'") + key + "' must be a string", whole.dump());
    return j[key].get<std::string>();
}

StepId int_field(const json& j, const char* key, const json& whole) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw MalformedJson(std::string("missing integer '") + key + "'", whole.dump());
    return j[key].get<StepId>();
}

/// Steps equal ignoring how their executor entered the registry.
bool same_structure(const Sketch& a, const Sketch& b) {
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].step_id != b[i].step_id || a[i].description != b[i].description ||
            a[i].executor_name != b[i].executor_name || a[i].tool_names != b[i].tool_names ||
            a[i].control != b[i].control)
            return false;
    }
    return true;
}

void require_valid(const Runtime& rt, const WorkflowState& state, const char* what) {
    const auto registered = rt.tools.names();
    const auto violations = validate_state(state, rt.settings.limits, &registered);
    if (violations.empty())
        return;
    std::string msg = std::string(what) + " produces an invalid state:";
    for (const auto& v : violations)
        msg += " " + v.str();
    throw PlanInvalid(msg);
}

void check_plan_shape(const Runtime& rt, std::size_t size, const std::vector<StepId>& ids) {
    if (size == 0)
        throw PlanInvalid("plan has no steps");
    if (size > rt.settings.limits.max_steps)
        throw PlanInvalid("plan has " + std::to_string(size) + " steps, above the cap of " +
                          std::to_string(rt.settings.limits.max_steps));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] != static_cast<StepId>(i + 1))
            throw PlanInvalid("plan step ids are not contiguous from 1");
    }
}

void check_tools(const Runtime& rt, const std::vector<std::string>& tools) {
    for (const auto& tool : tools) {
        if (rt.tools.find(tool) == nullptr)
            throw PlanInvalid("plan references unregistered tool " + tool);
    }
}

ExecutorKind kind_for(const std::vector<std::string>& tools) {
    return tools.empty() ? ExecutorKind::LLM : ExecutorKind::Tool;
}

std::string numbered(std::span<const std::string> items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    return out.empty() ? "None" : out.substr(0, out.size() - 1);
}

void require_gradients(std::span<const TextualGradient> gradients, std::size_t num_samples, const char* op) {
    if (gradients.empty())
        throw std::invalid_argument(std::string(op) + ": empty gradient batch");
    if (num_samples == 0)
        throw std::invalid_argument(std::string(op) + ": num_samples must be >= 1");
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

PlanDecision parse_plan_decision(const json& j, bool keep_plan) {
    if (!j.is_object())
        throw MalformedJson("plan response is not an object", j.dump());
    PlanDecision d;
    d.reasoning = string_field(j, "reasoning", j, false);
    if (!j.contains("should_update") || !j["should_update"].is_boolean())
        throw MalformedJson("missing boolean 'should_update'", j.dump());
    d.should_update = j["should_update"].get<bool>();
    const json* plan = nullptr;
    if (j.contains("updated_execution_plan") && !j["updated_execution_plan"].is_null()) {
        if (!j["updated_execution_plan"].is_array())
            throw MalformedJson("'updated_execution_plan' must be an array", j.dump());
        plan = &j["updated_execution_plan"];
    } else if (d.should_update) {
        throw MalformedJson("should_update is true but 'updated_execution_plan' is missing", j.dump());
    }
    if (plan != nullptr && (d.should_update || keep_plan)) {
        for (const auto& s : *plan) {
            if (!s.is_object())
                throw MalformedJson("plan step is not an object", j.dump());
            PlanStep step;
            step.step_id = int_field(s, "step_id", j);
            step.description = string_field(s, "description", j, true);
            step.tools = string_list(s, "tools", j);
            const auto type = string_field(s, "executor_type", j, true);
            if (type != "reuse" && type != "new")
                throw MalformedJson("executor_type must be reuse or new", j.dump());
            step.executor_type = type == "new" ? ExecutorOrigin::New : ExecutorOrigin::Reuse;
            step.executor_name = string_field(s, "executor_name", j, true);
            if (step.executor_type == ExecutorOrigin::New)
                step.generation_guideline = string_field(s, "generation_guideline", j, false);
            if (s.contains("control") && !s["control"].is_null()) {
                try {
                    step.control = control_from_json(s["control"]);
                } catch (const Error& e) {
                    throw MalformedJson(e.what(), j.dump());
                }
            }
            d.plan.push_back(std::move(step));
        }
    }
    if (keep_plan && !d.plan.empty())
        d.should_update = true;
    return d;
}

json to_json(const PlanStep& step) {
    return {{"step_id", step.step_id},
            {"description", step.description},
            {"tools", step.tools},
            {"executor_type", step.executor_type == ExecutorOrigin::New ? "new" : "reuse"},
            {"executor_name", step.executor_name},
            {"generation_guideline", step.generation_guideline},
            {"control", to_json(step.control)}};
}

json to_json(const PlanDecision& decision) {
    json plan = json::array();
    for (const auto& s : decision.plan)
        plan.push_back(to_json(s));
    return {{"reasoning", decision.reasoning},
            {"should_update", decision.should_update},
            {"updated_execution_plan", plan}};
}

PromptUpdate parse_prompt_update(const json& j) {
    if (!j.is_object())
        throw MalformedJson("prompt update is not an object", j.dump());
    PromptUpdate u;
    u.updated_prompt = string_field(j, "updated_prompt", j, true);
    if (u.updated_prompt.find_first_not_of(" \t\r\n") == std::string::npos)
        throw MalformedJson("empty updated_prompt", j.dump());
    u.changes_made = string_list(j, "changes_made", j);
    u.reasoning = string_field(j, "reasoning", j, false);
    return u;
}

std::string sanitize_identifier(std::string_view name) {
    std::string out;
    for (char c : name) {
        if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')
            out.push_back(c);
        else if ((c == ' ' || c == '-') && !out.empty() && out.back() != '_')
            out.push_back('_');
    }
    while (!out.empty() && out.back() == '_')
        out.pop_back();
    return out;
}

std::vector<std::string> live_executors(const WorkflowState& state) {
    std::vector<std::string> out;
    for (const auto& step : state.sketch) {
        if (std::find(out.begin(), out.end(), step.executor_name) == out.end())
            out.push_back(step.executor_name);
    }
    return out;
}

std::string uniquify_name(const std::string& base, const std::set<std::string>& taken) {
    if (!taken.count(base))
        return base;
    for (int n = 2;; ++n) {
        auto candidate = base + "_" + std::to_string(n);
        if (!taken.count(candidate))
            return candidate;
    }
}

// ---------------------------------------------------------------------------
// Inner loop
// ---------------------------------------------------------------------------

ChatRequest optim_call_request(const Runtime& rt, const WorkflowState& state, const ExecutorSpec& executor,
                               std::span<const TextualGradient> gradients, std::size_t num_samples) {
    const auto& pair = rt.prompts.get(prompt_names::kOptimCall);
    const TemplateValues values{{"executor_name", executor.name},
                                {"executor_type", to_string(executor.kind)},
                                {"executor_tools", render_tool_list(executor.tool_names)},
                                {"current_prompt", executor.prompt},
                                {"num_samples", std::to_string(num_samples)},
                                {"aggregated_gradients", render_aggregated_gradients(gradients)}};
    return rt.meta_request(Purpose::OptimCall, pair, with_sketch(state, render_template(pair.user, values)));
}

std::optional<PromptUpdate> update_prompt(Runtime& rt, const WorkflowState& state, const ExecutorSpec& executor,
                                          std::span<const TextualGradient> gradients, std::size_t num_samples) {
    require_gradients(gradients, num_samples, "update_prompt");
    auto request = optim_call_request(rt, state, executor, gradients, num_samples);
    try {
        const auto j = rt.client.complete_json(
            std::move(request), [](const json& v) { parse_prompt_update(v); }, rt.settings.json_repairs);
        return parse_prompt_update(j);
    } catch (const JsonUnavailable&) {
        return std::nullopt;
    }
}

WorkflowState apply_prompt_update(const WorkflowState& state, const std::string& executor_name,
                                  const PromptUpdate& update) {
    auto it = state.executors.find(executor_name);
    if (it == state.executors.end())
        throw InvalidState("no executor named " + executor_name);
    if (update.updated_prompt.empty())
        throw std::invalid_argument("apply_prompt_update: empty prompt");
    WorkflowState next = state;
    auto& exec = next.executors.at(executor_name);
    exec.prompt = update.updated_prompt;
    ++exec.version;
    ++next.revision;
    return next;
}

WorkflowState joint_update(Runtime& rt, const WorkflowState& state, std::span<const TextualGradient> gradients,
                           std::size_t num_samples) {
    require_gradients(gradients, num_samples, "joint_update");
    const auto live = live_executors(state);
    const auto& pair = rt.prompts.get(prompt_names::kJointUpdate);
    const TemplateValues values{{"workflow_structure", render_workflow_structure(state)},
                                {"agents_with_prompts", render_agents_with_prompts(state)},
                                {"num_samples", std::to_string(num_samples)},
                                {"aggregated_gradients", render_aggregated_gradients(gradients)}};
    auto request = rt.meta_request(Purpose::OptimCall, pair, render_template(pair.user, values));
    json j;
    try {
        j = rt.client.complete_json(
            std::move(request),
            [](const json& v) {
                if (!v.is_object() || !v.contains("updates") || !v["updates"].is_array())
                    throw MalformedJson("expected an 'updates' array", v.dump());
                for (const auto& u : v["updates"]) {
                    if (!u.is_object())
                        throw MalformedJson("update entry is not an object", v.dump());
                    string_field(u, "executor_name", v, true);
                    parse_prompt_update(u);
                }
            },
            rt.settings.json_repairs);
    } catch (const JsonUnavailable&) {
        return state;
    }
    WorkflowState next = state;
    bool changed = false;
    for (const auto& u : j["updates"]) {
        const auto name = u["executor_name"].get<std::string>();
        if (std::find(live.begin(), live.end(), name) == live.end())
            continue;
        auto& exec = next.executors.at(name);
        exec.prompt = parse_prompt_update(u).updated_prompt;
        ++exec.version;
        changed = true;
    }
    if (changed)
        ++next.revision;
    return next;
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

ChatRequest optim_workflow_request(const Runtime& rt, const WorkflowState& state,
                                   std::span<const TextualGradient> gradients, std::size_t num_samples) {
    const auto& pair = rt.prompts.get(prompt_names::kOptimWorkflow);
    const TemplateValues values{{"metrics_info", rt.settings.metrics_info},
                                {"available_tools", rt.tools.describe()},
                                {"current_workflow", render_workflow_structure(state)},
                                {"current_agents", render_agents(state)},
                                {"num_samples", std::to_string(num_samples)},
                                {"aggregated_gradients", render_aggregated_gradients(gradients)},
                                {"output_format_instruction", std::string(kPlanFormatInstruction)}};
    return rt.meta_request(Purpose::OptimWorkflow, pair, render_template(pair.user, values));
}

ChatRequest init_executor_request(const Runtime& rt, const PlanStep& step,
                                  std::span<const std::string> sample_questions) {
    const auto& pair = rt.prompts.get(prompt_names::kInitExecutor);
    const TemplateValues values{{"step_id", std::to_string(step.step_id)},
                                {"step_description", step.description},
                                {"tools", render_tool_list(step.tools)},
                                {"generation_guideline", step.generation_guideline},
                                {"questions", numbered(sample_questions)}};
    return rt.meta_request(Purpose::InitExecutor, pair, render_template(pair.user, values));
}

ExecutorSpec init_executor(Runtime& rt, const PlanStep& step, std::span<const std::string> sample_questions,
                           const std::set<std::string>& taken_names) {
    if (step.generation_guideline.empty())
        throw InitFailed("step " + std::to_string(step.step_id) + " has no generation guideline");
    auto request = init_executor_request(rt, step, sample_questions);
    json j;
    try {
        j = rt.client.complete_json(
            std::move(request),
            [](const json& v) {
                if (!v.is_object())
                    throw MalformedJson("executor spec is not an object", v.dump());
                const auto prompt = string_field(v, "prompt", v, true);
                if (prompt.find_first_not_of(" \t\r\n") == std::string::npos)
                    throw MalformedJson("empty prompt", v.dump());
                string_field(v, "name", v, false);
                string_field(v, "description", v, false);
                string_field(v, "type", v, false);
            },
            rt.settings.json_repairs);
    } catch (const JsonUnavailable& e) {
        throw InitFailed("executor init failed for step " + std::to_string(step.step_id) + ": " + e.what());
    }

    ExecutorSpec exec;
    auto name = sanitize_identifier(j.value("name", std::string()));
    if (name.empty())
        name = sanitize_identifier(step.executor_name);
    if (name.empty())
        name = "Executor";
    exec.name = uniquify_name(name, taken_names);
    exec.kind = kind_for(step.tools);
    exec.description = j.value("description", std::string());
    if (exec.description.empty())
        exec.description = step.description;
    exec.prompt = j["prompt"].get<std::string>();
    exec.tool_names = step.tools;
    return exec;
}

WorkflowState apply_plan(Runtime& rt, const WorkflowState& state, const std::vector<PlanStep>& plan,
                         std::span<const std::string> sample_questions, std::size_t* init_calls) {
    std::vector<StepId> ids;
    for (const auto& s : plan)
        ids.push_back(s.step_id);
    check_plan_shape(rt, plan.size(), ids);

    // Validate everything before spending init calls.
    std::map<std::string, ExecutorKind> plan_new;
    for (const auto& s : plan) {
        check_tools(rt, s.tools);
        const auto kind = kind_for(s.tools);
        if (s.executor_type == ExecutorOrigin::Reuse) {
            ExecutorKind existing;
            if (auto it = plan_new.find(s.executor_name); it != plan_new.end()) {
                existing = it->second;
            } else if (const auto* exec = state.find_executor(s.executor_name)) {
                existing = exec->kind;
            } else {
                throw PlanInvalid("plan reuses unknown executor " + s.executor_name);
            }
            if (existing != kind)
                throw PlanInvalid("reused executor " + s.executor_name + " is a " + to_string(existing) +
                                  " but step " + std::to_string(s.step_id) +
                                  (s.tools.empty() ? " has no tools" : " uses tools"));
        } else {
            if (s.generation_guideline.empty())
                throw PlanInvalid("new executor " + s.executor_name + " has no generation guideline");
            if (!plan_new.emplace(s.executor_name, kind).second)
                throw PlanInvalid("plan introduces executor " + s.executor_name + " twice");
        }
    }

    WorkflowState next = state;
    std::set<std::string> taken;
    for (const auto& [name, exec] : state.executors)
        taken.insert(name);
    std::map<std::string, std::string> renamed;
    std::size_t calls = 0;
    next.sketch.clear();
    for (const auto& s : plan) {
        StepSpec step;
        step.step_id = s.step_id;
        step.description = s.description;
        step.tool_names = s.tools;
        step.control = s.control;
        step.origin = s.executor_type;
        if (s.executor_type == ExecutorOrigin::New) {
            auto exec = init_executor(rt, s, sample_questions, taken);
            ++calls;
            taken.insert(exec.name);
            renamed[s.executor_name] = exec.name;
            step.executor_name = exec.name;
            step.generation_guideline = s.generation_guideline;
            next.executors[exec.name] = std::move(exec);
        } else {
            auto it = renamed.find(s.executor_name);
            step.executor_name = it != renamed.end() ? it->second : s.executor_name;
        }
        next.sketch.push_back(std::move(step));
    }
    if (init_calls != nullptr)
        *init_calls = calls;

    if (calls == 0 && same_structure(next.sketch, state.sketch))
        return state;
    ++next.revision;
    if (!same_structure(next.sketch, state.sketch))
        ++next.sketch_revision;
    require_valid(rt, next, "plan");
    return next;
}

WorkflowUpdate update_workflow(Runtime& rt, const WorkflowState& state, std::span<const TextualGradient> gradients,
                               std::size_t num_samples, std::span<const std::string> sample_questions) {
    require_gradients(gradients, num_samples, "update_workflow");
    WorkflowUpdate result{state, {}, std::nullopt, 0};
    auto request = optim_workflow_request(rt, state, gradients, num_samples);
    json j;
    try {
        j = rt.client.complete_json(
            std::move(request), [](const json& v) { parse_plan_decision(v); }, rt.settings.json_repairs);
    } catch (const JsonUnavailable& e) {
        result.rejected = std::string("JsonUnavailable: ") + e.what();
        return result;
    }
    result.decision = parse_plan_decision(j);
    if (!result.decision.should_update)
        return result;
    try {
        std::size_t calls = 0;
        result.state = apply_plan(rt, state, result.decision.plan, sample_questions, &calls);
        result.init_calls = calls;
    } catch (const PlanInvalid& e) {
        result.rejected = std::string("PlanInvalid: ") + e.what();
    } catch (const InitFailed& e) {
        result.rejected = std::string("InitFailed: ") + e.what();
    }
    return result;
}

WorkflowUpdate single_layer_update(Runtime& rt, const WorkflowState& state,
                                   std::span<const TextualGradient> gradients, std::size_t num_samples) {
    require_gradients(gradients, num_samples, "single_layer_update");
    WorkflowUpdate result{state, {}, std::nullopt, 0};
    const auto& pair = rt.prompts.get(prompt_names::kSingleLayerUpdate);
    const TemplateValues values{
        {"metrics_info", rt.settings.metrics_info},
        {"available_tools", rt.tools.describe()},
        {"workflow_with_prompts", render_workflow_structure(state) + "\n" + render_agents_with_prompts(state)},
        {"num_samples", std::to_string(num_samples)},
        {"aggregated_gradients", render_aggregated_gradients(gradients)}};
    auto request = rt.meta_request(Purpose::OptimWorkflow, pair, render_template(pair.user, values));

    auto validate = [](const json& v) {
        if (!v.is_object() || !v.contains("should_update") || !v["should_update"].is_boolean())
            throw MalformedJson("missing boolean 'should_update'", v.dump());
        if (!v["should_update"].get<bool>())
            return;
        if (!v.contains("updated_workflow") || !v["updated_workflow"].is_array())
            throw MalformedJson("missing 'updated_workflow' array", v.dump());
        for (const auto& s : v["updated_workflow"]) {
            if (!s.is_object())
                throw MalformedJson("workflow step is not an object", v.dump());
            int_field(s, "step_id", v);
            string_field(s, "description", v, true);
            string_field(s, "executor_name", v, true);
            if (string_field(s, "prompt", v, true).empty())
                throw MalformedJson("empty prompt", v.dump());
            string_list(s, "tools", v);
        }
    };
    json j;
    try {
        j = rt.client.complete_json(std::move(request), validate, rt.settings.json_repairs);
    } catch (const JsonUnavailable& e) {
        result.rejected = std::string("JsonUnavailable: ") + e.what();
        return result;
    }
    result.decision.reasoning = j.value("reasoning", std::string());
    result.decision.should_update = j["should_update"].get<bool>();
    if (!result.decision.should_update)
        return result;

    try {
        const auto& steps = j["updated_workflow"];
        std::vector<StepId> ids;
        for (const auto& s : steps)
            ids.push_back(s["step_id"].get<StepId>());
        check_plan_shape(rt, steps.size(), ids);

        WorkflowState next = state;
        next.sketch.clear();
        std::map<std::string, std::pair<std::string, std::vector<std::string>>> assigned;
        bool prompts_changed = false;
        for (const auto& s : steps) {
            PlanStep plan_step;
            plan_step.step_id = s["step_id"].get<StepId>();
            plan_step.description = s["description"].get<std::string>();
            plan_step.tools = string_list(s, "tools", j);
            check_tools(rt, plan_step.tools);
            const auto name = sanitize_identifier(s["executor_name"].get<std::string>());
            if (name.empty())
                throw PlanInvalid("step " + std::to_string(plan_step.step_id) + " has no usable executor name");
            const auto prompt = s["prompt"].get<std::string>();
            if (auto it = assigned.find(name); it != assigned.end()) {
                if (it->second.first != prompt || it->second.second != plan_step.tools)
                    throw PlanInvalid("executor " + name + " is given conflicting definitions");
            } else {
                assigned.emplace(name, std::make_pair(prompt, plan_step.tools));
                auto found = next.executors.find(name);
                if (found == next.executors.end()) {
                    ExecutorSpec exec;
                    exec.name = name;
                    exec.kind = kind_for(plan_step.tools);
                    exec.description = plan_step.description;
                    exec.prompt = prompt;
                    exec.tool_names = plan_step.tools;
                    next.executors.emplace(name, std::move(exec));
                    prompts_changed = true;
                } else {
                    auto& exec = found->second;
                    if (exec.prompt != prompt || exec.tool_names != plan_step.tools) {
                        exec.prompt = prompt;
                        exec.kind = kind_for(plan_step.tools);
                        exec.tool_names = plan_step.tools;
                        ++exec.version;
                        prompts_changed = true;
                    }
                }
            }
            StepSpec step;
            step.step_id = plan_step.step_id;
            step.description = plan_step.description;
            step.executor_name = name;
            step.tool_names = plan_step.tools;
            step.origin = state.find_executor(name) ? ExecutorOrigin::Reuse : ExecutorOrigin::New;
            next.sketch.push_back(std::move(step));
        }
        const bool structure_changed = !same_structure(next.sketch, state.sketch);
        if (!structure_changed && !prompts_changed)
            return result;
        ++next.revision;
        if (structure_changed)
            ++next.sketch_revision;
        require_valid(rt, next, "single-layer update");
        result.state = std::move(next);
    } catch (const PlanInvalid& e) {
        result.rejected = std::string("PlanInvalid: ") + e.what();
        result.state = state;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Cold start
// ---------------------------------------------------------------------------

WorkflowState bootstrap_workflow(Runtime& rt, std::span<const Sample> batch, const Metric& metric) {
    if (batch.empty())
        throw BootstrapFailed("bootstrap needs at least one sample");

    WorkflowState placeholder;
    StepSpec only;
    only.step_id = 1;
    only.description = "Answer the question directly.";
    only.executor_name = std::string(kPlaceholderExecutor);
    placeholder.sketch.push_back(only);
    ExecutorSpec zero;
    zero.name = std::string(kPlaceholderExecutor);
    zero.description = "Answers without any instruction (not yet initialized).";
    zero.prompt = "Answer the question.";
    placeholder.executors.emplace(zero.name, zero);

    std::vector<std::string> questions;
    std::vector<TextualGradient> gradients;
    for (const auto& sample : batch) {
        questions.push_back(sample.question);
        ChatRequest request;
        request.model_id = rt.settings.executor.model_id;
        request.temperature = rt.settings.executor.temperature;
        request.max_output_tokens = rt.settings.executor.max_output_tokens;
        request.purpose = Purpose::Bootstrap;
        request.messages.push_back(
            {Role::User, sample.context ? sample.question + "\n\n" + *sample.context : sample.question});
        const auto response = rt.client.complete(request);

        ExecutionTrace trace;
        trace.sample_id = sample.id;
        StepRecord record;
        record.step_id = 1;
        record.input_text = request.messages.back().content;
        record.output_text = response.content;
        record.token_usage = {response.input_tokens, response.output_tokens};
        trace.records.push_back(std::move(record));
        trace.final_output = response.content;

        const auto eval = metric.score(sample, trace.final_output);
        try {
            gradients.push_back(grad_workflow(rt, {placeholder, trace, sample, eval}));
        } catch (const GradientUnavailable&) {
        }
    }
    if (gradients.empty())
        throw BootstrapFailed("no workflow gradient could be computed for the bootstrap batch");

    auto request = optim_workflow_request(rt, placeholder, gradients, batch.size());
    PlanDecision decision;
    try {
        const auto j = rt.client.complete_json(
            std::move(request), [](const json& v) { parse_plan_decision(v, true); }, rt.settings.json_repairs);
        decision = parse_plan_decision(j, true);
    } catch (const JsonUnavailable& e) {
        throw BootstrapFailed(std::string("bootstrap plan unavailable: ") + e.what());
    }
    if (decision.plan.empty())
        throw BootstrapFailed("bootstrap plan has no steps");

    WorkflowState state;
    try {
        state = apply_plan(rt, placeholder, decision.plan, questions);
        std::set<std::string> taken;
        for (const auto& [name, exec] : state.executors)
            taken.insert(name);
        for (auto& step : state.sketch) {
            if (step.executor_name != kPlaceholderExecutor)
                continue;
            PlanStep ps;
            ps.step_id = step.step_id;
            ps.description = step.description;
            ps.tools = step.tool_names;
            ps.executor_type = ExecutorOrigin::New;
            ps.executor_name = step.executor_name;
            ps.generation_guideline = step.description;
            auto exec = init_executor(rt, ps, questions, taken);
            taken.insert(exec.name);
            step.executor_name = exec.name;
            step.origin = ExecutorOrigin::New;
            state.executors[exec.name] = std::move(exec);
        }
    } catch (const PlanInvalid& e) {
        throw BootstrapFailed(std::string("bootstrap plan rejected: ") + e.what());
    } catch (const InitFailed& e) {
        throw BootstrapFailed(std::string("bootstrap init failed: ") + e.what());
    }
    state.executors.erase(std::string(kPlaceholderExecutor));

    const auto registered = rt.tools.names();
    const auto violations = validate_state(state, rt.settings.limits, &registered);
    if (!violations.empty())
        throw BootstrapFailed("bootstrap produced an invalid state: " + violations.front().str());
    return state;
}

}  // namespace flowgrad
