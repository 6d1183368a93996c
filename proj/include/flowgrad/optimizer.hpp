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

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flowgrad/evaluation.hpp"
#include "flowgrad/runtime.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

struct PlanStep {
    StepId step_id = 0;
    std::string description;
    std::vector<std::string> tools;
    ExecutorOrigin executor_type = ExecutorOrigin::Reuse;
    std::string executor_name;
    std::string generation_guideline;
    Control control = Sequential{};

    bool operator==(const PlanStep&) const = default;
};

struct PlanDecision {
    std::string reasoning;
    bool should_update = false;
    std::vector<PlanStep> plan;
};

struct PromptUpdate {
    std::string updated_prompt;
    std::vector<std::string> changes_made;
    std::string reasoning;
};

/// Reminder substituted for `{output_format_instruction}`.
inline constexpr std::string_view kPlanFormatInstruction =
    "Output format: a single JSON object with keys \"reasoning\" (string), \"should_update\" (boolean) and "
    "\"updated_execution_plan\" (array of steps with step_id, description, tools, executor_type, executor_name, "
    "generation_guideline).";

/// Structural parse of a plan response. Throws MalformedJson on shape errors.
/// Normalizes: should_update=false empties the plan; reuse steps drop their
/// guideline.
/// With `keep_plan`, a plan is kept even when should_update is false.
PlanDecision parse_plan_decision(const json& j, bool keep_plan = false);
json to_json(const PlanStep& step);
json to_json(const PlanDecision& decision);

/// Structural parse of a TGD response. Throws MalformedJson.
PromptUpdate parse_prompt_update(const json& j);

/// Strips characters outside [A-Za-z0-9_]; empty when nothing is left.
std::string sanitize_identifier(std::string_view name);

/// Distinct executor names referenced by the sketch, in step order.
std::vector<std::string> live_executors(const WorkflowState& state);

/// `base`, else `base_2`, `base_3`, ... whichever is not taken.
std::string uniquify_name(const std::string& base, const std::set<std::string>& taken);

// ---------------------------------------------------------------------------
// Inner loop
// ---------------------------------------------------------------------------

ChatRequest optim_call_request(const Runtime& rt, const WorkflowState& state, const ExecutorSpec& executor,
                               std::span<const TextualGradient> gradients, std::size_t num_samples);

/// One TGD call for `executor`. Throws std::invalid_argument when `gradients`
/// or `num_samples` is empty. Returns nullopt when the meta model never
/// produced a usable update.
std::optional<PromptUpdate> update_prompt(Runtime& rt, const WorkflowState& state, const ExecutorSpec& executor,
                                          std::span<const TextualGradient> gradients, std::size_t num_samples);

/// Replaces the executor's prompt, bumping its version and the state revision.
WorkflowState apply_prompt_update(const WorkflowState& state, const std::string& executor_name,
                                  const PromptUpdate& update);

/// All executors in one call (mode without layer-wise gradients). Returns the
/// updated state, or the input unchanged when the call fails.
WorkflowState joint_update(Runtime& rt, const WorkflowState& state, std::span<const TextualGradient> gradients,
                           std::size_t num_samples);

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

ChatRequest optim_workflow_request(const Runtime& rt, const WorkflowState& state,
                                   std::span<const TextualGradient> gradients, std::size_t num_samples);

struct WorkflowUpdate {
    WorkflowState state;
    PlanDecision decision;
    /// Set when the plan was rejected or the call failed; `state` is then the input.
    std::optional<std::string> rejected;
    std::size_t init_calls = 0;
};

/// Validates the plan, initializes every new executor, and returns the state
/// with the plan applied (revision + 1). Throws PlanInvalid or InitFailed
/// without side effects.
WorkflowState apply_plan(Runtime& rt, const WorkflowState& state, const std::vector<PlanStep>& plan,
                         std::span<const std::string> sample_questions, std::size_t* init_calls = nullptr);

/// Outer-loop step. Never throws for plan or JSON failures: the result carries
/// the unchanged state and the reason instead.
WorkflowUpdate update_workflow(Runtime& rt, const WorkflowState& state, std::span<const TextualGradient> gradients,
                               std::size_t num_samples, std::span<const std::string> sample_questions);

ChatRequest init_executor_request(const Runtime& rt, const PlanStep& step,
                                  std::span<const std::string> sample_questions);

/// Creates the executor for a `new` plan step. Kind follows the step's tools.
/// Throws InitFailed.
ExecutorSpec init_executor(Runtime& rt, const PlanStep& step, std::span<const std::string> sample_questions,
                           const std::set<std::string>& taken_names);

/// Whole-workflow rewrite from single-layer gradients (structure and prompts
/// in one step). Same failure contract as update_workflow.
WorkflowUpdate single_layer_update(Runtime& rt, const WorkflowState& state,
                                   std::span<const TextualGradient> gradients, std::size_t num_samples);

// ---------------------------------------------------------------------------
// Cold start
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPlaceholderExecutor = "ZeroShot";

/// Zero-shot answers, one workflow gradient per sample on a single-step
/// pseudo-trace, a plan from the placeholder state, then init for any step
/// still on the placeholder. Throws BootstrapFailed.
WorkflowState bootstrap_workflow(Runtime& rt, std::span<const Sample> batch, const Metric& metric);

}  // namespace flowgrad
