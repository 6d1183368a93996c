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

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "flowgrad/json_util.hpp"

namespace flowgrad {

using StepId = int;

// ---------------------------------------------------------------------------
// Step control
// ---------------------------------------------------------------------------

struct Sequential {
    bool operator==(const Sequential&) const = default;
};

/// The executor's first output line must read `ROUTE: <label>`; the matching
/// target step runs next. Targets only move forward.
struct Route {
    std::map<std::string, StepId> targets;
    bool operator==(const Route&) const = default;
};

/// Re-runs the step until its output has a sentinel line or the cap is hit.
struct Loop {
    int max_iterations = 1;
    bool operator==(const Loop&) const = default;
};

using Control = std::variant<Sequential, Route, Loop>;

enum class ExecutorKind { LLM, Tool };

/// How the step's executor entered the registry in the plan that produced it.
enum class ExecutorOrigin { Reuse, New };

struct StepSpec {
    StepId step_id = 1;
    std::string description;
    std::string executor_name;
    std::vector<std::string> tool_names;
    Control control = Sequential{};
    ExecutorOrigin origin = ExecutorOrigin::Reuse;
    std::string generation_guideline;

    bool operator==(const StepSpec&) const = default;
};

struct ExecutorSpec {
    std::string name;
    ExecutorKind kind = ExecutorKind::LLM;
    std::string description;
    std::string prompt;
    std::vector<std::string> tool_names;
    std::uint64_t version = 0;

    bool operator==(const ExecutorSpec&) const = default;
};

using Sketch = std::vector<StepSpec>;

/// The unit of checkpointing. `revision` moves on every applied change;
/// `sketch_revision` moves only when the step list itself changes.
struct WorkflowState {
    Sketch sketch;
    std::map<std::string, ExecutorSpec> executors;
    std::uint64_t revision = 0;
    std::uint64_t sketch_revision = 0;

    bool operator==(const WorkflowState&) const = default;

    const ExecutorSpec* find_executor(const std::string& name) const;
    const StepSpec* find_step(StepId id) const;
    std::size_t size() const noexcept { return sketch.size(); }
};

// ---------------------------------------------------------------------------
// Traces and gradients
// ---------------------------------------------------------------------------

struct ToolInvocation {
    std::string tool;
    json arguments;
    std::string result;
    bool error = false;

    bool operator==(const ToolInvocation&) const = default;
};

struct TokenUsage {
    std::int64_t input = 0;
    std::int64_t output = 0;
    bool operator==(const TokenUsage&) const = default;
};

struct StepRecord {
    StepId step_id = 0;
    int iteration = 1;
    std::string input_text;
    std::string output_text;
    std::vector<ToolInvocation> tool_invocations;
    TokenUsage token_usage;
    std::int64_t wall_time_ms = 0;
    std::optional<std::string> error;
    std::vector<std::string> flags;

    bool operator==(const StepRecord&) const = default;
};

struct ExecutionTrace {
    std::string sample_id;
    std::vector<StepRecord> records;
    std::string final_output;
    std::optional<StepId> failed_step;
    std::vector<std::string> warnings;

    bool complete() const noexcept { return !failed_step.has_value(); }
};

struct StepScope {
    StepId step_id = 0;
    bool operator==(const StepScope&) const = default;
};
struct WorkflowScope {
    bool operator==(const WorkflowScope&) const = default;
};
using GradientScope = std::variant<StepScope, WorkflowScope>;

struct TextualGradient {
    GradientScope scope = WorkflowScope{};
    std::string text;
    std::optional<std::string> reasoning;
    std::string sample_id;
    /// Produced without a meta call (step never executed).
    bool synthesized = false;

    bool operator==(const TextualGradient&) const = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationCode {
    EmptySketch,
    TooManySteps,
    NonContiguousStepIds,
    UnresolvedExecutor,
    ExecutorKeyMismatch,
    InvalidExecutorName,
    EmptyPrompt,
    ExecutorKindMismatch,
    StepToolKindMismatch,
    UnregisteredTool,
    RouteTargetMissing,
    RouteTargetNotForward,
    LoopIterationsOutOfRange,
};

std::string to_string(ViolationCode code);

struct Violation {
    ViolationCode code;
    std::string subject;

    bool operator==(const Violation&) const = default;
    /// e.g. `UnresolvedExecutor(Ghost)`
    std::string str() const;
};

struct ValidationLimits {
    std::size_t max_steps = 12;
    int max_loop_iterations = 8;
};

/// Returns every invariant violation; an empty list means the state is valid.
/// Tool registration is only checked when `registered_tools` is given.
std::vector<Violation> validate_state(const WorkflowState& state,
                                      const ValidationLimits& limits = {},
                                      const std::set<std::string>* registered_tools = nullptr);

bool is_valid_identifier(std::string_view name);

// ---------------------------------------------------------------------------
// Sketch diff
// ---------------------------------------------------------------------------

/// A step of the new sketch carried over from an old one. Fields left empty
/// are unchanged from the source step.
struct CarriedStep {
    StepId from = 0;
    std::optional<std::string> description;
    std::optional<std::vector<std::string>> tool_names;
    std::optional<Control> control;
    std::optional<ExecutorOrigin> origin;
    std::optional<std::string> generation_guideline;

    bool operator==(const CarriedStep&) const = default;
};

struct AddedStep {
    StepSpec spec;
    bool operator==(const AddedStep&) const = default;
};

using DiffEntry = std::variant<CarriedStep, AddedStep>;

struct SketchDiff {
    /// One entry per step of the new sketch, in order.
    std::vector<DiffEntry> entries;
    std::vector<StepId> removed;       // old step ids
    std::vector<StepId> added;         // new step ids
    bool reordered = false;
    std::vector<std::string> reused_executors;
    std::vector<std::string> new_executors;

    /// True when the two sketches are identical.
    bool empty() const;
};

/// Steps are matched by executor name in order of appearance. Throws
/// InvalidState when either input fails validation.
SketchDiff diff_sketch(const WorkflowState& before, const WorkflowState& after);

Sketch apply_diff(const SketchDiff& diff, const Sketch& before);

// ---------------------------------------------------------------------------
// Serialization and rendering
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointSchemaVersion = 1;

std::string to_string(ExecutorKind kind);  // "LLMExecutor" / "ToolExecutor"
ExecutorKind executor_kind_from_string(std::string_view s);

json to_json(const Control& control);
Control control_from_json(const json& j);
json to_json(const StepSpec& step);
StepSpec step_from_json(const json& j);
json to_json(const ExecutorSpec& exec);
ExecutorSpec executor_from_json(const json& j);
json to_json(const WorkflowState& state);
WorkflowState state_from_json(const json& j);
json to_json(const ExecutionTrace& trace);
json to_json(const TextualGradient& gradient);

/// Step table in the style `| Step | Type | Tools | Executor | Description |`.
std::string render_sketch_table(const WorkflowState& state);

/// "Tool", "LLM", "Cond. / LLM", "Loop / Tool", ...
std::string step_type_label(const WorkflowState& state, const StepSpec& step);

}  // namespace flowgrad
