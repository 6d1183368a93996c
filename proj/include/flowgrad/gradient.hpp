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

#include <map>
#include <span>
#include <string>

#include "flowgrad/evaluation.hpp"
#include "flowgrad/runtime.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

enum class BackwardMode {
    /// grad_loss at the last executed step, then one chain-rule call per
    /// earlier step in descending order.
    Layerwise,
    /// One meta call returning a gradient for every executed step.
    Joint,
};

/// What a gradient call sees for one sample.
struct GradientInputs {
    const WorkflowState& state;
    const ExecutionTrace& trace;
    const Sample& sample;
    const EvalResult& eval;
};

// Rendering helpers shared with the optimizer.
std::string cap_gradient_text(std::string text, std::size_t cap);
std::string render_tool_list(std::span<const std::string> tools);
std::string render_workflow_structure(const WorkflowState& state);
std::string render_agents(const WorkflowState& state);
std::string render_agents_with_prompts(const WorkflowState& state);
std::string render_trace(const WorkflowState& state, const ExecutionTrace& trace);
std::string render_aggregated_gradients(std::span<const TextualGradient> gradients);
/// Prefixes a user prompt with the rendered sketch under "## Workflow Sketch".
std::string with_sketch(const WorkflowState& state, std::string user_prompt);

/// The last record of `step`, if it ran.
const StepRecord* last_record(const ExecutionTrace& trace, StepId step);

ChatRequest grad_loss_request(const Runtime& rt, const GradientInputs& in);
ChatRequest grad_backprop_request(const Runtime& rt, const GradientInputs& in, StepId k,
                                  const TextualGradient& next_gradient);
ChatRequest grad_workflow_request(const Runtime& rt, const GradientInputs& in);

/// Gradient for the step that produced the trace's last record (step K for a
/// complete sequential trace). Throws GradientUnavailable.
TextualGradient grad_loss(Runtime& rt, const GradientInputs& in);

/// Chain rule from the gradient of the step that consumed step k's output.
TextualGradient grad_backprop(Runtime& rt, const GradientInputs& in, StepId k, const TextualGradient& next_gradient);

/// One gradient per sketch step. Steps that never ran get a synthesized
/// gradient without a meta call.
std::map<StepId, TextualGradient> backward(Runtime& rt, const GradientInputs& in,
                                           BackwardMode mode = BackwardMode::Layerwise);

/// Workflow-scoped gradient carrying reasoning.
TextualGradient grad_workflow(Runtime& rt, const GradientInputs& in);

/// Whole workflow treated as a single layer: one gradient over structure and
/// prompts together.
TextualGradient single_layer_gradient(Runtime& rt, const GradientInputs& in);

}  // namespace flowgrad
