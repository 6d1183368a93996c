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

#include <string>
#include <string_view>

#include "flowgrad/evaluation.hpp"
#include "flowgrad/runtime.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

inline constexpr std::string_view kEnvelopeStepHeader = "## Current Step";
inline constexpr std::string_view kEnvelopeQuestionHeader = "## Question";
inline constexpr std::string_view kEnvelopeContextHeader = "## Context";
inline constexpr std::string_view kEnvelopePreviousHeader = "## Previous Step Output";

/// Step input document. The previous output is the last section and is copied
/// verbatim, so the envelope always contains it as a substring.
std::string render_envelope(std::string_view question, std::string_view previous_output, const StepSpec& step,
                            std::string_view context = {});

/// Label on the first non-empty line `ROUTE: <label>`, if present.
std::optional<std::string> parse_route_label(std::string_view output);

/// True when some line of `output`, trimmed, equals the sentinel.
bool has_sentinel_line(std::string_view output, std::string_view sentinel);

/// Runs the sketch over one sample. Backend failures after retries end the
/// trace early with the failing step marked; BudgetExceeded propagates.
ExecutionTrace run_workflow(Runtime& rt, const WorkflowState& state, const Sample& sample);

}  // namespace flowgrad
