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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowgrad/backend.hpp"
#include "flowgrad/evaluation.hpp"
#include "flowgrad/run_store.hpp"
#include "flowgrad/runtime.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

enum class TrainMode {
    Full,
    /// Inner loop only, on the initial sketch.
    PromptOnly,
    /// Structure and prompts rewritten together as one layer.
    NoBilevel,
    /// One joint gradient call per sample instead of the chain rule.
    NoLayerwise,
};

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view s);

struct TrainConfig {
    std::size_t batch_size = 5;
    std::size_t bilevel_rounds = 2;
    std::size_t inner_steps = 5;
    std::size_t outer_steps = 1;
    std::size_t epochs = 1;
    TrainMode mode = TrainMode::Full;
    Budget budget;
    std::uint64_t seed = 0;
    /// Validate on the first n validation samples only.
    std::optional<std::size_t> val_subsample;
    /// Shuffle the training set each epoch with `seed`.
    bool shuffle = false;
    /// Fresh forward pass before every inner step; otherwise each round reuses
    /// the traces from its first inner step.
    bool recompute_forward = true;
    bool save_traces = false;

    /// Throws ConfigError for zero counts or non-positive budgets.
    void validate() const;
};

struct TrainStats {
    std::size_t batches = 0;
    std::size_t outer_steps = 0;
    std::size_t inner_update_rounds = 0;
    std::size_t single_layer_steps = 0;
    std::size_t plans_applied = 0;
    std::size_t plans_rejected = 0;
    std::size_t prompt_updates = 0;
    std::size_t prompt_updates_skipped = 0;
    std::size_t gradients_dropped = 0;
};

struct TrainResult {
    WorkflowState best_state;
    std::optional<std::size_t> best_batch;
    double best_score = 0.0;
    WorkflowState final_state;
    std::vector<RunRecord> records;
    TrainStats stats;
    bool budget_exceeded = false;
};

struct EvalSummary {
    std::string metric;
    double mean_score = 0.0;
    std::vector<EvalResult> per_sample;
    std::vector<std::string> predictions;
    std::size_t failures = 0;
};

/// Forward pass and metric on every sample. Failed traces score 0 with the
/// error in the feedback. Throws std::invalid_argument on an empty dataset.
EvalSummary evaluate(Runtime& rt, const WorkflowState& state, std::span<const Sample> dataset, const Metric& metric);

using RecordCallback = std::function<void(const RunRecord&, const WorkflowState&)>;

/// Bilevel schedule over batches of the training set with validation after
/// each batch. The best state is the earliest batch with the highest
/// validation score. BudgetExceeded ends training early and is reported in
/// the result, not thrown.
TrainResult train(Runtime& rt, const TrainConfig& config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const WorkflowState& state0, const Metric& metric,
                  RunStore* store = nullptr, const RecordCallback& on_record = {});

}  // namespace flowgrad
