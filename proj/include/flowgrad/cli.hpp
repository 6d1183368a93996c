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
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "flowgrad/config.hpp"
#include "flowgrad/run_store.hpp"

namespace flowgrad {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitRuntime = 3,
};

/// Entry point for the `flowgrad` binary: train, eval, curve, inspect, replay.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct TrainingOutcome {
    TrainResult result;
    WorkflowState initial_state;
    std::size_t calls = 0;
    std::int64_t cost_micro_usd = 0;
};

/// Bootstrap (unless the config names an initial checkpoint), train, and
/// write the run directory. `backend` overrides the configured backend.
TrainingOutcome run_training(const AppConfig& config, const std::filesystem::path& run_dir,
                             std::shared_ptr<Backend> backend = nullptr);

/// CSV `batch_index,val_score,best_so_far,calls,cost` with a header row.
std::string render_curve(const std::vector<RunRecord>& records);

/// Sketch table with a prompt excerpt per step; tool steps carry `(T)`.
std::string render_inspect(const WorkflowState& state);

}  // namespace flowgrad
