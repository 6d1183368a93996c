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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowgrad/backend.hpp"
#include "flowgrad/evaluation.hpp"
#include "flowgrad/prompts.hpp"
#include "flowgrad/run_store.hpp"
#include "flowgrad/runtime.hpp"
#include "flowgrad/tools.hpp"
#include "flowgrad/trainer.hpp"

namespace flowgrad {

struct BackendConfig {
    /// "http", "scripted" or "replay".
    std::string kind = "scripted";
    HttpConfig http;
    /// Rule file for the scripted backend.
    std::filesystem::path script;
    /// Store for the replay backend.
    std::filesystem::path store;
};

struct ToolConfig {
    std::string name;
    std::filesystem::path corpus;
    std::size_t k = 5;
    std::size_t snippet_chars = 600;
};

/// One experiment, read from a single JSON file. Relative paths resolve
/// against the file's directory.
struct AppConfig {
    BackendConfig backend;
    EngineSettings engine;
    PriceTable prices;
    RetryPolicy retry;
    TrainConfig train;
    std::string metric = "em";
    std::string judge_rubric;
    std::vector<ToolConfig> tools;
    std::optional<std::filesystem::path> train_data;
    std::optional<std::filesystem::path> val_data;
    std::optional<std::filesystem::path> test_data;
    std::optional<std::filesystem::path> initial_checkpoint;
    std::optional<std::filesystem::path> prompts_dir;
    /// "logical" or "wall".
    std::string clock = "logical";
};

/// Throws ConfigError (with the offending key or path).
AppConfig config_from_json(const json& j, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

/// Effective configuration with absolute paths; loading it back yields the same config.
json to_json(const AppConfig& config);

/// Owns everything a Runtime points at.
class App {
public:
    /// `backend` overrides the configured one (tests, record/replay wrapping).
    explicit App(const AppConfig& config, std::shared_ptr<Backend> backend = nullptr);

    static std::shared_ptr<Backend> make_backend(const AppConfig& config);

    Runtime& runtime() { return *runtime_; }
    const AppConfig& config() const { return config_; }
    Ledger& ledger() { return *ledger_; }
    std::shared_ptr<Backend> backend() const { return backend_; }
    const Metric& metric() const { return *metric_; }
    const ToolRegistry& tools() const { return tools_; }

private:
    AppConfig config_;
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<Ledger> ledger_;
    std::unique_ptr<LlmClient> client_;
    ToolRegistry tools_;
    PromptLibrary prompts_;
    std::unique_ptr<Runtime> runtime_;
    std::unique_ptr<Metric> metric_;
};

}  // namespace flowgrad
