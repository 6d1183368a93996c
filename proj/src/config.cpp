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
#include "flowgrad/config.hpp"

#include <cmath>
#include <set>

#include "flowgrad/error.hpp"

namespace flowgrad {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopLevelKeys = {
    "backend",  "models",     "prices",    "retry",         "schedule",          "mode",
    "seed",     "budget",     "metric",    "judge_rubric",  "tools",             "data",
    "initial_checkpoint",     "prompts_dir", "clock",       "save_traces",       "limits",
    "loop_sentinel",          "json_repairs", "gradient_char_cap", "metrics_info",
};

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key) || j[key].is_null())
        return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for " + where + key);
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative())
        path = base / path;
    return path.lexically_normal();
}

std::optional<fs::path> optional_path(const json& j, const char* key, const fs::path& base, const std::string& where) {
    const auto s = get_or<std::string>(j, key, "", where);
    if (s.empty())
        return std::nullopt;
    return resolve(base, s);
}

std::size_t positive(const json& j, const char* key, std::size_t fallback, const std::string& where) {
    if (!j.contains(key) || j[key].is_null())
        return fallback;
    if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 1)
        throw ConfigError("config: " + where + key + " must be a positive integer");
    return j[key].get<std::size_t>();
}

ModelSettings read_model(const json& j, ModelSettings fallback, const std::string& where) {
    if (j.is_null())
        return fallback;
    if (!j.is_object())
        throw ConfigError("config: " + where + " must be an object");
    fallback.model_id = get_or<std::string>(j, "model", fallback.model_id, where + ".");
    fallback.temperature = get_or<double>(j, "temperature", fallback.temperature, where + ".");
    fallback.max_output_tokens =
        static_cast<int>(positive(j, "max_tokens", static_cast<std::size_t>(fallback.max_output_tokens), where + "."));
    if (fallback.temperature < 0)
        throw ConfigError("config: " + where + ".temperature must be >= 0");
    return fallback;
}

json model_json(const ModelSettings& m) {
    return {{"model", m.model_id}, {"temperature", m.temperature}, {"max_tokens", m.max_output_tokens}};
}

std::string path_string(const std::optional<fs::path>& p) {
    return p ? p->string() : std::string();
}

}  // namespace

AppConfig config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object())
        throw ConfigError("config: top level must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!kTopLevelKeys.count(key))
            throw ConfigError("config: unknown key '" + key + "'");
    }
    AppConfig c;

    const auto backend = j.value("backend", json::object());
    c.backend.kind = get_or<std::string>(backend, "kind", "scripted", "backend.");
    if (c.backend.kind == "http") {
        c.backend.http.endpoint = get_or<std::string>(backend, "endpoint", "", "backend.");
        if (c.backend.http.endpoint.empty())
            throw ConfigError("config: backend.endpoint is required for the http backend");
        c.backend.http.api_key_env = get_or<std::string>(backend, "api_key_env", "OPENAI_API_KEY", "backend.");
        c.backend.http.timeout = std::chrono::seconds(positive(backend, "timeout_s", 120, "backend."));
    } else if (c.backend.kind == "scripted") {
        const auto script = optional_path(backend, "script", base_dir, "backend.");
        if (!script)
            throw ConfigError("config: backend.script is required for the scripted backend");
        c.backend.script = *script;
    } else if (c.backend.kind == "replay") {
        const auto store = optional_path(backend, "store", base_dir, "backend.");
        if (!store)
            throw ConfigError("config: backend.store is required for the replay backend");
        c.backend.store = *store;
    } else {
        throw ConfigError("config: unknown backend kind '" + c.backend.kind + "'");
    }

    const auto models = j.value("models", json::object());
    c.engine.executor = read_model(models.value("executor", json()), c.engine.executor, "models.executor");
    c.engine.meta = read_model(models.value("meta", json()), c.engine.meta, "models.meta");

    try {
        c.prices = price_table_from_json(j.value("prices", json()));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad price table: ") + e.what());
    }

    const auto retry = j.value("retry", json::object());
    c.retry.max_attempts = static_cast<int>(positive(retry, "max_attempts", 4, "retry."));
    c.retry.initial_backoff = std::chrono::milliseconds(get_or<std::int64_t>(retry, "initial_backoff_ms", 500, "retry."));
    c.retry.max_backoff = std::chrono::milliseconds(get_or<std::int64_t>(retry, "max_backoff_ms", 8000, "retry."));

    const auto schedule = j.value("schedule", json::object());
    c.train.batch_size = positive(schedule, "batch_size", 5, "schedule.");
    c.train.bilevel_rounds = positive(schedule, "bilevel_rounds", 2, "schedule.");
    c.train.inner_steps = positive(schedule, "inner_steps", 5, "schedule.");
    c.train.outer_steps = positive(schedule, "outer_steps", 1, "schedule.");
    c.train.epochs = positive(schedule, "epochs", 1, "schedule.");
    c.train.shuffle = get_or<bool>(schedule, "shuffle", false, "schedule.");
    c.train.recompute_forward = get_or<bool>(schedule, "recompute_forward", true, "schedule.");
    if (schedule.contains("val_subsample") && !schedule["val_subsample"].is_null())
        c.train.val_subsample = positive(schedule, "val_subsample", 1, "schedule.");
    c.train.mode = train_mode_from_string(get_or<std::string>(j, "mode", "full", ""));
    c.train.seed = get_or<std::uint64_t>(j, "seed", 0, "");
    c.train.save_traces = get_or<bool>(j, "save_traces", false, "");

    const auto budget = j.value("budget", json::object());
    if (budget.contains("max_calls") && !budget["max_calls"].is_null())
        c.train.budget.max_calls = positive(budget, "max_calls", 1, "budget.");
    if (budget.contains("max_cost_usd") && !budget["max_cost_usd"].is_null()) {
        const auto usd = get_or<double>(budget, "max_cost_usd", 0.0, "budget.");
        if (!(usd > 0))
            throw ConfigError("config: budget.max_cost_usd must be positive");
        c.train.budget.max_cost_micro_usd = std::llround(usd * 1e6);
    }

    c.metric = get_or<std::string>(j, "metric", "em", "");
    c.judge_rubric = get_or<std::string>(j, "judge_rubric", "", "");

    const auto tools = j.value("tools", json::array());
    if (!tools.is_array())
        throw ConfigError("config: tools must be an array");
    for (const auto& t : tools) {
        ToolConfig tool;
        tool.name = get_or<std::string>(t, "name", "", "tools[].");
        const auto corpus = optional_path(t, "corpus", base_dir, "tools[].");
        if (tool.name.empty() || !corpus)
            throw ConfigError("config: every tool needs a name and a corpus");
        tool.corpus = *corpus;
        tool.k = positive(t, "k", 5, "tools[].");
        tool.snippet_chars = positive(t, "snippet_chars", 600, "tools[].");
        c.tools.push_back(std::move(tool));
    }

    const auto data = j.value("data", json::object());
    c.train_data = optional_path(data, "train", base_dir, "data.");
    c.val_data = optional_path(data, "val", base_dir, "data.");
    c.test_data = optional_path(data, "test", base_dir, "data.");
    c.initial_checkpoint = optional_path(j, "initial_checkpoint", base_dir, "");
    c.prompts_dir = optional_path(j, "prompts_dir", base_dir, "");

    c.clock = get_or<std::string>(j, "clock", "logical", "");
    if (c.clock != "logical" && c.clock != "wall")
        throw ConfigError("config: clock must be logical or wall");

    const auto limits = j.value("limits", json::object());
    c.engine.limits.max_steps = positive(limits, "max_steps", 12, "limits.");
    c.engine.limits.max_loop_iterations = static_cast<int>(positive(limits, "max_loop_iterations", 8, "limits."));
    c.engine.loop_sentinel = get_or<std::string>(j, "loop_sentinel", "VERDICT: DONE", "");
    c.engine.json_repairs = static_cast<int>(get_or<std::int64_t>(j, "json_repairs", 3, ""));
    if (c.engine.json_repairs < 0)
        throw ConfigError("config: json_repairs must be >= 0");
    c.engine.gradient_char_cap = positive(j, "gradient_char_cap", 4000, "");
    c.engine.metrics_info = get_or<std::string>(j, "metrics_info", "", "");

    c.train.validate();
    return c;
}

AppConfig load_config(const fs::path& path) {
    if (!fs::exists(path))
        throw ConfigError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const AppConfig& c) {
    json backend = {{"kind", c.backend.kind}};
    if (c.backend.kind == "http") {
        backend["endpoint"] = c.backend.http.endpoint;
        backend["api_key_env"] = c.backend.http.api_key_env;
        backend["timeout_s"] = c.backend.http.timeout.count();
    } else if (c.backend.kind == "scripted") {
        backend["script"] = c.backend.script.string();
    } else {
        backend["store"] = c.backend.store.string();
    }
    json prices = json::object();
    for (const auto& [model, price] : c.prices) {
        prices[model] = {{"input_per_1m", static_cast<double>(price.input_micro_per_1m) / 1e6},
                         {"output_per_1m", static_cast<double>(price.output_micro_per_1m) / 1e6}};
    }
    json tools = json::array();
    for (const auto& t : c.tools)
        tools.push_back({{"name", t.name}, {"corpus", t.corpus.string()}, {"k", t.k}, {"snippet_chars", t.snippet_chars}});
    json budget = json::object();
    if (c.train.budget.max_calls)
        budget["max_calls"] = *c.train.budget.max_calls;
    if (c.train.budget.max_cost_micro_usd)
        budget["max_cost_usd"] = static_cast<double>(*c.train.budget.max_cost_micro_usd) / 1e6;
    json schedule = {{"batch_size", c.train.batch_size},         {"bilevel_rounds", c.train.bilevel_rounds},
                     {"inner_steps", c.train.inner_steps},       {"outer_steps", c.train.outer_steps},
                     {"epochs", c.train.epochs},                 {"shuffle", c.train.shuffle},
                     {"recompute_forward", c.train.recompute_forward}};
    if (c.train.val_subsample)
        schedule["val_subsample"] = *c.train.val_subsample;

    json j = {
        {"backend", backend},
        {"models", {{"executor", model_json(c.engine.executor)}, {"meta", model_json(c.engine.meta)}}},
        {"prices", prices},
        {"retry",
         {{"max_attempts", c.retry.max_attempts},
          {"initial_backoff_ms", c.retry.initial_backoff.count()},
          {"max_backoff_ms", c.retry.max_backoff.count()}}},
        {"schedule", schedule},
        {"mode", to_string(c.train.mode)},
        {"seed", c.train.seed},
        {"budget", budget},
        {"metric", c.metric},
        {"judge_rubric", c.judge_rubric},
        {"tools", tools},
        {"data",
         {{"train", path_string(c.train_data)}, {"val", path_string(c.val_data)}, {"test", path_string(c.test_data)}}},
        {"initial_checkpoint", path_string(c.initial_checkpoint)},
        {"prompts_dir", path_string(c.prompts_dir)},
        {"clock", c.clock},
        {"save_traces", c.train.save_traces},
        {"limits",
         {{"max_steps", c.engine.limits.max_steps}, {"max_loop_iterations", c.engine.limits.max_loop_iterations}}},
        {"loop_sentinel", c.engine.loop_sentinel},
        {"json_repairs", c.engine.json_repairs},
        {"gradient_char_cap", c.engine.gradient_char_cap},
        {"metrics_info", c.engine.metrics_info},
    };
    return j;
}

// ---------------------------------------------------------------------------
// App
// ---------------------------------------------------------------------------

std::shared_ptr<Backend> App::make_backend(const AppConfig& config) {
    const auto& b = config.backend;
    if (b.kind == "http")
        return std::make_shared<HttpBackend>(b.http);
    if (b.kind == "scripted") {
        if (!fs::exists(b.script))
            throw ConfigError("script file not found: " + b.script.string());
        json script;
        try {
            script = json::parse(read_text_file(b.script));
        } catch (const json::exception& e) {
            throw ConfigError("script " + b.script.string() + ": " + e.what());
        }
        return ScriptedBackend::from_rules(script);
    }
    if (!fs::exists(b.store))
        throw ConfigError("replay store not found: " + b.store.string());
    return std::make_shared<ReplayBackend>(b.store, ReplayMode::Replay);
}

App::App(const AppConfig& config, std::shared_ptr<Backend> backend)
    : config_(config),
      backend_(backend ? std::move(backend) : make_backend(config)),
      prompts_(config.prompts_dir ? PromptLibrary::with_overrides(*config.prompts_dir) : PromptLibrary::builtin()) {
    std::shared_ptr<Clock> clock;
    if (config.clock == "wall")
        clock = std::make_shared<WallClock>();
    else
        clock = std::make_shared<LogicalClock>();
    ledger_ = std::make_shared<Ledger>(config.prices, clock);
    client_ = std::make_unique<LlmClient>(backend_, ledger_, config.retry);

    for (const auto& t : config.tools) {
        if (!fs::exists(t.corpus))
            throw ConfigError("corpus not found: " + t.corpus.string());
        auto corpus = std::make_shared<const Corpus>(Corpus::load(t.corpus));
        tools_.add(std::make_shared<SearchTool>(t.name, corpus, t.k, t.snippet_chars));
    }

    EngineSettings settings = config.engine;
    runtime_ = std::make_unique<Runtime>(Runtime{*client_, tools_, prompts_, settings});
    if (config.metric == "judge") {
        metric_ = std::make_unique<JudgeMetric>(*client_, prompts_, config.engine.meta, config.judge_rubric);
    } else {
        metric_ = make_metric(config.metric);
    }
    if (runtime_->settings.metrics_info.empty())
        runtime_->settings.metrics_info = metric_->info();
}

}  // namespace flowgrad
