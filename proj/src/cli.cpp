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
#include "flowgrad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <sstream>

#include "flowgrad/error.hpp"
#include "flowgrad/optimizer.hpp"

namespace flowgrad {

namespace fs = std::filesystem;

namespace {

std::string format_number(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

std::string excerpt(const std::string& text, std::size_t max_bytes) {
    std::string flat;
    for (char c : text) {
        if (c == '\n' || c == '\r' || c == '\t') {
            if (!flat.empty() && flat.back() != ' ')
                flat.push_back(' ');
        } else if (c == '|') {
            flat += "\\|";
        } else {
            flat.push_back(c);
        }
    }
    if (flat.size() <= max_bytes)
        return flat;
    return utf8_truncate(flat, max_bytes) + "...";
}

std::vector<Sample> require_dataset(const std::optional<fs::path>& path, const char* which) {
    if (!path)
        throw ConfigError(std::string("config: data.") + which + " is required");
    if (!fs::exists(*path))
        throw ConfigError(std::string("dataset not found: ") + path->string());
    auto samples = load_dataset(*path);
    if (samples.empty())
        throw ConfigError(std::string("dataset is empty: ") + path->string());
    return samples;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message) {
    err << compact_dump({{"error", kind}, {"message", message}}) << "\n";
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> lines;
    if (!fs::exists(path))
        return lines;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return lines;
}

/// Drops a timestamp member before comparison (wall-clock runs).
std::string strip_key(const std::string& line, const char* key) {
    auto j = json::parse(line);
    j.erase(key);
    return compact_dump(j);
}

bool same_jsonl(const fs::path& a, const fs::path& b, const char* volatile_key) {
    if (!volatile_key)
        return fs::exists(a) && fs::exists(b) && read_text_file(a) == read_text_file(b);
    const auto la = read_lines(a);
    const auto lb = read_lines(b);
    if (la.size() != lb.size())
        return false;
    for (std::size_t i = 0; i < la.size(); ++i) {
        if (strip_key(la[i], volatile_key) != strip_key(lb[i], volatile_key))
            return false;
    }
    return true;
}

int cmd_train(const std::string& config_path, const std::string& run_dir, const json& overrides, std::ostream& out) {
    auto config = load_config(config_path);
    if (overrides.contains("mode"))
        config.train.mode = train_mode_from_string(overrides["mode"].get<std::string>());
    if (overrides.contains("seed"))
        config.train.seed = overrides["seed"].get<std::uint64_t>();
    if (overrides.contains("batch_size"))
        config.train.batch_size = overrides["batch_size"].get<std::size_t>();
    if (overrides.contains("epochs"))
        config.train.epochs = overrides["epochs"].get<std::size_t>();
    if (overrides.contains("max_calls"))
        config.train.budget.max_calls = overrides["max_calls"].get<std::size_t>();
    if (overrides.contains("max_cost_usd"))
        config.train.budget.max_cost_micro_usd = std::llround(overrides["max_cost_usd"].get<double>() * 1e6);
    if (overrides.contains("initial_checkpoint"))
        config.initial_checkpoint = fs::absolute(overrides["initial_checkpoint"].get<std::string>());
    if (overrides.contains("save_traces"))
        config.train.save_traces = true;
    config.train.validate();

    const auto outcome = run_training(config, run_dir);
    json summary = {{"best_batch", outcome.result.best_batch ? json(*outcome.result.best_batch) : json()},
                    {"best_val_score", outcome.result.best_score},
                    {"batches", outcome.result.records.size()},
                    {"calls", outcome.calls},
                    {"cost_usd", format_usd(outcome.cost_micro_usd)},
                    {"budget_exceeded", outcome.result.budget_exceeded}};
    out << compact_dump(summary) << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, const std::string& dataset,
             const std::string& metric_name, std::ostream& out) {
    auto config = load_config(config_path);
    if (!metric_name.empty())
        config.metric = metric_name;
    if (!fs::exists(checkpoint))
        throw ConfigError("checkpoint not found: " + checkpoint);
    const auto state = load_checkpoint(checkpoint);
    const auto samples = require_dataset(fs::path(dataset), "eval");
    App app(config);
    const auto registered = app.tools().names();
    const auto violations = validate_state(state, config.engine.limits, &registered);
    if (!violations.empty())
        throw InvalidState("checkpoint is not runnable: " + violations.front().str());
    const auto summary = evaluate(app.runtime(), state, samples, app.metric());
    out << compact_dump({{"metric", summary.metric}, {"mean", summary.mean_score}, {"n", samples.size()}}) << "\n";
    return kExitOk;
}

int cmd_replay(const std::string& run_dir, const std::string& out_dir, std::ostream& out) {
    const fs::path dir(run_dir);
    const auto config_path = dir / "config.json";
    if (!fs::exists(config_path))
        throw ConfigError("run directory has no config.json: " + run_dir);
    auto config = config_from_json(json::parse(read_text_file(config_path)), fs::absolute(dir));
    const auto store = config.backend.kind == "replay" ? config.backend.store : dir / "replay.jsonl";
    if (!fs::exists(store))
        throw ConfigError("replay store not found: " + store.string());
    auto backend = std::make_shared<ReplayBackend>(store, ReplayMode::Replay);
    run_training(config, out_dir, backend);

    const bool wall = config.clock == "wall";
    const fs::path other(out_dir);
    json files = {
        {"records.jsonl", same_jsonl(dir / "records.jsonl", other / "records.jsonl", wall ? "timestamp" : nullptr)},
        {"ledger.jsonl", same_jsonl(dir / "ledger.jsonl", other / "ledger.jsonl", wall ? "ts" : nullptr)},
        {"best.json", same_jsonl(dir / "best.json", other / "best.json", nullptr)},
    };
    bool identical = true;
    for (const auto& [name, same] : files.items())
        identical = identical && same.get<bool>();
    out << compact_dump({{"identical", identical}, {"files", files}}) << "\n";
    return identical ? kExitOk : kExitRuntime;
}

}  // namespace

std::string render_curve(const std::vector<RunRecord>& records) {
    std::string out = "batch_index,val_score,best_so_far,calls,cost\n";
    double best = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        best = i == 0 ? r.val_score : std::max(best, r.val_score);
        out += std::to_string(r.batch_index) + "," + format_number(r.val_score) + "," + format_number(best) + "," +
               std::to_string(r.api_calls_so_far) + "," + format_usd(r.cost_so_far_micro_usd) + "\n";
    }
    return out;
}

std::string render_inspect(const WorkflowState& state) {
    std::string out = "| Step | Type | Tools | Executor | Prompt |\n|------|------|-------|----------|--------|\n";
    for (const auto& step : state.sketch) {
        const auto* exec = state.find_executor(step.executor_name);
        std::string tools;
        for (const auto& t : step.tool_names)
            tools += (tools.empty() ? "" : ", ") + t;
        out += "| " + std::to_string(step.step_id) + (step.tool_names.empty() ? "" : " (T)") + " | " +
               step_type_label(state, step) + " | " + (tools.empty() ? "-" : tools) + " | " + step.executor_name +
               " | " + (exec ? excerpt(exec->prompt, 72) : "(missing)") + " |\n";
    }
    out += "Steps marked (T) use external tools. Revision " + std::to_string(state.revision) + ", sketch revision " +
           std::to_string(state.sketch_revision) + ".\n";
    return out;
}

TrainingOutcome run_training(const AppConfig& config, const fs::path& run_dir, std::shared_ptr<Backend> backend) {
    const auto train_set = require_dataset(config.train_data, "train");
    const auto val_set = require_dataset(config.val_data, "val");
    std::optional<WorkflowState> initial;
    if (config.initial_checkpoint) {
        if (!fs::exists(*config.initial_checkpoint))
            throw ConfigError("initial checkpoint not found: " + config.initial_checkpoint->string());
        initial = load_checkpoint(*config.initial_checkpoint);
    }

    for (const char* name : {"records.jsonl", "ledger.jsonl", "best.json"}) {
        if (fs::exists(run_dir / name))
            throw ConfigError("run directory already holds a run: " + run_dir.string());
    }
    fs::create_directories(run_dir);
    write_text_file_atomic(run_dir / "config.json", canonical_dump(to_json(config)));

    if (!backend) {
        backend = App::make_backend(config);
        if (config.backend.kind != "replay")
            backend = std::make_shared<ReplayBackend>(run_dir / "replay.jsonl", ReplayMode::Record, backend);
    }
    App app(config, backend);
    app.ledger().attach_sink(run_dir / "ledger.jsonl");
    RunStore store(run_dir);
    auto& rt = app.runtime();

    TrainingOutcome outcome;
    if (initial) {
        outcome.initial_state = *initial;
    } else {
        rt.client.set_budget(config.train.budget);
        const auto n = std::min(config.train.batch_size, train_set.size());
        outcome.initial_state = bootstrap_workflow(rt, std::span(train_set).first(n), app.metric());
        store.note({{"event", "bootstrap"}, {"steps", outcome.initial_state.sketch.size()}});
    }
    save_checkpoint(run_dir / "initial.json", outcome.initial_state);

    outcome.result = train(rt, config.train, train_set, val_set, outcome.initial_state, app.metric(), &store);
    if (!fs::exists(store.best_path()))
        store.write_best(outcome.result.best_state);
    store.note({{"event", "finished"},
                {"batches", outcome.result.records.size()},
                {"budget_exceeded", outcome.result.budget_exceeded},
                {"inner_update_rounds", outcome.result.stats.inner_update_rounds},
                {"outer_steps", outcome.result.stats.outer_steps},
                {"plans_applied", outcome.result.stats.plans_applied},
                {"plans_rejected", outcome.result.stats.plans_rejected}});
    outcome.calls = app.ledger().size();
    outcome.cost_micro_usd = app.ledger().total_cost_micro_usd();
    return outcome;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bilevel textual-gradient workflow optimizer"};
    app.require_subcommand(1);

    std::string config_path, run_dir, checkpoint, dataset, metric, out_dir, mode, initial;
    std::uint64_t seed = 0;
    std::size_t batch_size = 0, epochs = 0, max_calls = 0;
    double max_cost = 0.0;
    bool save_traces = false;

    auto* train_cmd = app.add_subcommand("train", "Bootstrap (if needed) and train a workflow");
    train_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
    train_cmd->add_option("--run-dir", run_dir, "Output run directory")->required();
    train_cmd->add_option("--mode", mode, "full | prompt_only | no_bilevel | no_layerwise");
    train_cmd->add_option("--seed", seed, "Shuffle seed");
    train_cmd->add_option("--batch-size", batch_size, "Training batch size");
    train_cmd->add_option("--epochs", epochs, "Passes over the training set");
    train_cmd->add_option("--max-calls", max_calls, "Stop after this many model calls");
    train_cmd->add_option("--max-cost", max_cost, "Stop once this many USD are spent");
    train_cmd->add_option("--initial-checkpoint", initial, "Start from this state instead of bootstrapping");
    train_cmd->add_flag("--save-traces", save_traces, "Write execution traces to traces/");

    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    eval_cmd->add_option("--config", config_path, "Experiment config (backend, models, tools)")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "Workflow checkpoint")->required();
    eval_cmd->add_option("--dataset", dataset, "JSONL dataset")->required();
    eval_cmd->add_option("--metric", metric, "em | f1 | judge (default: config metric)");

    auto* curve_cmd = app.add_subcommand("curve", "Validation curve of a run as CSV");
    curve_cmd->add_option("run_dir", run_dir, "Run directory")->required();

    auto* inspect_cmd = app.add_subcommand("inspect", "Print a checkpoint's steps");
    inspect_cmd->add_option("checkpoint", checkpoint, "Workflow checkpoint")->required();

    auto* replay_cmd = app.add_subcommand("replay", "Re-run a recorded run and compare outputs byte for byte");
    replay_cmd->add_option("run_dir", run_dir, "Recorded run directory")->required();
    replay_cmd->add_option("--out", out_dir, "Directory for the replayed run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        error_line(err, "usage", e.what());
        return kExitUsage;
    }

    try {
        if (*train_cmd) {
            json overrides = json::object();
            if (!mode.empty())
                overrides["mode"] = mode;
            if (train_cmd->count("--seed"))
                overrides["seed"] = seed;
            if (train_cmd->count("--batch-size"))
                overrides["batch_size"] = batch_size;
            if (train_cmd->count("--epochs"))
                overrides["epochs"] = epochs;
            if (train_cmd->count("--max-calls"))
                overrides["max_calls"] = max_calls;
            if (train_cmd->count("--max-cost"))
                overrides["max_cost_usd"] = max_cost;
            if (!initial.empty())
                overrides["initial_checkpoint"] = initial;
            if (save_traces)
                overrides["save_traces"] = true;
            return cmd_train(config_path, run_dir, overrides, out);
        }
        if (*eval_cmd)
            return cmd_eval(config_path, checkpoint, dataset, metric, out);
        if (*curve_cmd) {
            const auto path = fs::path(run_dir) / "records.jsonl";
            if (!fs::exists(path))
                throw ConfigError("records file not found: " + path.string());
            out << render_curve(load_records(path));
            return kExitOk;
        }
        if (*inspect_cmd) {
            if (!fs::exists(checkpoint))
                throw ConfigError("checkpoint not found: " + checkpoint);
            out << render_inspect(load_checkpoint(checkpoint));
            return kExitOk;
        }
        if (*replay_cmd)
            return cmd_replay(run_dir, out_dir, out);
    } catch (const ConfigError& e) {
        error_line(err, "config", e.what());
        return kExitUsage;
    } catch (const ParseError& e) {
        error_line(err, "parse", e.what());
        return kExitUsage;
    } catch (const DuplicateId& e) {
        error_line(err, "duplicate_id", e.what());
        return kExitUsage;
    } catch (const SchemaVersionMismatch& e) {
        error_line(err, "schema_version", e.what());
        return kExitUsage;
    } catch (const InvalidState& e) {
        error_line(err, "invalid_state", e.what());
        return kExitUsage;
    } catch (const json::exception& e) {
        error_line(err, "config", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        error_line(err, "runtime", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace flowgrad
