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
#include "flowgrad/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "flowgrad/error.hpp"
#include "flowgrad/forward.hpp"
#include "flowgrad/gradient.hpp"
#include "flowgrad/optimizer.hpp"

namespace flowgrad {

namespace {

struct SampleRun {
    const Sample* sample;
    ExecutionTrace trace;
    EvalResult eval;
};

class Session {
public:
    Session(Runtime& rt, const TrainConfig& config, const Metric& metric, RunStore* store)
        : rt_(rt), config_(config), metric_(metric), store_(store) {}

    WorkflowState state;
    TrainStats stats;
    std::size_t batch_index = 0;

    void run_batch(std::span<const Sample* const> batch) {
        for (std::size_t round = 0; round < config_.bilevel_rounds; ++round) {
            if (config_.mode == TrainMode::NoBilevel) {
                for (std::size_t s = 0; s < config_.outer_steps + config_.inner_steps; ++s)
                    single_layer_step(batch);
                continue;
            }
            if (config_.mode != TrainMode::PromptOnly) {
                for (std::size_t s = 0; s < config_.outer_steps; ++s)
                    outer_step(batch);
            }
            std::vector<SampleRun> cached;
            for (std::size_t s = 0; s < config_.inner_steps; ++s) {
                if (s == 0 || config_.recompute_forward)
                    cached = forward(batch, "inner");
                inner_step(cached);
            }
        }
    }

private:
    std::vector<SampleRun> forward(std::span<const Sample* const> batch, const std::string& phase) {
        std::vector<SampleRun> runs;
        runs.reserve(batch.size());
        for (const auto* sample : batch) {
            auto trace = run_workflow(rt_, state, *sample);
            auto eval = score(*sample, trace);
            if (store_ && config_.save_traces)
                store_->save_trace(batch_index, phase, trace);
            runs.push_back({sample, std::move(trace), std::move(eval)});
        }
        return runs;
    }

    EvalResult score(const Sample& sample, const ExecutionTrace& trace) const {
        if (!trace.complete()) {
            EvalResult r{metric_.name(), 0.0, {}};
            const auto& record = trace.records.back();
            r.feedback = render_feedback(metric_.name(), 0.0, "", sample.answer,
                                         "Execution failed at step " + std::to_string(record.step_id) + ": " +
                                             record.error.value_or("unknown error"));
            return r;
        }
        return metric_.score(sample, trace.final_output);
    }

    void note(json event) {
        if (!store_)
            return;
        event["batch_index"] = batch_index;
        store_->note(event);
    }

    void dropped(const SampleRun& run, const std::string& phase, const GradientUnavailable& e) {
        ++stats.gradients_dropped;
        note({{"event", "gradient_unavailable"}, {"phase", phase}, {"sample_id", run.sample->id}, {"detail", e.what()}});
    }

    void outer_step(std::span<const Sample* const> batch) {
        ++stats.outer_steps;
        const auto runs = forward(batch, "outer");
        std::vector<TextualGradient> gradients;
        std::vector<std::string> questions;
        for (const auto& run : runs) {
            questions.push_back(run.sample->question);
            try {
                gradients.push_back(grad_workflow(rt_, {state, run.trace, *run.sample, run.eval}));
            } catch (const GradientUnavailable& e) {
                dropped(run, "outer", e);
            }
        }
        if (gradients.empty())
            return;
        auto update = update_workflow(rt_, state, gradients, gradients.size(), questions);
        if (update.rejected) {
            ++stats.plans_rejected;
            note({{"event", "plan_rejected"}, {"detail", *update.rejected}});
            return;
        }
        if (update.decision.should_update && update.state.revision != state.revision) {
            ++stats.plans_applied;
            note({{"event", "plan_applied"},
                  {"steps", update.state.sketch.size()},
                  {"init_calls", update.init_calls},
                  {"revision", update.state.revision}});
        }
        state = std::move(update.state);
    }

    void inner_step(const std::vector<SampleRun>& runs) {
        ++stats.inner_update_rounds;
        const auto mode =
            config_.mode == TrainMode::NoLayerwise ? BackwardMode::Joint : BackwardMode::Layerwise;
        std::vector<std::pair<std::string, std::map<StepId, TextualGradient>>> per_sample;
        for (const auto& run : runs) {
            try {
                per_sample.emplace_back(run.sample->id,
                                        backward(rt_, {state, run.trace, *run.sample, run.eval}, mode));
            } catch (const GradientUnavailable& e) {
                dropped(run, "inner", e);
            }
        }
        if (per_sample.empty())
            return;

        if (config_.mode == TrainMode::NoLayerwise) {
            std::vector<TextualGradient> all;
            for (const auto& [id, grads] : per_sample) {
                for (const auto& [step, g] : grads) {
                    if (!g.synthesized)
                        all.push_back(g);
                }
            }
            if (all.empty())
                return;
            const auto before = state.revision;
            state = joint_update(rt_, state, all, per_sample.size());
            if (state.revision != before)
                ++stats.prompt_updates;
            else
                ++stats.prompt_updates_skipped;
            return;
        }

        for (const auto& name : live_executors(state)) {
            std::vector<TextualGradient> mine;
            std::set<std::string> contributing;
            for (const auto& [id, grads] : per_sample) {
                for (const auto& step : state.sketch) {
                    if (step.executor_name != name)
                        continue;
                    auto it = grads.find(step.step_id);
                    if (it == grads.end() || it->second.synthesized)
                        continue;
                    mine.push_back(it->second);
                    contributing.insert(id);
                }
            }
            if (mine.empty())
                continue;
            const auto& exec = state.executors.at(name);
            auto update = update_prompt(rt_, state, exec, mine, contributing.size());
            if (!update) {
                ++stats.prompt_updates_skipped;
                note({{"event", "prompt_update_skipped"}, {"executor", name}});
                continue;
            }
            state = apply_prompt_update(state, name, *update);
            ++stats.prompt_updates;
        }
    }

    void single_layer_step(std::span<const Sample* const> batch) {
        ++stats.single_layer_steps;
        const auto runs = forward(batch, "single_layer");
        std::vector<TextualGradient> gradients;
        for (const auto& run : runs) {
            try {
                gradients.push_back(single_layer_gradient(rt_, {state, run.trace, *run.sample, run.eval}));
            } catch (const GradientUnavailable& e) {
                dropped(run, "single_layer", e);
            }
        }
        if (gradients.empty())
            return;
        auto update = single_layer_update(rt_, state, gradients, gradients.size());
        if (update.rejected) {
            ++stats.plans_rejected;
            note({{"event", "plan_rejected"}, {"detail", *update.rejected}});
            return;
        }
        if (update.state.revision != state.revision)
            ++stats.plans_applied;
        state = std::move(update.state);
    }

    Runtime& rt_;
    const TrainConfig& config_;
    const Metric& metric_;
    RunStore* store_;
};

}  // namespace

std::string to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::Full:
        return "full";
    case TrainMode::PromptOnly:
        return "prompt_only";
    case TrainMode::NoBilevel:
        return "no_bilevel";
    case TrainMode::NoLayerwise:
        return "no_layerwise";
    }
    return "full";
}

TrainMode train_mode_from_string(std::string_view s) {
    if (s == "full")
        return TrainMode::Full;
    if (s == "prompt_only")
        return TrainMode::PromptOnly;
    if (s == "no_bilevel")
        return TrainMode::NoBilevel;
    if (s == "no_layerwise")
        return TrainMode::NoLayerwise;
    throw ConfigError("unknown training mode: " + std::string(s));
}

void TrainConfig::validate() const {
    if (batch_size == 0 || bilevel_rounds == 0 || inner_steps == 0 || outer_steps == 0 || epochs == 0)
        throw ConfigError("training counts must all be >= 1");
    if (budget.max_calls && *budget.max_calls == 0)
        throw ConfigError("budget.max_calls must be positive");
    if (budget.max_cost_micro_usd && *budget.max_cost_micro_usd <= 0)
        throw ConfigError("budget.max_cost_usd must be positive");
    if (val_subsample && *val_subsample == 0)
        throw ConfigError("val_subsample must be positive");
}

EvalSummary evaluate(Runtime& rt, const WorkflowState& state, std::span<const Sample> dataset, const Metric& metric) {
    if (dataset.empty())
        throw std::invalid_argument("evaluate: empty dataset");
    EvalSummary summary;
    summary.metric = metric.name();
    double total = 0.0;
    for (const auto& sample : dataset) {
        const auto trace = run_workflow(rt, state, sample);
        EvalResult result;
        if (trace.complete()) {
            result = metric.score(sample, trace.final_output);
        } else {
            ++summary.failures;
            const auto& record = trace.records.back();
            result = {metric.name(), 0.0,
                      render_feedback(metric.name(), 0.0, "", sample.answer,
                                      "Execution failed at step " + std::to_string(record.step_id) + ": " +
                                          record.error.value_or("unknown error"))};
        }
        total += result.score;
        summary.predictions.push_back(trace.final_output);
        summary.per_sample.push_back(std::move(result));
    }
    summary.mean_score = total / static_cast<double>(dataset.size());
    return summary;
}

TrainResult train(Runtime& rt, const TrainConfig& config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const WorkflowState& state0, const Metric& metric,
                  RunStore* store, const RecordCallback& on_record) {
    config.validate();
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: datasets must be nonempty");
    {
        const auto registered = rt.tools.names();
        const auto violations = validate_state(state0, rt.settings.limits, &registered);
        if (!violations.empty())
            throw InvalidState("initial state is invalid: " + violations.front().str());
    }
    rt.client.set_budget(config.budget);

    auto val = val_set;
    if (config.val_subsample && *config.val_subsample < val.size())
        val = val.first(*config.val_subsample);

    TrainResult result;
    result.best_state = state0;
    Session session(rt, config, metric, store);
    session.state = state0;

    std::mt19937_64 rng(config.seed);
    std::vector<const Sample*> order;
    for (const auto& s : train_set)
        order.push_back(&s);

    try {
        for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
            if (config.shuffle)
                std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const auto end = std::min(order.size(), start + config.batch_size);
                const std::span<const Sample* const> batch(order.data() + start, end - start);
                session.batch_index = result.records.size() + 1;
                session.run_batch(batch);

                const auto summary = evaluate(rt, session.state, val, metric);
                RunRecord record;
                record.batch_index = session.batch_index;
                record.val_score = summary.mean_score;
                record.revision = session.state.sketch_revision;
                record.state_revision = session.state.revision;
                record.api_calls_so_far = rt.client.ledger().size();
                record.cost_so_far_micro_usd = rt.client.ledger().total_cost_micro_usd();
                record.timestamp = rt.client.ledger().clock().now();
                ++session.stats.batches;

                if (store) {
                    store->checkpoint(session.state, record.batch_index);
                    store->append_record(record);
                }
                if (!result.best_batch || record.val_score > result.best_score) {
                    result.best_batch = record.batch_index;
                    result.best_score = record.val_score;
                    result.best_state = session.state;
                    if (store)
                        store->write_best(session.state);
                }
                result.records.push_back(record);
                if (on_record)
                    on_record(record, session.state);
            }
        }
    } catch (const BudgetExceeded& e) {
        result.budget_exceeded = true;
        if (store)
            store->note({{"event", "budget_exceeded"}, {"batch_index", session.batch_index}, {"detail", e.what()}});
    }
    result.final_state = session.state;
    result.stats = session.stats;
    return result;
}

}  // namespace flowgrad
