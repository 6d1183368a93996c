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
#include <gtest/gtest.h>

#include <algorithm>

#include "flowgrad/error.hpp"
#include "flowgrad/trainer.hpp"
#include "test_support.hpp"

using namespace flowgrad;
using flowgrad::testing::envelope_step;
using flowgrad::testing::Harness;
using flowgrad::testing::make_chain;
using flowgrad::testing::make_sample;
using flowgrad::testing::meta_responder;
using flowgrad::testing::temp_dir;

namespace {

std::vector<Sample> samples(const std::string& prefix, std::size_t n) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(make_sample(prefix + std::to_string(i), prefix + std::to_string(i) + "?", "yes"));
    return out;
}

ScriptFn constant(const std::string& answer) {
    return meta_responder([answer](const ChatRequest&) { return answer; });
}

std::size_t count(const std::vector<Purpose>& ps, Purpose p) {
    return static_cast<std::size_t>(std::count(ps.begin(), ps.end(), p));
}

/// Calls made during training only, without the validation forwards.
struct ModeRun {
    TrainResult result;
    std::vector<Purpose> purposes;
};

ModeRun run_mode(TrainMode mode, int k) {
    Harness h(constant("no"));
    TrainConfig cfg;
    cfg.mode = mode;
    const auto train_set = samples("t", 5);
    const auto val_set = samples("v", 1);
    ModeRun out;
    out.result = train(h.rt, cfg, train_set, val_set, make_chain(k), ExactMatchMetric());
    out.purposes = h.purposes();
    return out;
}

}  // namespace

TEST(Schedule, DefaultsGiveTwoOuterAndTenInnerRounds) {
    const auto run = run_mode(TrainMode::Full, 3);
    const auto& p = run.purposes;
    EXPECT_EQ(count(p, Purpose::OptimWorkflow), 2u);
    EXPECT_EQ(run.result.stats.outer_steps, 2u);
    EXPECT_EQ(run.result.stats.inner_update_rounds, 10u);
    EXPECT_EQ(count(p, Purpose::GradWorkflow), 10u);
    EXPECT_EQ(count(p, Purpose::GradLoss), 50u);
    EXPECT_EQ(count(p, Purpose::GradCall), 100u);
    EXPECT_EQ(count(p, Purpose::OptimCall), 30u);
    // 2 outer forwards + 10 inner forwards over 5 samples, then 1 validation run; K=3.
    EXPECT_EQ(count(p, Purpose::Forward), (2u * 5 + 10u * 5 + 1) * 3);
    EXPECT_EQ(run.result.records.size(), 1u);
}

TEST(Schedule, InnerForwardCanBeReused) {
    Harness h(constant("no"));
    TrainConfig cfg;
    cfg.recompute_forward = false;
    const auto train_set = samples("t", 5);
    const auto val_set = samples("v", 1);
    train(h.rt, cfg, train_set, val_set, make_chain(1), ExactMatchMetric());
    EXPECT_EQ(h.count(Purpose::Forward), 2u * 5 + 2u * 5 + 1);
}

TEST(Schedule, PromptOnlyNeverTouchesStructure) {
    const auto run = run_mode(TrainMode::PromptOnly, 3);
    EXPECT_EQ(count(run.purposes, Purpose::OptimWorkflow), 0u);
    EXPECT_EQ(count(run.purposes, Purpose::GradWorkflow), 0u);
    EXPECT_EQ(run.result.stats.inner_update_rounds, 10u);
    EXPECT_EQ(run.result.records[0].revision, 0u);
    EXPECT_GT(run.result.records[0].state_revision, 0u);
}

TEST(Schedule, NoBilevelUsesSingleLayerSteps) {
    const auto run = run_mode(TrainMode::NoBilevel, 3);
    const auto& p = run.purposes;
    EXPECT_EQ(run.result.stats.single_layer_steps, 12u);
    EXPECT_EQ(count(p, Purpose::OptimWorkflow), 12u);
    EXPECT_EQ(count(p, Purpose::GradLoss), 60u);
    EXPECT_EQ(count(p, Purpose::GradCall), 0u);
    EXPECT_EQ(count(p, Purpose::GradWorkflow), 0u);
    EXPECT_EQ(count(p, Purpose::OptimCall), 0u);
}

TEST(Schedule, NoLayerwiseUsesJointCalls) {
    const auto run = run_mode(TrainMode::NoLayerwise, 3);
    const auto& p = run.purposes;
    EXPECT_EQ(count(p, Purpose::OptimWorkflow), 2u);
    EXPECT_EQ(count(p, Purpose::GradLoss), 50u);
    EXPECT_EQ(count(p, Purpose::GradCall), 0u);
    EXPECT_EQ(count(p, Purpose::OptimCall), 10u);
    EXPECT_EQ(run.result.stats.prompt_updates, 10u);
}

TEST(BestSelection, PicksTheHighestValidationScore) {
    const std::vector<int> correct{2, 5, 4};
    std::size_t batch = 0;
    Harness h(meta_responder([&](const ChatRequest& r) {
        const auto& user = r.last_user_content();
        const auto pos = user.find("## Question\nv");
        if (pos == std::string::npos)
            return std::string("train");
        const int idx = std::stoi(user.substr(pos + 13));
        return idx < correct[batch] ? std::string("yes") : std::string("no");
    }));
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.bilevel_rounds = 1;
    cfg.inner_steps = 1;
    const auto train_set = samples("t", 3);
    const auto val_set = samples("v", 10);
    const auto dir = temp_dir("best");
    RunStore store(dir);
    std::vector<WorkflowState> states;
    const auto result = train(h.rt, cfg, train_set, val_set, make_chain(1), ExactMatchMetric(), &store,
                              [&](const RunRecord&, const WorkflowState& s) {
                                  states.push_back(s);
                                  ++batch;
                              });
    ASSERT_EQ(result.records.size(), 3u);
    EXPECT_DOUBLE_EQ(result.records[0].val_score, 0.2);
    EXPECT_DOUBLE_EQ(result.records[1].val_score, 0.5);
    EXPECT_DOUBLE_EQ(result.records[2].val_score, 0.4);
    EXPECT_EQ(result.best_batch, std::optional<std::size_t>(2));
    EXPECT_EQ(result.best_state, states[1]);
    EXPECT_EQ(read_text_file(dir / "best.json"), read_text_file(store.checkpoint_path(2)));
    EXPECT_EQ(load_records(store.records_path()).size(), 3u);
}

TEST(Evaluate, MeansAndFailures) {
    Harness h([](const ChatRequest& r) {
        const auto& u = r.last_user_content();
        return u.find("## Question\nv0") != std::string::npos ? std::string("yes") : std::string("no");
    });
    const auto val = samples("v", 2);
    const auto s = evaluate(h.rt, make_chain(1), val, ExactMatchMetric());
    EXPECT_DOUBLE_EQ(s.mean_score, 0.5);
    EXPECT_EQ(s.predictions, (std::vector<std::string>{"yes", "no"}));

    Harness all([](const ChatRequest&) { return std::string("yes"); });
    EXPECT_DOUBLE_EQ(evaluate(all.rt, make_chain(2), val, ExactMatchMetric()).mean_score, 1.0);

    Harness broken([](const ChatRequest& r) -> std::string {
        if (envelope_step(r.last_user_content()) == 2)
            throw TransportError("x", false);
        return "yes";
    });
    const auto f = evaluate(broken.rt, make_chain(2), val, ExactMatchMetric());
    EXPECT_EQ(f.failures, 2u);
    EXPECT_EQ(f.mean_score, 0.0);

    const std::vector<Sample> none;
    EXPECT_THROW(evaluate(h.rt, make_chain(1), none, ExactMatchMetric()), std::invalid_argument);
}

TEST(Train, BudgetStopsTraining) {
    Harness h(constant("no"));
    TrainConfig cfg;
    cfg.budget.max_calls = 20;
    const auto train_set = samples("t", 5);
    const auto val_set = samples("v", 1);
    const auto result = train(h.rt, cfg, train_set, val_set, make_chain(2), ExactMatchMetric());
    EXPECT_TRUE(result.budget_exceeded);
    EXPECT_TRUE(result.records.empty());
    EXPECT_EQ(h.ledger->size(), 20u);
}

TEST(Train, RejectsBadInputs) {
    Harness h(constant("no"));
    TrainConfig cfg;
    const auto data = samples("t", 1);
    const std::vector<Sample> none;
    EXPECT_THROW(train(h.rt, cfg, none, data, make_chain(1), ExactMatchMetric()), std::invalid_argument);
    auto bad = make_chain(1);
    bad.sketch[0].executor_name = "Ghost";
    EXPECT_THROW(train(h.rt, cfg, data, data, bad, ExactMatchMetric()), InvalidState);
    cfg.inner_steps = 0;
    EXPECT_THROW(train(h.rt, cfg, data, data, make_chain(1), ExactMatchMetric()), ConfigError);
    EXPECT_THROW(train_mode_from_string("both"), ConfigError);
}

TEST(Train, ShuffleIsSeeded) {
    auto order = [](std::uint64_t seed) {
        std::vector<std::string> seen;
        Harness h(meta_responder([&](const ChatRequest& r) {
            const auto& u = r.last_user_content();
            const auto pos = u.find("## Question\nt");
            if (pos != std::string::npos && r.purpose == Purpose::Forward)
                seen.push_back(u.substr(pos + 12, 2));
            return std::string("no");
        }));
        TrainConfig cfg;
        cfg.batch_size = 1;
        cfg.bilevel_rounds = 1;
        cfg.inner_steps = 1;
        cfg.shuffle = true;
        cfg.seed = seed;
        const auto train_set = samples("t", 6);
        const auto val_set = samples("v", 1);
        train(h.rt, cfg, train_set, val_set, make_chain(1), ExactMatchMetric());
        return seen;
    };
    EXPECT_EQ(order(3), order(3));
}
