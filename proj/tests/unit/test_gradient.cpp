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

#include "flowgrad/error.hpp"
#include "flowgrad/forward.hpp"
#include "flowgrad/gradient.hpp"
#include "test_support.hpp"

using namespace flowgrad;
using flowgrad::testing::envelope_step;
using flowgrad::testing::Harness;
using flowgrad::testing::make_chain;
using flowgrad::testing::make_sample;
using flowgrad::testing::meta_responder;

namespace {

ScriptFn answer(const std::string& text) {
    return meta_responder([text](const ChatRequest&) { return text; });
}

struct ForwardRun {
    WorkflowState state;
    Sample sample;
    ExecutionTrace trace;
    EvalResult eval;
};

ForwardRun forward(Harness& h, int k) {
    ForwardRun r{make_chain(k), make_sample("s1", "Which year?", "1846"), {}, {}};
    r.trace = run_workflow(h.rt, r.state, r.sample);
    r.eval = exact_match(r.trace.final_output, r.sample.answer);
    return r;
}

std::vector<ChatRequest> meta_requests(const Harness& h) {
    std::vector<ChatRequest> out;
    for (const auto& r : h.scripted->requests()) {
        if (r.purpose != Purpose::Forward)
            out.push_back(r);
    }
    return out;
}

}  // namespace

TEST(GradLoss, ReturnsGradientForFinalStep) {
    Harness h(answer("1865"));
    const auto r = forward(h, 3);
    const auto g = grad_loss(h.rt, {r.state, r.trace, r.sample, r.eval});
    EXPECT_EQ(g.text, "g");
    EXPECT_EQ(std::get<StepScope>(g.scope).step_id, 3);
    EXPECT_EQ(g.sample_id, "s1");
    const auto req = meta_requests(h).back();
    EXPECT_EQ(req.purpose, Purpose::GradLoss);
    const auto& user = req.last_user_content();
    EXPECT_NE(user.find("## Evaluation Result\n" + r.eval.feedback), std::string::npos);
    EXPECT_NE(user.find("**Ground Truth**: 1846"), std::string::npos);
    EXPECT_NE(user.find("**Step 3**: S3"), std::string::npos);
    EXPECT_EQ(user.rfind("## Workflow Sketch\n| Step |", 0), 0u);
    EXPECT_EQ(req.model_id, h.rt.settings.meta.model_id);
    EXPECT_EQ(req.temperature, h.rt.settings.meta.temperature);
}

TEST(GradBackprop, RequestCarriesNextGradientAndOutputs) {
    Harness h(answer("out"));
    const auto r = forward(h, 2);
    TextualGradient next{StepScope{2}, "NEXT-GRADIENT-TEXT", std::nullopt, "s1", false};
    const auto req = grad_backprop_request(h.rt, {r.state, r.trace, r.sample, r.eval}, 1, next);
    const auto& user = req.last_user_content();
    EXPECT_EQ(req.purpose, Purpose::GradCall);
    EXPECT_NE(user.find("## Gradient from Next Step (g_2)\nNEXT-GRADIENT-TEXT"), std::string::npos);
    EXPECT_NE(user.find("## This Step (Step 1)"), std::string::npos);
    EXPECT_NE(user.find("**Input received (x_0)**"), std::string::npos);
    EXPECT_NE(user.find("## Next Step (Step 2)"), std::string::npos);
}

TEST(GradBackprop, NextMustBeALaterStep) {
    Harness h(answer("out"));
    const auto r = forward(h, 3);
    TextualGradient next{StepScope{1}, "x", std::nullopt, "s1", false};
    EXPECT_ANY_THROW(grad_backprop_request(h.rt, {r.state, r.trace, r.sample, r.eval}, 2, next));
}

TEST(Backward, FourStepsGiveLossThenThreeChainCallsDescending) {
    Harness h(answer("1865"));
    const auto r = forward(h, 4);
    const auto before = h.ledger->size();
    const auto grads = backward(h.rt, {r.state, r.trace, r.sample, r.eval});
    ASSERT_EQ(grads.size(), 4u);
    auto purposes = h.purposes();
    purposes.erase(purposes.begin(), purposes.begin() + static_cast<long>(before));
    EXPECT_EQ(purposes, (std::vector<Purpose>{Purpose::GradLoss, Purpose::GradCall, Purpose::GradCall,
                                              Purpose::GradCall}));
    const auto reqs = meta_requests(h);
    EXPECT_NE(reqs[0].last_user_content().find("**Step 4**"), std::string::npos);
    for (int i = 1; i <= 3; ++i) {
        const auto step = 4 - i;
        EXPECT_NE(reqs[static_cast<std::size_t>(i)].last_user_content().find("## This Step (Step " +
                                                                               std::to_string(step) + ")"),
                  std::string::npos);
        EXPECT_NE(reqs[static_cast<std::size_t>(i)].last_user_content().find("## Gradient from Next Step (g_" +
                                                                               std::to_string(step + 1) + ")\ng"),
                  std::string::npos);
    }
    for (const auto& [id, g] : grads)
        EXPECT_FALSE(g.synthesized);
}

TEST(Backward, JointModeUsesOneCall) {
    Harness h(answer("1865"));
    const auto r = forward(h, 4);
    const auto before = h.ledger->size();
    const auto grads = backward(h.rt, {r.state, r.trace, r.sample, r.eval}, BackwardMode::Joint);
    EXPECT_EQ(h.ledger->size() - before, 1u);
    ASSERT_EQ(grads.size(), 4u);
    EXPECT_EQ(grads.at(3).text, "joint g3");
    const auto user = meta_requests(h).back().last_user_content();
    EXPECT_NE(user.find("Compute a textual gradient for each of these steps: 1, 2, 3, 4."), std::string::npos);
}

TEST(Backward, JointModeRepairsMissingSteps) {
    int calls = 0;
    Harness h(meta_responder([](const ChatRequest&) { return std::string("x"); }));
    // Wrap: first joint reply omits step 2.
    auto inner = h.scripted;
    Harness h2([&](const ChatRequest& r) -> std::string {
        if (r.purpose == Purpose::GradLoss && ++calls == 1)
            return render_fenced({{"gradients", {{{"step_id", 1}, {"text_gradient", "a"}}}}});
        return inner->complete(r).content;
    });
    const auto r = forward(h2, 2);
    const auto before = h2.ledger->size();
    const auto grads = backward(h2.rt, {r.state, r.trace, r.sample, r.eval}, BackwardMode::Joint);
    EXPECT_EQ(h2.ledger->size() - before, 2u);
    EXPECT_EQ(grads.at(2).text, "joint g2");
}

TEST(Backward, StepsAfterAFailureAreSynthesized) {
    Harness h(meta_responder([](const ChatRequest& r) -> std::string {
        if (envelope_step(r.last_user_content()) == 3)
            throw TransportError("down", false);
        return "ok";
    }));
    const auto r = forward(h, 4);
    ASSERT_EQ(r.trace.failed_step, 3);
    const auto before = h.ledger->size();
    const auto grads = backward(h.rt, {r.state, r.trace, r.sample, r.eval});
    EXPECT_EQ(grads.at(4).text, "not executed: upstream failure at step 3");
    EXPECT_TRUE(grads.at(4).synthesized);
    EXPECT_FALSE(grads.at(3).synthesized);
    // Loss at the failed step, chain rule over 2 and 1.
    EXPECT_EQ(h.ledger->size() - before, 3u);
    const auto loss_user = meta_requests(h)[0].last_user_content();
    EXPECT_NE(loss_user.find("[step failed: TransportError: down]"), std::string::npos);
}

TEST(Backward, RouteSkippedStepsAreSynthesized) {
    Harness h(meta_responder([](const ChatRequest& r) {
        return envelope_step(r.last_user_content()) == 1 ? std::string("ROUTE: end") : std::string("x");
    }));
    ForwardRun r{make_chain(3), make_sample("s1", "q", "a"), {}, {}};
    r.state.sketch[0].control = Route{{{"end", 3}}};
    r.trace = run_workflow(h.rt, r.state, r.sample);
    r.eval = exact_match(r.trace.final_output, r.sample.answer);
    const auto grads = backward(h.rt, {r.state, r.trace, r.sample, r.eval});
    EXPECT_EQ(grads.at(2).text, "not executed: skipped by route");
    EXPECT_FALSE(grads.at(1).synthesized);
    // Step 1's consumer is step 3.
    EXPECT_NE(meta_requests(h).back().last_user_content().find("## Next Step (Step 3)"), std::string::npos);
}

TEST(GradWorkflow, SeesStructureAndKeepsReasoning) {
    Harness h(answer("1865"));
    const auto r = forward(h, 2);
    const auto g = grad_workflow(h.rt, {r.state, r.trace, r.sample, r.eval});
    EXPECT_TRUE(std::holds_alternative<WorkflowScope>(g.scope));
    EXPECT_EQ(g.text, "gw");
    EXPECT_EQ(g.reasoning, std::optional<std::string>("r"));
    const auto user = meta_requests(h).back().last_user_content();
    EXPECT_NE(user.find("## Current Workflow Structure\n| Step | Type |"), std::string::npos);
    EXPECT_NE(user.find("## Available Tools\nNone"), std::string::npos);
    EXPECT_NE(user.find("## Execution Trace\n### Step 1: S1"), std::string::npos);
}

TEST(Gradient, UnavailableAfterRepairs) {
    Harness h([](const ChatRequest& r) { return r.purpose == Purpose::Forward ? "x" : "no json"; });
    const auto r = forward(h, 1);
    const auto before = h.ledger->size();
    EXPECT_THROW(grad_loss(h.rt, {r.state, r.trace, r.sample, r.eval}), GradientUnavailable);
    EXPECT_EQ(h.ledger->size() - before, 4u);
}

TEST(Gradient, LongTextIsCapped) {
    const std::string longtext(10000, 'z');
    Harness h([&](const ChatRequest& r) {
        return r.purpose == Purpose::Forward ? std::string("x") : render_fenced({{"text_gradient", longtext}});
    });
    h.rt.settings.gradient_char_cap = 100;
    const auto r = forward(h, 1);
    const auto g = grad_loss(h.rt, {r.state, r.trace, r.sample, r.eval});
    EXPECT_EQ(g.text.size(), 100u);
    EXPECT_EQ(g.text.substr(100 - kTruncationMarker.size()), kTruncationMarker);
}

TEST(Render, AggregatedGradients) {
    std::vector<TextualGradient> gs{{StepScope{2}, "first", std::nullopt, "a", false},
                                    {WorkflowScope{}, "second", std::string("why"), "b", false}};
    EXPECT_EQ(render_aggregated_gradients(gs),
              "### Sample 1 (a), step 2\nfirst\n\n### Sample 2 (b)\n**Reasoning**: why\n**Gradient**: second");
}
