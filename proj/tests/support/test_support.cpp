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
#include "test_support.hpp"

#include <atomic>
#include <regex>

#include <unistd.h>

#include "flowgrad/forward.hpp"

#ifndef FLOWGRAD_FIXTURE_DIR
#error "FLOWGRAD_FIXTURE_DIR must be defined"
#endif

namespace flowgrad::testing {

namespace fs = std::filesystem;

Harness::Harness(ScriptFn script, PriceTable prices)
    : Harness(std::make_shared<ScriptedBackend>(std::move(script)), std::move(prices)) {}

Harness::Harness(std::shared_ptr<Backend> b, PriceTable prices)
    : backend(std::move(b)),
      scripted(std::dynamic_pointer_cast<ScriptedBackend>(backend)),
      ledger(std::make_shared<Ledger>(std::move(prices))),
      client(backend, ledger, RetryPolicy{1, std::chrono::milliseconds(0), std::chrono::milliseconds(0)}),
      prompts(PromptLibrary::builtin()),
      rt{client, tools, prompts, {}} {
    rt.settings.metrics_info = ExactMatchMetric().info();
}

std::size_t Harness::count(Purpose p) const {
    std::size_t n = 0;
    for (auto q : ledger->purposes())
        n += q == p ? 1 : 0;
    return n;
}

WorkflowState make_chain(int k) {
    WorkflowState state;
    for (int i = 1; i <= k; ++i) {
        const auto name = "E" + std::to_string(i);
        StepSpec step;
        step.step_id = i;
        step.description = "S" + std::to_string(i);
        step.executor_name = name;
        state.sketch.push_back(step);
        ExecutorSpec exec;
        exec.name = name;
        exec.description = "executor " + std::to_string(i);
        exec.prompt = "p" + std::to_string(i);
        state.executors[name] = exec;
    }
    return state;
}

WorkflowState random_state(std::mt19937_64& rng, int k, const std::vector<std::string>& tools) {
    std::uniform_int_distribution<int> pick(0, 4);
    std::uniform_int_distribution<int> roll(0, 9);
    WorkflowState state;
    state.revision = static_cast<std::uint64_t>(roll(rng));
    state.sketch_revision = state.revision / 2;
    for (int i = 1; i <= k; ++i) {
        const int e = pick(rng);
        const bool tool = !tools.empty() && e >= 3;
        const auto name = (tool ? "Search" : "Agent") + std::to_string(e);
        if (!state.executors.contains(name)) {
            ExecutorSpec exec;
            exec.name = name;
            exec.kind = tool ? ExecutorKind::Tool : ExecutorKind::LLM;
            exec.description = "does " + name;
            exec.prompt = "prompt of " + name + " #" + std::to_string(roll(rng));
            if (tool)
                exec.tool_names = {tools.front()};
            exec.version = static_cast<std::uint64_t>(roll(rng));
            state.executors[name] = exec;
        }
        StepSpec step;
        step.step_id = i;
        step.description = "step " + std::to_string(i) + " via " + name;
        step.executor_name = name;
        if (tool)
            step.tool_names = {tools.front()};
        const int c = roll(rng);
        if (c == 0)
            step.control = Loop{1 + roll(rng) % 3};
        else if (c == 1 && i < k)
            step.control = Route{{{"next", i + 1}, {"last", k}}};
        state.sketch.push_back(step);
    }
    return state;
}

std::string fenced(const json& value) {
    return render_fenced(value);
}

int envelope_step(const std::string& envelope) {
    static const std::regex re(R"(## Current Step\nStep (\d+):)");
    std::smatch m;
    if (!std::regex_search(envelope, m, re))
        return 0;
    return std::stoi(m[1].str());
}

std::string envelope_previous(const std::string& envelope) {
    const std::string header = std::string(kEnvelopePreviousHeader) + "\n";
    const auto pos = envelope.rfind(header);
    if (pos == std::string::npos)
        return {};
    return envelope.substr(pos + header.size());
}

std::string current_prompt_in(const std::string& user) {
    const std::string open = "## Current Prompt (θ)\n```\n";
    const auto b = user.find(open);
    if (b == std::string::npos)
        return {};
    const auto start = b + open.size();
    const auto e = user.find("\n```\n", start);
    return user.substr(start, e - start);
}

namespace {

std::vector<int> ids_after(const std::string& text, const std::string& marker) {
    std::vector<int> ids;
    const auto pos = text.find(marker);
    if (pos == std::string::npos)
        return ids;
    const auto end = text.find('.', pos + marker.size());
    std::string list = text.substr(pos + marker.size(), end - pos - marker.size());
    static const std::regex num(R"(\d+)");
    for (std::sregex_iterator it(list.begin(), list.end(), num), stop; it != stop; ++it)
        ids.push_back(std::stoi(it->str()));
    return ids;
}

std::vector<std::string> agent_names(const std::string& user) {
    // render_agents_with_prompts lists "### name" headers.
    std::vector<std::string> names;
    static const std::regex re(R"(\n### ([A-Za-z0-9_]+)\n\*\*Type\*\*)");
    for (std::sregex_iterator it(user.begin(), user.end(), re), stop; it != stop; ++it)
        names.push_back((*it)[1].str());
    return names;
}

}  // namespace

ScriptFn meta_responder(ScriptFn forward) {
    return [forward = std::move(forward)](const ChatRequest& req) -> std::string {
        const auto& user = req.last_user_content();
        switch (req.purpose) {
        case Purpose::Forward:
            return forward(req);
        case Purpose::Bootstrap:
            return "zero-shot answer";
        case Purpose::Judge:
            return fenced({{"score", 0.5}, {"feedback", "partial"}});
        case Purpose::GradLoss: {
            const auto ids = ids_after(user, "Compute a textual gradient for each of these steps: ");
            if (!ids.empty()) {
                json grads = json::array();
                for (int id : ids)
                    grads.push_back({{"step_id", id}, {"text_gradient", "joint g" + std::to_string(id)}});
                return fenced({{"gradients", grads}});
            }
            return fenced({{"text_gradient", "g"}});
        }
        case Purpose::GradCall:
            return fenced({{"text_gradient", "g"}});
        case Purpose::GradWorkflow:
            return fenced({{"reasoning", "r"}, {"text_gradient", "gw"}});
        case Purpose::OptimCall: {
            if (user.find("Apply TGD to every agent") != std::string::npos) {
                json updates = json::array();
                for (const auto& name : agent_names(user))
                    updates.push_back({{"executor_name", name}, {"updated_prompt", name + " joint +"},
                                       {"changes_made", json::array()}});
                return fenced({{"updates", updates}, {"reasoning", "r"}});
            }
            return fenced({{"updated_prompt", current_prompt_in(user) + " +"},
                           {"changes_made", {"appended"}},
                           {"reasoning", "r"}});
        }
        case Purpose::OptimWorkflow:
            if (user.find("updated_workflow") != std::string::npos)
                return fenced({{"reasoning", "keep"}, {"should_update", false}, {"updated_workflow", json::array()}});
            return fenced({{"reasoning", "keep"}, {"should_update", false}, {"updated_execution_plan", json::array()}});
        case Purpose::InitExecutor:
            return fenced({{"name", "Fresh"}, {"type", "LLMExecutor"}, {"description", "d"}, {"prompt", "fresh"}});
        }
        return "";
    };
}

fs::path temp_dir(const std::string& name) {
    static std::atomic<int> counter{0};
    auto dir = fs::temp_directory_path() /
               ("flowgrad_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path fixture_dir() {
    return fs::path(FLOWGRAD_FIXTURE_DIR);
}

Sample make_sample(const std::string& id, const std::string& question, const std::string& answer) {
    Sample s;
    s.id = id;
    s.question = question;
    s.answer = answer;
    return s;
}

}  // namespace flowgrad::testing
