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

#include <filesystem>

#include "flowgrad/error.hpp"
#include "flowgrad/json_util.hpp"
#include "flowgrad/prompts.hpp"
#include "test_support.hpp"

using namespace flowgrad;

TEST(Prompts, EmbeddedCopiesMatchTheSourceFiles) {
    const std::filesystem::path dir = FLOWGRAD_PROMPT_DIR;
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != ".txt")
            continue;
        ++files;
        const auto key = name.substr(0, name.size() - 4);
        const auto it = embedded_prompt_files().find(key);
        ASSERT_NE(it, embedded_prompt_files().end()) << key;
        EXPECT_EQ(it->second, read_text_file(entry.path())) << key;
    }
    EXPECT_EQ(files, embedded_prompt_files().size());
}

TEST(Prompts, EveryNamedTemplateExists) {
    const auto lib = PromptLibrary::builtin();
    for (auto name : {prompt_names::kGradWorkflow, prompt_names::kGradLoss, prompt_names::kGradBackprop,
                      prompt_names::kOptimWorkflow, prompt_names::kOptimCall, prompt_names::kInitExecutor,
                      prompt_names::kJointGradient, prompt_names::kJointUpdate, prompt_names::kSingleLayerGradient,
                      prompt_names::kSingleLayerUpdate, prompt_names::kJudge}) {
        ASSERT_TRUE(lib.contains(name)) << name;
        EXPECT_FALSE(lib.get(name).system.empty()) << name;
        EXPECT_FALSE(lib.get(name).user.empty()) << name;
    }
    EXPECT_THROW(lib.get("nope"), Error);
}

TEST(Prompts, KeyHeadings) {
    const auto lib = PromptLibrary::builtin();
    EXPECT_NE(lib.get(prompt_names::kOptimCall).user.find("## Current Prompt (θ)"), std::string::npos);
    EXPECT_NE(lib.get(prompt_names::kGradBackprop).user.find("## Gradient from Next Step"), std::string::npos);
    EXPECT_NE(lib.get(prompt_names::kInitExecutor).user.find("## Sample Questions This Executor Should Handle"),
              std::string::npos);
}

TEST(Prompts, OverridesReplaceSingleFiles) {
    const auto dir = flowgrad::testing::temp_dir("prompt_overrides");
    write_text_file_atomic(dir / "judge.user.txt", "Rate {prediction}.");
    const auto lib = PromptLibrary::with_overrides(dir);
    EXPECT_EQ(lib.get(prompt_names::kJudge).user, "Rate {prediction}.");
    EXPECT_EQ(lib.get(prompt_names::kJudge).system, PromptLibrary::builtin().get(prompt_names::kJudge).system);
    EXPECT_THROW(PromptLibrary::with_overrides(dir / "missing"), ConfigError);
}

TEST(Template, SubstitutesAndEscapes) {
    EXPECT_EQ(render_template("a {x} b {{y}} {x}", {{"x", "1"}}), "a 1 b {y} 1");
    EXPECT_EQ(render_template("{ not a name } {1x}", {}), "{ not a name } {1x}");
    EXPECT_EQ(render_template("{x}", {{"x", "{y}"}}), "{y}");
    EXPECT_THROW(render_template("{missing}", {}), Error);
}
