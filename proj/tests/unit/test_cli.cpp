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

#include <cstdlib>
#include <sstream>

#include "flowgrad/cli.hpp"
#include "flowgrad/json_util.hpp"
#include "test_support.hpp"

using namespace flowgrad;
using flowgrad::testing::fixture_dir;
using flowgrad::testing::temp_dir;

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "flowgrad");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliResult r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path toy_config() { return fs::path(FLOWGRAD_DATA_DIR) / "toy_qa" / "config.json"; }

/// Copy of the toy config with absolute paths and one edit applied.
fs::path edited_toy_config(const std::string& name, const std::function<void(json&)>& edit) {
    auto j = json::parse(read_text_file(toy_config()));
    const auto base = toy_config().parent_path();
    j["backend"]["script"] = (base / "script.json").string();
    j["tools"][0]["corpus"] = (base / "corpus.jsonl").string();
    for (const auto* split : {"train", "val", "test"})
        j["data"][split] = (base / j["data"][split].get<std::string>()).string();
    edit(j);
    const auto path = temp_dir("cli_configs") / name;
    write_text_file_atomic(path, j.dump(2));
    return path;
}

std::size_t count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(Cli, TrainCurveAndReplay) {
    const auto run = temp_dir("cli_train") / "run";
    const auto r = cli({"train", "--config", toy_config().string(), "--run-dir", run.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = json::parse(r.out);
    EXPECT_EQ(summary["batches"], 2);
    EXPECT_FALSE(summary["budget_exceeded"].get<bool>());
    for (const auto* f : {"best.json", "records.jsonl", "ledger.jsonl", "replay.jsonl", "config.json",
                          "initial.json", "checkpoints/batch_1.json", "checkpoints/batch_2.json"})
        EXPECT_TRUE(fs::exists(run / f)) << f;

    const auto curve = cli({"curve", run.string()});
    ASSERT_EQ(curve.code, 0);
    EXPECT_EQ(curve.out.rfind("batch_index,val_score,best_so_far,calls,cost\n", 0), 0u);
    EXPECT_EQ(count_lines(curve.out), 3u);

    const auto again = cli({"replay", run.string(), "--out", (run.parent_path() / "replayed").string()});
    EXPECT_EQ(again.code, 0) << again.out << again.err;
    EXPECT_TRUE(json::parse(again.out)["identical"].get<bool>());

    // The run directory is not reused.
    EXPECT_EQ(cli({"train", "--config", toy_config().string(), "--run-dir", run.string()}).code, kExitUsage);
}

TEST(Cli, PromptOnlyKeepsTheSketch) {
    const auto run = temp_dir("cli_prompt_only") / "run";
    const auto r =
        cli({"train", "--config", toy_config().string(), "--run-dir", run.string(), "--mode", "prompt_only"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto initial = load_checkpoint(run / "initial.json");
    const auto records = load_records(run / "records.jsonl");
    ASSERT_FALSE(records.empty());
    for (const auto& rec : records)
        EXPECT_EQ(rec.revision, initial.sketch_revision);
    EXPECT_EQ(load_checkpoint(run / "best.json").sketch, initial.sketch);
}

TEST(Cli, MissingDatasetIsAUsageError) {
    const auto cfg = edited_toy_config("missing.json", [](json& j) { j["data"]["train"] = "/nonexistent/train.jsonl"; });
    const auto r = cli({"train", "--config", cfg.string(), "--run-dir", (temp_dir("cli_missing") / "run").string()});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find("/nonexistent/train.jsonl"), std::string::npos);
    EXPECT_EQ(json::parse(r.err)["error"], "config");
}

TEST(Cli, EvalReplaysTheRecordedCase) {
    const auto dir = fixture_dir() / "bucknell_case";
    const auto r = cli({"eval", "--config", (dir / "config.json").string(), "--checkpoint",
                        (dir / "after.json").string(), "--dataset", (dir / "sample.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["mean"], 0.0);
    EXPECT_EQ(j["n"], 1);
    EXPECT_EQ(j["metric"], "em");
}

TEST(Cli, EvalRejectsEmptyDatasetAndMissingCheckpoint) {
    const auto dir = fixture_dir() / "bucknell_case";
    const auto empty = temp_dir("cli_empty") / "empty.jsonl";
    write_text_file_atomic(empty, "");
    auto r = cli({"eval", "--config", (dir / "config.json").string(), "--checkpoint", (dir / "after.json").string(),
                  "--dataset", empty.string()});
    EXPECT_EQ(r.code, kExitUsage);
    r = cli({"eval", "--config", (dir / "config.json").string(), "--checkpoint", "/nonexistent.json", "--dataset",
             (dir / "sample.jsonl").string()});
    EXPECT_EQ(r.code, kExitUsage);
}

TEST(Cli, InspectMarksToolSteps) {
    const auto path = fixture_dir() / "bucknell_case" / "after.json";
    const auto r = cli({"inspect", path.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, cli({"inspect", path.string()}).out);
    std::istringstream in(r.out);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
        if (line.rfind("| ", 0) == 0 && line.find("| Step") != 0)
            rows.push_back(line);
    }
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows[0].rfind("| 1 (T) |", 0), 0u);
    EXPECT_EQ(rows[1].rfind("| 2 |", 0), 0u);
    EXPECT_EQ(rows[2].rfind("| 3 (T) |", 0), 0u);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(cli({}).code, kExitUsage);
    EXPECT_EQ(cli({"bogus"}).code, kExitUsage);
    EXPECT_EQ(cli({"train", "--config", "x.json"}).code, kExitUsage);
    EXPECT_EQ(cli({"curve", "/nonexistent"}).code, kExitUsage);
    const auto r = cli({"train", "--config", "/nonexistent/config.json", "--run-dir", "/tmp/never"});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find("config file not found"), std::string::npos);
}

TEST(Cli, BinaryPrintsHelp) {
    const std::string cmd = std::string("\"") + FLOWGRAD_BINARY + "\" --help > /dev/null";
    EXPECT_EQ(std::system(cmd.c_str()), 0);
}
