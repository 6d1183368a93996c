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

#include <fstream>

#include "flowgrad/error.hpp"
#include "flowgrad/run_store.hpp"
#include "test_support.hpp"

using namespace flowgrad;
using flowgrad::testing::make_chain;
using flowgrad::testing::temp_dir;

TEST(Cost, FormatsMicroDollars) {
    EXPECT_EQ(format_usd(0), "0.000000");
    EXPECT_EQ(format_usd(3600), "0.003600");
    EXPECT_EQ(format_usd(12'345'678), "12.345678");
    EXPECT_EQ(format_usd(-5), "-0.000005");
}

TEST(Cost, KnownExample) {
    const auto price = Price::from_usd(0.40, 1.60);
    EXPECT_EQ(price.input_micro_per_1m, 400'000);
    EXPECT_EQ(cost_micro_usd(price, 1000, 2000), 3600);
    EXPECT_EQ(format_usd(cost_micro_usd(price, 1000, 2000)), "0.003600");
}

TEST(Cost, HalfMicroDollarsRoundToEven) {
    const Price p{500'000, 0};  // 0.5 USD per 1M
    EXPECT_EQ(cost_micro_usd(p, 1, 0), 0);  // 0.5 micro
    EXPECT_EQ(cost_micro_usd(p, 3, 0), 2);  // 1.5 micro
    EXPECT_EQ(cost_micro_usd(p, 5, 0), 2);  // 2.5 micro
    EXPECT_THROW(cost_micro_usd(p, -1, 0), Error);
    EXPECT_THROW(Price::from_usd(-1, 0), ConfigError);
}

TEST(Ledger, RecordsRowsAndTotals) {
    Ledger ledger({{"m", Price::from_usd(0.40, 1.60)}});
    ledger.record_call(Purpose::Forward, "m", 1000, 2000);
    const auto row = ledger.record_call(Purpose::GradLoss, "unknown", 5, 5);
    EXPECT_TRUE(row.price_missing);
    EXPECT_EQ(row.cost_micro_usd, 0);
    EXPECT_EQ(row.idx, 1u);
    EXPECT_EQ(ledger.total_cost_micro_usd(), 3600);
    EXPECT_EQ(ledger.purposes(), (std::vector<Purpose>{Purpose::Forward, Purpose::GradLoss}));
    // Logical clock ticks once per call.
    EXPECT_EQ(ledger.rows()[0].ts, 1);
    EXPECT_EQ(ledger.rows()[1].ts, 2);
}

TEST(Ledger, SinkRoundTrips) {
    const auto path = temp_dir("ledger") / "ledger.jsonl";
    {
        Ledger ledger({{"m", Price::from_usd(1, 2)}});
        ledger.attach_sink(path);
        ledger.record_call(Purpose::OptimCall, "m", 10, 20);
        ledger.record_call(Purpose::Judge, "x", 1, 1);
    }
    const auto rows = load_ledger(path);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].purpose, Purpose::OptimCall);
    EXPECT_EQ(rows[0].cost_micro_usd, 50);
    EXPECT_TRUE(rows[1].price_missing);
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, R"({"cost_usd":5e-05,"idx":0,"in_tok":10,"model":"m","out_tok":20,"purpose":"OptimCall","ts":1})");
}

TEST(Checkpoint, RoundTripAndValidation) {
    const auto dir = temp_dir("ckpt");
    auto state = make_chain(3);
    state.revision = 7;
    save_checkpoint(dir / "a.json", state);
    EXPECT_EQ(load_checkpoint(dir / "a.json"), state);

    auto j = to_json(state);
    j["schema_version"] = 99;
    std::ofstream(dir / "future.json") << j.dump();
    EXPECT_THROW(load_checkpoint(dir / "future.json"), SchemaVersionMismatch);

    std::ofstream(dir / "junk.json") << "{";
    EXPECT_THROW(load_checkpoint(dir / "junk.json"), InvalidState);

    auto broken = to_json(state);
    broken["sketch"][0]["executor_name"] = "Ghost";
    std::ofstream(dir / "broken.json") << broken.dump();
    EXPECT_THROW(load_checkpoint(dir / "broken.json"), InvalidState);
}

TEST(Checkpoint, BytesAreCanonical) {
    const auto dir = temp_dir("ckpt_bytes");
    save_checkpoint(dir / "a.json", make_chain(2));
    save_checkpoint(dir / "b.json", load_checkpoint(dir / "a.json"));
    EXPECT_EQ(read_text_file(dir / "a.json"), read_text_file(dir / "b.json"));
    EXPECT_EQ(read_text_file(dir / "a.json").back(), '\n');
}

TEST(RunStore, Layout) {
    const auto dir = temp_dir("store");
    RunStore store(dir);
    const auto state = make_chain(1);
    EXPECT_EQ(store.checkpoint(state, 3), dir / "checkpoints" / "batch_3.json");
    store.write_best(state);
    store.append_record({1, 0.5, 2, 3, 10, 3600, 42});
    store.append_record({2, 0.25, 2, 4, 20, 7200, 43});
    store.note({{"event", "x"}});
    EXPECT_TRUE(std::filesystem::exists(dir / "best.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "events.jsonl"));
    const auto recs = load_records(store.records_path());
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].val_score, 0.5);
    EXPECT_EQ(recs[1].cost_so_far_micro_usd, 7200);
    EXPECT_EQ(recs[1].state_revision, 4u);
}

TEST(RunStore, MalformedRecordsReportTheLine) {
    const auto path = temp_dir("records") / "records.jsonl";
    std::ofstream(path) << R"({"batch_index":1,"val_score":0,"revision":0,"api_calls_so_far":0,"cost_so_far_usd":0,"timestamp":0})"
                        << "\nnot json\n";
    try {
        load_records(path);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}
