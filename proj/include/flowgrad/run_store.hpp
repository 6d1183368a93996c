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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flowgrad/chat.hpp"
#include "flowgrad/workflow.hpp"

namespace flowgrad {

// ---------------------------------------------------------------------------
// Clocks
// ---------------------------------------------------------------------------

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now() = 0;
};

/// Wall time in milliseconds since the epoch.
class WallClock final : public Clock {
public:
    std::int64_t now() override;
};

/// Monotone tick counter; makes ledgers reproducible under mock and replay.
class LogicalClock final : public Clock {
public:
    std::int64_t now() override;

private:
    std::mutex mu_;
    std::int64_t tick_ = 0;
};

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

/// USD per 1M tokens, held as integer micro-USD per 1M tokens (pico-USD per token).
struct Price {
    std::int64_t input_micro_per_1m = 0;
    std::int64_t output_micro_per_1m = 0;

    static Price from_usd(double input_per_1m, double output_per_1m);
};

using PriceTable = std::map<std::string, Price>;

PriceTable price_table_from_json(const json& j);

/// tokens * price / 1e6, rounded half-even to whole micro-dollars.
std::int64_t cost_micro_usd(const Price& price, std::int64_t input_tokens, std::int64_t output_tokens);

std::string format_usd(std::int64_t micro_usd);  // "0.003600"

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

struct LedgerRow {
    std::size_t idx = 0;
    Purpose purpose = Purpose::Forward;
    std::string model;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t cost_micro_usd = 0;
    std::int64_t ts = 0;
    bool price_missing = false;

    double cost_usd() const { return static_cast<double>(cost_micro_usd) / 1e6; }
};

json to_json(const LedgerRow& row);
LedgerRow ledger_row_from_json(const json& j);

/// Append-only record of every model call. Appends are serialized.
class Ledger {
public:
    explicit Ledger(PriceTable prices = {}, std::shared_ptr<Clock> clock = std::make_shared<LogicalClock>());

    LedgerRow record_call(Purpose purpose, const std::string& model, std::int64_t input_tokens,
                          std::int64_t output_tokens);

    /// Mirrors every subsequent row to `path` as JSONL.
    void attach_sink(const std::filesystem::path& path);

    std::vector<LedgerRow> rows() const;
    std::size_t size() const;
    std::int64_t total_cost_micro_usd() const;
    std::vector<Purpose> purposes() const;
    Clock& clock() { return *clock_; }

private:
    PriceTable prices_;
    std::shared_ptr<Clock> clock_;
    mutable std::mutex mu_;
    std::vector<LedgerRow> rows_;
    std::int64_t total_micro_ = 0;
    std::optional<std::ofstream> sink_;
};

std::vector<LedgerRow> load_ledger(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run records and checkpoints
// ---------------------------------------------------------------------------

struct RunRecord {
    std::size_t batch_index = 0;
    double val_score = 0.0;
    /// Sketch revision: constant unless the step list changed.
    std::uint64_t revision = 0;
    std::uint64_t state_revision = 0;
    std::size_t api_calls_so_far = 0;
    std::int64_t cost_so_far_micro_usd = 0;
    std::int64_t timestamp = 0;
};

json to_json(const RunRecord& record);
RunRecord run_record_from_json(const json& j);
std::vector<RunRecord> load_records(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const WorkflowState& state);

/// Throws SchemaVersionMismatch for other schema versions and InvalidState when
/// the loaded state fails validation.
WorkflowState load_checkpoint(const std::filesystem::path& path);

/// Run directory layout:
///   checkpoints/batch_{i}.json  best.json  records.jsonl  ledger.jsonl
///   events.jsonl  traces/ (optional)  config.json
class RunStore {
public:
    explicit RunStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path ledger_path() const { return dir_ / "ledger.jsonl"; }
    std::filesystem::path records_path() const { return dir_ / "records.jsonl"; }
    std::filesystem::path best_path() const { return dir_ / "best.json"; }
    std::filesystem::path checkpoint_path(std::size_t batch_index) const;

    std::filesystem::path checkpoint(const WorkflowState& state, std::size_t batch_index);
    void write_best(const WorkflowState& state);
    void append_record(const RunRecord& record);
    void note(const json& event);
    void save_trace(std::size_t batch_index, const std::string& phase, const ExecutionTrace& trace);

private:
    void append_line(const std::filesystem::path& path, const std::string& line);

    std::filesystem::path dir_;
    std::mutex mu_;
    std::map<std::string, std::size_t> trace_counters_;
};

}  // namespace flowgrad
