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
#include "flowgrad/run_store.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "flowgrad/error.hpp"

namespace flowgrad {

std::int64_t WallClock::now() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::int64_t LogicalClock::now() {
    std::lock_guard lock(mu_);
    return ++tick_;
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

Price Price::from_usd(double input_per_1m, double output_per_1m) {
    if (input_per_1m < 0 || output_per_1m < 0)
        throw ConfigError("prices must be nonnegative");
    return {std::llround(input_per_1m * 1e6), std::llround(output_per_1m * 1e6)};
}

PriceTable price_table_from_json(const json& j) {
    PriceTable table;
    if (j.is_null())
        return table;
    for (const auto& [model, entry] : j.items()) {
        table[model] = Price::from_usd(entry.at("input_per_1m").get<double>(),
                                       entry.at("output_per_1m").get<double>());
    }
    return table;
}

std::int64_t cost_micro_usd(const Price& price, std::int64_t input_tokens, std::int64_t output_tokens) {
    using u128 = unsigned __int128;
    if (input_tokens < 0 || output_tokens < 0)
        throw Error("token counts must be nonnegative");
    // pico-USD
    const u128 pico = static_cast<u128>(input_tokens) * static_cast<u128>(price.input_micro_per_1m) +
                      static_cast<u128>(output_tokens) * static_cast<u128>(price.output_micro_per_1m);
    constexpr u128 kDiv = 1'000'000;
    u128 q = pico / kDiv;
    const u128 r = pico % kDiv;
    if (2 * r > kDiv || (2 * r == kDiv && (q & 1) != 0))
        ++q;
    return static_cast<std::int64_t>(q);
}

std::string format_usd(std::int64_t micro_usd) {
    char buf[64];
    const char* sign = micro_usd < 0 ? "-" : "";
    const auto abs = micro_usd < 0 ? -micro_usd : micro_usd;
    std::snprintf(buf, sizeof(buf), "%s%lld.%06lld", sign, static_cast<long long>(abs / 1'000'000),
                  static_cast<long long>(abs % 1'000'000));
    return buf;
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

json to_json(const LedgerRow& row) {
    json j = {
        {"idx", row.idx},
        {"purpose", to_string(row.purpose)},
        {"model", row.model},
        {"in_tok", row.input_tokens},
        {"out_tok", row.output_tokens},
        {"cost_usd", row.cost_usd()},
        {"ts", row.ts},
    };
    if (row.price_missing)
        j["warning"] = true;
    return j;
}

LedgerRow ledger_row_from_json(const json& j) {
    LedgerRow row;
    row.idx = j.at("idx").get<std::size_t>();
    row.purpose = purpose_from_string(j.at("purpose").get<std::string>());
    row.model = j.at("model").get<std::string>();
    row.input_tokens = j.at("in_tok").get<std::int64_t>();
    row.output_tokens = j.at("out_tok").get<std::int64_t>();
    row.cost_micro_usd = std::llround(j.at("cost_usd").get<double>() * 1e6);
    row.ts = j.at("ts").get<std::int64_t>();
    row.price_missing = j.value("warning", false);
    return row;
}

Ledger::Ledger(PriceTable prices, std::shared_ptr<Clock> clock)
    : prices_(std::move(prices)), clock_(std::move(clock)) {}

LedgerRow Ledger::record_call(Purpose purpose, const std::string& model, std::int64_t input_tokens,
                              std::int64_t output_tokens) {
    std::lock_guard lock(mu_);
    LedgerRow row;
    row.idx = rows_.size();
    row.purpose = purpose;
    row.model = model;
    row.input_tokens = input_tokens;
    row.output_tokens = output_tokens;
    row.ts = clock_->now();
    if (auto it = prices_.find(model); it != prices_.end())
        row.cost_micro_usd = cost_micro_usd(it->second, input_tokens, output_tokens);
    else
        row.price_missing = true;
    rows_.push_back(row);
    total_micro_ += row.cost_micro_usd;
    if (sink_) {
        *sink_ << compact_dump(to_json(row)) << '\n';
        sink_->flush();
    }
    return row;
}

void Ledger::attach_sink(const std::filesystem::path& path) {
    std::lock_guard lock(mu_);
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    sink_.emplace(path, std::ios::binary | std::ios::app);
    if (!*sink_)
        throw Error("cannot open ledger " + path.string());
}

std::vector<LedgerRow> Ledger::rows() const {
    std::lock_guard lock(mu_);
    return rows_;
}

std::size_t Ledger::size() const {
    std::lock_guard lock(mu_);
    return rows_.size();
}

std::int64_t Ledger::total_cost_micro_usd() const {
    std::lock_guard lock(mu_);
    return total_micro_;
}

std::vector<Purpose> Ledger::purposes() const {
    std::lock_guard lock(mu_);
    std::vector<Purpose> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_)
        out.push_back(row.purpose);
    return out;
}

namespace {

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            fn(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
}

}  // namespace

std::vector<LedgerRow> load_ledger(const std::filesystem::path& path) {
    std::vector<LedgerRow> rows;
    for_each_jsonl(path, [&](const json& j) { rows.push_back(ledger_row_from_json(j)); });
    return rows;
}

// ---------------------------------------------------------------------------
// Records and checkpoints
// ---------------------------------------------------------------------------

json to_json(const RunRecord& r) {
    return {
        {"batch_index", r.batch_index},
        {"val_score", r.val_score},
        {"revision", r.revision},
        {"state_revision", r.state_revision},
        {"api_calls_so_far", r.api_calls_so_far},
        {"cost_so_far_usd", static_cast<double>(r.cost_so_far_micro_usd) / 1e6},
        {"timestamp", r.timestamp},
    };
}

RunRecord run_record_from_json(const json& j) {
    RunRecord r;
    r.batch_index = j.at("batch_index").get<std::size_t>();
    r.val_score = j.at("val_score").get<double>();
    r.revision = j.at("revision").get<std::uint64_t>();
    r.state_revision = j.value("state_revision", r.revision);
    r.api_calls_so_far = j.at("api_calls_so_far").get<std::size_t>();
    r.cost_so_far_micro_usd = std::llround(j.at("cost_so_far_usd").get<double>() * 1e6);
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    return r;
}

std::vector<RunRecord> load_records(const std::filesystem::path& path) {
    std::vector<RunRecord> records;
    for_each_jsonl(path, [&](const json& j) { records.push_back(run_record_from_json(j)); });
    return records;
}

void save_checkpoint(const std::filesystem::path& path, const WorkflowState& state) {
    write_text_file_atomic(path, canonical_dump(to_json(state)));
}

WorkflowState load_checkpoint(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw InvalidState(path.string() + ": " + e.what());
    }
    auto state = state_from_json(j);
    ValidationLimits limits;
    limits.max_steps = std::max<std::size_t>(limits.max_steps, state.sketch.size());
    auto violations = validate_state(state, limits);
    if (!violations.empty())
        throw InvalidState(path.string() + ": " + violations.front().str());
    return state;
}

RunStore::RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "checkpoints");
}

std::filesystem::path RunStore::checkpoint_path(std::size_t batch_index) const {
    return dir_ / "checkpoints" / ("batch_" + std::to_string(batch_index) + ".json");
}

std::filesystem::path RunStore::checkpoint(const WorkflowState& state, std::size_t batch_index) {
    auto path = checkpoint_path(batch_index);
    save_checkpoint(path, state);
    return path;
}

void RunStore::write_best(const WorkflowState& state) {
    save_checkpoint(best_path(), state);
}

void RunStore::append_record(const RunRecord& record) {
    append_line(records_path(), compact_dump(to_json(record)));
}

void RunStore::note(const json& event) {
    append_line(dir_ / "events.jsonl", compact_dump(event));
}

void RunStore::save_trace(std::size_t batch_index, const std::string& phase, const ExecutionTrace& trace) {
    std::string stem;
    {
        std::lock_guard lock(mu_);
        const auto key = std::to_string(batch_index) + "_" + phase;
        stem = "batch_" + key + "_" + std::to_string(trace_counters_[key]++);
    }
    write_text_file_atomic(dir_ / "traces" / (stem + ".json"), canonical_dump(to_json(trace)));
}

void RunStore::append_line(const std::filesystem::path& path, const std::string& line) {
    std::lock_guard lock(mu_);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out)
        throw Error("cannot append to " + path.string());
    out << line << '\n';
}

}  // namespace flowgrad
