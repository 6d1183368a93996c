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
// Regenerates the recorded model replies for the Bucknell case:
//   make_bucknell_fixture <fixture_dir> [out_dir]
// Writes replay.jsonl, after.json and report.json into out_dir (default: the
// fixture dir).

#include <filesystem>
#include <iostream>

#include "bucknell_case.hpp"
#include "flowgrad/json_util.hpp"
#include "flowgrad/run_store.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace flowgrad;

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_bucknell_fixture <fixture_dir> [out_dir]\n";
        return 2;
    }
    try {
        const fs::path dir = argv[1];
        const fs::path out = argc > 2 ? fs::path(argv[2]) : dir;
        fs::create_directories(out);
        const auto store = out / "replay.jsonl";
        fs::remove(store);

        const auto c = testing::BucknellCase::load(dir);
        auto inner = std::make_shared<ScriptedBackend>(c.script());
        auto recorder = std::make_shared<ReplayBackend>(store, ReplayMode::Record, inner);
        testing::Harness h(recorder);
        h.add_tool(c.search_tool());

        const auto report = testing::run_bucknell_case(h.rt, c);
        save_checkpoint(out / "after.json", state_from_json(report["plan"]["state"]));
        write_text_file_atomic(out / "report.json", canonical_dump(report));
        std::cout << "wrote " << store.string() << " (" << h.ledger->size() << " calls)\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
