// Copyright (c) 2026 The Stowage Authors. All Rights Reserved
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// detox: run one deletion cycle over a snapshot and print the report.

#include <cstdio>

#include "CLI11.hpp"
#include "stowage/detox.hpp"
#include "stowage/policy.hpp"
#include "tool_util.hpp"

using namespace stowage;

int main(int argc, char** argv) {
  CLI::App app{"Apply a deletion policy to an inventory snapshot"};
  std::string policy_path, partition, snapshot, accesses, report_path = "-", csv_path, delta_path;
  bool simulate = false;
  std::optional<Timestamp> now;
  app.add_option("--policy", policy_path, "Policy file")->required()->check(CLI::ExistingFile);
  app.add_option("--partition", partition, "Partition; overrides the policy's Partition line");
  app.add_flag("--simulate", simulate, "Report only; schedule nothing");
  app.add_option("--snapshot", snapshot, "Inventory snapshot")->required()->check(CLI::ExistingFile);
  app.add_option("--accesses", accesses, "Access records, dataset,time,count")->check(CLI::ExistingFile);
  app.add_option("--now", now, "Evaluation time, epoch seconds (default: now)");
  app.add_option("--report", report_path, "JSON report file (default: stdout)");
  app.add_option("--csv", csv_path, "Per-site summary CSV file");
  app.add_option("--delta", delta_path, "Write the deletion delta here (not with --simulate)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto program = policy::parse(tools::read_text(policy_path));
    auto inventory = load_snapshot_file(snapshot);
    AccessLog log;
    if (!accesses.empty()) log = tools::load_accesses(accesses);
    detox::Options opt;
    opt.partition = partition;
    opt.simulate = simulate;
    opt.cycle_id = 1;
    opt.now = now.value_or(tools::wall_now());
    opt.accesses = &log;
    auto result = detox::run_cycle(inventory, program, opt);
    tools::write_text(report_path, detox::to_json(result.report).dump(2) + "\n");
    if (!csv_path.empty()) tools::write_text(csv_path, detox::summary_csv(result.report));
    if (!delta_path.empty()) {
      if (simulate) throw Error("--delta cannot be combined with --simulate");
      tools::write_text(delta_path, format_delta(detox::deletion_delta(result.report)));
    }
    for (const auto& s : result.report.sites) {
      if (s.error) std::fprintf(stderr, "detox: %s: %s\n", s.site.c_str(), s.error->c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "detox: %s\n", e.what());
    return 1;
  }
  return 0;
}
