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


// simcli: run simulation scenarios and write their reports.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "stowage/sim.hpp"

using namespace stowage;

int main(int argc, char** argv) {
  CLI::App app{"Scenario-driven storage federation simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and write reports");
  std::string scenario_path, canned, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> days;
  auto* file_opt = run->add_option("--scenario", scenario_path, "Scenario file")->check(CLI::ExistingFile);
  run->add_option("--canned", canned, "Built-in scenario: fleet or pair")->excludes(file_opt);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--days", days, "Override the scenario length");
  run->add_option("--out", out_dir, "Output directory")->required();

  auto* show = app.add_subcommand("show", "Print a built-in scenario");
  std::string show_name;
  show->add_option("name", show_name, "fleet or pair")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*show) {
      std::cout << sim::canned_text(show_name);
      return 0;
    }
    if (scenario_path.empty() && canned.empty()) throw Error("one of --scenario or --canned is required");
    auto sc = scenario_path.empty() ? sim::parse_scenario(sim::canned_text(canned)) : sim::load_scenario(scenario_path);
    if (seed) sc.seed = *seed;
    if (days) sc.days = *days;
    sc.validate();
    auto result = sim::run_scenario(sc);
    sim::emit_reports(result, sc, out_dir);
    std::size_t post = 0, in_band = 0;
    for (const auto& s : result.series) {
      if (s.day < sc.warmup_days) continue;
      ++post;
      if (s.fleet_occupancy >= sc.lower && s.fleet_occupancy <= sc.upper) ++in_band;
    }
    std::printf("%s seed=%llu samples=%zu in_band=%zu/%zu injected=%.1fTB transferred=%.1fTB deleted=%.1fTB%s\n",
                sc.name.c_str(), static_cast<unsigned long long>(sc.seed), result.series.size(), in_band, post,
                result.total_injected / 1e12, result.total_transferred / 1e12, result.total_deleted / 1e12,
                result.sustained_overflow ? " SUSTAINED-OVERFLOW" : "");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "simcli: %s\n", e.what());
    return 1;
  }
  return 0;
}
