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


// Scenario-driven simulation: a synthetic world, injection and access
// workloads, and detox/dealer/fom cycles against the simulated transfer
// backend, all on a virtual clock.

#ifndef STOWAGE_SIM_HPP
#define STOWAGE_SIM_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/dealer.hpp"
#include "stowage/fom.hpp"
#include "stowage/inventory.hpp"

namespace stowage::sim {

struct SiteSpec {
  std::string name;
  StorageKind kind = StorageKind::kDisk;
  Bytes quota = 0;
};

struct LinkSpec {
  std::string source;
  std::string destination;
  fom::LinkModel model;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  int days = 30;
  int warmup_days = 0;
  int detox_every_hours = 24;
  int dealer_every_hours = 24;
  int fom_every_hours = 1;

  std::vector<SiteSpec> sites;
  fom::LinkModel default_link;
  std::vector<LinkSpec> links;

  // Initial world: each disk site filled to a uniform fraction of quota.
  double initial_fill_min = 0.5;
  double initial_fill_max = 0.5;
  int initial_age_days = 60;

  // Injection: Poisson arrivals of new datasets at a disk site chosen with
  // probability proportional to quota, plus a tape copy when a tape site
  // exists.
  double datasets_per_day = 0;
  int blocks_min = 1;
  int blocks_max = 4;
  int files_min = 2;
  int files_max = 6;
  Bytes file_size_min = 10 * kGB;
  Bytes file_size_max = 100 * kGB;
  bool tape_copy = true;

  // Accesses: daily Poisson counts with per-dataset intensity drawn from a
  // Pareto law, halving every `half_life_days`, redrawn with probability
  // `rejuvenation_per_day`.
  bool accesses = true;
  double pareto_alpha = 1.5;
  double pareto_min = 0.5;
  double half_life_days = 10;
  double rejuvenation_per_day = 0.01;

  // Deletion policy.
  double upper = 0.9;
  double lower = 0.85;
  int protect_days = 3;
  std::vector<std::string> extra_rules;

  dealer::Config dealer;
  double popularity_threshold = 50;
  fom::Config fom;

  /// The detox policy text this scenario runs.
  std::string policy_text() const;
  /// Throws Error when a value is out of range.
  void validate() const;
};

/// INI text: [scenario], [world], [site NAME], [links], [link SRC DST],
/// [injection], [access], [policy], [dealer], [fom].
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

/// Source text of a canned scenario: "fleet" or "pair".
std::string canned_text(const std::string& name);
/// Ten disk sites of 50-200 and one tape site, steady injection.
Scenario canned_fleet();
/// A 600 master disk plus a 150 cache.
Scenario canned_pair();

struct Sample {
  Timestamp time = 0;
  double day = 0;
  /// Quota-weighted post-detox occupancy over disk sites.
  double fleet_occupancy = 0;
  std::map<std::string, double> site_occupancy;
  Bytes injected = 0;     // since the previous sample
  Bytes transferred = 0;  // since the previous sample
  Bytes deleted = 0;      // since the previous sample
  Bytes dealer_volume = 0;
  Bytes pending_total = 0;  // block bytes of open copy requests
  Bytes missing = 0;        // bytes of those still to arrive
  Bytes protected_volume = 0;
  Bytes occupied = 0;
  int triggered = 0;
  int flagged = 0;
  /// occupied - initial - (injected + transferred - deleted), cumulative.
  Bytes conservation_error = 0;
};

struct SiteCycle {
  std::int64_t cycle = 0;
  Timestamp time = 0;
  std::string site;
  double occupancy_before = 0;
  double occupancy_after = 0;
  bool triggered = false;
  bool protected_above_watermark = false;
  Bytes deleted = 0;
};

struct DealerCycle {
  std::int64_t cycle = 0;
  Timestamp time = 0;
  Bytes selected = 0;
  Bytes pending = 0;
  bool throttled = false;
};

struct Dispatch {
  std::int64_t batch = 0;
  std::string lfn;
  OpVerb verb = OpVerb::kCopy;
  std::string source;
  std::string destination;
  Bytes size = 0;
  Timestamp time = 0;
};

struct Outcome {
  std::string lfn;
  OpVerb verb = OpVerb::kCopy;
  std::string source;
  std::string destination;
  Bytes size = 0;
  bool success = false;
  Timestamp time = 0;
};

struct LinkRow {
  std::string source;
  std::string destination;
  Bytes scheduled = 0;
  std::size_t files = 0;
  std::size_t finished = 0;
  std::size_t failed = 0;
  double failure_fraction() const { return finished ? static_cast<double>(failed) / finished : 0.0; }
};

struct HourlyRow {
  std::int64_t hour = 0;
  std::string destination;
  Bytes bytes = 0;
};

struct SimResult {
  std::vector<Sample> series;
  std::vector<SiteCycle> detox;
  std::vector<DealerCycle> dealer;
  std::vector<Dispatch> dispatches;
  std::vector<Outcome> outcomes;
  Bytes initial_occupied = 0;
  Bytes total_injected = 0;
  Bytes total_transferred = 0;
  Bytes total_deleted = 0;
  /// Post-warm-up fleet occupancy at or above the upper watermark for more
  /// than half the samples.
  bool sustained_overflow = false;
  std::string final_snapshot;
};

SimResult run_scenario(const Scenario& scenario);

/// Copy operations only, ordered by (source, destination).
std::vector<LinkRow> link_table(const SimResult& result);
/// Successful copies by completion hour and destination.
std::vector<HourlyRow> hourly_volume(const SimResult& result);

std::string series_csv(const SimResult& result);
nlohmann::json series_json(const SimResult& result);
std::string detox_csv(const SimResult& result);
std::string links_csv(const SimResult& result);
std::string hourly_csv(const SimResult& result);

/// Writes series.csv, series.json, detox.csv, dealer.csv, links.csv,
/// hourly.csv, summary.json and final_inventory.txt. Throws Error when
/// the directory cannot be written.
void emit_reports(const SimResult& result, const Scenario& scenario, const std::filesystem::path& dir);

}  // namespace stowage::sim

#endif  // STOWAGE_SIM_HPP
