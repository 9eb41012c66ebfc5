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


// Deletion cycles: classify the replicas at each selected site, schedule
// must-deletes, then delete can-deletes in policy order until the Until
// condition holds on the projected occupancy.

#ifndef STOWAGE_DETOX_HPP
#define STOWAGE_DETOX_HPP

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/inventory.hpp"
#include "stowage/policy.hpp"
#include "stowage/registry.hpp"
#include "stowage/snapshot.hpp"

namespace stowage::detox {

struct Options {
  /// Overrides the policy's Partition directive when non-empty.
  std::string partition;
  bool simulate = false;
  std::int64_t cycle_id = 0;
  Timestamp now = 0;
  const AccessLog* accesses = nullptr;
  const policy::AttributeRegistry* registry = nullptr;
};

/// The block replicas of one dataset at one site that share a category and
/// matched condition.
struct Unit {
  std::string dataset;
  std::vector<std::string> blocks;
  policy::Category category = policy::Category::kKeep;
  int condition_id = 0;
  Bytes size = 0;
  bool scheduled = false;
  std::optional<std::string> error;
};

struct SiteReport {
  std::string site;
  Bytes quota = 0;
  Bytes volume_before = 0;
  Bytes volume_after = 0;
  double occupancy_before = 0;
  double occupancy_after = 0;
  bool triggered = false;
  Bytes protected_volume = 0;
  /// DISMISS volume left in place.
  Bytes deletable_kept_volume = 0;
  Bytes deleted_volume = 0;
  bool protected_above_watermark = false;
  std::optional<std::string> error;
  std::vector<Unit> units;
};

struct CycleReport {
  std::int64_t cycle_id = 0;
  std::string partition;
  bool simulate = false;
  Timestamp time = 0;
  std::vector<SiteReport> sites;

  const SiteReport* find(const std::string& site) const;
};

struct CycleResult {
  CycleReport report;
  /// One DELETE per block replica of each scheduled unit; empty when simulating.
  std::vector<ReplicaOpRequest> requests;
};

CycleResult run_cycle(const Inventory& inventory, const policy::PolicyProgram& program, const Options& options);
CycleReport simulate_policy(const Inventory& inventory, const policy::PolicyProgram& program, Options options);

/// Block replicas scheduled for deletion, across all sites of the report.
std::vector<ReplicaKey> scheduled_replicas(const CycleReport& report);
/// DELETE records for every scheduled block replica.
InventoryDelta deletion_delta(const CycleReport& report);

nlohmann::json to_json(const CycleReport& report);
/// One row per site.
std::string summary_csv(const CycleReport& report);

}  // namespace stowage::detox

#endif  // STOWAGE_DETOX_HPP
