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


// The standard applications: detox, dealer, fom and delete-request
// activation, registered on a Server. The daemon and the simulator share
// this wiring.

#ifndef STOWAGE_APPS_HPP
#define STOWAGE_APPS_HPP

#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "stowage/dealer.hpp"
#include "stowage/detox.hpp"
#include "stowage/fom.hpp"
#include "stowage/server.hpp"

namespace stowage::apps {

struct Settings {
  /// No detox app without a policy.
  std::optional<policy::PolicyProgram> detox_policy;
  std::string detox_partition;
  dealer::Config dealer;
  /// Empty: popularity, balancer, undertaker and request.
  std::vector<std::shared_ptr<dealer::Plugin>> plugins;
  fom::Config fom;
  /// No fom app without a backend.
  std::shared_ptr<fom::Backend> backend;
  std::uint64_t seed = 1;
};

/// `inventory` without the block replicas that have a queued or running
/// DELETE in the registry.
Inventory without_pending_deletions(const Inventory& inventory, const Registry& registry);

/// Turns pending user delete requests into DELETE operations for every
/// block replica of the dataset at the site. Returns the operations added.
std::size_t activate_delete_requests(const Inventory& inventory, Registry& registry, Timestamp now);

class StandardApps {
 public:
  StandardApps(Server& server, Settings settings);

  /// Registers "detox", "dealer", "fom" and "requests" as available.
  void register_all();

  const std::optional<detox::CycleReport>& last_detox() const { return last_detox_; }
  const std::optional<dealer::CycleReport>& last_dealer() const { return last_dealer_; }
  const std::optional<fom::IterationResult>& last_fom() const { return last_fom_; }
  fom::FileOperationManager* fom() { return fom_.get(); }

 private:
  void run_detox(AppContext& ctx);
  void run_dealer(AppContext& ctx);
  void run_fom(AppContext& ctx);

  Server& server_;
  Settings settings_;
  std::mt19937_64 rng_;
  std::unique_ptr<fom::FileOperationManager> fom_;
  std::int64_t detox_cycles_ = 0;
  std::int64_t dealer_cycles_ = 0;
  std::optional<detox::CycleReport> last_detox_;
  std::optional<dealer::CycleReport> last_dealer_;
  std::optional<fom::IterationResult> last_fom_;
};

}  // namespace stowage::apps

#endif  // STOWAGE_APPS_HPP
