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


// Replication cycles. Plugins propose datasets or blocks to copy; the
// dealer draws winners at random with probability proportional to
// plugin priority times proposal weight, under a per-cycle volume cap, and
// turns them into block-level COPY requests.

#ifndef STOWAGE_DEALER_HPP
#define STOWAGE_DEALER_HPP

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/access.hpp"
#include "stowage/detox.hpp"
#include "stowage/inventory.hpp"
#include "stowage/policy.hpp"
#include "stowage/registry.hpp"

namespace stowage::dealer {

struct Proposal {
  std::string dataset;
  /// Copy a single block; nullopt copies the whole dataset.
  std::optional<std::string> block;
  /// Fixed destination. When unset the dealer picks one.
  std::optional<std::string> destination;
  /// Restricts floating destinations; empty allows every site.
  std::vector<std::string> allowed;
  std::string plugin;
  double weight = 1.0;
  std::string group = "analysis";
  bool enforced = false;
  /// Registry user request this proposal came from, or 0.
  std::int64_t request_id = 0;
};

struct Context {
  const Inventory* inventory = nullptr;
  Registry* registry = nullptr;
  const AccessLog* accesses = nullptr;
  Timestamp now = 0;
  /// Most recent deletion report, if any.
  const detox::CycleReport* last_detox = nullptr;
};

class Plugin {
 public:
  virtual ~Plugin() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Proposal> propose(const Context& ctx) = 0;
};

struct Config {
  std::map<std::string, double> priorities;  // missing plugins get 1
  Bytes cap = 200 * kTB;
  double target_occupancy = 0.9;
  Bytes throttle = 400 * kTB;
  std::string partition = kGlobalPartition;
};

struct Selection {
  Proposal proposal;
  std::string destination;
  Bytes volume = 0;
};

struct Rejection {
  Proposal proposal;
  std::string reason;
};

struct CycleReport {
  std::int64_t cycle_id = 0;
  std::map<std::string, std::size_t> proposals;
  std::map<std::string, std::string> plugin_errors;
  /// In draw order.
  std::vector<Selection> selected;
  Bytes selected_volume = 0;
  std::vector<Rejection> rejected;
  Bytes pending_volume = 0;
  bool throttled = false;
};

struct CycleResult {
  CycleReport report;
  std::vector<ReplicaOpRequest> requests;
};

/// Bytes still to arrive for NEW and IN_PROGRESS copies in the registry.
Bytes pending_copy_volume(const Inventory& inventory, const Registry& registry);

/// Runs one cycle. Selected user requests are marked activated in the
/// registry; requests are returned, not enqueued.
CycleResult run_cycle(const Context& ctx, const std::vector<Plugin*>& plugins, const Config& config,
                      std::mt19937_64& rng, std::int64_t cycle_id = 0);

nlohmann::json to_json(const CycleReport& report);

/// Accesses per existing disk replica over a trailing window.
class PopularityPlugin : public Plugin {
 public:
  PopularityPlugin(double threshold = 50, Timestamp window = 7 * kDay) : threshold_(threshold), window_(window) {}
  std::string name() const override { return "popularity"; }
  std::vector<Proposal> propose(const Context& ctx) override;

 private:
  double threshold_;
  Timestamp window_;
};

/// Last copies at sites whose protected fraction, from the latest detox
/// report, exceeds a threshold.
class BalancerPlugin : public Plugin {
 public:
  explicit BalancerPlugin(double threshold = 0.7) : threshold_(threshold) {}
  std::string name() const override { return "balancer"; }
  std::vector<Proposal> propose(const Context& ctx) override;

 private:
  double threshold_;
};

struct EnforcerRule {
  int count = 0;
  policy::ExprPtr sites;
  policy::ExprPtr datasets;
  std::string text;
};

/// Static replication rules, one per line:
///   Require <count> On <site predicate> For <dataset predicate>
class EnforcerPlugin : public Plugin {
 public:
  /// Invalid rules are skipped and listed in errors().
  explicit EnforcerPlugin(const std::string& rules_text,
                          const policy::AttributeRegistry& registry = policy::AttributeRegistry::builtin());
  std::string name() const override { return "enforcer"; }
  std::vector<Proposal> propose(const Context& ctx) override;
  const std::vector<EnforcerRule>& rules() const { return rules_; }
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  const policy::AttributeRegistry& registry_;
  std::vector<EnforcerRule> rules_;
  std::vector<std::string> errors_;
};

/// Unique dataset replicas at MORGUE sites.
class UndertakerPlugin : public Plugin {
 public:
  std::string name() const override { return "undertaker"; }
  std::vector<Proposal> propose(const Context& ctx) override;
};

/// Pending user copy requests from the registry.
class RequestPlugin : public Plugin {
 public:
  static constexpr double kWeight = 1e6;
  std::string name() const override { return "request"; }
  std::vector<Proposal> propose(const Context& ctx) override;
};

}  // namespace stowage::dealer

#endif  // STOWAGE_DEALER_HPP
