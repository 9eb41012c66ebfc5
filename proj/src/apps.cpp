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


#include "stowage/apps.hpp"

namespace stowage::apps {

Inventory without_pending_deletions(const Inventory& inventory, const Registry& registry) {
  InventoryDelta d;
  for (const auto& op : registry.replica_ops()) {
    if (op.verb != OpVerb::kDelete || (op.state != OpState::kNew && op.state != OpState::kInProgress)) continue;
    if (!inventory.find_replica({op.block.dataset, op.block.block, op.site})) continue;
    d.remove(key_record(RecordType::kReplica, {op.block.dataset, op.block.block, op.site}));
  }
  if (d.empty()) return inventory;
  return apply_delta(inventory, d);
}

std::size_t activate_delete_requests(const Inventory& inventory, Registry& registry, Timestamp now) {
  std::size_t added = 0;
  for (auto r : registry.user_requests(UserRequestState::kPending)) {
    if (r.kind != UserRequestKind::kDelete) continue;
    auto dr = inventory.dataset_replica(r.dataset, r.site);
    if (!dr) {
      r.state = UserRequestState::kFailed;
      r.reason = "no replica of " + r.dataset + " at " + r.site;
      registry.update_user_request(r);
      continue;
    }
    for (const auto* br : dr->block_replicas) {
      ReplicaOpRequest op;
      op.verb = OpVerb::kDelete;
      op.block = br->block_key();
      op.site = br->site;
      op.group = br->group;
      op.created = now;
      op.reason = "user request " + std::to_string(r.id);
      registry.add_replica_op(op);
      ++added;
    }
    r.state = UserRequestState::kActivated;
    r.reason = "deletion of " + std::to_string(dr->block_replicas.size()) + " block replicas scheduled";
    registry.update_user_request(r);
  }
  return added;
}

StandardApps::StandardApps(Server& server, Settings settings)
    : server_(server), settings_(std::move(settings)), rng_(settings_.seed) {
  if (settings_.plugins.empty()) {
    settings_.plugins = {std::make_shared<dealer::PopularityPlugin>(), std::make_shared<dealer::BalancerPlugin>(),
                         std::make_shared<dealer::UndertakerPlugin>(), std::make_shared<dealer::RequestPlugin>()};
  }
  if (settings_.backend) {
    fom_ = std::make_unique<fom::FileOperationManager>(server_.registry(), *settings_.backend, settings_.fom);
  }
}

void StandardApps::register_all() {
  if (settings_.detox_policy) server_.register_app("detox", true, [this](AppContext& c) { run_detox(c); });
  server_.register_app("dealer", true, [this](AppContext& c) { run_dealer(c); });
  if (fom_) server_.register_app("fom", true, [this](AppContext& c) { run_fom(c); });
  server_.register_app("requests", true, [](AppContext& c) {
    if (!c.request().write_enabled) return;
    activate_delete_requests(c.inventory(), c.registry(), c.now());
  });
}

void StandardApps::run_detox(AppContext& ctx) {
  // Replicas already on their way out count as gone.
  auto projected = without_pending_deletions(ctx.inventory(), ctx.registry());
  detox::Options opt;
  opt.partition = settings_.detox_partition;
  opt.simulate = !ctx.request().write_enabled;
  opt.cycle_id = ++detox_cycles_;
  opt.now = ctx.now();
  opt.accesses = &ctx.accesses();
  auto result = detox::run_cycle(projected, *settings_.detox_policy, opt);
  for (auto& r : result.requests) ctx.registry().add_replica_op(std::move(r));
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : result.report.sites) {
    summary.push_back({{"site", s.site},
                       {"occupancy_before", s.occupancy_before},
                       {"occupancy_after", s.occupancy_after},
                       {"triggered", s.triggered},
                       {"deleted_volume", s.deleted_volume},
                       {"protected_volume", s.protected_volume},
                       {"protected_above_watermark", s.protected_above_watermark}});
  }
  ctx.history().append("detox", {{"cycle", opt.cycle_id}, {"simulate", opt.simulate}, {"sites", summary}}, opt.now);
  last_detox_ = std::move(result.report);
}

void StandardApps::run_dealer(AppContext& ctx) {
  dealer::Context dc;
  dc.inventory = &ctx.inventory();
  dc.registry = &ctx.registry();
  dc.accesses = &ctx.accesses();
  dc.now = ctx.now();
  dc.last_detox = last_detox_ ? &*last_detox_ : nullptr;
  std::vector<dealer::Plugin*> plugins;
  for (const auto& p : settings_.plugins) plugins.push_back(p.get());
  auto result = dealer::run_cycle(dc, plugins, settings_.dealer, rng_, ++dealer_cycles_);
  if (ctx.request().write_enabled) {
    for (auto& r : result.requests) ctx.registry().add_replica_op(std::move(r));
  }
  ctx.history().append("dealer",
                       {{"cycle", result.report.cycle_id},
                        {"selected_volume", result.report.selected_volume},
                        {"selected", result.report.selected.size()},
                        {"pending_volume", result.report.pending_volume},
                        {"throttled", result.report.throttled}},
                       dc.now);
  last_dealer_ = std::move(result.report);
}

void StandardApps::run_fom(AppContext& ctx) {
  if (!ctx.request().write_enabled) throw Error("fom must run write-enabled");
  auto result = fom_->run_iteration(ctx.inventory(), ctx.now());
  if (!result.delta.empty()) ctx.commit(result.delta);
  last_fom_ = result;
  if (result.aborted) throw Error("file operation backend unreachable");
}

}  // namespace stowage::apps
