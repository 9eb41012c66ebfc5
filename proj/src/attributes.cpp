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

// Built-in attribute producers.

#include <algorithm>
#include <cmath>

#include "stowage/occupancy.hpp"
#include "stowage/policy.hpp"

namespace stowage::policy {

namespace {

const Site& need_site(const EvalContext& ctx, const std::string& attr) {
  if (!ctx.site) throw EvaluationError(attr, "no site in context");
  return *ctx.site;
}

const Dataset& need_dataset(const EvalContext& ctx, const std::string& attr) {
  if (!ctx.dataset) throw EvaluationError(attr, "no dataset in context");
  return *ctx.dataset;
}

const BlockReplica& need_block_replica(const EvalContext& ctx, const std::string& attr) {
  if (!ctx.block_replica) throw EvaluationError(attr, "no block replica in context");
  return *ctx.block_replica;
}

// Runs `fn` on the dataset replica in context, building it from the block
// replica when only that is available.
template <typename Fn>
std::optional<AttrValue> with_replica(const EvalContext& ctx, const std::string& attr, Fn fn) {
  if (ctx.replica) return fn(*ctx.replica);
  if (ctx.inventory && ctx.block_replica) {
    auto dr = ctx.inventory->dataset_replica(ctx.block_replica->dataset, ctx.block_replica->site);
    if (dr) return fn(*dr);
  }
  throw EvaluationError(attr, "no dataset replica in context");
}

std::string dataset_key(const std::string& attr, const EvalContext& ctx) {
  return ctx.dataset ? attr + "|" + ctx.dataset->name : std::string();
}

int full_disk_copies(const Inventory& inv, const std::string& dataset) {
  int n = 0;
  for (const auto& dr : inv.dataset_replicas_of(dataset)) {
    if (dr.site->kind == StorageKind::kDisk && dr.site->status == SiteStatus::kReady &&
        dr.completeness() == ReplicaCompleteness::kComplete) {
      ++n;
    }
  }
  return n;
}

AttributeRegistry make_builtin() {
  AttributeRegistry r;
  auto add = [&](std::string name, ValueType type, Producer p,
                 std::function<std::string(const EvalContext&)> key = nullptr) {
    r.add(AttributeDef{std::move(name), type, std::move(p), std::move(key)});
  };
  using V = ValueType;

  add("site.name", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> { return need_site(c, "site.name").name; });
  add("site.endpoint", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> { return need_site(c, "site.endpoint").endpoint; });
  add("site.status", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> {
    return std::string(to_string(need_site(c, "site.status").status));
  });
  add("site.kind", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> {
    return std::string(to_string(need_site(c, "site.kind").kind));
  });
  add("site.quota", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_site(c, "site.quota").quota(c.partition));
  });
  add(
      "site.occupancy", V::kNumber,
      [](const EvalContext& c) -> std::optional<AttrValue> {
        const auto& s = need_site(c, "site.occupancy");
        if (c.occupancy_override) return *c.occupancy_override;
        if (!c.inventory) throw EvaluationError("site.occupancy", "no inventory in context");
        try {
          return site_occupancy(*c.inventory, s.name, c.partition);
        } catch (const OccupancyUndefined& e) {
          throw EvaluationError("site.occupancy", e.what());
        }
      },
      [](const EvalContext& c) {
        return (c.site && !c.occupancy_override) ? "site.occupancy|" + c.site->name + "|" + c.partition
                                                 : std::string();
      });

  add("dataset.name", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> { return need_dataset(c, "dataset.name").name; });
  add("dataset.status", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> {
    return std::string(to_string(need_dataset(c, "dataset.status").status));
  });
  add("dataset.type", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> { return need_dataset(c, "dataset.type").data_type; });
  add("dataset.size", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_dataset(c, "dataset.size").size());
  });
  add("dataset.num_files", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_dataset(c, "dataset.num_files").num_files());
  });
  add("dataset.num_blocks", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_dataset(c, "dataset.num_blocks").blocks.size());
  });
  add("dataset.last_update", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_dataset(c, "dataset.last_update").last_update);
  });
  add(
      "dataset.on_tape", V::kString,
      [](const EvalContext& c) -> std::optional<AttrValue> {
        const auto& d = need_dataset(c, "dataset.on_tape");
        auto it = d.attrs.find("on_tape");
        if (it != d.attrs.end()) {
          if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
        }
        if (!c.inventory) return std::string("NONE");
        bool any = false;
        for (const auto& dr : c.inventory->dataset_replicas_of(d.name)) {
          if (dr.site->kind != StorageKind::kTape) continue;
          if (dr.completeness() == ReplicaCompleteness::kComplete) return std::string("FULL");
          any = true;
        }
        return std::string(any ? "PARTIAL" : "NONE");
      },
      [](const EvalContext& c) { return dataset_key("dataset.on_tape", c); });
  // Whole days since the last recorded access; datasets never accessed are
  // ranked by days since their last update.
  add(
      "dataset.usage_rank", V::kNumber,
      [](const EvalContext& c) -> std::optional<AttrValue> {
        const auto& d = need_dataset(c, "dataset.usage_rank");
        auto it = d.attrs.find("usage_rank");
        if (it != d.attrs.end()) {
          if (const auto* v = std::get_if<double>(&it->second)) return *v;
        }
        Timestamp ref = d.last_update;
        if (c.accesses) {
          if (auto last = c.accesses->last_access(d.name)) ref = std::max(ref, *last);
        }
        return std::max(0.0, std::floor(static_cast<double>(c.now - ref) / kDay));
      },
      [](const EvalContext& c) { return dataset_key("dataset.usage_rank", c); });
  add(
      "dataset.num_full_disk_copies", V::kNumber,
      [](const EvalContext& c) -> std::optional<AttrValue> {
        const auto& d = need_dataset(c, "dataset.num_full_disk_copies");
        if (!c.inventory) throw EvaluationError("dataset.num_full_disk_copies", "no inventory in context");
        return static_cast<double>(full_disk_copies(*c.inventory, d.name));
      },
      [](const EvalContext& c) { return dataset_key("dataset.num_full_disk_copies", c); });

  add("replica.size", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.size", [](const DatasetReplica& dr) -> AttrValue { return static_cast<double>(dr.size()); });
  });
  add("replica.num_blocks", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.num_blocks",
                        [](const DatasetReplica& dr) -> AttrValue { return static_cast<double>(dr.block_replicas.size()); });
  });
  add("replica.completeness", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.completeness",
                        [](const DatasetReplica& dr) -> AttrValue { return std::string(to_string(dr.completeness())); });
  });
  add("replica.is_complete", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.is_complete",
                        [](const DatasetReplica& dr) -> AttrValue { return dr.completeness() == ReplicaCompleteness::kComplete; });
  });
  add("replica.is_partial", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.is_partial",
                        [](const DatasetReplica& dr) -> AttrValue { return dr.completeness() == ReplicaCompleteness::kPartial; });
  });
  add("replica.is_locked", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.is_locked", [](const DatasetReplica& dr) -> AttrValue {
      return std::any_of(dr.block_replicas.begin(), dr.block_replicas.end(), [](const BlockReplica* b) { return b->is_locked; });
    });
  });
  add("replica.is_custodial", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.is_custodial", [](const DatasetReplica& dr) -> AttrValue {
      return std::any_of(dr.block_replicas.begin(), dr.block_replicas.end(), [](const BlockReplica* b) { return b->is_custodial; });
    });
  });
  add("replica.is_enforced", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.is_enforced", [](const DatasetReplica& dr) -> AttrValue {
      return std::any_of(dr.block_replicas.begin(), dr.block_replicas.end(), [](const BlockReplica* b) { return b->is_enforced; });
    });
  });
  add("replica.last_update", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return with_replica(c, "replica.last_update", [](const DatasetReplica& dr) -> AttrValue {
      Timestamp t = 0;
      for (const auto* b : dr.block_replicas) t = std::max(t, b->last_update);
      return static_cast<double>(t);
    });
  });

  add("blockreplica.block", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> { return need_block_replica(c, "blockreplica.block").block; });
  add("blockreplica.group", V::kString, [](const EvalContext& c) -> std::optional<AttrValue> { return need_block_replica(c, "blockreplica.group").group; });
  add("blockreplica.size", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_block_replica(c, "blockreplica.size").size_on_site);
  });
  add("blockreplica.is_locked", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> { return need_block_replica(c, "blockreplica.is_locked").is_locked; });
  add("blockreplica.is_custodial", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> { return need_block_replica(c, "blockreplica.is_custodial").is_custodial; });
  add("blockreplica.is_enforced", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> { return need_block_replica(c, "blockreplica.is_enforced").is_enforced; });
  add("blockreplica.is_complete", V::kBool, [](const EvalContext& c) -> std::optional<AttrValue> { return need_block_replica(c, "blockreplica.is_complete").complete(); });
  add("blockreplica.last_update", V::kNumber, [](const EvalContext& c) -> std::optional<AttrValue> {
    return static_cast<double>(need_block_replica(c, "blockreplica.last_update").last_update);
  });
  return r;
}

}  // namespace

const AttributeRegistry& AttributeRegistry::builtin() {
  static const AttributeRegistry registry = make_builtin();
  return registry;
}

}  // namespace stowage::policy

namespace stowage {

bool evaluate_partition(const Inventory& inventory, const Partition& partition, const BlockReplica& replica,
                        const policy::AttributeRegistry& registry, const AccessLog* accesses, Timestamp now) {
  if (!partition.predicate) {
    if (partition.rule.empty()) return true;
    throw Error("partition " + partition.name + " has an uncompiled rule");
  }
  policy::EvalContext ctx;
  ctx.inventory = &inventory;
  ctx.site = inventory.find_site(replica.site);
  ctx.dataset = inventory.find_dataset(replica.dataset);
  ctx.block_replica = &replica;
  ctx.partition = partition.name;
  ctx.accesses = accesses;
  ctx.now = now;
  return policy::evaluate(*partition.predicate, ctx, registry);
}

std::vector<const BlockReplica*> partition_members(const Inventory& inventory, const std::string& site,
                                                   const std::string& partition) {
  const Partition* p = inventory.find_partition(partition);
  if (!p) throw Error("unknown partition " + partition);
  auto all = inventory.replicas_at(site);
  if (!p->predicate) return all;
  std::vector<const BlockReplica*> out;
  for (const auto* br : all) {
    if (evaluate_partition(inventory, *p, *br)) out.push_back(br);
  }
  return out;
}

Bytes partition_usage(const Inventory& inventory, const std::string& site, const std::string& partition) {
  Bytes total = 0;
  for (const auto* br : partition_members(inventory, site, partition)) total += br->size_on_site;
  return total;
}

double site_occupancy(const Inventory& inventory, const std::string& site, const std::string& partition) {
  const Site* s = inventory.find_site(site);
  if (!s) throw Error("unknown site " + site);
  Bytes quota = s->quota(partition);
  if (quota <= 0) throw OccupancyUndefined("site " + site + " has no quota for partition " + partition);
  return static_cast<double>(partition_usage(inventory, site, partition)) / static_cast<double>(quota);
}

}  // namespace stowage
