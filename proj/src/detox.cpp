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


#include "stowage/detox.hpp"

#include <deque>
#include <sstream>

#include "stowage/occupancy.hpp"

namespace stowage::detox {

using policy::Category;
using policy::EvalContext;

namespace {

struct PendingUnit {
  Unit unit;
  const DatasetReplica* replica = nullptr;
};

Unit& unit_for(std::vector<PendingUnit>& units, std::size_t first, const std::string& dataset, Category c, int cond,
               const DatasetReplica* replica) {
  for (std::size_t i = first; i < units.size(); ++i) {
    if (units[i].unit.category == c && units[i].unit.condition_id == cond) return units[i].unit;
  }
  PendingUnit p;
  p.unit.dataset = dataset;
  p.unit.category = c;
  p.unit.condition_id = cond;
  p.replica = replica;
  units.push_back(std::move(p));
  return units.back().unit;
}

SiteReport process_site(const Inventory& inv, const Site& site, const policy::PolicyProgram& program,
                        const std::string& partition, const EvalContext& base,
                        const policy::AttributeRegistry& reg) {
  SiteReport sr;
  sr.site = site.name;
  sr.quota = site.quota(partition);
  if (sr.quota <= 0) {
    sr.error = "site has no quota for partition " + partition;
    return sr;
  }
  auto members = partition_members(inv, site.name, partition);
  for (const auto* br : members) sr.volume_before += br->size_on_site;
  sr.occupancy_before = static_cast<double>(sr.volume_before) / static_cast<double>(sr.quota);

  EvalContext sctx = base;
  sctx.site = &site;
  sctx.occupancy_override = sr.occupancy_before;

  // Members come ordered by (dataset, block), so units come out ordered by
  // dataset name, which is the final tie-break of the deletion order.
  std::deque<DatasetReplica> replicas;
  std::vector<PendingUnit> units;
  bool block_rules = policy::has_block_rules(program);
  for (std::size_t i = 0; i < members.size();) {
    const std::string& ds = members[i]->dataset;
    std::size_t end = i;
    while (end < members.size() && members[end]->dataset == ds) ++end;

    replicas.push_back(*inv.dataset_replica(ds, site.name));
    const DatasetReplica* dr = &replicas.back();
    EvalContext ctx = sctx;
    ctx.dataset = dr->dataset;
    ctx.replica = dr;
    auto cls = policy::classify(program, ctx, reg);

    std::size_t first = units.size();
    for (std::size_t k = i; k < end; ++k) {
      const BlockReplica* br = members[k];
      Category cat = cls.category;
      int cond = cls.condition_id;
      std::optional<std::string> err = cls.error;
      if (block_rules) {
        EvalContext bctx = ctx;
        bctx.block_replica = br;
        if (auto b = policy::classify_block(program, bctx, reg)) {
          cat = b->category;
          cond = b->condition_id;
          if (b->error) err = b->error;
        }
      }
      Unit& u = unit_for(units, first, ds, cat, cond, dr);
      u.blocks.push_back(br->block);
      u.size += br->size_on_site;
      if (err && !u.error) u.error = err;
    }
    i = end;
  }

  Bytes deleted = 0;
  for (auto& p : units) {
    if (p.unit.category == Category::kDelete) {
      p.unit.scheduled = true;
      deleted += p.unit.size;
    }
  }

  // MORGUE sites only lose their must-deletes; the watermark logic does not
  // apply to storage that is being drained.
  if (site.status == SiteStatus::kReady && program.trigger) {
    try {
      sr.triggered = policy::evaluate(*program.trigger, sctx, reg);
      if (sr.triggered) {
        auto stop_holds = [&](Bytes removed) {
          if (!program.stop) return true;
          EvalContext c = sctx;
          c.occupancy_override =
              static_cast<double>(sr.volume_before - removed) / static_cast<double>(sr.quota);
          return policy::evaluate(*program.stop, c, reg);
        };
        std::vector<std::size_t> candidates;
        std::vector<EvalContext> contexts;
        for (std::size_t i = 0; i < units.size(); ++i) {
          if (units[i].unit.category != Category::kDismiss) continue;
          candidates.push_back(i);
          EvalContext c = sctx;
          c.dataset = units[i].replica->dataset;
          c.replica = units[i].replica;
          contexts.push_back(c);
        }
        for (std::size_t idx : policy::sort_candidates(program, contexts, reg)) {
          if (stop_holds(deleted)) break;
          auto& u = units[candidates[idx]].unit;
          u.scheduled = true;
          deleted += u.size;
        }
        sr.protected_above_watermark = !stop_holds(deleted);
      }
    } catch (const Error& e) {
      sr.error = std::string("watermark evaluation failed: ") + e.what();
    }
  }

  sr.deleted_volume = deleted;
  sr.volume_after = sr.volume_before - deleted;
  sr.occupancy_after = static_cast<double>(sr.volume_after) / static_cast<double>(sr.quota);
  for (auto& p : units) {
    if (p.unit.category == Category::kKeep) sr.protected_volume += p.unit.size;
    if (p.unit.category == Category::kDismiss && !p.unit.scheduled) sr.deletable_kept_volume += p.unit.size;
    sr.units.push_back(std::move(p.unit));
  }
  return sr;
}

}  // namespace

const SiteReport* CycleReport::find(const std::string& site) const {
  for (const auto& s : sites) {
    if (s.site == site) return &s;
  }
  return nullptr;
}

CycleResult run_cycle(const Inventory& inventory, const policy::PolicyProgram& program, const Options& options) {
  const auto& reg = options.registry ? *options.registry : policy::AttributeRegistry::builtin();
  std::string partition = options.partition.empty() ? program.partition : options.partition;
  if (!inventory.find_partition(partition)) throw Error("unknown partition " + partition);

  CycleResult result;
  auto& report = result.report;
  report.cycle_id = options.cycle_id;
  report.partition = partition;
  report.simulate = options.simulate;
  report.time = options.now;

  policy::AttributeCache cache;
  EvalContext base;
  base.inventory = &inventory;
  base.partition = partition;
  base.accesses = options.accesses;
  base.now = options.now;
  base.cache = &cache;

  for (const auto& [name, site] : inventory.sites()) {
    if (program.site_selector) {
      EvalContext c = base;
      c.site = &site;
      try {
        if (!policy::evaluate(*program.site_selector, c, reg)) continue;
      } catch (const Error& e) {
        SiteReport sr;
        sr.site = name;
        sr.error = std::string("site selection failed: ") + e.what();
        report.sites.push_back(std::move(sr));
        continue;
      }
    }
    report.sites.push_back(process_site(inventory, site, program, partition, base, reg));
  }

  if (!options.simulate) {
    for (const auto& key : scheduled_replicas(report)) {
      ReplicaOpRequest r;
      r.verb = OpVerb::kDelete;
      r.block = key.block_key();
      r.site = key.site;
      r.group = inventory.find_replica(key)->group;
      r.created = options.now;
      result.requests.push_back(std::move(r));
    }
  }
  return result;
}

CycleReport simulate_policy(const Inventory& inventory, const policy::PolicyProgram& program, Options options) {
  options.simulate = true;
  return run_cycle(inventory, program, options).report;
}

std::vector<ReplicaKey> scheduled_replicas(const CycleReport& report) {
  std::vector<ReplicaKey> out;
  for (const auto& s : report.sites) {
    for (const auto& u : s.units) {
      if (!u.scheduled) continue;
      for (const auto& b : u.blocks) out.push_back({u.dataset, b, s.site});
    }
  }
  return out;
}

InventoryDelta deletion_delta(const CycleReport& report) {
  InventoryDelta d;
  for (const auto& k : scheduled_replicas(report)) d.remove(key_record(RecordType::kReplica, {k.dataset, k.block, k.site}));
  return d;
}

nlohmann::json to_json(const CycleReport& report) {
  nlohmann::json j;
  j["cycle_id"] = report.cycle_id;
  j["partition"] = report.partition;
  j["simulate"] = report.simulate;
  j["time"] = report.time;
  j["sites"] = nlohmann::json::array();
  for (const auto& s : report.sites) {
    nlohmann::json js{{"site", s.site},
                      {"quota", s.quota},
                      {"volume_before", s.volume_before},
                      {"volume_after", s.volume_after},
                      {"occupancy_before", s.occupancy_before},
                      {"occupancy_after", s.occupancy_after},
                      {"triggered", s.triggered},
                      {"protected_volume", s.protected_volume},
                      {"deletable_kept_volume", s.deletable_kept_volume},
                      {"deleted_volume", s.deleted_volume},
                      {"protected_above_watermark", s.protected_above_watermark}};
    if (s.error) js["error"] = *s.error;
    nlohmann::json cats{{"KEEP", nlohmann::json::array()},
                        {"DISMISS", nlohmann::json::array()},
                        {"DELETE", nlohmann::json::array()}};
    for (const auto& u : s.units) {
      nlohmann::json ju{{"dataset", u.dataset},     {"blocks", u.blocks},         {"size", u.size},
                        {"condition", u.condition_id}, {"scheduled", u.scheduled}};
      if (u.error) ju["error"] = *u.error;
      cats[policy::to_string(u.category)].push_back(std::move(ju));
    }
    js["replicas"] = std::move(cats);
    j["sites"].push_back(std::move(js));
  }
  return j;
}

std::string summary_csv(const CycleReport& report) {
  std::ostringstream out;
  out << "site,quota,occupancy_before,occupancy_after,triggered,deleted_volume,protected_volume,"
         "deletable_kept_volume,protected_above_watermark,error\n";
  for (const auto& s : report.sites) {
    std::string err = s.error.value_or("");
    for (auto& c : err) {
      if (c == ',' || c == '\n') c = ';';
    }
    out << s.site << ',' << s.quota << ',' << s.occupancy_before << ',' << s.occupancy_after << ','
        << (s.triggered ? 1 : 0) << ',' << s.deleted_volume << ',' << s.protected_volume << ','
        << s.deletable_kept_volume << ',' << (s.protected_above_watermark ? 1 : 0) << ',' << err << '\n';
  }
  return out.str();
}

}  // namespace stowage::detox
