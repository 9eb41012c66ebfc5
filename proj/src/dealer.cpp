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


#include "stowage/dealer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stowage/occupancy.hpp"

namespace stowage::dealer {

namespace {

std::vector<std::string> item_blocks(const Inventory& inv, const Proposal& p) {
  std::vector<std::string> out;
  const Dataset* d = inv.find_dataset(p.dataset);
  if (!d) return out;
  if (p.block) {
    if (d->blocks.count(*p.block)) out.push_back(*p.block);
    return out;
  }
  for (const auto& [name, _] : d->blocks) out.push_back(name);
  return out;
}

bool complete_at(const Inventory& inv, const Proposal& p, const std::string& site) {
  auto blocks = item_blocks(inv, p);
  if (blocks.empty()) return false;
  for (const auto& b : blocks) {
    const auto* r = inv.find_replica({p.dataset, b, site});
    if (!r || !r->complete()) return false;
  }
  return true;
}

bool eligible_site(const Site& s) { return s.status == SiteStatus::kReady && s.kind == StorageKind::kDisk; }

int complete_disk_copies(const Inventory& inv, const std::string& dataset, const std::string& except = {}) {
  int n = 0;
  for (const auto& dr : inv.dataset_replicas_of(dataset)) {
    if (dr.site->name == except || dr.site->kind != StorageKind::kDisk) continue;
    if (dr.completeness() == ReplicaCompleteness::kComplete) ++n;
  }
  return n;
}

}  // namespace

Bytes pending_copy_volume(const Inventory& inventory, const Registry& registry) {
  Bytes total = 0;
  for (const auto& op : registry.replica_ops()) {
    if (op.verb != OpVerb::kCopy) continue;
    if (op.state != OpState::kNew && op.state != OpState::kInProgress) continue;
    const Block* b = inventory.find_block(op.block);
    if (!b) continue;
    const auto* r = inventory.find_replica({op.block.dataset, op.block.block, op.site});
    total += b->size - (r ? r->size_on_site : 0);
  }
  return total;
}

CycleResult run_cycle(const Context& ctx, const std::vector<Plugin*>& plugins, const Config& config,
                      std::mt19937_64& rng, std::int64_t cycle_id) {
  const Inventory& inv = *ctx.inventory;
  CycleResult result;
  auto& report = result.report;
  report.cycle_id = cycle_id;
  report.pending_volume = ctx.registry ? pending_copy_volume(inv, *ctx.registry) : 0;

  std::vector<Proposal> pool;
  for (auto* plugin : plugins) {
    std::string name = plugin->name();
    try {
      auto props = plugin->propose(ctx);
      report.proposals[name] = props.size();
      for (auto& p : props) {
        p.plugin = name;
        pool.push_back(std::move(p));
      }
    } catch (const std::exception& e) {
      report.proposals[name] = 0;
      report.plugin_errors[name] = e.what();
    }
  }

  if (report.pending_volume > config.throttle) {
    report.throttled = true;
    for (auto& p : pool) report.rejected.push_back({std::move(p), "throttled"});
    return result;
  }

  // Sequential draws without replacement, probability proportional to
  // priority x weight, are equivalent to sorting by log(u) / w descending.
  std::vector<std::pair<double, std::size_t>> keys;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto it = config.priorities.find(pool[i].plugin);
    double w = (it == config.priorities.end() ? 1.0 : it->second) * pool[i].weight;
    double u = uniform(rng);
    if (!(w > 0)) {
      report.rejected.push_back({pool[i], "zero weight"});
      continue;
    }
    keys.emplace_back(std::log(std::max(u, 1e-300)) / w, i);
  }
  std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  // Projected bytes per site: current partition usage plus pending arrivals.
  std::map<std::string, Bytes> projected;
  for (const auto& [name, site] : inv.sites()) {
    if (!eligible_site(site) || site.quota(config.partition) <= 0) continue;
    projected[name] = partition_usage(inv, name, config.partition);
  }
  if (ctx.registry) {
    for (const auto& op : ctx.registry->replica_ops()) {
      if (op.verb != OpVerb::kCopy || (op.state != OpState::kNew && op.state != OpState::kInProgress)) continue;
      auto it = projected.find(op.site);
      const Block* b = inv.find_block(op.block);
      if (it == projected.end() || !b) continue;
      const auto* r = inv.find_replica({op.block.dataset, op.block.block, op.site});
      it->second += b->size - (r ? r->size_on_site : 0);
    }
  }
  auto occupancy = [&](const std::string& site) {
    return static_cast<double>(projected.at(site)) /
           static_cast<double>(inv.find_site(site)->quota(config.partition));
  };

  std::set<ReplicaKey> claimed;
  auto missing_bytes = [&](const Proposal& p, const std::string& dest, std::vector<std::string>* blocks) {
    Bytes total = 0;
    for (const auto& b : item_blocks(inv, p)) {
      if (claimed.count({p.dataset, b, dest})) continue;
      const auto* r = inv.find_replica({p.dataset, b, dest});
      if (r && r->complete()) continue;
      total += inv.find_block({p.dataset, b})->size - (r ? r->size_on_site : 0);
      if (blocks) blocks->push_back(b);
    }
    return total;
  };

  for (const auto& [_, idx] : keys) {
    Proposal& p = pool[idx];
    if (!inv.find_dataset(p.dataset) || item_blocks(inv, p).empty()) {
      report.rejected.push_back({p, "unknown item"});
      continue;
    }
    std::string dest;
    if (p.destination) {
      const Site* s = inv.find_site(*p.destination);
      if (!s || !eligible_site(*s)) {
        report.rejected.push_back({p, "destination not a ready disk site"});
        continue;
      }
      if (complete_at(inv, p, s->name)) {
        report.rejected.push_back({p, "already complete at destination"});
        continue;
      }
      if (!projected.count(s->name) || !(occupancy(s->name) < config.target_occupancy)) {
        report.rejected.push_back({p, "destination above target occupancy"});
        continue;
      }
      dest = s->name;
    } else {
      std::optional<std::pair<double, std::string>> best;
      for (const auto& [name, _] : projected) {
        if (!p.allowed.empty() && std::find(p.allowed.begin(), p.allowed.end(), name) == p.allowed.end()) continue;
        if (complete_at(inv, p, name)) continue;
        if (missing_bytes(p, name, nullptr) == 0) continue;
        double occ = occupancy(name);
        if (!(occ < config.target_occupancy)) continue;
        if (!best || occ < best->first) best = std::make_pair(occ, name);
      }
      if (!best) {
        report.rejected.push_back({p, "no eligible destination"});
        continue;
      }
      dest = best->second;
    }

    std::vector<std::string> blocks;
    Bytes volume = missing_bytes(p, dest, &blocks);
    if (blocks.empty()) {
      report.rejected.push_back({p, "already selected this cycle"});
      continue;
    }
    if (report.selected_volume + volume > config.cap) {
      report.rejected.push_back({p, "cycle volume cap"});
      continue;
    }
    report.selected_volume += volume;
    projected[dest] += volume;
    for (const auto& b : blocks) {
      claimed.insert({p.dataset, b, dest});
      ReplicaOpRequest r;
      r.verb = OpVerb::kCopy;
      r.block = {p.dataset, b};
      r.site = dest;
      r.group = p.group;
      r.created = ctx.now;
      r.enforced = p.enforced;
      result.requests.push_back(std::move(r));
    }
    report.selected.push_back({p, dest, volume});
  }

  if (ctx.registry) {
    auto mark = [&](const Proposal& p, const std::string& reason) {
      if (p.request_id == 0) return;
      for (auto r : ctx.registry->user_requests()) {
        if (r.id != p.request_id) continue;
        r.state = UserRequestState::kActivated;
        r.reason = reason;
        ctx.registry->update_user_request(r);
      }
    };
    for (const auto& s : report.selected) mark(s.proposal, "copy to " + s.destination + " scheduled");
    for (const auto& r : report.rejected) {
      if (r.reason == "already complete at destination") mark(r.proposal, r.reason);
    }
  }
  return result;
}

nlohmann::json to_json(const CycleReport& report) {
  auto prop = [](const Proposal& p) {
    nlohmann::json j{{"dataset", p.dataset}, {"plugin", p.plugin}, {"weight", p.weight}};
    if (p.block) j["block"] = *p.block;
    if (p.destination) j["destination"] = *p.destination;
    return j;
  };
  nlohmann::json j{{"cycle_id", report.cycle_id},
                   {"proposals", report.proposals},
                   {"plugin_errors", report.plugin_errors},
                   {"selected_volume", report.selected_volume},
                   {"pending_volume", report.pending_volume},
                   {"throttled", report.throttled}};
  j["selected"] = nlohmann::json::array();
  for (const auto& s : report.selected) {
    auto e = prop(s.proposal);
    e["to"] = s.destination;
    e["volume"] = s.volume;
    j["selected"].push_back(std::move(e));
  }
  j["rejected"] = nlohmann::json::array();
  for (const auto& r : report.rejected) {
    auto e = prop(r.proposal);
    e["reason"] = r.reason;
    j["rejected"].push_back(std::move(e));
  }
  return j;
}

std::vector<Proposal> PopularityPlugin::propose(const Context& ctx) {
  std::vector<Proposal> out;
  if (!ctx.accesses) return out;
  const Inventory& inv = *ctx.inventory;
  for (const auto& name : ctx.accesses->accessed_between(ctx.now - window_, ctx.now)) {
    const Dataset* d = inv.find_dataset(name);
    if (!d || d->size() <= 0) continue;
    auto accesses = ctx.accesses->count(name, ctx.now - window_, ctx.now);
    int replicas = 0;
    for (const auto& dr : inv.dataset_replicas_of(name)) {
      if (dr.site->kind == StorageKind::kDisk) ++replicas;
    }
    double rate = static_cast<double>(accesses) / std::max(replicas, 1);
    if (!(rate > threshold_)) continue;
    Proposal p;
    p.dataset = name;
    p.weight = rate / (static_cast<double>(d->size()) / static_cast<double>(kTB));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Proposal> BalancerPlugin::propose(const Context& ctx) {
  std::vector<Proposal> out;
  if (!ctx.last_detox) return out;
  const Inventory& inv = *ctx.inventory;
  for (const auto& s : ctx.last_detox->sites) {
    if (s.quota <= 0) continue;
    if (!(static_cast<double>(s.protected_volume) / static_cast<double>(s.quota) > threshold_)) continue;
    const Site* site = inv.find_site(s.site);
    if (!site || site->kind != StorageKind::kDisk) continue;
    for (const auto& dr : inv.dataset_replicas_at(s.site)) {
      if (dr.completeness() != ReplicaCompleteness::kComplete) continue;
      if (complete_disk_copies(inv, dr.dataset->name) != 1) continue;
      Proposal p;
      p.dataset = dr.dataset->name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

EnforcerPlugin::EnforcerPlugin(const std::string& rules_text, const policy::AttributeRegistry& registry)
    : registry_(registry) {
  int line_no = 0;
  for (const auto& raw : split(rules_text, '\n')) {
    ++line_no;
    std::string line(trim(raw));
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& why) {
      errors_.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    if (!starts_with(line, "Require ")) {
      fail("expected Require");
      continue;
    }
    auto on = line.find(" On ");
    auto for_ = line.find(" For ");
    if (on == std::string::npos || for_ == std::string::npos || for_ < on) {
      fail("expected Require <count> On <sites> For <datasets>");
      continue;
    }
    EnforcerRule rule;
    rule.text = line;
    try {
      rule.count = std::stoi(line.substr(8, on - 8));
      if (rule.count < 0) throw Error("negative count");
      rule.sites = policy::parse_predicate(line.substr(on + 4, for_ - on - 4), policy::Level::kSite, registry_, line_no);
      rule.datasets = policy::parse_predicate(line.substr(for_ + 5), policy::Level::kDataset, registry_, line_no);
    } catch (const std::exception& e) {
      fail(e.what());
      continue;
    }
    rules_.push_back(std::move(rule));
  }
}

std::vector<Proposal> EnforcerPlugin::propose(const Context& ctx) {
  std::vector<Proposal> out;
  const Inventory& inv = *ctx.inventory;
  policy::AttributeCache cache;
  for (const auto& rule : rules_) {
    if (rule.count == 0) continue;
    std::vector<std::string> sites;
    try {
      for (const auto& [name, site] : inv.sites()) {
        policy::EvalContext c;
        c.inventory = &inv;
        c.site = &site;
        c.now = ctx.now;
        if (policy::evaluate(*rule.sites, c, registry_)) sites.push_back(name);
      }
    } catch (const Error&) {
      continue;
    }
    for (const auto& [name, d] : inv.datasets()) {
      policy::EvalContext c;
      c.inventory = &inv;
      c.dataset = &d;
      c.accesses = ctx.accesses;
      c.now = ctx.now;
      c.cache = &cache;
      try {
        if (!policy::evaluate(*rule.datasets, c, registry_)) continue;
      } catch (const Error&) {
        continue;
      }
      int have = 0;
      std::vector<std::string> open;
      for (const auto& s : sites) {
        auto dr = inv.dataset_replica(name, s);
        if (dr && dr->completeness() == ReplicaCompleteness::kComplete) {
          ++have;
        } else {
          open.push_back(s);
        }
      }
      for (int i = have; i < rule.count && !open.empty(); ++i) {
        Proposal p;
        p.dataset = name;
        p.allowed = open;
        p.enforced = true;
        out.push_back(p);
      }
    }
  }
  return out;
}

std::vector<Proposal> UndertakerPlugin::propose(const Context& ctx) {
  std::vector<Proposal> out;
  const Inventory& inv = *ctx.inventory;
  for (const auto& [name, site] : inv.sites()) {
    if (site.status != SiteStatus::kMorgue) continue;
    for (const auto& dr : inv.dataset_replicas_at(name)) {
      if (complete_disk_copies(inv, dr.dataset->name, name) > 0) continue;
      Proposal p;
      p.dataset = dr.dataset->name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<Proposal> RequestPlugin::propose(const Context& ctx) {
  std::vector<Proposal> out;
  if (!ctx.registry) return out;
  const Inventory& inv = *ctx.inventory;
  for (auto r : ctx.registry->user_requests(UserRequestState::kPending)) {
    if (r.kind != UserRequestKind::kCopy) continue;
    std::string reason;
    if (!inv.find_dataset(r.dataset)) reason = "unknown dataset " + r.dataset;
    else if (!inv.find_site(r.site)) reason = "unknown site " + r.site;
    if (!reason.empty()) {
      r.state = UserRequestState::kFailed;
      r.reason = reason;
      ctx.registry->update_user_request(r);
      continue;
    }
    Proposal p;
    p.dataset = r.dataset;
    p.destination = r.site;
    p.weight = kWeight;
    if (!r.group.empty()) p.group = r.group;
    p.request_id = r.id;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace stowage::dealer
