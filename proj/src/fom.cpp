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


#include "stowage/fom.hpp"

#include <algorithm>
#include <cmath>

namespace stowage::fom {

void LinkQuality::record(const std::string& source, const std::string& destination, Timestamp time, bool success) {
  auto& q = links_[{source, destination}];
  // Keep the window ordered even if reports arrive out of order.
  auto it = std::upper_bound(q.begin(), q.end(), time, [](Timestamp t, const auto& e) { return t < e.first; });
  q.insert(it, {time, !success});
}

double LinkQuality::failure_fraction(const std::string& source, const std::string& destination, Timestamp now,
                                     Timestamp horizon) const {
  auto it = links_.find({source, destination});
  if (it == links_.end()) return 0.0;
  std::size_t attempts = 0, failures = 0;
  for (const auto& [t, failed] : it->second) {
    if (t <= now - horizon || t > now) continue;
    ++attempts;
    if (failed) ++failures;
  }
  return attempts == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(attempts);
}

std::size_t LinkQuality::attempts(const std::string& source, const std::string& destination, Timestamp now,
                                  Timestamp horizon) const {
  auto it = links_.find({source, destination});
  if (it == links_.end()) return 0;
  return static_cast<std::size_t>(std::count_if(it->second.begin(), it->second.end(), [&](const auto& e) {
    return e.first > now - horizon && e.first <= now;
  }));
}

void LinkQuality::prune(Timestamp before) {
  for (auto it = links_.begin(); it != links_.end();) {
    auto& q = it->second;
    while (!q.empty() && q.front().first <= before) q.pop_front();
    it = q.empty() ? links_.erase(it) : std::next(it);
  }
}

std::string choose_source(const Inventory& inventory, const BlockKey& block, const std::string& destination,
                          const LinkQuality& links, Timestamp now, Timestamp horizon) {
  std::vector<std::pair<double, std::string>> ready, morgue;
  for (const auto* r : inventory.replicas_of(block)) {
    if (!r->complete() || r->site == destination) continue;
    const Site* s = inventory.find_site(r->site);
    auto entry = std::make_pair(links.failure_fraction(r->site, destination, now, horizon), r->site);
    (s->status == SiteStatus::kReady ? ready : morgue).push_back(entry);
  }
  auto& pool = ready.empty() ? morgue : ready;
  if (pool.empty()) throw NoSource("no source");
  return std::min_element(pool.begin(), pool.end())->second;
}

FileOperationManager::FileOperationManager(Registry& registry, Backend& backend, Config config)
    : registry_(registry), backend_(backend), config_(config) {}

IterationResult FileOperationManager::run_iteration(const Inventory& inv, Timestamp now) {
  IterationResult res;
  ++iteration_;
  if (!backend_.reachable()) {
    res.aborted = true;
    res.errors.push_back("backend unreachable");
    return res;
  }

  std::map<ReplicaKey, std::optional<BlockReplica>> changed;
  auto current = [&](const ReplicaKey& key) -> std::optional<BlockReplica> {
    auto it = changed.find(key);
    if (it != changed.end()) return it->second;
    const auto* r = inv.find_replica(key);
    if (!r) return std::nullopt;
    return *r;
  };
  std::map<BlockKey, std::vector<File>> file_cache;
  auto files_of = [&](const BlockKey& b) -> const std::vector<File>& {
    auto it = file_cache.find(b);
    if (it == file_cache.end()) it = file_cache.emplace(b, load_files(inv, b)).first;
    return it->second;
  };
  auto has_file = [&](const ReplicaKey& key, const std::string& lfn) {
    auto r = current(key);
    return r && (r->complete() || r->present_files->count(lfn));
  };
  auto set_present = [&](const ReplicaOpRequest& req, const std::string& lfn, bool present) {
    ReplicaKey key{req.block.dataset, req.block.block, req.site};
    const Block* block = inv.find_block(req.block);
    if (!block) return;
    const auto& files = files_of(req.block);
    auto r = current(key);
    if (present) {
      if (!r) {
        r = BlockReplica{};
        r->dataset = key.dataset;
        r->block = key.block;
        r->site = key.site;
        r->group = req.group;
        r->is_enforced = req.enforced;
        r->present_files = std::set<std::string>{};
      }
      if (r->complete() || !r->present_files->insert(lfn).second) return;
      if (r->present_files->size() == files.size()) {
        bool all = std::all_of(files.begin(), files.end(),
                               [&](const File& f) { return r->present_files->count(f.lfn) > 0; });
        if (all) r->present_files.reset();
      }
    } else {
      if (!r) return;
      if (r->complete()) {
        r->present_files = std::set<std::string>{};
        for (const auto& f : files) r->present_files->insert(f.lfn);
      }
      if (!r->present_files->erase(lfn)) return;
      if (r->present_files->empty()) {
        changed[key] = std::nullopt;
        return;
      }
    }
    r->size_on_site = r->complete() ? block->size : present_bytes(files, *r->present_files);
    r->last_update = now;
    changed[key] = r;
  };
  auto fail_request = [&](ReplicaOpRequest req, const std::string& reason) {
    req.state = OpState::kFailed;
    req.reason = reason;
    registry_.update_replica_op(req);
    tracks_.erase(req.id);
  };

  // Collect.
  for (auto it = batches_.begin(); it != batches_.end();) {
    auto& flight = it->second;
    std::map<std::string, const FileOp*> by_lfn;
    for (const auto& op : flight.batch.files) by_lfn[op.lfn] = &op;
    for (const auto& outcome : backend_.poll(it->first)) {
      if (outcome.state == FileOpState::kPending) continue;
      auto found = by_lfn.find(outcome.lfn);
      if (found == by_lfn.end()) continue;
      const FileOp& op = *found->second;
      std::string open_key = std::to_string(op.request_id) + "|" + op.lfn;
      if (!flight.open.erase(open_key)) continue;  // duplicate report
      bool ok = outcome.state == FileOpState::kSuccess;
      registry_.put_file_op({it->first, op.request_id, op.lfn, outcome.state, outcome.reason});
      if (op.verb == OpVerb::kCopy) links_.record(op.source, op.destination, std::min(outcome.time, now), ok);
      auto req = registry_.replica_op(op.request_id);
      if (!req) continue;
      try {
        if (ok) {
          set_present(*req, op.lfn, op.verb == OpVerb::kCopy);
          ++res.completed_files;
        } else {
          ++res.failed_files;
        }
      } catch (const Error& e) {
        res.errors.push_back(e.what());
      }
      auto track = tracks_.find(req->id);
      if (req->state != OpState::kInProgress || track == tracks_.end()) continue;
      auto& fs = track->second.files[op.lfn];
      fs.in_flight = false;
      if (ok) {
        fs.done = true;
        continue;
      }
      ++fs.attempts;
      if (fs.attempts >= config_.max_attempts) {
        fail_request(*req, op.lfn + " failed " + std::to_string(fs.attempts) + " times: " + outcome.reason);
      } else {
        int delay = std::min(1 << std::min(fs.attempts - 1, 30), config_.backoff_cap);
        fs.next_iteration = iteration_ + delay;
      }
    }
    it = flight.open.empty() ? batches_.erase(it) : std::next(it);
  }

  // Completion and dispatch.
  std::vector<FileOp> to_send;
  auto start_request = [&](ReplicaOpRequest req) -> bool {
    const Block* block = inv.find_block(req.block);
    if (!block) {
      fail_request(req, "unknown block " + to_string(req.block));
      return false;
    }
    if (!inv.find_site(req.site)) {
      fail_request(req, "unknown site " + req.site);
      return false;
    }
    Track track;
    if (req.verb == OpVerb::kCopy) {
      if (req.source) {
        const auto* src = inv.find_replica({req.block.dataset, req.block.block, *req.source});
        if (!src || !src->complete()) {
          fail_request(req, "unknown source replica at " + *req.source);
          return false;
        }
        if (*req.source == req.site) {
          fail_request(req, "source equals destination");
          return false;
        }
        track.source = *req.source;
      }
    }
    const auto& files = files_of(req.block);
    for (const auto& f : files) track.files[f.lfn].next_iteration = iteration_;
    req.state = OpState::kInProgress;
    registry_.update_replica_op(req);
    tracks_[req.id] = std::move(track);
    return true;
  };

  for (auto req : registry_.replica_ops(OpState::kNew)) {
    try {
      start_request(req);
    } catch (const PersistenceUnavailable& e) {
      res.errors.push_back(std::string("request ") + std::to_string(req.id) + " deferred: " + e.what());
    }
  }

  for (auto req : registry_.replica_ops(OpState::kInProgress)) {
    auto tit = tracks_.find(req.id);
    if (tit == tracks_.end()) {
      // Tracking state is not persisted; restart the request.
      try {
        if (!start_request(req)) continue;
      } catch (const PersistenceUnavailable& e) {
        res.errors.push_back(e.what());
        continue;
      }
      tit = tracks_.find(req.id);
      req.state = OpState::kInProgress;
    }
    auto& track = tit->second;
    ReplicaKey target{req.block.dataset, req.block.block, req.site};
    auto replica = current(target);
    bool copy = req.verb == OpVerb::kCopy;
    if (copy ? (replica && replica->complete()) : !replica) {
      req.state = OpState::kDone;
      registry_.update_replica_op(req);
      tracks_.erase(tit);
      continue;
    }
    std::vector<std::string> due;
    for (auto& [lfn, fs] : track.files) {
      if (fs.done || fs.in_flight) continue;
      if (has_file(target, lfn) == copy) {
        fs.done = true;
        continue;
      }
      if (fs.next_iteration <= iteration_) due.push_back(lfn);
    }
    if (!copy && std::all_of(track.files.begin(), track.files.end(), [](const auto& f) { return f.second.done; })) {
      // Nothing left on disk but the replica record, e.g. a partial
      // replica with no files present.
      changed[target] = std::nullopt;
      req.state = OpState::kDone;
      registry_.update_replica_op(req);
      tracks_.erase(tit);
      continue;
    }
    if (due.empty()) continue;
    if (copy) {
      const BlockReplica* src = track.source.empty() ? nullptr : inv.find_replica({target.dataset, target.block, track.source});
      if (!src || !src->complete()) {
        try {
          track.source = choose_source(inv, req.block, req.site, links_, now, config_.horizon);
        } catch (const NoSource& e) {
          fail_request(req, e.what());
          continue;
        }
      }
    }
    const auto& files = files_of(req.block);
    std::map<std::string, Bytes> sizes;
    for (const auto& f : files) sizes[f.lfn] = f.size;
    for (const auto& lfn : due) {
      FileOp op;
      op.request_id = req.id;
      op.verb = req.verb;
      op.lfn = lfn;
      op.size = sizes[lfn];
      op.destination = req.site;
      op.destination_endpoint = inv.find_site(req.site)->endpoint;
      if (copy) {
        op.source = track.source;
        op.source_endpoint = inv.find_site(track.source)->endpoint;
      }
      track.files[lfn].in_flight = true;
      to_send.push_back(std::move(op));
    }
  }

  // Batches per (source, destination), bounded in files and bytes.
  std::stable_sort(to_send.begin(), to_send.end(), [](const FileOp& a, const FileOp& b) {
    return std::tie(a.source, a.destination) < std::tie(b.source, b.destination);
  });
  std::vector<FileOpBatch> out;
  std::set<std::string> lfns_in_batch;
  Bytes batch_bytes = 0;
  for (auto& op : to_send) {
    bool fresh = out.empty() || out.back().files.front().source != op.source ||
                 out.back().files.front().destination != op.destination ||
                 out.back().files.size() >= config_.batch_files ||
                 batch_bytes + op.size > config_.batch_bytes || lfns_in_batch.count(op.lfn);
    if (fresh) {
      out.emplace_back();
      lfns_in_batch.clear();
      batch_bytes = 0;
    }
    batch_bytes += op.size;
    lfns_in_batch.insert(op.lfn);
    out.back().files.push_back(std::move(op));
  }
  for (auto& batch : out) {
    InFlight flight;
    for (const auto& op : batch.files) flight.open.insert(std::to_string(op.request_id) + "|" + op.lfn);
    auto id = backend_.submit(batch);
    batch.id = id;
    for (const auto& op : batch.files) registry_.put_file_op({id, op.request_id, op.lfn, FileOpState::kPending, ""});
    res.dispatched_files += batch.files.size();
    flight.batch = std::move(batch);
    batches_[id] = std::move(flight);
  }

  for (const auto& [key, r] : changed) {
    if (r) {
      res.delta.update(to_record(*r));
    } else {
      res.delta.remove(key_record(RecordType::kReplica, {key.dataset, key.block, key.site}));
    }
  }
  return res;
}

SimulatedBackend::SimulatedBackend(std::function<Timestamp()> clock, std::uint64_t seed)
    : clock_(std::move(clock)), rng_(seed) {}

void SimulatedBackend::add_endpoint(const std::string& endpoint) { endpoints_.insert(endpoint); }

void SimulatedBackend::set_link(const std::string& source, const std::string& destination, LinkModel model) {
  links_[{source, destination}] = model;
}

const LinkModel& SimulatedBackend::model(const std::string& source, const std::string& destination) const {
  auto it = links_.find({source, destination});
  return it == links_.end() ? default_ : it->second;
}

std::int64_t SimulatedBackend::submit(const FileOpBatch& batch) {
  double now = static_cast<double>(clock_());
  std::int64_t id = next_id_++;
  auto& planned = batches_[id];
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (const auto& op : batch.files) {
    Planned p;
    p.lfn = op.lfn;
    p.size = op.size;
    bool copy = op.verb == OpVerb::kCopy;
    bool known = endpoints_.count(op.destination_endpoint) && (!copy || endpoints_.count(op.source_endpoint));
    if (!known) {
      p.start = p.finish = now;
      p.fail = true;
      p.reason = "unknown endpoint";
      planned.push_back(std::move(p));
      continue;
    }
    const std::string& src = copy ? op.source_endpoint : op.destination_endpoint;
    const LinkModel& m = model(src, op.destination_endpoint);
    p.fail = coin(rng_) < m.failure_probability;
    if (p.fail) p.reason = "transfer failed";
    if (copy) {
      p.link = {src, op.destination_endpoint};
      double& busy = busy_until_[p.link];
      p.start = std::max(now, busy);
      double duration = static_cast<double>(op.size) / m.bandwidth;
      busy = p.start + duration;
      p.finish = busy + m.latency;
      if (!p.fail) finished_log_.push_back(p);
    } else {
      p.start = now;
      p.finish = now + m.latency;
    }
    planned.push_back(std::move(p));
  }
  return id;
}

std::vector<FileOutcome> SimulatedBackend::poll(std::int64_t batch_id) {
  std::vector<FileOutcome> out;
  auto it = batches_.find(batch_id);
  if (it == batches_.end()) return out;
  double now = static_cast<double>(clock_());
  for (const auto& p : it->second) {
    FileOutcome o;
    o.lfn = p.lfn;
    o.time = static_cast<Timestamp>(std::ceil(p.finish));
    if (p.finish <= now) {
      o.state = p.fail ? FileOpState::kFailure : FileOpState::kSuccess;
      o.reason = p.reason;
    }
    out.push_back(std::move(o));
  }
  return out;
}

void SimulatedBackend::cancel(std::int64_t batch_id) { batches_.erase(batch_id); }

Bytes SimulatedBackend::delivered_between(double from, double to) const {
  Bytes total = 0;
  for (const auto& p : finished_log_) {
    if (p.finish >= from && p.finish < to) total += p.size;
  }
  return total;
}

double SimulatedBackend::link_busy_until(const std::string& source, const std::string& destination) const {
  auto it = busy_until_.find({source, destination});
  return it == busy_until_.end() ? 0.0 : it->second;
}

}  // namespace stowage::fom
