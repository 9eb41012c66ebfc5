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


// Randomized cluster trial: three members, writes from random members
// with transport delays, and one master crash part way through. Checks
// survivor convergence, equality with a serial replay of the committed
// deltas, and mutual exclusion over the lock event log.

#ifndef STOWAGE_TESTS_CLUSTER_HARNESS_HPP
#define STOWAGE_TESTS_CLUSTER_HARNESS_HPP

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "stowage/cluster.hpp"
#include "stowage/server.hpp"

namespace stowage::testing {

struct ClusterTrialConfig {
  std::uint64_t seed = 1;
  int nodes = 3;
  int writes = 20;
  bool crash_master = true;
  int max_delay_us = 300;
  int miss_limit = 3;
};

struct ClusterTrialResult {
  bool ok = true;
  std::string failure;
  std::uint64_t final_version = 0;
  int committed = 0;
  int survivors = 0;
  std::string crashed;

  void fail(const std::string& why) {
    if (ok) failure = why;
    ok = false;
  }
};

inline ClusterTrialResult run_cluster_trial(const ClusterTrialConfig& cfg) {
  using cluster::Node;
  ClusterTrialResult res;
  std::mt19937_64 rng(cfg.seed);
  auto transport = std::make_shared<cluster::SimTransport>(cfg.seed);
  std::atomic<std::int64_t> clock{0};

  struct LockEvent {
    std::string node;
    enum { kAcquire, kRelease, kCrash } kind;
  };
  std::mutex log_mu;
  std::vector<LockEvent> events;

  struct CommitRecord {
    std::string node;
    std::uint64_t version;
    std::string delta;
  };
  std::vector<CommitRecord> commits;

  cluster::ClusterConfig cc;
  cc.heartbeat_interval = 1;
  cc.miss_limit = cfg.miss_limit;
  cc.lock_timeout = 5;
  cc.clock = [&] { return static_cast<double>(clock.load()); };
  cc.on_lock_event = [&](const std::string& node, bool held) {
    std::lock_guard lock(log_mu);
    events.push_back({node, held ? LockEvent::kAcquire : LockEvent::kRelease});
  };

  std::vector<std::string> names;
  std::vector<std::unique_ptr<Node>> nodes;
  std::vector<std::unique_ptr<Server>> servers;
  for (int i = 0; i < cfg.nodes; ++i) {
    names.push_back("n" + std::to_string(i));
    nodes.push_back(std::make_unique<Node>(names.back(), transport, cc));
    ServerConfig sc;
    sc.clock = [&] { return Timestamp{clock.load()}; };
    servers.push_back(std::make_unique<Server>(sc, nodes.back()->lock()));
    nodes.back()->attach(*servers.back());
  }

  servers[0]->store().reset(random_world(cfg.seed, 4, 8), 1);
  nodes[0]->bootstrap();
  for (int i = 1; i < cfg.nodes; ++i) nodes[i]->join(names[i == 1 ? 0 : i - 1]);
  transport->set_delay(0, cfg.max_delay_us);

  std::atomic<int> started{0};
  for (int i = 0; i < cfg.nodes; ++i) {
    std::string name = names[i];
    servers[i]->register_app("write", true, [&, name](AppContext& ctx) {
      std::mt19937_64 r(cfg.seed * 1000 + static_cast<std::uint64_t>(started.load()) + ctx.request().id);
      auto delta = random_delta(ctx.inventory(), r);
      std::this_thread::sleep_for(std::chrono::microseconds(r() % 200));
      auto v = ctx.commit(delta);
      std::lock_guard lock(log_mu);
      commits.push_back({name, v, format_delta(delta)});
    });
  }

  std::vector<std::vector<int>> plan(cfg.nodes);
  for (int w = 0; w < cfg.writes; ++w) plan[rng() % cfg.nodes].push_back(w);
  int crash_after = cfg.crash_master ? 3 + static_cast<int>(rng() % (cfg.writes > 6 ? cfg.writes - 6 : 1)) : -1;

  std::set<std::string> dead;
  std::mutex dead_mu;
  auto is_dead = [&](const std::string& n) {
    std::lock_guard lock(dead_mu);
    return dead.count(n) > 0;
  };

  std::atomic<bool> stop_driver{false};
  std::thread driver([&] {
    while (!stop_driver) {
      ++clock;
      for (int i = 0; i < cfg.nodes; ++i) {
        if (!is_dead(names[i])) nodes[i]->tick();
      }
      std::this_thread::sleep_for(std::chrono::microseconds(300));
    }
  });

  std::vector<std::thread> writers;
  for (int i = 0; i < cfg.nodes; ++i) {
    writers.emplace_back([&, i] {
      for (int w : plan[i]) {
        (void)w;
        int n = ++started;
        if (n == crash_after) {
          for (int k = 0; k < cfg.nodes; ++k) {
            if (!is_dead(names[k]) && nodes[k]->is_master()) {
              {
                std::lock_guard lock(dead_mu);
                dead.insert(names[k]);
              }
              transport->crash(names[k]);
              nodes[k]->halt();
              std::lock_guard lock(log_mu);
              events.push_back({names[k], LockEvent::kCrash});
              res.crashed = names[k];
              break;
            }
          }
        }
        if (is_dead(names[i])) return;
        auto r = servers[i]->run_app("write", true, "harness");
        if (r.state != AppState::kDone && !is_dead(names[i])) {
          std::lock_guard lock(log_mu);
          res.fail(names[i] + " write failed: " + r.error + " board " + cluster::to_json(nodes[i]->board()).dump());
        }
      }
    });
  }
  for (auto& t : writers) t.join();

  // Quiesce: let failover, settling and reconciliation finish.
  std::vector<int> alive;
  for (int i = 0; i < cfg.nodes; ++i) {
    if (!is_dead(names[i])) alive.push_back(i);
  }
  res.survivors = static_cast<int>(alive.size());
  auto settled = [&] {
    std::uint64_t v = servers[alive[0]]->store().version();
    for (int i : alive) {
      if (servers[i]->store().version() != v) return false;
      auto b = nodes[i]->board();
      if (b.lock_holder || is_dead(b.master)) return false;
    }
    return true;
  };
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  std::int64_t calm_from = -1;
  while (std::chrono::steady_clock::now() < deadline) {
    if (settled()) {
      if (calm_from < 0) calm_from = clock.load();
      if (clock.load() - calm_from >= 2 * cfg.miss_limit) break;
    } else {
      calm_from = -1;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  stop_driver = true;
  driver.join();

  // Convergence.
  std::string reference = canonical_snapshot(*servers[alive[0]]->store().image());
  res.final_version = servers[alive[0]]->store().version();
  for (int i : alive) {
    if (servers[i]->store().version() != res.final_version) res.fail("survivor versions differ");
    if (canonical_snapshot(*servers[i]->store().image()) != reference) res.fail(names[i] + " diverged");
  }

  // Serial replay of the committed deltas in version order. A version
  // committed twice can only be a write of the crashed node that never
  // reached a survivor.
  std::map<std::uint64_t, std::vector<CommitRecord>> by_version;
  for (const auto& c : commits) by_version[c.version].push_back(c);
  Inventory replay = random_world(cfg.seed, 4, 8);
  for (std::uint64_t v = 2; v <= res.final_version; ++v) {
    auto it = by_version.find(v);
    if (it == by_version.end()) {
      res.fail("no commit recorded for version " + std::to_string(v));
      break;
    }
    const CommitRecord* pick = nullptr;
    int survivor_records = 0;
    for (const auto& c : it->second) {
      if (!is_dead(c.node)) {
        pick = &c;
        ++survivor_records;
      }
    }
    if (survivor_records > 1) res.fail("two survivors committed version " + std::to_string(v));
    if (!pick) {
      if (it->second.size() != 1) res.fail("ambiguous crashed commit at version " + std::to_string(v));
      pick = &it->second.front();
    }
    replay = apply_delta(replay, parse_delta(pick->delta));
  }
  if (res.ok && canonical_snapshot(replay) != reference) res.fail("survivors differ from serial replay");
  for (const auto& c : commits) {
    if (!is_dead(c.node)) {
      ++res.committed;
      if (c.version > res.final_version) res.fail("acknowledged survivor commit lost");
    }
  }

  // Mutual exclusion: among live nodes at most one believes it holds.
  std::set<std::string> holders;
  std::set<std::string> crashed;
  for (const auto& e : events) {
    if (crashed.count(e.node)) continue;
    switch (e.kind) {
      case LockEvent::kCrash:
        crashed.insert(e.node);
        holders.erase(e.node);
        break;
      case LockEvent::kAcquire:
        if (!holders.empty()) res.fail(e.node + " acquired while " + *holders.begin() + " held the lock");
        holders.insert(e.node);
        break;
      case LockEvent::kRelease:
        holders.erase(e.node);
        break;
    }
  }

  // Single master among survivors.
  std::set<std::string> masters;
  for (int i : alive) masters.insert(nodes[i]->board().master);
  if (masters.size() != 1) res.fail("survivors disagree on the master");

  for (int i = 0; i < cfg.nodes; ++i) servers[i]->wait_all();
  servers.clear();
  nodes.clear();
  return res;
}

}  // namespace stowage::testing

#endif  // STOWAGE_TESTS_CLUSTER_HARNESS_HPP
