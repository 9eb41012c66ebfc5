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


// Multi-server clustering: a master-held messaging board refreshed by
// heartbeats, master failover, a cluster-wide write lock and delta
// broadcast before the lock is released.

#ifndef STOWAGE_CLUSTER_HPP
#define STOWAGE_CLUSTER_HPP

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "stowage/server.hpp"
#include "stowage/write_lock.hpp"

namespace stowage::cluster {

/// Request/response messaging between members.
class Transport {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json&)>;
  virtual ~Transport() = default;
  virtual void listen(const std::string& address, Handler handler) = 0;
  virtual void close(const std::string& address) = 0;
  /// nullopt when `to` cannot be reached or does not answer.
  virtual std::optional<nlohmann::json> call(const std::string& from, const std::string& to,
                                             const nlohmann::json& message) = 0;
};

/// In-process transport with injectable delay, crashes and partitions.
class SimTransport : public Transport {
 public:
  explicit SimTransport(std::uint64_t seed = 1) : rng_(seed) {}

  void listen(const std::string& address, Handler handler) override;
  void close(const std::string& address) override;
  std::optional<nlohmann::json> call(const std::string& from, const std::string& to,
                                     const nlohmann::json& message) override;

  /// Each call sleeps a uniform [min, max] microseconds before delivery.
  void set_delay(int min_us, int max_us);
  /// A crashed address neither sends nor receives.
  void crash(const std::string& address);
  bool crashed(const std::string& address) const;
  void partition(const std::string& a, const std::string& b);
  void heal();
  std::uint64_t calls() const { return calls_; }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Handler>> handlers_;
  std::set<std::string> crashed_;
  std::set<std::pair<std::string, std::string>> cut_;
  std::mt19937_64 rng_;
  int min_us_ = 0;
  int max_us_ = 0;
  std::atomic<std::uint64_t> calls_{0};
};

/// One JSON document per line over TCP, one exchange per connection.
/// Addresses are host:port.
class TcpTransport : public Transport {
 public:
  explicit TcpTransport(double timeout_seconds = 2.0) : timeout_(timeout_seconds) {}
  ~TcpTransport() override;

  void listen(const std::string& address, Handler handler) override;
  void close(const std::string& address) override;
  std::optional<nlohmann::json> call(const std::string& from, const std::string& to,
                                     const nlohmann::json& message) override;

 private:
  struct Listener;
  double timeout_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Listener>> listeners_;
};

struct Member {
  std::string host;
  std::int64_t order = 0;
  double last_heartbeat = 0;
  std::uint64_t version = 0;
  bool operator==(const Member&) const = default;
};

struct MessagingBoard {
  /// In join order.
  std::vector<Member> members;
  std::string master;
  std::optional<std::string> lock_holder;
  std::deque<std::string> lock_queue;
  /// Member -> versions a writer could not deliver to it.
  std::map<std::string, std::set<std::uint64_t>> pending;
  std::int64_t next_order = 0;
  std::uint64_t epoch = 0;

  const Member* find(const std::string& host) const;
  bool contains(const std::string& host) const { return find(host) != nullptr; }
  bool operator==(const MessagingBoard&) const = default;
};

nlohmann::json to_json(const MessagingBoard& board);
MessagingBoard board_from_json(const nlohmann::json& j);

struct ClusterConfig {
  double heartbeat_interval = 5.0;
  /// Missed heartbeats before a peer counts as dead.
  int miss_limit = 3;
  /// Real seconds a blocking lock acquisition waits before giving up.
  double lock_timeout = 30.0;
  /// Seconds; defaults to a monotonic wall clock.
  std::function<double()> clock;
  /// Called with true when this node starts believing it holds the
  /// cluster lock and false when it stops.
  std::function<void(const std::string& node, bool held)> on_lock_event;
};

class JoinError : public Error {
 public:
  using Error::Error;
};

class LockTimeout : public Error {
 public:
  using Error::Error;
};

class Node;

/// Local FIFO lock plus the cluster lock granted by the master.
class ClusterWriteLock : public WriteLock {
 public:
  explicit ClusterWriteLock(Node& node) : node_(node) {}
  bool try_acquire(const std::string& owner) override;
  void acquire(const std::string& owner) override;
  void release(const std::string& owner) override;
  std::optional<std::string> holder() const override;

 private:
  Node& node_;
  LocalWriteLock local_;
};

/// One cluster member. Create the node, build the Server with lock(), then
/// attach() the server. Either call tick() from a driver or start() the
/// heartbeat thread.
class Node {
 public:
  Node(std::string address, std::shared_ptr<Transport> transport, ClusterConfig config = {});
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::shared_ptr<WriteLock> lock() { return lock_; }
  void attach(Server& server);

  /// Founds a new cluster with this node as master.
  void bootstrap();
  /// Registers through `contact`, following a redirect to the master, then
  /// copies the inventory from `contact` under the cluster lock.
  void join(const std::string& contact);

  /// One heartbeat cycle; on the master also expires silent members and
  /// reconciles versions when needed.
  void tick();
  void start();
  void stop();
  /// Simulated process death: stops ticking and aborts lock waits.
  void halt();

  const std::string& address() const { return address_; }
  MessagingBoard board() const;
  bool is_master() const;
  bool holds_cluster_lock() const { return holding_; }
  std::uint64_t version() const;
  /// Deltas this node committed or applied, by version.
  std::map<std::uint64_t, std::string> history() const;

 private:
  friend class ClusterWriteLock;

  double now() const { return config_.clock(); }
  nlohmann::json handle(const nlohmann::json& msg);
  std::optional<nlohmann::json> rpc(const std::string& to, const nlohmann::json& msg);

  nlohmann::json on_join(const nlohmann::json& msg);
  nlohmann::json on_heartbeat(const nlohmann::json& msg);
  nlohmann::json on_lock(const nlohmann::json& msg);
  nlohmann::json on_unlock(const nlohmann::json& msg);
  nlohmann::json on_apply(const nlohmann::json& msg);
  nlohmann::json on_reset(const nlohmann::json& msg);
  nlohmann::json snapshot_reply();

  void register_member(const std::string& host, std::uint64_t version);
  void takeover();
  void failover();
  void expire_members();
  void reconcile();
  void copy_from(const std::string& peer);

  /// Blocking unless `once`; true when granted.
  bool acquire_cluster(bool once);
  void release_cluster();
  void broadcast(std::uint64_t version, const InventoryDelta& delta);
  void set_holding(bool held);

  std::string address_;
  std::shared_ptr<Transport> transport_;
  ClusterConfig config_;
  std::shared_ptr<ClusterWriteLock> lock_;
  Server* server_ = nullptr;

  mutable std::mutex mu_;
  MessagingBoard board_;
  int misses_ = 0;
  double settle_until_ = 0;
  bool needs_reconcile_ = false;
  std::set<std::string> unreachable_;
  std::atomic<bool> holding_{false};
  std::atomic<bool> halted_{false};
  std::vector<std::string> unreached_;

  // Serializes remote applies with local commits.
  mutable std::mutex apply_mu_;
  std::map<std::uint64_t, std::string> history_;

  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::thread thread_;
};

}  // namespace stowage::cluster

#endif  // STOWAGE_CLUSTER_HPP
