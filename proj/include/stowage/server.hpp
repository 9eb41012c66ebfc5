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


// The resident server: owns the published inventory image, queues and runs
// applications, serializes writers, persists registry and history, and
// answers REST calls.

#ifndef STOWAGE_SERVER_HPP
#define STOWAGE_SERVER_HPP

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "stowage/access.hpp"
#include "stowage/history.hpp"
#include "stowage/registry.hpp"
#include "stowage/sequence.hpp"
#include "stowage/store.hpp"
#include "stowage/write_lock.hpp"

namespace stowage {

enum class Role { kReader, kWriter };

struct Identity {
  std::string user;
  Role role = Role::kReader;
};

struct ServerConfig {
  /// Empty: nothing is persisted.
  std::filesystem::path data_dir;
  /// Bearer token -> identity.
  std::map<std::string, Identity> tokens;
  /// Service clock; defaults to wall-clock seconds.
  std::function<Timestamp()> clock;
  std::size_t compact_every = 1000;
  /// More than `rate_limit` calls from one source within `rate_window`
  /// seconds blacklists it for `blacklist_seconds`.
  int rate_limit = 600;
  Timestamp rate_window = 60;
  Timestamp blacklist_seconds = 600;
};

enum class AppState { kQueued, kRunning, kDone, kFailed, kKilled };
const char* to_string(AppState s);

struct AppRequest {
  std::int64_t id = 0;
  std::string name;
  bool write_enabled = false;
  std::string submitter;
  AppState state = AppState::kQueued;
  Timestamp submitted = 0;
  Timestamp started = 0;
  Timestamp finished = 0;
  std::string error;
  std::uint64_t base_version = 0;
  std::vector<std::uint64_t> commits;
};

nlohmann::json to_json(const AppRequest& r);

class Unauthorized : public Error {
 public:
  using Error::Error;
};
class Forbidden : public Error {
 public:
  using Error::Error;
};
class UnknownApp : public Error {
 public:
  using Error::Error;
};

class Server;

/// What a running application sees. The image is fixed at start.
class AppContext {
 public:
  const Inventory& inventory() const { return *image_; }
  std::shared_ptr<const Inventory> image() const { return image_; }
  const AccessLog& accesses() const { return *accesses_; }
  Registry& registry();
  HistoryStore& history();
  Timestamp now() const;
  const AppRequest& request() const { return request_; }
  bool stop_requested() const;

  /// Commits a delta; only write-enabled runs may call this. Later commits
  /// in the same run see earlier ones through image().
  std::uint64_t commit(const InventoryDelta& delta);

 private:
  friend class Server;
  AppContext(Server& server, AppRequest& request);

  Server& server_;
  AppRequest& request_;
  std::shared_ptr<const Inventory> image_;
  std::shared_ptr<const AccessLog> accesses_;
};

using AppFn = std::function<void(AppContext&)>;

struct HttpRequest {
  std::string method = "GET";
  std::string path;
  std::multimap<std::string, std::string> query;
  std::string body;
  /// Bearer token, empty if none.
  std::string token;
  /// Caller address, for rate limiting.
  std::string source = "local";
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct SequenceEvent {
  std::string sequence;
  std::size_t step = 0;
  std::string app;
  AppState state = AppState::kDone;
  Timestamp time = 0;
};

/// Pauses a sequence; returns false when the sequence should stop.
using Sleeper = std::function<bool(double seconds)>;

class Server {
 public:
  explicit Server(ServerConfig config, std::shared_ptr<WriteLock> lock = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// `write_capable` apps may be run write-enabled.
  void register_app(const std::string& name, bool write_capable, AppFn fn);
  bool has_app(const std::string& name) const;

  /// Queues an app run. Read-only runs start immediately on their own
  /// thread; write-enabled runs are executed one at a time in FIFO order.
  std::int64_t submit_app(const std::string& name, bool write, const std::string& token);
  /// Same as submit_app for an already authenticated caller.
  std::int64_t submit_app_as(const std::string& name, bool write, const Identity& who);
  /// Runs on the calling thread and returns the finished record.
  AppRequest run_app(const std::string& name, bool write, const std::string& submitter);

  void wait(std::int64_t id);
  void wait_all();
  std::optional<AppRequest> app(std::int64_t id) const;
  std::vector<AppRequest> apps() const;

  /// Starts a sequence on its own thread. Every referenced app must exist.
  void start_sequence(const SequenceDef& def);
  void stop_sequence(const std::string& name);
  std::vector<std::string> sequences() const;
  /// Runs a sequence on the calling thread until done or `sleep` says stop.
  std::vector<SequenceEvent> run_sequence(const SequenceDef& def, const Sleeper& sleep);

  /// Commit path for a caller that holds the write lock as `owner`.
  std::uint64_t commit_as(const std::string& owner, const InventoryDelta& delta);
  /// Runs after each local commit, before the write lock is released.
  void set_commit_hook(std::function<void(std::uint64_t, const InventoryDelta&)> hook);

  void record_access(const AccessRecord& record);
  std::shared_ptr<const AccessLog> accesses() const;

  InventoryStore& store() { return store_; }
  const InventoryStore& store() const { return store_; }
  Registry& registry() { return registry_; }
  HistoryStore& history() { return history_; }
  WriteLock& write_lock() { return *lock_; }
  Timestamp now() const { return config_.clock(); }
  void save_registry();

  std::optional<Identity> authenticate(const std::string& token) const;

  /// REST entry point; thread-safe.
  HttpResponse handle(const HttpRequest& request);
  std::vector<nlohmann::json> valid_calls() const;
  std::vector<nlohmann::json> malformed_calls() const;

  /// Test hook run by writing REST calls while they hold the write lock.
  void set_write_hook(std::function<void()> hook) { write_hook_ = std::move(hook); }

 private:
  friend class AppContext;
  struct AppEntry {
    bool write_capable = false;
    AppFn fn;
  };

  std::int64_t enqueue(const std::string& name, bool write, const std::string& submitter);
  void execute(std::int64_t id);
  void writer_loop();
  void store_app(const AppRequest& r);
  void check_sequence(const SequenceDef& def) const;

  HttpResponse route(const HttpRequest& request, nlohmann::json& log);
  HttpResponse handle_read(const std::string& endpoint, const HttpRequest& request);
  HttpResponse handle_write(const std::string& endpoint, const HttpRequest& request, const Identity& who);
  HttpResponse handle_ctl(const std::string& endpoint, const HttpRequest& request);
  bool rate_limited(const std::string& source);
  void log_call(bool valid, nlohmann::json entry);

  ServerConfig config_;
  InventoryStore store_;
  Registry registry_;
  HistoryStore history_;
  std::shared_ptr<WriteLock> lock_;
  std::function<void(std::uint64_t, const InventoryDelta&)> commit_hook_;
  std::function<void()> write_hook_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, AppEntry> app_defs_;
  std::map<std::int64_t, AppRequest> apps_;
  std::int64_t next_app_id_ = 1;
  std::deque<std::int64_t> write_queue_;
  std::vector<std::thread> readers_;
  std::thread writer_;
  bool stopping_ = false;

  struct RunningSequence {
    SequenceDef def;
    std::shared_ptr<std::atomic<bool>> stop;
    std::thread thread;
  };
  std::map<std::string, RunningSequence> sequences_;
  std::condition_variable sequence_cv_;

  mutable std::mutex access_mu_;
  std::shared_ptr<AccessLog> accesses_;

  mutable std::mutex calls_mu_;
  std::vector<nlohmann::json> valid_calls_;
  std::vector<nlohmann::json> malformed_calls_;
  std::map<std::string, std::deque<Timestamp>> call_times_;
  std::map<std::string, Timestamp> blacklist_;
  std::atomic<std::int64_t> rest_writes_{0};
};

/// key = value lines; `token.<user> = <secret>:<reader|writer>`.
struct DaemonConfig {
  ServerConfig server;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string snapshot;  // imported when the store is empty
  std::string policy;    // detox policy file
  std::vector<std::string> sequences;
  std::map<std::string, std::string> extra;
};

DaemonConfig load_daemon_config(const std::filesystem::path& path);

}  // namespace stowage

#endif  // STOWAGE_SERVER_HPP
