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


#include "stowage/server.hpp"

#include <chrono>
#include <fstream>

namespace stowage {

namespace fs = std::filesystem;

const char* to_string(AppState s) {
  switch (s) {
    case AppState::kQueued: return "QUEUED";
    case AppState::kRunning: return "RUNNING";
    case AppState::kDone: return "DONE";
    case AppState::kFailed: return "FAILED";
    case AppState::kKilled: return "KILLED";
  }
  return "?";
}

nlohmann::json to_json(const AppRequest& r) {
  return {{"id", r.id},
          {"name", r.name},
          {"write", r.write_enabled},
          {"submitter", r.submitter},
          {"state", to_string(r.state)},
          {"submitted", r.submitted},
          {"started", r.started},
          {"finished", r.finished},
          {"error", r.error},
          {"base_version", r.base_version},
          {"commits", r.commits}};
}

AppContext::AppContext(Server& server, AppRequest& request)
    : server_(server), request_(request), image_(server.store().image()), accesses_(server.accesses()) {}

Registry& AppContext::registry() { return server_.registry(); }
HistoryStore& AppContext::history() { return server_.history(); }
Timestamp AppContext::now() const { return server_.now(); }

bool AppContext::stop_requested() const {
  std::lock_guard lock(server_.mu_);
  return server_.stopping_;
}

std::uint64_t AppContext::commit(const InventoryDelta& delta) {
  if (!request_.write_enabled) throw Error("application " + request_.name + " is not write-enabled");
  auto v = server_.commit_as("app:" + std::to_string(request_.id), delta);
  image_ = server_.store().image();
  request_.commits.push_back(v);
  return v;
}

namespace {

std::vector<nlohmann::json> load_lines(const fs::path& path) {
  std::vector<nlohmann::json> out;
  if (path.empty() || !fs::exists(path)) return out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception&) {
      break;  // torn tail
    }
  }
  return out;
}

fs::path in_dir(const fs::path& dir, const char* name) { return dir.empty() ? fs::path{} : dir / name; }

}  // namespace

Server::Server(ServerConfig config, std::shared_ptr<WriteLock> lock)
    : config_(std::move(config)),
      store_(config_.data_dir.empty() ? fs::path{} : config_.data_dir / "inventory"),
      history_(in_dir(config_.data_dir, "history.jsonl")),
      lock_(lock ? std::move(lock) : std::make_shared<LocalWriteLock>()),
      accesses_(std::make_shared<AccessLog>()) {
  if (!config_.clock) {
    config_.clock = [] {
      return static_cast<Timestamp>(
          std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
              .count());
    };
  }
  store_.set_compact_every(config_.compact_every);
  auto reg = in_dir(config_.data_dir, "registry.json");
  if (!reg.empty() && fs::exists(reg)) registry_.load(reg);
  valid_calls_ = load_lines(in_dir(config_.data_dir, "calls.valid.jsonl"));
  malformed_calls_ = load_lines(in_dir(config_.data_dir, "calls.malformed.jsonl"));
  writer_ = std::thread([this] { writer_loop(); });
}

Server::~Server() {
  std::vector<std::string> names = sequences();
  for (const auto& n : names) stop_sequence(n);
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  writer_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(mu_);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
}

void Server::register_app(const std::string& name, bool write_capable, AppFn fn) {
  std::lock_guard lock(mu_);
  app_defs_[name] = {write_capable, std::move(fn)};
}

bool Server::has_app(const std::string& name) const {
  std::lock_guard lock(mu_);
  return app_defs_.count(name) > 0;
}

std::optional<Identity> Server::authenticate(const std::string& token) const {
  auto it = config_.tokens.find(token);
  if (token.empty() || it == config_.tokens.end()) return std::nullopt;
  return it->second;
}

std::int64_t Server::submit_app(const std::string& name, bool write, const std::string& token) {
  auto who = authenticate(token);
  if (!who) throw Unauthorized("unknown or missing token");
  return submit_app_as(name, write, *who);
}

std::int64_t Server::submit_app_as(const std::string& name, bool write, const Identity& who) {
  if (write && who.role != Role::kWriter) throw Forbidden(who.user + " may not run write-enabled applications");
  auto id = enqueue(name, write, who.user);
  if (!write) {
    std::lock_guard lock(mu_);
    readers_.emplace_back([this, id] { execute(id); });
  }
  return id;
}

std::int64_t Server::enqueue(const std::string& name, bool write, const std::string& submitter) {
  std::lock_guard lock(mu_);
  auto it = app_defs_.find(name);
  if (it == app_defs_.end()) throw UnknownApp("unknown application " + name);
  if (write && !it->second.write_capable) throw Forbidden("application " + name + " cannot run write-enabled");
  AppRequest r;
  r.id = next_app_id_++;
  r.name = name;
  r.write_enabled = write;
  r.submitter = submitter;
  r.submitted = config_.clock();
  apps_[r.id] = r;
  if (write) {
    write_queue_.push_back(r.id);
    cv_.notify_all();
  }
  return r.id;
}

void Server::writer_loop() {
  for (;;) {
    std::int64_t id = 0;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !write_queue_.empty(); });
      if (stopping_) {
        for (auto q : write_queue_) {
          apps_[q].state = AppState::kKilled;
          apps_[q].error = "server stopped";
        }
        write_queue_.clear();
        cv_.notify_all();
        return;
      }
      id = write_queue_.front();
      write_queue_.pop_front();
    }
    execute(id);
  }
}

void Server::store_app(const AppRequest& r) {
  {
    std::lock_guard lock(mu_);
    apps_[r.id] = r;
  }
  cv_.notify_all();
}

void Server::execute(std::int64_t id) {
  AppRequest r;
  AppFn fn;
  {
    std::lock_guard lock(mu_);
    r = apps_.at(id);
    fn = app_defs_.at(r.name).fn;
  }
  std::optional<WriteGuard> guard;
  if (r.write_enabled) {
    try {
      guard.emplace(*lock_, "app:" + std::to_string(id));
    } catch (const std::exception& e) {
      // A cluster lock can time out.
      r.state = AppState::kFailed;
      r.error = e.what();
      r.finished = config_.clock();
      store_app(r);
      return;
    }
  }
  r.state = AppState::kRunning;
  r.started = config_.clock();
  r.base_version = store_.version();
  store_app(r);
  try {
    AppContext ctx(*this, r);
    fn(ctx);
    r.state = AppState::kDone;
  } catch (const std::exception& e) {
    r.state = AppState::kFailed;
    r.error = e.what();
  }
  r.finished = config_.clock();
  if (r.write_enabled) save_registry();
  guard.reset();
  history_.append("app", to_json(r), r.finished);
  store_app(r);
}

AppRequest Server::run_app(const std::string& name, bool write, const std::string& submitter) {
  auto id = enqueue(name, false, submitter);
  if (write) {
    std::lock_guard lock(mu_);
    // Not routed through the writer queue: the caller's thread runs it.
    if (!app_defs_.at(name).write_capable) throw Forbidden("application " + name + " cannot run write-enabled");
    apps_[id].write_enabled = true;
  }
  execute(id);
  return *app(id);
}

void Server::wait(std::int64_t id) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] {
    auto s = apps_.at(id).state;
    return s != AppState::kQueued && s != AppState::kRunning;
  });
}

void Server::wait_all() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] {
    for (const auto& [_, r] : apps_) {
      if (r.state == AppState::kQueued || r.state == AppState::kRunning) return false;
    }
    return true;
  });
}

std::optional<AppRequest> Server::app(std::int64_t id) const {
  std::lock_guard lock(mu_);
  auto it = apps_.find(id);
  if (it == apps_.end()) return std::nullopt;
  return it->second;
}

std::vector<AppRequest> Server::apps() const {
  std::lock_guard lock(mu_);
  std::vector<AppRequest> out;
  for (const auto& [_, r] : apps_) out.push_back(r);
  return out;
}

std::uint64_t Server::commit_as(const std::string& owner, const InventoryDelta& delta) {
  if (lock_->holder() != owner) throw Error(owner + " does not hold the write lock");
  auto v = store_.commit(delta);
  if (commit_hook_) commit_hook_(v, delta);
  return v;
}

void Server::set_commit_hook(std::function<void(std::uint64_t, const InventoryDelta&)> hook) {
  commit_hook_ = std::move(hook);
}

void Server::record_access(const AccessRecord& record) {
  std::lock_guard lock(access_mu_);
  // Running apps hold the current log; copy before writing.
  if (accesses_.use_count() > 1) accesses_ = std::make_shared<AccessLog>(*accesses_);
  accesses_->add(record);
}

std::shared_ptr<const AccessLog> Server::accesses() const {
  std::lock_guard lock(access_mu_);
  return accesses_;
}

void Server::save_registry() {
  if (config_.data_dir.empty()) return;
  registry_.save(config_.data_dir / "registry.json");
}

void Server::check_sequence(const SequenceDef& def) const {
  std::lock_guard lock(mu_);
  for (const auto& s : def.steps) {
    auto it = app_defs_.find(s.app);
    if (it == app_defs_.end()) throw UnknownApp("sequence " + def.name + " refers to unknown application " + s.app);
    if (s.write && !it->second.write_capable) throw Forbidden("application " + s.app + " cannot run write-enabled");
  }
}

std::vector<SequenceEvent> Server::run_sequence(const SequenceDef& def, const Sleeper& sleep) {
  check_sequence(def);
  std::vector<SequenceEvent> events;
  bool first = true;
  for (int rep = 0; def.repeat == 0 || rep < def.repeat; ++rep) {
    for (std::size_t i = 0; i < def.steps.size();) {
      if (!first && !sleep(def.idle_seconds)) return events;
      first = false;
      const auto& step = def.steps[i];
      auto r = run_app(step.app, step.write, "sequence:" + def.name);
      events.push_back({def.name, i, step.app, r.state, r.finished});
      if (r.state == AppState::kDone || def.on_error == OnError::kIgnore) {
        ++i;
      } else if (def.on_error == OnError::kRepeatSequence) {
        i = 0;
      }
      // kRepeatApp: run the same step again.
    }
  }
  return events;
}

void Server::start_sequence(const SequenceDef& def) {
  check_sequence(def);
  auto stop = std::make_shared<std::atomic<bool>>(false);
  std::lock_guard lock(mu_);
  if (sequences_.count(def.name)) throw Error("sequence " + def.name + " is already running");
  auto& slot = sequences_[def.name];
  slot.def = def;
  slot.stop = stop;
  slot.thread = std::thread([this, def, stop] {
    Sleeper sleeper = [this, stop](double seconds) {
      std::unique_lock lock(mu_);
      sequence_cv_.wait_for(lock, std::chrono::duration<double>(seconds), [&] { return stop->load(); });
      return !stop->load();
    };
    try {
      run_sequence(def, sleeper);
    } catch (const std::exception& e) {
      history_.append("sequence", {{"name", def.name}, {"error", e.what()}}, now());
    }
  });
}

void Server::stop_sequence(const std::string& name) {
  std::thread t;
  {
    std::lock_guard lock(mu_);
    auto it = sequences_.find(name);
    if (it == sequences_.end()) return;
    it->second.stop->store(true);
    t = std::move(it->second.thread);
    sequences_.erase(it);
  }
  sequence_cv_.notify_all();
  if (t.joinable()) t.join();
}

std::vector<std::string> Server::sequences() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [n, _] : sequences_) out.push_back(n);
  return out;
}

DaemonConfig load_daemon_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  DaemonConfig cfg;
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    auto as_int = [&] {
      try {
        return std::stoll(value);
      } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": " + key + " must be an integer");
      }
    };
    if (key == "host") cfg.host = value;
    else if (key == "port") cfg.port = static_cast<int>(as_int());
    else if (key == "data_dir") cfg.server.data_dir = value;
    else if (key == "snapshot") cfg.snapshot = value;
    else if (key == "policy") cfg.policy = value;
    else if (key == "sequence") cfg.sequences.push_back(value);
    else if (key == "compact_every") cfg.server.compact_every = static_cast<std::size_t>(as_int());
    else if (key == "rate_limit") cfg.server.rate_limit = static_cast<int>(as_int());
    else if (key == "rate_window") cfg.server.rate_window = as_int();
    else if (key == "blacklist_seconds") cfg.server.blacklist_seconds = as_int();
    else if (starts_with(key, "token.")) {
      auto colon = value.rfind(':');
      if (colon == std::string::npos) throw Error(path.string() + ":" + std::to_string(line_no) + ": token needs <secret>:<role>");
      auto role = value.substr(colon + 1);
      if (role != "reader" && role != "writer") throw Error(path.string() + ":" + std::to_string(line_no) + ": unknown role " + role);
      cfg.server.tokens[value.substr(0, colon)] = {key.substr(6), role == "writer" ? Role::kWriter : Role::kReader};
    } else {
      cfg.extra[key] = value;
    }
  }
  return cfg;
}

}  // namespace stowage
