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


#include "stowage/cluster.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <sstream>

#include "stowage/snapshot.hpp"

namespace stowage::cluster {

using nlohmann::json;

// ---------------------------------------------------------------- SimTransport

void SimTransport::listen(const std::string& address, Handler handler) {
  std::lock_guard lock(mu_);
  handlers_[address] = std::make_shared<Handler>(std::move(handler));
}

void SimTransport::close(const std::string& address) {
  std::shared_ptr<Handler> h;
  {
    std::lock_guard lock(mu_);
    auto it = handlers_.find(address);
    if (it == handlers_.end()) return;
    h = std::move(it->second);
    handlers_.erase(it);
  }
  // Let in-flight calls finish before the owner goes away.
  while (h.use_count() > 1) std::this_thread::sleep_for(std::chrono::microseconds(100));
}

std::optional<json> SimTransport::call(const std::string& from, const std::string& to, const json& message) {
  ++calls_;
  std::shared_ptr<Handler> h;
  int delay = 0;
  {
    std::lock_guard lock(mu_);
    if (crashed_.count(from) || crashed_.count(to) || cut_.count({from, to})) return std::nullopt;
    auto it = handlers_.find(to);
    if (it == handlers_.end()) return std::nullopt;
    h = it->second;
    if (max_us_ > 0) delay = std::uniform_int_distribution<int>(min_us_, max_us_)(rng_);
  }
  if (delay > 0) std::this_thread::sleep_for(std::chrono::microseconds(delay));
  {
    std::lock_guard lock(mu_);
    if (crashed_.count(to)) return std::nullopt;
  }
  auto reply = (*h)(message);
  std::lock_guard lock(mu_);
  // The reply is lost if either end died meanwhile.
  if (crashed_.count(from) || crashed_.count(to)) return std::nullopt;
  return reply;
}

void SimTransport::set_delay(int min_us, int max_us) {
  std::lock_guard lock(mu_);
  min_us_ = min_us;
  max_us_ = max_us;
}

void SimTransport::crash(const std::string& address) {
  std::lock_guard lock(mu_);
  crashed_.insert(address);
}

bool SimTransport::crashed(const std::string& address) const {
  std::lock_guard lock(mu_);
  return crashed_.count(address) > 0;
}

void SimTransport::partition(const std::string& a, const std::string& b) {
  std::lock_guard lock(mu_);
  cut_.insert({a, b});
  cut_.insert({b, a});
}

void SimTransport::heal() {
  std::lock_guard lock(mu_);
  cut_.clear();
}

// ---------------------------------------------------------------- TcpTransport

namespace {

std::pair<std::string, std::string> split_address(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error("address must be host:port: " + address);
  return {address.substr(0, colon), address.substr(colon + 1)};
}

void set_timeouts(int fd, double seconds) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(seconds);
  tv.tv_usec = static_cast<suseconds_t>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::string> read_line(int fd) {
  std::string line;
  char buf[4096];
  while (true) {
    auto n = ::recv(fd, buf, sizeof buf, 0);
    if (n <= 0) return std::nullopt;
    line.append(buf, static_cast<std::size_t>(n));
    auto nl = line.find('\n');
    if (nl != std::string::npos) {
      line.resize(nl);
      return line;
    }
  }
}

}  // namespace

struct TcpTransport::Listener {
  int fd = -1;
  std::atomic<bool> stop{false};
  std::thread acceptor;
  std::mutex mu;
  std::condition_variable cv;
  int active = 0;
};

TcpTransport::~TcpTransport() {
  std::vector<std::string> addresses;
  {
    std::lock_guard lock(mu_);
    for (const auto& [a, _] : listeners_) addresses.push_back(a);
  }
  for (const auto& a : addresses) close(a);
}

void TcpTransport::listen(const std::string& address, Handler handler) {
  auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) throw Error("cannot resolve " + address);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (fd < 0 || ::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    freeaddrinfo(res);
    if (fd >= 0) ::close(fd);
    throw Error("cannot listen on " + address);
  }
  freeaddrinfo(res);

  auto l = std::make_shared<Listener>();
  l->fd = fd;
  auto timeout = timeout_;
  auto shared_handler = std::make_shared<Handler>(std::move(handler));
  l->acceptor = std::thread([l, shared_handler, timeout] {
    while (!l->stop) {
      pollfd p{l->fd, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      int conn = ::accept(l->fd, nullptr, nullptr);
      if (conn < 0) continue;
      {
        std::lock_guard lock(l->mu);
        ++l->active;
      }
      std::thread([l, shared_handler, conn, timeout] {
        set_timeouts(conn, timeout);
        if (auto line = read_line(conn)) {
          json reply;
          try {
            reply = (*shared_handler)(json::parse(*line));
          } catch (const std::exception& e) {
            reply = {{"error", e.what()}};
          }
          send_all(conn, reply.dump() + "\n");
        }
        ::close(conn);
        std::lock_guard lock(l->mu);
        --l->active;
        l->cv.notify_all();
      }).detach();
    }
  });
  std::lock_guard lock(mu_);
  listeners_[address] = l;
}

void TcpTransport::close(const std::string& address) {
  std::shared_ptr<Listener> l;
  {
    std::lock_guard lock(mu_);
    auto it = listeners_.find(address);
    if (it == listeners_.end()) return;
    l = it->second;
    listeners_.erase(it);
  }
  l->stop = true;
  l->acceptor.join();
  ::close(l->fd);
  std::unique_lock lock(l->mu);
  l->cv.wait(lock, [&] { return l->active == 0; });
}

std::optional<json> TcpTransport::call(const std::string&, const std::string& to, const json& message) {
  auto [host, port] = split_address(to);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) return std::nullopt;
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    return std::nullopt;
  }
  set_timeouts(fd, timeout_);
  bool connected = ::connect(fd, res->ai_addr, res->ai_addrlen) == 0;
  freeaddrinfo(res);
  std::optional<json> reply;
  if (connected && send_all(fd, message.dump() + "\n")) {
    if (auto line = read_line(fd)) {
      try {
        reply = json::parse(*line);
      } catch (const json::exception&) {
      }
    }
  }
  ::close(fd);
  return reply;
}

// ---------------------------------------------------------------- board

const Member* MessagingBoard::find(const std::string& host) const {
  for (const auto& m : members) {
    if (m.host == host) return &m;
  }
  return nullptr;
}

json to_json(const MessagingBoard& b) {
  json members = json::array();
  for (const auto& m : b.members) {
    members.push_back({{"host", m.host}, {"order", m.order}, {"last_heartbeat", m.last_heartbeat}, {"version", m.version}});
  }
  json pending = json::object();
  for (const auto& [m, vs] : b.pending) pending[m] = vs;
  json j{{"members", members},
         {"master", b.master},
         {"lock_queue", b.lock_queue},
         {"pending", pending},
         {"next_order", b.next_order},
         {"epoch", b.epoch}};
  j["lock_holder"] = b.lock_holder ? json(*b.lock_holder) : json(nullptr);
  return j;
}

MessagingBoard board_from_json(const json& j) {
  MessagingBoard b;
  for (const auto& m : j.at("members")) {
    b.members.push_back({m.at("host"), m.at("order"), m.at("last_heartbeat"), m.at("version")});
  }
  b.master = j.at("master");
  if (!j.at("lock_holder").is_null()) b.lock_holder = j.at("lock_holder").get<std::string>();
  for (const auto& q : j.at("lock_queue")) b.lock_queue.push_back(q);
  for (const auto& [m, vs] : j.at("pending").items()) b.pending[m] = vs.get<std::set<std::uint64_t>>();
  b.next_order = j.at("next_order");
  b.epoch = j.at("epoch");
  return b;
}

// ---------------------------------------------------------------- lock

bool ClusterWriteLock::try_acquire(const std::string& owner) {
  if (!local_.try_acquire(owner)) return false;
  if (!node_.acquire_cluster(true)) {
    local_.release(owner);
    return false;
  }
  return true;
}

void ClusterWriteLock::acquire(const std::string& owner) {
  local_.acquire(owner);
  try {
    node_.acquire_cluster(false);
  } catch (...) {
    local_.release(owner);
    throw;
  }
}

void ClusterWriteLock::release(const std::string& owner) {
  node_.release_cluster();
  local_.release(owner);
}

std::optional<std::string> ClusterWriteLock::holder() const {
  if (!node_.holding_) return std::nullopt;
  return local_.holder();
}

// ---------------------------------------------------------------- node

Node::Node(std::string address, std::shared_ptr<Transport> transport, ClusterConfig config)
    : address_(std::move(address)), transport_(std::move(transport)), config_(std::move(config)) {
  if (!config_.clock) {
    config_.clock = [] {
      using namespace std::chrono;
      return duration<double>(steady_clock::now().time_since_epoch()).count();
    };
  }
  lock_ = std::make_shared<ClusterWriteLock>(*this);
  transport_->listen(address_, [this](const json& m) { return handle(m); });
}

Node::~Node() {
  stop();
  transport_->close(address_);
}

void Node::attach(Server& server) {
  server_ = &server;
  server.set_commit_hook([this](std::uint64_t v, const InventoryDelta& d) { broadcast(v, d); });
}

std::uint64_t Node::version() const { return server_ ? server_->store().version() : 0; }

MessagingBoard Node::board() const {
  std::lock_guard lock(mu_);
  return board_;
}

bool Node::is_master() const {
  std::lock_guard lock(mu_);
  return board_.master == address_;
}

std::map<std::uint64_t, std::string> Node::history() const {
  std::lock_guard lock(apply_mu_);
  return history_;
}

void Node::register_member(const std::string& host, std::uint64_t version) {
  for (auto& m : board_.members) {
    if (m.host == host) {
      m.last_heartbeat = now();
      m.version = version;
      return;
    }
  }
  board_.members.push_back({host, board_.next_order++, now(), version});
}

void Node::bootstrap() {
  std::lock_guard lock(mu_);
  board_ = {};
  board_.master = address_;
  board_.epoch = 1;
  register_member(address_, version());
}

std::optional<json> Node::rpc(const std::string& to, const json& msg) {
  if (to == address_) return handle(msg);
  return transport_->call(address_, to, msg);
}

json Node::handle(const json& msg) {
  try {
    const std::string op = msg.at("op");
    if (op == "JOIN") return on_join(msg);
    if (op == "HEARTBEAT") return on_heartbeat(msg);
    if (op == "LOCK") return on_lock(msg);
    if (op == "UNLOCK") return on_unlock(msg);
    if (op == "APPLY") return on_apply(msg);
    if (op == "RESET") return on_reset(msg);
    if (op == "SNAPSHOT") return snapshot_reply();
    if (op == "VERSION") return {{"version", version()}};
    if (op == "DELTA") {
      std::lock_guard lock(apply_mu_);
      auto it = history_.find(msg.at("version").get<std::uint64_t>());
      if (it == history_.end()) return {{"missing", true}};
      return {{"delta", it->second}};
    }
    return {{"error", "unknown op " + op}};
  } catch (const std::exception& e) {
    return {{"error", e.what()}};
  }
}

namespace {

std::optional<std::string> first_candidate(const MessagingBoard& b, const std::set<std::string>& skip) {
  for (const auto& m : b.members) {
    if (m.host != b.master && !skip.count(m.host)) return m.host;
  }
  return std::nullopt;
}

}  // namespace

void Node::takeover() {
  std::string old = board_.master;
  std::erase_if(board_.members, [&](const Member& m) { return m.host == old; });
  std::erase(board_.lock_queue, old);
  board_.pending.erase(old);
  // The copied lock state may be stale (a grant whose reply never arrived).
  // Holders announce themselves while the new master settles; waiters
  // queue again on their next poll.
  board_.lock_holder.reset();
  if (holding_) board_.lock_holder = address_;
  board_.lock_queue.clear();
  board_.master = address_;
  ++board_.epoch;
  register_member(address_, version());
  for (auto& m : board_.members) m.last_heartbeat = now();
  // Survivors re-register during this window and report whether they hold
  // the lock; nothing is granted until it closes and versions agree.
  settle_until_ = now() + config_.heartbeat_interval * config_.miss_limit;
  needs_reconcile_ = true;
  misses_ = 0;
  unreachable_.clear();
}

json Node::on_join(const json& msg) {
  std::lock_guard lock(mu_);
  const std::string host = msg.at("host");
  if (board_.master != address_) {
    bool promote = msg.contains("failover_from") && msg["failover_from"] == board_.master &&
                   first_candidate(board_, unreachable_) == address_;
    if (!promote) return {{"redirect", board_.master}};
    takeover();
  }
  std::uint64_t v = msg.value("version", std::uint64_t{0});
  register_member(host, v);
  if (now() < settle_until_) {
    if (msg.value("holding", false)) {
      board_.lock_holder = host;
    } else if (board_.lock_holder == host) {
      board_.lock_holder.reset();
    }
  }
  // Fresh joiners copy the inventory themselves under the lock.
  if (msg.value("resync", false) && v != version()) needs_reconcile_ = true;
  return {{"ok", true}, {"board", to_json(board_)}};
}

json Node::on_heartbeat(const json& msg) {
  std::lock_guard lock(mu_);
  if (board_.master != address_) return {{"redirect", board_.master}};
  const std::string host = msg.at("host");
  if (!board_.contains(host)) return {{"unknown", true}};
  register_member(host, msg.value("version", std::uint64_t{0}));
  if (now() < settle_until_) {
    if (msg.value("holding", false)) {
      board_.lock_holder = host;
    } else if (board_.lock_holder == host) {
      board_.lock_holder.reset();
    }
  }
  return {{"board", to_json(board_)}};
}

json Node::on_lock(const json& msg) {
  std::lock_guard lock(mu_);
  if (board_.master != address_) return {{"redirect", board_.master}};
  const std::string host = msg.at("host");
  if (!board_.contains(host)) return {{"granted", false}, {"unknown", true}};
  if (board_.lock_holder == host) return {{"granted", true}, {"board", to_json(board_)}};
  bool once = msg.value("try", false);
  bool free = !board_.lock_holder && now() >= settle_until_ && !needs_reconcile_;
  bool first = board_.lock_queue.empty() || board_.lock_queue.front() == host;
  if (free && first) {
    board_.lock_holder = host;
    if (!board_.lock_queue.empty()) board_.lock_queue.pop_front();
    return {{"granted", true}, {"board", to_json(board_)}};
  }
  if (!once && std::find(board_.lock_queue.begin(), board_.lock_queue.end(), host) == board_.lock_queue.end()) {
    board_.lock_queue.push_back(host);
  }
  return {{"granted", false}};
}

json Node::on_unlock(const json& msg) {
  std::lock_guard lock(mu_);
  if (board_.master != address_) return {{"redirect", board_.master}};
  const std::string host = msg.at("host");
  std::erase(board_.lock_queue, host);
  if (msg.value("cancel", false)) return {{"ok", true}};
  if (board_.lock_holder == host) board_.lock_holder.reset();
  for (const auto& m : msg.value("unreached", json::array())) {
    if (!board_.contains(m.get<std::string>())) continue;
    board_.pending[m].insert(msg.at("version").get<std::uint64_t>());
    needs_reconcile_ = true;
  }
  return {{"ok", true}};
}

json Node::on_apply(const json& msg) {
  std::lock_guard lock(apply_mu_);
  auto v = msg.at("version").get<std::uint64_t>();
  auto current = server_->store().version();
  if (v <= current) return {{"ok", true}, {"version", current}};
  if (v != current + 1) return {{"need_snapshot", true}};
  const std::string payload = msg.at("delta");
  try {
    // Remote deltas skip the commit hook, so they are not re-broadcast.
    auto got = server_->store().commit(parse_delta(payload));
    history_[got] = payload;
    return {{"ok", true}, {"version", got}};
  } catch (const DeltaError&) {
    return {{"need_snapshot", true}};
  }
}

json Node::on_reset(const json& msg) {
  std::lock_guard lock(apply_mu_);
  auto v = msg.at("version").get<std::uint64_t>();
  std::istringstream in(msg.at("snapshot").get<std::string>());
  server_->store().reset(load_snapshot(in), v);
  return {{"ok", true}, {"version", v}};
}

json Node::snapshot_reply() {
  std::lock_guard lock(apply_mu_);
  auto image = server_->store().image();
  return {{"version", server_->store().version()}, {"snapshot", canonical_snapshot(*image)}};
}

void Node::copy_from(const std::string& peer) {
  auto snap = rpc(peer, {{"op", "SNAPSHOT"}});
  if (!snap || !snap->contains("snapshot")) throw JoinError("cannot copy inventory from " + peer);
  on_reset(*snap);
}

void Node::join(const std::string& contact) {
  json msg{{"op", "JOIN"}, {"host", address_}, {"version", version()}, {"holding", false}};
  auto r = rpc(contact, msg);
  if (!r) throw JoinError(contact + " is unreachable");
  if (r->contains("redirect")) {
    std::string master = (*r)["redirect"];
    r = rpc(master, msg);
    if (!r) throw JoinError("master " + master + " is unreachable");
    if (!r->contains("board")) throw JoinError("master " + master + " refused the join");
  }
  if (!r->contains("board")) throw JoinError(r->value("error", std::string("join refused")));
  {
    std::lock_guard lock(mu_);
    board_ = board_from_json((*r)["board"]);
    misses_ = 0;
  }
  // Under the lock no write is in flight, so the copy is never torn.
  acquire_cluster(false);
  try {
    copy_from(contact);
  } catch (...) {
    release_cluster();
    throw;
  }
  release_cluster();
}

void Node::expire_members() {
  std::lock_guard lock(mu_);
  double limit = config_.heartbeat_interval * config_.miss_limit;
  double t = now();
  std::vector<std::string> dead;
  for (const auto& m : board_.members) {
    if (m.host != address_ && t - m.last_heartbeat > limit) dead.push_back(m.host);
  }
  for (const auto& d : dead) {
    std::erase_if(board_.members, [&](const Member& m) { return m.host == d; });
    std::erase(board_.lock_queue, d);
    board_.pending.erase(d);
    if (board_.lock_holder == d) {
      // It may have died mid-broadcast.
      board_.lock_holder.reset();
      needs_reconcile_ = true;
    }
  }
}

void Node::reconcile() {
  std::vector<std::string> hosts;
  {
    std::lock_guard lock(mu_);
    for (const auto& m : board_.members) hosts.push_back(m.host);
  }
  std::map<std::string, std::uint64_t> versions;
  bool complete = true;
  for (const auto& h : hosts) {
    auto r = rpc(h, {{"op", "VERSION"}});
    if (!r || !r->contains("version")) {
      complete = false;
      continue;
    }
    versions[h] = (*r)["version"];
  }
  if (versions.empty()) return;
  auto best = std::max_element(versions.begin(), versions.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; });
  const std::string source = best->first;
  const std::uint64_t top = best->second;
  for (const auto& [h, v] : versions) {
    if (v >= top) continue;
    bool done = false;
    if (top - v == 1) {
      auto d = rpc(source, {{"op", "DELTA"}, {"version", top}});
      if (d && d->contains("delta")) {
        auto r = rpc(h, {{"op", "APPLY"}, {"version", top}, {"delta", (*d)["delta"]}});
        done = r && r->value("ok", false);
      }
    }
    if (!done) {
      auto snap = rpc(source, {{"op", "SNAPSHOT"}});
      if (snap && snap->contains("snapshot")) {
        json reset = *snap;
        reset["op"] = "RESET";
        auto r = rpc(h, reset);
        done = r && r->value("ok", false);
      }
    }
    if (!done) complete = false;
  }
  if (complete) {
    std::lock_guard lock(mu_);
    needs_reconcile_ = false;
    board_.pending.clear();
  }
}

void Node::failover() {
  std::unique_lock lock(mu_);
  std::string old = board_.master;
  unreachable_.insert(old);
  while (true) {
    auto cand = first_candidate(board_, unreachable_);
    if (!cand || *cand == address_) {
      takeover();
      return;
    }
    json msg{{"op", "JOIN"},         {"host", address_},     {"version", version()},
             {"holding", holding_.load()}, {"failover_from", old}, {"resync", true}};
    lock.unlock();
    auto r = rpc(*cand, msg);
    lock.lock();
    if (board_.master != old) return;  // someone else settled it meanwhile
    if (!r) {
      unreachable_.insert(*cand);
      continue;
    }
    if (r->contains("redirect")) {
      std::string m = (*r)["redirect"];
      if (m == old) {
        unreachable_.insert(*cand);
        continue;
      }
      board_.master = m;
    } else if (r->contains("board")) {
      board_ = board_from_json((*r)["board"]);
    }
    misses_ = 0;
    unreachable_.clear();
    return;
  }
}

void Node::halt() {
  halted_ = true;
  stop();
}

void Node::tick() {
  if (halted_) return;
  std::string master;
  {
    std::lock_guard lock(mu_);
    if (board_.master.empty()) return;
    master = board_.master;
    if (master == address_) register_member(address_, version());
  }
  if (master == address_) {
    expire_members();
    bool run;
    {
      std::lock_guard lock(mu_);
      run = needs_reconcile_ && !board_.lock_holder && now() >= settle_until_;
    }
    if (run) reconcile();
    return;
  }

  auto r = rpc(master, {{"op", "HEARTBEAT"}, {"host", address_}, {"version", version()}, {"holding", holding_.load()}});
  if (!r) {
    bool fail;
    {
      std::lock_guard lock(mu_);
      fail = ++misses_ >= config_.miss_limit;
    }
    if (fail) failover();
    return;
  }
  if (r->contains("redirect")) {
    std::lock_guard lock(mu_);
    board_.master = (*r)["redirect"];
    misses_ = 0;
    return;
  }
  if (r->contains("unknown")) {
    // Dropped by the master; register again. A version mismatch makes the
    // master reconcile this node.
    auto j = rpc(master, {{"op", "JOIN"},
                          {"host", address_},
                          {"version", version()},
                          {"holding", holding_.load()},
                          {"resync", true}});
    if (j && j->contains("board")) {
      std::lock_guard lock(mu_);
      board_ = board_from_json((*j)["board"]);
      misses_ = 0;
    }
    return;
  }
  std::lock_guard lock(mu_);
  if (r->contains("board")) board_ = board_from_json((*r)["board"]);
  misses_ = 0;
}

void Node::start() {
  std::lock_guard lock(run_mu_);
  if (running_) return;
  running_ = true;
  thread_ = std::thread([this] {
    std::unique_lock lock(run_mu_);
    while (running_) {
      lock.unlock();
      tick();
      lock.lock();
      run_cv_.wait_for(lock, std::chrono::duration<double>(config_.heartbeat_interval), [&] { return !running_; });
    }
  });
}

void Node::stop() {
  {
    std::lock_guard lock(run_mu_);
    if (!running_) return;
    running_ = false;
  }
  run_cv_.notify_all();
  thread_.join();
}

void Node::set_holding(bool held) {
  holding_ = held;
  if (config_.on_lock_event) config_.on_lock_event(address_, held);
}

bool Node::acquire_cluster(bool once) {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(config_.lock_timeout);
  while (true) {
    std::string master;
    {
      std::lock_guard lock(mu_);
      master = board_.master;
    }
    auto r = rpc(master, {{"op", "LOCK"}, {"host", address_}, {"try", once}});
    if (r && r->value("granted", false)) {
      {
        std::lock_guard lock(mu_);
        if (r->contains("board")) board_ = board_from_json((*r)["board"]);
        unreached_.clear();
      }
      set_holding(true);
      return true;
    }
    if (r && r->contains("redirect")) {
      std::lock_guard lock(mu_);
      board_.master = (*r)["redirect"];
    }
    if (once) return false;
    if (halted_) throw LockTimeout(address_ + " is halted");
    if (std::chrono::steady_clock::now() > deadline) {
      rpc(master, {{"op", "UNLOCK"}, {"host", address_}, {"cancel", true}});
      throw LockTimeout(address_ + " timed out waiting for the cluster lock");
    }
    std::this_thread::sleep_for(std::chrono::microseconds(500));
  }
}

void Node::release_cluster() {
  set_holding(false);
  std::string master;
  std::vector<std::string> unreached;
  {
    std::lock_guard lock(mu_);
    master = board_.master;
    unreached.swap(unreached_);
  }
  // If the master is gone the survivors learn the release from our next
  // registration while the new master settles.
  rpc(master, {{"op", "UNLOCK"}, {"host", address_}, {"version", version()}, {"unreached", unreached}});
}

void Node::broadcast(std::uint64_t version, const InventoryDelta& delta) {
  std::string payload = format_delta(delta);
  {
    std::lock_guard lock(apply_mu_);
    history_[version] = payload;
  }
  std::vector<std::string> targets;
  {
    std::lock_guard lock(mu_);
    for (const auto& m : board_.members) {
      if (m.host != address_) targets.push_back(m.host);
    }
  }
  std::vector<std::string> missed;
  for (const auto& t : targets) {
    auto r = rpc(t, {{"op", "APPLY"}, {"version", version}, {"delta", payload}});
    if (r && r->value("need_snapshot", false)) {
      json reset = snapshot_reply();
      reset["op"] = "RESET";
      r = rpc(t, reset);
    }
    if (!r || !r->value("ok", false)) missed.push_back(t);
  }
  std::lock_guard lock(mu_);
  unreached_.insert(unreached_.end(), missed.begin(), missed.end());
}

}  // namespace stowage::cluster
