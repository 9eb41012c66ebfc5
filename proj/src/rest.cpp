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


// REST endpoints under /data (reads and writing calls) and /ctl (the
// control surface used by dynamo-ctl).

#include <algorithm>
#include <fstream>

#include "stowage/server.hpp"

namespace stowage {

using nlohmann::json;

namespace {

class BadRequest : public Error {
 public:
  using Error::Error;
};

HttpResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }
HttpResponse error_reply(int status, const std::string& message) { return reply(status, {{"error", message}}); }

std::vector<std::string> values(const HttpRequest& r, const std::string& key) {
  std::vector<std::string> out;
  auto [lo, hi] = r.query.equal_range(key);
  for (auto it = lo; it != hi; ++it) {
    for (const auto& v : split(it->second, ',')) {
      if (!v.empty()) out.push_back(v);
    }
  }
  return out;
}

bool any_match(const std::vector<std::string>& patterns, const std::string& text) {
  if (patterns.empty()) return true;
  return std::any_of(patterns.begin(), patterns.end(), [&](const std::string& p) { return wildcard_match(p, text); });
}

const char* state_name(UserRequestState s) {
  switch (s) {
    case UserRequestState::kPending: return "PENDING";
    case UserRequestState::kActivated: return "ACTIVATED";
    case UserRequestState::kFailed: return "FAILED";
  }
  return "?";
}

bool truthy(const std::string& v) { return v == "y" || v == "1" || v == "true" || v == "yes"; }

template <typename Map>
std::map<std::string, int> index_ids(const Map& m) {
  std::map<std::string, int> ids;
  int i = 0;
  for (const auto& [name, _] : m) ids[name] = ++i;
  return ids;
}

json parse_body(const std::string& body) {
  try {
    auto j = json::parse(body);
    if (!j.is_object()) throw BadRequest("body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw BadRequest(std::string("malformed JSON: ") + e.what());
  }
}

std::string need_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw BadRequest(std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

bool Server::rate_limited(const std::string& source) {
  auto now = config_.clock();
  std::lock_guard lock(calls_mu_);
  auto bl = blacklist_.find(source);
  if (bl != blacklist_.end()) {
    if (now < bl->second) return true;
    blacklist_.erase(bl);
  }
  auto& times = call_times_[source];
  times.push_back(now);
  while (!times.empty() && times.front() <= now - config_.rate_window) times.pop_front();
  if (static_cast<int>(times.size()) > config_.rate_limit) {
    blacklist_[source] = now + config_.blacklist_seconds;
    times.clear();
    return true;
  }
  return false;
}

void Server::log_call(bool valid, json entry) {
  std::lock_guard lock(calls_mu_);
  auto& q = valid ? valid_calls_ : malformed_calls_;
  if (!config_.data_dir.empty()) {
    std::ofstream out(config_.data_dir / (valid ? "calls.valid.jsonl" : "calls.malformed.jsonl"), std::ios::app);
    out << entry.dump() << '\n';
  }
  q.push_back(std::move(entry));
}

std::vector<json> Server::valid_calls() const {
  std::lock_guard lock(calls_mu_);
  return valid_calls_;
}

std::vector<json> Server::malformed_calls() const {
  std::lock_guard lock(calls_mu_);
  return malformed_calls_;
}

HttpResponse Server::handle(const HttpRequest& request) {
  if (rate_limited(request.source)) return error_reply(429, "too many requests from " + request.source);
  json log{{"time", config_.clock()}, {"source", request.source}, {"method", request.method}, {"path", request.path}};
  json query = json::object();
  for (const auto& [k, v] : request.query) query[k].push_back(v);
  log["query"] = query;
  HttpResponse resp;
  try {
    resp = route(request, log);
  } catch (const BadRequest& e) {
    resp = error_reply(400, e.what());
  } catch (const Unauthorized& e) {
    resp = error_reply(401, e.what());
  } catch (const Forbidden& e) {
    resp = error_reply(403, e.what());
  } catch (const UnknownApp& e) {
    resp = error_reply(404, e.what());
  } catch (const std::exception& e) {
    resp = error_reply(500, e.what());
  }
  log["status"] = resp.status;
  log_call(resp.status != 400 && resp.status != 404 && resp.status != 405, std::move(log));
  return resp;
}

HttpResponse Server::route(const HttpRequest& request, json& log) {
  const std::string& path = request.path;
  static const std::vector<std::string> reads = {"groups", "nodes", "datasets", "subscriptions", "requestlist"};
  static const std::vector<std::string> writes = {"inject", "request/copy", "request/delete", "lock", "unlock"};
  if (starts_with(path, "/data/")) {
    std::string endpoint = path.substr(6);
    bool is_read = std::find(reads.begin(), reads.end(), endpoint) != reads.end();
    bool is_write = std::find(writes.begin(), writes.end(), endpoint) != writes.end();
    if (is_read) {
      if (request.method != "GET") return error_reply(405, "use GET for " + path);
      return handle_read(endpoint, request);
    }
    if (is_write) {
      if (request.method != "POST") return error_reply(405, "use POST for " + path);
      auto who = authenticate(request.token);
      if (!who) throw Unauthorized("writing calls need a valid token");
      if (who->role != Role::kWriter) throw Forbidden(who->user + " may not make writing calls");
      log["user"] = who->user;
      return handle_write(endpoint, request, *who);
    }
  } else if (starts_with(path, "/ctl/")) {
    return handle_ctl(path.substr(5), request);
  }
  return error_reply(404, "no such endpoint " + path);
}

HttpResponse Server::handle_read(const std::string& endpoint, const HttpRequest& request) {
  auto inv = store_.image();
  json data = json::array();
  if (endpoint == "groups") {
    auto ids = index_ids(inv->groups());
    auto names = values(request, "group");
    for (const auto& [name, _] : inv->groups()) {
      if (any_match(names, name)) data.push_back({{"name", name}, {"id", ids[name]}});
    }
  } else if (endpoint == "nodes") {
    auto ids = index_ids(inv->sites());
    auto names = values(request, "node");
    auto noempty = values(request, "noempty");
    bool skip_empty = !noempty.empty() && truthy(noempty.front());
    for (const auto& [name, s] : inv->sites()) {
      if (!any_match(names, name)) continue;
      if (skip_empty && inv->replicas_at(name).empty()) continue;
      data.push_back({{"name", name}, {"se", s.kind == StorageKind::kTape ? "MSS" : "Disk"}, {"id", ids[name]}});
    }
  } else if (endpoint == "datasets") {
    auto names = values(request, "dataset");
    for (const auto& [name, d] : inv->datasets()) {
      if (!any_match(names, name)) continue;
      data.push_back({{"name", name},
                      {"size", d.size()},
                      {"num_files", d.num_files()},
                      {"status", to_string(d.status)},
                      {"type", d.data_type}});
    }
  } else if (endpoint == "subscriptions") {
    auto ds_f = values(request, "dataset");
    auto block_f = values(request, "block");
    auto node_f = values(request, "node");
    auto group_f = values(request, "group");
    auto cust = values(request, "custodial");
    std::optional<bool> custodial;
    if (!cust.empty()) custodial = truthy(cust.front());
    // Latest copy request per replica.
    std::map<ReplicaKey, const ReplicaOpRequest*> origin;
    auto ops = registry_.replica_ops();
    for (const auto& op : ops) {
      if (op.verb == OpVerb::kCopy) origin[{op.block.dataset, op.block.block, op.site}] = &op;
    }
    auto sub = [&](const std::string& site, std::int64_t files, Bytes bytes, std::int64_t total_files,
                   Bytes total_bytes, const std::string& group, bool is_custodial, const ReplicaOpRequest* op,
                   Timestamp fallback_time) {
      return json{{"node", site},
                  {"id", site},
                  {"request", op ? json(op->id) : json(nullptr)},
                  {"node_files", files},
                  {"node_bytes", bytes},
                  {"group", group},
                  {"time_create", op ? op->created : fallback_time},
                  {"percent_files", total_files ? 100.0 * static_cast<double>(files) / static_cast<double>(total_files) : 0.0},
                  {"percent_bytes", total_bytes ? 100.0 * static_cast<double>(bytes) / static_cast<double>(total_bytes) : 0.0},
                  {"custodial", is_custodial ? "y" : "n"}};
    };
    for (const auto& [dname, d] : inv->datasets()) {
      if (!any_match(ds_f, dname)) continue;
      json entry{{"name", dname}, {"bytes", d.size()}, {"files", d.num_files()}, {"subscription", json::array()}};
      std::map<std::string, json> blocks;
      for (const auto& dr : inv->dataset_replicas_of(dname)) {
        if (!any_match(node_f, dr.site->name)) continue;
        std::vector<const BlockReplica*> kept;
        for (const auto* br : dr.block_replicas) {
          if (!any_match(block_f, br->block)) continue;
          if (!group_f.empty() && !any_match(group_f, br->group)) continue;
          if (custodial && br->is_custodial != *custodial) continue;
          kept.push_back(br);
        }
        if (kept.empty()) continue;
        bool whole = block_f.empty() && kept.size() == d.blocks.size() &&
                     std::all_of(kept.begin(), kept.end(), [](const BlockReplica* b) { return b->complete(); });
        if (whole) {
          Bytes bytes = 0;
          const ReplicaOpRequest* op = nullptr;
          Timestamp first = kept.front()->last_update;
          bool all_custodial = true;
          for (const auto* br : kept) {
            bytes += br->size_on_site;
            first = std::min(first, br->last_update);
            all_custodial = all_custodial && br->is_custodial;
            auto it = origin.find(br->key());
            if (it != origin.end() && (!op || it->second->id > op->id)) op = it->second;
          }
          entry["subscription"].push_back(sub(dr.site->name, d.num_files(), bytes, d.num_files(), d.size(),
                                              kept.front()->group, all_custodial, op, first));
          continue;
        }
        for (const auto* br : kept) {
          const Block& b = d.blocks.at(br->block);
          auto& bj = blocks[br->block];
          if (bj.is_null()) {
            bj = {{"name", dname + "#" + br->block}, {"bytes", b.size}, {"files", b.num_files},
                  {"subscription", json::array()}};
          }
          std::int64_t files = br->complete() ? b.num_files : static_cast<std::int64_t>(br->present_files->size());
          auto it = origin.find(br->key());
          bj["subscription"].push_back(sub(br->site, files, br->size_on_site, b.num_files, b.size, br->group,
                                           br->is_custodial, it == origin.end() ? nullptr : it->second,
                                           br->last_update));
        }
      }
      if (entry["subscription"].empty() && blocks.empty()) continue;
      if (!blocks.empty()) {
        entry["block"] = json::array();
        for (auto& [_, bj] : blocks) entry["block"].push_back(std::move(bj));
      }
      data.push_back(std::move(entry));
    }
    return reply(200, {{"dataset", data}});
  } else if (endpoint == "requestlist") {
    auto id_f = values(request, "request");
    auto node_f = values(request, "node");
    auto ds_f = values(request, "dataset");
    auto block_f = values(request, "block");
    auto by_f = values(request, "requested_by");
    auto ids = index_ids(inv->sites());
    auto site_entry = [&](const std::string& site) {
      auto it = ids.find(site);
      return json{{"node_id", it == ids.end() ? json(nullptr) : json(it->second)}, {"name", site}};
    };
    for (const auto& r : registry_.user_requests()) {
      if (!any_match(id_f, std::to_string(r.id)) || !any_match(node_f, r.site) || !any_match(ds_f, r.dataset) ||
          !block_f.empty() || !any_match(by_f, r.user)) {
        continue;
      }
      data.push_back({{"id", r.id},
                      {"type", r.kind == UserRequestKind::kCopy ? "copy" : "delete"},
                      {"state", state_name(r.state)},
                      {"time_create", r.created},
                      {"requested_by", r.user},
                      {"dataset", r.dataset},
                      {"sites", json::array({site_entry(r.site)})}});
    }
    for (const auto& r : registry_.replica_ops()) {
      if (!any_match(id_f, std::to_string(r.id)) || !any_match(node_f, r.site) ||
          !any_match(ds_f, r.block.dataset) || !any_match(block_f, r.block.block) || !any_match(by_f, "dynamo")) {
        continue;
      }
      data.push_back({{"id", r.id},
                      {"type", r.verb == OpVerb::kCopy ? "copy" : "delete"},
                      {"state", to_string(r.state)},
                      {"time_create", r.created},
                      {"requested_by", "dynamo"},
                      {"dataset", r.block.dataset},
                      {"block", r.block.block},
                      {"sites", json::array({site_entry(r.site)})}});
    }
    std::sort(data.begin(), data.end(), [](const json& a, const json& b) { return a["id"] < b["id"]; });
  }
  return reply(200, {{"data", data}, {"version", store_.version()}});
}

HttpResponse Server::handle_write(const std::string& endpoint, const HttpRequest& request, const Identity& who) {
  std::string owner = "rest:" + std::to_string(++rest_writes_);
  if (!lock_->try_acquire(owner)) {
    return error_reply(503, "another writing call or write-enabled application is running");
  }
  struct Release {
    WriteLock& lock;
    std::string owner;
    ~Release() { lock.release(owner); }
  } release{*lock_, owner};
  if (write_hook_) write_hook_();

  auto body = parse_body(request.body);
  auto inv = store_.image();
  auto now = config_.clock();
  json result;

  if (endpoint == "inject") {
    InventoryDelta delta;
    auto datasets = body.value("datasets", json::array());
    auto replicas = body.value("replicas", json::array());
    if (!datasets.is_array() || !replicas.is_array()) throw BadRequest("datasets and replicas must be arrays");
    if (datasets.empty() && replicas.empty()) throw BadRequest("nothing to inject");
    for (const auto& dj : datasets) {
      Dataset d;
      if (auto existing = inv->find_dataset(need_string(dj, "name"))) d = *existing;
      d.name = need_string(dj, "name");
      if (dj.contains("status")) {
        auto s = dj["status"].get<std::string>();
        auto parsed = parse_dataset_status(s);
        if (!parsed) throw BadRequest("unknown dataset status " + s);
        d.status = *parsed;
      }
      d.data_type = dj.value("type", d.data_type);
      d.last_update = now;
      d.blocks.clear();
      delta.update(to_record(d));
      for (const auto& bj : dj.value("blocks", json::array())) {
        Block b;
        b.name = need_string(bj, "name");
        b.last_update = now;
        auto files = bj.value("files", json::array());
        if (!files.is_array() || files.empty()) throw BadRequest("block " + b.name + " has no files");
        std::vector<File> fl;
        for (const auto& fj : files) {
          File f{need_string(fj, "lfn"), fj.value("size", Bytes{-1})};
          if (f.size < 0) throw BadRequest("file " + f.lfn + " has no size");
          b.size += f.size;
          fl.push_back(std::move(f));
        }
        b.num_files = static_cast<std::int64_t>(fl.size());
        if (bj.contains("size") && bj["size"].get<Bytes>() != b.size) {
          throw BadRequest("block " + b.name + " declares " + std::to_string(bj["size"].get<Bytes>()) +
                           " bytes but its files sum to " + std::to_string(b.size));
        }
        if (bj.contains("num_files") && bj["num_files"].get<std::int64_t>() != b.num_files) {
          throw BadRequest("block " + b.name + " declares a different file count");
        }
        delta.update(to_record(d.name, b));
        for (const auto& f : fl) delta.update(to_record(BlockKey{d.name, b.name}, f));
      }
    }
    for (const auto& rj : replicas) {
      BlockReplica r;
      r.dataset = need_string(rj, "dataset");
      r.block = need_string(rj, "block");
      r.site = need_string(rj, "site");
      r.group = rj.value("group", std::string("analysis"));
      r.last_update = now;
      delta.update(to_record(r));
    }
    try {
      result["version"] = commit_as(owner, delta);
    } catch (const DeltaError& e) {
      throw BadRequest(e.what());
    }
    result["datasets"] = datasets.size();
    result["replicas"] = replicas.size();
  } else if (endpoint == "request/copy" || endpoint == "request/delete") {
    UserRequest r;
    r.kind = endpoint == "request/copy" ? UserRequestKind::kCopy : UserRequestKind::kDelete;
    r.dataset = need_string(body, "dataset");
    r.site = need_string(body, "site");
    r.group = body.value("group", std::string());
    r.user = who.user;
    r.created = now;
    if (!inv->find_dataset(r.dataset)) throw BadRequest("unknown dataset " + r.dataset);
    if (!inv->find_site(r.site)) throw BadRequest("unknown site " + r.site);
    if (r.kind == UserRequestKind::kDelete && !inv->dataset_replica(r.dataset, r.site)) {
      throw BadRequest("no replica of " + r.dataset + " at " + r.site);
    }
    result["request_id"] = registry_.add_user_request(r);
  } else if (endpoint == "lock") {
    LockRecord l;
    l.dataset = need_string(body, "dataset");
    l.block = body.value("block", std::string());
    l.site = need_string(body, "site");
    l.user = who.user;
    l.created = now;
    InventoryDelta delta;
    int n = 0;
    for (const auto* br : inv->replicas_at(l.site)) {
      if (br->dataset != l.dataset || (!l.block.empty() && br->block != l.block)) continue;
      BlockReplica r = *br;
      r.is_locked = true;
      delta.update(to_record(r));
      ++n;
    }
    if (n == 0) throw BadRequest("no matching block replicas at " + l.site);
    result["version"] = commit_as(owner, delta);
    result["lock_id"] = registry_.add_lock(l);
    result["replicas"] = n;
  } else if (endpoint == "unlock") {
    if (!body.contains("id") || !body["id"].is_number_integer()) throw BadRequest("missing integer field 'id'");
    auto id = body["id"].get<std::int64_t>();
    auto locks = registry_.locks();
    auto it = std::find_if(locks.begin(), locks.end(), [&](const LockRecord& l) { return l.id == id; });
    if (it == locks.end()) throw BadRequest("no lock " + std::to_string(id));
    LockRecord gone = *it;
    locks.erase(it);
    auto covered = [&](const BlockReplica& r) {
      return std::any_of(locks.begin(), locks.end(), [&](const LockRecord& l) {
        return l.dataset == r.dataset && l.site == r.site && (l.block.empty() || l.block == r.block);
      });
    };
    InventoryDelta delta;
    for (const auto* br : inv->replicas_at(gone.site)) {
      if (br->dataset != gone.dataset || (!gone.block.empty() && br->block != gone.block)) continue;
      if (!br->is_locked || covered(*br)) continue;
      BlockReplica r = *br;
      r.is_locked = false;
      delta.update(to_record(r));
    }
    result["version"] = commit_as(owner, delta);
    registry_.remove_lock(id);
  }
  save_registry();
  return reply(200, result);
}

HttpResponse Server::handle_ctl(const std::string& endpoint, const HttpRequest& request) {
  if (endpoint == "status" && request.method == "GET") {
    json apps = json::array();
    for (const auto& a : this->apps()) apps.push_back(to_json(a));
    auto holder = lock_->holder();
    return reply(200, {{"version", store_.version()},
                       {"write_lock", holder ? json(*holder) : json(nullptr)},
                       {"apps", apps},
                       {"sequences", sequences()},
                       {"log_records", store_.log_records()}});
  }
  if (endpoint == "apps" && request.method == "POST") {
    auto who = authenticate(request.token);
    if (!who) throw Unauthorized("submitting applications needs a valid token");
    auto body = parse_body(request.body);
    auto id = submit_app_as(need_string(body, "name"), body.value("write", false), *who);
    return reply(200, {{"id", id}});
  }
  if (starts_with(endpoint, "apps/") && request.method == "GET") {
    std::int64_t id = 0;
    try {
      id = std::stoll(endpoint.substr(5));
    } catch (const std::exception&) {
      throw BadRequest("bad application id");
    }
    auto a = app(id);
    if (!a) return error_reply(404, "no application " + std::to_string(id));
    return reply(200, to_json(*a));
  }
  if (endpoint == "sequences" && request.method == "POST") {
    auto who = authenticate(request.token);
    if (!who) throw Unauthorized("sequences need a valid token");
    if (who->role != Role::kWriter) throw Forbidden(who->user + " may not start sequences");
    SequenceDef def;
    try {
      def = parse_sequence(request.body);
    } catch (const SequenceParseError& e) {
      throw BadRequest(e.what());
    }
    if (def.name.empty()) throw BadRequest("sequence needs a name");
    start_sequence(def);
    return reply(200, to_json(def));
  }
  if (endpoint == "sequences/stop" && request.method == "POST") {
    auto who = authenticate(request.token);
    if (!who) throw Unauthorized("sequences need a valid token");
    if (who->role != Role::kWriter) throw Forbidden(who->user + " may not stop sequences");
    auto body = parse_body(request.body);
    auto name = need_string(body, "name");
    auto running = sequences();
    if (std::find(running.begin(), running.end(), name) == running.end()) {
      return error_reply(404, "no running sequence " + name);
    }
    stop_sequence(name);
    return reply(200, {{"stopped", name}});
  }
  return error_reply(404, "no such endpoint /ctl/" + endpoint);
}

}  // namespace stowage
