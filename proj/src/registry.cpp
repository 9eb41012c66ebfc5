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


#include "stowage/registry.hpp"

#include <fstream>

namespace stowage {

NLOHMANN_JSON_SERIALIZE_ENUM(OpVerb, {{OpVerb::kCopy, "COPY"}, {OpVerb::kDelete, "DELETE"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OpState, {{OpState::kNew, "NEW"},
                                       {OpState::kInProgress, "IN_PROGRESS"},
                                       {OpState::kDone, "DONE"},
                                       {OpState::kFailed, "FAILED"}})
NLOHMANN_JSON_SERIALIZE_ENUM(FileOpState, {{FileOpState::kPending, "PENDING"},
                                           {FileOpState::kSuccess, "SUCCESS"},
                                           {FileOpState::kFailure, "FAILURE"}})
NLOHMANN_JSON_SERIALIZE_ENUM(UserRequestKind, {{UserRequestKind::kCopy, "copy"}, {UserRequestKind::kDelete, "delete"}})
NLOHMANN_JSON_SERIALIZE_ENUM(UserRequestState, {{UserRequestState::kPending, "pending"},
                                                {UserRequestState::kActivated, "activated"},
                                                {UserRequestState::kFailed, "failed"}})

void to_json(nlohmann::json& j, const ReplicaOpRequest& r) {
  j = {{"id", r.id},       {"verb", r.verb},   {"dataset", r.block.dataset}, {"block", r.block.block},
       {"site", r.site},   {"group", r.group}, {"state", r.state},           {"created", r.created},
       {"enforced", r.enforced}, {"reason", r.reason}};
  if (r.source) j["source"] = *r.source;
}

void from_json(const nlohmann::json& j, ReplicaOpRequest& r) {
  r.id = j.at("id");
  r.verb = j.at("verb");
  r.block = {j.at("dataset"), j.at("block")};
  r.site = j.at("site");
  r.group = j.at("group");
  r.state = j.at("state");
  r.created = j.at("created");
  r.enforced = j.value("enforced", false);
  r.reason = j.value("reason", "");
  if (j.contains("source")) r.source = j.at("source").get<std::string>();
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FileOpRecord, batch_id, request_id, lfn, state, reason)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(UserRequest, id, kind, dataset, site, group, user, state, reason, created)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LockRecord, id, dataset, block, site, user, created)

const char* to_string(OpVerb v) { return v == OpVerb::kCopy ? "COPY" : "DELETE"; }

const char* to_string(OpState s) {
  switch (s) {
    case OpState::kNew: return "NEW";
    case OpState::kInProgress: return "IN_PROGRESS";
    case OpState::kDone: return "DONE";
    case OpState::kFailed: return "FAILED";
  }
  return "?";
}

const char* to_string(FileOpState s) {
  switch (s) {
    case FileOpState::kPending: return "PENDING";
    case FileOpState::kSuccess: return "SUCCESS";
    case FileOpState::kFailure: return "FAILURE";
  }
  return "?";
}

std::int64_t Registry::add_replica_op(ReplicaOpRequest r) {
  std::lock_guard lock(mu_);
  r.id = next_id_++;
  ops_[r.id] = r;
  return r.id;
}

std::optional<ReplicaOpRequest> Registry::replica_op(std::int64_t id) const {
  std::lock_guard lock(mu_);
  auto it = ops_.find(id);
  if (it == ops_.end()) return std::nullopt;
  return it->second;
}

std::vector<ReplicaOpRequest> Registry::replica_ops() const {
  std::lock_guard lock(mu_);
  std::vector<ReplicaOpRequest> out;
  for (const auto& [_, r] : ops_) out.push_back(r);
  return out;
}

std::vector<ReplicaOpRequest> Registry::replica_ops(OpState state) const {
  std::lock_guard lock(mu_);
  std::vector<ReplicaOpRequest> out;
  for (const auto& [_, r] : ops_) {
    if (r.state == state) out.push_back(r);
  }
  return out;
}

void Registry::update_replica_op(const ReplicaOpRequest& r) {
  std::lock_guard lock(mu_);
  auto it = ops_.find(r.id);
  if (it == ops_.end()) throw Error("unknown replica operation " + std::to_string(r.id));
  it->second = r;
}

void Registry::put_file_op(const FileOpRecord& f) {
  std::lock_guard lock(mu_);
  file_ops_[{f.request_id, f.lfn}] = f;
}

std::vector<FileOpRecord> Registry::file_ops() const {
  std::lock_guard lock(mu_);
  std::vector<FileOpRecord> out;
  for (const auto& [_, f] : file_ops_) out.push_back(f);
  return out;
}

std::vector<FileOpRecord> Registry::file_ops_of(std::int64_t request_id) const {
  std::lock_guard lock(mu_);
  std::vector<FileOpRecord> out;
  for (auto it = file_ops_.lower_bound({request_id, ""}); it != file_ops_.end() && it->first.first == request_id;
       ++it) {
    out.push_back(it->second);
  }
  return out;
}

void Registry::erase_file_ops_of(std::int64_t request_id) {
  std::lock_guard lock(mu_);
  auto it = file_ops_.lower_bound({request_id, ""});
  while (it != file_ops_.end() && it->first.first == request_id) it = file_ops_.erase(it);
}

std::int64_t Registry::add_user_request(UserRequest r) {
  std::lock_guard lock(mu_);
  r.id = next_id_++;
  requests_[r.id] = r;
  return r.id;
}

std::vector<UserRequest> Registry::user_requests() const {
  std::lock_guard lock(mu_);
  std::vector<UserRequest> out;
  for (const auto& [_, r] : requests_) out.push_back(r);
  return out;
}

std::vector<UserRequest> Registry::user_requests(UserRequestState state) const {
  std::lock_guard lock(mu_);
  std::vector<UserRequest> out;
  for (const auto& [_, r] : requests_) {
    if (r.state == state) out.push_back(r);
  }
  return out;
}

void Registry::update_user_request(const UserRequest& r) {
  std::lock_guard lock(mu_);
  auto it = requests_.find(r.id);
  if (it == requests_.end()) throw Error("unknown user request " + std::to_string(r.id));
  it->second = r;
}

std::int64_t Registry::add_lock(LockRecord l) {
  std::lock_guard lock(mu_);
  l.id = next_id_++;
  locks_[l.id] = l;
  return l.id;
}

bool Registry::remove_lock(std::int64_t id) {
  std::lock_guard lock(mu_);
  return locks_.erase(id) > 0;
}

std::vector<LockRecord> Registry::locks() const {
  std::lock_guard lock(mu_);
  std::vector<LockRecord> out;
  for (const auto& [_, l] : locks_) out.push_back(l);
  return out;
}

nlohmann::json Registry::to_json() const {
  std::lock_guard lock(mu_);
  nlohmann::json j;
  j["next_id"] = next_id_;
  j["replica_ops"] = nlohmann::json::array();
  for (const auto& [_, r] : ops_) j["replica_ops"].push_back(r);
  j["file_ops"] = nlohmann::json::array();
  for (const auto& [_, f] : file_ops_) j["file_ops"].push_back(f);
  j["requests"] = nlohmann::json::array();
  for (const auto& [_, r] : requests_) j["requests"].push_back(r);
  j["locks"] = nlohmann::json::array();
  for (const auto& [_, l] : locks_) j["locks"].push_back(l);
  return j;
}

void Registry::load_json(const nlohmann::json& j) {
  std::lock_guard lock(mu_);
  ops_.clear();
  file_ops_.clear();
  requests_.clear();
  locks_.clear();
  next_id_ = j.value("next_id", std::int64_t{1});
  for (const auto& e : j.value("replica_ops", nlohmann::json::array())) {
    auto r = e.get<ReplicaOpRequest>();
    ops_[r.id] = r;
  }
  for (const auto& e : j.value("file_ops", nlohmann::json::array())) {
    auto f = e.get<FileOpRecord>();
    file_ops_[{f.request_id, f.lfn}] = f;
  }
  for (const auto& e : j.value("requests", nlohmann::json::array())) {
    auto r = e.get<UserRequest>();
    requests_[r.id] = r;
  }
  for (const auto& e : j.value("locks", nlohmann::json::array())) {
    auto l = e.get<LockRecord>();
    locks_[l.id] = l;
  }
}

void Registry::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw PersistenceUnavailable("cannot write " + tmp.string());
    out << to_json().dump(1) << "\n";
    if (!out.flush()) throw PersistenceUnavailable("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void Registry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PersistenceUnavailable("cannot read " + path.string());
  load_json(nlohmann::json::parse(in));
}

}  // namespace stowage
