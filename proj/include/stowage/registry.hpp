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


// Registry tables: block-level replica operations, their file-level
// operations, user copy/delete requests and replica locks.

#ifndef STOWAGE_REGISTRY_HPP
#define STOWAGE_REGISTRY_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/inventory.hpp"

namespace stowage {

enum class OpVerb { kCopy, kDelete };
enum class OpState { kNew, kInProgress, kDone, kFailed };

const char* to_string(OpVerb v);
const char* to_string(OpState s);

struct ReplicaOpRequest {
  std::int64_t id = 0;
  OpVerb verb = OpVerb::kCopy;
  BlockKey block;
  /// COPY only; empty lets fom pick.
  std::optional<std::string> source;
  /// Destination for COPY, target for DELETE.
  std::string site;
  std::string group;
  OpState state = OpState::kNew;
  Timestamp created = 0;
  /// The created replica is managed by an enforcer rule.
  bool enforced = false;
  std::string reason;

  bool operator==(const ReplicaOpRequest&) const = default;
};

enum class FileOpState { kPending, kSuccess, kFailure };
const char* to_string(FileOpState s);

struct FileOpRecord {
  std::int64_t batch_id = 0;
  std::int64_t request_id = 0;
  std::string lfn;
  FileOpState state = FileOpState::kPending;
  std::string reason;
  bool operator==(const FileOpRecord&) const = default;
};

enum class UserRequestKind { kCopy, kDelete };
enum class UserRequestState { kPending, kActivated, kFailed };

struct UserRequest {
  std::int64_t id = 0;
  UserRequestKind kind = UserRequestKind::kCopy;
  std::string dataset;
  std::string site;
  std::string group;
  std::string user;
  UserRequestState state = UserRequestState::kPending;
  std::string reason;
  Timestamp created = 0;
  bool operator==(const UserRequest&) const = default;
};

struct LockRecord {
  std::int64_t id = 0;
  std::string dataset;
  /// Empty locks every block of the dataset.
  std::string block;
  std::string site;
  std::string user;
  Timestamp created = 0;
  bool operator==(const LockRecord&) const = default;
};

/// Thread-safe; every accessor returns copies.
class Registry {
 public:
  Registry() = default;
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  std::int64_t add_replica_op(ReplicaOpRequest r);
  std::optional<ReplicaOpRequest> replica_op(std::int64_t id) const;
  std::vector<ReplicaOpRequest> replica_ops() const;
  std::vector<ReplicaOpRequest> replica_ops(OpState state) const;
  /// Replaces the row with the same id; throws Error for unknown ids.
  void update_replica_op(const ReplicaOpRequest& r);

  void put_file_op(const FileOpRecord& f);
  std::vector<FileOpRecord> file_ops() const;
  std::vector<FileOpRecord> file_ops_of(std::int64_t request_id) const;
  void erase_file_ops_of(std::int64_t request_id);

  std::int64_t add_user_request(UserRequest r);
  std::vector<UserRequest> user_requests() const;
  std::vector<UserRequest> user_requests(UserRequestState state) const;
  void update_user_request(const UserRequest& r);

  std::int64_t add_lock(LockRecord l);
  bool remove_lock(std::int64_t id);
  std::vector<LockRecord> locks() const;

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);
  /// Writes via a temporary file and rename.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::int64_t next_id_ = 1;
  std::map<std::int64_t, ReplicaOpRequest> ops_;
  // (request id, lfn) -> record
  std::map<std::pair<std::int64_t, std::string>, FileOpRecord> file_ops_;
  std::map<std::int64_t, UserRequest> requests_;
  std::map<std::int64_t, LockRecord> locks_;
};

}  // namespace stowage

#endif  // STOWAGE_REGISTRY_HPP
