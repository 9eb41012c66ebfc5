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

// In-memory image of the storage federation: datasets and their blocks,
// sites, groups, partitions and block replicas. File records are not
// resident; they are read on demand from a FileCatalog.

#ifndef STOWAGE_INVENTORY_HPP
#define STOWAGE_INVENTORY_HPP

#include <compare>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "stowage/common.hpp"

namespace stowage {

namespace policy {
struct Expr;
}

enum class DatasetStatus { kValid, kInvalid, kDeprecated };
enum class StorageKind { kDisk, kTape };
enum class SiteStatus { kReady, kMorgue };
enum class ReplicaCompleteness { kComplete, kPartial, kIncomplete };

const char* to_string(DatasetStatus s);
const char* to_string(StorageKind k);
const char* to_string(SiteStatus s);
const char* to_string(ReplicaCompleteness c);
std::optional<DatasetStatus> parse_dataset_status(std::string_view s);
std::optional<StorageKind> parse_storage_kind(std::string_view s);
std::optional<SiteStatus> parse_site_status(std::string_view s);

/// Scalar attribute value: number, string or boolean.
using AttrValue = std::variant<double, std::string, bool>;

inline constexpr const char* kGlobalPartition = "global";

struct BlockKey {
  std::string dataset;
  std::string block;
  auto operator<=>(const BlockKey&) const = default;
};

struct ReplicaKey {
  std::string dataset;
  std::string block;
  std::string site;
  auto operator<=>(const ReplicaKey&) const = default;
  BlockKey block_key() const { return {dataset, block}; }
};

std::string to_string(const BlockKey& k);
std::string to_string(const ReplicaKey& k);

struct File {
  std::string lfn;
  Bytes size = 0;
  bool operator==(const File&) const = default;
};

struct Block {
  std::string name;
  Bytes size = 0;
  std::int64_t num_files = 0;
  Timestamp last_update = 0;
  bool operator==(const Block&) const = default;
};

struct Dataset {
  std::string name;
  DatasetStatus status = DatasetStatus::kValid;
  std::string data_type;
  Timestamp last_update = 0;
  std::map<std::string, AttrValue> attrs;
  std::map<std::string, Block> blocks;

  Bytes size() const;
  std::int64_t num_files() const;
  bool operator==(const Dataset&) const = default;
};

struct Site {
  std::string name;
  StorageKind kind = StorageKind::kDisk;
  std::string endpoint;
  SiteStatus status = SiteStatus::kReady;
  /// partition name -> bytes; absent or 0 means no quota.
  std::map<std::string, Bytes> quotas;

  Bytes quota(const std::string& partition) const;
  bool operator==(const Site&) const = default;
};

struct Group {
  std::string name;
  bool operator==(const Group&) const = default;
};

struct Partition {
  std::string name;
  /// Predicate source over block replicas; empty matches everything.
  std::string rule;
  std::shared_ptr<const policy::Expr> predicate;

  bool operator==(const Partition& o) const { return name == o.name && rule == o.rule; }
};

struct BlockReplica {
  std::string dataset;
  std::string block;
  std::string site;
  std::string group;
  Bytes size_on_site = 0;
  /// nullopt is the COMPLETE marker; otherwise the lfns physically present.
  std::optional<std::set<std::string>> present_files;
  bool is_custodial = false;
  bool is_locked = false;
  /// Created to satisfy an enforcer rule.
  bool is_enforced = false;
  Timestamp last_update = 0;

  bool complete() const { return !present_files.has_value(); }
  ReplicaKey key() const { return {dataset, block, site}; }
  BlockKey block_key() const { return {dataset, block}; }
  bool operator==(const BlockReplica&) const = default;
};

/// Derived view: the block replicas of one dataset at one site.
struct DatasetReplica {
  const Dataset* dataset = nullptr;
  const Site* site = nullptr;
  std::vector<const BlockReplica*> block_replicas;

  ReplicaCompleteness completeness() const;
  Bytes size() const;
};

/// Persistence provider for file records.
class FileCatalog {
 public:
  virtual ~FileCatalog() = default;
  /// Throws PersistenceUnavailable when the backing store cannot be read.
  virtual std::vector<File> files(const BlockKey& block) const = 0;
  virtual void put(const BlockKey& block, std::vector<File> files) = 0;
  virtual void erase(const BlockKey& block) = 0;
  virtual std::vector<BlockKey> blocks() const = 0;
};

class MemoryFileCatalog : public FileCatalog {
 public:
  std::vector<File> files(const BlockKey& block) const override;
  void put(const BlockKey& block, std::vector<File> files) override;
  void erase(const BlockKey& block) override;
  std::vector<BlockKey> blocks() const override;

  /// Test hook: makes files() throw PersistenceUnavailable.
  void set_available(bool available);

 private:
  mutable std::mutex mu_;
  bool available_ = true;
  std::map<BlockKey, std::vector<File>> files_;
};

/// Shared value with copy-on-write: copies share storage until one of
/// them is mutated.
template <typename T>
class CowPtr {
 public:
  CowPtr() : p_(std::make_shared<T>()) {}
  const T& operator*() const { return *p_; }
  const T* operator->() const { return p_.get(); }
  T& mut() {
    if (p_.use_count() > 1) p_ = std::make_shared<T>(*p_);
    return *p_;
  }

 private:
  std::shared_ptr<T> p_;
};

class Inventory {
 public:
  Inventory();
  explicit Inventory(std::shared_ptr<FileCatalog> catalog);

  const std::map<std::string, Group>& groups() const { return *groups_; }
  const std::map<std::string, Partition>& partitions() const { return *partitions_; }
  const std::map<std::string, Site>& sites() const { return *sites_; }
  const std::map<std::string, Dataset>& datasets() const { return *datasets_; }
  const std::map<ReplicaKey, BlockReplica>& block_replicas() const { return *replicas_; }

  const Group* find_group(const std::string& name) const;
  const Partition* find_partition(const std::string& name) const;
  const Site* find_site(const std::string& name) const;
  const Dataset* find_dataset(const std::string& name) const;
  const Block* find_block(const BlockKey& key) const;
  const BlockReplica* find_replica(const ReplicaKey& key) const;

  /// Block replicas at a site, ordered by (dataset, block).
  std::vector<const BlockReplica*> replicas_at(const std::string& site) const;
  /// Block replicas of a block, ordered by site.
  std::vector<const BlockReplica*> replicas_of(const BlockKey& block) const;
  std::vector<DatasetReplica> dataset_replicas_at(const std::string& site) const;
  std::vector<DatasetReplica> dataset_replicas_of(const std::string& dataset) const;
  std::optional<DatasetReplica> dataset_replica(const std::string& dataset,
                                                const std::string& site) const;

  FileCatalog& file_catalog() const { return *catalog_; }
  std::shared_ptr<FileCatalog> file_catalog_handle() const { return catalog_; }
  void set_file_catalog(std::shared_ptr<FileCatalog> catalog) { catalog_ = std::move(catalog); }

  // Mutators validate references and throw Error on dangling ones. Erasure
  // cascades to dependent objects so the graph stays closed.
  void put_group(Group g);
  void put_partition(Partition p);
  void put_site(Site s);
  /// Replaces dataset metadata; the block map of an existing dataset is kept.
  void put_dataset(Dataset d);
  void put_block(const std::string& dataset, Block b);
  void put_replica(BlockReplica r);

  void erase_group(const std::string& name);
  void erase_partition(const std::string& name);
  void erase_site(const std::string& name);
  void erase_dataset(const std::string& name);
  void erase_block(const BlockKey& key);
  void erase_replica(const ReplicaKey& key);

  /// Resident-object count; excludes file records.
  std::size_t resident_objects() const;

 private:
  // Copies of an inventory (every commit makes one) share the tables a
  // delta does not touch.
  CowPtr<std::map<std::string, Group>> groups_;
  CowPtr<std::map<std::string, Partition>> partitions_;
  CowPtr<std::map<std::string, Site>> sites_;
  CowPtr<std::map<std::string, Dataset>> datasets_;
  CowPtr<std::map<ReplicaKey, BlockReplica>> replicas_;
  CowPtr<std::map<std::string, std::set<BlockKey>>> by_site_;
  CowPtr<std::map<BlockKey, std::set<std::string>>> by_block_;
  std::shared_ptr<FileCatalog> catalog_;
};

/// Reads the file records of a block from the persistence provider. The
/// records are returned by value and never become part of the image.
std::vector<File> load_files(const Inventory& inventory, const BlockKey& block);

/// Bytes of a set of present lfns, looked up in the block's file list.
Bytes present_bytes(const std::vector<File>& files, const std::set<std::string>& present);

}  // namespace stowage

#endif  // STOWAGE_INVENTORY_HPP
