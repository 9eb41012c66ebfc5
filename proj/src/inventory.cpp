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

#include "stowage/inventory.hpp"

#include <algorithm>

namespace stowage {

const char* to_string(DatasetStatus s) {
  switch (s) {
    case DatasetStatus::kValid: return "VALID";
    case DatasetStatus::kInvalid: return "INVALID";
    case DatasetStatus::kDeprecated: return "DEPRECATED";
  }
  return "?";
}

const char* to_string(StorageKind k) { return k == StorageKind::kDisk ? "DISK" : "TAPE"; }
const char* to_string(SiteStatus s) { return s == SiteStatus::kReady ? "READY" : "MORGUE"; }

const char* to_string(ReplicaCompleteness c) {
  switch (c) {
    case ReplicaCompleteness::kComplete: return "COMPLETE";
    case ReplicaCompleteness::kPartial: return "PARTIAL";
    case ReplicaCompleteness::kIncomplete: return "INCOMPLETE";
  }
  return "?";
}

std::optional<DatasetStatus> parse_dataset_status(std::string_view s) {
  if (s == "VALID") return DatasetStatus::kValid;
  if (s == "INVALID") return DatasetStatus::kInvalid;
  if (s == "DEPRECATED") return DatasetStatus::kDeprecated;
  return std::nullopt;
}

std::optional<StorageKind> parse_storage_kind(std::string_view s) {
  if (s == "DISK") return StorageKind::kDisk;
  if (s == "TAPE") return StorageKind::kTape;
  return std::nullopt;
}

std::optional<SiteStatus> parse_site_status(std::string_view s) {
  if (s == "READY") return SiteStatus::kReady;
  if (s == "MORGUE") return SiteStatus::kMorgue;
  return std::nullopt;
}

std::string to_string(const BlockKey& k) { return k.dataset + "#" + k.block; }
std::string to_string(const ReplicaKey& k) { return k.dataset + "#" + k.block + "@" + k.site; }

Bytes Dataset::size() const {
  Bytes total = 0;
  for (const auto& [_, b] : blocks) total += b.size;
  return total;
}

std::int64_t Dataset::num_files() const {
  std::int64_t total = 0;
  for (const auto& [_, b] : blocks) total += b.num_files;
  return total;
}

Bytes Site::quota(const std::string& partition) const {
  auto it = quotas.find(partition);
  return it == quotas.end() ? 0 : it->second;
}

ReplicaCompleteness DatasetReplica::completeness() const {
  for (const auto* br : block_replicas) {
    if (!br->complete()) return ReplicaCompleteness::kIncomplete;
  }
  return block_replicas.size() == dataset->blocks.size() ? ReplicaCompleteness::kComplete
                                                         : ReplicaCompleteness::kPartial;
}

Bytes DatasetReplica::size() const {
  Bytes total = 0;
  for (const auto* br : block_replicas) total += br->size_on_site;
  return total;
}

std::vector<File> MemoryFileCatalog::files(const BlockKey& block) const {
  std::lock_guard lock(mu_);
  if (!available_) throw PersistenceUnavailable("file catalog unavailable");
  auto it = files_.find(block);
  return it == files_.end() ? std::vector<File>{} : it->second;
}

void MemoryFileCatalog::put(const BlockKey& block, std::vector<File> files) {
  std::lock_guard lock(mu_);
  if (files.empty()) {
    files_.erase(block);
  } else {
    files_[block] = std::move(files);
  }
}

void MemoryFileCatalog::erase(const BlockKey& block) {
  std::lock_guard lock(mu_);
  files_.erase(block);
}

std::vector<BlockKey> MemoryFileCatalog::blocks() const {
  std::lock_guard lock(mu_);
  std::vector<BlockKey> out;
  out.reserve(files_.size());
  for (const auto& [k, _] : files_) out.push_back(k);
  return out;
}

void MemoryFileCatalog::set_available(bool available) {
  std::lock_guard lock(mu_);
  available_ = available;
}

Inventory::Inventory() : Inventory(std::make_shared<MemoryFileCatalog>()) {}

Inventory::Inventory(std::shared_ptr<FileCatalog> catalog) : catalog_(std::move(catalog)) {
  partitions_.mut()[kGlobalPartition] = Partition{kGlobalPartition, "", nullptr};
}

const Group* Inventory::find_group(const std::string& name) const {
  auto it = groups_->find(name);
  return it == groups_->end() ? nullptr : &it->second;
}

const Partition* Inventory::find_partition(const std::string& name) const {
  auto it = partitions_->find(name);
  return it == partitions_->end() ? nullptr : &it->second;
}

const Site* Inventory::find_site(const std::string& name) const {
  auto it = sites_->find(name);
  return it == sites_->end() ? nullptr : &it->second;
}

const Dataset* Inventory::find_dataset(const std::string& name) const {
  auto it = datasets_->find(name);
  return it == datasets_->end() ? nullptr : &it->second;
}

const Block* Inventory::find_block(const BlockKey& key) const {
  const auto* d = find_dataset(key.dataset);
  if (!d) return nullptr;
  auto it = d->blocks.find(key.block);
  return it == d->blocks.end() ? nullptr : &it->second;
}

const BlockReplica* Inventory::find_replica(const ReplicaKey& key) const {
  auto it = replicas_->find(key);
  return it == replicas_->end() ? nullptr : &it->second;
}

std::vector<const BlockReplica*> Inventory::replicas_at(const std::string& site) const {
  std::vector<const BlockReplica*> out;
  auto it = by_site_->find(site);
  if (it == by_site_->end()) return out;
  out.reserve(it->second.size());
  for (const auto& bk : it->second) out.push_back(&replicas_->at({bk.dataset, bk.block, site}));
  return out;
}

std::vector<const BlockReplica*> Inventory::replicas_of(const BlockKey& block) const {
  std::vector<const BlockReplica*> out;
  auto it = by_block_->find(block);
  if (it == by_block_->end()) return out;
  for (const auto& s : it->second) out.push_back(&replicas_->at({block.dataset, block.block, s}));
  return out;
}

std::vector<DatasetReplica> Inventory::dataset_replicas_at(const std::string& site) const {
  std::vector<DatasetReplica> out;
  const Site* s = find_site(site);
  if (!s) return out;
  for (const auto* br : replicas_at(site)) {
    if (out.empty() || out.back().dataset->name != br->dataset) {
      out.push_back(DatasetReplica{&datasets_->at(br->dataset), s, {}});
    }
    out.back().block_replicas.push_back(br);
  }
  return out;
}

std::vector<DatasetReplica> Inventory::dataset_replicas_of(const std::string& dataset) const {
  std::map<std::string, DatasetReplica> by_site;
  const Dataset* d = find_dataset(dataset);
  if (!d) return {};
  for (const auto& [bname, _] : d->blocks) {
    for (const auto* br : replicas_of({dataset, bname})) {
      auto& dr = by_site[br->site];
      dr.dataset = d;
      dr.site = &sites_->at(br->site);
      dr.block_replicas.push_back(br);
    }
  }
  std::vector<DatasetReplica> out;
  for (auto& [_, dr] : by_site) out.push_back(std::move(dr));
  return out;
}

std::optional<DatasetReplica> Inventory::dataset_replica(const std::string& dataset,
                                                         const std::string& site) const {
  const Dataset* d = find_dataset(dataset);
  const Site* s = find_site(site);
  if (!d || !s) return std::nullopt;
  DatasetReplica dr{d, s, {}};
  for (const auto& [bname, _] : d->blocks) {
    if (const auto* br = find_replica({dataset, bname, site})) dr.block_replicas.push_back(br);
  }
  if (dr.block_replicas.empty()) return std::nullopt;
  return dr;
}

void Inventory::put_group(Group g) {
  if (g.name.empty()) throw Error("group name is empty");
  auto name = g.name;
  groups_.mut()[name] = std::move(g);
}

void Inventory::put_partition(Partition p) {
  if (p.name.empty()) throw Error("partition name is empty");
  if (p.name == kGlobalPartition) throw Error("partition 'global' is reserved");
  auto name = p.name;
  partitions_.mut()[name] = std::move(p);
}

void Inventory::put_site(Site s) {
  if (s.name.empty()) throw Error("site name is empty");
  for (const auto& [p, q] : s.quotas) {
    if (q < 0) throw Error("negative quota for partition " + p + " at site " + s.name);
  }
  auto name = s.name;
  sites_.mut()[name] = std::move(s);
}

void Inventory::put_dataset(Dataset d) {
  if (d.name.empty()) throw Error("dataset name is empty");
  auto it = datasets_.mut().find(d.name);
  if (it != datasets_.mut().end()) {
    d.blocks = std::move(it->second.blocks);
    it->second = std::move(d);
  } else {
    d.blocks.clear();
    auto name = d.name;
    datasets_.mut()[name] = std::move(d);
  }
}

void Inventory::put_block(const std::string& dataset, Block b) {
  auto it = datasets_.mut().find(dataset);
  if (it == datasets_.mut().end()) throw Error("block " + b.name + " references unknown dataset " + dataset);
  if (b.name.empty()) throw Error("block name is empty");
  if (b.size < 0 || b.num_files < 0) throw Error("negative block size or file count");
  auto name = b.name;
  it->second.blocks[name] = std::move(b);
  // Complete replicas track the block size.
  auto idx = by_block_.mut().find({dataset, name});
  if (idx != by_block_.mut().end()) {
    for (const auto& site : idx->second) {
      auto& r = replicas_.mut().at({dataset, name, site});
      if (r.complete()) r.size_on_site = it->second.blocks[name].size;
    }
  }
}

void Inventory::put_replica(BlockReplica r) {
  const Block* b = find_block(r.block_key());
  if (!b) throw Error("replica references unknown block " + to_string(r.block_key()));
  if (!find_site(r.site)) throw Error("replica references unknown site " + r.site);
  if (!find_group(r.group)) throw Error("replica references unknown group " + r.group);
  if (r.present_files) {
    auto files = catalog_->files(r.block_key());
    for (const auto& lfn : *r.present_files) {
      bool known = std::any_of(files.begin(), files.end(), [&](const File& f) { return f.lfn == lfn; });
      if (!known) throw Error("replica " + to_string(r.key()) + " lists unknown file " + lfn);
    }
    if (r.present_files->size() == files.size() && !files.empty()) {
      r.present_files.reset();
    } else {
      r.size_on_site = present_bytes(files, *r.present_files);
    }
  }
  if (r.complete()) r.size_on_site = b->size;
  auto key = r.key();
  by_site_.mut()[key.site].insert(key.block_key());
  by_block_.mut()[key.block_key()].insert(key.site);
  replicas_.mut()[key] = std::move(r);
}

void Inventory::erase_group(const std::string& name) {
  if (!groups_.mut().erase(name)) return;
  std::vector<ReplicaKey> doomed;
  for (const auto& [k, r] : *replicas_) {
    if (r.group == name) doomed.push_back(k);
  }
  for (const auto& k : doomed) erase_replica(k);
}

void Inventory::erase_partition(const std::string& name) {
  if (name == kGlobalPartition) return;
  partitions_.mut().erase(name);
}

void Inventory::erase_site(const std::string& name) {
  if (!sites_.mut().erase(name)) return;
  auto it = by_site_.mut().find(name);
  if (it == by_site_.mut().end()) return;
  auto blocks = it->second;
  for (const auto& bk : blocks) erase_replica({bk.dataset, bk.block, name});
}

void Inventory::erase_dataset(const std::string& name) {
  auto it = datasets_.mut().find(name);
  if (it == datasets_.mut().end()) return;
  std::vector<std::string> blocks;
  for (const auto& [b, _] : it->second.blocks) blocks.push_back(b);
  for (const auto& b : blocks) erase_block({name, b});
  datasets_.mut().erase(name);
}

void Inventory::erase_block(const BlockKey& key) {
  auto dit = datasets_.mut().find(key.dataset);
  if (dit == datasets_.mut().end() || !dit->second.blocks.count(key.block)) return;
  auto idx = by_block_.mut().find(key);
  if (idx != by_block_.mut().end()) {
    auto sites = idx->second;
    for (const auto& s : sites) erase_replica({key.dataset, key.block, s});
  }
  dit->second.blocks.erase(key.block);
  catalog_->erase(key);
}

void Inventory::erase_replica(const ReplicaKey& key) {
  if (!replicas_.mut().erase(key)) return;
  auto sit = by_site_.mut().find(key.site);
  if (sit != by_site_.mut().end()) {
    sit->second.erase(key.block_key());
    if (sit->second.empty()) by_site_.mut().erase(sit);
  }
  auto bit = by_block_.mut().find(key.block_key());
  if (bit != by_block_.mut().end()) {
    bit->second.erase(key.site);
    if (bit->second.empty()) by_block_.mut().erase(bit);
  }
}

std::size_t Inventory::resident_objects() const {
  std::size_t n = groups_->size() + partitions_->size() + sites_->size() + replicas_->size();
  for (const auto& [_, d] : *datasets_) n += 1 + d.blocks.size();
  return n;
}

std::vector<File> load_files(const Inventory& inventory, const BlockKey& block) {
  if (!inventory.find_block(block)) throw Error("unknown block " + to_string(block));
  return inventory.file_catalog().files(block);
}

Bytes present_bytes(const std::vector<File>& files, const std::set<std::string>& present) {
  Bytes total = 0;
  for (const auto& f : files) {
    if (present.count(f.lfn)) total += f.size;
  }
  return total;
}

}  // namespace stowage
