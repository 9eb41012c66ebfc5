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

// Small inventory builder shared by the unit and acceptance tests.

#ifndef STOWAGE_TESTS_FIXTURES_HPP
#define STOWAGE_TESTS_FIXTURES_HPP

#include <random>
#include <set>
#include <string>
#include <vector>

#include "stowage/inventory.hpp"
#include "stowage/snapshot.hpp"

namespace stowage::testing {

class WorldBuilder {
 public:
  WorldBuilder() { inv_.put_group(Group{"analysis"}); }

  WorldBuilder& group(const std::string& name) {
    inv_.put_group(Group{name});
    return *this;
  }

  WorldBuilder& site(const std::string& name, Bytes quota, StorageKind kind = StorageKind::kDisk,
                     SiteStatus status = SiteStatus::kReady) {
    Site s;
    s.name = name;
    s.kind = kind;
    s.status = status;
    s.endpoint = "root://" + name + ".example.org/store";
    if (quota > 0) s.quotas[kGlobalPartition] = quota;
    inv_.put_site(std::move(s));
    return *this;
  }

  /// Dataset with `blocks` blocks of `files` files of `file_size` bytes.
  WorldBuilder& dataset(const std::string& name, int blocks, int files, Bytes file_size,
                        DatasetStatus status = DatasetStatus::kValid, Timestamp created = 0) {
    Dataset d;
    d.name = name;
    d.status = status;
    d.data_type = "AOD";
    d.last_update = created;
    inv_.put_dataset(d);
    for (int b = 0; b < blocks; ++b) {
      Block blk;
      blk.name = "b" + std::to_string(b);
      blk.num_files = files;
      blk.size = files * file_size;
      blk.last_update = created;
      std::vector<File> fl;
      for (int f = 0; f < files; ++f) {
        fl.push_back(File{name + "/" + blk.name + "/f" + std::to_string(f) + ".root", file_size});
      }
      inv_.file_catalog().put({name, blk.name}, std::move(fl));
      inv_.put_block(name, blk);
    }
    return *this;
  }

  WorldBuilder& attr(const std::string& dataset, const std::string& key, AttrValue v) {
    Dataset d = *inv_.find_dataset(dataset);
    d.attrs[key] = std::move(v);
    inv_.put_dataset(std::move(d));
    return *this;
  }

  /// Complete replicas of every block of `dataset` at `site`.
  WorldBuilder& replica(const std::string& dataset, const std::string& site, const std::string& group = "analysis",
                        bool locked = false) {
    for (const auto& [bname, _] : inv_.find_dataset(dataset)->blocks) block_replica(dataset, bname, site, group, locked);
    return *this;
  }

  WorldBuilder& block_replica(const std::string& dataset, const std::string& block, const std::string& site,
                              const std::string& group = "analysis", bool locked = false) {
    BlockReplica r;
    r.dataset = dataset;
    r.block = block;
    r.site = site;
    r.group = group;
    r.is_locked = locked;
    inv_.put_replica(std::move(r));
    return *this;
  }

  Inventory& inventory() { return inv_; }
  Inventory build() const { return inv_; }

 private:
  Inventory inv_;
};

/// Random small world: `sites` disk sites, `datasets` datasets of 1-4
/// blocks with 1-3 files each, and random (sometimes incomplete) replicas.
inline Inventory random_world(std::uint64_t seed, int sites = 5, int datasets = 20) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  WorldBuilder w;
  w.group("production");
  for (int s = 0; s < sites; ++s) w.site("T2_S" + std::to_string(s), (50 + pick(0, 150)) * kTB);
  for (int d = 0; d < datasets; ++d) {
    std::string name = (pick(0, 1) ? "/sim/ds" : "/data/ds") + std::to_string(d);
    w.dataset(name, pick(1, 4), pick(1, 3), pick(1, 2000) * kGB,
              pick(0, 9) == 0 ? DatasetStatus::kInvalid : DatasetStatus::kValid, pick(0, 1000) * kDay);
    w.attr(name, "usage_rank", static_cast<double>(pick(0, 400)));
  }
  auto& inv = w.inventory();
  for (const auto& [name, d] : inv.datasets()) {
    for (const auto& [bname, _] : d.blocks) {
      for (int s = 0; s < sites; ++s) {
        if (pick(0, 3) != 0) continue;
        BlockReplica r;
        r.dataset = name;
        r.block = bname;
        r.site = "T2_S" + std::to_string(s);
        r.group = pick(0, 1) ? "analysis" : "production";
        r.is_locked = pick(0, 9) == 0;
        r.last_update = pick(0, 1000) * kDay;
        if (pick(0, 4) == 0) {
          auto files = inv.file_catalog().files({name, bname});
          std::set<std::string> present;
          for (const auto& f : files) {
            if (pick(0, 1)) present.insert(f.lfn);
          }
          r.present_files = present;
        }
        inv.put_replica(std::move(r));
      }
    }
  }
  return w.build();
}

/// Random valid delta against `inv`: replica moves and removals, new
/// datasets, quota changes, sometimes a dataset removal.
inline InventoryDelta random_delta(const Inventory& inv, std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  InventoryDelta d;
  std::vector<ReplicaKey> keys;
  for (const auto& [k, _] : inv.block_replicas()) keys.push_back(k);
  std::vector<std::string> sites;
  for (const auto& [s, _] : inv.sites()) sites.push_back(s);
  // Datasets this delta removes; no other entry may refer to them.
  std::set<std::string> doomed;
  if (!keys.empty() && pick(0, 1)) doomed.insert(keys[pick(0, keys.size() - 1)].dataset);
  std::erase_if(keys, [&](const ReplicaKey& k) { return doomed.count(k.dataset) > 0; });
  for (const auto& name : doomed) d.remove(key_record(RecordType::kDataset, {name}));
  for (int i = 0; i < 6; ++i) {
    switch (pick(0, 3)) {
      case 0:
        if (!keys.empty()) d.remove(to_record(inv.block_replicas().at(keys[pick(0, keys.size() - 1)])));
        break;
      case 1: {
        if (keys.empty()) break;
        BlockReplica r = inv.block_replicas().at(keys[pick(0, keys.size() - 1)]);
        r.site = sites[pick(0, sites.size() - 1)];
        r.is_locked = !r.is_locked;
        r.present_files.reset();
        d.update(to_record(r));
        break;
      }
      case 2: {
        std::string name = "/new/ds" + std::to_string(pick(0, 5));
        if (doomed.count(name)) break;
        Dataset ds;
        ds.name = name;
        ds.last_update = pick(0, 100);
        d.update(to_record(ds));
        Block b{"nb", 3 * kGB, 1, 0};
        d.update(to_record(name, b));
        d.update(to_record(BlockKey{name, "nb"}, File{name + "/nb/f", 3 * kGB}));
        BlockReplica r;
        r.dataset = name;
        r.block = "nb";
        r.site = sites[pick(0, sites.size() - 1)];
        r.group = "analysis";
        d.update(to_record(r));
        break;
      }
      case 3: {
        Site s = inv.sites().at(sites[pick(0, sites.size() - 1)]);
        s.quotas[kGlobalPartition] = pick(1, 500) * kTB;
        d.update(to_record(s));
        break;
      }
    }
  }
  return d;
}

}  // namespace stowage::testing

#endif  // STOWAGE_TESTS_FIXTURES_HPP
