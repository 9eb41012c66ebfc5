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


#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "stowage/fom.hpp"

namespace stowage::fom {
namespace {

using testing::WorldBuilder;

// Completes every file at the next poll; `fails` decides the outcome.
class ScriptedBackend : public Backend {
 public:
  std::function<bool(const FileOp&, int attempt)> fails = [](const FileOp&, int) { return false; };
  bool up = true;
  bool duplicate_reports = false;
  std::vector<std::pair<std::int64_t, FileOpBatch>> submitted;
  std::map<std::string, int> attempts;

  bool reachable() const override { return up; }
  std::int64_t submit(const FileOpBatch& batch) override {
    auto id = static_cast<std::int64_t>(submitted.size()) + 1;
    submitted.emplace_back(id, batch);
    for (const auto& f : batch.files) outcomes_[id].push_back({f.lfn, fails(f, ++attempts[f.lfn]) ? FileOpState::kFailure : FileOpState::kSuccess, "", 0});
    return id;
  }
  std::vector<FileOutcome> poll(std::int64_t id) override {
    auto out = outcomes_[id];
    if (duplicate_reports) out.insert(out.end(), outcomes_[id].begin(), outcomes_[id].end());
    return out;
  }
  void cancel(std::int64_t id) override { outcomes_.erase(id); }

 private:
  std::map<std::int64_t, std::vector<FileOutcome>> outcomes_;
};

ReplicaOpRequest copy(const std::string& ds, const std::string& block, const std::string& dest) {
  ReplicaOpRequest r;
  r.verb = OpVerb::kCopy;
  r.block = {ds, block};
  r.site = dest;
  r.group = "analysis";
  return r;
}

// Runs iterations, committing each delta, until nothing is pending.
Inventory drive(FileOperationManager& fom, Inventory inv, Registry& reg, int max_iterations = 100) {
  for (int i = 0; i < max_iterations; ++i) {
    auto res = fom.run_iteration(inv, i);
    inv = apply_delta(inv, res.delta);
    if (reg.replica_ops(OpState::kNew).empty() && reg.replica_ops(OpState::kInProgress).empty()) break;
  }
  return inv;
}

TEST(Fom, CopyCompletesBlock) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/d", 1, 3, 2 * kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  auto id = reg.add_replica_op(copy("/d", "b0", "T2_B"));
  ScriptedBackend backend;
  FileOperationManager fom(reg, backend);
  inv = drive(fom, inv, reg);
  const auto* r = inv.find_replica({"/d", "b0", "T2_B"});
  ASSERT_NE(r, nullptr);
  EXPECT_TRUE(r->complete());
  EXPECT_EQ(r->size_on_site, 6 * kGB);
  EXPECT_EQ(reg.replica_op(id)->state, OpState::kDone);
  ASSERT_EQ(backend.submitted.size(), 1u);
  EXPECT_EQ(backend.submitted[0].second.files.front().source, "T2_A");
}

TEST(Fom, FailedFileIsRetried) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/d", 1, 3, 2 * kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  auto id = reg.add_replica_op(copy("/d", "b0", "T2_B"));
  ScriptedBackend backend;
  backend.fails = [](const FileOp& f, int attempt) { return f.lfn == "/d/b0/f1.root" && attempt == 1; };
  FileOperationManager fom(reg, backend);

  auto r1 = fom.run_iteration(inv, 0);  // dispatch
  inv = apply_delta(inv, r1.delta);
  auto r2 = fom.run_iteration(inv, 1);  // collect: two arrive, one fails
  inv = apply_delta(inv, r2.delta);
  const auto* partial = inv.find_replica({"/d", "b0", "T2_B"});
  ASSERT_NE(partial, nullptr);
  EXPECT_FALSE(partial->complete());
  EXPECT_EQ(*partial->present_files, (std::set<std::string>{"/d/b0/f0.root", "/d/b0/f2.root"}));
  EXPECT_EQ(partial->size_on_site, 4 * kGB);
  EXPECT_EQ(reg.replica_op(id)->state, OpState::kInProgress);
  EXPECT_EQ(r2.dispatched_files, 0u);  // backoff of one iteration

  auto r3 = fom.run_iteration(inv, 2);
  EXPECT_EQ(r3.dispatched_files, 1u);
  EXPECT_EQ(backend.submitted.back().second.files.front().lfn, "/d/b0/f1.root");
  inv = apply_delta(inv, r3.delta);
  inv = apply_delta(inv, fom.run_iteration(inv, 3).delta);
  EXPECT_TRUE(inv.find_replica({"/d", "b0", "T2_B"})->complete());
  fom.run_iteration(inv, 4);
  EXPECT_EQ(reg.replica_op(id)->state, OpState::kDone);
}

TEST(Fom, DeleteUnlinksReplica) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).dataset("/d", 1, 3, 2 * kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  ReplicaOpRequest del;
  del.verb = OpVerb::kDelete;
  del.block = {"/d", "b0"};
  del.site = "T2_A";
  auto id = reg.add_replica_op(del);
  ScriptedBackend backend;
  FileOperationManager fom(reg, backend);
  inv = drive(fom, inv, reg);
  EXPECT_EQ(inv.find_replica({"/d", "b0", "T2_A"}), nullptr);
  EXPECT_FALSE(inv.dataset_replica("/d", "T2_A"));
  EXPECT_EQ(reg.replica_op(id)->state, OpState::kDone);
}

TEST(Fom, DeleteOfEmptyPartialReplica) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).dataset("/d", 1, 2, kGB);
  w.block_replica("/d", "b0", "T2_A");
  auto& raw = w.inventory();
  BlockReplica empty = *raw.find_replica({"/d", "b0", "T2_A"});
  empty.present_files = std::set<std::string>{};
  empty.size_on_site = 0;
  raw.put_replica(empty);
  auto inv = w.build();
  Registry reg;
  ReplicaOpRequest del;
  del.verb = OpVerb::kDelete;
  del.block = {"/d", "b0"};
  del.site = "T2_A";
  auto id = reg.add_replica_op(del);
  ScriptedBackend backend;
  FileOperationManager fom(reg, backend);
  inv = drive(fom, inv, reg);
  EXPECT_TRUE(backend.submitted.empty());
  EXPECT_EQ(inv.find_replica({"/d", "b0", "T2_A"}), nullptr);
  EXPECT_EQ(reg.replica_op(id)->state, OpState::kDone);
}

TEST(Fom, RetriesExhaustWithBackoff) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/d", 1, 1, kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  auto id = reg.add_replica_op(copy("/d", "b0", "T2_B"));
  ScriptedBackend backend;
  backend.fails = [](const FileOp&, int) { return true; };
  FileOperationManager fom(reg, backend);
  std::vector<std::int64_t> dispatch_iterations;
  for (int i = 0; i < 30; ++i) {
    auto before = backend.submitted.size();
    fom.run_iteration(inv, i);
    if (backend.submitted.size() > before) dispatch_iterations.push_back(fom.iteration());
  }
  // Delays after failures 1..4 are 1, 2, 4, 8 iterations.
  EXPECT_EQ(dispatch_iterations, (std::vector<std::int64_t>{1, 3, 6, 11, 20}));
  auto req = reg.replica_op(id);
  EXPECT_EQ(req->state, OpState::kFailed);
  EXPECT_NE(req->reason.find("5 times"), std::string::npos);
}

TEST(Fom, UnreachableBackendLeavesRegistryUntouched) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/d", 1, 1, kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  reg.add_replica_op(copy("/d", "b0", "T2_B"));
  auto before = reg.to_json();
  ScriptedBackend backend;
  backend.up = false;
  FileOperationManager fom(reg, backend);
  auto res = fom.run_iteration(inv, 0);
  EXPECT_TRUE(res.aborted);
  EXPECT_TRUE(res.delta.empty());
  EXPECT_EQ(reg.to_json(), before);
  EXPECT_TRUE(backend.submitted.empty());
}

TEST(Fom, BadSourceAndNoSourceFail) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/d", 1, 1, kGB).dataset("/orphan", 1, 1, kGB);
  w.replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  auto r = copy("/d", "b0", "T2_B");
  r.source = "T2_B";
  auto bad = reg.add_replica_op(r);
  auto none = reg.add_replica_op(copy("/orphan", "b0", "T2_B"));
  ScriptedBackend backend;
  FileOperationManager fom(reg, backend);
  fom.run_iteration(inv, 0);
  EXPECT_EQ(reg.replica_op(bad)->state, OpState::kFailed);
  EXPECT_NE(reg.replica_op(bad)->reason.find("unknown source replica"), std::string::npos);
  EXPECT_EQ(reg.replica_op(none)->state, OpState::kFailed);
  EXPECT_EQ(reg.replica_op(none)->reason, "no source");
}

TEST(Fom, DuplicateReportsAreIdempotent) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/d", 1, 4, kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  reg.add_replica_op(copy("/d", "b0", "T2_B"));
  ScriptedBackend backend;
  backend.duplicate_reports = true;
  FileOperationManager fom(reg, backend);
  inv = drive(fom, inv, reg);
  EXPECT_EQ(inv.find_replica({"/d", "b0", "T2_B"})->size_on_site, 4 * kGB);
}

TEST(Fom, BatchesBoundedByFilesAndBytes) {
  WorldBuilder w;
  w.site("T2_A", 1000 * kTB).site("T2_B", 1000 * kTB).dataset("/many", 1, 250, kGB).dataset("/big", 1, 5, 300 * kGB);
  w.replica("/many", "T2_A").replica("/big", "T2_A");
  auto inv = w.build();
  Registry reg;
  reg.add_replica_op(copy("/many", "b0", "T2_B"));
  reg.add_replica_op(copy("/big", "b0", "T2_B"));
  ScriptedBackend backend;
  FileOperationManager fom(reg, backend);
  fom.run_iteration(inv, 0);
  std::vector<std::size_t> sizes;
  for (const auto& [_, b] : backend.submitted) {
    Bytes bytes = 0;
    for (const auto& f : b.files) bytes += f.size;
    EXPECT_LE(b.files.size(), 100u);
    EXPECT_LE(bytes, kTB);
    sizes.push_back(b.files.size());
  }
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  EXPECT_EQ(total, 255u);
  EXPECT_GE(sizes.size(), 4u);
}

// Random copies and deletes with 30% transfer failures. After every
// iteration each replica's size matches its present files, and a replica is
// complete exactly when every file is present. Every request terminates.
TEST(Fom, CompletenessInvariantUnderFailures) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto inv = testing::random_world(seed, 5, 15);
    std::mt19937_64 rng(seed);
    Registry reg;
    std::vector<std::string> sites;
    for (const auto& [name, _] : inv.sites()) sites.push_back(name);
    for (const auto& [name, d] : inv.datasets()) {
      for (const auto& [bname, b] : d.blocks) {
        auto dest = sites[rng() % sites.size()];
        if (rng() % 2) {
          if (!inv.find_replica({name, bname, dest})) reg.add_replica_op(copy(name, bname, dest));
        } else if (inv.find_replica({name, bname, dest}) && rng() % 3 == 0) {
          ReplicaOpRequest del;
          del.verb = OpVerb::kDelete;
          del.block = {name, bname};
          del.site = dest;
          reg.add_replica_op(del);
        }
      }
    }
    ASSERT_FALSE(reg.replica_ops().empty());
    Timestamp clock = 0;
    SimulatedBackend sim([&] { return clock; }, seed);
    for (const auto& [name, site] : inv.sites()) sim.add_endpoint(site.endpoint);
    sim.set_default_link({1e9, 2, 0.3});
    FileOperationManager fom(reg, sim);
    for (int i = 0; i < 200; ++i, clock += 600) {
      inv = apply_delta(inv, fom.run_iteration(inv, clock).delta);
      for (const auto& [key, br] : inv.block_replicas()) {
        const auto* block = inv.find_block(br.block_key());
        if (br.complete()) {
          ASSERT_EQ(br.size_on_site, block->size);
        } else {
          Bytes sum = 0;
          for (const auto& f : inv.file_catalog().files(br.block_key()))
            if (br.present_files->count(f.lfn)) sum += f.size;
          ASSERT_EQ(br.size_on_site, sum);
          ASSERT_LT(static_cast<std::int64_t>(br.present_files->size()), block->num_files);
        }
      }
    }
    for (const auto& r : reg.replica_ops()) {
      EXPECT_TRUE(r.state == OpState::kDone || r.state == OpState::kFailed) << r.id;
      if (r.verb == OpVerb::kCopy && r.state == OpState::kDone) {
        const auto* br = inv.find_replica({r.block.dataset, r.block.block, r.site});
        ASSERT_NE(br, nullptr);
        EXPECT_TRUE(br->complete());
      }
    }
  }
}

TEST(ChooseSource, PrefersReliableLinks) {
  WorldBuilder w;
  w.site("T2_A", kTB).site("T2_B", kTB).site("T2_C", kTB).dataset("/d", 1, 1, kGB);
  w.replica("/d", "T2_A");
  LinkQuality q;
  EXPECT_EQ(choose_source(w.build(), {"/d", "b0"}, "T2_C", q, 0), "T2_A");
  w.replica("/d", "T2_B");
  auto inv = w.build();
  Timestamp now = 10 * kDay;
  for (int i = 0; i < 20; ++i) q.record("T2_A", "T2_C", now - i * kHour, i >= 8);   // 8/20 fail
  for (int i = 0; i < 20; ++i) q.record("T2_B", "T2_C", now - i * kHour, i != 0);   // 1/20
  EXPECT_DOUBLE_EQ(q.failure_fraction("T2_B", "T2_C", now, 3 * kDay), 0.05);
  EXPECT_DOUBLE_EQ(q.failure_fraction("T2_A", "T2_C", now, 3 * kDay), 0.4);
  EXPECT_EQ(choose_source(inv, {"/d", "b0"}, "T2_C", q, now), "T2_B");
  WorldBuilder empty;
  empty.site("T2_C", kTB).dataset("/d", 1, 1, kGB);
  EXPECT_THROW(choose_source(empty.build(), {"/d", "b0"}, "T2_C", q, now), NoSource);
}

TEST(ChooseSource, MorgueOnlyAsFallback) {
  WorldBuilder w;
  w.site("T2_DEAD", kTB, StorageKind::kDisk, SiteStatus::kMorgue).site("T2_Z", kTB).site("T2_DST", kTB);
  w.dataset("/d", 1, 1, kGB).replica("/d", "T2_DEAD");
  LinkQuality q;
  EXPECT_EQ(choose_source(w.build(), {"/d", "b0"}, "T2_DST", q, 0), "T2_DEAD");
  w.replica("/d", "T2_Z");
  EXPECT_EQ(choose_source(w.build(), {"/d", "b0"}, "T2_DST", q, 0), "T2_Z");
}

TEST(LinkQuality, Arithmetic) {
  LinkQuality q;
  EXPECT_EQ(q.failure_fraction("a", "b", 100, kDay), 0.0);
  for (int i = 0; i < 10; ++i) q.record("a", "b", 50 + i, i >= 3);
  EXPECT_DOUBLE_EQ(q.failure_fraction("a", "b", 100, kDay), 0.3);
}

TEST(LinkQuality, HorizonMatchesRecount) {
  std::mt19937_64 rng(4);
  LinkQuality q;
  std::vector<std::pair<Timestamp, bool>> flat;
  for (int i = 0; i < 500; ++i) {
    Timestamp t = std::uniform_int_distribution<Timestamp>(0, 10 * kDay)(rng);
    bool ok = rng() % 3 != 0;
    q.record("a", "b", t, ok);
    flat.emplace_back(t, ok);
  }
  for (Timestamp now : {3 * kDay, 5 * kDay + 7, 10 * kDay}) {
    int att = 0, fail = 0;
    for (const auto& [t, ok] : flat) {
      if (t > now - 3 * kDay && t <= now) {
        ++att;
        if (!ok) ++fail;
      }
    }
    EXPECT_DOUBLE_EQ(q.failure_fraction("a", "b", now, 3 * kDay), static_cast<double>(fail) / att);
  }
  q.prune(5 * kDay);
  EXPECT_EQ(q.attempts("a", "b", 5 * kDay, 10 * kDay), 0u);
}

FileOpBatch batch_of(int n, Bytes size, const std::string& src = "root://a", const std::string& dst = "root://b") {
  FileOpBatch b;
  for (int i = 0; i < n; ++i) {
    FileOp op;
    op.lfn = "/f" + std::to_string(i);
    op.size = size;
    op.source_endpoint = src;
    op.destination_endpoint = dst;
    b.files.push_back(op);
  }
  return b;
}

TEST(SimulatedBackend, TransferTimeFromBandwidth) {
  Timestamp clock = 0;
  SimulatedBackend sim([&] { return clock; }, 1);
  sim.add_endpoint("root://a");
  sim.add_endpoint("root://b");
  sim.set_default_link({1e9, 0, 0});
  auto id = sim.submit(batch_of(1, 10 * kGB));
  clock = 9;
  EXPECT_EQ(sim.poll(id)[0].state, FileOpState::kPending);
  clock = 10;
  auto o = sim.poll(id)[0];
  EXPECT_EQ(o.state, FileOpState::kSuccess);
  EXPECT_EQ(o.time, 10);
}

TEST(SimulatedBackend, CertainFailureAndUnknownEndpoint) {
  Timestamp clock = 0;
  SimulatedBackend sim([&] { return clock; }, 1);
  sim.add_endpoint("root://a");
  sim.add_endpoint("root://b");
  sim.set_default_link({1e9, 0, 1.0});
  auto id = sim.submit(batch_of(20, kGB));
  clock = 1000;
  for (const auto& o : sim.poll(id)) EXPECT_EQ(o.state, FileOpState::kFailure);
  auto lost = sim.submit(batch_of(3, kGB, "root://nowhere"));
  clock = 1000;
  for (const auto& o : sim.poll(lost)) {
    EXPECT_EQ(o.state, FileOpState::kFailure);
    EXPECT_EQ(o.reason, "unknown endpoint");
  }
}

int failures(std::uint64_t seed) {
  Timestamp clock = 0;
  SimulatedBackend sim([&] { return clock; }, seed);
  sim.add_endpoint("root://a");
  sim.add_endpoint("root://b");
  sim.set_default_link({1e9, 1, 0.2});
  auto id = sim.submit(batch_of(100, kGB));
  clock = 1000;
  int n = 0;
  for (const auto& o : sim.poll(id)) n += o.state == FileOpState::kFailure;
  return n;
}

TEST(SimulatedBackend, FailureCountsAreSeededAndBinomial) {
  EXPECT_EQ(failures(7), failures(7));
  const int seeds = 400;
  double sum = 0;
  for (int s = 0; s < seeds; ++s) sum += failures(s);
  double mean = sum / seeds;
  double sigma = std::sqrt(100 * 0.2 * 0.8 / seeds);
  EXPECT_NEAR(mean, 20.0, 3 * sigma);
}

TEST(SimulatedBackend, LinkIsFifo) {
  Timestamp clock = 0;
  SimulatedBackend sim([&] { return clock; }, 1);
  sim.add_endpoint("root://a");
  sim.add_endpoint("root://b");
  sim.set_default_link({1e9, 0, 0});
  sim.submit(batch_of(10, 10 * kGB));
  EXPECT_DOUBLE_EQ(sim.link_busy_until("root://a", "root://b"), 100.0);
  // Completions are counted whole, so compare cumulative volume.
  for (double t = 1; t <= 120; t += 1) EXPECT_LE(sim.delivered_between(0, t + 1e-9), static_cast<Bytes>(1e9 * t));
  EXPECT_EQ(sim.delivered_between(0, 101), 100 * kGB);
}

}  // namespace
}  // namespace stowage::fom
