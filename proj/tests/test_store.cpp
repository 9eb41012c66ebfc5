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

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "stowage/store.hpp"

namespace stowage {
namespace {

using testing::random_delta;
using testing::random_world;

class StoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("stowage_store_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  // Seeds the store with a world and returns the seed delta.
  void seed(InventoryStore& store, std::uint64_t s = 1) {
    InventoryDelta d;
    auto world = random_world(s, 3, 6);
    std::istringstream in(canonical_snapshot(world));
    // Loading the world as one delta keeps every record in the log.
    std::string line;
    while (std::getline(in, line)) d.update(parse_record(line));
    store.commit(d);
  }

  std::filesystem::path dir_;
};

TEST_F(StoreTest, ReopenReplaysLog) {
  std::string expected;
  std::uint64_t version = 0;
  {
    InventoryStore store(dir_);
    seed(store);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) store.commit(random_delta(*store.image(), rng));
    expected = canonical_snapshot(*store.image());
    version = store.version();
  }
  InventoryStore reopened(dir_);
  EXPECT_EQ(reopened.version(), version);
  EXPECT_EQ(canonical_snapshot(*reopened.image()), expected);
  EXPECT_EQ(reopened.log_records(), 21u);
}

TEST_F(StoreTest, EmptyDeltaBumpsVersion) {
  InventoryStore store(dir_);
  seed(store);
  auto before = canonical_snapshot(*store.image());
  EXPECT_EQ(store.commit({}), 2u);
  EXPECT_EQ(canonical_snapshot(*store.image()), before);
}

TEST_F(StoreTest, BadDeltaLeavesStoreUnchanged) {
  InventoryStore store(dir_);
  seed(store);
  auto before = canonical_snapshot(*store.image());
  auto size = std::filesystem::file_size(dir_ / "deltas.log");
  InventoryDelta bad;
  BlockReplica r;
  r.dataset = "/nope";
  r.block = "b0";
  r.site = "T2_S0";
  r.group = "analysis";
  bad.update(to_record(r));
  EXPECT_THROW(store.commit(bad), DeltaError);
  EXPECT_EQ(store.version(), 1u);
  EXPECT_EQ(canonical_snapshot(*store.image()), before);
  EXPECT_EQ(std::filesystem::file_size(dir_ / "deltas.log"), size);
}

TEST_F(StoreTest, OldImageIsUnaffectedByCommit) {
  InventoryStore store(dir_);
  seed(store);
  auto held = store.image();
  Inventory copy = *held;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) store.commit(random_delta(*store.image(), rng));
  // File records live in the shared catalog, outside the image.
  EXPECT_EQ(held->sites(), copy.sites());
  EXPECT_EQ(held->datasets(), copy.datasets());
  EXPECT_EQ(held->block_replicas(), copy.block_replicas());
  EXPECT_NE(store.image(), held);
}

TEST_F(StoreTest, TornTailIsCut) {
  {
    InventoryStore store(dir_);
    seed(store);
  }
  auto good = std::filesystem::file_size(dir_ / "deltas.log");
  {
    std::ofstream out(dir_ / "deltas.log", std::ios::app);
    out << "DELTA 2 500 deadbeef\nU SITE\tname=half";
  }
  InventoryStore store(dir_);
  EXPECT_EQ(store.version(), 1u);
  EXPECT_GT(store.recovered_truncated_bytes(), 0u);
  EXPECT_EQ(std::filesystem::file_size(dir_ / "deltas.log"), good);
  std::mt19937_64 rng(3);
  store.commit(random_delta(*store.image(), rng));
  InventoryStore again(dir_);
  EXPECT_EQ(again.version(), 2u);
}

TEST_F(StoreTest, CorruptRecordStopsReplay) {
  {
    InventoryStore store(dir_);
    seed(store);
    store.commit({});
  }
  // Flip a payload byte in the second record.
  std::string data;
  {
    std::ifstream in(dir_ / "deltas.log", std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto second = data.find("DELTA 2");
  ASSERT_NE(second, std::string::npos);
  data[data.size() - 2] ^= 1;
  {
    std::ofstream out(dir_ / "deltas.log", std::ios::binary | std::ios::trunc);
    out << data;
  }
  InventoryStore store(dir_);
  EXPECT_EQ(store.version(), 1u);
}

TEST_F(StoreTest, CompactionPreservesImage) {
  InventoryStore store(dir_);
  seed(store);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) store.commit(random_delta(*store.image(), rng));
  store.compact();
  EXPECT_EQ(store.log_records(), 0u);
  for (int i = 0; i < 3; ++i) store.commit(random_delta(*store.image(), rng));
  auto expected = canonical_snapshot(*store.image());
  InventoryStore reopened(dir_);
  EXPECT_EQ(reopened.version(), 9u);
  EXPECT_EQ(reopened.log_records(), 3u);
  EXPECT_EQ(canonical_snapshot(*reopened.image()), expected);
}

TEST_F(StoreTest, AutomaticCompaction) {
  InventoryStore store(dir_);
  store.set_compact_every(4);
  seed(store);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) store.commit(random_delta(*store.image(), rng));
  EXPECT_LT(store.log_records(), 4u);
  auto expected = canonical_snapshot(*store.image());
  InventoryStore reopened(dir_);
  EXPECT_EQ(canonical_snapshot(*reopened.image()), expected);
  int snapshots = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    snapshots += e.path().extension() == ".tsv";
  }
  EXPECT_EQ(snapshots, 1);
}

// Crash at each point; the recovered image is the last durable commit.
TEST_F(StoreTest, CrashPointsRecoverLastDurableCommit) {
  using CP = InventoryStore::CrashPoint;
  struct Case {
    CP point;
    bool compaction;
    bool durable;  // whether the interrupted commit survives
  };
  const Case cases[] = {
      {CP::kBeforeAppend, false, false}, {CP::kTornAppend, false, false},
      {CP::kAfterAppend, false, true},   {CP::kAfterPublish, false, true},
      {CP::kCompactAfterSnapshot, true, true}, {CP::kCompactAfterMeta, true, true},
  };
  for (const auto& c : cases) {
    std::filesystem::remove_all(dir_);
    std::string acked, pending;
    {
      InventoryStore store(dir_);
      seed(store);
      std::mt19937_64 rng(6);
      store.commit(random_delta(*store.image(), rng));
      acked = canonical_snapshot(*store.image());
      auto d = random_delta(*store.image(), rng);
      pending = canonical_snapshot(apply_delta(*store.image(), d));
      if (c.compaction) {
        store.commit(d);
        acked = pending;
        store.set_crash_point(c.point);
        EXPECT_THROW(store.compact(), InventoryStore::SimulatedCrash);
      } else {
        store.set_crash_point(c.point);
        EXPECT_THROW(store.commit(d), InventoryStore::SimulatedCrash);
      }
    }
    InventoryStore recovered(dir_);
    EXPECT_EQ(canonical_snapshot(*recovered.image()), c.durable ? pending : acked)
        << static_cast<int>(c.point);
  }
}

TEST_F(StoreTest, ResetWritesSnapshot) {
  auto world = random_world(8, 3, 5);
  {
    InventoryStore store(dir_);
    seed(store);
    store.reset(world, 42);
  }
  InventoryStore reopened(dir_);
  EXPECT_EQ(reopened.version(), 42u);
  EXPECT_EQ(canonical_snapshot(*reopened.image()), canonical_snapshot(world));
}

TEST(MemoryStore, CommitsWithoutDirectory) {
  InventoryStore store;
  std::mt19937_64 rng(9);
  InventoryDelta d;
  Site s;
  s.name = "T2_X";
  d.update(to_record(s));
  EXPECT_EQ(store.commit(d), 1u);
  EXPECT_NE(store.image()->find_site("T2_X"), nullptr);
}

}  // namespace
}  // namespace stowage
