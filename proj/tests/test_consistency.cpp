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
#include <ctime>
#include <fstream>

#include "consistency_oracle.hpp"
#include "stowage/consistency.hpp"

namespace stowage::consistency {
namespace {

using testing::ConsistencyCase;
using testing::WorldBuilder;

constexpr Timestamp kNow = 50 * kDay;

// Site T2_A expects /d/b0/f{0,1,2}.root.
ConsistencyCase abc_case() {
  WorldBuilder w;
  w.site("T2_A", kTB).dataset("/d", 1, 3, kGB).replica("/d", "T2_A");
  ConsistencyCase c;
  c.inventory = w.build();
  c.config.root = "/store";
  c.now = kNow;
  c.listing.site = "T2_A";
  return c;
}

ListingEntry entry(const std::string& lfn, Timestamp mtime = 0, Bytes size = kGB) {
  return {"/store" + lfn, size, mtime};
}

Report run(const ConsistencyCase& c) { return check_site(c.inventory, c.listing, c.pending, c.config, c.now); }

TEST(Consistency, ExactListingIsClean) {
  auto c = abc_case();
  for (int i = 0; i < 3; ++i) c.listing.entries.push_back(entry("/d/b0/f" + std::to_string(i) + ".root"));
  auto r = run(c);
  EXPECT_TRUE(r.clean());
  EXPECT_EQ(r.expected, 3);
  EXPECT_EQ(r.listed, 3);
  EXPECT_EQ(r.excluded_grace + r.excluded_pattern + r.excluded_pending, 0);
}

TEST(Consistency, MissingAndOrphan) {
  auto c = abc_case();
  c.listing.entries = {entry("/d/b0/f0.root"), entry("/d/b0/f2.root"), entry("/stray/d.root")};
  auto r = run(c);
  EXPECT_EQ(r.missing, std::vector<std::string>{"/d/b0/f1.root"});
  EXPECT_EQ(r.orphans, std::vector<std::string>{"/store/stray/d.root"});
}

TEST(Consistency, RecentFileIsNotOrphan) {
  auto c = abc_case();
  c.listing.entries = {entry("/d/b0/f0.root"), entry("/d/b0/f2.root"), entry("/stray/d.root", kNow)};
  auto r = run(c);
  EXPECT_EQ(r.missing, std::vector<std::string>{"/d/b0/f1.root"});
  EXPECT_TRUE(r.orphans.empty());
  EXPECT_EQ(r.excluded_grace, 1);
  // Just outside the default 24 h grace period.
  c.listing.entries.back().mtime = kNow - kDay;
  EXPECT_EQ(run(c).orphans.size(), 1u);
}

TEST(Consistency, PendingOperationsAreExcluded) {
  auto c = abc_case();
  c.listing.entries = {entry("/d/b0/f0.root"), entry("/new/x.root")};
  c.pending.deletions = {"/d/b0/f1.root"};
  c.pending.transfers = {"/new/x.root"};
  auto r = run(c);
  EXPECT_EQ(r.missing, std::vector<std::string>{"/d/b0/f2.root"});
  EXPECT_TRUE(r.orphans.empty());
  EXPECT_EQ(r.excluded_pending, 2);
}

TEST(Consistency, PatternsAndUnmapped) {
  auto c = abc_case();
  c.listing.entries = {entry("/tmp/scratch"), {"/other/ns/file", 1, 0}};
  c.config.exclude_patterns = {"/store/tmp/*", "*/f1.root"};
  auto r = run(c);
  EXPECT_EQ(r.missing, (std::vector<std::string>{"/d/b0/f0.root", "/d/b0/f2.root"}));
  EXPECT_TRUE(r.orphans.empty());
  EXPECT_EQ(r.excluded_pattern, 2);
  EXPECT_EQ(r.unmapped, std::vector<std::string>{"/other/ns/file"});
}

TEST(Consistency, SizeMismatchIsMissingAndOrphan) {
  auto c = abc_case();
  c.listing.entries = {entry("/d/b0/f0.root"), entry("/d/b0/f1.root", 0, 5), entry("/d/b0/f2.root")};
  auto r = run(c);
  EXPECT_EQ(r.missing, std::vector<std::string>{"/d/b0/f1.root"});
  EXPECT_EQ(r.orphans, std::vector<std::string>{"/store/d/b0/f1.root"});
  EXPECT_EQ(r.size_mismatch, 1);
}

TEST(Consistency, IncompleteReplicaExpectsOnlyPresentFiles) {
  auto c = abc_case();
  auto br = *c.inventory.find_replica({"/d", "b0", "T2_A"});
  br.present_files = std::set<std::string>{"/d/b0/f1.root"};
  c.inventory.put_replica(br);
  auto r = run(c);
  EXPECT_EQ(r.missing, std::vector<std::string>{"/d/b0/f1.root"});
  EXPECT_EQ(r.expected, 1);
}

TEST(Consistency, PendingOpsFromRegistry) {
  WorldBuilder w;
  w.site("T2_A", kTB).site("T2_B", kTB).dataset("/d", 2, 2, kGB).replica("/d", "T2_A");
  auto inv = w.build();
  Registry reg;
  ReplicaOpRequest del;
  del.verb = OpVerb::kDelete;
  del.block = {"/d", "b0"};
  del.site = "T2_A";
  reg.add_replica_op(del);
  ReplicaOpRequest cp;
  cp.verb = OpVerb::kCopy;
  cp.block = {"/d", "b1"};
  cp.site = "T2_A";
  cp.state = OpState::kInProgress;
  reg.add_replica_op(cp);
  cp.site = "T2_B";
  cp.state = OpState::kDone;
  reg.add_replica_op(cp);
  auto p = pending_ops(inv, reg, "T2_A");
  EXPECT_EQ(p.deletions, (std::set<std::string>{"/d/b0/f0.root", "/d/b0/f1.root"}));
  EXPECT_EQ(p.transfers, (std::set<std::string>{"/d/b1/f0.root", "/d/b1/f1.root"}));
  EXPECT_TRUE(pending_ops(inv, reg, "T2_B").transfers.empty());
}

TEST(Consistency, MatchesOracle) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto c = testing::random_consistency_case(seed);
    auto r = run(c);
    auto o = testing::oracle_check(c);
    EXPECT_EQ(std::set<std::string>(r.missing.begin(), r.missing.end()), o.missing) << seed;
    EXPECT_EQ(std::set<std::string>(r.orphans.begin(), r.orphans.end()), o.orphans) << seed;
    EXPECT_EQ(std::set<std::string>(r.unmapped.begin(), r.unmapped.end()), o.unmapped) << seed;
    EXPECT_EQ(r.excluded_pattern, o.pattern) << seed;
    EXPECT_EQ(r.excluded_pending, o.pending) << seed;
    EXPECT_EQ(r.excluded_grace, o.grace) << seed;
  }
}

TEST(Consistency, NoExclusionsIsPlainSetDifference) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto c = testing::random_consistency_case(seed);
    c.config.exclude_patterns.clear();
    c.config.grace = 0;
    c.pending = {};
    for (auto& e : c.listing.entries) e.mtime = 0;
    std::set<std::string> expected, listed;
    for (const auto* br : c.inventory.replicas_at(c.listing.site)) {
      for (const auto& f : c.inventory.file_catalog().files(br->block_key())) {
        if (br->complete() || br->present_files->count(f.lfn)) expected.insert(c.config.root + f.lfn + "|" + std::to_string(f.size));
      }
    }
    for (const auto& e : c.listing.entries) {
      if (e.path.rfind(c.config.root, 0) == 0) listed.insert(e.path + "|" + std::to_string(e.size));
    }
    std::set<std::string> want_missing, want_orphans;
    for (const auto& x : expected) {
      if (!listed.count(x)) want_missing.insert(x.substr(c.config.root.size(), x.rfind('|') - c.config.root.size()));
    }
    for (const auto& x : listed) {
      if (!expected.count(x)) want_orphans.insert(x.substr(0, x.rfind('|')));
    }
    auto r = run(c);
    EXPECT_EQ(std::set<std::string>(r.missing.begin(), r.missing.end()), want_missing);
    EXPECT_EQ(std::set<std::string>(r.orphans.begin(), r.orphans.end()), want_orphans);
  }
}

TEST(Consistency, ExclusionsAreMonotone) {
  const std::vector<std::string> extra = {"*/b0/*", "*/sim/*", "*.root", "*junk*"};
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto c = testing::random_consistency_case(seed);
    auto base = run(c);
    for (const auto& p : extra) {
      auto more = c;
      more.config.exclude_patterns.push_back(p);
      auto r = run(more);
      EXPECT_LE(r.missing.size(), base.missing.size());
      EXPECT_LE(r.orphans.size(), base.orphans.size());
    }
  }
}

TEST(Consistency, RecheckIsIdempotent) {
  auto c = testing::random_consistency_case(9);
  auto a = to_json(run(c));
  auto b = to_json(run(c));
  a.erase("duration_s");
  b.erase("duration_s");
  EXPECT_EQ(a, b);
}

TEST(Consistency, PartialListingRefused) {
  auto c = abc_case();
  c.listing.partial = true;
  EXPECT_THROW(run(c), PartialListing);
  c.config.allow_partial = true;
  EXPECT_TRUE(run(c).partial);
}

TEST(Consistency, JsonRoundTripAndCsv) {
  auto c = testing::random_consistency_case(3);
  auto r = run(c);
  auto back = report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  auto row = summary_csv_row(r);
  auto header = summary_csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
}

class LocalLister : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("stowage_lister_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  void write(const std::string& rel, std::size_t size) {
    auto p = dir_ / rel;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p) << std::string(size, 'x');
  }

  std::filesystem::path dir_;
};

TEST_F(LocalLister, EmptyDirectory) {
  auto l = local_lister(dir_.string(), "T2_A");
  EXPECT_TRUE(l.entries.empty());
  EXPECT_FALSE(l.partial);
}

TEST_F(LocalLister, SizesAndOrder) {
  write("b/2", 20);
  write("a/1", 10);
  write("a/x/3", 30);
  write("c", 0);
  write("b/4", 40);
  auto l = local_lister(dir_.string());
  ASSERT_EQ(l.entries.size(), 5u);
  EXPECT_TRUE(std::is_sorted(l.entries.begin(), l.entries.end(),
                             [](const auto& a, const auto& b) { return a.path < b.path; }));
  std::map<std::string, Bytes> sizes;
  for (const auto& e : l.entries) sizes[e.path.substr(dir_.string().size())] = e.size;
  EXPECT_EQ(sizes, (std::map<std::string, Bytes>{{"/a/1", 10}, {"/a/x/3", 30}, {"/b/2", 20}, {"/b/4", 40}, {"/c", 0}}));
}

TEST_F(LocalLister, LargeTreeMatchesManifest) {
  std::mt19937_64 rng(5);
  std::map<std::string, Bytes> manifest;
  for (int i = 0; i < 10000; ++i) {
    std::string rel = "/d" + std::to_string(rng() % 20) + "/e" + std::to_string(rng() % 10) + "/f" + std::to_string(i);
    Bytes size = static_cast<Bytes>(rng() % 64);
    write(rel.substr(1), static_cast<std::size_t>(size));
    manifest[dir_.string() + rel] = size;
  }
  auto l = local_lister(dir_.string());
  std::map<std::string, Bytes> got;
  for (const auto& e : l.entries) got[e.path] = e.size;
  EXPECT_EQ(got, manifest);
}

TEST_F(LocalLister, MissingRootIsPartial) {
  auto l = local_lister((dir_ / "nope").string(), "T2_A");
  EXPECT_TRUE(l.partial);
  EXPECT_FALSE(l.errors.empty());
}

TEST_F(LocalLister, EndToEndWithCheck) {
  WorldBuilder w;
  w.site("T2_A", kTB).dataset("/d", 1, 3, 4).replica("/d", "T2_A");
  auto inv = w.build();
  write("d/b0/f0.root", 4);
  write("d/b0/f2.root", 4);
  write("junk", 1);
  Timestamp now = std::time(nullptr);
  auto listing = local_lister(dir_.string(), "T2_A", now);
  Config cfg;
  cfg.root = dir_.string();
  EXPECT_TRUE(check_site(inv, listing, {}, cfg, now).orphans.empty());
  auto r = check_site(inv, listing, {}, cfg, now + 2 * kDay);
  EXPECT_EQ(r.missing, std::vector<std::string>{"/d/b0/f1.root"});
  EXPECT_EQ(r.orphans, std::vector<std::string>{(dir_ / "junk").string()});
}

}  // namespace
}  // namespace stowage::consistency
