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
#include "stowage/dealer.hpp"
#include "stowage/occupancy.hpp"

namespace stowage::dealer {
namespace {

using testing::WorldBuilder;

class StaticPlugin : public Plugin {
 public:
  StaticPlugin(std::string name, std::vector<Proposal> props) : name_(std::move(name)), props_(std::move(props)) {}
  std::string name() const override { return name_; }
  std::vector<Proposal> propose(const Context&) override { return props_; }

 private:
  std::string name_;
  std::vector<Proposal> props_;
};

class BrokenPlugin : public Plugin {
 public:
  std::string name() const override { return "broken"; }
  std::vector<Proposal> propose(const Context&) override { throw Error("backend down"); }
};

Proposal prop(const std::string& ds, double weight = 1) {
  Proposal p;
  p.dataset = ds;
  p.weight = weight;
  return p;
}

TEST(Dealer, CapBoundsSelectedVolume) {
  WorldBuilder w;
  w.site("T2_A", 1000 * kTB).site("T2_B", 1000 * kTB);
  w.dataset("/a", 1, 120, kTB).dataset("/b", 1, 90, kTB).dataset("/c", 1, 60, kTB);
  auto inv = w.build();
  Registry reg;
  StaticPlugin pl("p", {prop("/a"), prop("/b"), prop("/c")});
  Context ctx{&inv, &reg};
  Config cfg;
  std::set<std::string> outcomes;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed), rng2(seed);
    auto r = run_cycle(ctx, {&pl}, cfg, rng);
    auto again = run_cycle(ctx, {&pl}, cfg, rng2);
    EXPECT_LE(r.report.selected_volume, 200 * kTB);
    EXPECT_EQ(to_json(r.report).dump(), to_json(again.report).dump());
    std::string picked;
    for (const auto& s : r.report.selected) picked += s.proposal.dataset;
    outcomes.insert(picked);
  }
  EXPECT_GT(outcomes.size(), 1u);
}

TEST(Dealer, NoProposals) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/a", 1, 3, kTB).replica("/a", "T2_A");
  auto inv = w.build();
  Registry reg;
  ReplicaOpRequest op;
  op.block = {"/a", "b0"};
  op.site = "T2_B";
  reg.add_replica_op(op);
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv, &reg}, {}, Config{}, rng);
  EXPECT_TRUE(r.report.selected.empty());
  EXPECT_EQ(r.report.pending_volume, 3 * kTB);
}

TEST(Dealer, PluginFailureContributesNothing) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).dataset("/a", 1, 1, kTB);
  auto inv = w.build();
  BrokenPlugin broken;
  StaticPlugin ok("ok", {prop("/a")});
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv}, {&broken, &ok}, Config{}, rng);
  EXPECT_EQ(r.report.plugin_errors.at("broken"), "backend down");
  EXPECT_EQ(r.report.selected.size(), 1u);
}

TEST(Dealer, PriorityWeightedFirstDraw) {
  WorldBuilder w;
  w.site("T2_A", 1000 * kTB).dataset("/a", 1, 1, kTB).dataset("/b", 1, 1, kTB);
  auto inv = w.build();
  StaticPlugin a("A", {prop("/a")});
  StaticPlugin b("B", {prop("/b")});
  Config cfg;
  cfg.priorities = {{"A", 2}, {"B", 1}};
  int a_first = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(t);
    auto r = run_cycle({&inv}, {&a, &b}, cfg, rng);
    if (r.report.selected.front().proposal.plugin == "A") ++a_first;
  }
  EXPECT_NEAR(static_cast<double>(a_first) / trials, 2.0 / 3.0, 0.05);
}

TEST(Dealer, ThrottleSuppressesSelection) {
  WorldBuilder w;
  w.site("T2_A", 1000 * kTB).site("T2_B", 1000 * kTB).dataset("/big", 1, 10, kTB).dataset("/a", 1, 1, kTB);
  w.replica("/big", "T2_A");
  auto inv = w.build();
  Registry reg;
  ReplicaOpRequest op;
  op.block = {"/big", "b0"};
  op.site = "T2_B";
  reg.add_replica_op(op);
  StaticPlugin pl("p", {prop("/a")});
  Config cfg;
  cfg.throttle = 9 * kTB;
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv, &reg}, {&pl}, cfg, rng);
  EXPECT_TRUE(r.report.throttled);
  EXPECT_TRUE(r.report.selected.empty());
  cfg.throttle = 10 * kTB;
  r = run_cycle({&inv, &reg}, {&pl}, cfg, rng);
  EXPECT_FALSE(r.report.throttled);
  EXPECT_EQ(r.report.selected.size(), 1u);
}

TEST(Dealer, FloatingDestinationLowestOccupancy) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).site("T2_C", 100 * kTB);
  w.site("T1_TAPE", 1000 * kTB, StorageKind::kTape);
  w.site("T2_M", 1000 * kTB, StorageKind::kDisk, SiteStatus::kMorgue);
  w.dataset("/fill", 1, 50, kTB).replica("/fill", "T2_A").dataset("/x", 1, 1, kTB).replica("/x", "T2_C");
  w.dataset("/y", 1, 2, kTB);
  auto inv = w.build();
  StaticPlugin pl("p", {prop("/x")});
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv}, {&pl}, Config{}, rng);
  ASSERT_EQ(r.report.selected.size(), 1u);
  EXPECT_EQ(r.report.selected[0].destination, "T2_B");
  // Tie between empty sites breaks by name.
  StaticPlugin two("p", {prop("/y")});
  r = run_cycle({&inv}, {&two}, Config{}, rng);
  EXPECT_EQ(r.report.selected[0].destination, "T2_B");
}

TEST(Dealer, TargetOccupancyExcludesFullSites) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).dataset("/fill", 1, 90, kTB).replica("/fill", "T2_A").dataset("/x", 1, 1, kTB);
  auto inv = w.build();
  StaticPlugin pl("p", {prop("/x")});
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv}, {&pl}, Config{}, rng);
  EXPECT_TRUE(r.report.selected.empty());
  EXPECT_EQ(r.report.rejected.at(0).reason, "no eligible destination");
}

TEST(Dealer, BlockRequestsCoverMissingBlocksOnly) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).dataset("/x", 3, 1, kTB).block_replica("/x", "b1", "T2_B");
  auto inv = w.build();
  Proposal p = prop("/x");
  p.destination = "T2_B";
  StaticPlugin pl("p", {p});
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv}, {&pl}, Config{}, rng);
  ASSERT_EQ(r.requests.size(), 2u);
  EXPECT_EQ(r.requests[0].block.block, "b0");
  EXPECT_EQ(r.requests[1].block.block, "b2");
  EXPECT_EQ(r.report.selected_volume, 2 * kTB);
}

TEST(Popularity, ThresholdAndWeights) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB).site("T2_C", 100 * kTB).site("T2_D", 100 * kTB);
  w.dataset("/one", 1, 1, kTB).replica("/one", "T2_A");
  w.dataset("/four", 1, 1, kTB);
  for (const char* s : {"T2_A", "T2_B", "T2_C", "T2_D"}) w.replica("/four", s);
  w.dataset("/cold", 1, 1, kTB).replica("/cold", "T2_A");
  w.dataset("/small", 1, 1, kTB).replica("/small", "T2_B");
  w.dataset("/large", 1, 10, kTB).replica("/large", "T2_B");
  auto inv = w.build();
  AccessLog log;
  Timestamp now = 30 * kDay;
  log.add({"/one", now - kDay, 100});
  log.add({"/four", now - kDay, 100});
  log.add({"/small", now - kDay, 200});
  log.add({"/large", now - kDay, 200});
  log.add({"/cold", now - 20 * kDay, 1000});
  PopularityPlugin plugin(50);
  auto props = plugin.propose({&inv, nullptr, &log, now});
  std::map<std::string, double> weights;
  for (const auto& p : props) weights[p.dataset] = p.weight;
  EXPECT_EQ(weights.count("/one"), 1u);
  EXPECT_EQ(weights.count("/four"), 0u);
  EXPECT_EQ(weights.count("/cold"), 0u);
  EXPECT_DOUBLE_EQ(weights.at("/small") / weights.at("/large"), 10.0);
}

detox::CycleReport protected_report(const std::string& site, Bytes quota, Bytes protected_volume) {
  detox::CycleReport r;
  detox::SiteReport s;
  s.site = site;
  s.quota = quota;
  s.protected_volume = protected_volume;
  r.sites.push_back(s);
  return r;
}

TEST(Balancer, LastCopiesAtProtectedSites) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).site("T2_B", 100 * kTB);
  w.dataset("/twice", 1, 1, kTB).replica("/twice", "T2_A").replica("/twice", "T2_B");
  w.dataset("/once", 1, 1, kTB).replica("/once", "T2_A");
  auto inv = w.build();
  BalancerPlugin plugin(0.7);
  auto report = protected_report("T2_A", 100 * kTB, 80 * kTB);
  auto props = plugin.propose({&inv, nullptr, nullptr, 0, &report});
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].dataset, "/once");
  EXPECT_FALSE(props[0].destination);
  auto calm = protected_report("T2_A", 100 * kTB, 60 * kTB);
  EXPECT_TRUE(plugin.propose({&inv, nullptr, nullptr, 0, &calm}).empty());
  Inventory empty;
  EXPECT_TRUE(plugin.propose({&empty, nullptr, nullptr, 0, &report}).empty());
}

TEST(Enforcer, CountsCopiesOnMatchingSites) {
  WorldBuilder w;
  w.site("T2_DE_A", 100 * kTB).site("T2_DE_B", 100 * kTB).site("T2_US_A", 100 * kTB);
  w.dataset("/both", 1, 1, kTB).replica("/both", "T2_DE_A").replica("/both", "T2_DE_B");
  w.dataset("/one", 1, 1, kTB).replica("/one", "T2_DE_A").replica("/one", "T2_US_A");
  auto inv = w.build();
  EnforcerPlugin plugin("Require 2 On site.name in [T2_DE_*] For dataset.name in [*]\n");
  EXPECT_TRUE(plugin.errors().empty());
  auto props = plugin.propose({&inv});
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].dataset, "/one");
  EXPECT_EQ(props[0].allowed, std::vector<std::string>{"T2_DE_B"});
  EXPECT_TRUE(props[0].enforced);
  std::mt19937_64 rng(1);
  auto r = run_cycle({&inv}, {&plugin}, Config{}, rng);
  ASSERT_EQ(r.requests.size(), 1u);
  EXPECT_EQ(r.requests[0].site, "T2_DE_B");
  EXPECT_TRUE(r.requests[0].enforced);
}

TEST(Enforcer, ZeroCountAndBadRules) {
  WorldBuilder w;
  w.site("T2_DE_A", 100 * kTB).dataset("/d", 1, 1, kTB);
  auto inv = w.build();
  EnforcerPlugin plugin(
      "# comment\n"
      "Require 0 On site.name in [*] For dataset.name in [*]\n"
      "Require 2 On site.bogus == 1 For dataset.name in [*]\n"
      "Demand 2 things\n");
  EXPECT_EQ(plugin.rules().size(), 1u);
  EXPECT_EQ(plugin.errors().size(), 2u);
  EXPECT_TRUE(plugin.propose({&inv}).empty());
}

TEST(Undertaker, UniqueReplicasAtMorgueSites) {
  WorldBuilder w;
  w.site("T2_OK", 100 * kTB).site("T2_DEAD", 100 * kTB, StorageKind::kDisk, SiteStatus::kMorgue);
  w.dataset("/only", 1, 1, kTB).replica("/only", "T2_DEAD");
  w.dataset("/safe", 1, 1, kTB).replica("/safe", "T2_DEAD").replica("/safe", "T2_OK");
  auto inv = w.build();
  UndertakerPlugin plugin;
  auto props = plugin.propose({&inv});
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].dataset, "/only");

  WorldBuilder calm;
  calm.site("T2_OK", 100 * kTB).dataset("/d", 1, 1, kTB).replica("/d", "T2_OK");
  auto inv2 = calm.build();
  EXPECT_TRUE(plugin.propose({&inv2}).empty());
}

TEST(Requests, FixedDestinationAndFailures) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).dataset("/d", 1, 1, kTB);
  auto inv = w.build();
  Registry reg;
  UserRequest good{0, UserRequestKind::kCopy, "/d", "T2_A"};
  UserRequest bad{0, UserRequestKind::kCopy, "/nope", "T2_A"};
  reg.add_user_request(good);
  auto bad_id = reg.add_user_request(bad);
  RequestPlugin plugin;
  auto props = plugin.propose({&inv, &reg});
  ASSERT_EQ(props.size(), 1u);
  EXPECT_EQ(props[0].destination, "T2_A");
  EXPECT_EQ(props[0].weight, RequestPlugin::kWeight);
  for (const auto& r : reg.user_requests()) {
    if (r.id == bad_id) {
      EXPECT_EQ(r.state, UserRequestState::kFailed);
      EXPECT_NE(r.reason.find("unknown dataset"), std::string::npos);
    }
  }
}

TEST(Requests, UnselectedStayPendingUntilNextCycle) {
  WorldBuilder w;
  w.site("T2_A", 10000 * kTB);
  Registry reg;
  for (int i = 0; i < 10; ++i) {
    std::string name = "/req" + std::to_string(i);
    w.dataset(name, 1, 28, kTB);
    reg.add_user_request({0, UserRequestKind::kCopy, name, "T2_A"});
  }
  auto inv = w.build();
  RequestPlugin plugin;
  std::mt19937_64 rng(3);
  auto first = run_cycle({&inv, &reg}, {&plugin}, Config{}, rng);
  EXPECT_EQ(first.report.selected.size(), 7u);
  EXPECT_EQ(reg.user_requests(UserRequestState::kPending).size(), 3u);
  for (const auto& r : first.requests) reg.add_replica_op(r);
  auto second = run_cycle({&inv, &reg}, {&plugin}, Config{}, rng);
  EXPECT_EQ(second.report.selected.size(), 3u);
  EXPECT_TRUE(reg.user_requests(UserRequestState::kPending).empty());
  EXPECT_EQ(reg.user_requests(UserRequestState::kActivated).size(), 10u);
}

TEST(Dealer, RandomCyclesRespectInvariants) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    auto inv = testing::random_world(seed, 6, 25);
    std::vector<Proposal> props;
    std::uniform_int_distribution<int> pick(0, 24);
    int k = 0;
    for (const auto& [name, _] : inv.datasets()) {
      if (pick(rng) % 3 == 0) props.push_back(prop(name, 1 + (k++ % 4)));
    }
    Proposal fixed = prop(inv.datasets().begin()->first);
    fixed.destination = "T2_S1";
    props.push_back(fixed);
    StaticPlugin pl("p", props);
    Config cfg;
    cfg.cap = (20 + seed % 200) * kTB;
    auto r = run_cycle({&inv}, {&pl}, cfg, rng);
    ASSERT_LE(r.report.selected_volume, cfg.cap);
    for (const auto& s : r.report.selected) {
      const Site* site = inv.find_site(s.destination);
      ASSERT_EQ(site->status, SiteStatus::kReady);
      ASSERT_EQ(site->kind, StorageKind::kDisk);
      auto dr = inv.dataset_replica(s.proposal.dataset, s.destination);
      ASSERT_FALSE(dr && dr->completeness() == ReplicaCompleteness::kComplete);
    }
    std::set<ReplicaKey> seen;
    for (const auto& q : r.requests) {
      ReplicaKey key{q.block.dataset, q.block.block, q.site};
      ASSERT_TRUE(seen.insert(key).second);
      const auto* existing = inv.find_replica(key);
      ASSERT_FALSE(existing && existing->complete());
    }
  }
}

}  // namespace
}  // namespace stowage::dealer
