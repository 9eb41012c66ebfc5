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

#include <algorithm>
#include <random>
#include <tuple>

#include "fixtures.hpp"
#include "policy_gen.hpp"
#include "stowage/policy.hpp"

namespace stowage::policy {
namespace {

using stowage::testing::Generator;
using stowage::testing::WorldBuilder;

const char* kStandardPolicy =
    "On site.name in [*]\n"
    "When site.occupancy > 0.9\n"
    "Until site.occupancy < 0.85\n"
    "Delete dataset.status == INVALID\n"
    "Protect dataset.on_tape != FULL\n"
    "Dismiss dataset.usage_rank > 200\n"
    "Protect\n"
    "Order decreasing dataset.usage_rank \\\n"
    "  increasing replica.size\n";

TEST(Parse, StandardPolicy) {
  auto p = parse(kStandardPolicy);
  ASSERT_NE(p.site_selector, nullptr);
  EXPECT_EQ(p.site_selector->attribute, "site.name");
  ASSERT_NE(p.trigger, nullptr);
  EXPECT_EQ(to_string(*p.trigger), "site.occupancy > 0.9");
  ASSERT_NE(p.stop, nullptr);
  EXPECT_EQ(to_string(*p.stop), "site.occupancy < 0.85");
  ASSERT_EQ(p.rules.size(), 4u);
  EXPECT_EQ(p.rules[0].action, Action::kDelete);
  EXPECT_EQ(p.rules[1].action, Action::kProtect);
  EXPECT_EQ(p.rules[2].action, Action::kDismiss);
  EXPECT_EQ(p.rules.back().action, Action::kProtect);
  EXPECT_EQ(p.rules.back().predicate, nullptr);
  ASSERT_EQ(p.order.size(), 2u);
  EXPECT_EQ(p.order[0], (OrderKey{Direction::kDecreasing, "dataset.usage_rank"}));
  EXPECT_EQ(p.order[1], (OrderKey{Direction::kIncreasing, "replica.size"}));
}

TEST(Parse, WithLockLineHasFiveRules) {
  std::string text = kStandardPolicy;
  text.insert(text.find("Delete"), "ProtectBlock blockreplica.is_locked\n");
  auto p = parse(text);
  ASSERT_EQ(p.rules.size(), 5u);
  EXPECT_EQ(p.rules[0].action, Action::kProtectBlock);
  EXPECT_TRUE(has_block_rules(p));
}

TEST(Parse, DefaultOnly) {
  auto p = parse("Protect\n");
  EXPECT_EQ(p.trigger, nullptr);
  EXPECT_EQ(p.site_selector, nullptr);
  ASSERT_EQ(p.rules.size(), 1u);
  EXPECT_EQ(p.rules[0].predicate, nullptr);
  EXPECT_TRUE(p.order.empty());
}

int error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

TEST(Parse, ErrorsCarryLine) {
  EXPECT_EQ(error_line("Protect\nFrobnicate x\n"), 2);
  EXPECT_EQ(error_line("Delete dataset.nonexistent == 1\nProtect\n"), 1);
  EXPECT_EQ(error_line("Delete dataset.name > 3\nProtect\n"), 1);
  EXPECT_EQ(error_line("Delete dataset.size == INVALID\nProtect\n"), 1);
  EXPECT_EQ(error_line("When site.occupancy > 0.9\nProtect\n"), 1);
  EXPECT_EQ(error_line("Until site.occupancy < 0.8\nProtect\n"), 1);
  EXPECT_EQ(error_line("Delete dataset.status == INVALID\n"), 1);
  EXPECT_EQ(error_line("Protect\nDelete dataset.status == INVALID\nProtect\n"), 2);
  EXPECT_EQ(error_line("# comment\n\nProtect\nOn site.name in [*]\n"), 4);
  EXPECT_EQ(error_line("Protect\nOrder increasing replica.size\nProtect\n"), 3);
  EXPECT_EQ(error_line("On dataset.name in [*]\nProtect\n"), 1);
  EXPECT_EQ(error_line("Protect\nOrder sideways replica.size\n"), 2);
  EXPECT_EQ(error_line("Protect\nOrder increasing blockreplica.size\n"), 2);
  EXPECT_EQ(error_line("Delete (dataset.status == INVALID\nProtect\n"), 1);
}

TEST(Parse, SiSuffixesAreDecimal) {
  auto e = parse_predicate("replica.size > 2T", Level::kDatasetReplica);
  EXPECT_EQ(std::get<double>(e->literal), 2e12);
  e = parse_predicate("replica.size < 500G", Level::kDatasetReplica);
  EXPECT_EQ(std::get<double>(e->literal), 5e11);
  e = parse_predicate("dataset.num_files > 3k", Level::kDataset);
  EXPECT_EQ(std::get<double>(e->literal), 3000.0);
}

TEST(Parse, HashInsidePatternIsNotAComment) {
  auto p = parse("DeleteBlock blockreplica.block in [b#1]\nProtect\n");
  ASSERT_EQ(p.rules.size(), 2u);
  EXPECT_EQ(p.rules[0].predicate->patterns, std::vector<std::string>{"b#1"});
}


TEST(Parse, PrintReparseFixpoint) {
  Generator gen(1234);
  for (int i = 0; i < 500; ++i) {
    auto text = gen.program();
    PolicyProgram p;
    ASSERT_NO_THROW(p = parse(text)) << text;
    auto printed = to_string(p);
    PolicyProgram q;
    ASSERT_NO_THROW(q = parse(printed)) << printed;
    ASSERT_EQ(p, q) << text << "---\n" << printed;
    ASSERT_EQ(to_string(q), printed);
  }
}

struct Fixture {
  Inventory inv;
  const Site* site = nullptr;
  std::optional<DatasetReplica> replica;

  EvalContext ctx() const {
    EvalContext c;
    c.inventory = &inv;
    c.site = site;
    c.dataset = replica->dataset;
    c.replica = &*replica;
    return c;
  }
};

Fixture make_replica(DatasetStatus status, const std::string& on_tape, double rank) {
  WorldBuilder w;
  w.site("T2_A", 100 * kTB).dataset("/d", 1, 1, kTB, status).attr("/d", "on_tape", on_tape);
  w.attr("/d", "usage_rank", rank).replica("/d", "T2_A");
  Fixture f{w.build()};
  f.site = f.inv.find_site("T2_A");
  f.replica = f.inv.dataset_replica("/d", "T2_A");
  return f;
}

TEST(Classify, StandardPolicyExamples) {
  auto p = parse(kStandardPolicy);
  {
    auto f = make_replica(DatasetStatus::kInvalid, "FULL", 10);
    auto c = classify(p, f.ctx());
    EXPECT_EQ(c.category, Category::kDelete);
    EXPECT_EQ(c.matched_rule, 0);
    EXPECT_EQ(c.condition_id, 4);
  }
  for (double rank : {0.0, 300.0, 1000.0}) {
    auto f = make_replica(DatasetStatus::kValid, "PARTIAL", rank);
    auto c = classify(p, f.ctx());
    EXPECT_EQ(c.category, Category::kKeep);
    EXPECT_EQ(c.matched_rule, 1);
  }
  {
    auto f = make_replica(DatasetStatus::kValid, "FULL", 300);
    auto c = classify(p, f.ctx());
    EXPECT_EQ(c.category, Category::kDismiss);
    EXPECT_EQ(c.matched_rule, 2);
  }
  {
    auto f = make_replica(DatasetStatus::kValid, "FULL", 100);
    auto c = classify(p, f.ctx());
    EXPECT_EQ(c.category, Category::kKeep);
    EXPECT_EQ(c.matched_rule, 3);
  }
}

TEST(Classify, ProducerFailureKeeps) {
  AttributeRegistry reg = AttributeRegistry::builtin();
  AttributeDef broken = *reg.find("dataset.usage_rank");
  broken.producer = [](const EvalContext&) -> std::optional<AttrValue> {
    throw EvaluationError("dataset.usage_rank", "access history unavailable");
  };
  reg.add(broken);
  auto p = parse("Dismiss dataset.usage_rank > 0\nDelete\n", reg);
  auto f = make_replica(DatasetStatus::kValid, "FULL", 300);
  auto c = classify(p, f.ctx(), reg);
  EXPECT_EQ(c.category, Category::kKeep);
  ASSERT_TRUE(c.error);
  EXPECT_NE(c.error->find("usage_rank"), std::string::npos);
}

TEST(Classify, MissingValueMakesTermFalse) {
  WorldBuilder w;
  w.site("T2_A", kTB).dataset("/d", 1, 1, kGB).replica("/d", "T2_A");
  auto inv = w.build();
  auto dr = inv.dataset_replica("/d", "T2_A");
  EvalContext c{&inv, inv.find_site("T2_A"), dr->dataset, &*dr};
  AttributeRegistry reg = AttributeRegistry::builtin();
  reg.add(AttributeDef{"dataset.custom", ValueType::kNumber,
                       [](const EvalContext&) -> std::optional<AttrValue> { return std::nullopt; }, nullptr});
  EXPECT_FALSE(evaluate(*parse_predicate("dataset.custom == 1", Level::kDataset, reg), c, reg));
  EXPECT_FALSE(evaluate(*parse_predicate("dataset.custom != 1", Level::kDataset, reg), c, reg));
  EXPECT_TRUE(evaluate(*parse_predicate("not dataset.custom > 1", Level::kDataset, reg), c, reg));
}

TEST(Evaluate, StarMatchesAnyNonEmptyName) {
  Generator gen(5);
  std::mt19937_64 rng(5);
  auto e = parse_predicate("dataset.name in [*]", Level::kDataset);
  for (int i = 0; i < 200; ++i) {
    Dataset d;
    int len = std::uniform_int_distribution<int>(1, 20)(rng);
    for (int k = 0; k < len; ++k) d.name += static_cast<char>(std::uniform_int_distribution<int>(33, 126)(rng));
    EvalContext c;
    c.dataset = &d;
    ASSERT_TRUE(evaluate(*e, c)) << d.name;
  }
}

std::vector<EvalContext> contexts_for(const Inventory& inv, std::vector<DatasetReplica>& replicas) {
  std::vector<EvalContext> out;
  for (auto& r : replicas) {
    EvalContext c;
    c.inventory = &inv;
    c.site = r.site;
    c.dataset = r.dataset;
    c.replica = &r;
    out.push_back(c);
  }
  return out;
}

TEST(Sort, StandardOrderExample) {
  auto p = parse(kStandardPolicy);
  WorldBuilder w;
  w.site("T2_A", 100 * kTB);
  const double ranks[] = {300, 250, 250};
  const Bytes sizes[] = {5, 9, 2};
  std::vector<std::string> names = {"/c0", "/c1", "/c2"};
  for (int i = 0; i < 3; ++i) {
    w.dataset(names[i], 1, 1, sizes[i] * kTB).attr(names[i], "usage_rank", ranks[i]).replica(names[i], "T2_A");
  }
  auto inv = w.build();
  std::vector<DatasetReplica> reps;
  for (const auto& n : names) reps.push_back(*inv.dataset_replica(n, "T2_A"));
  auto order = sort_candidates(p, contexts_for(inv, reps));
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 2, 1}));
}

TEST(Sort, SingleCandidate) {
  auto p = parse(kStandardPolicy);
  auto f = make_replica(DatasetStatus::kValid, "FULL", 1);
  EXPECT_EQ(sort_candidates(p, {f.ctx()}), std::vector<std::size_t>{0});
  EXPECT_EQ(sort_candidates(parse("Protect\n"), {f.ctx(), f.ctx()}), (std::vector<std::size_t>{0, 1}));
}

TEST(Sort, MatchesKeyTupleOracle) {
  auto p = parse("Protect\nOrder decreasing dataset.usage_rank increasing replica.size\n");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    WorldBuilder w;
    w.site("T2_A", 1000 * kTB);
    std::vector<std::tuple<double, Bytes, std::size_t>> keys;
    std::vector<std::string> names;
    for (int i = 0; i < 50; ++i) {
      std::string name = "/r/" + std::to_string(i);
      double rank = pick(0, 5);
      Bytes size = pick(1, 4) * kTB;
      w.dataset(name, 1, 1, size).attr(name, "usage_rank", rank).replica(name, "T2_A");
      names.push_back(name);
      keys.emplace_back(-rank, size, i);
    }
    auto inv = w.build();
    std::vector<DatasetReplica> reps;
    for (const auto& n : names) reps.push_back(*inv.dataset_replica(n, "T2_A"));
    auto got = sort_candidates(p, contexts_for(inv, reps));
    std::sort(keys.begin(), keys.end());
    std::vector<std::size_t> expected;
    for (const auto& k : keys) expected.push_back(std::get<2>(k));
    ASSERT_EQ(got, expected) << "seed " << seed;
  }
}

TEST(Sort, MissingValuesSortLast) {
  AttributeRegistry reg = AttributeRegistry::builtin();
  reg.add(AttributeDef{"dataset.score", ValueType::kNumber,
                       [](const EvalContext& c) -> std::optional<AttrValue> {
                         auto it = c.dataset->attrs.find("score");
                         if (it == c.dataset->attrs.end()) return std::nullopt;
                         return it->second;
                       },
                       nullptr});
  for (const char* dir : {"increasing", "decreasing"}) {
    auto p = parse(std::string("Protect\nOrder ") + dir + " dataset.score\n", reg);
    Dataset a{"/a"}, b{"/b"}, c{"/c"};
    b.attrs["score"] = 1.0;
    c.attrs["score"] = 2.0;
    std::vector<EvalContext> items(3);
    items[0].dataset = &a;
    items[1].dataset = &b;
    items[2].dataset = &c;
    auto got = sort_candidates(p, items, reg);
    EXPECT_EQ(got.back(), 0u) << dir;
  }
}

// Random policy over a fixed replica; mutate every rule after the first
// match and confirm the category never changes.
TEST(Classify, FirstMatchProperty) {
  Generator gen(77);
  std::mt19937_64 rng(77);
  auto inv = stowage::testing::random_world(77, 4, 30);
  std::vector<DatasetReplica> reps;
  for (const auto& [name, _] : inv.sites()) {
    for (auto& r : inv.dataset_replicas_at(name)) reps.push_back(r);
  }
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string text;
    int n = std::uniform_int_distribution<int>(1, 5)(rng);
    static const char* kActions[] = {"Delete", "Protect", "Dismiss"};
    for (int k = 0; k < n; ++k) {
      text += std::string(kActions[rng() % 3]) + " " + gen.predicate(Level::kDatasetReplica, 2) + "\n";
    }
    text += std::string(kActions[rng() % 3]) + "\n";
    auto p = parse(text);
    const auto& r = reps[rng() % reps.size()];
    EvalContext c{&inv, r.site, r.dataset, &r};
    c.now = 1000 * kDay;
    auto base = classify(p, c);
    if (base.error) continue;
    for (std::size_t j = base.matched_rule + 1; j < p.rules.size(); ++j) {
      auto mutated = p;
      mutated.rules[j].action = static_cast<Action>(rng() % 3);
      mutated.rules[j].predicate = parse_predicate(gen.predicate(Level::kDatasetReplica, 2), Level::kDatasetReplica);
      auto again = classify(mutated, c);
      ASSERT_EQ(again.category, base.category) << text;
      ASSERT_EQ(again.matched_rule, base.matched_rule);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

}  // namespace
}  // namespace stowage::policy
