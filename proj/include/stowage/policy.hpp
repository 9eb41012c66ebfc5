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

// The deletion policy language.
//
//   On site.name in [T2_*]
//   When site.occupancy > 0.9
//   Until site.occupancy < 0.85
//   ProtectBlock blockreplica.is_locked
//   Delete dataset.status == INVALID
//   Dismiss dataset.usage_rank > 200 and not replica.is_partial
//   Protect
//   Order decreasing dataset.usage_rank increasing replica.size
//
// One statement per line, `\` continues a line, `#` starts a comment.
// Directives (On, When, Until, Partition) come first, then rules, then an
// optional Order line. Rules are matched first-match; the final rule must
// carry no predicate and is the default.

#ifndef STOWAGE_POLICY_HPP
#define STOWAGE_POLICY_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stowage/access.hpp"
#include "stowage/inventory.hpp"

namespace stowage::policy {

enum class ValueType { kNumber, kString, kBool };

/// What an expression may see. Attribute namespaces are `site.`, `dataset.`,
/// `replica.` (the dataset replica) and `blockreplica.`.
enum class Level {
  kSite,            // site.*
  kDataset,         // dataset.*
  kDatasetReplica,  // site.*, dataset.*, replica.*
  kBlockReplica,    // everything
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class EvaluationError : public Error {
 public:
  EvaluationError(std::string attribute, const std::string& what)
      : Error(attribute + ": " + what), attribute_(std::move(attribute)) {}
  const std::string& attribute() const { return attribute_; }

 private:
  std::string attribute_;
};

/// Per-cycle memo of producer results.
using AttributeCache = std::unordered_map<std::string, std::optional<AttrValue>>;

/// Inputs visible to attribute producers. Pointers that do not apply to the
/// current level are null.
struct EvalContext {
  const Inventory* inventory = nullptr;
  const Site* site = nullptr;
  const Dataset* dataset = nullptr;
  const DatasetReplica* replica = nullptr;
  const BlockReplica* block_replica = nullptr;
  std::string partition = kGlobalPartition;
  /// Replaces site.occupancy, e.g. with the projected value during detox.
  std::optional<double> occupancy_override;
  const AccessLog* accesses = nullptr;
  Timestamp now = 0;
  AttributeCache* cache = nullptr;
};

/// Returns nullopt when the value is absent for this object; throws
/// EvaluationError when it cannot be computed.
using Producer = std::function<std::optional<AttrValue>(const EvalContext&)>;

struct AttributeDef {
  std::string name;
  ValueType type = ValueType::kNumber;
  Producer producer;
  /// Results are memoized in EvalContext::cache under this key.
  std::function<std::string(const EvalContext&)> cache_key;
};

class AttributeRegistry {
 public:
  void add(AttributeDef def);
  void remove(const std::string& name);
  const AttributeDef* find(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Built-in producers for every attribute the engine knows.
  static const AttributeRegistry& builtin();

 private:
  std::map<std::string, AttributeDef> defs_;
};

Level attribute_level(const std::string& name);
bool level_allows(Level context, Level attribute);

enum class CompareOp { kEq, kNe, kGt, kLt };
const char* to_string(CompareOp op);

struct Expr {
  enum class Kind { kAnd, kOr, kNot, kCompare, kIn, kFlag };
  Kind kind = Kind::kFlag;
  std::vector<std::shared_ptr<const Expr>> children;
  std::string attribute;
  CompareOp op = CompareOp::kEq;
  AttrValue literal;
  std::vector<std::string> patterns;

  bool operator==(const Expr& other) const;
};

using ExprPtr = std::shared_ptr<const Expr>;

enum class Action { kDelete, kProtect, kDismiss, kProtectBlock, kDeleteBlock, kDismissBlock };
const char* to_string(Action a);
bool is_block_action(Action a);

enum class Category { kKeep, kDismiss, kDelete };
const char* to_string(Category c);
Category category_of(Action a);

struct Rule {
  Action action = Action::kProtect;
  ExprPtr predicate;  // null: matches unconditionally
  int line = 0;
  bool operator==(const Rule& other) const;
};

enum class Direction { kIncreasing, kDecreasing };

struct OrderKey {
  Direction direction = Direction::kIncreasing;
  std::string attribute;
  bool operator==(const OrderKey&) const = default;
};

struct PolicyProgram {
  ExprPtr site_selector;  // null: every site
  std::string partition = kGlobalPartition;
  ExprPtr trigger;  // null: never triggered
  ExprPtr stop;
  std::vector<Rule> rules;
  std::vector<OrderKey> order;

  bool operator==(const PolicyProgram& other) const;
};

PolicyProgram parse(const std::string& text,
                    const AttributeRegistry& registry = AttributeRegistry::builtin());
/// Parses one predicate, checking attributes against `level`.
ExprPtr parse_predicate(const std::string& text, Level level,
                        const AttributeRegistry& registry = AttributeRegistry::builtin(),
                        int line = 1);

std::string to_string(const Expr& e);
std::string to_string(const PolicyProgram& p);

bool evaluate(const Expr& e, const EvalContext& ctx,
              const AttributeRegistry& registry = AttributeRegistry::builtin());
std::optional<AttrValue> attribute_value(const std::string& name, const EvalContext& ctx,
                                         const AttributeRegistry& registry = AttributeRegistry::builtin());

struct Classification {
  Category category = Category::kKeep;
  int matched_rule = -1;  // index into PolicyProgram::rules
  int condition_id = 0;   // source line of the matched rule
  std::optional<std::string> error;
};

/// First-match over the dataset-level rules. Producer failures classify as
/// KEEP with the error attached.
Classification classify(const PolicyProgram& program, const EvalContext& ctx,
                        const AttributeRegistry& registry = AttributeRegistry::builtin());
/// First-match over the block-level rules; nullopt when none matched.
std::optional<Classification> classify_block(const PolicyProgram& program, const EvalContext& ctx,
                                             const AttributeRegistry& registry = AttributeRegistry::builtin());

bool has_block_rules(const PolicyProgram& program);

/// Stable permutation of `items` by the Order keys. Missing values sort
/// last regardless of direction.
std::vector<std::size_t> sort_candidates(const PolicyProgram& program,
                                         const std::vector<EvalContext>& items,
                                         const AttributeRegistry& registry = AttributeRegistry::builtin());

}  // namespace stowage::policy

#endif  // STOWAGE_POLICY_HPP
