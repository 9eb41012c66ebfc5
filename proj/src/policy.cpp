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

#include "stowage/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace stowage::policy {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_number(std::string_view raw) {
  if (raw.empty()) return std::nullopt;
  double scale = 1;
  switch (raw.back()) {
    case 'k': scale = 1e3; break;
    case 'M': scale = 1e6; break;
    case 'G': scale = 1e9; break;
    case 'T': scale = 1e12; break;
    default: break;
  }
  if (scale != 1) raw.remove_suffix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || ptr != raw.data() + raw.size()) return std::nullopt;
  return v * scale;
}

bool bare_safe(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == '"' || c == '\\') {
      return false;
    }
  }
  return s != "and" && s != "or" && s != "not" && s != "in";
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

class PredicateParser {
 public:
  PredicateParser(std::string_view text, int line, Level level, const AttributeRegistry& registry)
      : text_(text), line_(line), level_(level), registry_(registry) {}

  ExprPtr parse_all() {
    auto e = parse_or();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(text_.substr(pos_)) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string_view peek_word() {
    skip_ws();
    std::size_t end = pos_;
    while (end < text_.size() && is_word_char(text_[end])) ++end;
    return text_.substr(pos_, end - pos_);
  }

  bool accept_word(std::string_view kw) {
    if (peek_word() != kw) return false;
    pos_ += kw.size();
    return true;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  ExprPtr combine(Expr::Kind kind, std::vector<ExprPtr> parts) {
    if (parts.size() == 1) return parts.front();
    auto e = std::make_shared<Expr>();
    e->kind = kind;
    e->children = std::move(parts);
    return e;
  }

  ExprPtr parse_or() {
    std::vector<ExprPtr> parts{parse_and()};
    while (accept_word("or")) parts.push_back(parse_and());
    return combine(Expr::Kind::kOr, std::move(parts));
  }

  ExprPtr parse_and() {
    std::vector<ExprPtr> parts{parse_unary()};
    while (accept_word("and")) parts.push_back(parse_unary());
    return combine(Expr::Kind::kAnd, std::move(parts));
  }

  ExprPtr parse_unary() {
    if (accept_word("not")) {
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::kNot;
      e->children.push_back(parse_unary());
      return e;
    }
    if (accept('(')) {
      auto e = parse_or();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    return parse_term();
  }

  ExprPtr parse_term() {
    std::string attr(peek_word());
    if (attr.empty()) {
      fail(pos_ < text_.size() ? "expected attribute at '" + std::string(text_.substr(pos_)) + "'"
                               : "expected attribute");
    }
    pos_ += attr.size();
    const AttributeDef* def = registry_.find(attr);
    if (!def) fail("unknown attribute '" + attr + "'");
    if (!level_allows(level_, attribute_level(attr))) {
      fail("attribute '" + attr + "' is not available here");
    }

    auto e = std::make_shared<Expr>();
    e->attribute = attr;
    skip_ws();
    auto rest = text_.substr(pos_);
    std::optional<CompareOp> op;
    if (starts_with(rest, "==")) op = CompareOp::kEq;
    else if (starts_with(rest, "!=")) op = CompareOp::kNe;
    else if (starts_with(rest, ">")) op = CompareOp::kGt;
    else if (starts_with(rest, "<")) op = CompareOp::kLt;

    if (op) {
      pos_ += (*op == CompareOp::kEq || *op == CompareOp::kNe) ? 2 : 1;
      e->kind = Expr::Kind::kCompare;
      e->op = *op;
      e->literal = parse_literal(*def, *op);
      return e;
    }
    if (accept_word("in")) {
      if (def->type != ValueType::kString) fail("type mismatch: 'in' needs a string attribute, got '" + attr + "'");
      e->kind = Expr::Kind::kIn;
      e->patterns = parse_patterns();
      return e;
    }
    if (def->type != ValueType::kBool) fail("attribute '" + attr + "' is not boolean and needs a comparison");
    e->kind = Expr::Kind::kFlag;
    return e;
  }

  AttrValue parse_literal(const AttributeDef& def, CompareOp op) {
    skip_ws();
    std::string raw;
    bool quoted = false;
    if (pos_ < text_.size() && text_[pos_] == '"') {
      quoted = true;
      ++pos_;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
        raw += text_[pos_++];
      }
      if (pos_ >= text_.size()) fail("unterminated string");
      ++pos_;
    } else {
      while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
             text_[pos_] != ')' && text_[pos_] != '(') {
        raw += text_[pos_++];
      }
      if (raw.empty()) fail("expected a value after " + std::string(to_string(op)));
    }
    bool ordering = op == CompareOp::kGt || op == CompareOp::kLt;
    switch (def.type) {
      case ValueType::kNumber: {
        auto v = quoted ? std::nullopt : parse_number(raw);
        if (!v) fail("type mismatch: '" + def.name + "' is numeric, got '" + raw + "'");
        return *v;
      }
      case ValueType::kString:
        if (ordering) fail("type mismatch: cannot order string attribute '" + def.name + "'");
        return raw;
      case ValueType::kBool:
        if (ordering) fail("type mismatch: cannot order boolean attribute '" + def.name + "'");
        if (raw != "true" && raw != "false") fail("type mismatch: '" + def.name + "' is boolean, got '" + raw + "'");
        return raw == "true";
    }
    fail("bad literal");
  }

  std::vector<std::string> parse_patterns() {
    if (!accept('[')) fail("expected '[' after 'in'");
    auto close = text_.find(']', pos_);
    if (close == std::string_view::npos) fail("expected ']'");
    std::vector<std::string> out;
    for (auto& p : split(text_.substr(pos_, close - pos_), ',')) {
      auto t = trim(p);
      if (t.empty()) fail("empty pattern");
      out.emplace_back(t);
    }
    pos_ = close + 1;
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
  Level level_;
  const AttributeRegistry& registry_;
};

struct Statement {
  int line;
  std::string text;
};

std::vector<Statement> split_statements(const std::string& text) {
  std::vector<Statement> out;
  auto lines = split(text, '\n');
  std::string pending;
  int pending_line = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = trim(lines[i]);
    if (pending.empty() && (l.empty() || l.front() == '#')) continue;
    bool cont = !l.empty() && l.back() == '\\';
    if (cont) l = trim(l.substr(0, l.size() - 1));
    if (pending.empty()) {
      pending_line = static_cast<int>(i) + 1;
      pending = std::string(l);
    } else if (!l.empty()) {
      pending += " ";
      pending += l;
    }
    if (!cont) {
      out.push_back({pending_line, pending});
      pending.clear();
    }
  }
  if (!pending.empty()) out.push_back({pending_line, pending});
  return out;
}

std::optional<Action> parse_action(std::string_view w) {
  if (w == "Delete") return Action::kDelete;
  if (w == "Protect") return Action::kProtect;
  if (w == "Dismiss") return Action::kDismiss;
  if (w == "DeleteBlock") return Action::kDeleteBlock;
  if (w == "ProtectBlock") return Action::kProtectBlock;
  if (w == "DismissBlock") return Action::kDismissBlock;
  return std::nullopt;
}

const AttributeDef& require_def(const std::string& name, const AttributeRegistry& registry) {
  const auto* def = registry.find(name);
  if (!def) throw EvaluationError(name, "no registered producer");
  return *def;
}

int compare_values(const AttrValue& a, const AttrValue& b) {
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  if (const auto* x = std::get_if<double>(&a)) {
    double y = std::get<double>(b);
    return *x < y ? -1 : (*x > y ? 1 : 0);
  }
  if (const auto* x = std::get_if<std::string>(&a)) return x->compare(std::get<std::string>(b)) < 0 ? -1 : (*x == std::get<std::string>(b) ? 0 : 1);
  bool x = std::get<bool>(a), y = std::get<bool>(b);
  return x == y ? 0 : (x ? 1 : -1);
}

}  // namespace

const char* to_string(CompareOp op) {
  switch (op) {
    case CompareOp::kEq: return "==";
    case CompareOp::kNe: return "!=";
    case CompareOp::kGt: return ">";
    case CompareOp::kLt: return "<";
  }
  return "?";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::kDelete: return "Delete";
    case Action::kProtect: return "Protect";
    case Action::kDismiss: return "Dismiss";
    case Action::kProtectBlock: return "ProtectBlock";
    case Action::kDeleteBlock: return "DeleteBlock";
    case Action::kDismissBlock: return "DismissBlock";
  }
  return "?";
}

bool is_block_action(Action a) {
  return a == Action::kProtectBlock || a == Action::kDeleteBlock || a == Action::kDismissBlock;
}

const char* to_string(Category c) {
  switch (c) {
    case Category::kKeep: return "KEEP";
    case Category::kDismiss: return "DISMISS";
    case Category::kDelete: return "DELETE";
  }
  return "?";
}

Category category_of(Action a) {
  switch (a) {
    case Action::kDelete:
    case Action::kDeleteBlock: return Category::kDelete;
    case Action::kDismiss:
    case Action::kDismissBlock: return Category::kDismiss;
    default: return Category::kKeep;
  }
}

Level attribute_level(const std::string& name) {
  if (starts_with(name, "site.")) return Level::kSite;
  if (starts_with(name, "dataset.")) return Level::kDataset;
  if (starts_with(name, "replica.")) return Level::kDatasetReplica;
  return Level::kBlockReplica;
}

bool level_allows(Level context, Level attribute) {
  switch (context) {
    case Level::kSite: return attribute == Level::kSite;
    case Level::kDataset: return attribute == Level::kDataset;
    case Level::kDatasetReplica: return attribute != Level::kBlockReplica;
    case Level::kBlockReplica: return true;
  }
  return false;
}

bool Expr::operator==(const Expr& o) const {
  if (kind != o.kind || attribute != o.attribute || op != o.op || literal != o.literal ||
      patterns != o.patterns || children.size() != o.children.size()) {
    return false;
  }
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (!(*children[i] == *o.children[i])) return false;
  }
  return true;
}

namespace {
bool same_expr(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  return *a == *b;
}
}  // namespace

bool Rule::operator==(const Rule& o) const { return action == o.action && same_expr(predicate, o.predicate); }

bool PolicyProgram::operator==(const PolicyProgram& o) const {
  return same_expr(site_selector, o.site_selector) && partition == o.partition &&
         same_expr(trigger, o.trigger) && same_expr(stop, o.stop) && rules == o.rules && order == o.order;
}

void AttributeRegistry::add(AttributeDef def) {
  auto name = def.name;
  defs_[name] = std::move(def);
}

void AttributeRegistry::remove(const std::string& name) { defs_.erase(name); }

const AttributeDef* AttributeRegistry::find(const std::string& name) const {
  auto it = defs_.find(name);
  return it == defs_.end() ? nullptr : &it->second;
}

std::vector<std::string> AttributeRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : defs_) out.push_back(n);
  return out;
}

ExprPtr parse_predicate(const std::string& text, Level level, const AttributeRegistry& registry, int line) {
  if (trim(text).empty()) throw ParseError(line, "empty predicate");
  return PredicateParser(text, line, level, registry).parse_all();
}

PolicyProgram parse(const std::string& text, const AttributeRegistry& registry) {
  PolicyProgram program;
  bool in_rules = false, seen_order = false, seen_partition = false;
  int when_line = 0;
  for (const auto& st : split_statements(text)) {
    std::string_view body = st.text;
    auto sp = body.find_first_of(" \t");
    std::string keyword(body.substr(0, sp));
    std::string rest = sp == std::string_view::npos ? "" : std::string(trim(body.substr(sp)));
    auto fail = [&](const std::string& what) -> void { throw ParseError(st.line, what); };

    if (seen_order) fail("nothing may follow the Order line");

    if (keyword == "On" || keyword == "When" || keyword == "Until" || keyword == "Partition") {
      if (in_rules) fail(keyword + " must precede the rules");
      if (keyword == "Partition") {
        if (seen_partition) fail("duplicate Partition directive");
        if (rest.empty() || rest.find_first_of(" \t") != std::string::npos) fail("Partition takes one name");
        program.partition = rest;
        seen_partition = true;
        continue;
      }
      auto& slot = keyword == "On" ? program.site_selector
                                   : (keyword == "When" ? program.trigger : program.stop);
      if (slot) fail("duplicate " + keyword + " directive");
      slot = parse_predicate(rest, Level::kSite, registry, st.line);
      if (keyword == "When") when_line = st.line;
      continue;
    }
    if (auto action = parse_action(keyword)) {
      Rule rule;
      rule.action = *action;
      rule.line = st.line;
      if (!rest.empty()) {
        rule.predicate = parse_predicate(
            rest, is_block_action(*action) ? Level::kBlockReplica : Level::kDatasetReplica, registry, st.line);
      }
      if (!program.rules.empty() && !program.rules.back().predicate) {
        fail("only the final rule may omit its predicate");
      }
      program.rules.push_back(std::move(rule));
      in_rules = true;
      continue;
    }
    if (keyword == "Order") {
      if (!in_rules) fail("Order must follow the rules");
      auto words = split(rest, ' ');
      std::vector<std::string> toks;
      for (auto& w : words) {
        auto t = trim(w);
        if (!t.empty()) toks.emplace_back(t);
      }
      if (toks.empty() || toks.size() % 2 != 0) fail("Order expects (increasing|decreasing) <attribute> pairs");
      for (std::size_t i = 0; i < toks.size(); i += 2) {
        OrderKey key;
        if (toks[i] == "increasing") key.direction = Direction::kIncreasing;
        else if (toks[i] == "decreasing") key.direction = Direction::kDecreasing;
        else fail("expected increasing or decreasing, got '" + toks[i] + "'");
        key.attribute = toks[i + 1];
        if (!registry.find(key.attribute)) fail("unknown attribute '" + key.attribute + "'");
        if (!level_allows(Level::kDatasetReplica, attribute_level(key.attribute))) {
          fail("attribute '" + key.attribute + "' cannot order dataset replicas");
        }
        program.order.push_back(std::move(key));
      }
      seen_order = true;
      continue;
    }
    fail("unknown keyword '" + keyword + "'");
  }
  if (program.rules.empty()) throw ParseError(1, "policy has no rules");
  if (program.rules.back().predicate) {
    throw ParseError(program.rules.back().line, "the final rule must have no predicate (default action)");
  }
  if (program.trigger && !program.stop) throw ParseError(when_line, "When requires an Until directive");
  if (program.stop && !program.trigger) throw ParseError(1, "Until requires a When directive");
  return program;
}

std::string to_string(const Expr& e) {
  auto child = [](const ExprPtr& c) {
    auto s = to_string(*c);
    return (c->kind == Expr::Kind::kAnd || c->kind == Expr::Kind::kOr) ? "(" + s + ")" : s;
  };
  switch (e.kind) {
    case Expr::Kind::kAnd:
    case Expr::Kind::kOr: {
      std::string out;
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += e.kind == Expr::Kind::kAnd ? " and " : " or ";
        out += child(e.children[i]);
      }
      return out;
    }
    case Expr::Kind::kNot: return "not " + child(e.children.front());
    case Expr::Kind::kFlag: return e.attribute;
    case Expr::Kind::kIn: {
      std::string out = e.attribute + " in [";
      for (std::size_t i = 0; i < e.patterns.size(); ++i) out += (i ? ", " : "") + e.patterns[i];
      return out + "]";
    }
    case Expr::Kind::kCompare: {
      std::string lit;
      if (const auto* d = std::get_if<double>(&e.literal)) lit = format_number(*d);
      else if (const auto* s = std::get_if<std::string>(&e.literal)) lit = bare_safe(*s) ? *s : quote(*s);
      else lit = std::get<bool>(e.literal) ? "true" : "false";
      return e.attribute + " " + to_string(e.op) + " " + lit;
    }
  }
  return "";
}

std::string to_string(const PolicyProgram& p) {
  std::string out;
  if (p.site_selector) out += "On " + to_string(*p.site_selector) + "\n";
  if (p.partition != kGlobalPartition) out += "Partition " + p.partition + "\n";
  if (p.trigger) out += "When " + to_string(*p.trigger) + "\n";
  if (p.stop) out += "Until " + to_string(*p.stop) + "\n";
  for (const auto& r : p.rules) {
    out += to_string(r.action);
    if (r.predicate) out += " " + to_string(*r.predicate);
    out += "\n";
  }
  if (!p.order.empty()) {
    out += "Order";
    for (const auto& k : p.order) {
      out += k.direction == Direction::kIncreasing ? " increasing " : " decreasing ";
      out += k.attribute;
    }
    out += "\n";
  }
  return out;
}

std::optional<AttrValue> attribute_value(const std::string& name, const EvalContext& ctx,
                                         const AttributeRegistry& registry) {
  const auto& def = require_def(name, registry);
  if (ctx.cache && def.cache_key) {
    auto key = def.cache_key(ctx);
    if (!key.empty()) {
      auto it = ctx.cache->find(key);
      if (it != ctx.cache->end()) return it->second;
      auto v = def.producer(ctx);
      ctx.cache->emplace(std::move(key), v);
      return v;
    }
  }
  return def.producer(ctx);
}

bool evaluate(const Expr& e, const EvalContext& ctx, const AttributeRegistry& registry) {
  switch (e.kind) {
    case Expr::Kind::kAnd:
      return std::all_of(e.children.begin(), e.children.end(),
                         [&](const ExprPtr& c) { return evaluate(*c, ctx, registry); });
    case Expr::Kind::kOr:
      return std::any_of(e.children.begin(), e.children.end(),
                         [&](const ExprPtr& c) { return evaluate(*c, ctx, registry); });
    case Expr::Kind::kNot: return !evaluate(*e.children.front(), ctx, registry);
    default: break;
  }
  // An absent value makes every term false, including `!=`.
  auto v = attribute_value(e.attribute, ctx, registry);
  if (!v) return false;
  switch (e.kind) {
    case Expr::Kind::kFlag: {
      const auto* b = std::get_if<bool>(&*v);
      return b && *b;
    }
    case Expr::Kind::kIn: {
      const auto* s = std::get_if<std::string>(&*v);
      if (!s) return false;
      return std::any_of(e.patterns.begin(), e.patterns.end(),
                         [&](const std::string& p) { return wildcard_match(p, *s); });
    }
    case Expr::Kind::kCompare: {
      if (v->index() != e.literal.index()) return false;
      int c = compare_values(*v, e.literal);
      switch (e.op) {
        case CompareOp::kEq: return c == 0;
        case CompareOp::kNe: return c != 0;
        case CompareOp::kGt: return c > 0;
        case CompareOp::kLt: return c < 0;
      }
      return false;
    }
    default: return false;
  }
}

Classification classify(const PolicyProgram& program, const EvalContext& ctx, const AttributeRegistry& registry) {
  for (std::size_t i = 0; i < program.rules.size(); ++i) {
    const auto& rule = program.rules[i];
    if (is_block_action(rule.action)) continue;
    try {
      if (!rule.predicate || evaluate(*rule.predicate, ctx, registry)) {
        return {category_of(rule.action), static_cast<int>(i), rule.line, std::nullopt};
      }
    } catch (const Error& e) {
      return {Category::kKeep, -1, 0, std::string(e.what())};
    }
  }
  // Only reachable when the default rule is block-level.
  return {Category::kKeep, -1, 0, std::nullopt};
}

std::optional<Classification> classify_block(const PolicyProgram& program, const EvalContext& ctx,
                                             const AttributeRegistry& registry) {
  for (std::size_t i = 0; i < program.rules.size(); ++i) {
    const auto& rule = program.rules[i];
    if (!is_block_action(rule.action)) continue;
    try {
      if (!rule.predicate || evaluate(*rule.predicate, ctx, registry)) {
        return Classification{category_of(rule.action), static_cast<int>(i), rule.line, std::nullopt};
      }
    } catch (const Error& e) {
      return Classification{Category::kKeep, -1, 0, std::string(e.what())};
    }
  }
  return std::nullopt;
}

bool has_block_rules(const PolicyProgram& program) {
  return std::any_of(program.rules.begin(), program.rules.end(),
                     [](const Rule& r) { return is_block_action(r.action); });
}

std::vector<std::size_t> sort_candidates(const PolicyProgram& program, const std::vector<EvalContext>& items,
                                         const AttributeRegistry& registry) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  if (program.order.empty() || items.size() < 2) return order;

  std::vector<std::vector<std::optional<AttrValue>>> keys(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const auto& k : program.order) {
      std::optional<AttrValue> v;
      try {
        v = attribute_value(k.attribute, items[i], registry);
      } catch (const Error&) {
        v.reset();
      }
      keys[i].push_back(std::move(v));
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < program.order.size(); ++k) {
      const auto& va = keys[a][k];
      const auto& vb = keys[b][k];
      if (!va || !vb) {
        if (!va && !vb) continue;
        return static_cast<bool>(va);  // present before missing
      }
      int c = compare_values(*va, *vb);
      if (c == 0) continue;
      return program.order[k].direction == Direction::kIncreasing ? c < 0 : c > 0;
    }
    return false;
  });
  return order;
}

}  // namespace stowage::policy
