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


#include "stowage/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "stowage/apps.hpp"
#include "stowage/policy.hpp"
#include "stowage/server.hpp"
#include "stowage/snapshot.hpp"

namespace stowage::sim {

namespace pt = boost::property_tree;

std::string Scenario::policy_text() const {
  std::ostringstream out;
  out << "On site.kind == DISK\n";
  out << "When site.occupancy > " << upper << "\n";
  out << "Until site.occupancy < " << lower << "\n";
  out << "Protect not replica.is_complete\n";
  out << "Protect dataset.usage_rank < " << protect_days << "\n";
  for (const auto& r : extra_rules) out << r << "\n";
  out << "Dismiss\n";
  out << "Order decreasing dataset.usage_rank\n";
  return out.str();
}

void Scenario::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error("scenario: " + what);
  };
  need(days > 0, "days must be positive");
  need(warmup_days >= 0 && warmup_days < days, "warmup_days must lie in [0, days)");
  need(detox_every_hours > 0 && dealer_every_hours > 0 && fom_every_hours > 0, "cadences must be positive");
  need(!sites.empty(), "no sites");
  std::set<std::string> names;
  for (const auto& s : sites) {
    need(!s.name.empty() && s.name.find_first_of(" \t./") == std::string::npos, "bad site name '" + s.name + "'");
    need(names.insert(s.name).second, "duplicate site " + s.name);
    need(s.kind == StorageKind::kTape || s.quota > 0, "disk site " + s.name + " needs a positive quota");
  }
  auto link_ok = [](const fom::LinkModel& m) {
    return m.bandwidth > 0 && m.latency >= 0 && m.failure_probability >= 0 && m.failure_probability < 1;
  };
  need(link_ok(default_link), "bad default link");
  for (const auto& l : links) {
    need(names.count(l.source) && names.count(l.destination), "link names an unknown site");
    need(link_ok(l.model), "bad link " + l.source + " -> " + l.destination);
  }
  need(initial_fill_min >= 0 && initial_fill_min <= initial_fill_max && initial_fill_max <= 1, "bad initial fill");
  need(initial_age_days >= 0, "initial_age_days must be non-negative");
  need(datasets_per_day >= 0, "datasets_per_day must be non-negative");
  need(blocks_min > 0 && blocks_min <= blocks_max, "bad block count range");
  need(files_min > 0 && files_min <= files_max, "bad file count range");
  need(file_size_min > 0 && file_size_min <= file_size_max, "bad file size range");
  need(pareto_alpha > 0 && pareto_min > 0, "Pareto parameters must be positive");
  need(half_life_days > 0, "half_life_days must be positive");
  need(rejuvenation_per_day >= 0 && rejuvenation_per_day <= 1, "rejuvenation_per_day must be a probability");
  need(lower > 0 && lower <= upper && upper <= 1, "watermarks must satisfy 0 < lower <= upper <= 1");
  need(protect_days >= 0, "protect_days must be non-negative");
  need(dealer.cap > 0 && dealer.throttle > 0, "dealer cap and throttle must be positive");
  need(fom.max_attempts > 0 && fom.batch_files > 0 && fom.batch_bytes > 0, "bad fom settings");
  policy::parse(policy_text());
}

namespace {

// Tracks which keys of a section were read so leftovers can be reported.
class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  template <typename T>
  void read(const std::string& key, T& out) {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return;
    used_.insert(key);
    std::istringstream in(*v);
    T value{};
    in >> value;
    if (in.fail() || !(in >> std::ws).eof()) throw Error("scenario [" + name_ + "] " + key + ": bad value '" + *v + "'");
    out = value;
  }

  void read_bool(const std::string& key, bool& out) {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return;
    used_.insert(key);
    if (*v == "true" || *v == "1" || *v == "yes") {
      out = true;
    } else if (*v == "false" || *v == "0" || *v == "no") {
      out = false;
    } else {
      throw Error("scenario [" + name_ + "] " + key + ": expected a boolean, got '" + *v + "'");
    }
  }

  /// Decimal value times `unit`.
  void read_bytes(const std::string& key, Bytes unit, Bytes& out) {
    double v = -1;
    bool present = tree_.get_optional<std::string>(key).has_value();
    read(key, v);
    if (present) out = static_cast<Bytes>(std::llround(v * static_cast<double>(unit)));
  }

  std::optional<std::string> text(const std::string& key) {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return std::nullopt;
    used_.insert(key);
    return *v;
  }

  void finish() const {
    for (const auto& [key, _] : tree_) {
      if (!used_.count(key)) throw Error("scenario [" + name_ + "]: unknown key '" + key + "'");
    }
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

void read_link(Section& s, fom::LinkModel& m) {
  double mb = m.bandwidth / 1e6;
  s.read("bandwidth_mb_s", mb);
  m.bandwidth = mb * 1e6;
  s.read("latency_s", m.latency);
  s.read("failure_probability", m.failure_probability);
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("scenario line " + std::to_string(e.line()) + ": " + e.message());
  }
  // The INI reader drops sections without keys; collect headers in order
  // so empty ones are still checked and applied.
  std::vector<std::string> headers;
  {
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      auto t = trim(line);
      if (t.size() >= 2 && t.front() == '[' && t.back() == ']') headers.emplace_back(trim(t.substr(1, t.size() - 2)));
    }
  }
  for (const auto& [key, body] : tree) {
    if (std::find(headers.begin(), headers.end(), key) == headers.end()) {
      throw Error("scenario: key '" + key + "' outside a section");
    }
  }
  const pt::ptree empty;
  Scenario sc;
  for (const auto& header : headers) {
    auto found = tree.find(header);
    const pt::ptree& body = found == tree.not_found() ? empty : found->second;
    auto w = words(header);
    if (w.empty()) throw Error("scenario: empty section name");
    Section s(header, body);
    const auto& kind = w[0];
    if (kind == "scenario" && w.size() == 1) {
      if (auto v = s.text("name")) sc.name = *v;
      s.read("seed", sc.seed);
      s.read("days", sc.days);
      s.read("warmup_days", sc.warmup_days);
      s.read("detox_every_hours", sc.detox_every_hours);
      s.read("dealer_every_hours", sc.dealer_every_hours);
      s.read("fom_every_hours", sc.fom_every_hours);
    } else if (kind == "world" && w.size() == 1) {
      s.read("initial_fill_min", sc.initial_fill_min);
      s.read("initial_fill_max", sc.initial_fill_max);
      s.read("initial_age_days", sc.initial_age_days);
    } else if (kind == "site" && w.size() == 2) {
      SiteSpec site;
      site.name = w[1];
      if (auto k = s.text("kind")) {
        auto parsed = parse_storage_kind(*k);
        if (!parsed) throw Error("scenario [" + header + "] kind: expected DISK or TAPE, got '" + *k + "'");
        site.kind = *parsed;
      }
      s.read_bytes("quota_tb", kTB, site.quota);
      sc.sites.push_back(site);
    } else if (kind == "links" && w.size() == 1) {
      read_link(s, sc.default_link);
    } else if (kind == "link" && w.size() == 3) {
      LinkSpec l{w[1], w[2], sc.default_link};
      read_link(s, l.model);
      sc.links.push_back(l);
    } else if (kind == "injection" && w.size() == 1) {
      s.read("datasets_per_day", sc.datasets_per_day);
      s.read("blocks_min", sc.blocks_min);
      s.read("blocks_max", sc.blocks_max);
      s.read("files_min", sc.files_min);
      s.read("files_max", sc.files_max);
      s.read_bytes("file_size_min_gb", kGB, sc.file_size_min);
      s.read_bytes("file_size_max_gb", kGB, sc.file_size_max);
      s.read_bool("tape_copy", sc.tape_copy);
    } else if (kind == "access" && w.size() == 1) {
      s.read_bool("enabled", sc.accesses);
      s.read("pareto_alpha", sc.pareto_alpha);
      s.read("pareto_min", sc.pareto_min);
      s.read("half_life_days", sc.half_life_days);
      s.read("rejuvenation_per_day", sc.rejuvenation_per_day);
    } else if (kind == "policy" && w.size() == 1) {
      s.read("upper", sc.upper);
      s.read("lower", sc.lower);
      s.read("protect_days", sc.protect_days);
      if (auto rules = s.text("rules")) {
        for (const auto& r : split(*rules, ';')) {
          auto t = trim(r);
          if (!t.empty()) sc.extra_rules.emplace_back(t);
        }
      }
    } else if (kind == "dealer" && w.size() == 1) {
      s.read_bytes("cap_tb", kTB, sc.dealer.cap);
      s.read_bytes("throttle_tb", kTB, sc.dealer.throttle);
      s.read("target_occupancy", sc.dealer.target_occupancy);
      s.read("popularity_threshold", sc.popularity_threshold);
      if (auto pr = s.text("priorities")) {
        for (const auto& item : split(*pr, ',')) {
          auto t = std::string(trim(item));
          if (t.empty()) continue;
          auto colon = t.find(':');
          if (colon == std::string::npos) throw Error("scenario [dealer] priorities: expected name:weight, got '" + t + "'");
          try {
            sc.dealer.priorities[std::string(trim(t.substr(0, colon)))] = std::stod(t.substr(colon + 1));
          } catch (const std::logic_error&) {
            throw Error("scenario [dealer] priorities: bad weight in '" + t + "'");
          }
        }
      }
    } else if (kind == "fom" && w.size() == 1) {
      s.read("max_attempts", sc.fom.max_attempts);
      s.read("backoff_cap", sc.fom.backoff_cap);
      s.read("batch_files", sc.fom.batch_files);
      s.read_bytes("batch_tb", kTB, sc.fom.batch_bytes);
      double horizon_days = static_cast<double>(sc.fom.horizon) / kDay;
      s.read("horizon_days", horizon_days);
      sc.fom.horizon = static_cast<Timestamp>(horizon_days * kDay);
    } else {
      throw Error("scenario: unknown section [" + header + "]");
    }
    s.finish();
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

namespace {

const char* kFleetScenario = R"(; Ten disk sites and a tape archive under steady production.
[scenario]
name = fleet
seed = 7
days = 220
warmup_days = 20
detox_every_hours = 24
dealer_every_hours = 24
fom_every_hours = 1

[world]
initial_fill_min = 0.78
initial_fill_max = 0.88
initial_age_days = 90

[site T2_A]
quota_tb = 50
[site T2_B]
quota_tb = 65
[site T2_C]
quota_tb = 80
[site T2_D]
quota_tb = 95
[site T2_E]
quota_tb = 110
[site T2_F]
quota_tb = 125
[site T2_G]
quota_tb = 140
[site T2_H]
quota_tb = 160
[site T2_I]
quota_tb = 180
[site T2_J]
quota_tb = 200
[site T1_TAPE]
kind = TAPE

[links]
bandwidth_mb_s = 400
latency_s = 30
failure_probability = 0.05

[injection]
datasets_per_day = 30
blocks_min = 1
blocks_max = 4
files_min = 2
files_max = 6
file_size_min_gb = 10
file_size_max_gb = 100
tape_copy = true

[access]
enabled = true
pareto_alpha = 1.5
pareto_min = 0.5
half_life_days = 10
rejuvenation_per_day = 0.002

[policy]
upper = 0.9
lower = 0.85
protect_days = 3

[dealer]
cap_tb = 20
throttle_tb = 40
target_occupancy = 0.85
popularity_threshold = 50

[fom]
max_attempts = 5
batch_files = 100
batch_tb = 1
)";

const char* kPairScenario = R"(; A large master disk and a smaller cache under steady production.
[scenario]
name = pair
seed = 11
days = 120
warmup_days = 20
detox_every_hours = 24
dealer_every_hours = 24
fom_every_hours = 1

[world]
initial_fill_min = 0.80
initial_fill_max = 0.86
initial_age_days = 60

[site MASTER]
quota_tb = 600
[site CACHE]
quota_tb = 150

[links]
bandwidth_mb_s = 500
latency_s = 30
failure_probability = 0.02

[injection]
datasets_per_day = 20
blocks_min = 1
blocks_max = 4
files_min = 2
files_max = 6
file_size_min_gb = 10
file_size_max_gb = 100
tape_copy = false

[access]
enabled = true
pareto_alpha = 1.5
pareto_min = 0.5
half_life_days = 10
rejuvenation_per_day = 0.002

[policy]
upper = 0.9
lower = 0.85
protect_days = 3

[dealer]
cap_tb = 20
throttle_tb = 40
target_occupancy = 0.85
popularity_threshold = 50
)";

}  // namespace

std::string canned_text(const std::string& name) {
  if (name == "fleet") return kFleetScenario;
  if (name == "pair") return kPairScenario;
  throw Error("no canned scenario '" + name + "'");
}

Scenario canned_fleet() { return parse_scenario(kFleetScenario); }
Scenario canned_pair() { return parse_scenario(kPairScenario); }

namespace {

constexpr Timestamp kStart = 1000 * kDay;
const char* kGroup = "analysis";

std::string endpoint_of(const std::string& site) { return "root://" + site + ".sim.example.org/store"; }

// Keeps a log of what the file operation manager dispatched and how each
// file ended.
class RecordingBackend : public fom::Backend {
 public:
  RecordingBackend(std::shared_ptr<fom::SimulatedBackend> inner, SimResult& result)
      : inner_(std::move(inner)), result_(result) {}

  bool reachable() const override { return inner_->reachable(); }

  std::int64_t submit(const fom::FileOpBatch& batch) override {
    auto id = inner_->submit(batch);
    auto& known = batches_[id];
    for (const auto& op : batch.files) {
      result_.dispatches.push_back({id, op.lfn, op.verb, op.source, op.destination, op.size, now_});
      known.emplace(op.lfn, op);
    }
    return id;
  }

  std::vector<fom::FileOutcome> poll(std::int64_t id) override {
    auto out = inner_->poll(id);
    auto it = batches_.find(id);
    if (it == batches_.end()) return out;
    for (const auto& o : out) {
      if (o.state == FileOpState::kPending) continue;
      auto op = it->second.find(o.lfn);
      if (op == it->second.end()) continue;
      const auto& f = op->second;
      result_.outcomes.push_back(
          {f.lfn, f.verb, f.source, f.destination, f.size, o.state == FileOpState::kSuccess, o.time});
      it->second.erase(op);
    }
    if (it->second.empty()) batches_.erase(it);
    return out;
  }

  void cancel(std::int64_t id) override {
    inner_->cancel(id);
    batches_.erase(id);
  }

  void set_now(Timestamp now) { now_ = now; }

 private:
  std::shared_ptr<fom::SimulatedBackend> inner_;
  SimResult& result_;
  Timestamp now_ = 0;
  std::map<std::int64_t, std::map<std::string, fom::FileOp>> batches_;
};

struct NewDataset {
  Dataset dataset;
  std::vector<std::pair<Block, std::vector<File>>> blocks;
  Bytes size = 0;
};

class World {
 public:
  World(const Scenario& sc, std::mt19937_64& rng) : sc_(sc), rng_(rng) {}

  NewDataset make_dataset(Timestamp created) {
    NewDataset n;
    char name[32];
    std::snprintf(name, sizeof name, "/sim/ds%06lld", static_cast<long long>(next_++));
    n.dataset.name = name;
    n.dataset.data_type = "AOD";
    n.dataset.last_update = created;
    int blocks = uniform(sc_.blocks_min, sc_.blocks_max);
    for (int b = 0; b < blocks; ++b) {
      Block blk;
      blk.name = "b" + std::to_string(b);
      blk.last_update = created;
      std::vector<File> files;
      int count = uniform(sc_.files_min, sc_.files_max);
      for (int f = 0; f < count; ++f) {
        Bytes size = std::uniform_int_distribution<Bytes>(sc_.file_size_min / kGB, sc_.file_size_max / kGB)(rng_) * kGB;
        files.push_back({n.dataset.name + "/" + blk.name + "/f" + std::to_string(f) + ".root", size});
        blk.size += size;
      }
      blk.num_files = count;
      n.size += blk.size;
      n.blocks.emplace_back(blk, std::move(files));
    }
    return n;
  }

  /// Disk site drawn with probability proportional to quota.
  const SiteSpec& pick_disk_site() {
    std::vector<double> w;
    for (const auto& s : sc_.sites) w.push_back(s.kind == StorageKind::kDisk ? static_cast<double>(s.quota) : 0.0);
    std::discrete_distribution<std::size_t> d(w.begin(), w.end());
    return sc_.sites[d(rng_)];
  }

  const SiteSpec* tape_site() const {
    for (const auto& s : sc_.sites) {
      if (s.kind == StorageKind::kTape) return &s;
    }
    return nullptr;
  }

  double pareto() {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    return sc_.pareto_min / std::pow(1.0 - u, 1.0 / sc_.pareto_alpha);
  }

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

 private:
  const Scenario& sc_;
  std::mt19937_64& rng_;
  std::int64_t next_ = 0;
};

BlockReplica complete_replica(const std::string& dataset, const Block& b, const std::string& site, Timestamp t) {
  BlockReplica r;
  r.dataset = dataset;
  r.block = b.name;
  r.site = site;
  r.group = kGroup;
  r.size_on_site = b.size;
  r.last_update = t;
  return r;
}

void add_to_delta(InventoryDelta& d, const NewDataset& n, const std::vector<std::string>& sites, Timestamp t) {
  d.update(to_record(n.dataset));
  for (const auto& [b, files] : n.blocks) {
    d.update(to_record(n.dataset.name, b));
    for (const auto& f : files) d.update(to_record(BlockKey{n.dataset.name, b.name}, f));
    for (const auto& s : sites) d.update(to_record(complete_replica(n.dataset.name, b, s, t)));
  }
}

std::int64_t poisson(std::mt19937_64& rng, double mean) {
  if (mean <= 0) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

Bytes disk_volume(const Inventory& inv) {
  Bytes total = 0;
  for (const auto& [k, r] : inv.block_replicas()) {
    const auto* s = inv.find_site(k.site);
    if (s && s->kind == StorageKind::kDisk) total += r.size_on_site;
  }
  return total;
}

}  // namespace

SimResult run_scenario(const Scenario& sc) {
  sc.validate();
  SimResult result;
  std::mt19937_64 rng(sc.seed);
  World world(sc, rng);
  Timestamp now = kStart;

  ServerConfig config;
  config.clock = [&now] { return now; };
  config.compact_every = 0;
  Server server(config);

  auto simulated = std::make_shared<fom::SimulatedBackend>([&now] { return now; }, sc.seed * 0x9E3779B97F4A7C15ULL + 1);
  simulated->set_default_link(sc.default_link);
  for (const auto& s : sc.sites) simulated->add_endpoint(endpoint_of(s.name));
  for (const auto& l : sc.links) simulated->set_link(endpoint_of(l.source), endpoint_of(l.destination), l.model);
  auto backend = std::make_shared<RecordingBackend>(simulated, result);

  apps::Settings settings;
  settings.detox_policy = policy::parse(sc.policy_text());
  settings.dealer = sc.dealer;
  settings.plugins = {std::make_shared<dealer::PopularityPlugin>(sc.popularity_threshold),
                      std::make_shared<dealer::BalancerPlugin>(), std::make_shared<dealer::UndertakerPlugin>(),
                      std::make_shared<dealer::RequestPlugin>()};
  settings.fom = sc.fom;
  settings.backend = backend;
  settings.seed = sc.seed + 1;
  apps::StandardApps standard(server, settings);
  standard.register_all();

  // Initial world.
  Inventory inv;
  inv.put_group(Group{kGroup});
  for (const auto& spec : sc.sites) {
    Site s;
    s.name = spec.name;
    s.kind = spec.kind;
    s.endpoint = endpoint_of(spec.name);
    if (spec.quota > 0) s.quotas[kGlobalPartition] = spec.quota;
    inv.put_site(s);
  }
  std::map<std::string, double> intensity;
  const SiteSpec* tape = world.tape_site();
  auto decay = [&](double days) { return std::pow(0.5, days / sc.half_life_days); };
  for (const auto& spec : sc.sites) {
    if (spec.kind != StorageKind::kDisk) continue;
    double fill = std::uniform_real_distribution<double>(sc.initial_fill_min, sc.initial_fill_max)(rng);
    Bytes target = static_cast<Bytes>(fill * static_cast<double>(spec.quota));
    Bytes used = 0;
    while (true) {
      double age = std::uniform_real_distribution<double>(0.0, sc.initial_age_days)(rng);
      Timestamp created = kStart - static_cast<Timestamp>(age * kDay);
      auto n = world.make_dataset(created);
      if (used + n.size > target) break;
      used += n.size;
      inv.put_dataset(n.dataset);
      for (const auto& [b, files] : n.blocks) {
        inv.put_block(n.dataset.name, b);
        inv.file_catalog().put({n.dataset.name, b.name}, files);
        inv.put_replica(complete_replica(n.dataset.name, b, spec.name, created));
        if (tape && sc.tape_copy) inv.put_replica(complete_replica(n.dataset.name, b, tape->name, created));
      }
      intensity[n.dataset.name] = world.pareto() * decay(age);
    }
  }
  server.store().reset(inv, 1);
  auto previous = server.store().image();
  result.initial_occupied = disk_volume(*previous);

  // Flow accounting from the replica records of every commit.
  bool injecting = false;
  Bytes injected = 0, transferred = 0, deleted = 0;
  server.set_commit_hook([&](std::uint64_t, const InventoryDelta& delta) {
    auto next = server.store().image();
    std::set<ReplicaKey> keys;
    for (const auto& e : delta.entries) {
      if (e.record.type != RecordType::kReplica) continue;
      keys.insert({e.record.at("dataset"), e.record.at("block"), e.record.at("site")});
    }
    for (const auto& k : keys) {
      const auto* site = next->find_site(k.site);
      if (!site || site->kind != StorageKind::kDisk) continue;
      const auto* before = previous->find_replica(k);
      const auto* after = next->find_replica(k);
      Bytes diff = (after ? after->size_on_site : 0) - (before ? before->size_on_site : 0);
      if (injecting) {
        injected += diff;
      } else if (diff > 0) {
        transferred += diff;
      } else {
        deleted -= diff;
      }
    }
    previous = next;
  });

  InventoryDelta pending_injection;
  server.register_app("inject", true, [&](AppContext& ctx) {
    if (!pending_injection.empty()) ctx.commit(pending_injection);
  });

  auto run = [&](const std::string& app) {
    auto r = server.run_app(app, true, "sim");
    if (r.state == AppState::kFailed) throw Error("sim: " + app + " failed: " + r.error);
  };

  std::vector<std::string> disk_sites;
  for (const auto& s : sc.sites) {
    if (s.kind == StorageKind::kDisk) disk_sites.push_back(s.name);
  }
  Bytes last_injected = 0, last_transferred = 0, last_deleted = 0;
  Bytes dealer_since_sample = 0;
  std::size_t post_warmup = 0, overflow = 0;
  const std::int64_t hours = static_cast<std::int64_t>(sc.days) * 24;
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (std::int64_t h = 0; h < hours; ++h) {
    now = kStart + h * kHour;
    backend->set_now(now);

    if (h % 24 == 0) {
      if (sc.accesses) {
        for (auto& [name, lambda] : intensity) {
          if (coin(rng) < sc.rejuvenation_per_day) lambda = world.pareto();
          auto count = poisson(rng, lambda);
          if (count > 0) server.record_access({name, now, count});
          lambda *= decay(1.0);
        }
      }
      auto arrivals = poisson(rng, sc.datasets_per_day);
      pending_injection = {};
      for (std::int64_t i = 0; i < arrivals; ++i) {
        auto n = world.make_dataset(now);
        std::vector<std::string> at{world.pick_disk_site().name};
        if (tape && sc.tape_copy) at.push_back(tape->name);
        add_to_delta(pending_injection, n, at, now);
        intensity[n.dataset.name] = world.pareto();
      }
      if (!pending_injection.empty()) {
        injecting = true;
        run("inject");
        injecting = false;
      }
    }

    if (h % sc.detox_every_hours == 0) {
      run("detox");
      const auto& report = *standard.last_detox();
      Sample s;
      s.time = now;
      s.day = static_cast<double>(now - kStart) / kDay;
      Bytes volume = 0, quota = 0;
      for (const auto& site : report.sites) {
        s.site_occupancy[site.site] = site.occupancy_after;
        volume += site.volume_after;
        quota += site.quota;
        s.protected_volume += site.protected_volume;
        if (site.triggered) ++s.triggered;
        if (site.protected_above_watermark) ++s.flagged;
        result.detox.push_back({report.cycle_id, now, site.site, site.occupancy_before, site.occupancy_after,
                                site.triggered, site.protected_above_watermark, site.deleted_volume});
      }
      s.fleet_occupancy = quota > 0 ? static_cast<double>(volume) / static_cast<double>(quota) : 0.0;
      s.injected = injected - last_injected;
      s.transferred = transferred - last_transferred;
      s.deleted = deleted - last_deleted;
      last_injected = injected;
      last_transferred = transferred;
      last_deleted = deleted;
      s.dealer_volume = dealer_since_sample;
      dealer_since_sample = 0;
      auto image = server.store().image();
      for (const auto& op : server.registry().replica_ops()) {
        if (op.verb != OpVerb::kCopy || (op.state != OpState::kNew && op.state != OpState::kInProgress)) continue;
        if (const auto* b = image->find_block(op.block)) s.pending_total += b->size;
      }
      s.missing = dealer::pending_copy_volume(*image, server.registry());
      s.occupied = disk_volume(*image);
      s.conservation_error = s.occupied - result.initial_occupied - (injected + transferred - deleted);
      if (s.day >= sc.warmup_days) {
        ++post_warmup;
        if (s.fleet_occupancy >= sc.upper) ++overflow;
      }
      result.series.push_back(std::move(s));
    }

    if (h % sc.dealer_every_hours == 0) {
      run("dealer");
      const auto& report = *standard.last_dealer();
      result.dealer.push_back({report.cycle_id, now, report.selected_volume, report.pending_volume, report.throttled});
      dealer_since_sample += report.selected_volume;
    }

    if (h % sc.fom_every_hours == 0) run("fom");
  }

  result.total_injected = injected;
  result.total_transferred = transferred;
  result.total_deleted = deleted;
  result.sustained_overflow = post_warmup > 0 && overflow * 2 > post_warmup;
  result.final_snapshot = canonical_snapshot(*server.store().image());
  return result;
}

std::vector<LinkRow> link_table(const SimResult& result) {
  std::map<std::pair<std::string, std::string>, LinkRow> rows;
  for (const auto& d : result.dispatches) {
    if (d.verb != OpVerb::kCopy) continue;
    auto& row = rows[{d.source, d.destination}];
    row.source = d.source;
    row.destination = d.destination;
    row.scheduled += d.size;
    ++row.files;
  }
  for (const auto& o : result.outcomes) {
    if (o.verb != OpVerb::kCopy) continue;
    auto& row = rows[{o.source, o.destination}];
    row.source = o.source;
    row.destination = o.destination;
    ++row.finished;
    if (!o.success) ++row.failed;
  }
  std::vector<LinkRow> out;
  for (auto& [_, row] : rows) out.push_back(std::move(row));
  return out;
}

std::vector<HourlyRow> hourly_volume(const SimResult& result) {
  std::map<std::pair<std::int64_t, std::string>, Bytes> bins;
  for (const auto& o : result.outcomes) {
    if (o.verb != OpVerb::kCopy || !o.success) continue;
    bins[{(o.time - kStart) / kHour, o.destination}] += o.size;
  }
  std::vector<HourlyRow> out;
  for (const auto& [key, bytes] : bins) out.push_back({key.first, key.second, bytes});
  return out;
}

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> site_columns(const SimResult& result) {
  std::set<std::string> names;
  for (const auto& s : result.series) {
    for (const auto& [name, _] : s.site_occupancy) names.insert(name);
  }
  return {names.begin(), names.end()};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

std::string series_csv(const SimResult& result) {
  auto sites = site_columns(result);
  std::ostringstream out;
  out << "time,day,fleet_occupancy,injected,transferred,deleted,dealer_volume,pending_total,missing,"
         "protected_volume,occupied,triggered,flagged,conservation_error";
  for (const auto& s : sites) out << ",occ_" << s;
  out << "\n";
  for (const auto& s : result.series) {
    out << s.time << "," << fixed(s.day, 3) << "," << fixed(s.fleet_occupancy) << "," << s.injected << ","
        << s.transferred << "," << s.deleted << "," << s.dealer_volume << "," << s.pending_total << "," << s.missing
        << "," << s.protected_volume << "," << s.occupied << "," << s.triggered << "," << s.flagged << ","
        << s.conservation_error;
    for (const auto& name : sites) {
      auto it = s.site_occupancy.find(name);
      out << "," << (it == s.site_occupancy.end() ? std::string() : fixed(it->second));
    }
    out << "\n";
  }
  return out.str();
}

nlohmann::json series_json(const SimResult& result) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : result.series) {
    nlohmann::json occ = nlohmann::json::object();
    for (const auto& [name, v] : s.site_occupancy) occ[name] = v;
    arr.push_back({{"time", s.time},
                   {"day", s.day},
                   {"fleet_occupancy", s.fleet_occupancy},
                   {"site_occupancy", occ},
                   {"injected", s.injected},
                   {"transferred", s.transferred},
                   {"deleted", s.deleted},
                   {"dealer_volume", s.dealer_volume},
                   {"pending_total", s.pending_total},
                   {"missing", s.missing},
                   {"protected_volume", s.protected_volume},
                   {"occupied", s.occupied},
                   {"triggered", s.triggered},
                   {"flagged", s.flagged},
                   {"conservation_error", s.conservation_error}});
  }
  return arr;
}

std::string detox_csv(const SimResult& result) {
  std::ostringstream out;
  out << "cycle,time,site,occupancy_before,occupancy_after,triggered,protected_above_watermark,deleted\n";
  for (const auto& c : result.detox) {
    out << c.cycle << "," << c.time << "," << c.site << "," << fixed(c.occupancy_before) << ","
        << fixed(c.occupancy_after) << "," << (c.triggered ? 1 : 0) << "," << (c.protected_above_watermark ? 1 : 0)
        << "," << c.deleted << "\n";
  }
  return out.str();
}

std::string links_csv(const SimResult& result) {
  std::ostringstream out;
  out << "source,destination,scheduled_bytes,files,finished,failed,failure_fraction\n";
  for (const auto& r : link_table(result)) {
    out << r.source << "," << r.destination << "," << r.scheduled << "," << r.files << "," << r.finished << ","
        << r.failed << "," << fixed(r.failure_fraction()) << "\n";
  }
  return out.str();
}

std::string hourly_csv(const SimResult& result) {
  std::ostringstream out;
  out << "hour,destination,bytes\n";
  for (const auto& r : hourly_volume(result)) out << r.hour << "," << r.destination << "," << r.bytes << "\n";
  return out.str();
}

void emit_reports(const SimResult& result, const Scenario& scenario, const std::filesystem::path& dir) {
  if (result.series.empty()) throw Error("no samples to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());

  std::ostringstream dealer;
  dealer << "cycle,time,selected,pending,throttled\n";
  for (const auto& c : result.dealer) {
    dealer << c.cycle << "," << c.time << "," << c.selected << "," << c.pending << "," << (c.throttled ? 1 : 0)
           << "\n";
  }

  std::size_t post = 0, in_band = 0;
  for (const auto& s : result.series) {
    if (s.day < scenario.warmup_days) continue;
    ++post;
    if (s.fleet_occupancy >= scenario.lower && s.fleet_occupancy <= scenario.upper) ++in_band;
  }
  nlohmann::json summary = {{"scenario", scenario.name},
                            {"seed", scenario.seed},
                            {"days", scenario.days},
                            {"samples", result.series.size()},
                            {"post_warmup_samples", post},
                            {"post_warmup_in_band", in_band},
                            {"initial_occupied", result.initial_occupied},
                            {"injected", result.total_injected},
                            {"transferred", result.total_transferred},
                            {"deleted", result.total_deleted},
                            {"final_occupied", result.series.back().occupied},
                            {"sustained_overflow", result.sustained_overflow}};

  write_file(dir / "series.csv", series_csv(result));
  write_file(dir / "series.json", series_json(result).dump(1) + "\n");
  write_file(dir / "detox.csv", detox_csv(result));
  write_file(dir / "dealer.csv", dealer.str());
  write_file(dir / "links.csv", links_csv(result));
  write_file(dir / "hourly.csv", hourly_csv(result));
  write_file(dir / "summary.json", summary.dump(1) + "\n");
  write_file(dir / "final_inventory.txt", result.final_snapshot);
}

}  // namespace stowage::sim
