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


// dealer: run one placement cycle over a snapshot.
//
// The configuration is key = value lines:
//   snapshot = world.tsv            (required)
//   accesses = accesses.csv
//   registry = registry.json        pending operations and user requests
//   policy = detox.policy           simulated first to feed the balancer
//   plugins = popularity,balancer,undertaker,request,enforcer
//   enforcer_rules = rules.txt
//   priority.<plugin> = 2
//   cap_tb, throttle_tb, target_occupancy, partition, now
//   popularity_threshold, popularity_window_days, balancer_threshold
//   report = out.json               (default: stdout)
//   requests = ops.json             the copy operations the cycle would queue

#include <cstdio>
#include <random>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "stowage/dealer.hpp"
#include "stowage/detox.hpp"
#include "stowage/policy.hpp"
#include "tool_util.hpp"

using namespace stowage;
namespace pt = boost::property_tree;

namespace {

struct Settings {
  std::string snapshot, accesses, registry, policy, enforcer_rules, report = "-", requests;
  std::vector<std::string> plugins{"popularity", "balancer", "undertaker", "request"};
  dealer::Config config;
  double popularity_threshold = 50;
  double popularity_window_days = 7;
  double balancer_threshold = 0.7;
  std::optional<Timestamp> now;
};

Settings load_settings(const std::string& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(e.what());
  }
  Settings s;
  auto number = [&](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::logic_error&) {
      throw Error(path + ": " + key + ": bad number '" + v + "'");
    }
  };
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw Error(path + ": sections are not supported ([" + key + "])");
    const std::string v = node.data();
    if (key == "snapshot") s.snapshot = v;
    else if (key == "accesses") s.accesses = v;
    else if (key == "registry") s.registry = v;
    else if (key == "policy") s.policy = v;
    else if (key == "enforcer_rules") s.enforcer_rules = v;
    else if (key == "report") s.report = v;
    else if (key == "requests") s.requests = v;
    else if (key == "partition") s.config.partition = v;
    else if (key == "plugins") {
      s.plugins.clear();
      for (const auto& p : split(v, ',')) {
        if (!trim(p).empty()) s.plugins.emplace_back(trim(p));
      }
    } else if (key == "cap_tb") s.config.cap = static_cast<Bytes>(number(key, v) * kTB);
    else if (key == "throttle_tb") s.config.throttle = static_cast<Bytes>(number(key, v) * kTB);
    else if (key == "target_occupancy") s.config.target_occupancy = number(key, v);
    else if (key == "popularity_threshold") s.popularity_threshold = number(key, v);
    else if (key == "popularity_window_days") s.popularity_window_days = number(key, v);
    else if (key == "balancer_threshold") s.balancer_threshold = number(key, v);
    else if (key == "now") s.now = static_cast<Timestamp>(number(key, v));
    else if (starts_with(key, "priority.")) s.config.priorities[key.substr(9)] = number(key, v);
    else throw Error(path + ": unknown key '" + key + "'");
  }
  if (s.snapshot.empty()) throw Error(path + ": snapshot is required");
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run one replica placement cycle"};
  std::string config_path;
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for the weighted draw");
  CLI11_PARSE(app, argc, argv);

  try {
    auto s = load_settings(config_path);
    auto inventory = load_snapshot_file(s.snapshot);
    AccessLog log;
    if (!s.accesses.empty()) log = tools::load_accesses(s.accesses);
    Registry registry;
    if (!s.registry.empty()) registry.load(s.registry);
    Timestamp now = s.now.value_or(tools::wall_now());

    std::optional<detox::CycleReport> last_detox;
    if (!s.policy.empty()) {
      detox::Options opt;
      opt.simulate = true;
      opt.now = now;
      opt.accesses = &log;
      last_detox = detox::run_cycle(inventory, policy::parse(tools::read_text(s.policy)), opt).report;
    }

    std::vector<std::unique_ptr<dealer::Plugin>> owned;
    for (const auto& name : s.plugins) {
      if (name == "popularity") {
        owned.push_back(std::make_unique<dealer::PopularityPlugin>(
            s.popularity_threshold, static_cast<Timestamp>(s.popularity_window_days * kDay)));
      } else if (name == "balancer") {
        owned.push_back(std::make_unique<dealer::BalancerPlugin>(s.balancer_threshold));
      } else if (name == "undertaker") {
        owned.push_back(std::make_unique<dealer::UndertakerPlugin>());
      } else if (name == "request") {
        owned.push_back(std::make_unique<dealer::RequestPlugin>());
      } else if (name == "enforcer") {
        if (s.enforcer_rules.empty()) throw Error("the enforcer plugin needs enforcer_rules");
        auto p = std::make_unique<dealer::EnforcerPlugin>(tools::read_text(s.enforcer_rules));
        for (const auto& e : p->errors()) std::fprintf(stderr, "dealer: enforcer: %s\n", e.c_str());
        owned.push_back(std::move(p));
      } else {
        throw Error("unknown plugin '" + name + "'");
      }
    }
    std::vector<dealer::Plugin*> plugins;
    for (const auto& p : owned) plugins.push_back(p.get());

    dealer::Context ctx;
    ctx.inventory = &inventory;
    ctx.registry = &registry;
    ctx.accesses = &log;
    ctx.now = now;
    ctx.last_detox = last_detox ? &*last_detox : nullptr;
    std::mt19937_64 rng(seed);
    auto result = dealer::run_cycle(ctx, plugins, s.config, rng, 1);
    tools::write_text(s.report, dealer::to_json(result.report).dump(2) + "\n");
    if (!s.requests.empty()) {
      nlohmann::json ops = nlohmann::json::array();
      for (const auto& r : result.requests) {
        ops.push_back({{"verb", to_string(r.verb)},
                       {"dataset", r.block.dataset},
                       {"block", r.block.block},
                       {"site", r.site},
                       {"group", r.group},
                       {"reason", r.reason}});
      }
      tools::write_text(s.requests, ops.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dealer: %s\n", e.what());
    return 1;
  }
  return 0;
}
