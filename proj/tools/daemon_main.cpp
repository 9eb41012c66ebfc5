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


// stowaged: the resident inventory server with its REST interface.
//
// Besides the keys load_daemon_config understands, the configuration may
// carry:
//   dealer.cap_tb, dealer.throttle_tb, dealer.target_occupancy,
//   dealer.partition, dealer.priority.<plugin>
//   detox.partition
//   fom.link_mb_s, fom.link_latency_s, fom.link_failure_probability
//   seed
//   cluster.address = host:port     enables clustering
//   cluster.peers = host:port,...   tried in order for a join; none
//                                   reachable starts a new cluster
//   cluster.heartbeat_s, cluster.miss_limit, cluster.lock_timeout_s

#include <csignal>
#include <cstdio>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "stowage/apps.hpp"
#include "stowage/cluster.hpp"
#include "stowage/policy.hpp"
#include "stowage/server.hpp"
#include "stowage/snapshot.hpp"
#include "tool_util.hpp"

using namespace stowage;

namespace {

double number(const std::map<std::string, std::string>& extra, const std::string& key, double fallback) {
  auto it = extra.find(key);
  if (it == extra.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw Error("config: " + key + ": bad number '" + it->second + "'");
  }
}

std::string text(const std::map<std::string, std::string>& extra, const std::string& key) {
  auto it = extra.find(key);
  return it == extra.end() ? std::string() : it->second;
}

void check_keys(const std::map<std::string, std::string>& extra) {
  static const std::set<std::string> known = {
      "dealer.cap_tb", "dealer.throttle_tb", "dealer.target_occupancy", "dealer.partition", "detox.partition",
      "fom.link_mb_s", "fom.link_latency_s", "fom.link_failure_probability", "seed", "cluster.address",
      "cluster.peers", "cluster.heartbeat_s", "cluster.miss_limit", "cluster.lock_timeout_s"};
  for (const auto& [key, _] : extra) {
    if (!known.count(key) && !starts_with(key, "dealer.priority.")) throw Error("config: unknown key '" + key + "'");
  }
}

void serve_http(Server& server, httplib::Server& http) {
  auto handler = [&server](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    r.body = req.body;
    auto auth = req.get_header_value("Authorization");
    if (starts_with(auth, "Bearer ")) r.token = std::string(trim(std::string_view(auth).substr(7)));
    r.source = req.remote_addr;
    auto out = server.handle(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type.c_str());
  };
  http.Get(".*", handler);
  http.Post(".*", handler);
  http.Put(".*", handler);
  http.Delete(".*", handler);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Storage federation inventory server"};
  std::string config_path;
  app.add_option("--config", config_path, "Daemon configuration")->required()->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  // Signals are taken by a dedicated thread; block them everywhere else.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    auto cfg = load_daemon_config(config_path);
    check_keys(cfg.extra);

    std::shared_ptr<cluster::TcpTransport> transport;
    std::unique_ptr<cluster::Node> node;
    std::string cluster_address = text(cfg.extra, "cluster.address");
    if (!cluster_address.empty()) {
      cluster::ClusterConfig cc;
      cc.heartbeat_interval = number(cfg.extra, "cluster.heartbeat_s", cc.heartbeat_interval);
      cc.miss_limit = static_cast<int>(number(cfg.extra, "cluster.miss_limit", cc.miss_limit));
      cc.lock_timeout = number(cfg.extra, "cluster.lock_timeout_s", cc.lock_timeout);
      transport = std::make_shared<cluster::TcpTransport>();
      node = std::make_unique<cluster::Node>(cluster_address, transport, cc);
    }
    auto server = std::make_unique<Server>(cfg.server, node ? node->lock() : nullptr);
    if (node) node->attach(*server);

    if (!cfg.snapshot.empty() && server->store().version() == 0) {
      server->store().reset(load_snapshot_file(cfg.snapshot), 1);
      std::fprintf(stderr, "stowaged: imported %s\n", cfg.snapshot.c_str());
    }

    apps::Settings settings;
    if (!cfg.policy.empty()) settings.detox_policy = policy::parse(tools::read_text(cfg.policy));
    settings.detox_partition = text(cfg.extra, "detox.partition");
    settings.dealer.cap = static_cast<Bytes>(number(cfg.extra, "dealer.cap_tb", settings.dealer.cap / 1e12) * kTB);
    settings.dealer.throttle =
        static_cast<Bytes>(number(cfg.extra, "dealer.throttle_tb", settings.dealer.throttle / 1e12) * kTB);
    settings.dealer.target_occupancy = number(cfg.extra, "dealer.target_occupancy", settings.dealer.target_occupancy);
    if (auto p = text(cfg.extra, "dealer.partition"); !p.empty()) settings.dealer.partition = p;
    for (const auto& [key, _] : cfg.extra) {
      if (starts_with(key, "dealer.priority.")) settings.dealer.priorities[key.substr(16)] = number(cfg.extra, key, 1);
    }
    settings.seed = static_cast<std::uint64_t>(number(cfg.extra, "seed", 1));

    // No transfer service is wired in; file operations run against the
    // simulated backend on the service clock.
    Server* raw = server.get();
    auto backend = std::make_shared<fom::SimulatedBackend>([raw] { return raw->now(); }, settings.seed);
    fom::LinkModel link;
    link.bandwidth = number(cfg.extra, "fom.link_mb_s", link.bandwidth / 1e6) * 1e6;
    link.latency = number(cfg.extra, "fom.link_latency_s", link.latency);
    link.failure_probability = number(cfg.extra, "fom.link_failure_probability", link.failure_probability);
    backend->set_default_link(link);
    for (const auto& [name, site] : server->store().image()->sites()) backend->add_endpoint(site.endpoint);
    settings.backend = backend;

    apps::StandardApps standard(*server, settings);
    standard.register_all();

    if (node) {
      bool joined = false;
      for (const auto& peer : split(text(cfg.extra, "cluster.peers"), ',')) {
        auto p = std::string(trim(peer));
        if (p.empty() || p == cluster_address) continue;
        try {
          node->join(p);
          joined = true;
          std::fprintf(stderr, "stowaged: joined the cluster through %s\n", p.c_str());
          break;
        } catch (const cluster::JoinError& e) {
          std::fprintf(stderr, "stowaged: %s\n", e.what());
        }
      }
      if (!joined) {
        node->bootstrap();
        std::fprintf(stderr, "stowaged: started a new cluster at %s\n", cluster_address.c_str());
      }
      node->start();
    }

    for (const auto& path : cfg.sequences) server->start_sequence(parse_sequence(tools::read_text(path)));

    httplib::Server http;
    serve_http(*server, http);
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      http.stop();
    });
    if (!http.bind_to_port(cfg.host.c_str(), cfg.port)) {
      throw Error("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
    }
    std::fprintf(stderr, "stowaged: listening on %s:%d\n", cfg.host.c_str(), cfg.port);
    http.listen_after_bind();
    if (waiter.joinable()) {
      // listen returned on its own; wake the signal thread.
      pthread_kill(waiter.native_handle(), SIGTERM);
      waiter.join();
    }
    for (const auto& name : server->sequences()) server->stop_sequence(name);
    server->wait_all();
    server->save_registry();
    if (node) node->stop();
    server.reset();
    node.reset();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stowaged: %s\n", e.what());
    return 1;
  }
  return 0;
}
