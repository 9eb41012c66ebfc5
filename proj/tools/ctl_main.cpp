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


// dynamo-ctl: submit applications, manage sequences and show status on a
// running daemon.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "tool_util.hpp"

using namespace stowage;
using nlohmann::json;

namespace {

class Client {
 public:
  Client(const std::string& url, std::string token) : http_(url), token_(std::move(token)) {
    http_.set_connection_timeout(5);
    http_.set_read_timeout(30);
  }

  json get(const std::string& path) { return check(http_.Get(path, headers())); }
  json post(const std::string& path, const std::string& body, const char* type = "application/json") {
    return check(http_.Post(path, headers(), body, type));
  }

 private:
  httplib::Headers headers() const {
    httplib::Headers h;
    if (!token_.empty()) h.emplace("Authorization", "Bearer " + token_);
    return h;
  }

  static json check(const httplib::Result& res) {
    if (!res) throw Error("request failed: " + httplib::to_string(res.error()));
    json body = json::parse(res->body, nullptr, false);
    if (res->status != 200) {
      std::string msg = body.is_object() && body.contains("error") ? body["error"].get<std::string>() : res->body;
      throw Error("HTTP " + std::to_string(res->status) + ": " + msg);
    }
    return body;
  }

  httplib::Client http_;
  std::string token_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control a running stowage daemon"};
  std::string url = "http://127.0.0.1:8080";
  std::string token;
  if (const char* env = std::getenv("STOWAGE_TOKEN")) token = env;
  app.add_option("--url", url, "Daemon base URL");
  app.add_option("--token", token, "Bearer token (default: $STOWAGE_TOKEN)");
  app.require_subcommand(1);

  auto* status = app.add_subcommand("status", "Server version, lock holder, applications and sequences");
  std::optional<std::int64_t> status_id;
  status->add_option("id", status_id, "Show a single application");

  auto* submit = app.add_subcommand("submit", "Queue an application");
  std::string app_name;
  bool write = false, wait = false;
  submit->add_option("app", app_name, "Application name")->required();
  submit->add_flag("--write", write, "Run write-enabled");
  submit->add_flag("--wait", wait, "Wait for the run to finish");

  auto* sequence = app.add_subcommand("sequence", "Start or stop a scheduler sequence");
  sequence->require_subcommand(1);
  auto* seq_start = sequence->add_subcommand("start", "Start the sequence defined in a file");
  std::string seq_file, seq_name;
  seq_start->add_option("file", seq_file, "Sequence definition")->required()->check(CLI::ExistingFile);
  auto* seq_stop = sequence->add_subcommand("stop", "Stop a running sequence");
  seq_stop->add_option("name", seq_name, "Sequence name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    Client client(url, token);
    if (*status) {
      auto out = status_id ? client.get("/ctl/apps/" + std::to_string(*status_id)) : client.get("/ctl/status");
      std::cout << out.dump(2) << "\n";
    } else if (*submit) {
      auto id = client.post("/ctl/apps", json{{"name", app_name}, {"write", write}}.dump())["id"].get<std::int64_t>();
      if (!wait) {
        std::cout << id << "\n";
        return 0;
      }
      while (true) {
        auto a = client.get("/ctl/apps/" + std::to_string(id));
        auto state = a["state"].get<std::string>();
        if (state != "QUEUED" && state != "RUNNING") {
          std::cout << a.dump(2) << "\n";
          return state == "DONE" ? 0 : 3;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
      }
    } else if (*seq_start) {
      std::cout << client.post("/ctl/sequences", tools::read_text(seq_file), "text/plain").dump(2) << "\n";
    } else if (*seq_stop) {
      std::cout << client.post("/ctl/sequences/stop", json{{"name", seq_name}}.dump()).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dynamo-ctl: %s\n", e.what());
    return 1;
  }
  return 0;
}
