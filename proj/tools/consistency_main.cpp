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


// consistency: compare a local directory tree with what a snapshot expects
// at one site. Exit status 0 when clean, 2 when files are missing or
// orphaned, 1 on errors.

#include <cstdio>
#include <filesystem>

#include "CLI11.hpp"
#include "stowage/consistency.hpp"
#include "stowage/snapshot.hpp"
#include "tool_util.hpp"

using namespace stowage;

int main(int argc, char** argv) {
  CLI::App app{"Check a site's storage against the inventory"};
  std::string site, root, snapshot, registry_path, report_path = "-", csv_path;
  std::vector<std::string> excludes;
  Timestamp grace = kDay;
  bool allow_partial = false;
  std::optional<Timestamp> now;
  app.add_option("--site", site, "Site name")->required();
  app.add_option("--root", root, "Directory holding the site namespace; path = root + lfn")->required();
  app.add_option("--snapshot", snapshot, "Inventory snapshot")->required()->check(CLI::ExistingFile);
  app.add_option("--registry", registry_path, "Registry JSON with queued operations")->check(CLI::ExistingFile);
  app.add_option("--grace", grace, "Ignore files modified within this many seconds");
  app.add_option("--exclude", excludes, "Wildcard path pattern to ignore; repeatable");
  app.add_flag("--allow-partial", allow_partial, "Report on a listing with unreadable subtrees");
  app.add_option("--now", now, "Check time, epoch seconds (default: now)");
  app.add_option("--report", report_path, "JSON report file (default: stdout)");
  app.add_option("--csv", csv_path, "Summary CSV file (header plus one row)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto inventory = load_snapshot_file(snapshot);
    if (!inventory.find_site(site)) throw Error("site " + site + " is not in the snapshot");
    Registry registry;
    if (!registry_path.empty()) registry.load(registry_path);
    Timestamp t = now.value_or(tools::wall_now());
    consistency::Config config;
    config.root = std::filesystem::absolute(root).lexically_normal().string();
    while (config.root.size() > 1 && config.root.back() == '/') config.root.pop_back();
    config.grace = grace;
    config.exclude_patterns = excludes;
    config.allow_partial = allow_partial;
    auto listing = consistency::local_lister(config.root, site, t);
    auto report = consistency::check_site(inventory, listing, consistency::pending_ops(inventory, registry, site),
                                          config, t);
    tools::write_text(report_path, consistency::to_json(report).dump(2) + "\n");
    if (!csv_path.empty()) {
      tools::write_text(csv_path, consistency::summary_csv_header() + consistency::summary_csv_row(report));
    }
    return report.clean() ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "consistency: %s\n", e.what());
    return 1;
  }
}
