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


#include "stowage/consistency.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <sstream>

namespace stowage::consistency {

namespace fs = std::filesystem;

PendingOps pending_ops(const Inventory& inventory, const Registry& registry, const std::string& site) {
  PendingOps out;
  for (const auto& r : registry.replica_ops()) {
    if (r.site != site || (r.state != OpState::kNew && r.state != OpState::kInProgress)) continue;
    std::vector<File> files;
    try {
      files = inventory.file_catalog().files(r.block);
    } catch (const PersistenceUnavailable&) {
      continue;
    }
    auto& into = r.verb == OpVerb::kDelete ? out.deletions : out.transfers;
    for (const auto& f : files) into.insert(f.lfn);
  }
  return out;
}

namespace {

bool excluded_by_pattern(const Config& config, const std::string& path) {
  return std::any_of(config.exclude_patterns.begin(), config.exclude_patterns.end(),
                     [&](const std::string& p) { return wildcard_match(p, path); });
}

}  // namespace

Report check_site(const Inventory& inventory, const SiteListing& listing, const PendingOps& pending,
                  const Config& config, Timestamp now) {
  if (listing.partial && !config.allow_partial) {
    throw PartialListing("listing of " + listing.site + " is partial");
  }
  auto started = std::chrono::steady_clock::now();
  Report report;
  report.site = listing.site;
  report.listing_time = listing.listing_time;
  report.checked_at = now;
  report.partial = listing.partial;

  std::map<std::string, Bytes> expected;
  for (const auto* br : inventory.replicas_at(listing.site)) {
    for (const auto& f : inventory.file_catalog().files(br->block_key())) {
      if (br->complete() || br->present_files->count(f.lfn)) expected.emplace(f.lfn, f.size);
    }
  }
  report.expected = static_cast<std::int64_t>(expected.size());
  report.listed = static_cast<std::int64_t>(listing.entries.size());

  auto is_pending = [&](const std::string& lfn) {
    return pending.deletions.count(lfn) > 0 || pending.transfers.count(lfn) > 0;
  };

  std::set<std::string> seen;
  for (const auto& e : listing.entries) {
    if (!starts_with(e.path, config.root) || e.path.size() == config.root.size()) {
      report.unmapped.push_back(e.path);
      continue;
    }
    std::string lfn = e.path.substr(config.root.size());
    auto it = expected.find(lfn);
    if (it != expected.end() && it->second == e.size) {
      seen.insert(lfn);
      continue;
    }
    // Unknown, or a corrupt copy of a known file.
    if (it != expected.end()) ++report.size_mismatch;
    if (excluded_by_pattern(config, e.path)) {
      ++report.excluded_pattern;
    } else if (is_pending(lfn)) {
      ++report.excluded_pending;
    } else if (e.mtime > now - config.grace) {
      ++report.excluded_grace;
    } else {
      report.orphans.push_back(e.path);
    }
  }

  for (const auto& [lfn, size] : expected) {
    if (seen.count(lfn)) continue;
    if (excluded_by_pattern(config, config.root + lfn)) {
      ++report.excluded_pattern;
    } else if (is_pending(lfn)) {
      ++report.excluded_pending;
    } else {
      report.missing.push_back(lfn);
    }
  }

  std::sort(report.orphans.begin(), report.orphans.end());
  std::sort(report.unmapped.begin(), report.unmapped.end());
  report.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

namespace {

void walk(const fs::path& dir, SiteListing& out) {
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) {
    out.partial = true;
    out.errors.push_back(dir.string() + ": " + ec.message());
    return;
  }
  for (; it != fs::directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto& p = it->path();
    struct stat st {};
    if (::lstat(p.c_str(), &st) != 0) {
      out.partial = true;
      out.errors.push_back(p.string() + ": stat failed");
      continue;
    }
    if (S_ISDIR(st.st_mode)) {
      walk(p, out);
    } else if (S_ISREG(st.st_mode)) {
      out.entries.push_back({p.string(), static_cast<Bytes>(st.st_size), static_cast<Timestamp>(st.st_mtime)});
    }
  }
  if (ec) {
    out.partial = true;
    out.errors.push_back(dir.string() + ": " + ec.message());
  }
}

}  // namespace

SiteListing local_lister(const std::string& root_path, const std::string& site, Timestamp now) {
  SiteListing out;
  out.site = site;
  out.listing_time = now;
  std::error_code ec;
  if (!fs::is_directory(root_path, ec)) {
    out.partial = true;
    out.errors.push_back(root_path + ": not a readable directory");
    return out;
  }
  walk(root_path, out);
  std::sort(out.entries.begin(), out.entries.end(),
            [](const ListingEntry& a, const ListingEntry& b) { return a.path < b.path; });
  return out;
}

nlohmann::json to_json(const Report& r) {
  return {{"site", r.site},
          {"missing", r.missing},
          {"orphans", r.orphans},
          {"unmapped", r.unmapped},
          {"excluded", {{"grace", r.excluded_grace}, {"pattern", r.excluded_pattern}, {"pending", r.excluded_pending}}},
          {"size_mismatch", r.size_mismatch},
          {"expected", r.expected},
          {"listed", r.listed},
          {"listing_time", r.listing_time},
          {"checked_at", r.checked_at},
          {"duration_s", r.duration_s},
          {"partial", r.partial}};
}

Report report_from_json(const nlohmann::json& j) {
  Report r;
  r.site = j.at("site").get<std::string>();
  r.missing = j.at("missing").get<std::vector<std::string>>();
  r.orphans = j.at("orphans").get<std::vector<std::string>>();
  r.unmapped = j.value("unmapped", std::vector<std::string>{});
  const auto& ex = j.at("excluded");
  r.excluded_grace = ex.value("grace", 0);
  r.excluded_pattern = ex.value("pattern", 0);
  r.excluded_pending = ex.value("pending", 0);
  r.size_mismatch = j.value("size_mismatch", 0);
  r.expected = j.value("expected", 0);
  r.listed = j.value("listed", 0);
  r.listing_time = j.value("listing_time", Timestamp{0});
  r.checked_at = j.value("checked_at", Timestamp{0});
  r.duration_s = j.value("duration_s", 0.0);
  r.partial = j.value("partial", false);
  return r;
}

std::string summary_csv_header() {
  return "site,checked_at,expected,listed,missing,orphans,unmapped,excluded_grace,excluded_pattern,"
         "excluded_pending,size_mismatch,duration_s\n";
}

std::string summary_csv_row(const Report& r) {
  std::ostringstream out;
  out << r.site << ',' << r.checked_at << ',' << r.expected << ',' << r.listed << ',' << r.missing.size() << ','
      << r.orphans.size() << ',' << r.unmapped.size() << ',' << r.excluded_grace << ',' << r.excluded_pattern << ','
      << r.excluded_pending << ',' << r.size_mismatch << ',' << r.duration_s << '\n';
  return out.str();
}

}  // namespace stowage::consistency
