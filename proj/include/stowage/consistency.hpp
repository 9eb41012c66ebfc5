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


// Site consistency: compare a storage listing with what the inventory
// expects at the site. Reports only; nothing is repaired.

#ifndef STOWAGE_CONSISTENCY_HPP
#define STOWAGE_CONSISTENCY_HPP

#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/inventory.hpp"
#include "stowage/registry.hpp"

namespace stowage::consistency {

struct ListingEntry {
  std::string path;
  Bytes size = 0;
  Timestamp mtime = 0;
  bool operator==(const ListingEntry&) const = default;
};

struct SiteListing {
  std::string site;
  std::vector<ListingEntry> entries;  // sorted by path
  Timestamp listing_time = 0;
  /// Some subtree could not be read.
  bool partial = false;
  std::vector<std::string> errors;
};

/// Lfns touched by queued or running block operations at one site.
struct PendingOps {
  std::set<std::string> deletions;
  std::set<std::string> transfers;
};

PendingOps pending_ops(const Inventory& inventory, const Registry& registry, const std::string& site);

struct Config {
  /// Site namespace prefix: path = root + lfn.
  std::string root;
  Timestamp grace = kDay;
  std::vector<std::string> exclude_patterns;  // wildcard, matched against paths
  bool allow_partial = false;
};

class PartialListing : public Error {
 public:
  using Error::Error;
};

struct Report {
  std::string site;
  std::vector<std::string> missing;  // lfns, sorted
  std::vector<std::string> orphans;  // paths, sorted
  std::vector<std::string> unmapped;
  std::int64_t excluded_grace = 0;
  std::int64_t excluded_pattern = 0;
  std::int64_t excluded_pending = 0;
  std::int64_t size_mismatch = 0;
  std::int64_t expected = 0;
  std::int64_t listed = 0;
  Timestamp listing_time = 0;
  Timestamp checked_at = 0;
  double duration_s = 0;
  bool partial = false;

  bool clean() const { return missing.empty() && orphans.empty(); }
};

/// Filters apply in order: pattern, pending, grace. Each excluded item is
/// counted once, under the first filter that caught it. A listed file whose
/// size differs from the catalog is both missing and an orphan.
Report check_site(const Inventory& inventory, const SiteListing& listing, const PendingOps& pending,
                  const Config& config, Timestamp now);

/// Recursive listing of a local directory tree. Paths are absolute.
SiteListing local_lister(const std::string& root_path, const std::string& site = "", Timestamp now = 0);

nlohmann::json to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);
std::string summary_csv_header();
std::string summary_csv_row(const Report& report);

}  // namespace stowage::consistency

#endif  // STOWAGE_CONSISTENCY_HPP
