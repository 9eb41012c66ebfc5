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

// Text snapshots and deltas.
//
// A snapshot is one record per line, `TYPE<TAB>field=value<TAB>...`. Record
// types appear in the order GROUP, PARTITION, SITE, DATASET, BLOCK, FILE,
// REPLICA; the canonical form sorts lines within each type. Backslash,
// tab, newline and carriage return are backslash-escaped in values; list
// values (a replica's present files) additionally escape commas per item.
//
// A delta is the same record lines prefixed by `U ` (update) or `D `
// (delete), terminated by a line `END`.

#ifndef STOWAGE_SNAPSHOT_HPP
#define STOWAGE_SNAPSHOT_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stowage/inventory.hpp"

namespace stowage {

enum class RecordType { kGroup, kPartition, kSite, kDataset, kBlock, kFile, kReplica };

const char* to_string(RecordType t);

struct Record {
  RecordType type = RecordType::kGroup;
  std::vector<std::pair<std::string, std::string>> fields;

  const std::string* find(std::string_view field) const;
  /// Throws Error naming the missing field.
  const std::string& at(std::string_view field) const;
  void add(std::string field, std::string value) { fields.emplace_back(std::move(field), std::move(value)); }
  bool operator==(const Record&) const = default;
};

std::string escape_value(std::string_view raw);
std::string unescape_value(std::string_view escaped);

std::string format_record(const Record& r);
Record parse_record(std::string_view line);

Record to_record(const Group& g);
Record to_record(const Partition& p);
Record to_record(const Site& s);
Record to_record(const Dataset& d);
Record to_record(const std::string& dataset, const Block& b);
Record to_record(const BlockKey& block, const File& f);
Record to_record(const BlockReplica& r);

/// Identifying fields only; what a DELETE carries.
Record key_record(RecordType type, const std::vector<std::string>& key);

class SnapshotError : public Error {
 public:
  SnapshotError(std::size_t line, const std::string& what)
      : Error("snapshot line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Builds a fully interlinked inventory. File records go to `catalog`.
Inventory load_snapshot(std::istream& in,
                        std::shared_ptr<FileCatalog> catalog = std::make_shared<MemoryFileCatalog>());
Inventory load_snapshot_file(const std::filesystem::path& path,
                             std::shared_ptr<FileCatalog> catalog = std::make_shared<MemoryFileCatalog>());

/// Canonical text including file records from the inventory's catalog.
std::string canonical_snapshot(const Inventory& inventory);
void save_snapshot(const Inventory& inventory, std::ostream& out);
/// Writes via a temporary file and rename.
void save_snapshot_file(const Inventory& inventory, const std::filesystem::path& path);

enum class DeltaVerb { kUpdate, kDelete };

struct DeltaEntry {
  DeltaVerb verb = DeltaVerb::kUpdate;
  Record record;
  bool operator==(const DeltaEntry&) const = default;
};

struct InventoryDelta {
  std::vector<DeltaEntry> entries;

  bool empty() const { return entries.empty(); }
  void update(Record r) { entries.push_back({DeltaVerb::kUpdate, std::move(r)}); }
  void remove(Record r) { entries.push_back({DeltaVerb::kDelete, std::move(r)}); }
  void append(const InventoryDelta& other);
  bool operator==(const InventoryDelta&) const = default;
};

class DeltaError : public Error {
 public:
  using Error::Error;
};

std::string format_delta(const InventoryDelta& delta);
/// Reads one delta. Returns nullopt at clean end of input or when the END
/// line is missing (a torn write). Throws DeltaError on malformed lines.
std::optional<InventoryDelta> read_delta(std::istream& in);
InventoryDelta parse_delta(const std::string& text);

/// Applies the delta to a copy of `base`. On any error the copy is
/// discarded and DeltaError is thrown; `base` and its file catalog are
/// untouched.
Inventory apply_delta(const Inventory& base, const InventoryDelta& delta);

}  // namespace stowage

#endif  // STOWAGE_SNAPSHOT_HPP
