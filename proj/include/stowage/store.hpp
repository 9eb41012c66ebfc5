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


// Durable inventory: a compacted snapshot plus an append-only delta log.
//
// Directory layout:
//   snapshot.meta     JSON {"version": V, "file": "snapshot.V.tsv"}
//   snapshot.V.tsv    canonical snapshot at version V
//   deltas.log        records "DELTA <version> <bytes> <crc32>\n<payload>"
//
// A commit is acknowledged once its record is fsynced. Recovery loads the
// snapshot and replays records above its version; a torn or corrupt tail
// record is cut off.

#ifndef STOWAGE_STORE_HPP
#define STOWAGE_STORE_HPP

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>

#include "stowage/snapshot.hpp"

namespace stowage {

class InventoryStore {
 public:
  /// Test hooks: the commit or compaction stops at this point as if the
  /// process died, leaving the files as they are.
  enum class CrashPoint {
    kNone,
    kBeforeAppend,
    kTornAppend,
    kAfterAppend,
    kAfterPublish,
    kCompactAfterSnapshot,
    kCompactAfterMeta,
  };

  class SimulatedCrash : public Error {
   public:
    using Error::Error;
  };

  /// Opens `dir`, creating it if needed, and recovers the latest image.
  /// An empty `dir` keeps everything in memory.
  explicit InventoryStore(std::filesystem::path dir = {});

  std::shared_ptr<const Inventory> image() const;
  std::uint64_t version() const;

  /// Validates and applies `delta`, makes it durable, then publishes the new
  /// image. Throws DeltaError, leaving the store unchanged, on a bad delta.
  std::uint64_t commit(const InventoryDelta& delta);

  /// Replaces the image wholesale at `version` (used when a node copies a
  /// peer's inventory). Persists a fresh snapshot.
  void reset(const Inventory& inventory, std::uint64_t version);

  /// Writes a snapshot at the current version and drops covered records.
  void compact();
  /// Compacts automatically once this many records accumulate; 0 disables.
  void set_compact_every(std::size_t n) { compact_every_ = n; }

  std::size_t log_records() const;
  /// Bytes cut from the log tail during recovery.
  std::size_t recovered_truncated_bytes() const { return truncated_bytes_; }
  const std::filesystem::path& dir() const { return dir_; }

  void set_crash_point(CrashPoint p) { crash_ = p; }

 private:
  void recover();
  void append_record(std::uint64_t version, const std::string& payload);
  void write_snapshot(const Inventory& inventory, std::uint64_t version);
  void maybe_crash(CrashPoint p);

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::shared_ptr<const Inventory> image_;
  std::uint64_t version_ = 0;
  std::uint64_t snapshot_version_ = 0;
  std::size_t records_ = 0;
  std::size_t compact_every_ = 0;
  std::size_t truncated_bytes_ = 0;
  CrashPoint crash_ = CrashPoint::kNone;
};

}  // namespace stowage

#endif  // STOWAGE_STORE_HPP
