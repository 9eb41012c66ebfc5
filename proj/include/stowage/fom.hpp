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


// File operation manager. Expands block-level requests from the registry
// into file-level batches, drives a backend, and folds completed files
// back into block replica presence.

#ifndef STOWAGE_FOM_HPP
#define STOWAGE_FOM_HPP

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "stowage/inventory.hpp"
#include "stowage/registry.hpp"
#include "stowage/snapshot.hpp"

namespace stowage::fom {

struct FileOp {
  std::int64_t request_id = 0;
  OpVerb verb = OpVerb::kCopy;
  std::string lfn;
  Bytes size = 0;
  /// Site names; empty source for deletions.
  std::string source;
  std::string destination;
  std::string source_endpoint;
  std::string destination_endpoint;
};

struct FileOpBatch {
  std::int64_t id = 0;
  std::vector<FileOp> files;
};

struct FileOutcome {
  std::string lfn;
  FileOpState state = FileOpState::kPending;
  std::string reason;
  Timestamp time = 0;
};

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

/// Asynchronous file operation service.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual bool reachable() const { return true; }
  virtual std::int64_t submit(const FileOpBatch& batch) = 0;
  /// Outcomes for every file of the batch; may repeat earlier reports.
  virtual std::vector<FileOutcome> poll(std::int64_t batch_id) = 0;
  virtual void cancel(std::int64_t batch_id) = 0;
};

/// Per-link record of transfer attempts.
class LinkQuality {
 public:
  void record(const std::string& source, const std::string& destination, Timestamp time, bool success);
  /// failures / attempts within (now - horizon, now]; 0 without attempts.
  double failure_fraction(const std::string& source, const std::string& destination, Timestamp now,
                          Timestamp horizon) const;
  std::size_t attempts(const std::string& source, const std::string& destination, Timestamp now,
                       Timestamp horizon) const;
  /// Drops entries at or before `before`.
  void prune(Timestamp before);

 private:
  std::map<std::pair<std::string, std::string>, std::deque<std::pair<Timestamp, bool>>> links_;
};

class NoSource : public Error {
 public:
  using Error::Error;
};

/// Complete replica on a READY site other than `destination` with the
/// lowest failure fraction towards it; ties break by site name. Falls back
/// to MORGUE sites when no READY site holds a complete copy. Throws
/// NoSource when nothing qualifies.
std::string choose_source(const Inventory& inventory, const BlockKey& block, const std::string& destination,
                          const LinkQuality& links, Timestamp now, Timestamp horizon = 3 * kDay);

struct Config {
  int max_attempts = 5;
  /// Retry delay after the n-th failure is min(2^(n-1), backoff_cap) iterations.
  int backoff_cap = 8;
  std::size_t batch_files = 100;
  Bytes batch_bytes = kTB;
  Timestamp horizon = 3 * kDay;
};

struct IterationResult {
  InventoryDelta delta;
  bool aborted = false;
  std::vector<std::string> errors;
  std::size_t dispatched_files = 0;
  std::size_t completed_files = 0;
  std::size_t failed_files = 0;
};

class FileOperationManager {
 public:
  FileOperationManager(Registry& registry, Backend& backend, Config config = {});

  /// One collect-then-dispatch pass over `inventory`, which must include
  /// the deltas returned by earlier iterations.
  IterationResult run_iteration(const Inventory& inventory, Timestamp now);

  LinkQuality& link_quality() { return links_; }
  const LinkQuality& link_quality() const { return links_; }
  std::int64_t iteration() const { return iteration_; }
  std::size_t in_flight_batches() const { return batches_.size(); }

 private:
  struct FileState {
    int attempts = 0;
    std::int64_t next_iteration = 0;
    bool in_flight = false;
    bool done = false;
  };
  struct Track {
    std::string source;
    std::map<std::string, FileState> files;
  };
  struct InFlight {
    FileOpBatch batch;
    std::set<std::string> open;  // "request_id|lfn"
  };

  Registry& registry_;
  Backend& backend_;
  Config config_;
  LinkQuality links_;
  std::int64_t iteration_ = 0;
  std::map<std::int64_t, Track> tracks_;
  std::map<std::int64_t, InFlight> batches_;
};

struct LinkModel {
  double bandwidth = 1e9;  // bytes per second
  double latency = 0;      // seconds
  double failure_probability = 0;
};

/// Deterministic stand-in for a transfer service. Each (source,
/// destination) endpoint pair is a FIFO link: a file starts when the link
/// is free and finishes size / bandwidth + latency seconds later. Failures
/// are drawn at submission from a seeded generator.
class SimulatedBackend : public Backend {
 public:
  SimulatedBackend(std::function<Timestamp()> clock, std::uint64_t seed);

  void add_endpoint(const std::string& endpoint);
  void set_default_link(LinkModel model) { default_ = model; }
  void set_link(const std::string& source, const std::string& destination, LinkModel model);
  void set_reachable(bool reachable) { reachable_ = reachable; }

  bool reachable() const override { return reachable_; }
  std::int64_t submit(const FileOpBatch& batch) override;
  std::vector<FileOutcome> poll(std::int64_t batch_id) override;
  void cancel(std::int64_t batch_id) override;

  /// Total bytes whose transfer finished successfully in [from, to).
  Bytes delivered_between(double from, double to) const;
  double link_busy_until(const std::string& source, const std::string& destination) const;

 private:
  struct Planned {
    std::string lfn;
    double start = 0;
    double finish = 0;
    Bytes size = 0;
    bool fail = false;
    std::string reason;
    std::pair<std::string, std::string> link;
  };
  const LinkModel& model(const std::string& source, const std::string& destination) const;

  std::function<Timestamp()> clock_;
  std::mt19937_64 rng_;
  bool reachable_ = true;
  LinkModel default_;
  std::set<std::string> endpoints_;
  std::map<std::pair<std::string, std::string>, LinkModel> links_;
  std::map<std::pair<std::string, std::string>, double> busy_until_;
  std::int64_t next_id_ = 1;
  std::map<std::int64_t, std::vector<Planned>> batches_;
  std::vector<Planned> finished_log_;
};

}  // namespace stowage::fom

#endif  // STOWAGE_FOM_HPP
