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

#ifndef STOWAGE_ACCESS_HPP
#define STOWAGE_ACCESS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stowage/common.hpp"

namespace stowage {

struct AccessRecord {
  std::string dataset;
  Timestamp time = 0;
  std::int64_t count = 1;
};

/// Per-dataset access records, indexed by time. Feeds the usage-rank
/// producer and the popularity plugin.
class AccessLog {
 public:
  void add(const AccessRecord& record);
  std::optional<Timestamp> last_access(const std::string& dataset) const;
  /// Sum of counts with time in [from, to).
  std::int64_t count(const std::string& dataset, Timestamp from, Timestamp to) const;
  /// Datasets with at least one access in [from, to).
  std::vector<std::string> accessed_between(Timestamp from, Timestamp to) const;
  /// Drops records older than `before`; last-access times are retained.
  void prune(Timestamp before);
  std::size_t size() const;

 private:
  std::map<std::string, std::multimap<Timestamp, std::int64_t>> records_;
  std::map<std::string, Timestamp> last_;
};

}  // namespace stowage

#endif  // STOWAGE_ACCESS_HPP
