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


#ifndef STOWAGE_HISTORY_HPP
#define STOWAGE_HISTORY_HPP

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/common.hpp"

namespace stowage {

struct HistoryRecord {
  std::int64_t seq = 0;
  std::string kind;  // e.g. "detox", "dealer", "consistency", "app", "op"
  Timestamp time = 0;
  nlohmann::json payload;
};

/// Append-only history, one JSON object per line when file-backed.
class HistoryStore {
 public:
  /// Loads existing records; an unterminated last line is dropped.
  explicit HistoryStore(std::filesystem::path file = {});

  std::int64_t append(const std::string& kind, nlohmann::json payload, Timestamp time);
  std::vector<HistoryRecord> records(const std::optional<std::string>& kind = std::nullopt) const;
  std::size_t size() const;

 private:
  std::filesystem::path file_;
  mutable std::mutex mu_;
  std::vector<HistoryRecord> records_;
};

}  // namespace stowage

#endif  // STOWAGE_HISTORY_HPP
