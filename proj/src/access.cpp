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

#include "stowage/access.hpp"

namespace stowage {

void AccessLog::add(const AccessRecord& record) {
  if (record.count <= 0) return;
  records_[record.dataset].emplace(record.time, record.count);
  auto& last = last_[record.dataset];
  if (record.time > last) last = record.time;
}

std::optional<Timestamp> AccessLog::last_access(const std::string& dataset) const {
  auto it = last_.find(dataset);
  if (it == last_.end()) return std::nullopt;
  return it->second;
}

std::int64_t AccessLog::count(const std::string& dataset, Timestamp from, Timestamp to) const {
  auto it = records_.find(dataset);
  if (it == records_.end()) return 0;
  std::int64_t total = 0;
  for (auto r = it->second.lower_bound(from); r != it->second.end() && r->first < to; ++r) {
    total += r->second;
  }
  return total;
}

std::vector<std::string> AccessLog::accessed_between(Timestamp from, Timestamp to) const {
  std::vector<std::string> out;
  for (const auto& [name, recs] : records_) {
    auto r = recs.lower_bound(from);
    if (r != recs.end() && r->first < to) out.push_back(name);
  }
  return out;
}

void AccessLog::prune(Timestamp before) {
  for (auto it = records_.begin(); it != records_.end();) {
    auto& recs = it->second;
    recs.erase(recs.begin(), recs.lower_bound(before));
    it = recs.empty() ? records_.erase(it) : std::next(it);
  }
}

std::size_t AccessLog::size() const {
  std::size_t n = 0;
  for (const auto& [_, recs] : records_) n += recs.size();
  return n;
}

}  // namespace stowage
