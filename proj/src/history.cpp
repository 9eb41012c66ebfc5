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


#include "stowage/history.hpp"

#include <fstream>

namespace stowage {

HistoryStore::HistoryStore(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.empty() || !std::filesystem::exists(file_)) return;
  std::ifstream in(file_, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), {});
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      std::filesystem::resize_file(file_, pos);
      break;
    }
    auto j = nlohmann::json::parse(data.substr(pos, nl - pos));
    records_.push_back({j.at("seq").get<std::int64_t>(), j.at("kind").get<std::string>(),
                        j.at("time").get<Timestamp>(), j.at("payload")});
    pos = nl + 1;
  }
}

std::int64_t HistoryStore::append(const std::string& kind, nlohmann::json payload, Timestamp time) {
  std::lock_guard lock(mu_);
  HistoryRecord r{records_.empty() ? 1 : records_.back().seq + 1, kind, time, std::move(payload)};
  if (!file_.empty()) {
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    out << nlohmann::json{{"seq", r.seq}, {"kind", r.kind}, {"time", r.time}, {"payload", r.payload}}.dump() << '\n';
    if (!out) throw Error("cannot append to " + file_.string());
  }
  records_.push_back(std::move(r));
  return records_.back().seq;
}

std::vector<HistoryRecord> HistoryStore::records(const std::optional<std::string>& kind) const {
  std::lock_guard lock(mu_);
  if (!kind) return records_;
  std::vector<HistoryRecord> out;
  for (const auto& r : records_) {
    if (r.kind == *kind) out.push_back(r);
  }
  return out;
}

std::size_t HistoryStore::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

}  // namespace stowage
