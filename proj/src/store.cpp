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


#include "stowage/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <boost/crc.hpp>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stowage {

namespace fs = std::filesystem;

namespace {

std::uint32_t crc32(const std::string& s) {
  boost::crc_32_type crc;
  crc.process_bytes(s.data(), s.size());
  return crc.checksum();
}

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    auto w = ::write(fd, data, n);
    if (w < 0) throw Error(std::string("log write failed: ") + std::strerror(errno));
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

void sync_dir(const fs::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error("cannot write " + tmp.string());
  write_all(fd, content.data(), content.size());
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, path);
  sync_dir(path.parent_path());
}

}  // namespace

InventoryStore::InventoryStore(fs::path dir) : dir_(std::move(dir)), image_(std::make_shared<Inventory>()) {
  if (dir_.empty()) return;
  fs::create_directories(dir_);
  recover();
}

std::shared_ptr<const Inventory> InventoryStore::image() const {
  std::lock_guard lock(mu_);
  return image_;
}

std::uint64_t InventoryStore::version() const {
  std::lock_guard lock(mu_);
  return version_;
}

std::size_t InventoryStore::log_records() const {
  std::lock_guard lock(mu_);
  return records_;
}

void InventoryStore::maybe_crash(CrashPoint p) {
  if (crash_ == p) {
    crash_ = CrashPoint::kNone;
    throw SimulatedCrash("simulated crash");
  }
}

void InventoryStore::recover() {
  Inventory inv;
  auto meta_path = dir_ / "snapshot.meta";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    auto meta = nlohmann::json::parse(in);
    snapshot_version_ = meta.at("version").get<std::uint64_t>();
    inv = load_snapshot_file(dir_ / meta.at("file").get<std::string>());
  }
  version_ = snapshot_version_;
  records_ = 0;

  auto log_path = dir_ / "deltas.log";
  std::string data;
  if (fs::exists(log_path)) {
    std::ifstream in(log_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    data = ss.str();
  }
  std::size_t pos = 0;
  std::size_t good = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;
    std::istringstream header(data.substr(pos, nl - pos));
    std::string tag;
    std::uint64_t v = 0;
    std::size_t n = 0;
    std::uint32_t crc = 0;
    if (!(header >> tag >> v >> n >> std::hex >> crc) || tag != "DELTA") break;
    if (nl + 1 + n > data.size()) break;
    std::string payload = data.substr(nl + 1, n);
    if (crc32(payload) != crc) break;
    pos = nl + 1 + n;
    good = pos;
    if (v <= version_) continue;  // covered by the snapshot
    if (v != version_ + 1) break;
    inv = apply_delta(inv, parse_delta(payload));
    version_ = v;
    ++records_;
  }
  if (good < data.size()) {
    truncated_bytes_ = data.size() - good;
    fs::resize_file(log_path, good);
  }
  image_ = std::make_shared<const Inventory>(std::move(inv));
}

void InventoryStore::append_record(std::uint64_t version, const std::string& payload) {
  std::ostringstream header;
  header << "DELTA " << version << ' ' << payload.size() << ' ' << std::hex << crc32(payload) << '\n';
  std::string record = header.str() + payload;
  auto path = dir_ / "deltas.log";
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error("cannot open " + path.string());
  if (crash_ == CrashPoint::kTornAppend) {
    write_all(fd, record.data(), record.size() / 2);
    ::close(fd);
    maybe_crash(CrashPoint::kTornAppend);
  }
  write_all(fd, record.data(), record.size());
  ::fsync(fd);
  ::close(fd);
}

std::uint64_t InventoryStore::commit(const InventoryDelta& delta) {
  std::lock_guard lock(mu_);
  auto next = std::make_shared<const Inventory>(apply_delta(*image_, delta));
  auto v = version_ + 1;
  if (!dir_.empty()) {
    maybe_crash(CrashPoint::kBeforeAppend);
    append_record(v, format_delta(delta));
    maybe_crash(CrashPoint::kAfterAppend);
  }
  image_ = std::move(next);
  version_ = v;
  ++records_;
  maybe_crash(CrashPoint::kAfterPublish);
  if (!dir_.empty() && compact_every_ > 0 && records_ >= compact_every_) {
    write_snapshot(*image_, version_);
  }
  return v;
}

void InventoryStore::write_snapshot(const Inventory& inventory, std::uint64_t version) {
  auto file = "snapshot." + std::to_string(version) + ".tsv";
  save_snapshot_file(inventory, dir_ / file);
  maybe_crash(CrashPoint::kCompactAfterSnapshot);
  write_file_atomic(dir_ / "snapshot.meta", nlohmann::json{{"version", version}, {"file", file}}.dump());
  maybe_crash(CrashPoint::kCompactAfterMeta);
  // Everything in the log is covered by the new snapshot.
  write_file_atomic(dir_ / "deltas.log", "");
  for (const auto& e : fs::directory_iterator(dir_)) {
    auto name = e.path().filename().string();
    if (name.rfind("snapshot.", 0) == 0 && name.size() > 4 && name.substr(name.size() - 4) == ".tsv" && name != file) {
      fs::remove(e.path());
    }
  }
  snapshot_version_ = version;
  records_ = 0;
}

void InventoryStore::compact() {
  std::lock_guard lock(mu_);
  if (dir_.empty()) return;
  write_snapshot(*image_, version_);
}

void InventoryStore::reset(const Inventory& inventory, std::uint64_t version) {
  std::lock_guard lock(mu_);
  image_ = std::make_shared<const Inventory>(inventory);
  version_ = version;
  if (!dir_.empty()) write_snapshot(*image_, version_);
}

}  // namespace stowage
