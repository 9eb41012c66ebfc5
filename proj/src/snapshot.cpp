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

#include "stowage/snapshot.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "stowage/policy.hpp"

namespace stowage {

namespace {

constexpr RecordType kAllTypes[] = {RecordType::kGroup,   RecordType::kPartition, RecordType::kSite,
                                    RecordType::kDataset, RecordType::kBlock,     RecordType::kFile,
                                    RecordType::kReplica};

std::optional<RecordType> parse_type(std::string_view s) {
  for (auto t : kAllTypes) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

std::int64_t to_int(const Record& r, std::string_view field) {
  const auto& v = r.at(field);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(std::string(to_string(r.type)) + " field " + std::string(field) + " is not an integer: '" + v + "'");
  }
  return out;
}

bool to_bool(const Record& r, std::string_view field) {
  const auto* v = r.find(field);
  if (!v) return false;
  if (*v == "1") return true;
  if (*v == "0") return false;
  throw Error("field " + std::string(field) + " must be 0 or 1");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string encode_attr(const AttrValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return "n:" + format_double(*d);
  if (const auto* s = std::get_if<std::string>(&v)) return "s:" + *s;
  return std::get<bool>(v) ? "b:true" : "b:false";
}

AttrValue decode_attr(const std::string& raw) {
  if (starts_with(raw, "n:")) {
    double d = 0;
    auto body = std::string_view(raw).substr(2);
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), d);
    if (ec != std::errc() || ptr != body.data() + body.size()) throw Error("bad numeric attribute '" + raw + "'");
    return d;
  }
  if (starts_with(raw, "s:")) return raw.substr(2);
  if (raw == "b:true") return true;
  if (raw == "b:false") return false;
  throw Error("bad attribute value '" + raw + "'");
}

std::string encode_list(const std::set<std::string>& items) {
  std::string out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out += ',';
    first = false;
    for (char c : item) {
      if (c == ',' || c == '\\') out += '\\';
      out += c;
    }
  }
  return out;
}

std::set<std::string> decode_list(std::string_view raw) {
  std::set<std::string> out;
  if (raw.empty()) return out;
  std::string cur;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\\' && i + 1 < raw.size()) {
      cur += raw[++i];
    } else if (raw[i] == ',') {
      out.insert(std::move(cur));
      cur.clear();
    } else {
      cur += raw[i];
    }
  }
  out.insert(std::move(cur));
  return out;
}

Group group_from(const Record& r) { return Group{r.at("name")}; }

Partition partition_from(const Record& r) {
  Partition p{r.at("name"), r.at("rule"), nullptr};
  if (!p.rule.empty()) {
    p.predicate = policy::parse_predicate(p.rule, policy::Level::kBlockReplica);
  }
  return p;
}

Site site_from(const Record& r) {
  Site s;
  s.name = r.at("name");
  auto kind = parse_storage_kind(r.at("kind"));
  if (!kind) throw Error("bad site kind '" + r.at("kind") + "'");
  s.kind = *kind;
  s.endpoint = r.at("endpoint");
  auto status = parse_site_status(r.at("status"));
  if (!status) throw Error("bad site status '" + r.at("status") + "'");
  s.status = *status;
  for (const auto& [k, v] : r.fields) {
    if (starts_with(k, "quota.")) {
      Record tmp{RecordType::kSite, {{k, v}}};
      s.quotas[k.substr(6)] = to_int(tmp, k);
    }
  }
  return s;
}

Dataset dataset_from(const Record& r) {
  Dataset d;
  d.name = r.at("name");
  auto status = parse_dataset_status(r.at("status"));
  if (!status) throw Error("bad dataset status '" + r.at("status") + "'");
  d.status = *status;
  d.data_type = r.at("type");
  d.last_update = to_int(r, "last_update");
  for (const auto& [k, v] : r.fields) {
    if (starts_with(k, "attr.")) d.attrs[k.substr(5)] = decode_attr(v);
  }
  return d;
}

Block block_from(const Record& r) {
  Block b;
  b.name = r.at("name");
  b.size = to_int(r, "size");
  b.num_files = to_int(r, "files");
  b.last_update = to_int(r, "last_update");
  return b;
}

File file_from(const Record& r) {
  File f{r.at("lfn"), to_int(r, "size")};
  if (f.size <= 0) throw Error("file " + f.lfn + " has non-positive size");
  return f;
}

BlockReplica replica_from(const Record& r) {
  BlockReplica br;
  br.dataset = r.at("dataset");
  br.block = r.at("block");
  br.site = r.at("site");
  br.group = r.at("group");
  br.size_on_site = to_int(r, "size");
  br.is_custodial = to_bool(r, "custodial");
  br.is_locked = to_bool(r, "locked");
  br.is_enforced = to_bool(r, "enforced");
  br.last_update = to_int(r, "last_update");
  const auto& present = r.at("present");
  if (present != "*") br.present_files = decode_list(present);
  return br;
}

// Stages file-list changes so a failed delta leaves the shared catalog alone.
class OverlayCatalog : public FileCatalog {
 public:
  explicit OverlayCatalog(std::shared_ptr<FileCatalog> base) : base_(std::move(base)) {}

  std::vector<File> files(const BlockKey& block) const override {
    auto it = staged_.find(block);
    if (it != staged_.end()) return it->second;
    return base_->files(block);
  }
  void put(const BlockKey& block, std::vector<File> files) override { staged_[block] = std::move(files); }
  void erase(const BlockKey& block) override { staged_[block] = {}; }
  std::vector<BlockKey> blocks() const override { return base_->blocks(); }

  void commit() {
    for (auto& [k, v] : staged_) {
      if (v.empty()) base_->erase(k);
      else base_->put(k, std::move(v));
    }
    staged_.clear();
  }

 private:
  std::shared_ptr<FileCatalog> base_;
  std::map<BlockKey, std::vector<File>> staged_;
};

void check_block_files(const Block& b, const std::vector<File>& files, const std::string& where) {
  Bytes sum = 0;
  for (const auto& f : files) sum += f.size;
  if (static_cast<std::int64_t>(files.size()) != b.num_files || sum != b.size) {
    throw Error(where + " declares " + std::to_string(b.num_files) + " files / " + std::to_string(b.size) +
                " bytes but has " + std::to_string(files.size()) + " files / " + std::to_string(sum) + " bytes");
  }
}

// Complete replicas of a block whose file list changes keep exactly the
// files they had.
void demote_complete_replicas(Inventory& inv, const BlockKey& key, const std::vector<File>& before,
                              const std::vector<File>& after) {
  std::set<std::string> old_lfns, new_lfns;
  for (const auto& f : before) old_lfns.insert(f.lfn);
  for (const auto& f : after) new_lfns.insert(f.lfn);
  if (old_lfns == new_lfns) return;
  std::set<std::string> keep;
  std::set_intersection(old_lfns.begin(), old_lfns.end(), new_lfns.begin(), new_lfns.end(),
                        std::inserter(keep, keep.end()));
  for (const auto* br : inv.replicas_of(key)) {
    if (!br->complete()) {
      std::set<std::string> still;
      std::set_intersection(br->present_files->begin(), br->present_files->end(), new_lfns.begin(),
                            new_lfns.end(), std::inserter(still, still.end()));
      if (still == *br->present_files) continue;
      BlockReplica copy = *br;
      copy.present_files = std::move(still);
      inv.put_replica(std::move(copy));
      continue;
    }
    BlockReplica copy = *br;
    copy.present_files = keep;
    inv.put_replica(std::move(copy));
  }
}

}  // namespace

const char* to_string(RecordType t) {
  switch (t) {
    case RecordType::kGroup: return "GROUP";
    case RecordType::kPartition: return "PARTITION";
    case RecordType::kSite: return "SITE";
    case RecordType::kDataset: return "DATASET";
    case RecordType::kBlock: return "BLOCK";
    case RecordType::kFile: return "FILE";
    case RecordType::kReplica: return "REPLICA";
  }
  return "?";
}

const std::string* Record::find(std::string_view field) const {
  for (const auto& [k, v] : fields) {
    if (k == field) return &v;
  }
  return nullptr;
}

const std::string& Record::at(std::string_view field) const {
  const auto* v = find(field);
  if (!v) throw Error(std::string(to_string(type)) + " record lacks field '" + std::string(field) + "'");
  return *v;
}

std::string escape_value(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_value(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '\\' || i + 1 == escaped.size()) {
      out += escaped[i];
      continue;
    }
    char n = escaped[++i];
    switch (n) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += n;
    }
  }
  return out;
}

std::string format_record(const Record& r) {
  std::string out = to_string(r.type);
  for (const auto& [k, v] : r.fields) {
    out += '\t';
    out += k;
    out += '=';
    out += escape_value(v);
  }
  return out;
}

Record parse_record(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto parts = split(line, '\t');
  auto type = parse_type(parts.front());
  if (!type) throw Error("unknown record type '" + parts.front() + "'");
  Record r{*type, {}};
  for (std::size_t i = 1; i < parts.size(); ++i) {
    auto eq = parts[i].find('=');
    if (eq == std::string::npos || eq == 0) throw Error("malformed field '" + parts[i] + "'");
    r.add(parts[i].substr(0, eq), unescape_value(std::string_view(parts[i]).substr(eq + 1)));
  }
  return r;
}

Record to_record(const Group& g) { return Record{RecordType::kGroup, {{"name", g.name}}}; }

Record to_record(const Partition& p) { return Record{RecordType::kPartition, {{"name", p.name}, {"rule", p.rule}}}; }

Record to_record(const Site& s) {
  Record r{RecordType::kSite,
           {{"name", s.name}, {"kind", to_string(s.kind)}, {"endpoint", s.endpoint}, {"status", to_string(s.status)}}};
  for (const auto& [p, q] : s.quotas) r.add("quota." + p, std::to_string(q));
  return r;
}

Record to_record(const Dataset& d) {
  Record r{RecordType::kDataset,
           {{"name", d.name},
            {"status", to_string(d.status)},
            {"type", d.data_type},
            {"last_update", std::to_string(d.last_update)}}};
  for (const auto& [k, v] : d.attrs) r.add("attr." + k, encode_attr(v));
  return r;
}

Record to_record(const std::string& dataset, const Block& b) {
  return Record{RecordType::kBlock,
                {{"dataset", dataset},
                 {"name", b.name},
                 {"size", std::to_string(b.size)},
                 {"files", std::to_string(b.num_files)},
                 {"last_update", std::to_string(b.last_update)}}};
}

Record to_record(const BlockKey& block, const File& f) {
  return Record{RecordType::kFile,
                {{"dataset", block.dataset}, {"block", block.block}, {"lfn", f.lfn}, {"size", std::to_string(f.size)}}};
}

Record to_record(const BlockReplica& r) {
  return Record{RecordType::kReplica,
                {{"dataset", r.dataset},
                 {"block", r.block},
                 {"site", r.site},
                 {"group", r.group},
                 {"size", std::to_string(r.size_on_site)},
                 {"custodial", r.is_custodial ? "1" : "0"},
                 {"locked", r.is_locked ? "1" : "0"},
                 {"enforced", r.is_enforced ? "1" : "0"},
                 {"last_update", std::to_string(r.last_update)},
                 {"present", r.complete() ? "*" : encode_list(*r.present_files)}}};
}

Record key_record(RecordType type, const std::vector<std::string>& key) {
  static const std::map<RecordType, std::vector<std::string>> kKeys = {
      {RecordType::kGroup, {"name"}},
      {RecordType::kPartition, {"name"}},
      {RecordType::kSite, {"name"}},
      {RecordType::kDataset, {"name"}},
      {RecordType::kBlock, {"dataset", "name"}},
      {RecordType::kFile, {"dataset", "block", "lfn"}},
      {RecordType::kReplica, {"dataset", "block", "site"}},
  };
  const auto& names = kKeys.at(type);
  if (names.size() != key.size()) throw Error("wrong key arity for " + std::string(to_string(type)));
  Record r{type, {}};
  for (std::size_t i = 0; i < key.size(); ++i) r.add(names[i], key[i]);
  return r;
}

Inventory load_snapshot(std::istream& in, std::shared_ptr<FileCatalog> catalog) {
  Inventory inv(catalog);
  std::map<BlockKey, std::vector<File>> files;
  std::map<BlockKey, std::size_t> block_lines;
  std::unordered_set<std::string> lfns;
  bool files_flushed = false;
  int last_type = -1;

  auto flush_files = [&](std::size_t line) {
    if (files_flushed) return;
    files_flushed = true;
    for (const auto& [name, d] : inv.datasets()) {
      for (const auto& [bname, b] : d.blocks) {
        BlockKey key{name, bname};
        auto it = files.find(key);
        static const std::vector<File> kNone;
        try {
          check_block_files(b, it == files.end() ? kNone : it->second, "block " + to_string(key));
        } catch (const Error& e) {
          throw SnapshotError(block_lines.count(key) ? block_lines[key] : line, e.what());
        }
      }
    }
    for (auto& [k, v] : files) catalog->put(k, std::move(v));
    files.clear();
  };

  std::string text;
  std::size_t lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (trim(text).empty()) continue;
    try {
      Record r = parse_record(text);
      if (static_cast<int>(r.type) < last_type) {
        throw Error(std::string(to_string(r.type)) + " record out of order");
      }
      last_type = static_cast<int>(r.type);
      switch (r.type) {
        case RecordType::kGroup: inv.put_group(group_from(r)); break;
        case RecordType::kPartition: inv.put_partition(partition_from(r)); break;
        case RecordType::kSite: inv.put_site(site_from(r)); break;
        case RecordType::kDataset:
          if (inv.find_dataset(r.at("name"))) throw Error("duplicate dataset " + r.at("name"));
          inv.put_dataset(dataset_from(r));
          break;
        case RecordType::kBlock: {
          BlockKey key{r.at("dataset"), r.at("name")};
          if (!inv.find_dataset(key.dataset)) throw Error("dangling reference to dataset " + key.dataset);
          if (inv.find_block(key)) throw Error("duplicate block " + to_string(key));
          inv.put_block(key.dataset, block_from(r));
          block_lines[key] = lineno;
          break;
        }
        case RecordType::kFile: {
          BlockKey key{r.at("dataset"), r.at("block")};
          if (!inv.find_block(key)) throw Error("dangling reference to block " + to_string(key));
          File f = file_from(r);
          if (!lfns.insert(f.lfn).second) throw Error("duplicate file " + f.lfn);
          files[key].push_back(std::move(f));
          break;
        }
        case RecordType::kReplica: {
          flush_files(lineno);
          auto br = replica_from(r);
          if (!inv.find_site(br.site)) throw Error("dangling reference to site " + br.site);
          if (!inv.find_block(br.block_key())) throw Error("dangling reference to block " + to_string(br.block_key()));
          if (!inv.find_group(br.group)) throw Error("dangling reference to group " + br.group);
          if (inv.find_replica(br.key())) throw Error("duplicate replica " + to_string(br.key()));
          inv.put_replica(std::move(br));
          break;
        }
      }
    } catch (const SnapshotError&) {
      throw;
    } catch (const std::exception& e) {
      throw SnapshotError(lineno, e.what());
    }
  }
  flush_files(lineno);
  return inv;
}

Inventory load_snapshot_file(const std::filesystem::path& path, std::shared_ptr<FileCatalog> catalog) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open snapshot " + path.string());
  return load_snapshot(in, std::move(catalog));
}

std::string canonical_snapshot(const Inventory& inv) {
  std::vector<std::vector<std::string>> lines(std::size(kAllTypes));
  auto emit = [&](const Record& r) { lines[static_cast<int>(r.type)].push_back(format_record(r)); };
  for (const auto& [_, g] : inv.groups()) emit(to_record(g));
  for (const auto& [name, p] : inv.partitions()) {
    if (name != kGlobalPartition) emit(to_record(p));
  }
  for (const auto& [_, s] : inv.sites()) emit(to_record(s));
  for (const auto& [name, d] : inv.datasets()) {
    emit(to_record(d));
    for (const auto& [bname, b] : d.blocks) {
      emit(to_record(name, b));
      BlockKey key{name, bname};
      for (const auto& f : inv.file_catalog().files(key)) emit(to_record(key, f));
    }
  }
  for (const auto& [_, r] : inv.block_replicas()) emit(to_record(r));
  std::string out;
  for (auto& group : lines) {
    std::sort(group.begin(), group.end());
    for (const auto& l : group) {
      out += l;
      out += '\n';
    }
  }
  return out;
}

void save_snapshot(const Inventory& inventory, std::ostream& out) { out << canonical_snapshot(inventory); }

void save_snapshot_file(const Inventory& inventory, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    save_snapshot(inventory, out);
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void InventoryDelta::append(const InventoryDelta& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

std::string format_delta(const InventoryDelta& delta) {
  std::string out;
  for (const auto& e : delta.entries) {
    out += e.verb == DeltaVerb::kUpdate ? "U " : "D ";
    out += format_record(e.record);
    out += '\n';
  }
  out += "END\n";
  return out;
}

std::optional<InventoryDelta> read_delta(std::istream& in) {
  InventoryDelta delta;
  std::string line;
  bool started = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && !started) continue;
    started = true;
    if (line == "END") return delta;
    if (line.size() < 2 || (line[0] != 'U' && line[0] != 'D') || line[1] != ' ') {
      throw DeltaError("malformed delta line '" + line + "'");
    }
    try {
      delta.entries.push_back({line[0] == 'U' ? DeltaVerb::kUpdate : DeltaVerb::kDelete, parse_record(line.substr(2))});
    } catch (const DeltaError&) {
      throw;
    } catch (const std::exception& e) {
      throw DeltaError(e.what());
    }
  }
  return std::nullopt;
}

InventoryDelta parse_delta(const std::string& text) {
  std::istringstream in(text);
  auto d = read_delta(in);
  if (!d) throw DeltaError("delta is not terminated by END");
  return *d;
}

Inventory apply_delta(const Inventory& base, const InventoryDelta& delta) {
  auto overlay = std::make_shared<OverlayCatalog>(base.file_catalog_handle());
  Inventory next = base;
  next.set_file_catalog(overlay);
  std::set<BlockKey> touched;

  std::size_t index = 0;
  try {
    for (const auto& e : delta.entries) {
      const auto& r = e.record;
      bool upd = e.verb == DeltaVerb::kUpdate;
      switch (r.type) {
        case RecordType::kGroup:
          upd ? next.put_group(group_from(r)) : next.erase_group(r.at("name"));
          break;
        case RecordType::kPartition:
          upd ? next.put_partition(partition_from(r)) : next.erase_partition(r.at("name"));
          break;
        case RecordType::kSite:
          upd ? next.put_site(site_from(r)) : next.erase_site(r.at("name"));
          break;
        case RecordType::kDataset:
          upd ? next.put_dataset(dataset_from(r)) : next.erase_dataset(r.at("name"));
          break;
        case RecordType::kBlock: {
          BlockKey key{r.at("dataset"), r.at("name")};
          if (upd) {
            if (!next.find_dataset(key.dataset)) throw Error("block references unknown dataset " + key.dataset);
            next.put_block(key.dataset, block_from(r));
            touched.insert(key);
          } else {
            next.erase_block(key);
          }
          break;
        }
        case RecordType::kFile: {
          BlockKey key{r.at("dataset"), r.at("block")};
          const auto& lfn = r.at("lfn");
          if (!next.find_block(key)) {
            if (!upd) break;
            throw Error("file " + lfn + " references unknown block " + to_string(key));
          }
          auto before = overlay->files(key);
          auto after = before;
          auto it = std::find_if(after.begin(), after.end(), [&](const File& f) { return f.lfn == lfn; });
          if (upd) {
            File f = file_from(r);
            if (it != after.end()) *it = f;
            else after.push_back(f);
          } else if (it != after.end()) {
            after.erase(it);
          } else {
            break;
          }
          std::sort(after.begin(), after.end(), [](const File& a, const File& b) { return a.lfn < b.lfn; });
          overlay->put(key, after);
          demote_complete_replicas(next, key, before, after);
          touched.insert(key);
          break;
        }
        case RecordType::kReplica:
          if (upd) {
            next.put_replica(replica_from(r));
          } else {
            next.erase_replica({r.at("dataset"), r.at("block"), r.at("site")});
          }
          break;
      }
      ++index;
    }
    for (const auto& key : touched) {
      const Block* b = next.find_block(key);
      if (b) check_block_files(*b, overlay->files(key), "block " + to_string(key));
    }
  } catch (const DeltaError&) {
    throw;
  } catch (const std::exception& e) {
    throw DeltaError("delta entry " + std::to_string(index + 1) + ": " + e.what());
  }
  overlay->commit();
  next.set_file_catalog(base.file_catalog_handle());
  return next;
}

}  // namespace stowage
