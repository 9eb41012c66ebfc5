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


// Small helpers shared by the command-line tools.

#ifndef STOWAGE_TOOLS_TOOL_UTIL_HPP
#define STOWAGE_TOOLS_TOOL_UTIL_HPP

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "stowage/access.hpp"
#include "stowage/common.hpp"

namespace stowage::tools {

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Writes to `path`, or to stdout when it is empty or "-".
inline void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out.flush()) throw Error("write failed: " + path);
}

inline Timestamp wall_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// `dataset,time,count` lines; a header line and '#' comments are skipped.
inline AccessLog load_accesses(const std::string& path) {
  AccessLog log;
  std::istringstream in(read_text(path));
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t.front() == '#' || (line_no == 1 && starts_with(t, "dataset,"))) continue;
    auto parts = split(t, ',');
    if (parts.size() != 3) throw Error(path + ":" + std::to_string(line_no) + ": expected dataset,time,count");
    try {
      log.add({parts[0], std::stoll(parts[1]), std::stoll(parts[2])});
    } catch (const std::logic_error&) {
      throw Error(path + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  return log;
}

}  // namespace stowage::tools

#endif  // STOWAGE_TOOLS_TOOL_UTIL_HPP
