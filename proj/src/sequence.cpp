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


#include "stowage/sequence.hpp"

#include <sstream>

namespace stowage {

const char* to_string(OnError e) {
  switch (e) {
    case OnError::kIgnore: return "ignore";
    case OnError::kRepeatApp: return "repeat-app";
    case OnError::kRepeatSequence: return "repeat-sequence";
  }
  return "?";
}

SequenceDef parse_sequence(const std::string& text) {
  SequenceDef def;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream words{std::string(t)};
    std::string kw;
    words >> kw;
    std::vector<std::string> args;
    for (std::string w; words >> w;) args.push_back(w);
    auto want = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) throw SequenceParseError(line, "wrong number of arguments to " + kw);
    };
    if (kw == "sequence") {
      want(1, 1);
      def.name = args[0];
    } else if (kw == "run") {
      want(1, 2);
      if (args.size() == 2 && args[1] != "write") throw SequenceParseError(line, "expected 'write', got " + args[1]);
      def.steps.push_back({args[0], args.size() == 2});
    } else if (kw == "idle") {
      want(1, 1);
      try {
        def.idle_seconds = std::stod(args[0]);
      } catch (const std::exception&) {
        throw SequenceParseError(line, "bad idle time " + args[0]);
      }
      if (def.idle_seconds < 0) throw SequenceParseError(line, "idle time must be >= 0");
    } else if (kw == "on-error") {
      want(1, 1);
      if (args[0] == "ignore") def.on_error = OnError::kIgnore;
      else if (args[0] == "repeat-app") def.on_error = OnError::kRepeatApp;
      else if (args[0] == "repeat-sequence") def.on_error = OnError::kRepeatSequence;
      else throw SequenceParseError(line, "unknown on-error policy " + args[0]);
    } else if (kw == "repeat") {
      want(1, 1);
      try {
        def.repeat = std::stoi(args[0]);
      } catch (const std::exception&) {
        throw SequenceParseError(line, "bad repeat count " + args[0]);
      }
      if (def.repeat < 0) throw SequenceParseError(line, "repeat must be >= 0");
    } else {
      throw SequenceParseError(line, "unknown keyword " + kw);
    }
  }
  if (def.steps.empty()) throw SequenceParseError(line, "sequence has no steps");
  return def;
}

std::string to_string(const SequenceDef& def) {
  std::ostringstream out;
  if (!def.name.empty()) out << "sequence " << def.name << '\n';
  for (const auto& s : def.steps) out << "run " << s.app << (s.write ? " write" : "") << '\n';
  out << "idle " << def.idle_seconds << '\n';
  out << "on-error " << to_string(def.on_error) << '\n';
  out << "repeat " << def.repeat << '\n';
  return out.str();
}

nlohmann::json to_json(const SequenceDef& def) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : def.steps) steps.push_back({{"app", s.app}, {"write", s.write}});
  return {{"name", def.name},
          {"steps", steps},
          {"idle", def.idle_seconds},
          {"on_error", to_string(def.on_error)},
          {"repeat", def.repeat}};
}

}  // namespace stowage
