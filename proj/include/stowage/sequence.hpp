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


// Scheduler sequences.
//
//   # comment
//   sequence hourly
//   run detox write
//   run dealer write
//   idle 3600
//   on-error repeat-app
//   repeat 0
//
// `idle` is the pause between consecutive application runs; `repeat 0`
// loops until stopped.

#ifndef STOWAGE_SEQUENCE_HPP
#define STOWAGE_SEQUENCE_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "stowage/common.hpp"

namespace stowage {

enum class OnError { kIgnore, kRepeatApp, kRepeatSequence };
const char* to_string(OnError e);

struct SequenceStep {
  std::string app;
  bool write = false;
  bool operator==(const SequenceStep&) const = default;
};

struct SequenceDef {
  std::string name;
  std::vector<SequenceStep> steps;
  double idle_seconds = 0;
  OnError on_error = OnError::kIgnore;
  int repeat = 1;  // 0: forever
  bool operator==(const SequenceDef&) const = default;
};

class SequenceParseError : public Error {
 public:
  SequenceParseError(int line, const std::string& what)
      : Error("sequence line " + std::to_string(line) + ": " + what) {}
};

SequenceDef parse_sequence(const std::string& text);
std::string to_string(const SequenceDef& def);
nlohmann::json to_json(const SequenceDef& def);

}  // namespace stowage

#endif  // STOWAGE_SEQUENCE_HPP
