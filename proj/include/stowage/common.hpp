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

#ifndef STOWAGE_COMMON_HPP
#define STOWAGE_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stowage {

using Bytes = std::int64_t;
/// Seconds on the service clock. The simulator drives it virtually.
using Timestamp = std::int64_t;

inline constexpr Bytes kKB = 1000;
inline constexpr Bytes kMB = 1000 * kKB;
inline constexpr Bytes kGB = 1000 * kMB;
inline constexpr Bytes kTB = 1000 * kGB;

inline constexpr Timestamp kMinute = 60;
inline constexpr Timestamp kHour = 60 * kMinute;
inline constexpr Timestamp kDay = 24 * kHour;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by persistence providers when a read can be retried later.
class PersistenceUnavailable : public Error {
 public:
  using Error::Error;
};

/// Glob match where `*` matches any (possibly empty) run of characters.
/// No other metacharacters are recognized.
bool wildcard_match(std::string_view pattern, std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);
bool starts_with(std::string_view text, std::string_view prefix);

}  // namespace stowage

#endif  // STOWAGE_COMMON_HPP
