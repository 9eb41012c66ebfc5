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

#ifndef STOWAGE_OCCUPANCY_HPP
#define STOWAGE_OCCUPANCY_HPP

#include <string>
#include <vector>

#include "stowage/policy.hpp"

namespace stowage {

class OccupancyUndefined : public Error {
 public:
  using Error::Error;
};

/// Partition membership of one block replica. Throws
/// policy::EvaluationError if the rule needs an attribute nobody produces.
bool evaluate_partition(const Inventory& inventory, const Partition& partition,
                        const BlockReplica& replica,
                        const policy::AttributeRegistry& registry = policy::AttributeRegistry::builtin(),
                        const AccessLog* accesses = nullptr, Timestamp now = 0);

/// Block replicas at `site` that belong to `partition`.
std::vector<const BlockReplica*> partition_members(const Inventory& inventory, const std::string& site,
                                                   const std::string& partition);

/// Sum of size_on_site over partition members at the site.
Bytes partition_usage(const Inventory& inventory, const std::string& site, const std::string& partition);

/// partition_usage / quota. Throws OccupancyUndefined when the site has no
/// quota for the partition, and Error for unknown site or partition.
double site_occupancy(const Inventory& inventory, const std::string& site, const std::string& partition);

}  // namespace stowage

#endif  // STOWAGE_OCCUPANCY_HPP
