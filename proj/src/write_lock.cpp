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


#include "stowage/write_lock.hpp"

#include "stowage/common.hpp"

namespace stowage {

bool LocalWriteLock::try_acquire(const std::string& owner) {
  std::lock_guard lock(mu_);
  if (holder_ || next_ticket_ != serving_) return false;
  ++next_ticket_;
  holder_ = owner;
  return true;
}

void LocalWriteLock::acquire(const std::string& owner) {
  std::unique_lock lock(mu_);
  auto ticket = next_ticket_++;
  cv_.wait(lock, [&] { return serving_ == ticket && !holder_; });
  holder_ = owner;
}

void LocalWriteLock::release(const std::string& owner) {
  {
    std::lock_guard lock(mu_);
    if (holder_ != owner) throw Error("write lock released by " + owner + " but held by " + holder_.value_or("nobody"));
    holder_.reset();
    ++serving_;
  }
  cv_.notify_all();
}

std::optional<std::string> LocalWriteLock::holder() const {
  std::lock_guard lock(mu_);
  return holder_;
}

}  // namespace stowage
