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


// The single-writer lock. Write-enabled applications, writing REST calls
// and (in a cluster) remote writers all go through one of these.

#ifndef STOWAGE_WRITE_LOCK_HPP
#define STOWAGE_WRITE_LOCK_HPP

#include <condition_variable>
#include <mutex>
#include <optional>
#include <string>

namespace stowage {

class WriteLock {
 public:
  virtual ~WriteLock() = default;
  /// Fails when the lock is held or someone is waiting for it.
  virtual bool try_acquire(const std::string& owner) = 0;
  /// Blocks; waiters are served in arrival order.
  virtual void acquire(const std::string& owner) = 0;
  virtual void release(const std::string& owner) = 0;
  virtual std::optional<std::string> holder() const = 0;
};

class LocalWriteLock : public WriteLock {
 public:
  bool try_acquire(const std::string& owner) override;
  void acquire(const std::string& owner) override;
  void release(const std::string& owner) override;
  std::optional<std::string> holder() const override;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
  std::optional<std::string> holder_;
};

/// RAII holder.
class WriteGuard {
 public:
  WriteGuard(WriteLock& lock, std::string owner) : lock_(lock), owner_(std::move(owner)) { lock_.acquire(owner_); }
  ~WriteGuard() { lock_.release(owner_); }
  WriteGuard(const WriteGuard&) = delete;
  WriteGuard& operator=(const WriteGuard&) = delete;

 private:
  WriteLock& lock_;
  std::string owner_;
};

}  // namespace stowage

#endif  // STOWAGE_WRITE_LOCK_HPP
