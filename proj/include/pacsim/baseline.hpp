// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The comparison tool: a redzone + quarantine checker in the style of
// address-poisoning sanitizers. Objects are flanked by poisoned guard
// zones; freed heap regions sit in a FIFO quarantine until its byte
// capacity forces eviction back to the allocator.
//
// The shadow is held as a byte-accurate interval map rather than a packed
// per-granule array; verdicts are identical and that is what the
// comparison needs.

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pacsim/checker.hpp"
#include "pacsim/errors.hpp"
#include "pacsim/machine.hpp"

namespace pacsim {

struct BaselineConfig {
  uint64_t redzone_bytes = 16;                 // per side
  uint64_t quarantine_capacity = uint64_t{1} << 28;  // 256 MiB of payload
  uint64_t granularity = 8;
};

enum class Shade : uint8_t { kUnmapped, kAddressable, kRedzone, kQuarantined };

// Interval map over the address space; unmarked bytes are kUnmapped.
class ShadowMap {
 public:
  void paint(uint64_t lo, uint64_t hi, Shade s) {
    if (lo >= hi) return;
    const Shade after = shade_at(hi);
    // Drop boundaries inside [lo, hi), then set the edges.
    auto first = marks_.lower_bound(lo);
    auto last = marks_.lower_bound(hi);
    marks_.erase(first, last);
    marks_[lo] = s;
    marks_[hi] = after;
    coalesce(lo);
    coalesce(hi);
  }

  Shade shade_at(uint64_t addr) const {
    auto it = marks_.upper_bound(addr);
    if (it == marks_.begin()) return Shade::kUnmapped;
    return std::prev(it)->second;
  }

  // First non-addressable shade in [lo, hi), if any.
  std::optional<Shade> first_poisoned(uint64_t lo, uint64_t hi) const {
    if (lo >= hi) return std::nullopt;
    Shade cur = shade_at(lo);
    if (cur != Shade::kAddressable) return cur;
    for (auto it = marks_.upper_bound(lo); it != marks_.end() && it->first < hi; ++it) {
      if (it->second != Shade::kAddressable) return it->second;
    }
    return std::nullopt;
  }

 private:
  void coalesce(uint64_t at) {
    auto it = marks_.find(at);
    if (it == marks_.end()) return;
    if (it == marks_.begin()) {
      if (it->second == Shade::kUnmapped) marks_.erase(it);
      return;
    }
    if (std::prev(it)->second == it->second) marks_.erase(it);
  }

  std::map<uint64_t, Shade> marks_;
};

// Allocator + checker over the same three machine regions. Single run,
// single thread.
class BaselineState {
 public:
  explicit BaselineState(BaselineConfig cfg = {}) : cfg_(cfg) {
    heap_cursor_ = Machine::kHeapBase;
    stack_cursor_ = Machine::kStackBase;
    global_cursor_ = Machine::kGlobalBase;
  }

  const BaselineConfig& config() const { return cfg_; }
  uint64_t quarantine_bytes() const { return quarantine_bytes_; }

  // Places the payload between two redzones and marks the shadow. Evicted
  // quarantine regions are reused first-fit.
  uint64_t alloc(Region kind, uint64_t size) {
    if (size < 1 || size > Machine::kMaxObjectSize)
      throw AllocError("allocation size out of range: " + std::to_string(size));
    const uint64_t footprint = block_footprint(size);
    const uint64_t block = reserve(kind, footprint);
    const uint64_t base = block + cfg_.redzone_bytes;
    shadow_.paint(block, base, Shade::kRedzone);
    shadow_.paint(base, base + size, Shade::kAddressable);
    shadow_.paint(base + size, block + footprint, Shade::kRedzone);
    live_.emplace(base, AllocInfo{block, size, footprint, kind});
    return base;
  }

  // Quarantines the payload and evicts the oldest regions beyond capacity.
  std::optional<Violation> free(uint64_t raw, std::string site = {}) {
    auto it = live_.find(raw);
    if (it == live_.end()) {
      const auto kind = quarantined_.count(raw) ? ViolationKind::kDoubleFree
                                                : ViolationKind::kInvalidFree;
      return Violation{kind, std::move(site), 0, std::nullopt, AccessKind::kFree};
    }
    AllocInfo info = it->second;
    if (info.kind != Region::kHeap) {
      // The heap allocator does not own stack or global bases.
      return Violation{ViolationKind::kInvalidFree, std::move(site), 0, std::nullopt,
                       AccessKind::kFree};
    }
    live_.erase(it);
    shadow_.paint(raw, raw + info.size, Shade::kQuarantined);
    quarantined_.emplace(raw, info);
    quarantine_.push_back(raw);
    quarantine_bytes_ += info.size;
    while (quarantine_bytes_ > cfg_.quarantine_capacity) evict_oldest();
    return std::nullopt;
  }

  // Any touched byte that is poisoned, quarantined or unmapped is a
  // violation; the shade picks the reported kind.
  std::optional<Violation> check(uint64_t raw, uint64_t n, AccessKind access,
                                 std::string site = {}) const {
    auto shade = shadow_.first_poisoned(raw, raw + n);
    if (!shade) return std::nullopt;
    const auto kind = (*shade == Shade::kQuarantined) ? ViolationKind::kTemporalInvalid
                                                      : ViolationKind::kSpatialOob;
    return Violation{kind, std::move(site), 0, std::nullopt, access};
  }

  // Stack objects leaving scope become unmapped again; cursor pops.
  void scope_exit(const std::vector<uint64_t>& bases) {
    if (bases.empty()) return;
    uint64_t low = Machine::kStackEnd;
    for (auto it = bases.rbegin(); it != bases.rend(); ++it) {
      auto found = live_.find(*it);
      if (found == live_.end() || found->second.kind != Region::kStack) continue;
      const AllocInfo info = found->second;
      shadow_.paint(info.block, info.block + info.footprint, Shade::kUnmapped);
      live_.erase(found);
      if (info.block < low) low = info.block;
    }
    if (low < stack_cursor_) stack_cursor_ = low;
  }

 private:
  struct AllocInfo {
    uint64_t block = 0;      // start of the left redzone
    uint64_t size = 0;       // payload bytes
    uint64_t footprint = 0;  // whole block span
    Region kind = Region::kHeap;
  };

  struct FreeBlock {
    uint64_t block;
    uint64_t footprint;
  };

  uint64_t block_footprint(uint64_t size) const {
    const uint64_t payload = (size + cfg_.granularity - 1) / cfg_.granularity * cfg_.granularity;
    return Machine::align16(cfg_.redzone_bytes + payload + cfg_.redzone_bytes);
  }

  void evict_oldest() {
    const uint64_t base = quarantine_.front();
    quarantine_.pop_front();
    const AllocInfo info = quarantined_.at(base);
    quarantined_.erase(base);
    quarantine_bytes_ -= info.size;
    shadow_.paint(info.block, info.block + info.footprint, Shade::kUnmapped);
    heap_free_.push_back({info.block, info.footprint});
  }

  uint64_t reserve(Region kind, uint64_t footprint) {
    switch (kind) {
      case Region::kGlobal: {
        if (global_cursor_ + footprint > Machine::kGlobalEnd)
          throw AllocError("global region exhausted");
        uint64_t block = global_cursor_;
        global_cursor_ += footprint;
        return block;
      }
      case Region::kStack: {
        if (stack_cursor_ + footprint > Machine::kStackEnd)
          throw AllocError("stack region exhausted");
        uint64_t block = stack_cursor_;
        stack_cursor_ += footprint;
        return block;
      }
      case Region::kHeap: {
        for (size_t i = 0; i < heap_free_.size(); ++i) {
          if (heap_free_[i].footprint < footprint) continue;
          uint64_t block = heap_free_[i].block;
          if (heap_free_[i].footprint == footprint) {
            heap_free_.erase(heap_free_.begin() + static_cast<long>(i));
          } else {
            heap_free_[i].block += footprint;
            heap_free_[i].footprint -= footprint;
          }
          return block;
        }
        if (heap_cursor_ + footprint > Machine::kHeapEnd)
          throw AllocError("heap region exhausted");
        uint64_t block = heap_cursor_;
        heap_cursor_ += footprint;
        return block;
      }
    }
    throw AllocError("bad region");
  }

  BaselineConfig cfg_;
  ShadowMap shadow_;
  uint64_t heap_cursor_ = 0;
  uint64_t stack_cursor_ = 0;
  uint64_t global_cursor_ = 0;
  std::vector<FreeBlock> heap_free_;
  std::unordered_map<uint64_t, AllocInfo> live_;
  std::unordered_map<uint64_t, AllocInfo> quarantined_;
  std::deque<uint64_t> quarantine_;
  uint64_t quarantine_bytes_ = 0;
};

}  // namespace pacsim
