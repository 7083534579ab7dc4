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

// The seal-indexed metadata table: 2^24 logical slots mapping a seal to
// {signed base word, birthmark, object size}. Creation walks candidate
// birthmarks downward until the derived seal lands on an empty, nonzero
// slot, so live seals are unique by construction.
//
// Backed by a hash map over the live slots; observable behavior matches
// the dense array (absent slot == all-zero entry).

#pragma once

#include <cstdint>
#include <unordered_map>

#include "pacsim/errors.hpp"
#include "pacsim/sealcodec.hpp"

namespace pacsim {

struct MetadataEntry {
  SealedWord sealed_base{};  // base address signed with the slot's own seal
  uint32_t birthmark = 0;
  uint32_t size = 0;

  bool empty() const { return sealed_base.raw == 0 && birthmark == 0 && size == 0; }

  friend bool operator==(const MetadataEntry& a, const MetadataEntry& b) {
    return a.sealed_base == b.sealed_base && a.birthmark == b.birthmark && a.size == b.size;
  }
};

// Signing modifier: (birthmark << 32) | size.
inline uint64_t seal_modifier(uint32_t birthmark, uint32_t size) {
  return (uint64_t{birthmark} << 32) | size;
}

class MetadataTable {
 public:
  // Number of usable slots. Slot 0 is reserved empty so null and stripped
  // pointers always fail lookup.
  static constexpr uint64_t kSlotCount = uint64_t{1} << kSealBits;

  struct CreateResult {
    uint32_t seal = 0;
    uint32_t birthmark = 0;
  };

  // Finds a free slot for {base, size} starting from the bm32-derived
  // birthmark and decrementing on every collision (a zero seal counts as
  // a collision). Fills the slot and returns (seal, birthmark).
  CreateResult create(PacKey key, uint64_t base, uint32_t size, uint64_t alloc_counter,
                      uint64_t site_constant) {
    if (size < 1) throw AllocError("metadata size must be >= 1");
    if (live_count() >= kSlotCount - 1)
      throw TableFullError("metadata table full: all usable slots live");

    const uint32_t birthmark0 = bm32(key, alloc_counter, site_constant);
    for (uint64_t i = 0; i < (uint64_t{1} << 32); ++i) {
      const uint32_t bm = static_cast<uint32_t>(birthmark0 - i);
      const uint32_t seal = pac24(key, base, seal_modifier(bm, size));
      if (seal == 0 || slots_.count(seal) != 0) continue;
      slots_.emplace(seal, MetadataEntry{encode(base, seal), bm, size});
      return CreateResult{seal, bm};
    }
    throw TableFullError("metadata table full: exhausted 2^32 candidate birthmarks");
  }

  // Slot content; the all-zero entry when empty. Slot 0 is always empty.
  MetadataEntry lookup(uint32_t seal) const {
    auto it = slots_.find(seal & kSealMask);
    return it == slots_.end() ? MetadataEntry{} : it->second;
  }

  void clear(uint32_t seal) {
    if (slots_.erase(seal & kSealMask) == 0)
      throw InternalError("clear of empty metadata slot " + std::to_string(seal));
  }

  uint64_t live_count() const { return slots_.size(); }

  template <typename F>
  void for_each_live(F&& f) const {
    for (const auto& [seal, entry] : slots_) f(seal, entry);
  }

 private:
  std::unordered_map<uint32_t, MetadataEntry> slots_;
};

}  // namespace pacsim
