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

// The virtual execution environment: a 39-bit address space with bump
// allocators for globals, heap and stack, ground-truth object records, and
// the metadata lifecycle (create on alloc, clear on dealloc/purge).
//
// The heap keeps a FIFO free list with first-fit reuse, so a freed base can
// be handed out again deterministically. Object bytes are never stored;
// only extents and liveness matter to every check.

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pacsim/checker.hpp"
#include "pacsim/errors.hpp"
#include "pacsim/metatable.hpp"
#include "pacsim/sealcodec.hpp"

namespace pacsim {

enum class Region { kHeap, kStack, kGlobal };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::kHeap: return "heap";
    case Region::kStack: return "stack";
    case Region::kGlobal: return "global";
  }
  return "?";
}

using ObjectId = uint32_t;
inline constexpr ObjectId kNoObject = 0xFFFFFFFFu;

struct FieldExtent {
  uint32_t offset = 0;
  uint32_t length = 0;
  bool operator==(const FieldExtent&) const = default;
};

// Ground-truth view of one allocation. Invisible to the checker except for
// violation labeling.
struct ObjectRecord {
  uint64_t base = 0;
  uint32_t size = 0;
  Region kind = Region::kHeap;
  uint32_t seal = 0;
  uint32_t birthmark = 0;
  bool live = false;
  std::vector<FieldExtent> subobject_bounds;
};

// Immutable name -> sealed word map standing in for the GOT. Mutation after
// the startup freeze is a machine bug.
class GlobalMap {
 public:
  void set(const std::string& name, SealedWord w) {
    if (frozen_) throw InternalError("global map is frozen");
    if (!map_.emplace(name, w).second) throw InternalError("duplicate global '" + name + "'");
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  SealedWord at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw InternalError("unknown global '" + name + "'");
    return it->second;
  }

  size_t size() const { return map_.size(); }

 private:
  std::map<std::string, SealedWord> map_;
  bool frozen_ = false;
};

class Machine : public SealGroundTruth {
 public:
  // Reachable address layout, all below 2^32 so the conservative boundary
  // extent (size 2^32 - 1 from base 0) covers every object.
  static constexpr uint64_t kGlobalBase = 0x0000'1000ull;
  static constexpr uint64_t kGlobalEnd = 0x0800'0000ull;
  static constexpr uint64_t kHeapBase = 0x0800'0000ull;
  static constexpr uint64_t kHeapEnd = 0x8000'0000ull;
  static constexpr uint64_t kStackBase = 0x8000'0000ull;
  static constexpr uint64_t kStackEnd = 0xC000'0000ull;
  static constexpr uint64_t kMaxObjectSize = 0xFFFFFFFFull;

  explicit Machine(PacKey key = PacKey{}) : key_(key) {
    heap_cursor_ = kHeapBase;
    stack_cursor_ = kStackBase;
    global_cursor_ = kGlobalBase;
  }

  PacKey key() const { return key_; }
  MetadataTable& table() { return table_; }
  const MetadataTable& table() const { return table_; }

  static uint64_t align16(uint64_t n) { return (n + 15) & ~uint64_t{15}; }

  // Reserves a fresh 16-byte-aligned region, creates its metadata and
  // returns the sealed pointer to the base.
  SealedWord alloc(Region kind, uint64_t size, uint64_t site_constant,
                   std::vector<FieldExtent> fields = {}) {
    if (size < 1 || size > kMaxObjectSize)
      throw AllocError("allocation size out of range: " + std::to_string(size));
    const uint64_t base = reserve(kind, align16(size));
    const auto created =
        table_.create(key_, base, static_cast<uint32_t>(size), alloc_counter_++, site_constant);

    ObjectRecord rec;
    rec.base = base;
    rec.size = static_cast<uint32_t>(size);
    rec.kind = kind;
    rec.seal = created.seal;
    rec.birthmark = created.birthmark;
    rec.live = true;
    rec.subobject_bounds = std::move(fields);
    const ObjectId id = static_cast<ObjectId>(objects_.size());
    objects_.push_back(std::move(rec));
    seal_owner_[created.seal] = id;
    live_by_base_[base] = id;
    ++live_objects_;
    if (live_objects_ > max_live_objects_) max_live_objects_ = live_objects_;
    return encode(base, created.seal);
  }

  // Heap deallocation through the authentication check. On success the
  // entry is cleared and the region returns to the free list.
  std::optional<Violation> dealloc_heap(SealedWord w, std::string site = {}) {
    auto result = check_free(table_, key_, *this, w, site);
    if (auto* v = std::get_if<Violation>(&result)) return *v;

    const auto& entry = std::get<FreeOk>(result).entry;
    const uint64_t raw = strip(entry.sealed_base);
    auto found = live_by_base_.find(raw);
    if (found == live_by_base_.end()) {
      // Authenticated entry with no backing object (the conservative
      // boundary entry): the allocator does not own this base.
      return Violation{ViolationKind::kInvalidFree, std::move(site), extract_seal(w),
                       std::nullopt, AccessKind::kFree};
    }
    const ObjectId id = found->second;
    kill(id);
    if (objects_[id].kind == Region::kHeap)
      heap_free_.push_back({raw, align16(objects_[id].size)});
    return std::nullopt;
  }

  // Implicit purge of stack objects leaving scope: metadata cleared with no
  // authentication, records marked dead, cursor popped. LIFO.
  void scope_exit(const std::vector<SealedWord>& stack_marks) {
    if (stack_marks.empty()) return;
    uint64_t low = kStackEnd;
    for (auto it = stack_marks.rbegin(); it != stack_marks.rend(); ++it) {
      const uint64_t base = strip(*it);
      auto found = live_by_base_.find(base);
      if (found == live_by_base_.end()) continue;  // already freed explicitly
      const ObjectId id = found->second;
      if (!objects_[id].live || objects_[id].kind != Region::kStack) continue;
      kill(id);
      if (base < low) low = base;
    }
    if (low < stack_cursor_) stack_cursor_ = low;
  }

  // Ground-truth deallocation: kills a live object without consulting any
  // checker. Used by the labeling engine.
  void force_free(ObjectId id) {
    const ObjectRecord& rec = objects_.at(id);
    if (!rec.live) throw InternalError("force_free of dead object");
    kill(id);
    if (rec.kind == Region::kHeap) heap_free_.push_back({rec.base, align16(rec.size)});
  }

  // Allocates every named global and returns the frozen map. Runs once.
  GlobalMap init_globals(const std::vector<std::pair<std::string, uint32_t>>& globals) {
    if (globals_initialized_) throw InternalError("globals already initialized");
    globals_initialized_ = true;
    GlobalMap got;
    uint64_t idx = 0;
    for (const auto& [name, size] : globals) {
      got.set(name, alloc(Region::kGlobal, size, 0xA110'0000ull + idx++));
    }
    got.freeze();
    return got;
  }

  // --- input queue (case inputs) ---

  void push_input(int64_t v) { input_queue_.push_back(v); }

  void set_inputs(const std::vector<int64_t>& vs) {
    input_queue_.assign(vs.begin(), vs.end());
  }

  int64_t pop_input() {
    if (input_queue_.empty()) throw ExecError("input queue exhausted");
    int64_t v = input_queue_.front();
    input_queue_.pop_front();
    return v;
  }

  // --- ground truth ---

  std::optional<bool> seal_owner_live(uint32_t seal) const override {
    auto it = seal_owner_.find(seal);
    if (it == seal_owner_.end()) return std::nullopt;
    return objects_[it->second].live;
  }

  const ObjectRecord& object(ObjectId id) const { return objects_.at(id); }
  std::optional<ObjectId> live_object_at_base(uint64_t base) const {
    auto it = live_by_base_.find(base);
    if (it == live_by_base_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<ObjectId> owner_of_seal(uint32_t seal) const {
    auto it = seal_owner_.find(seal);
    if (it == seal_owner_.end()) return std::nullopt;
    return it->second;
  }

  bool object_live(ObjectId id) const { return id != kNoObject && objects_.at(id).live; }

  uint64_t alloc_counter() const { return alloc_counter_; }
  uint64_t& alloc_counter_ref() { return alloc_counter_; }
  uint64_t live_objects() const { return live_objects_; }
  uint64_t max_live_objects() const { return max_live_objects_; }
  size_t object_count() const { return objects_.size(); }

  template <typename F>
  void for_each_object(F&& f) const {
    for (ObjectId id = 0; id < objects_.size(); ++id) f(id, objects_[id]);
  }

 private:
  struct FreeBlock {
    uint64_t base;
    uint64_t bytes;
  };

  void kill(ObjectId id) {
    ObjectRecord& rec = objects_[id];
    if (!rec.live) throw InternalError("object killed twice");
    rec.live = false;
    live_by_base_.erase(rec.base);
    table_.clear(rec.seal);
    --live_objects_;
  }

  uint64_t reserve(Region kind, uint64_t bytes) {
    switch (kind) {
      case Region::kGlobal: {
        if (global_cursor_ + bytes > kGlobalEnd) throw AllocError("global region exhausted");
        uint64_t base = global_cursor_;
        global_cursor_ += bytes;
        return base;
      }
      case Region::kStack: {
        if (stack_cursor_ + bytes > kStackEnd) throw AllocError("stack region exhausted");
        uint64_t base = stack_cursor_;
        stack_cursor_ += bytes;
        return base;
      }
      case Region::kHeap: {
        // First fit over the FIFO free list, splitting oversized blocks.
        for (size_t i = 0; i < heap_free_.size(); ++i) {
          if (heap_free_[i].bytes < bytes) continue;
          uint64_t base = heap_free_[i].base;
          if (heap_free_[i].bytes == bytes) {
            heap_free_.erase(heap_free_.begin() + static_cast<long>(i));
          } else {
            heap_free_[i].base += bytes;
            heap_free_[i].bytes -= bytes;
          }
          return base;
        }
        if (heap_cursor_ + bytes > kHeapEnd) throw AllocError("heap region exhausted");
        uint64_t base = heap_cursor_;
        heap_cursor_ += bytes;
        return base;
      }
    }
    throw AllocError("bad region");
  }

  PacKey key_;
  MetadataTable table_;
  uint64_t heap_cursor_ = 0;
  uint64_t stack_cursor_ = 0;
  uint64_t global_cursor_ = 0;
  std::vector<FreeBlock> heap_free_;
  std::vector<ObjectRecord> objects_;
  std::unordered_map<uint64_t, ObjectId> live_by_base_;
  std::unordered_map<uint32_t, ObjectId> seal_owner_;  // latest owner, live or dead
  uint64_t alloc_counter_ = 0;
  uint64_t live_objects_ = 0;
  uint64_t max_live_objects_ = 0;
  std::deque<int64_t> input_queue_;
  bool globals_initialized_ = false;
};

}  // namespace pacsim
