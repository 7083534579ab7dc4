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

#include "pacsim/checker.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "pacsim/machine.hpp"

using namespace pacsim;

namespace {
const CheckerConfig kCfg{};
}

TEST_CASE("bound check edges") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 100, 1);

  CHECK_FALSE(check_access(m.table(), w, 1, AccessKind::kRead, kCfg));
  CHECK_FALSE(check_access(m.table(), w, 100, AccessKind::kWrite, kCfg));  // n == size

  auto over = check_access(m.table(), w, 101, AccessKind::kWrite, kCfg);  // n == size + 1
  REQUIRE(over);
  CHECK(over->kind == ViolationKind::kSpatialOob);
  CHECK(over->access == AccessKind::kWrite);
  CHECK(over->offset == 0);
}

TEST_CASE("offset past the end is spatial when the origin lives") {
  Machine m;
  SealedWord buf1 = m.alloc(Region::kHeap, 100, 1);
  SealedWord buf2 = m.alloc(Region::kHeap, 1000, 2);
  (void)buf2;

  // buf1 + 150 lands inside live buf2; the seal still says buf1.
  SealedWord p{encode(strip(buf1) + 150, extract_seal(buf1))};
  auto v = check_access(m.table(), p, 1, AccessKind::kWrite, kCfg, true);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kSpatialOob);
  CHECK(*v->offset == 150);
}

TEST_CASE("negative offsets read back signed") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 64, 1);
  SealedWord p{encode((strip(w) - 8) & kAddrMask, extract_seal(w))};
  auto v = check_access(m.table(), p, 4, AccessKind::kWrite, kCfg);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kSpatialOob);
  CHECK(*v->offset == -8);
}

TEST_CASE("empty slot means temporal violation") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 10, 1);
  REQUIRE_FALSE(m.dealloc_heap(w));

  auto v = check_access(m.table(), w, 1, AccessKind::kWrite, kCfg, false);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kTemporalInvalid);
  CHECK_FALSE(v->offset.has_value());

  // Null and raw pointers index slot 0 and always fail.
  auto null_v = check_access(m.table(), SealedWord{0}, 1, AccessKind::kRead, kCfg);
  REQUIRE(null_v);
  CHECK(null_v->kind == ViolationKind::kTemporalInvalid);
}

TEST_CASE("bound failure through a dead origin labels temporal") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 16, 1);
  REQUIRE_FALSE(m.dealloc_heap(w));
  SealedWord w2 = m.alloc(Region::kHeap, 16, 2);  // reuses the base
  CHECK(strip(w2) == strip(w));

  // Forge the stale seal onto the re-owned address with a bad offset:
  // detection comes from the table, labeling from origin liveness.
  SealedWord stale{encode(strip(w) + 100, extract_seal(w2))};
  auto v = check_access(m.table(), stale, 1, AccessKind::kWrite, kCfg, /*origin_live=*/false);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kTemporalInvalid);
}

TEST_CASE("write-only mode skips reads entirely") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 10, 1);
  REQUIRE_FALSE(m.dealloc_heap(w));

  CheckerConfig wo;
  wo.write_only = true;
  CHECK_FALSE(check_access(m.table(), w, 1, AccessKind::kRead, wo));  // stale, still ok
  auto v = check_access(m.table(), w, 1, AccessKind::kWrite, wo);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kTemporalInvalid);
}

TEST_CASE("check_free authenticates") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 10, 1);

  SECTION("interior pointer is an invalid free") {
    SealedWord p{encode(strip(w) + 1, extract_seal(w))};
    auto r = check_free(m.table(), m.key(), m, p);
    REQUIRE(std::holds_alternative<Violation>(r));
    CHECK(std::get<Violation>(r).kind == ViolationKind::kInvalidFree);
    CHECK(std::get<Violation>(r).access == AccessKind::kFree);
  }

  SECTION("free at base passes and clears") {
    auto r = check_free(m.table(), m.key(), m, w);
    REQUIRE(std::holds_alternative<FreeOk>(r));
    CHECK(std::get<FreeOk>(r).entry.size == 10u);
  }

  SECTION("second free reports double free") {
    REQUIRE_FALSE(m.dealloc_heap(w));
    auto r = check_free(m.table(), m.key(), m, w);
    REQUIRE(std::holds_alternative<Violation>(r));
    CHECK(std::get<Violation>(r).kind == ViolationKind::kDoubleFree);
  }

  SECTION("never-assigned seal is an invalid free") {
    auto r = check_free(m.table(), m.key(), m, SealedWord{0});
    REQUIRE(std::holds_alternative<Violation>(r));
    CHECK(std::get<Violation>(r).kind == ViolationKind::kInvalidFree);
  }
}

TEST_CASE("boundary_out verifies and strips") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 10, 1);

  SECTION("live word strips to its raw address") {
    auto r = boundary_out(m.table(), w, kCfg);
    REQUIRE(std::holds_alternative<uint64_t>(r));
    CHECK(std::get<uint64_t>(r) == strip(w));
  }

  SECTION("interior live word strips, offset 5 of 10 passes n=1") {
    SealedWord p{encode(strip(w) + 5, extract_seal(w))};
    CHECK_FALSE(check_access(m.table(), p, 1, AccessKind::kRead, kCfg));  // the oracle
    auto r = boundary_out(m.table(), p, kCfg);
    REQUIRE(std::holds_alternative<uint64_t>(r));
    CHECK(std::get<uint64_t>(r) == strip(w) + 5);
  }

  SECTION("freed word is a dangling escape") {
    REQUIRE_FALSE(m.dealloc_heap(w));
    auto r = boundary_out(m.table(), w, kCfg);
    REQUIRE(std::holds_alternative<Violation>(r));
    CHECK(std::get<Violation>(r).kind == ViolationKind::kBoundaryDangling);
    CHECK(std::get<Violation>(r).access == AccessKind::kBoundary);
  }
}

TEST_CASE("boundary_in memoizes one conservative entry") {
  Machine m;
  CheckerConfig cfg;
  std::optional<uint32_t> cons;

  SealedWord a = boundary_in(m.table(), m.key(), cfg, cons, 0x12340, m.alloc_counter_ref());
  SealedWord b = boundary_in(m.table(), m.key(), cfg, cons, 0x99990, m.alloc_counter_ref());
  REQUIRE(cons.has_value());
  CHECK(*cons != 0);
  CHECK(extract_seal(a) == *cons);
  CHECK(extract_seal(b) == *cons);
  CHECK(m.table().live_count() == 1);

  // Anywhere in the reachable space passes through the conservative word.
  for (uint64_t addr : {uint64_t{0x1000}, Machine::kHeapBase + 12345, Machine::kStackEnd - 16}) {
    SealedWord p{encode(addr, *cons)};
    CHECK_FALSE(check_access(m.table(), p, 8, AccessKind::kWrite, cfg));
  }
}
