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

#include "pacsim/machine.hpp"

#include <random>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "pacsim/exec.hpp"
#include "pacsim/ir.hpp"
#include "pacsim/passes.hpp"

using namespace pacsim;

TEST_CASE("alloc reserves disjoint sealed regions") {
  Machine m;
  SealedWord a = m.alloc(Region::kHeap, 100, 1);
  SealedWord b = m.alloc(Region::kHeap, 1000, 2);
  CHECK(extract_seal(a) != extract_seal(b));
  CHECK(strip(a) + 100 <= strip(b));
  CHECK(strip(a) % 16 == 0);
  CHECK(strip(b) % 16 == 0);
  CHECK(m.live_objects() == 2);
}

TEST_CASE("alloc size limits") {
  Machine m;
  CHECK_THROWS_AS(m.alloc(Region::kHeap, 0, 1), AllocError);
  CHECK_THROWS_AS(m.alloc(Region::kHeap, uint64_t{1} << 32, 1), AllocError);
  CHECK_NOTHROW(m.alloc(Region::kHeap, 1, 1));
}

TEST_CASE("regions do not overlap") {
  Machine m;
  SealedWord h = m.alloc(Region::kHeap, 64, 1);
  SealedWord s = m.alloc(Region::kStack, 64, 2);
  SealedWord g = m.alloc(Region::kGlobal, 64, 3);
  CHECK(strip(g) < Machine::kGlobalEnd);
  CHECK(Machine::kHeapBase <= strip(h));
  CHECK(strip(h) < Machine::kHeapEnd);
  CHECK(Machine::kStackBase <= strip(s));
  CHECK(strip(s) < Machine::kStackEnd);
}

TEST_CASE("heap reuse hands back the base with fresh identity") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 48, 1);
  const uint32_t seal0 = extract_seal(w);
  const uint32_t bm0 = m.table().lookup(seal0).birthmark;
  REQUIRE_FALSE(m.dealloc_heap(w));

  SealedWord w2 = m.alloc(Region::kHeap, 48, 1);
  CHECK(strip(w2) == strip(w));  // first-fit reuse
  CHECK(extract_seal(w2) != seal0);
  CHECK(m.table().lookup(extract_seal(w2)).birthmark != bm0);
  CHECK(m.table().lookup(seal0).empty());
}

TEST_CASE("dealloc violations surface") {
  Machine m;
  SealedWord w = m.alloc(Region::kHeap, 10, 1);
  REQUIRE_FALSE(m.dealloc_heap(w));
  auto v = m.dealloc_heap(w);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kDoubleFree);
}

TEST_CASE("scope_exit purges stack objects") {
  Machine m;
  CheckerConfig cfg;
  SealedWord outer = m.alloc(Region::kStack, 32, 1);
  SealedWord inner1 = m.alloc(Region::kStack, 16, 2);
  SealedWord inner2 = m.alloc(Region::kStack, 16, 3);

  SECTION("purged words fail later checks") {
    m.scope_exit({inner1, inner2});
    auto v = check_access(m.table(), inner1, 1, AccessKind::kWrite, cfg, false);
    REQUIRE(v);
    CHECK(v->kind == ViolationKind::kTemporalInvalid);
    // outer scope unaffected
    CHECK_FALSE(check_access(m.table(), outer, 1, AccessKind::kWrite, cfg));
  }

  SECTION("LIFO unwinding reuses the popped space") {
    const uint64_t base1 = strip(inner1);
    m.scope_exit({inner1, inner2});
    SealedWord again = m.alloc(Region::kStack, 16, 4);
    CHECK(strip(again) == base1);  // cursor popped back
  }

  SECTION("empty list is a no-op") {
    CHECK_NOTHROW(m.scope_exit({}));
    CHECK(m.live_objects() == 3);
  }
}

TEST_CASE("init_globals freezes the map") {
  Machine m;
  GlobalMap got = m.init_globals({{"g1", 16}, {"g2", 32}});
  CHECK(got.size() == 2);
  CHECK(m.live_objects() == 2);
  CHECK(got.frozen());
  CHECK_THROWS_AS(got.set("g3", SealedWord{1}), InternalError);
  CHECK_THROWS_AS(m.init_globals({{"x", 8}}), InternalError);  // runs once
  CHECK_THROWS_AS(got.at("nope"), InternalError);

  Machine m2;
  CHECK_THROWS_AS(m2.init_globals({{"dup", 8}, {"dup", 8}}), InternalError);

  Machine m3;
  GlobalMap empty = m3.init_globals({});
  CHECK(empty.size() == 0);
}

TEST_CASE("input queue exhaustion is an execution error") {
  Machine m;
  m.set_inputs({1});
  CHECK(m.pop_input() == 1);
  CHECK_THROWS_AS(m.pop_input(), ExecError);
}

TEST_CASE("live regions stay disjoint under random churn") {
  Machine m;
  std::mt19937_64 rng(3);
  std::vector<SealedWord> live;
  for (int i = 0; i < 5000; ++i) {
    if (!live.empty() && rng() % 3 == 0) {
      const size_t pick = rng() % live.size();
      REQUIRE_FALSE(m.dealloc_heap(live[pick]));
      live.erase(live.begin() + static_cast<long>(pick));
    } else {
      live.push_back(m.alloc(Region::kHeap, (rng() % 256) + 1, rng()));
    }
  }
  // Pairwise disjoint extents over ground truth.
  std::vector<std::pair<uint64_t, uint64_t>> extents;
  m.for_each_object([&](ObjectId, const ObjectRecord& rec) {
    if (rec.live) extents.emplace_back(rec.base, rec.base + rec.size);
  });
  std::sort(extents.begin(), extents.end());
  for (size_t i = 1; i < extents.size(); ++i) CHECK(extents[i - 1].second <= extents[i].first);
}

TEST_CASE("run is deterministic") {
  auto parsed = parse(R"(
func main {
  %b = alloc heap 64
  %i = input
  %p = gep %b, %i
  store %p, 4
  free %b
}
)");
  IRProgram prog = instrument(parsed.program);
  auto once = to_json(run(prog, {80})).dump();
  auto twice = to_json(run(prog, {80})).dump();
  CHECK(once == twice);
  CHECK(once.find("spatial-oob") != std::string::npos);
}

TEST_CASE("executor surfaces malformed programs as execution errors") {
  auto gep_on_int = parse(R"(
func main {
  %i = input
  %p = gep %i, 4
  store %p, 1
}
)");
  CHECK_THROWS_AS(run(instrument(gep_on_int.program), {1}), ExecError);

  auto starved = parse(R"(
func main {
  %i = input
}
)");
  CHECK_THROWS_AS(run(starved.program, {}), ExecError);
}

TEST_CASE("stack allocations purge per block in the executor") {
  auto parsed = parse(R"(
func main {
  %n = input
  loop %i, 0, 8, 1 {
    %b = alloc stack 32
    store %b, 4
  }
}
)");
  RunConfig cfg;
  auto r = run(instrument(parsed.program), {0}, cfg);
  CHECK(r.violations.empty());
  CHECK(r.stats.allocs == 8);
  CHECK(r.stats.max_live_objects == 1);  // each iteration's object dies at block exit
}
