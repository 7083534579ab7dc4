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

#include "pacsim/baseline.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "pacsim/exec.hpp"
#include "pacsim/ir.hpp"

using namespace pacsim;

namespace {

std::string fixture(const std::string& name) {
  std::ifstream in(std::string(PACSIM_FIXTURE_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("alloc paints payload addressable and flanks poisoned") {
  BaselineState b;
  const uint64_t base = b.alloc(Region::kHeap, 100);
  CHECK_FALSE(b.check(base, 100, AccessKind::kWrite));
  CHECK_FALSE(b.check(base + 99, 1, AccessKind::kRead));

  auto left = b.check(base - 1, 1, AccessKind::kWrite);
  REQUIRE(left);
  CHECK(left->kind == ViolationKind::kSpatialOob);

  auto right = b.check(base + 100, 1, AccessKind::kWrite);
  REQUIRE(right);
  CHECK(right->kind == ViolationKind::kSpatialOob);

  auto straddle = b.check(base + 96, 8, AccessKind::kWrite);
  REQUIRE(straddle);  // 4 in, 4 out
}

TEST_CASE("allocations never share bytes") {
  BaselineState b;
  std::mt19937_64 rng(17);
  std::vector<std::pair<uint64_t, uint64_t>> extents;
  for (int i = 0; i < 500; ++i) {
    const uint64_t size = (rng() % 200) + 1;
    const uint64_t base = b.alloc(Region::kHeap, size);
    extents.emplace_back(base, base + size);
  }
  std::sort(extents.begin(), extents.end());
  for (size_t i = 1; i < extents.size(); ++i)
    CHECK(extents[i - 1].second + 16 <= extents[i].first);  // a redzone apart at least
}

TEST_CASE("free and quarantine transitions") {
  BaselineState b;
  const uint64_t base = b.alloc(Region::kHeap, 64);

  SECTION("free at base quarantines the payload") {
    CHECK_FALSE(b.free(base));
    auto v = b.check(base, 1, AccessKind::kWrite);
    REQUIRE(v);
    CHECK(v->kind == ViolationKind::kTemporalInvalid);
    CHECK(b.quarantine_bytes() == 64);
  }

  SECTION("double free before eviction") {
    CHECK_FALSE(b.free(base));
    auto v = b.free(base);
    REQUIRE(v);
    CHECK(v->kind == ViolationKind::kDoubleFree);
  }

  SECTION("interior free") {
    auto v = b.free(base + 8);
    REQUIRE(v);
    CHECK(v->kind == ViolationKind::kInvalidFree);
  }

  SECTION("freeing a stack base is invalid") {
    const uint64_t s = b.alloc(Region::kStack, 32);
    auto v = b.free(s);
    REQUIRE(v);
    CHECK(v->kind == ViolationKind::kInvalidFree);
  }
}

TEST_CASE("quarantine evicts FIFO past capacity and reuses the region") {
  BaselineConfig cfg;
  cfg.quarantine_capacity = 256;  // tiny, for the test
  BaselineState b(cfg);

  const uint64_t first = b.alloc(Region::kHeap, 64);
  CHECK_FALSE(b.free(first));
  CHECK(b.quarantine_bytes() == 64);

  const uint64_t big = b.alloc(Region::kHeap, 256);
  CHECK_FALSE(b.free(big));
  CHECK(b.quarantine_bytes() <= cfg.quarantine_capacity);  // first got evicted

  // The evicted region is reusable and lands at the same base.
  const uint64_t again = b.alloc(Region::kHeap, 64);
  CHECK(again == first);
  CHECK_FALSE(b.check(again, 64, AccessKind::kWrite));
}

TEST_CASE("quarantine occupancy never exceeds capacity") {
  BaselineConfig cfg;
  cfg.quarantine_capacity = 4096;
  BaselineState b(cfg);
  std::mt19937_64 rng(23);
  std::vector<uint64_t> live;
  for (int i = 0; i < 2000; ++i) {
    if (!live.empty() && rng() % 2 == 0) {
      const size_t pick = rng() % live.size();
      CHECK_FALSE(b.free(live[pick]));
      live.erase(live.begin() + static_cast<long>(pick));
    } else {
      live.push_back(b.alloc(Region::kHeap, (rng() % 512) + 1));
    }
    CHECK(b.quarantine_bytes() <= cfg.quarantine_capacity);
  }
}

TEST_CASE("unallocated bytes are not addressable") {
  BaselineState b;
  auto v = b.check(Machine::kHeapBase + 0x10000, 4, AccessKind::kRead);
  REQUIRE(v);
  CHECK(v->kind == ViolationKind::kSpatialOob);
}

TEST_CASE("index jump over the redzone is the known miss") {
  ParsedFile a1 = parse(fixture("listing_a1.pir"));
  RunConfig cfg;
  cfg.tool = Tool::kBaseline;
  auto r = run(a1.program, a1.inputs, cfg);
  CHECK(r.violations.empty());  // lands inside the neighbor allocation

  // But a short jump into the redzone is caught.
  auto near_miss = run(a1.program, {104}, cfg);
  REQUIRE(near_miss.violations.size() == 1);
  CHECK(near_miss.violations[0].kind == ViolationKind::kSpatialOob);
}

TEST_CASE("quarantine exhaustion is the known temporal miss") {
  ParsedFile a2 = parse(fixture("listing_a2.pir"));
  RunConfig cfg;
  cfg.tool = Tool::kBaseline;
  CHECK(run(a2.program, a2.inputs, cfg).violations.empty());

  // Without the 256 MiB churn the quarantine catches it.
  auto direct = parse(R"(
func main {
  %data1 = alloc heap 10
  free %data1
  %data2 = alloc heap 10
  store %data1, 1
  free %data2
}
)");
  auto caught = run(direct.program, {}, cfg);
  REQUIRE(caught.violations.size() == 1);
  CHECK(caught.violations[0].kind == ViolationKind::kTemporalInvalid);
}

TEST_CASE("interior free is detected by both tools") {
  ParsedFile a3 = parse(fixture("listing_a3.pir"));
  RunConfig cfg;
  cfg.tool = Tool::kBaseline;
  auto r = run(a3.program, a3.inputs, cfg);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].kind == ViolationKind::kInvalidFree);
}
