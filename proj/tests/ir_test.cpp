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

#include "pacsim/ir.hpp"

#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

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

TEST_CASE("fixture programs round-trip") {
  for (const char* name : {"listing_a1.pir", "listing_a2.pir", "listing_a3.pir", "read_oob.pir",
                           "write_oob.pir", "micro_inv.pir", "micro_bounds.pir"}) {
    INFO(name);
    ParsedFile once = parse(fixture(name));
    ParsedFile again = parse(print(once.program, once.inputs));
    CHECK(again.program == once.program);
    CHECK(again.inputs == once.inputs);
  }
}

TEST_CASE("print of a parse is identity on canonical text") {
  const std::string canonical =
      "inputs 5, -3\n"
      "\n"
      "global g1 16\n"
      "\n"
      "func main {\n"
      "  %a = alloc heap 100\n"
      "  %g = addr_of g1\n"
      "  %i = input\n"
      "  %p = gep %a, %i * 4 - 8\n"
      "  check %p, 4, w\n"
      "  store %p, 4\n"
      "  loop %j, 0, 10, 2 {\n"
      "    %q = gep %a, %j\n"
      "    load %q, 1\n"
      "  }\n"
      "  if %i {\n"
      "    call_ext %a\n"
      "  } else {\n"
      "    %n = null\n"
      "  }\n"
      "  %e = recv_ext\n"
      "  free %a\n"
      "}\n";
  ParsedFile parsed = parse(canonical);
  CHECK(print(parsed.program, parsed.inputs) == canonical);
}

TEST_CASE("comments, hex literals and loose layout are accepted") {
  ParsedFile parsed = parse(
      "; header comment\n"
      "func main {  %a = alloc heap 0x40 ; inline\n"
      "store   %a , 2\n}");
  REQUIRE(parsed.program.functions.size() == 1);
  const auto& alloc = std::get<AllocStmt>(parsed.program.functions[0].body[0].v);
  CHECK(alloc.size == AffineExpr::constant(64));
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse("func main {\n  %a = alloc heap\n}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);  // '}' where a size expression should start
    CHECK(e.column >= 1);
  }

  CHECK_THROWS_AS(parse("func main { store %a 4 }"), ParseError);    // missing comma
  CHECK_THROWS_AS(parse("blob main { }"), ParseError);               // unknown item
  CHECK_THROWS_AS(parse("func main { %a = warp 4 }"), ParseError);   // unknown op
  CHECK_THROWS_AS(parse("func main { check %a, 4, x }"), ParseError);
}

TEST_CASE("validation rejects structural breaches") {
  // use before definition
  CHECK_THROWS_AS(parse("func main { store %a, 4 }"), ValidateError);
  // double assignment
  CHECK_THROWS_AS(parse("func main { %a = input %a = input }"), ValidateError);
  // register scoped to its block
  CHECK_THROWS_AS(parse(R"(
func main {
  %c = input
  if %c {
    %a = alloc heap 8
  }
  store %a, 1
}
)"),
                  ValidateError);
  // loop variable only lives in the body
  CHECK_THROWS_AS(parse(R"(
func main {
  loop %i, 0, 4, 1 {
    %x = alloc heap 8
  }
  %y = gep %x, %i
}
)"),
                  ValidateError);
  // zero step
  CHECK_THROWS_AS(parse("func main { loop %i, 0, 4, 0 { } }"), ValidateError);
  // unknown global
  CHECK_THROWS_AS(parse("func main { %g = addr_of nope }"), ValidateError);
  // duplicate global / function names
  CHECK_THROWS_AS(parse("global g 8\nglobal g 8\n"), ValidateError);
  CHECK_THROWS_AS(parse("func f { }\nfunc f { }\n"), ValidateError);
}

TEST_CASE("loop bounds must be literals by grammar") {
  // A register where a literal belongs is a syntax error.
  CHECK_THROWS_AS(parse("func main { %n = input loop %i, 0, %n, 1 { } }"), ParseError);
}

TEST_CASE("trip counts") {
  auto loop = [](int64_t lo, int64_t hi, int64_t step) {
    LoopStmt l;
    l.lo = lo;
    l.hi = hi;
    l.step = step;
    return l;
  };
  CHECK(trip_count(loop(0, 10, 1)) == 10);
  CHECK(trip_count(loop(0, 10, 3)) == 4);
  CHECK(trip_count(loop(10, 0, -1)) == 10);
  CHECK(trip_count(loop(10, 0, -4)) == 3);
  CHECK(trip_count(loop(5, 5, 1)) == 0);
  CHECK(trip_count(loop(7, 3, 2)) == 0);
}

TEST_CASE("affine expressions normalize zero scale") {
  ParsedFile parsed = parse("func main {\n  %a = alloc heap 8\n  %i = input\n  %p = gep %a, %i * 0 + 3\n}");
  const auto& gep = std::get<GepStmt>(parsed.program.functions[0].body[2].v);
  CHECK(gep.index == AffineExpr::constant(3));
}
