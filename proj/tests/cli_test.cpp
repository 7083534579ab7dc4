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

// End-to-end exercises of the installed command line, including the
// documented exit codes: 0 clean, 1 violations, 2 usage/parse errors.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "pacsim_cli_out.txt";
  const std::string cmd =
      std::string(PACSIM_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::ostringstream buf;
  buf << in.rdbuf();
  fs::remove(out);
  return CliResult{WEXITSTATUS(status), buf.str()};
}

std::string fixture_path(const std::string& name) {
  return std::string(PACSIM_FIXTURE_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("run reports violations with exit code 1") {
  auto r = run_cli("run " + fixture_path("listing_a1.pir") + " --json -");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("\"spatial-oob\"") != std::string::npos);
}

TEST_CASE("run is clean with a benign input override") {
  auto r = run_cli("run " + fixture_path("listing_a1.pir") + " --input 50");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("0 violation(s)") != std::string::npos);
}

TEST_CASE("write-only mode through the CLI") {
  CHECK(run_cli("run " + fixture_path("read_oob.pir")).exit_code == 1);
  CHECK(run_cli("run " + fixture_path("read_oob.pir") + " --write-only").exit_code == 0);
  CHECK(run_cli("run " + fixture_path("write_oob.pir") + " --write-only").exit_code == 1);
}

TEST_CASE("baseline tool misses the index jump") {
  auto r = run_cli("run " + fixture_path("listing_a1.pir") + " --tool baseline");
  CHECK(r.exit_code == 0);
}

TEST_CASE("optimization flags are accepted and preserve the verdict") {
  auto r = run_cli("run " + fixture_path("micro_bounds.pir") +
                   " --opt loop-inv,loop-bounds,redundant,static");
  CHECK(r.exit_code == 0);
  auto bad = run_cli("run " + fixture_path("write_oob.pir") + " --opt loop-inv,loop-bounds");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli("run " + fixture_path("listing_a1.pir") + " --frobnicate").exit_code == 2);
  CHECK(run_cli("run 42 missing.pir").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("run " + fixture_path("listing_a1.pir") + " --opt warp-speed").exit_code == 2);
  CHECK(run_cli("run " + fixture_path("listing_a1.pir") + " --tool hwasan").exit_code == 2);
}

TEST_CASE("parse errors exit with 2 and cite the position") {
  const fs::path bad = fs::temp_directory_path() / "pacsim_bad.pir";
  {
    std::ofstream out(bad);
    out << "func main {\n  store %a 4\n}\n";
  }
  auto r = run_cli("run " + bad.string());
  fs::remove(bad);
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("2:") != std::string::npos);  // line 2
}

TEST_CASE("corpus, score and collide round-trip") {
  const fs::path dir = fs::temp_directory_path() / "pacsim_cli_corpus";
  fs::remove_all(dir);

  auto gen = run_cli("corpus --seed 5 --per-cwe 2 --out " + dir.string());
  CHECK(gen.exit_code == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "cwe121-0000-bad.pir"));

  const fs::path json1 = fs::temp_directory_path() / "pacsim_score1.json";
  const fs::path json2 = fs::temp_directory_path() / "pacsim_score2.json";
  auto s1 = run_cli("score --corpus " + dir.string() + " --tool pacsan --json " + json1.string());
  auto s2 = run_cli("score --corpus " + dir.string() + " --tool pacsan --json " + json2.string());
  CHECK(s1.exit_code == 0);
  CHECK(s2.exit_code == 0);
  std::ifstream f1(json1), f2(json2);
  std::ostringstream b1, b2;
  b1 << f1.rdbuf();
  b2 << f2.rdbuf();
  CHECK(b1.str() == b2.str());
  CHECK(b1.str().find("\"cases\"") != std::string::npos);

  auto baseline = run_cli("score --corpus " + dir.string() + " --tool baseline");
  CHECK(baseline.exit_code == 0);

  auto collide = run_cli("collide --trials 100000");
  CHECK(collide.exit_code == 0);
  CHECK(collide.output.find("analytic") != std::string::npos);

  fs::remove_all(dir);
  fs::remove(json1);
  fs::remove(json2);
}

TEST_CASE("a standalone corpus case runs from its own inputs directive") {
  const fs::path dir = fs::temp_directory_path() / "pacsim_cli_corpus2";
  fs::remove_all(dir);
  REQUIRE(run_cli("corpus --seed 5 --per-cwe 1 --out " + dir.string()).exit_code == 0);
  CHECK(run_cli("run " + (dir / "cwe122-0000-bad.pir").string()).exit_code == 1);
  CHECK(run_cli("run " + (dir / "cwe122-0000-good.pir").string()).exit_code == 0);
  fs::remove_all(dir);
}
