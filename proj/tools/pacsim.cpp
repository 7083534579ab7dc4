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

// Command-line front end.
//
//   pacsim run <file.pir> [--input i,j,...] [--write-only]
//              [--opt loop-inv,loop-bounds,redundant,static] [--post-dom]
//              [--tool pacsan|baseline] [--continue] [--json out]
//   pacsim corpus --seed N --per-cwe K --out dir
//   pacsim score --corpus dir --tool T [--opt ...] [--write-only] [--json out]
//   pacsim collide --trials N [--seed S]
//
// Exit codes: 0 success / no violations, 1 violations reported,
// 2 usage, parse or execution errors. PACSIM_KEY overrides the key.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pacsim/exec.hpp"
#include "pacsim/harness.hpp"
#include "pacsim/ir.hpp"
#include "pacsim/passes.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pacsim::SimError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw pacsim::SimError("cannot write '" + path + "'");
  out << text;
}

pacsim::OptFlags parse_opt_flags(const std::vector<std::string>& names, bool post_dom) {
  pacsim::OptFlags flags;
  flags.post_dominance = post_dom;
  for (const auto& name : names) {
    if (name == "loop-inv")
      flags.loop_invariant = true;
    else if (name == "loop-bounds")
      flags.loop_bounds = true;
    else if (name == "redundant")
      flags.redundant = true;
    else if (name == "static")
      flags.static_elim = true;
    else
      throw CLI::ValidationError("--opt", "unknown pass '" + name + "'");
  }
  return flags;
}

pacsim::Tool parse_tool(const std::string& name) {
  if (name == "pacsan") return pacsim::Tool::kPacsan;
  if (name == "baseline") return pacsim::Tool::kBaseline;
  throw CLI::ValidationError("--tool", "unknown tool '" + name + "'");
}

int cmd_run(const std::string& file, const std::vector<int64_t>& input_override, bool write_only,
            const std::vector<std::string>& opt, bool post_dom, const std::string& tool_name,
            bool keep_going, const std::string& json_out) {
  using namespace pacsim;
  const PacKey key = key_from_env();
  ParsedFile parsed = parse(read_file(file));
  const std::vector<int64_t>& inputs = input_override.empty() ? parsed.inputs : input_override;

  RunConfig cfg;
  cfg.tool = parse_tool(tool_name);
  cfg.halt_on_violation = !keep_going;
  cfg.checker.write_only = write_only;

  IRProgram program = parsed.program;
  if (cfg.tool == Tool::kPacsan) {
    bool has_checks = false;
    for (const auto& f : program.functions)
      has_checks = has_checks || detail::block_has_check(f.body);
    if (!has_checks) program = instrument(program);
    program = apply_passes(program, parse_opt_flags(opt, post_dom));
  }

  RunResult result = run(program, inputs, cfg, key);
  if (!json_out.empty()) {
    write_output(json_out, to_json(result).dump(2) + "\n");
  }
  if (json_out != "-") {
    for (const auto& v : result.violations) {
      std::cout << to_string(v.kind) << " at " << v.site << " (access " << to_string(v.access);
      if (v.offset) std::cout << ", offset " << *v.offset;
      std::cout << ", seal " << v.seal << ")\n";
    }
    std::cout << result.violations.size() << " violation(s), " << result.dynamic_check_count
              << " dynamic check(s)\n";
  }
  return result.violations.empty() ? 0 : 1;
}

int cmd_corpus(uint64_t seed, int per_cwe, const std::string& out_dir) {
  using namespace pacsim;
  auto corpus = gen_corpus(seed, per_cwe);
  fs::create_directories(out_dir);
  for (const auto& c : corpus) {
    std::ofstream out(fs::path(out_dir) / (c.id + ".pir"), std::ios::binary);
    out << print(c.program, c.inputs);
  }
  std::ofstream manifest(fs::path(out_dir) / "manifest.json", std::ios::binary);
  manifest << corpus_manifest(corpus, seed, per_cwe).dump(2) << "\n";
  std::cout << "wrote " << corpus.size() << " cases to " << out_dir << "\n";
  return 0;
}

std::pair<std::vector<pacsim::CorpusCase>, uint64_t> load_corpus(const std::string& dir) {
  auto manifest = nlohmann::json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  std::vector<pacsim::CorpusCase> corpus;
  for (const auto& entry : manifest.at("cases")) {
    const std::string file = (fs::path(dir) / entry.at("file").get<std::string>()).string();
    corpus.push_back(pacsim::case_from_manifest(entry, read_file(file)));
  }
  return {std::move(corpus), manifest.at("seed").get<uint64_t>()};
}

int cmd_score(const std::string& corpus_dir, const std::string& tool_name,
              const std::vector<std::string>& opt, bool post_dom, bool write_only,
              const std::string& json_out) {
  using namespace pacsim;
  const PacKey key = key_from_env();
  auto [corpus, seed] = load_corpus(corpus_dir);

  ScoreFlags flags;
  flags.tool = parse_tool(tool_name);
  flags.opt = parse_opt_flags(opt, post_dom);
  flags.write_only = write_only;

  ScoreReport report = score(corpus, flags, seed, key);
  std::printf("%-10s %5s %5s %8s %8s\n", "class", "good", "bad", "FP", "FN");
  for (const auto& [cwe, row] : report.per_class) {
    const double fp = row.good_total ? 100.0 * row.false_positives / row.good_total : 0.0;
    const double fn = row.bad_total ? 100.0 * row.false_negatives / row.bad_total : 0.0;
    std::printf("%-10s %5llu %5llu %7.1f%% %7.1f%%\n", cwe.c_str(),
                static_cast<unsigned long long>(row.good_total),
                static_cast<unsigned long long>(row.bad_total), fp, fn);
  }
  if (!json_out.empty()) write_output(json_out, to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_collide(uint64_t trials, uint64_t seed) {
  using namespace pacsim;
  auto result = collision_trial(key_from_env(), trials, seed);
  std::printf("trials    %llu\n", static_cast<unsigned long long>(result.trials));
  std::printf("matches   %llu\n", static_cast<unsigned long long>(result.matches));
  std::printf("empirical %.6e\n", result.rate());
  std::printf("analytic  %.6e\n", CollisionResult::analytic());
  std::printf("sigma     %.6e\n", result.sigma());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seal-based memory-safety simulator"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "execute a .pir program under a checker");
  std::string run_file;
  std::vector<int64_t> run_inputs;
  bool run_write_only = false;
  std::vector<std::string> run_opt;
  bool run_post_dom = false;
  std::string run_tool = "pacsan";
  bool run_continue = false;
  std::string run_json;
  run_cmd->add_option("file", run_file, "program file")->required();
  run_cmd->add_option("--input", run_inputs, "input queue override")->delimiter(',');
  run_cmd->add_flag("--write-only", run_write_only, "check only write accesses");
  run_cmd->add_option("--opt", run_opt, "passes: loop-inv,loop-bounds,redundant,static")
      ->delimiter(',');
  run_cmd->add_flag("--post-dom", run_post_dom, "post-dominance redundant elimination");
  run_cmd->add_option("--tool", run_tool, "pacsan|baseline");
  run_cmd->add_flag("--continue", run_continue, "keep running past violations");
  run_cmd->add_option("--json", run_json, "write the run result as JSON ('-' = stdout)");

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "generate the GOOD/BAD case corpus");
  uint64_t corpus_seed = 1;
  int corpus_per_cwe = 20;
  std::string corpus_out;
  corpus_cmd->add_option("--seed", corpus_seed, "generator seed");
  corpus_cmd->add_option("--per-cwe", corpus_per_cwe, "cases per class")
      ->check(CLI::PositiveNumber);
  corpus_cmd->add_option("--out", corpus_out, "output directory")->required();

  // score
  auto* score_cmd = app.add_subcommand("score", "run a tool over a corpus and report FP/FN");
  std::string score_dir;
  std::string score_tool = "pacsan";
  std::vector<std::string> score_opt;
  bool score_post_dom = false;
  bool score_write_only = false;
  std::string score_json;
  score_cmd->add_option("--corpus", score_dir, "corpus directory")->required();
  score_cmd->add_option("--tool", score_tool, "pacsan|baseline");
  score_cmd->add_option("--opt", score_opt, "passes: loop-inv,loop-bounds,redundant,static")
      ->delimiter(',');
  score_cmd->add_flag("--post-dom", score_post_dom, "post-dominance redundant elimination");
  score_cmd->add_flag("--write-only", score_write_only, "check only write accesses");
  score_cmd->add_option("--json", score_json, "write the report as JSON ('-' = stdout)");

  // collide
  auto* collide_cmd = app.add_subcommand("collide", "raw seal collision experiment");
  uint64_t collide_trials = 10000000;
  uint64_t collide_seed = 1;
  collide_cmd->add_option("--trials", collide_trials, "number of independent pairs")
      ->check(CLI::PositiveNumber);
  collide_cmd->add_option("--seed", collide_seed, "sampling seed");

  try {
    app.parse(argc, argv);
    if (run_cmd->parsed())
      return cmd_run(run_file, run_inputs, run_write_only, run_opt, run_post_dom, run_tool,
                     run_continue, run_json);
    if (corpus_cmd->parsed()) return cmd_corpus(corpus_seed, corpus_per_cwe, corpus_out);
    if (score_cmd->parsed())
      return cmd_score(score_dir, score_tool, score_opt, score_post_dom, score_write_only,
                       score_json);
    if (collide_cmd->parsed()) return cmd_collide(collide_trials, collide_seed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const pacsim::SimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
