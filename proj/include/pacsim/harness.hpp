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

// Corpus generation per CWE class, FP/FN scoring against a chosen tool,
// and the raw seal-collision experiment.
//
// Every generated case is labeled by the ground-truth engine (object
// extents and liveness, no checker), and the generator aborts if its
// intent and the simulation disagree. Three fixed cases reproduce the
// classic miss constructions: an index jumping across a neighbor
// allocation, a use-after-free surviving 256 MiB of churn, and an
// interior-pointer free.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacsim/exec.hpp"
#include "pacsim/ir.hpp"
#include "pacsim/passes.hpp"

namespace pacsim {

struct CorpusCase {
  std::string id;
  std::string cwe;  // "121".."761" or "subobject"
  bool bad = false;
  IRProgram program;
  std::vector<int64_t> inputs;
  CaseAnnotations annotations;
  // Ground truth, from direct simulation:
  bool violates = false;
  std::string expected_kind;
};

inline const std::vector<std::string>& corpus_classes() {
  static const std::vector<std::string> classes{"121", "122", "124", "126", "127",
                                                "415", "416", "476", "761", "subobject"};
  return classes;
}

namespace detail {

// Raw 64-bit draws from the engine; distributions stay hand-rolled so the
// corpus is identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  // Uniform-ish in [lo, hi], modulo bias irrelevant here.
  int64_t range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(bits() % static_cast<uint64_t>(hi - lo + 1));
  }

  bool chance(int percent) { return range(0, 99) < percent; }

 private:
  std::mt19937_64 engine_;
};

struct CaseBuilder {
  std::string text;
  std::vector<int64_t> inputs;
  CaseAnnotations annotations;
};

// The three fixed constructions, byte-for-byte the committed fixtures.
inline const char* listing_a1_text() {
  return
      "func main {\n"
      "  %buf1 = alloc heap 100\n"
      "  %buf2 = alloc heap 1000\n"
      "  %off = input\n"
      "  %p = gep %buf1, %off\n"
      "  store %p, 1\n"
      "  free %buf1\n"
      "  free %buf2\n"
      "}\n";
}

inline const char* listing_a2_text() {
  return
      "func main {\n"
      "  %data1 = alloc heap 10\n"
      "  free %data1\n"
      "  %a = alloc heap 268435456\n"
      "  free %a\n"
      "  %data2 = alloc heap 10\n"
      "  store %data1, 1\n"
      "  free %data2\n"
      "}\n";
}

inline const char* listing_a2_good_text() {
  return
      "func main {\n"
      "  %data1 = alloc heap 10\n"
      "  free %data1\n"
      "  %a = alloc heap 268435456\n"
      "  free %a\n"
      "  %data2 = alloc heap 10\n"
      "  store %data2, 1\n"
      "  free %data2\n"
      "}\n";
}

inline const char* listing_a3_text() {
  return
      "func main {\n"
      "  %buff = alloc heap 10\n"
      "  %p = gep %buff, 1\n"
      "  free %p\n"
      "}\n";
}

inline const char* listing_a3_good_text() {
  return
      "func main {\n"
      "  %buff = alloc heap 10\n"
      "  %p = gep %buff, 1\n"
      "  load %p, 1\n"
      "  free %buff\n"
      "}\n";
}

// Spatial classes 121/122/124/126/127: one buffer, an input-driven or
// loop-driven access, optional distractor objects.
inline CaseBuilder gen_spatial(Rng& rng, const std::string& cwe, bool bad) {
  CaseBuilder cb;
  const bool heap = (cwe == "122" || rng.chance(30)) && cwe != "121";
  const char* region = (cwe == "121") ? "stack" : (heap ? "heap" : "stack");
  const bool is_read = (cwe == "126" || cwe == "127");
  const bool under = (cwe == "124" || cwe == "127");
  const int64_t width = int64_t{1} << rng.range(0, 3);
  const int64_t size = rng.range(2, 30) * width;  // multiple of width, >= 2w

  std::string body;
  const bool distractor_before = rng.chance(50);
  if (distractor_before) body += "  %d0 = alloc heap " + std::to_string(rng.range(8, 64)) + "\n";

  body += "  %buf = alloc ";
  body += region;
  body += " " + std::to_string(size) + "\n";
  const bool distractor_after = rng.chance(50);
  if (distractor_after) body += "  %d1 = alloc " + std::string(region) + " " +
                                std::to_string(rng.range(8, 64)) + "\n";

  const bool use_loop = !under && rng.chance(35);
  if (use_loop) {
    // loop walks offsets 0..N-1; BAD runs past the end.
    const int64_t good_n = size - width + 1;
    const int64_t n = bad ? size + rng.range(1, 16) : rng.range(1, good_n);
    body += "  loop %i, 0, " + std::to_string(n) + ", 1 {\n";
    body += "    %p = gep %buf, %i\n";
    body += is_read ? "    load %p, " : "    store %p, ";
    body += std::to_string(width) + "\n";
    body += "  }\n";
  } else {
    int64_t off;
    if (under) {
      off = bad ? -rng.range(1, 64) : rng.range(0, size - width);
    } else {
      off = bad ? size - width + rng.range(1, 64) : rng.range(0, size - width);
    }
    cb.inputs.push_back(off);
    body += "  %off = input\n";
    body += "  %p = gep %buf, %off\n";
    body += is_read ? "  load %p, " : "  store %p, ";
    body += std::to_string(width) + "\n";
  }
  if (rng.chance(30)) body += "  call_ext %buf\n";
  if (heap && rng.chance(70)) body += "  free %buf\n";
  if (distractor_before && rng.chance(50)) body += "  free %d0\n";

  cb.text = "func main {\n" + body + "}\n";
  return cb;
}

inline CaseBuilder gen_double_free(Rng& rng, bool bad) {
  CaseBuilder cb;
  const int64_t size = rng.range(8, 256);
  std::string body = "  %p = alloc heap " + std::to_string(size) + "\n";
  if (rng.chance(60)) body += "  store %p, 1\n";
  body += "  free %p\n";
  if (bad) {
    if (rng.chance(30)) body += "  %d = alloc heap " + std::to_string(rng.range(8, 64)) + "\n";
    body += "  free %p\n";
  }
  cb.text = "func main {\n" + body + "}\n";
  return cb;
}

inline CaseBuilder gen_uaf(Rng& rng, bool bad) {
  CaseBuilder cb;
  const int64_t size = rng.range(8, 256);
  const int64_t width = int64_t{1} << rng.range(0, 2);
  std::string body = "  %p = alloc heap " + std::to_string(size) + "\n";
  const int variant = static_cast<int>(rng.range(0, 2));
  if (bad) {
    body += "  free %p\n";
    if (variant == 1) {
      // dangling pointer reused after the region is re-allocated
      body += "  %q = alloc heap " + std::to_string(size) + "\n";
    }
    if (variant == 2) {
      body += "  call_ext %p\n";  // dangling escape to an unprotected module
    } else {
      body += (rng.chance(50) ? "  store %p, " : "  load %p, ") + std::to_string(width) + "\n";
    }
  } else {
    body += (rng.chance(50) ? "  store %p, " : "  load %p, ") + std::to_string(width) + "\n";
    if (variant == 2) body += "  call_ext %p\n";
    body += "  free %p\n";
  }
  cb.text = "func main {\n" + body + "}\n";
  return cb;
}

inline CaseBuilder gen_null_deref(Rng& rng, bool bad) {
  CaseBuilder cb;
  std::string body = "  %p = null\n";
  const bool guarded = rng.chance(50);
  if (bad) {
    if (guarded) {
      // guard tests the wrong register
      body += "  %ok = input\n";
      cb.inputs.push_back(1);
      body += "  if %ok {\n    store %p, 1\n  }\n";
    } else {
      body += (rng.chance(50) ? "  load %p, 1\n" : "  store %p, 1\n");
    }
  } else {
    if (guarded) {
      body += "  if %p {\n    store %p, 1\n  }\n";  // null is falsy
    } else {
      body += "  %b = alloc heap " + std::to_string(rng.range(8, 64)) + "\n";
      body += "  store %b, 1\n";
      body += "  free %b\n";
    }
  }
  cb.text = "func main {\n" + body + "}\n";
  return cb;
}

inline CaseBuilder gen_invalid_free(Rng& rng, bool bad) {
  CaseBuilder cb;
  const int64_t size = rng.range(8, 256);
  std::string body = "  %p = alloc heap " + std::to_string(size) + "\n";
  if (bad) {
    body += "  %q = gep %p, " + std::to_string(rng.range(1, size - 1)) + "\n";
    if (rng.chance(40)) body += "  load %q, 1\n";
    body += "  free %q\n";
  } else {
    if (rng.chance(40)) {
      body += "  %q = gep %p, " + std::to_string(rng.range(1, size - 1)) + "\n";
      body += "  load %q, 1\n";
    }
    body += "  free %p\n";
  }
  cb.text = "func main {\n" + body + "}\n";
  return cb;
}

// In-object access that crosses a recorded field boundary. The access site
// and the alloc site get ground-truth annotations; no checker sees them.
inline CaseBuilder gen_subobject(Rng& rng, bool bad) {
  CaseBuilder cb;
  const int64_t field0 = rng.range(2, 6) * 8;
  const int64_t field1 = rng.range(2, 6) * 8;
  const int64_t size = field0 + field1;
  const int64_t width = int64_t{1} << rng.range(0, 2);
  // BAD stays inside the object but runs past field 0.
  const int64_t off = bad ? rng.range(field0 - width + 1, size - width)
                          : rng.range(0, field0 - width);
  cb.inputs.push_back(off);

  std::string body;
  body += "  %obj = alloc heap " + std::to_string(size) + "\n";
  body += "  %i = input\n";
  body += "  %p = gep %obj, %i\n";
  body += "  store %p, " + std::to_string(width) + "\n";
  body += "  free %obj\n";
  cb.text = "func main {\n" + body + "}\n";

  // Statement sites: alloc is main#0, the store main#3.
  cb.annotations.alloc_fields["main#0"] = {
      FieldExtent{0, static_cast<uint32_t>(field0)},
      FieldExtent{static_cast<uint32_t>(field0), static_cast<uint32_t>(field1)}};
  cb.annotations.access_field["main#3"] = 0;
  return cb;
}

inline CaseBuilder build_case(Rng& rng, const std::string& cwe, bool bad, size_t index) {
  if (index == 0) {
    // Fixed anchor cases: the three classic constructions and their twins.
    if (cwe == "122") {
      CaseBuilder cb;
      cb.text = listing_a1_text();
      cb.inputs.push_back(bad ? 150 : 50);
      return cb;
    }
    if (cwe == "416") return CaseBuilder{bad ? listing_a2_text() : listing_a2_good_text(), {}, {}};
    if (cwe == "761") return CaseBuilder{bad ? listing_a3_text() : listing_a3_good_text(), {}, {}};
  }
  if (cwe == "121" || cwe == "122" || cwe == "124" || cwe == "126" || cwe == "127")
    return gen_spatial(rng, cwe, bad);
  if (cwe == "415") return gen_double_free(rng, bad);
  if (cwe == "416") return gen_uaf(rng, bad);
  if (cwe == "476") return gen_null_deref(rng, bad);
  if (cwe == "761") return gen_invalid_free(rng, bad);
  if (cwe == "subobject") return gen_subobject(rng, bad);
  throw SimError("unknown CWE class '" + cwe + "'");
}

inline std::string case_id(const std::string& cwe, size_t index, bool bad) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04u", static_cast<unsigned>(index % 100000));
  return (cwe == "subobject" ? cwe : "cwe" + cwe) + "-" + buf + (bad ? "-bad" : "-good");
}

}  // namespace detail

// Labels a case by direct ground-truth simulation. Never runs a checker.
inline RunResult ground_truth_run(const CorpusCase& c, PacKey key = PacKey{}) {
  RunConfig cfg;
  cfg.tool = Tool::kGroundTruth;
  return run(c.program, c.inputs, cfg, key, &c.annotations);
}

// Deterministic corpus: per class, `cases_per_cwe` GOOD/BAD pairs. Every
// label is established by the ground-truth engine; a disagreement with the
// generator's intent aborts.
inline std::vector<CorpusCase> gen_corpus(uint64_t seed, int cases_per_cwe) {
  if (cases_per_cwe < 1) throw SimError("cases_per_cwe must be >= 1");
  std::vector<CorpusCase> corpus;
  for (const auto& cwe : corpus_classes()) {
    uint64_t class_salt = detail::site_constant(cwe);
    for (size_t index = 0; index < static_cast<size_t>(cases_per_cwe); ++index) {
      for (bool bad : {false, true}) {
        detail::Rng rng(seed * 0x9E3779B97F4A7C15ull ^ class_salt ^ (index * 2 + (bad ? 1 : 0)));
        detail::CaseBuilder cb = detail::build_case(rng, cwe, bad, index);

        CorpusCase c;
        c.id = detail::case_id(cwe, index, bad);
        c.cwe = cwe;
        c.bad = bad;
        c.program = parse(cb.text).program;
        c.inputs = std::move(cb.inputs);
        c.annotations = std::move(cb.annotations);

        RunResult gt = ground_truth_run(c);
        c.violates = !gt.violations.empty();
        if (c.violates != bad)
          throw InternalError("generator intent disagrees with ground truth for " + c.id);
        if (c.violates) {
          c.expected_kind =
              (cwe == "subobject") ? "subobject-oob" : to_string(gt.violations.front().kind);
        }
        corpus.push_back(std::move(c));
      }
    }
  }
  return corpus;
}

// --- scoring ------------------------------------------------------------

struct CaseVerdict {
  std::string id;
  std::string cwe;
  bool bad = false;
  bool expected = false;  // ground truth: violates
  bool detected = false;
  std::string kind;  // first reported kind, empty when clean
  std::string site;
  uint64_t checks = 0;
};

struct ClassScore {
  uint64_t good_total = 0;
  uint64_t bad_total = 0;
  uint64_t false_positives = 0;
  uint64_t false_negatives = 0;
};

struct ScoreFlags {
  Tool tool = Tool::kPacsan;
  OptFlags opt;
  bool write_only = false;
};

struct ScoreReport {
  uint64_t seed = 0;
  PacKey key;
  ScoreFlags flags;
  std::vector<CaseVerdict> verdicts;
  std::map<std::string, ClassScore> per_class;
};

// Runs one case under a tool. The program is instrumented (and optimized)
// only for the seal checker; the baseline checks accesses directly.
inline RunResult run_case(const CorpusCase& c, const ScoreFlags& flags, PacKey key = PacKey{},
                          bool halt = true, bool verify_ok = false) {
  RunConfig cfg;
  cfg.halt_on_violation = halt;
  cfg.verify_ok = verify_ok;
  if (flags.tool == Tool::kBaseline) {
    cfg.tool = Tool::kBaseline;
    return run(c.program, c.inputs, cfg, key, &c.annotations);
  }
  cfg.tool = Tool::kPacsan;
  cfg.checker.write_only = flags.write_only;
  IRProgram prepared = apply_passes(instrument(c.program), flags.opt);
  return run(prepared, c.inputs, cfg, key, &c.annotations);
}

inline ScoreReport score(const std::vector<CorpusCase>& corpus, const ScoreFlags& flags,
                         uint64_t seed, PacKey key = PacKey{}) {
  ScoreReport report;
  report.seed = seed;
  report.key = key;
  report.flags = flags;
  for (const auto& c : corpus) {
    RunResult r = run_case(c, flags, key);
    CaseVerdict v;
    v.id = c.id;
    v.cwe = c.cwe;
    v.bad = c.bad;
    v.expected = c.violates;
    v.detected = !r.violations.empty();
    if (v.detected) {
      v.kind = to_string(r.violations.front().kind);
      v.site = r.violations.front().site;
    }
    v.checks = r.dynamic_check_count;

    ClassScore& row = report.per_class[c.cwe];
    if (c.bad) {
      ++row.bad_total;
      if (!v.detected) ++row.false_negatives;
    } else {
      ++row.good_total;
      if (v.detected) ++row.false_positives;
    }
    report.verdicts.push_back(std::move(v));
  }
  std::sort(report.verdicts.begin(), report.verdicts.end(),
            [](const CaseVerdict& a, const CaseVerdict& b) { return a.id < b.id; });
  return report;
}

inline std::vector<std::string> opt_flag_names(const OptFlags& opt) {
  std::vector<std::string> names;
  if (opt.loop_invariant) names.push_back("loop-inv");
  if (opt.loop_bounds) names.push_back("loop-bounds");
  if (opt.redundant) names.push_back("redundant");
  if (opt.post_dominance) names.push_back("post-dom");
  if (opt.write_only_pass) names.push_back("write-only");
  if (opt.static_elim) names.push_back("static");
  return names;
}

inline std::string key_string(PacKey key) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(key.value));
  return buf;
}

// Stable JSON: {meta:{key,seed,flags}, cases:[...]}, keys sorted.
inline nlohmann::json to_json(const ScoreReport& report) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& v : report.verdicts) {
    cases.push_back(nlohmann::json{{"id", v.id},
                                   {"cwe", v.cwe},
                                   {"variant", v.bad ? "BAD" : "GOOD"},
                                   {"expected", v.expected},
                                   {"detected", v.detected},
                                   {"kind", v.kind},
                                   {"site", v.site},
                                   {"checks", v.checks}});
  }
  nlohmann::json flags{{"tool", to_string(report.flags.tool)},
                       {"opt", opt_flag_names(report.flags.opt)},
                       {"write_only", report.flags.write_only}};
  return nlohmann::json{
      {"meta",
       {{"key", key_string(report.key)}, {"seed", report.seed}, {"flags", flags}}},
      {"cases", cases}};
}

// --- corpus persistence ----------------------------------------------------

// Layout: <dir>/manifest.json plus one .pir file per case. The manifest is
// authoritative for inputs, labels and ground-truth annotations; the .pir
// files carry an `inputs` directive so they also run standalone.
inline nlohmann::json corpus_manifest(const std::vector<CorpusCase>& corpus, uint64_t seed,
                                      int per_cwe) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : corpus) {
    nlohmann::json entry{{"id", c.id},
                         {"cwe", c.cwe},
                         {"variant", c.bad ? "BAD" : "GOOD"},
                         {"file", c.id + ".pir"},
                         {"inputs", c.inputs},
                         {"violates", c.violates},
                         {"expected_kind", c.expected_kind}};
    if (!c.annotations.alloc_fields.empty()) {
      nlohmann::json fields;
      for (const auto& [site, extents] : c.annotations.alloc_fields) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& e : extents) list.push_back({e.offset, e.length});
        fields[site] = list;
      }
      entry["alloc_fields"] = fields;
    }
    if (!c.annotations.access_field.empty()) {
      nlohmann::json access;
      for (const auto& [site, idx] : c.annotations.access_field) access[site] = idx;
      entry["access_field"] = access;
    }
    cases.push_back(std::move(entry));
  }
  return nlohmann::json{{"seed", seed}, {"per_cwe", per_cwe}, {"cases", cases}};
}

inline CorpusCase case_from_manifest(const nlohmann::json& entry, const std::string& pir_text) {
  CorpusCase c;
  c.id = entry.at("id").get<std::string>();
  c.cwe = entry.at("cwe").get<std::string>();
  c.bad = entry.at("variant").get<std::string>() == "BAD";
  c.inputs = entry.at("inputs").get<std::vector<int64_t>>();
  c.violates = entry.at("violates").get<bool>();
  c.expected_kind = entry.at("expected_kind").get<std::string>();
  if (entry.contains("alloc_fields")) {
    for (const auto& [site, list] : entry.at("alloc_fields").items()) {
      std::vector<FieldExtent> extents;
      for (const auto& pair : list)
        extents.push_back(FieldExtent{pair.at(0).get<uint32_t>(), pair.at(1).get<uint32_t>()});
      c.annotations.alloc_fields[site] = std::move(extents);
    }
  }
  if (entry.contains("access_field")) {
    for (const auto& [site, idx] : entry.at("access_field").items())
      c.annotations.access_field[site] = idx.get<uint32_t>();
  }
  c.program = parse(pir_text).program;
  return c;
}

// --- raw collision experiment ---------------------------------------------

struct CollisionResult {
  uint64_t trials = 0;
  uint64_t matches = 0;

  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(matches) / trials; }
  static double analytic() { return 1.0 / static_cast<double>(uint64_t{1} << kSealBits); }
  double sigma() const {
    const double p = analytic();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  }
};

// Samples independent (base, birthmark, size) pairs and counts equal raw
// seals, with no collision avoidance in the way.
inline CollisionResult collision_trial(PacKey key, uint64_t trials, uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  CollisionResult result;
  result.trials = trials;
  for (uint64_t t = 0; t < trials; ++t) {
    uint32_t seal[2];
    for (int i = 0; i < 2; ++i) {
      const uint64_t base = (rng() & kAddrMask) & ~uint64_t{15};
      const uint32_t bm = static_cast<uint32_t>(rng());
      const uint32_t size = static_cast<uint32_t>(rng()) | 1u;  // nonzero
      seal[i] = pac24(key, base, seal_modifier(bm, size));
    }
    if (seal[0] == seal[1]) ++result.matches;
  }
  return result;
}

}  // namespace pacsim
