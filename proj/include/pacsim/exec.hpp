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

// The execution engine. One interpreter drives three tools over the same
// programs:
//
//   kPacsan      seal-carrying pointers, explicit check statements against
//                the metadata table, authentication on free;
//   kBaseline    raw pointers over the redzone/quarantine shadow, checked
//                at every load/store/free;
//   kGroundTruth raw pointers with full provenance, no checker at all:
//                every access is judged against the object record it was
//                derived from. Used to label corpus cases.
//
// Runs are deterministic functions of (program, inputs, key).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacsim/baseline.hpp"
#include "pacsim/checker.hpp"
#include "pacsim/errors.hpp"
#include "pacsim/ir.hpp"
#include "pacsim/machine.hpp"

namespace pacsim {

enum class Tool { kPacsan, kBaseline, kGroundTruth };

inline const char* to_string(Tool t) {
  switch (t) {
    case Tool::kPacsan: return "pacsan";
    case Tool::kBaseline: return "baseline";
    case Tool::kGroundTruth: return "ground-truth";
  }
  return "?";
}

struct RunConfig {
  Tool tool = Tool::kPacsan;
  CheckerConfig checker;
  BaselineConfig baseline;
  bool halt_on_violation = true;
  // Assert, at every passing non-conservative check, that ground truth
  // confirms the access hits a live object allocated under that seal.
  bool verify_ok = false;
};

struct RunStats {
  uint64_t allocs = 0;
  uint64_t frees = 0;
  uint64_t max_live_objects = 0;
};

struct RunResult {
  std::vector<Violation> violations;
  uint64_t dynamic_check_count = 0;
  RunStats stats;
};

// Ground-truth-only annotations attached to a corpus case, keyed by
// statement site. Invisible to both checkers.
struct CaseAnnotations {
  std::map<std::string, std::vector<FieldExtent>> alloc_fields;
  std::map<std::string, uint32_t> access_field;  // intended field of an access
};

inline nlohmann::json to_json(const Violation& v) {
  nlohmann::json j{{"kind", to_string(v.kind)},
                   {"site", v.site},
                   {"seal", v.seal},
                   {"access", to_string(v.access)}};
  j["offset"] = v.offset ? nlohmann::json(*v.offset) : nlohmann::json();
  return j;
}

inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : r.violations) violations.push_back(to_json(v));
  return nlohmann::json{{"violations", violations},
                        {"dynamic_check_count", r.dynamic_check_count},
                        {"stats",
                         {{"allocs", r.stats.allocs},
                          {"frees", r.stats.frees},
                          {"max_live_objects", r.stats.max_live_objects}}}};
}

namespace detail {

// FNV-1a, used to derive per-site constants from site ids.
inline uint64_t site_constant(const std::string& site) {
  uint64_t h = 1469598103934665603ull;
  for (char c : site) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

class Interpreter {
 public:
  Interpreter(const IRProgram& program, const RunConfig& cfg, PacKey key,
              const CaseAnnotations* annotations)
      : program_(program),
        cfg_(cfg),
        machine_(key),
        baseline_(cfg.baseline),
        annotations_(annotations) {
    number_sites();
  }

  RunResult run(const std::vector<int64_t>& inputs) {
    machine_.set_inputs(inputs);
    init_globals();
    try {
      for (const auto& f : program_.functions) {
        Env env;
        push_scope(env);
        exec_block(f.body, env);
        pop_scope(env);
      }
    } catch (const Halt&) {
    }
    result_.stats.max_live_objects = machine_.max_live_objects();
    return result_;
  }

  const Machine& machine() const { return machine_; }

 private:
  struct Halt {};

  struct Value {
    bool is_ptr = false;
    int64_t ival = 0;
    uint64_t word = 0;  // sealed word (pacsan) or raw address
    ObjectId origin = kNoObject;
    bool external = false;
  };

  struct Scope {
    std::map<std::string, Value> regs;
    std::vector<uint64_t> stack_words;  // words/addresses of stack allocs
  };

  using Env = std::vector<Scope>;

  // --- site numbering: stable pre-order ids, one per statement ---

  void number_sites() {
    for (const auto& f : program_.functions) {
      uint64_t counter = 0;
      number_block(f.body, f.name, counter);
    }
  }

  void number_block(const Block& b, const std::string& fname, uint64_t& counter) {
    for (const auto& stmt : b) {
      sites_[&stmt] = fname + "#" + std::to_string(counter++);
      if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
        number_block(loop->body, fname, counter);
      } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        number_block(ifs->then_body, fname, counter);
        number_block(ifs->else_body, fname, counter);
      }
    }
  }

  const std::string& site_of(const Stmt& stmt) const { return sites_.at(&stmt); }

  // --- environment ---

  void push_scope(Env& env) { env.emplace_back(); }

  void pop_scope(Env& env) {
    Scope& scope = env.back();
    if (!scope.stack_words.empty()) {
      if (cfg_.tool == Tool::kBaseline) {
        baseline_.scope_exit(scope.stack_words);
      } else {
        std::vector<SealedWord> words;
        words.reserve(scope.stack_words.size());
        for (uint64_t w : scope.stack_words) words.push_back(SealedWord{w});
        machine_.scope_exit(words);
      }
    }
    env.pop_back();
  }

  void define(Env& env, const std::string& reg, Value v) {
    env.back().regs.emplace(reg, std::move(v));
  }

  const Value& get(const Env& env, const std::string& reg) const {
    for (auto it = env.rbegin(); it != env.rend(); ++it) {
      auto found = it->regs.find(reg);
      if (found != it->regs.end()) return found->second;
    }
    throw ExecError("register '%" + reg + "' has no value");
  }

  int64_t eval(const Env& env, const AffineExpr& e) const {
    if (e.is_constant()) return e.offset;
    const Value& v = get(env, *e.var);
    if (v.is_ptr) throw ExecError("expression variable '%" + *e.var + "' is a pointer");
    return v.ival * e.scale + e.offset;
  }

  const Value& ptr_operand(const Env& env, const std::string& reg) const {
    const Value& v = get(env, reg);
    if (!v.is_ptr) throw ExecError("register '%" + reg + "' is not a pointer");
    return v;
  }

  // --- violations ---

  void report(Violation v) {
    result_.violations.push_back(std::move(v));
    if (cfg_.halt_on_violation) throw Halt{};
  }

  // --- globals ---

  void init_globals() {
    if (cfg_.tool == Tool::kBaseline) {
      for (const auto& [name, size] : program_.globals) {
        baseline_got_[name] = baseline_.alloc(Region::kGlobal, size);
        ++result_.stats.allocs;
      }
      return;
    }
    got_ = machine_.init_globals(program_.globals);
    result_.stats.allocs += program_.globals.size();
  }

  // --- ground-truth judgment (no checker involved) ---

  void ground_truth_access(const Value& p, uint64_t n, AccessKind access,
                           const std::string& site) {
    if (p.external) return;  // unknown extent, never judged
    if (p.origin == kNoObject) {
      report(Violation{ViolationKind::kTemporalInvalid, site, 0, std::nullopt, access});
      return;
    }
    const ObjectRecord& rec = machine_.object(p.origin);
    if (!rec.live) {
      report(Violation{ViolationKind::kTemporalInvalid, site, rec.seal, std::nullopt, access});
      return;
    }
    const int64_t off = signed_offset39(p.word, rec.base);
    if (off < 0 || static_cast<uint64_t>(off) + n > rec.size) {
      report(Violation{ViolationKind::kSpatialOob, site, rec.seal, off, access});
      return;
    }
    // In-object access crossing a recorded field extent: a sub-object
    // overflow, visible only to ground truth.
    if (annotations_ != nullptr) {
      auto it = annotations_->access_field.find(site);
      if (it != annotations_->access_field.end() && it->second < rec.subobject_bounds.size()) {
        const FieldExtent& field = rec.subobject_bounds[it->second];
        if (off < field.offset || static_cast<uint64_t>(off) + n > field.offset + field.length)
          report(Violation{ViolationKind::kSpatialOob, site, rec.seal, off, access});
      }
    }
  }

  // --- statement execution ---

  void exec_block(const Block& block, Env& env) {
    for (const auto& stmt : block) exec_stmt(stmt, env);
  }

  void exec_stmt(const Stmt& stmt, Env& env) {
    const std::string& site = site_of(stmt);
    std::visit([&](const auto& s) { exec(s, env, site); }, stmt.v);
  }

  void exec(const AllocStmt& s, Env& env, const std::string& site) {
    const int64_t size = eval(env, s.size);
    if (size < 1) throw AllocError("allocation size must be positive, got " + std::to_string(size));
    ++result_.stats.allocs;

    std::vector<FieldExtent> fields;
    if (annotations_ != nullptr) {
      auto it = annotations_->alloc_fields.find(site);
      if (it != annotations_->alloc_fields.end()) fields = it->second;
    }

    Value v;
    v.is_ptr = true;
    if (cfg_.tool == Tool::kBaseline) {
      v.word = baseline_.alloc(s.kind, static_cast<uint64_t>(size));
    } else {
      SealedWord w = machine_.alloc(s.kind, static_cast<uint64_t>(size), site_constant(site),
                                    std::move(fields));
      v.word = cfg_.tool == Tool::kPacsan ? w.raw : strip(w);
      v.origin = *machine_.live_object_at_base(strip(w));
    }
    if (s.kind == Region::kStack) env.back().stack_words.push_back(v.word);
    define(env, s.reg, std::move(v));
  }

  void exec(const GepStmt& s, Env& env, const std::string& site) {
    (void)site;
    const Value& base = ptr_operand(env, s.ptr);
    const int64_t off = eval(env, s.index);
    Value v = base;
    if (cfg_.tool == Tool::kPacsan) {
      const uint64_t addr = (strip(SealedWord{base.word}) + static_cast<uint64_t>(off)) & kAddrMask;
      v.word = addr | (base.word & ~kAddrMask);
    } else {
      v.word = (base.word + static_cast<uint64_t>(off)) & kAddrMask;
    }
    define(env, s.reg, std::move(v));
  }

  void exec(const LoadStmt& s, Env& env, const std::string& site) {
    access(env, s.ptr, s.width, AccessKind::kRead, site);
  }

  void exec(const StoreStmt& s, Env& env, const std::string& site) {
    access(env, s.ptr, s.width, AccessKind::kWrite, site);
  }

  void access(Env& env, const std::string& reg, uint32_t width, AccessKind kind,
              const std::string& site) {
    const Value& p = ptr_operand(env, reg);
    if (cfg_.tool == Tool::kBaseline) {
      ++result_.dynamic_check_count;
      if (auto v = baseline_.check(p.word, width, kind, site)) report(std::move(*v));
    } else if (cfg_.tool == Tool::kGroundTruth) {
      ground_truth_access(p, width, kind, site);
    }
    // kPacsan: accesses themselves are unchecked; `check` statements do it.
  }

  void exec(const CheckStmt& s, Env& env, const std::string& site) {
    if (cfg_.tool != Tool::kPacsan) return;
    if (cfg_.checker.write_only && s.kind == AccessKind::kRead) return;  // not counted
    const Value& p = ptr_operand(env, s.ptr);
    ++result_.dynamic_check_count;
    const bool origin_live = p.external || p.origin == kNoObject || machine_.object_live(p.origin);
    auto v = check_access(machine_.table(), SealedWord{p.word}, s.width, s.kind, cfg_.checker,
                          origin_live, site);
    if (v) {
      report(std::move(*v));
      return;
    }
    if (cfg_.verify_ok) verify_passing_check(p, s.width);
  }

  // Spec'd soundness audit: a passing check through a non-conservative seal
  // must land inside the live object that owns that seal.
  void verify_passing_check(const Value& p, uint32_t width) {
    const uint32_t seal = extract_seal(SealedWord{p.word});
    if (conservative_seal_ && seal == *conservative_seal_) return;
    auto owner = machine_.owner_of_seal(seal);
    if (!owner || !machine_.object_live(*owner))
      throw InternalError("passing check through seal with no live owner");
    const ObjectRecord& rec = machine_.object(*owner);
    const uint64_t addr = strip(SealedWord{p.word});
    if (addr < rec.base || addr + width > rec.base + rec.size)
      throw InternalError("passing check outside the owning object");
  }

  void exec(const FreeStmt& s, Env& env, const std::string& site) {
    const Value& p = ptr_operand(env, s.ptr);
    ++result_.stats.frees;
    if (cfg_.tool == Tool::kBaseline) {
      if (auto v = baseline_.free(p.word, site)) report(std::move(*v));
      return;
    }
    if (cfg_.tool == Tool::kGroundTruth) {
      ground_truth_free(p, site);
      return;
    }
    if (auto v = machine_.dealloc_heap(SealedWord{p.word}, site)) report(std::move(*v));
  }

  void ground_truth_free(const Value& p, const std::string& site) {
    if (p.external) return;
    if (p.origin == kNoObject) {
      report(Violation{ViolationKind::kInvalidFree, site, 0, std::nullopt, AccessKind::kFree});
      return;
    }
    const ObjectRecord& rec = machine_.object(p.origin);
    if (!rec.live) {
      report(Violation{ViolationKind::kDoubleFree, site, rec.seal, std::nullopt,
                       AccessKind::kFree});
      return;
    }
    if (p.word != rec.base || rec.kind != Region::kHeap) {
      report(Violation{ViolationKind::kInvalidFree, site, rec.seal,
                       signed_offset39(p.word, rec.base), AccessKind::kFree});
      return;
    }
    machine_.force_free(p.origin);
  }

  void exec(const LoopStmt& s, Env& env, const std::string& site) {
    (void)site;
    for (int64_t v = s.lo; s.step > 0 ? v < s.hi : v > s.hi; v += s.step) {
      push_scope(env);
      Value iv;
      iv.ival = v;
      define(env, s.var, std::move(iv));
      exec_block(s.body, env);
      pop_scope(env);
    }
  }

  void exec(const IfStmt& s, Env& env, const std::string& site) {
    (void)site;
    const Value& c = get(env, s.cond);
    const bool truthy = c.is_ptr ? c.word != 0 : c.ival != 0;
    const Block& arm = truthy ? s.then_body : s.else_body;
    push_scope(env);
    exec_block(arm, env);
    pop_scope(env);
  }

  void exec(const CallExtStmt& s, Env& env, const std::string& site) {
    const Value& p = ptr_operand(env, s.ptr);
    if (cfg_.tool == Tool::kBaseline) return;  // no seal to verify or strip
    if (cfg_.tool == Tool::kGroundTruth) {
      if (!p.external && p.origin != kNoObject && !machine_.object_live(p.origin))
        report(Violation{ViolationKind::kBoundaryDangling, site, machine_.object(p.origin).seal,
                         std::nullopt, AccessKind::kBoundary});
      return;
    }
    auto out = boundary_out(machine_.table(), SealedWord{p.word}, cfg_.checker, site);
    if (auto* v = std::get_if<Violation>(&out)) report(std::move(*v));
  }

  void exec(const RecvExtStmt& s, Env& env, const std::string& site) {
    (void)site;
    const uint64_t raw = static_cast<uint64_t>(machine_.pop_input()) & kAddrMask;
    Value v;
    v.is_ptr = true;
    v.external = true;
    if (cfg_.tool == Tool::kPacsan) {
      v.word = boundary_in(machine_.table(), machine_.key(), cfg_.checker, conservative_seal_,
                           raw, machine_.alloc_counter_ref())
                   .raw;
    } else {
      v.word = raw;
    }
    define(env, s.reg, std::move(v));
  }

  void exec(const InputStmt& s, Env& env, const std::string& site) {
    (void)site;
    Value v;
    v.ival = machine_.pop_input();
    define(env, s.reg, std::move(v));
  }

  void exec(const AddrOfStmt& s, Env& env, const std::string& site) {
    (void)site;
    Value v;
    v.is_ptr = true;
    if (cfg_.tool == Tool::kBaseline) {
      v.word = baseline_got_.at(s.global);
    } else {
      SealedWord w = got_.at(s.global);
      v.word = cfg_.tool == Tool::kPacsan ? w.raw : strip(w);
      v.origin = *machine_.live_object_at_base(strip(w));
    }
    define(env, s.reg, std::move(v));
  }

  void exec(const NullStmt& s, Env& env, const std::string& site) {
    (void)site;
    Value v;
    v.is_ptr = true;
    define(env, s.reg, std::move(v));
  }

  const IRProgram& program_;
  RunConfig cfg_;
  Machine machine_;
  BaselineState baseline_;
  const CaseAnnotations* annotations_;
  GlobalMap got_;
  std::map<std::string, uint64_t> baseline_got_;
  std::optional<uint32_t> conservative_seal_;
  std::unordered_map<const Stmt*, std::string> sites_;
  RunResult result_;
};

}  // namespace detail

// Executes `program` with `inputs` under the configured tool.
inline RunResult run(const IRProgram& program, const std::vector<int64_t>& inputs,
                     const RunConfig& cfg = {}, PacKey key = PacKey{},
                     const CaseAnnotations* annotations = nullptr) {
  detail::Interpreter interp(program, cfg, key, annotations);
  return interp.run(inputs);
}

}  // namespace pacsim
