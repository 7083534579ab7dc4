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

// Check instrumentation and the optimization passes.
//
// Every pass is a pure program-to-program function and is idempotent. All
// of them reason about a check through its resolved address range: the
// root pointer register (found by walking the gep chain) plus a composed
// affine offset, when the chain composes to a single-variable form.
//
// Soundness guards, chosen so that an optimized run reports the same
// violation kinds as the unoptimized run:
//   - nothing is hoisted out of, or kept available across, a region that
//     contains free/call_ext (those can invalidate metadata);
//   - loops are only transformed when the static trip count is >= 1 and
//     the check executes unconditionally in the body;
//   - statically verified checks are only removed when the base object is
//     never freed or escaped anywhere in the function.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pacsim/ir.hpp"

namespace pacsim {

// --- instrumentation ----------------------------------------------------

namespace detail {

inline bool block_has_check(const Block& b) {
  for (const auto& stmt : b) {
    if (std::holds_alternative<CheckStmt>(stmt.v)) return true;
    if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
      if (block_has_check(loop->body)) return true;
    } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
      if (block_has_check(ifs->then_body) || block_has_check(ifs->else_body)) return true;
    }
  }
  return false;
}

inline Block instrument_block(const Block& b) {
  Block out;
  for (const auto& stmt : b) {
    if (const auto* load = std::get_if<LoadStmt>(&stmt.v)) {
      out.push_back(Stmt{CheckStmt{load->ptr, load->width, AccessKind::kRead}});
      out.push_back(stmt);
    } else if (const auto* store = std::get_if<StoreStmt>(&stmt.v)) {
      out.push_back(Stmt{CheckStmt{store->ptr, store->width, AccessKind::kWrite}});
      out.push_back(stmt);
    } else if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
      LoopStmt l = *loop;
      l.body = instrument_block(loop->body);
      out.push_back(Stmt{std::move(l)});
    } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
      IfStmt i = *ifs;
      i.then_body = instrument_block(ifs->then_body);
      i.else_body = instrument_block(ifs->else_body);
      out.push_back(Stmt{std::move(i)});
    } else {
      out.push_back(stmt);
    }
  }
  return out;
}

}  // namespace detail

// Inserts a check in front of every load and store. Rejects a program that
// already carries checks.
inline IRProgram instrument(const IRProgram& p) {
  for (const auto& f : p.functions)
    if (detail::block_has_check(f.body))
      throw ValidateError("program is already instrumented");
  IRProgram out = p;
  for (auto& f : out.functions) f.body = detail::instrument_block(f.body);
  return out;
}

inline uint64_t static_check_count(const IRProgram& p) {
  uint64_t n = 0;
  struct Walk {
    uint64_t& n;
    void operator()(const Block& b) {
      for (const auto& stmt : b) {
        if (std::holds_alternative<CheckStmt>(stmt.v)) ++n;
        if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) (*this)(loop->body);
        if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
          (*this)(ifs->then_body);
          (*this)(ifs->else_body);
        }
      }
    }
  } walk{n};
  for (const auto& f : p.functions) walk(f.body);
  return n;
}

// --- check range resolution ----------------------------------------------

namespace detail {

// Where a register comes from, function-wide (names are SSA). Definitions
// are stored by value: passes relocate statements while resolving.
struct DefMap {
  std::map<std::string, GepStmt> geps;
  std::map<std::string, AllocStmt> allocs;
  std::map<std::string, AddrOfStmt> addrs;
  std::set<std::string> all_names;

  void collect(const Block& b) {
    for (const auto& stmt : b) {
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, AllocStmt>) {
              allocs.emplace(s.reg, s);
              all_names.insert(s.reg);
            } else if constexpr (std::is_same_v<T, GepStmt>) {
              geps.emplace(s.reg, s);
              all_names.insert(s.reg);
            } else if constexpr (std::is_same_v<T, AddrOfStmt>) {
              addrs.emplace(s.reg, s);
              all_names.insert(s.reg);
            } else if constexpr (std::is_same_v<T, LoopStmt>) {
              all_names.insert(s.var);
              collect(s.body);
            } else if constexpr (std::is_same_v<T, IfStmt>) {
              collect(s.then_body);
              collect(s.else_body);
            } else if constexpr (std::is_same_v<T, RecvExtStmt> ||
                                 std::is_same_v<T, InputStmt> || std::is_same_v<T, NullStmt>) {
              all_names.insert(s.reg);
            }
          },
          stmt.v);
    }
  }
};

// Root register after walking the gep chain. Always defined.
inline std::string resolve_root(const DefMap& defs, const std::string& reg) {
  std::string cur = reg;
  for (;;) {
    auto it = defs.geps.find(cur);
    if (it == defs.geps.end()) return cur;
    cur = it->second.ptr;
  }
}

// Sum of two affine expressions, when it stays affine in one variable.
inline std::optional<AffineExpr> affine_sum(const AffineExpr& a, const AffineExpr& b) {
  if (a.is_constant()) return AffineExpr::of(b.var.value_or(""), b.scale, b.offset + a.offset);
  if (b.is_constant()) return AffineExpr::of(*a.var, a.scale, a.offset + b.offset);
  if (*a.var == *b.var) return AffineExpr::of(*a.var, a.scale + b.scale, a.offset + b.offset);
  return std::nullopt;
}

// (root, composed offset) for a pointer register; the offset is absent when
// the gep chain mixes variables.
struct ResolvedRange {
  std::string root;
  std::optional<AffineExpr> expr;
};

inline ResolvedRange resolve_range(const DefMap& defs, const std::string& reg) {
  std::string cur = reg;
  std::optional<AffineExpr> acc = AffineExpr::constant(0);
  for (;;) {
    auto it = defs.geps.find(cur);
    if (it == defs.geps.end()) return ResolvedRange{cur, acc};
    if (acc) acc = affine_sum(it->second.index, *acc);
    cur = it->second.ptr;
  }
}

// Stable identity of a check's accessed range, for redundancy matching.
inline std::optional<std::string> range_key(const DefMap& defs, const CheckStmt& c) {
  ResolvedRange r = resolve_range(defs, c.ptr);
  if (!r.expr) return std::nullopt;
  std::string key = r.root + "|" + r.expr->var.value_or("") + "|" +
                    std::to_string(r.expr->scale) + "|" + std::to_string(r.expr->offset) + "|" +
                    std::to_string(c.width) + "|" + (c.kind == AccessKind::kRead ? "r" : "w");
  return key;
}

inline bool contains_free_or_callext(const Block& b) {
  for (const auto& stmt : b) {
    if (std::holds_alternative<FreeStmt>(stmt.v) ||
        std::holds_alternative<CallExtStmt>(stmt.v))
      return true;
    if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
      if (contains_free_or_callext(loop->body)) return true;
    } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
      if (contains_free_or_callext(ifs->then_body) || contains_free_or_callext(ifs->else_body))
        return true;
    }
  }
  return false;
}

// Registers defined anywhere inside a loop (its variable included).
inline void collect_defs(const Block& b, std::set<std::string>& defs) {
  for (const auto& stmt : b) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, AllocStmt> || std::is_same_v<T, GepStmt> ||
                        std::is_same_v<T, RecvExtStmt> || std::is_same_v<T, InputStmt> ||
                        std::is_same_v<T, AddrOfStmt> || std::is_same_v<T, NullStmt>) {
            defs.insert(s.reg);
          } else if constexpr (std::is_same_v<T, LoopStmt>) {
            defs.insert(s.var);
            collect_defs(s.body, defs);
          } else if constexpr (std::is_same_v<T, IfStmt>) {
            collect_defs(s.then_body, defs);
            collect_defs(s.else_body, defs);
          }
        },
        stmt.v);
  }
}

inline std::string fresh_name(std::set<std::string>& names, uint64_t& counter) {
  for (;;) {
    std::string candidate = "__t" + std::to_string(counter++);
    if (names.insert(candidate).second) return candidate;
  }
}

}  // namespace detail

// --- loop-invariant check hoisting ---------------------------------------

namespace detail {

struct LoopInvariant {
  DefMap defs;
  uint64_t counter = 0;

  Block walk(const Block& b) {
    Block out;
    for (const auto& stmt : b) {
      if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
        LoopStmt l = *loop;
        l.body = walk(l.body);  // innermost first
        hoist(l, out);
        out.push_back(Stmt{std::move(l)});
      } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        IfStmt i = *ifs;
        i.then_body = walk(i.then_body);
        i.else_body = walk(i.else_body);
        out.push_back(Stmt{std::move(i)});
      } else {
        out.push_back(stmt);
      }
    }
    return out;
  }

  void hoist(LoopStmt& loop, Block& out) {
    if (trip_count(loop) < 1 || contains_free_or_callext(loop.body)) return;
    std::set<std::string> body_defs;
    body_defs.insert(loop.var);
    collect_defs(loop.body, body_defs);

    Block kept;
    for (auto& stmt : loop.body) {
      const auto* check = std::get_if<CheckStmt>(&stmt.v);
      if (check != nullptr) {
        ResolvedRange range = resolve_range(defs, check->ptr);
        const bool root_invariant = body_defs.count(range.root) == 0;
        const bool expr_invariant =
            range.expr && (!range.expr->var || body_defs.count(*range.expr->var) == 0);
        if (root_invariant && expr_invariant) {
          if (body_defs.count(check->ptr) == 0) {
            out.push_back(stmt);  // the pointer itself is visible here
          } else {
            std::string tmp = fresh_name(defs.all_names, counter);
            GepStmt gep{tmp, range.root, *range.expr};
            defs.geps.emplace(tmp, gep);
            out.push_back(Stmt{std::move(gep)});
            out.push_back(Stmt{CheckStmt{tmp, check->width, check->kind}});
          }
          continue;
        }
      }
      kept.push_back(std::move(stmt));
    }
    loop.body = std::move(kept);
  }
};

}  // namespace detail

// Moves a check whose whole address range is loop-invariant in front of the
// loop, one enclosing level at a time, innermost loops first. Only checks
// that run unconditionally in every iteration are moved.
inline IRProgram pass_loop_invariant(const IRProgram& p) {
  IRProgram out = p;
  for (auto& f : out.functions) {
    detail::LoopInvariant pass;
    pass.defs.collect(f.body);
    f.body = pass.walk(f.body);
  }
  return out;
}

// --- loop bound pointers --------------------------------------------------

namespace detail {

struct LoopBounds {
  DefMap defs;
  uint64_t counter = 0;

  Block walk(const Block& b) {
    Block out;
    for (const auto& stmt : b) {
      if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
        LoopStmt l = *loop;
        l.body = walk(l.body);
        rewrite(l, out);
        out.push_back(Stmt{std::move(l)});
      } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        IfStmt i = *ifs;
        i.then_body = walk(i.then_body);
        i.else_body = walk(i.else_body);
        out.push_back(Stmt{std::move(i)});
      } else {
        out.push_back(stmt);
      }
    }
    return out;
  }

  void rewrite(LoopStmt& loop, Block& out) {
    const uint64_t trip = trip_count(loop);
    if (trip < 1 || contains_free_or_callext(loop.body)) return;
    std::set<std::string> body_defs;
    body_defs.insert(loop.var);
    collect_defs(loop.body, body_defs);

    const int64_t last = loop.lo + static_cast<int64_t>(trip - 1) * loop.step;
    const int64_t vmin = std::min(loop.lo, last);
    const int64_t vmax = std::max(loop.lo, last);

    Block kept;
    for (auto& stmt : loop.body) {
      const auto* check = std::get_if<CheckStmt>(&stmt.v);
      if (check != nullptr) {
        ResolvedRange range = resolve_range(defs, check->ptr);
        const bool root_invariant = body_defs.count(range.root) == 0;
        const bool affine_in_loop_var =
            range.expr && (range.expr->is_constant() || *range.expr->var == loop.var);
        if (root_invariant && affine_in_loop_var) {
          int64_t lo_off, hi_off;
          if (range.expr->is_constant()) {
            lo_off = hi_off = range.expr->offset;
          } else {
            const int64_t a = range.expr->scale;
            const int64_t at_min = a * vmin + range.expr->offset;
            const int64_t at_max = a * vmax + range.expr->offset;
            lo_off = std::min(at_min, at_max);
            hi_off = std::max(at_min, at_max);
          }
          emit_check(out, range.root, lo_off, check->width, check->kind);
          if (hi_off != lo_off) emit_check(out, range.root, hi_off, check->width, check->kind);
          continue;  // per-iteration check removed
        }
      }
      kept.push_back(std::move(stmt));
    }
    loop.body = std::move(kept);
  }

  void emit_check(Block& out, const std::string& root, int64_t off, uint32_t width,
                  AccessKind kind) {
    std::string tmp = fresh_name(defs.all_names, counter);
    GepStmt gep{tmp, root, AffineExpr::constant(off)};
    defs.geps.emplace(tmp, gep);
    out.push_back(Stmt{std::move(gep)});
    out.push_back(Stmt{CheckStmt{tmp, width, kind}});
  }
};

}  // namespace detail

// Replaces the per-iteration check of a linearly advancing pointer with two
// pre-loop checks that cover the lowest and highest accessed ranges (one
// check when they coincide).
inline IRProgram pass_loop_bounds(const IRProgram& p) {
  IRProgram out = p;
  for (auto& f : out.functions) {
    detail::LoopBounds pass;
    pass.defs.collect(f.body);
    f.body = pass.walk(f.body);
  }
  return out;
}

// --- redundant check elimination -------------------------------------------

namespace detail {

struct RedundantElim {
  const DefMap& defs;

  // Forward walk with an availability set of dominating check ranges.
  // free/call_ext invalidate everything they might reach.
  void walk(Block& b, std::set<std::string>& avail) {
    Block out;
    for (auto& stmt : b) {
      if (const auto* check = std::get_if<CheckStmt>(&stmt.v)) {
        auto key = range_key(defs, *check);
        if (key && avail.count(*key)) continue;  // dominated: drop
        if (key) avail.insert(*key);
        out.push_back(std::move(stmt));
      } else if (std::holds_alternative<FreeStmt>(stmt.v) ||
                 std::holds_alternative<CallExtStmt>(stmt.v)) {
        avail.clear();
        out.push_back(std::move(stmt));
      } else if (auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
        const bool kills = contains_free_or_callext(loop->body);
        std::set<std::string> body_avail;
        if (!kills) body_avail = avail;
        walk(loop->body, body_avail);
        if (kills) avail.clear();
        out.push_back(std::move(stmt));
      } else if (auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        // Only checks available before the branch dominate the join.
        std::set<std::string> before = avail;
        std::set<std::string> then_out = before;
        std::set<std::string> else_out = before;
        walk(ifs->then_body, then_out);
        walk(ifs->else_body, else_out);
        avail.clear();
        for (const auto& k : before)
          if (then_out.count(k) && else_out.count(k)) avail.insert(k);
        out.push_back(std::move(stmt));
      } else {
        out.push_back(std::move(stmt));
      }
    }
    b = std::move(out);
  }

  // Post-dominance variant: within a straight-line run, an earlier check is
  // dropped when an identical one is guaranteed to execute later.
  void walk_post(Block& b) {
    for (auto& stmt : b) {
      if (auto* loop = std::get_if<LoopStmt>(&stmt.v)) walk_post(loop->body);
      if (auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        walk_post(ifs->then_body);
        walk_post(ifs->else_body);
      }
    }
    std::set<std::string> later;
    Block out;
    for (auto it = b.rbegin(); it != b.rend(); ++it) {
      if (const auto* check = std::get_if<CheckStmt>(&it->v)) {
        auto key = range_key(defs, *check);
        if (key && later.count(*key)) continue;
        if (key) later.insert(*key);
      } else if (!std::holds_alternative<LoadStmt>(it->v) &&
                 !std::holds_alternative<StoreStmt>(it->v) &&
                 !std::holds_alternative<GepStmt>(it->v)) {
        // Anything that can change metadata or control flow is a barrier.
        later.clear();
      }
      out.push_back(std::move(*it));
    }
    std::reverse(out.begin(), out.end());
    b = std::move(out);
  }
};

}  // namespace detail

// Drops a check when another check with the syntactically identical range
// (root register, affine offset, width, access kind) dominates it and no
// deallocation or module boundary sits in between. With
// `post_dominance = true`, additionally drops an earlier check when an
// identical later check post-dominates it within the same straight-line
// block (off by default: it delays detection past the access).
inline IRProgram pass_redundant_elim(const IRProgram& p, bool post_dominance = false) {
  IRProgram out = p;
  for (auto& f : out.functions) {
    detail::DefMap defs;
    defs.collect(f.body);
    detail::RedundantElim pass{defs};
    std::set<std::string> avail;
    pass.walk(f.body, avail);
    if (post_dominance) pass.walk_post(f.body);
  }
  return out;
}

// --- write-only mode --------------------------------------------------------

namespace detail {

inline Block strip_read_checks(const Block& b) {
  Block out;
  for (const auto& stmt : b) {
    if (const auto* check = std::get_if<CheckStmt>(&stmt.v)) {
      if (check->kind == AccessKind::kRead) continue;
      out.push_back(stmt);
    } else if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
      LoopStmt l = *loop;
      l.body = strip_read_checks(l.body);
      out.push_back(Stmt{std::move(l)});
    } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
      IfStmt i = *ifs;
      i.then_body = strip_read_checks(i.then_body);
      i.else_body = strip_read_checks(i.else_body);
      out.push_back(Stmt{std::move(i)});
    } else {
      out.push_back(stmt);
    }
  }
  return out;
}

}  // namespace detail

// Deletes every read check; write checks are untouched.
inline IRProgram pass_write_only(const IRProgram& p) {
  IRProgram out = p;
  for (auto& f : out.functions) f.body = detail::strip_read_checks(f.body);
  return out;
}

// --- statically verified checks ---------------------------------------------

namespace detail {

struct StaticElim {
  const IRProgram& program;
  const DefMap& defs;
  std::set<std::string> unsafe_roots;  // freed or escaped somewhere in the function

  void collect_unsafe(const Block& b) {
    for (const auto& stmt : b) {
      if (const auto* fr = std::get_if<FreeStmt>(&stmt.v)) {
        unsafe_roots.insert(resolve_root(defs, fr->ptr));
      } else if (const auto* ce = std::get_if<CallExtStmt>(&stmt.v)) {
        unsafe_roots.insert(resolve_root(defs, ce->ptr));
      } else if (const auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
        collect_unsafe(loop->body);
      } else if (const auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        collect_unsafe(ifs->then_body);
        collect_unsafe(ifs->else_body);
      }
    }
  }

  std::optional<uint64_t> static_size_of_root(const std::string& root) const {
    if (auto it = defs.allocs.find(root); it != defs.allocs.end()) {
      if (it->second.size.is_constant() && it->second.size.offset >= 1)
        return static_cast<uint64_t>(it->second.size.offset);
      return std::nullopt;
    }
    if (auto it = defs.addrs.find(root); it != defs.addrs.end()) {
      for (const auto& [name, size] : program.globals)
        if (name == it->second.global) return size;
    }
    return std::nullopt;
  }

  bool provably_safe(const CheckStmt& check) const {
    ResolvedRange range = resolve_range(defs, check.ptr);
    if (!range.expr || !range.expr->is_constant()) return false;
    if (unsafe_roots.count(range.root)) return false;
    auto size = static_size_of_root(range.root);
    if (!size) return false;
    const int64_t off = range.expr->offset;
    return off >= 0 && static_cast<uint64_t>(off) + check.width <= *size;
  }

  void walk(Block& b) const {
    Block out;
    for (auto& stmt : b) {
      if (const auto* check = std::get_if<CheckStmt>(&stmt.v)) {
        if (provably_safe(*check)) continue;
      } else if (auto* loop = std::get_if<LoopStmt>(&stmt.v)) {
        walk(loop->body);
      } else if (auto* ifs = std::get_if<IfStmt>(&stmt.v)) {
        walk(ifs->then_body);
        walk(ifs->else_body);
      }
      out.push_back(std::move(stmt));
    }
    b = std::move(out);
  }
};

}  // namespace detail

// Removes a check whose base is a locally allocated object (or a declared
// global) with a literal size, whose offset is a compile-time constant that
// provably fits, and whose object is never freed or passed to an external
// module in this function. Checks that would fail are always kept.
inline IRProgram static_verify_elim(const IRProgram& p) {
  IRProgram out = p;
  for (auto& f : out.functions) {
    detail::DefMap defs;
    defs.collect(f.body);
    detail::StaticElim pass{out, defs, {}};
    pass.collect_unsafe(f.body);
    pass.walk(f.body);
  }
  return out;
}

// --- pass driver --------------------------------------------------------------

struct OptFlags {
  bool loop_invariant = false;
  bool loop_bounds = false;
  bool redundant = false;
  bool post_dominance = false;  // extension of `redundant`
  bool write_only_pass = false;
  bool static_elim = false;
};

// Canonical application order; each requested pass runs once.
inline IRProgram apply_passes(const IRProgram& p, const OptFlags& flags) {
  IRProgram out = p;
  if (flags.loop_invariant) out = pass_loop_invariant(out);
  if (flags.loop_bounds) out = pass_loop_bounds(out);
  if (flags.redundant) out = pass_redundant_elim(out, flags.post_dominance);
  if (flags.write_only_pass) out = pass_write_only(out);
  if (flags.static_elim) out = static_verify_elim(out);
  return out;
}

}  // namespace pacsim
