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

// The miniature structured IR and its textual form (.pir files).
//
// Programs are lists of globals and functions; statements cover
// allocation, pointer arithmetic with affine indices, loads/stores by
// width, deallocation, explicit checks, literal-bound loops, two-way
// branches and the unprotected-module boundary. Registers are
// single-assignment, lexically scoped to their block, and defined before
// use. See docs/ir.md for the grammar.

#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pacsim/checker.hpp"
#include "pacsim/errors.hpp"
#include "pacsim/machine.hpp"

namespace pacsim {

// Affine index expression: var * scale + offset, or a bare constant when
// var is absent. Normalized: scale 0 implies no var.
struct AffineExpr {
  std::optional<std::string> var;
  int64_t scale = 0;
  int64_t offset = 0;

  static AffineExpr constant(int64_t c) { return AffineExpr{std::nullopt, 0, c}; }
  static AffineExpr of(std::string v, int64_t a = 1, int64_t b = 0) {
    if (a == 0) return constant(b);
    return AffineExpr{std::move(v), a, b};
  }

  bool is_constant() const { return !var.has_value(); }

  bool operator==(const AffineExpr&) const = default;
};

struct Stmt;
using Block = std::vector<Stmt>;

struct AllocStmt {
  std::string reg;
  Region kind = Region::kHeap;  // heap or stack; globals are declared
  AffineExpr size;
  bool operator==(const AllocStmt&) const = default;
};

struct GepStmt {
  std::string reg;
  std::string ptr;
  AffineExpr index;
  bool operator==(const GepStmt&) const = default;
};

struct LoadStmt {
  std::string ptr;
  uint32_t width = 1;
  bool operator==(const LoadStmt&) const = default;
};

struct StoreStmt {
  std::string ptr;
  uint32_t width = 1;
  bool operator==(const StoreStmt&) const = default;
};

struct FreeStmt {
  std::string ptr;
  bool operator==(const FreeStmt&) const = default;
};

struct CheckStmt {
  std::string ptr;
  uint32_t width = 1;
  AccessKind kind = AccessKind::kWrite;  // kRead or kWrite
  bool operator==(const CheckStmt&) const = default;
};

struct LoopStmt {
  std::string var;
  int64_t lo = 0;
  int64_t hi = 0;
  int64_t step = 1;
  Block body;
  bool operator==(const LoopStmt&) const = default;
};

struct IfStmt {
  std::string cond;
  Block then_body;
  Block else_body;
  bool operator==(const IfStmt&) const = default;
};

struct CallExtStmt {
  std::string ptr;
  bool operator==(const CallExtStmt&) const = default;
};

struct RecvExtStmt {
  std::string reg;
  bool operator==(const RecvExtStmt&) const = default;
};

struct InputStmt {
  std::string reg;
  bool operator==(const InputStmt&) const = default;
};

struct AddrOfStmt {
  std::string reg;
  std::string global;
  bool operator==(const AddrOfStmt&) const = default;
};

struct NullStmt {
  std::string reg;
  bool operator==(const NullStmt&) const = default;
};

struct Stmt {
  std::variant<AllocStmt, GepStmt, LoadStmt, StoreStmt, FreeStmt, CheckStmt, LoopStmt, IfStmt,
               CallExtStmt, RecvExtStmt, InputStmt, AddrOfStmt, NullStmt>
      v;
  bool operator==(const Stmt&) const = default;
};

struct Function {
  std::string name;
  Block body;
  bool operator==(const Function&) const = default;
};

struct IRProgram {
  std::vector<std::pair<std::string, uint32_t>> globals;
  std::vector<Function> functions;
  bool operator==(const IRProgram&) const = default;
};

// Parsed file: the program plus the optional default input queue carried
// by an `inputs` directive.
struct ParsedFile {
  IRProgram program;
  std::vector<int64_t> inputs;
};

// --- trip count -------------------------------------------------------

// Static iteration count of a literal-bound loop.
inline uint64_t trip_count(const LoopStmt& loop) {
  if (loop.step > 0) {
    if (loop.lo >= loop.hi) return 0;
    return static_cast<uint64_t>((loop.hi - loop.lo + loop.step - 1) / loop.step);
  }
  if (loop.lo <= loop.hi) return 0;
  return static_cast<uint64_t>((loop.lo - loop.hi + (-loop.step) - 1) / (-loop.step));
}

// --- printing ---------------------------------------------------------

namespace detail {

inline void print_expr(std::ostringstream& out, const AffineExpr& e) {
  if (!e.var) {
    out << e.offset;
    return;
  }
  out << '%' << *e.var;
  if (e.scale != 1) out << " * " << e.scale;
  if (e.offset > 0) out << " + " << e.offset;
  if (e.offset < 0) out << " - " << -e.offset;
}

inline void print_block(std::ostringstream& out, const Block& block, int indent);

inline void print_stmt(std::ostringstream& out, const Stmt& stmt, int indent) {
  const std::string pad(static_cast<size_t>(indent) * 2, ' ');
  out << pad;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, AllocStmt>) {
          out << '%' << s.reg << " = alloc " << to_string(s.kind) << ' ';
          print_expr(out, s.size);
        } else if constexpr (std::is_same_v<T, GepStmt>) {
          out << '%' << s.reg << " = gep %" << s.ptr << ", ";
          print_expr(out, s.index);
        } else if constexpr (std::is_same_v<T, LoadStmt>) {
          out << "load %" << s.ptr << ", " << s.width;
        } else if constexpr (std::is_same_v<T, StoreStmt>) {
          out << "store %" << s.ptr << ", " << s.width;
        } else if constexpr (std::is_same_v<T, FreeStmt>) {
          out << "free %" << s.ptr;
        } else if constexpr (std::is_same_v<T, CheckStmt>) {
          out << "check %" << s.ptr << ", " << s.width << ", "
              << (s.kind == AccessKind::kRead ? 'r' : 'w');
        } else if constexpr (std::is_same_v<T, LoopStmt>) {
          out << "loop %" << s.var << ", " << s.lo << ", " << s.hi << ", " << s.step << " {\n";
          print_block(out, s.body, indent + 1);
          out << pad << '}';
        } else if constexpr (std::is_same_v<T, IfStmt>) {
          out << "if %" << s.cond << " {\n";
          print_block(out, s.then_body, indent + 1);
          out << pad << '}';
          if (!s.else_body.empty()) {
            out << " else {\n";
            print_block(out, s.else_body, indent + 1);
            out << pad << '}';
          }
        } else if constexpr (std::is_same_v<T, CallExtStmt>) {
          out << "call_ext %" << s.ptr;
        } else if constexpr (std::is_same_v<T, RecvExtStmt>) {
          out << '%' << s.reg << " = recv_ext";
        } else if constexpr (std::is_same_v<T, InputStmt>) {
          out << '%' << s.reg << " = input";
        } else if constexpr (std::is_same_v<T, AddrOfStmt>) {
          out << '%' << s.reg << " = addr_of " << s.global;
        } else if constexpr (std::is_same_v<T, NullStmt>) {
          out << '%' << s.reg << " = null";
        }
      },
      stmt.v);
  out << '\n';
}

inline void print_block(std::ostringstream& out, const Block& block, int indent) {
  for (const auto& stmt : block) print_stmt(out, stmt, indent);
}

}  // namespace detail

inline std::string print(const IRProgram& p, const std::vector<int64_t>& inputs = {}) {
  std::ostringstream out;
  if (!inputs.empty()) {
    out << "inputs ";
    for (size_t i = 0; i < inputs.size(); ++i) {
      if (i) out << ", ";
      out << inputs[i];
    }
    out << "\n\n";
  }
  for (const auto& [name, size] : p.globals) out << "global " << name << ' ' << size << '\n';
  if (!p.globals.empty()) out << '\n';
  for (size_t i = 0; i < p.functions.size(); ++i) {
    if (i) out << '\n';
    out << "func " << p.functions[i].name << " {\n";
    detail::print_block(out, p.functions[i].body, 1);
    out << "}\n";
  }
  return out.str();
}

// --- parsing ----------------------------------------------------------

namespace detail {

struct Token {
  enum Type { kIdent, kReg, kInt, kPunct, kEnd } type = kEnd;
  std::string text;
  int64_t value = 0;
  int line = 0;
  int col = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    skip_ws();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= text_.size()) return t;  // kEnd
    char c = text_[pos_];
    if (c == '%') {
      advance();
      t.type = Token::kReg;
      t.text = ident();
      if (t.text.empty()) fail(t, "expected register name after '%'");
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      t.type = Token::kIdent;
      t.text = ident();
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < text_.size() &&
         std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      t.type = Token::kInt;
      t.value = integer(t);
      return t;
    }
    if (std::string("={},*+-").find(c) != std::string::npos) {
      t.type = Token::kPunct;
      t.text = std::string(1, c);
      advance();
      return t;
    }
    fail(t, std::string("unexpected character '") + c + "'");
    return t;  // unreachable
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string ident() {
    std::string s;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
        s += c;
        advance();
      } else {
        break;
      }
    }
    return s;
  }

  int64_t integer(const Token& at) {
    bool neg = false;
    if (text_[pos_] == '-') {
      neg = true;
      advance();
    }
    std::string digits;
    int base = 10;
    if (pos_ + 1 < text_.size() && text_[pos_] == '0' &&
        (text_[pos_ + 1] == 'x' || text_[pos_ + 1] == 'X')) {
      base = 16;
      advance();
      advance();
      while (pos_ < text_.size() && std::isxdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits += text_[pos_];
        advance();
      }
    } else {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits += text_[pos_];
        advance();
      }
    }
    if (digits.empty()) fail(at, "malformed integer");
    uint64_t mag = std::strtoull(digits.c_str(), nullptr, base);
    int64_t v = static_cast<int64_t>(mag);
    return neg ? -v : v;
  }

  [[noreturn]] void fail(const Token& at, const std::string& msg) {
    throw ParseError(at.line, at.col, msg);
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lexer_(text) { shift(); }

  ParsedFile parse_file() {
    ParsedFile file;
    while (cur_.type != Token::kEnd) {
      if (cur_.type != Token::kIdent) fail("expected 'inputs', 'global' or 'func'");
      if (cur_.text == "inputs") {
        shift();
        file.inputs.push_back(expect_int());
        while (is_punct(",")) {
          shift();
          file.inputs.push_back(expect_int());
        }
      } else if (cur_.text == "global") {
        shift();
        std::string name = expect_ident();
        int64_t size = expect_int();
        if (size < 1 || size > 0xFFFFFFFFll) fail("global size out of range");
        file.program.globals.emplace_back(name, static_cast<uint32_t>(size));
      } else if (cur_.text == "func") {
        shift();
        Function f;
        f.name = expect_ident();
        expect_punct("{");
        f.body = parse_block();
        expect_punct("}");
        file.program.functions.push_back(std::move(f));
      } else {
        fail("unknown top-level item '" + cur_.text + "'");
      }
    }
    return file;
  }

 private:
  Block parse_block() {
    Block block;
    while (!(cur_.type == Token::kPunct && cur_.text == "}") && cur_.type != Token::kEnd) {
      block.push_back(parse_stmt());
    }
    return block;
  }

  Stmt parse_stmt() {
    if (cur_.type == Token::kReg) {
      std::string reg = cur_.text;
      shift();
      expect_punct("=");
      std::string op = expect_ident();
      if (op == "alloc") {
        std::string kind = expect_ident();
        Region r;
        if (kind == "heap")
          r = Region::kHeap;
        else if (kind == "stack")
          r = Region::kStack;
        else
          fail("alloc kind must be 'heap' or 'stack', got '" + kind + "'");
        return Stmt{AllocStmt{reg, r, parse_expr()}};
      }
      if (op == "gep") {
        std::string ptr = expect_reg();
        expect_punct(",");
        return Stmt{GepStmt{reg, ptr, parse_expr()}};
      }
      if (op == "recv_ext") return Stmt{RecvExtStmt{reg}};
      if (op == "input") return Stmt{InputStmt{reg}};
      if (op == "addr_of") return Stmt{AddrOfStmt{reg, expect_ident()}};
      if (op == "null") return Stmt{NullStmt{reg}};
      fail("unknown operation '" + op + "'");
    }
    if (cur_.type == Token::kIdent) {
      std::string op = cur_.text;
      shift();
      if (op == "load" || op == "store") {
        std::string ptr = expect_reg();
        expect_punct(",");
        int64_t width = expect_int();
        if (width < 1 || width > 0xFFFFFFFFll) fail("access width out of range");
        if (op == "load") return Stmt{LoadStmt{ptr, static_cast<uint32_t>(width)}};
        return Stmt{StoreStmt{ptr, static_cast<uint32_t>(width)}};
      }
      if (op == "free") return Stmt{FreeStmt{expect_reg()}};
      if (op == "check") {
        std::string ptr = expect_reg();
        expect_punct(",");
        int64_t width = expect_int();
        if (width < 1 || width > 0xFFFFFFFFll) fail("access width out of range");
        expect_punct(",");
        std::string k = expect_ident();
        if (k != "r" && k != "w") fail("check kind must be 'r' or 'w'");
        return Stmt{CheckStmt{ptr, static_cast<uint32_t>(width),
                              k == "r" ? AccessKind::kRead : AccessKind::kWrite}};
      }
      if (op == "loop") {
        LoopStmt loop;
        loop.var = expect_reg();
        expect_punct(",");
        loop.lo = expect_int();
        expect_punct(",");
        loop.hi = expect_int();
        expect_punct(",");
        loop.step = expect_int();
        expect_punct("{");
        loop.body = parse_block();
        expect_punct("}");
        return Stmt{std::move(loop)};
      }
      if (op == "if") {
        IfStmt ifs;
        ifs.cond = expect_reg();
        expect_punct("{");
        ifs.then_body = parse_block();
        expect_punct("}");
        if (cur_.type == Token::kIdent && cur_.text == "else") {
          shift();
          expect_punct("{");
          ifs.else_body = parse_block();
          expect_punct("}");
        }
        return Stmt{std::move(ifs)};
      }
      if (op == "call_ext") return Stmt{CallExtStmt{expect_reg()}};
      fail("unknown statement '" + op + "'");
    }
    fail("expected a statement");
    return Stmt{};  // unreachable
  }

  AffineExpr parse_expr() {
    if (cur_.type == Token::kInt) {
      int64_t c = cur_.value;
      shift();
      return AffineExpr::constant(c);
    }
    if (cur_.type != Token::kReg) fail("expected integer or register in expression");
    std::string var = cur_.text;
    shift();
    int64_t scale = 1;
    int64_t offset = 0;
    if (is_punct("*")) {
      shift();
      scale = expect_int();
    }
    if (is_punct("+")) {
      shift();
      offset = expect_int();
    } else if (is_punct("-")) {
      shift();
      offset = -expect_int();
    }
    return AffineExpr::of(std::move(var), scale, offset);
  }

  bool is_punct(const char* p) const { return cur_.type == Token::kPunct && cur_.text == p; }

  void expect_punct(const char* p) {
    if (!is_punct(p)) fail(std::string("expected '") + p + "'");
    shift();
  }

  std::string expect_ident() {
    if (cur_.type != Token::kIdent) fail("expected identifier");
    std::string s = cur_.text;
    shift();
    return s;
  }

  std::string expect_reg() {
    if (cur_.type != Token::kReg) fail("expected register");
    std::string s = cur_.text;
    shift();
    return s;
  }

  int64_t expect_int() {
    if (cur_.type != Token::kInt) fail("expected integer");
    int64_t v = cur_.value;
    shift();
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(cur_.line, cur_.col, msg);
  }

  void shift() { cur_ = lexer_.next(); }

  Lexer lexer_;
  Token cur_;
};

}  // namespace detail

// --- validation -------------------------------------------------------

namespace detail {

class Validator {
 public:
  explicit Validator(const IRProgram& p) : program_(p) {}

  void run() {
    std::set<std::string> global_names;
    for (const auto& [name, size] : program_.globals) {
      if (!global_names.insert(name).second)
        throw ValidateError("duplicate global '" + name + "'");
      if (size < 1) throw ValidateError("global '" + name + "' has zero size");
    }
    std::set<std::string> func_names;
    for (const auto& f : program_.functions) {
      if (!func_names.insert(f.name).second)
        throw ValidateError("duplicate function '" + f.name + "'");
      defined_.clear();
      scopes_.clear();
      scopes_.emplace_back();
      validate_block(f.body);
      scopes_.pop_back();
    }
  }

 private:
  void define(const std::string& reg) {
    if (!defined_.insert(reg).second)
      throw ValidateError("register '%" + reg + "' assigned more than once");
    scopes_.back().insert(reg);
  }

  void use(const std::string& reg) const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
      if (it->count(reg)) return;
    throw ValidateError("register '%" + reg + "' used before definition");
  }

  void use_expr(const AffineExpr& e) const {
    if (e.var) use(*e.var);
  }

  void validate_block(const Block& block) {
    for (const auto& stmt : block) {
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, AllocStmt>) {
              use_expr(s.size);
              define(s.reg);
            } else if constexpr (std::is_same_v<T, GepStmt>) {
              use(s.ptr);
              use_expr(s.index);
              define(s.reg);
            } else if constexpr (std::is_same_v<T, LoadStmt>) {
              use(s.ptr);
            } else if constexpr (std::is_same_v<T, StoreStmt>) {
              use(s.ptr);
            } else if constexpr (std::is_same_v<T, FreeStmt>) {
              use(s.ptr);
            } else if constexpr (std::is_same_v<T, CheckStmt>) {
              use(s.ptr);
            } else if constexpr (std::is_same_v<T, LoopStmt>) {
              if (s.step == 0) throw ValidateError("loop step must be nonzero");
              scopes_.emplace_back();
              define(s.var);
              validate_block(s.body);
              scopes_.pop_back();
            } else if constexpr (std::is_same_v<T, IfStmt>) {
              use(s.cond);
              scopes_.emplace_back();
              validate_block(s.then_body);
              scopes_.pop_back();
              scopes_.emplace_back();
              validate_block(s.else_body);
              scopes_.pop_back();
            } else if constexpr (std::is_same_v<T, CallExtStmt>) {
              use(s.ptr);
            } else if constexpr (std::is_same_v<T, RecvExtStmt>) {
              define(s.reg);
            } else if constexpr (std::is_same_v<T, InputStmt>) {
              define(s.reg);
            } else if constexpr (std::is_same_v<T, AddrOfStmt>) {
              bool known = false;
              for (const auto& [name, sz] : program_.globals)
                if (name == s.global) known = true;
              if (!known) throw ValidateError("addr_of of undeclared global '" + s.global + "'");
              define(s.reg);
            } else if constexpr (std::is_same_v<T, NullStmt>) {
              define(s.reg);
            }
          },
          stmt.v);
    }
  }

  const IRProgram& program_;
  std::set<std::string> defined_;                 // per function, SSA
  std::vector<std::set<std::string>> scopes_;     // lexical chain
};

}  // namespace detail

inline void validate(const IRProgram& p) { detail::Validator(p).run(); }

// Parses and validates a textual program.
inline ParsedFile parse(const std::string& text) {
  ParsedFile file = detail::Parser(text).parse_file();
  validate(file.program);
  return file;
}

}  // namespace pacsim
