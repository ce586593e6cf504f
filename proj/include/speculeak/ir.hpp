//===-- ir.hpp - Mini imperative IR: types, parser, layout ----------------===//
//
// Line-oriented textual IR with exactly three event classes: register
// computation (assign), memory access (load/store), and control flow
// (br/jmp/halt). Memory variables are only reachable through load/store;
// expressions range over register variables and literals, so every memory
// access is an explicit event.
//
// Grammar (one item per line, '#' starts a comment):
//   var <name> : u8 | u16 | u32 | u64 | u8[<len>] | reg u8 | reg u16 | ...
//   secret <name>
//   init <name> = <int>
//   [<label>:] assign <reg> = <expr>
//   [<label>:] load <reg> = <base>[<expr>]
//   [<label>:] store <base>[<expr>] = <expr>
//   [<label>:] br <expr> ? <label> : <label>
//   [<label>:] jmp <label>
//   [<label>:] halt
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace speculeak {

class ParseError : public std::runtime_error {
public:
  int line;
  int column;
  ParseError(int line, int column, const std::string &msg)
      : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                           std::to_string(column) + ": " + msg),
        line(line), column(column) {}
};

class ValidationError : public std::runtime_error {
public:
  int line;
  ValidationError(int line, const std::string &msg)
      : std::runtime_error("validation error at line " + std::to_string(line) +
                           ": " + msg),
        line(line) {}
};

enum class IrOp : uint8_t {
  // arithmetic / bitwise, width-preserving
  Add, Sub, Mul, BitAnd, BitOr, BitXor, Shl, Shr,
  // comparisons, boolean result
  Lt, Le, Gt, Ge, Eq, Ne,
  // logical, boolean operands and result
  LAnd, LOr, LNot,
  // unary arithmetic
  Neg,
};

struct IrExpr;
using IrExprPtr = std::unique_ptr<IrExpr>;

struct IrExpr {
  enum class Kind : uint8_t { Lit, Ref, Unary, Binary };
  Kind kind;
  uint64_t lit = 0;
  std::string ref;
  IrOp op = IrOp::Add;
  IrExprPtr lhs, rhs; // Unary uses lhs only
  uint8_t width = 0;  // bits; 1 = bool; assigned during validation

  static IrExprPtr mkLit(uint64_t v) {
    auto e = std::make_unique<IrExpr>();
    e->kind = Kind::Lit;
    e->lit = v;
    return e;
  }
  static IrExprPtr mkRef(std::string name) {
    auto e = std::make_unique<IrExpr>();
    e->kind = Kind::Ref;
    e->ref = std::move(name);
    return e;
  }
  static IrExprPtr mkUnary(IrOp op, IrExprPtr a) {
    auto e = std::make_unique<IrExpr>();
    e->kind = Kind::Unary;
    e->op = op;
    e->lhs = std::move(a);
    return e;
  }
  static IrExprPtr mkBinary(IrOp op, IrExprPtr a, IrExprPtr b) {
    auto e = std::make_unique<IrExpr>();
    e->kind = Kind::Binary;
    e->op = op;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
  }

  IrExprPtr clone() const {
    auto e = std::make_unique<IrExpr>();
    e->kind = kind;
    e->lit = lit;
    e->ref = ref;
    e->op = op;
    e->width = width;
    if (lhs)
      e->lhs = lhs->clone();
    if (rhs)
      e->rhs = rhs->clone();
    return e;
  }

  bool equals(const IrExpr &o) const {
    if (kind != o.kind || op != o.op)
      return false;
    switch (kind) {
    case Kind::Lit:
      return lit == o.lit;
    case Kind::Ref:
      return ref == o.ref;
    case Kind::Unary:
      return lhs->equals(*o.lhs);
    case Kind::Binary:
      return lhs->equals(*o.lhs) && rhs->equals(*o.rhs);
    }
    return false;
  }
};

struct VarDecl {
  std::string name;
  uint8_t width = 8;    // element width in bits for scalars; 8 for arrays
  uint32_t arrayLen = 0; // 0 = scalar
  bool isRegister = false;
  int line = 0;

  bool isArray() const { return arrayLen > 0; }
  uint32_t sizeBytes() const {
    return isArray() ? arrayLen : uint32_t(width / 8);
  }
  bool operator==(const VarDecl &o) const {
    return name == o.name && width == o.width && arrayLen == o.arrayLen &&
           isRegister == o.isRegister;
  }
};

struct Instruction {
  enum class Kind : uint8_t { Assign, Load, Store, Branch, Jump, Halt };
  Kind kind = Kind::Halt;
  std::string dst;   // assign/load destination register
  std::string base;  // load/store base variable
  IrExprPtr value;   // assign rhs / store value
  IrExprPtr index;   // load/store index
  IrExprPtr cond;    // branch condition
  size_t thenTarget = 0;
  size_t elseTarget = 0;
  size_t jumpTarget = 0;
  int line = 0; // source line in the .ir file
  std::string label;

  Instruction() = default;
  Instruction(Instruction &&) = default;
  Instruction &operator=(Instruction &&) = default;
  Instruction(const Instruction &o) { *this = o; }
  Instruction &operator=(const Instruction &o) {
    kind = o.kind;
    dst = o.dst;
    base = o.base;
    value = o.value ? o.value->clone() : nullptr;
    index = o.index ? o.index->clone() : nullptr;
    cond = o.cond ? o.cond->clone() : nullptr;
    thenTarget = o.thenTarget;
    elseTarget = o.elseTarget;
    jumpTarget = o.jumpTarget;
    line = o.line;
    label = o.label;
    return *this;
  }

  bool equals(const Instruction &o) const {
    if (kind != o.kind || dst != o.dst || base != o.base ||
        thenTarget != o.thenTarget || elseTarget != o.elseTarget ||
        jumpTarget != o.jumpTarget)
      return false;
    auto eqExpr = [](const IrExprPtr &a, const IrExprPtr &b) {
      if (!a != !b)
        return false;
      return !a || a->equals(*b);
    };
    return eqExpr(value, o.value) && eqExpr(index, o.index) &&
           eqExpr(cond, o.cond);
  }
};

struct Program {
  std::string name;
  std::vector<VarDecl> decls;
  std::vector<Instruction> insts;
  std::set<std::string> sensitive;
  std::map<std::string, uint64_t> publicInit;

  const VarDecl *findDecl(const std::string &n) const {
    for (const auto &d : decls)
      if (d.name == n)
        return &d;
    return nullptr;
  }

  bool operator==(const Program &o) const {
    if (decls != o.decls || sensitive != o.sensitive ||
        publicInit != o.publicInit || insts.size() != o.insts.size())
      return false;
    for (size_t i = 0; i < insts.size(); ++i)
      if (!insts[i].equals(o.insts[i]))
        return false;
    return true;
  }
};

struct AddressMap {
  std::map<std::string, uint32_t> base;
  uint32_t totalBytes = 0;
  uint32_t baseAddress = 0;

  uint32_t addressOf(const std::string &var) const {
    auto it = base.find(var);
    if (it == base.end())
      throw std::logic_error("no address for variable " + var);
    return it->second;
  }
  bool operator==(const AddressMap &o) const {
    return base == o.base && totalBytes == o.totalBytes &&
           baseAddress == o.baseAddress;
  }
};

/// Sequential allocation in declaration order; register variables get no
/// address. Pure function of the declaration list and the base address.
inline AddressMap layoutMemory(const Program &p, uint32_t baseAddress = 0) {
  AddressMap m;
  m.baseAddress = baseAddress;
  uint32_t next = baseAddress;
  for (const auto &d : p.decls) {
    if (d.isRegister)
      continue;
    m.base[d.name] = next;
    next += d.sizeBytes();
  }
  m.totalBytes = next - baseAddress;
  return m;
}

//===----------------------------------------------------------------------===//
// Parsing
//===----------------------------------------------------------------------===//

namespace detail {

class ExprParser {
public:
  ExprParser(const std::string &text, int line, size_t start)
      : text_(text), line_(line), pos_(start) {}

  IrExprPtr parseExpr() { return parseLOr(); }

  size_t pos() const { return pos_; }

  void skipWs() {
    while (pos_ < text_.size() && std::isspace(uc(text_[pos_])))
      ++pos_;
  }

private:
  static unsigned char uc(char c) { return static_cast<unsigned char>(c); }

  [[noreturn]] void fail(const std::string &msg) {
    throw ParseError(line_, static_cast<int>(pos_) + 1, msg);
  }

  bool eat(const std::string &tok) {
    skipWs();
    if (text_.compare(pos_, tok.size(), tok) == 0) {
      // Avoid eating a prefix of a longer operator, e.g. '<' of '<<'.
      char next = pos_ + tok.size() < text_.size() ? text_[pos_ + tok.size()]
                                                   : '\0';
      if ((tok == "<" || tok == ">") && (next == tok[0] || next == '='))
        return false;
      if (tok == "&" && next == '&')
        return false;
      if (tok == "|" && next == '|')
        return false;
      if (tok == "=" && next == '=')
        return false;
      if (tok == "!" && next == '=')
        return false;
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  IrExprPtr parseLOr() {
    auto e = parseLAnd();
    while (eat("||"))
      e = IrExpr::mkBinary(IrOp::LOr, std::move(e), parseLAnd());
    return e;
  }
  IrExprPtr parseLAnd() {
    auto e = parseBitOr();
    while (eat("&&"))
      e = IrExpr::mkBinary(IrOp::LAnd, std::move(e), parseBitOr());
    return e;
  }
  IrExprPtr parseBitOr() {
    auto e = parseBitXor();
    while (eat("|"))
      e = IrExpr::mkBinary(IrOp::BitOr, std::move(e), parseBitXor());
    return e;
  }
  IrExprPtr parseBitXor() {
    auto e = parseBitAnd();
    while (eat("^"))
      e = IrExpr::mkBinary(IrOp::BitXor, std::move(e), parseBitAnd());
    return e;
  }
  IrExprPtr parseBitAnd() {
    auto e = parseEquality();
    while (eat("&"))
      e = IrExpr::mkBinary(IrOp::BitAnd, std::move(e), parseEquality());
    return e;
  }
  IrExprPtr parseEquality() {
    auto e = parseRelational();
    for (;;) {
      if (eat("=="))
        e = IrExpr::mkBinary(IrOp::Eq, std::move(e), parseRelational());
      else if (eat("!="))
        e = IrExpr::mkBinary(IrOp::Ne, std::move(e), parseRelational());
      else
        return e;
    }
  }
  IrExprPtr parseRelational() {
    auto e = parseShift();
    for (;;) {
      if (eat("<="))
        e = IrExpr::mkBinary(IrOp::Le, std::move(e), parseShift());
      else if (eat(">="))
        e = IrExpr::mkBinary(IrOp::Ge, std::move(e), parseShift());
      else if (eat("<"))
        e = IrExpr::mkBinary(IrOp::Lt, std::move(e), parseShift());
      else if (eat(">"))
        e = IrExpr::mkBinary(IrOp::Gt, std::move(e), parseShift());
      else
        return e;
    }
  }
  IrExprPtr parseShift() {
    auto e = parseAdditive();
    for (;;) {
      if (eat("<<"))
        e = IrExpr::mkBinary(IrOp::Shl, std::move(e), parseAdditive());
      else if (eat(">>"))
        e = IrExpr::mkBinary(IrOp::Shr, std::move(e), parseAdditive());
      else
        return e;
    }
  }
  IrExprPtr parseAdditive() {
    auto e = parseTerm();
    for (;;) {
      if (eat("+"))
        e = IrExpr::mkBinary(IrOp::Add, std::move(e), parseTerm());
      else if (eat("-"))
        e = IrExpr::mkBinary(IrOp::Sub, std::move(e), parseTerm());
      else
        return e;
    }
  }
  IrExprPtr parseTerm() {
    auto e = parseUnary();
    while (eat("*"))
      e = IrExpr::mkBinary(IrOp::Mul, std::move(e), parseUnary());
    return e;
  }
  IrExprPtr parseUnary() {
    skipWs();
    if (eat("!"))
      return IrExpr::mkUnary(IrOp::LNot, parseUnary());
    if (eat("-"))
      return IrExpr::mkUnary(IrOp::Neg, parseUnary());
    return parsePrimary();
  }
  IrExprPtr parsePrimary() {
    skipWs();
    if (pos_ >= text_.size())
      fail("expected expression");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = parseExpr();
      skipWs();
      if (pos_ >= text_.size() || text_[pos_] != ')')
        fail("expected ')'");
      ++pos_;
      return e;
    }
    if (std::isdigit(uc(c))) {
      size_t end = pos_;
      int bas = 10;
      if (text_.compare(pos_, 2, "0x") == 0 ||
          text_.compare(pos_, 2, "0X") == 0) {
        bas = 16;
        end = pos_ + 2;
        while (end < text_.size() && std::isxdigit(uc(text_[end])))
          ++end;
      } else {
        while (end < text_.size() && std::isdigit(uc(text_[end])))
          ++end;
      }
      uint64_t v = std::stoull(text_.substr(pos_, end - pos_), nullptr, bas);
      pos_ = end;
      return IrExpr::mkLit(v);
    }
    if (std::isalpha(uc(c)) || c == '_') {
      size_t end = pos_;
      while (end < text_.size() &&
             (std::isalnum(uc(text_[end])) || text_[end] == '_'))
        ++end;
      std::string name = text_.substr(pos_, end - pos_);
      pos_ = end;
      return IrExpr::mkRef(name);
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  const std::string &text_;
  int line_;
  size_t pos_;
};

inline std::string trim(const std::string &s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos)
    return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool isIdent(const std::string &s) {
  if (s.empty() || (!std::isalpha(static_cast<unsigned char>(s[0])) &&
                    s[0] != '_'))
    return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
      return false;
  return true;
}

} // namespace detail

class ProgramParser {
public:
  Program parse(const std::string &text, const std::string &name) {
    Program p;
    p.name = name;
    std::map<std::string, size_t> labels;
    struct PendingBranch {
      size_t inst;
      std::string thenLabel, elseLabel;
      int line;
    };
    std::vector<PendingBranch> pendingBranches;
    std::vector<std::pair<size_t, std::string>> pendingJumpFixups;

    std::istringstream in(text);
    std::string raw;
    int lineNo = 0;
    while (std::getline(in, raw)) {
      ++lineNo;
      std::string line = raw;
      if (auto pos = line.find('#'); pos != std::string::npos)
        line = line.substr(0, pos);
      line = detail::trim(line);
      if (line.empty())
        continue;

      if (line.rfind("var ", 0) == 0) {
        parseVar(p, line.substr(4), lineNo);
        continue;
      }
      if (line.rfind("secret ", 0) == 0) {
        std::string n = detail::trim(line.substr(7));
        if (!detail::isIdent(n))
          throw ParseError(lineNo, 8, "expected variable name after 'secret'");
        p.sensitive.insert(n);
        secretLines_[n] = lineNo;
        continue;
      }
      if (line.rfind("init ", 0) == 0) {
        parseInit(p, line.substr(5), lineNo);
        continue;
      }

      // Instruction line, optionally prefixed by 'label:'.
      std::string label;
      std::string body = line;
      if (auto colon = line.find(':');
          colon != std::string::npos && line.find('?') > colon) {
        std::string head = detail::trim(line.substr(0, colon));
        if (detail::isIdent(head)) {
          label = head;
          body = detail::trim(line.substr(colon + 1));
        }
      }
      if (!label.empty()) {
        if (labels.count(label))
          throw ParseError(lineNo, 1, "duplicate label '" + label + "'");
        labels[label] = p.insts.size();
      }
      Instruction inst = parseInstruction(body, lineNo, pendingBranches,
                                          pendingJumpFixups, p.insts.size());
      inst.label = label;
      inst.line = lineNo;
      p.insts.push_back(std::move(inst));
    }

    for (auto &pb : pendingBranches) {
      auto t = labels.find(pb.thenLabel);
      auto e = labels.find(pb.elseLabel);
      if (t == labels.end())
        throw ValidationError(pb.line, "unknown branch target '" +
                                           pb.thenLabel + "'");
      if (e == labels.end())
        throw ValidationError(pb.line,
                              "unknown branch target '" + pb.elseLabel + "'");
      p.insts[pb.inst].thenTarget = t->second;
      p.insts[pb.inst].elseTarget = e->second;
    }
    for (auto &[idx, lbl] : pendingJumpFixups) {
      auto t = labels.find(lbl);
      if (t == labels.end())
        throw ValidationError(p.insts[idx].line,
                              "unknown jump target '" + lbl + "'");
      p.insts[idx].jumpTarget = t->second;
    }

    validate(p);
    return p;
  }

private:
  std::map<std::string, int> secretLines_;

  void parseVar(Program &p, const std::string &rest, int line) {
    auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw ParseError(line, 1, "expected ':' in var declaration");
    std::string name = detail::trim(rest.substr(0, colon));
    std::string type = detail::trim(rest.substr(colon + 1));
    if (!detail::isIdent(name))
      throw ParseError(line, 5, "bad variable name '" + name + "'");
    VarDecl d;
    d.name = name;
    d.line = line;
    if (type.rfind("reg ", 0) == 0) {
      d.isRegister = true;
      type = detail::trim(type.substr(4));
    }
    uint32_t len = 0;
    if (auto br = type.find('['); br != std::string::npos) {
      auto close = type.find(']', br);
      if (close == std::string::npos)
        throw ParseError(line, 1, "expected ']' in array type");
      std::string lenStr = detail::trim(type.substr(br + 1, close - br - 1));
      try {
        len = static_cast<uint32_t>(std::stoul(lenStr));
      } catch (...) {
        throw ParseError(line, 1, "bad array length '" + lenStr + "'");
      }
      type = detail::trim(type.substr(0, br));
      d.arrayLen = len;
    }
    if (type == "u8")
      d.width = 8;
    else if (type == "u16")
      d.width = 16;
    else if (type == "u32")
      d.width = 32;
    else if (type == "u64")
      d.width = 64;
    else
      throw ParseError(line, 1, "unknown type '" + type + "'");
    p.decls.push_back(std::move(d));
  }

  void parseInit(Program &p, const std::string &rest, int line) {
    auto eqp = rest.find('=');
    if (eqp == std::string::npos)
      throw ParseError(line, 1, "expected '=' in init");
    std::string name = detail::trim(rest.substr(0, eqp));
    std::string valStr = detail::trim(rest.substr(eqp + 1));
    if (!detail::isIdent(name))
      throw ParseError(line, 6, "bad variable name '" + name + "'");
    try {
      p.publicInit[name] = std::stoull(valStr, nullptr, 0);
    } catch (...) {
      throw ParseError(line, 1, "bad init value '" + valStr + "'");
    }
  }

  template <typename PB>
  Instruction parseInstruction(const std::string &body, int line,
                               std::vector<PB> &pendingBranches,
                               std::vector<std::pair<size_t, std::string>>
                                   &jumpFixups,
                               size_t instIndex) {
    Instruction inst;
    if (body == "halt") {
      inst.kind = Instruction::Kind::Halt;
      return inst;
    }
    if (body.rfind("assign ", 0) == 0) {
      std::string rest = body.substr(7);
      auto eqp = rest.find('=');
      if (eqp == std::string::npos)
        throw ParseError(line, 1, "expected '=' in assign");
      inst.kind = Instruction::Kind::Assign;
      inst.dst = detail::trim(rest.substr(0, eqp));
      if (!detail::isIdent(inst.dst))
        throw ParseError(line, 1, "bad assign destination");
      detail::ExprParser ep(rest, line, eqp + 1);
      inst.value = ep.parseExpr();
      expectEnd(ep, rest, line);
      return inst;
    }
    if (body.rfind("load ", 0) == 0) {
      std::string rest = body.substr(5);
      auto eqp = rest.find('=');
      if (eqp == std::string::npos)
        throw ParseError(line, 1, "expected '=' in load");
      inst.kind = Instruction::Kind::Load;
      inst.dst = detail::trim(rest.substr(0, eqp));
      if (!detail::isIdent(inst.dst))
        throw ParseError(line, 1, "bad load destination");
      std::string src = detail::trim(rest.substr(eqp + 1));
      parseIndexed(src, line, inst.base, inst.index);
      return inst;
    }
    if (body.rfind("store ", 0) == 0) {
      std::string rest = body.substr(6);
      auto eqp = findTopLevelEq(rest);
      if (eqp == std::string::npos)
        throw ParseError(line, 1, "expected '=' in store");
      inst.kind = Instruction::Kind::Store;
      std::string dst = detail::trim(rest.substr(0, eqp));
      parseIndexed(dst, line, inst.base, inst.index);
      detail::ExprParser ep(rest, line, eqp + 1);
      inst.value = ep.parseExpr();
      expectEnd(ep, rest, line);
      return inst;
    }
    if (body.rfind("br ", 0) == 0) {
      std::string rest = body.substr(3);
      auto q = rest.find('?');
      if (q == std::string::npos)
        throw ParseError(line, 1, "expected '?' in branch");
      auto c = rest.find(':', q);
      if (c == std::string::npos)
        throw ParseError(line, 1, "expected ':' in branch");
      inst.kind = Instruction::Kind::Branch;
      detail::ExprParser ep(rest, line, 0);
      inst.cond = ep.parseExpr();
      ep.skipWs();
      if (ep.pos() != q)
        throw ParseError(line, static_cast<int>(ep.pos()) + 1,
                         "trailing tokens in branch condition");
      PB pb;
      pb.inst = instIndex;
      pb.thenLabel = detail::trim(rest.substr(q + 1, c - q - 1));
      pb.elseLabel = detail::trim(rest.substr(c + 1));
      pb.line = line;
      if (!detail::isIdent(pb.thenLabel) || !detail::isIdent(pb.elseLabel))
        throw ParseError(line, 1, "bad branch target label");
      pendingBranches.push_back(std::move(pb));
      return inst;
    }
    if (body.rfind("jmp ", 0) == 0) {
      inst.kind = Instruction::Kind::Jump;
      std::string lbl = detail::trim(body.substr(4));
      if (!detail::isIdent(lbl))
        throw ParseError(line, 1, "bad jump target label");
      jumpFixups.emplace_back(instIndex, lbl);
      return inst;
    }
    throw ParseError(line, 1, "unknown instruction '" + body + "'");
  }

  static size_t findTopLevelEq(const std::string &s) {
    int depth = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '[')
        ++depth;
      else if (s[i] == ']')
        --depth;
      else if (s[i] == '=' && depth == 0) {
        // skip ==, <=, >=, !=
        if (i + 1 < s.size() && s[i + 1] == '=')
          return std::string::npos;
        if (i > 0 && (s[i - 1] == '<' || s[i - 1] == '>' || s[i - 1] == '!' ||
                      s[i - 1] == '='))
          continue;
        return i;
      }
    }
    return std::string::npos;
  }

  void parseIndexed(const std::string &s, int line, std::string &base,
                    IrExprPtr &index) {
    auto br = s.find('[');
    auto close = s.rfind(']');
    if (br == std::string::npos || close == std::string::npos || close < br)
      throw ParseError(line, 1, "expected '<base>[<expr>]'");
    base = detail::trim(s.substr(0, br));
    if (!detail::isIdent(base))
      throw ParseError(line, 1, "bad base variable '" + base + "'");
    std::string idx = s.substr(br + 1, close - br - 1);
    detail::ExprParser ep(idx, line, 0);
    index = ep.parseExpr();
    ep.skipWs();
    if (ep.pos() != idx.size())
      throw ParseError(line, static_cast<int>(ep.pos()) + 1,
                       "trailing tokens in index expression");
  }

  void expectEnd(detail::ExprParser &ep, const std::string &s, int line) {
    ep.skipWs();
    if (ep.pos() != s.size())
      throw ParseError(line, static_cast<int>(ep.pos()) + 1,
                       "trailing tokens after expression");
  }

  //===--------------------------------------------------------------------===//
  // Validation and width inference
  //===--------------------------------------------------------------------===//

  void validate(Program &p) {
    std::map<std::string, const VarDecl *> byName;
    for (const auto &d : p.decls) {
      if (byName.count(d.name))
        throw ValidationError(d.line, "duplicate variable '" + d.name + "'");
      if (d.isArray() && d.width != 8)
        throw ValidationError(d.line,
                              "array elements must be u8 in '" + d.name + "'");
      if (d.isArray() && d.arrayLen < 1)
        throw ValidationError(d.line, "array length must be >= 1");
      if (d.isRegister && d.isArray())
        throw ValidationError(d.line, "register arrays are not supported");
      byName[d.name] = &d;
    }
    for (const auto &s : p.sensitive) {
      auto it = byName.find(s);
      int line = secretLines_.count(s) ? secretLines_[s] : 0;
      if (it == byName.end())
        throw ValidationError(line, "secret variable '" + s + "' undeclared");
      if (it->second->isRegister)
        throw ValidationError(line,
                              "secret variable '" + s + "' must be in memory");
    }
    for (const auto &[n, v] : p.publicInit) {
      auto it = byName.find(n);
      if (it == byName.end())
        throw ValidationError(0, "init of undeclared variable '" + n + "'");
      if (p.sensitive.count(n))
        throw ValidationError(0, "init of secret variable '" + n + "'");
      if (!it->second->isArray() && it->second->width < 64 &&
          v > widthMaskBits(it->second->width))
        throw ValidationError(0, "init value out of range for '" + n + "'");
    }

    for (auto &inst : p.insts) {
      switch (inst.kind) {
      case Instruction::Kind::Assign: {
        const VarDecl *d = requireVar(byName, inst.dst, inst.line);
        if (!d->isRegister)
          throw ValidationError(inst.line, "assign destination '" + inst.dst +
                                               "' must be a register");
        inferWidth(*inst.value, byName, inst.line, d->width);
        break;
      }
      case Instruction::Kind::Load: {
        const VarDecl *d = requireVar(byName, inst.dst, inst.line);
        if (!d->isRegister)
          throw ValidationError(inst.line, "load destination '" + inst.dst +
                                               "' must be a register");
        const VarDecl *b = requireVar(byName, inst.base, inst.line);
        if (b->isRegister)
          throw ValidationError(inst.line, "load base '" + inst.base +
                                               "' must be a memory variable");
        if ((b->isArray() ? uint8_t(8) : b->width) != d->width)
          throw ValidationError(inst.line,
                                "load width mismatch into '" + inst.dst + "'");
        inferWidth(*inst.index, byName, inst.line, 0);
        break;
      }
      case Instruction::Kind::Store: {
        const VarDecl *b = requireVar(byName, inst.base, inst.line);
        if (b->isRegister)
          throw ValidationError(inst.line, "store base '" + inst.base +
                                               "' must be a memory variable");
        inferWidth(*inst.index, byName, inst.line, 0);
        inferWidth(*inst.value, byName, inst.line,
                   b->isArray() ? uint8_t(8) : b->width);
        break;
      }
      case Instruction::Kind::Branch: {
        uint8_t w = inferWidth(*inst.cond, byName, inst.line, 0);
        if (w != 1) {
          // Integer-valued conditions are only allowed for literals, read as
          // "nonzero"; anything else must be an explicit comparison.
          if (inst.cond->kind == IrExpr::Kind::Lit) {
            inst.cond = IrExpr::mkBinary(IrOp::Ne, std::move(inst.cond),
                                         IrExpr::mkLit(0));
            inferWidth(*inst.cond, byName, inst.line, 0);
          } else {
            throw ValidationError(inst.line,
                                  "branch condition must be boolean");
          }
        }
        if (inst.thenTarget >= p.insts.size() ||
            inst.elseTarget >= p.insts.size())
          throw ValidationError(inst.line, "branch target out of range");
        break;
      }
      case Instruction::Kind::Jump:
        if (inst.jumpTarget >= p.insts.size())
          throw ValidationError(inst.line, "jump target out of range");
        break;
      case Instruction::Kind::Halt:
        break;
      }
    }
  }

  static uint64_t widthMaskBits(uint8_t w) {
    return w >= 64 ? ~uint64_t(0) : ((uint64_t(1) << w) - 1);
  }

  const VarDecl *requireVar(const std::map<std::string, const VarDecl *> &m,
                            const std::string &n, int line) {
    auto it = m.find(n);
    if (it == m.end())
      throw ValidationError(line, "undeclared variable '" + n + "'");
    return it->second;
  }

  // Bottom-up width inference with polymorphic literals. `expected` of 0 means
  // "any integer width"; literals in such positions default to 32 bits.
  uint8_t inferWidth(IrExpr &e,
                     const std::map<std::string, const VarDecl *> &byName,
                     int line, uint8_t expected) {
    uint8_t w = inferRec(e, byName, line);
    if (w == 0) {
      w = expected ? expected : 32;
      assignLitWidths(e, w);
    } else if (expected && w != expected) {
      throw ValidationError(line, "expression width mismatch (" +
                                      std::to_string(w) + " vs expected " +
                                      std::to_string(expected) + ")");
    }
    e.width = e.width ? e.width : w;
    return w;
  }

  uint8_t inferRec(IrExpr &e,
                   const std::map<std::string, const VarDecl *> &byName,
                   int line) {
    switch (e.kind) {
    case IrExpr::Kind::Lit:
      return 0; // polymorphic until a sibling fixes it
    case IrExpr::Kind::Ref: {
      auto it = byName.find(e.ref);
      if (it == byName.end())
        throw ValidationError(line, "undeclared variable '" + e.ref + "'");
      if (!it->second->isRegister)
        throw ValidationError(line, "memory variable '" + e.ref +
                                        "' used in expression; load it first");
      e.width = it->second->width;
      return e.width;
    }
    case IrExpr::Kind::Unary: {
      uint8_t w = inferRec(*e.lhs, byName, line);
      if (e.op == IrOp::LNot) {
        if (w != 0 && w != 1)
          throw ValidationError(line, "'!' needs a boolean operand");
        if (w == 0)
          assignLitWidths(*e.lhs, 1);
        e.width = 1;
        return 1;
      }
      // Neg
      if (w == 1)
        throw ValidationError(line, "'-' needs an integer operand");
      e.width = w;
      return w;
    }
    case IrExpr::Kind::Binary: {
      uint8_t lw = inferRec(*e.lhs, byName, line);
      uint8_t rw = inferRec(*e.rhs, byName, line);
      bool logical = e.op == IrOp::LAnd || e.op == IrOp::LOr;
      bool comparison = e.op == IrOp::Lt || e.op == IrOp::Le ||
                        e.op == IrOp::Gt || e.op == IrOp::Ge ||
                        e.op == IrOp::Eq || e.op == IrOp::Ne;
      if (logical) {
        for (auto [sub, w] : {std::pair<IrExpr *, uint8_t>{e.lhs.get(), lw},
                              {e.rhs.get(), rw}}) {
          if (w != 0 && w != 1)
            throw ValidationError(line, "logical operand must be boolean");
          if (w == 0)
            assignLitWidths(*sub, 1);
        }
        e.width = 1;
        return 1;
      }
      uint8_t w = unify(lw, rw, line);
      if (w == 0 && comparison)
        w = 32; // both literal: compare at default width
      if (w != 0) {
        if (lw == 0)
          assignLitWidths(*e.lhs, w);
        if (rw == 0)
          assignLitWidths(*e.rhs, w);
      }
      if (comparison) {
        e.width = 1;
        return 1;
      }
      e.width = w;
      return w;
    }
    }
    return 0;
  }

  uint8_t unify(uint8_t a, uint8_t b, int line) {
    if (a == 0)
      return b;
    if (b == 0)
      return a;
    if (a != b)
      throw ValidationError(line, "operand width mismatch (" +
                                      std::to_string(a) + " vs " +
                                      std::to_string(b) + ")");
    return a;
  }

  void assignLitWidths(IrExpr &e, uint8_t w) {
    if (e.width == 0)
      e.width = w;
    if (e.lhs)
      assignLitWidths(*e.lhs, w);
    if (e.rhs)
      assignLitWidths(*e.rhs, w);
  }
};

inline Program parseProgram(const std::string &text,
                            const std::string &name = "program") {
  ProgramParser p;
  return p.parse(text, name);
}

//===----------------------------------------------------------------------===//
// Pretty printing (round-trips through parseProgram)
//===----------------------------------------------------------------------===//

namespace detail {

inline int precedence(IrOp op) {
  switch (op) {
  case IrOp::Mul:
    return 10;
  case IrOp::Add:
  case IrOp::Sub:
    return 9;
  case IrOp::Shl:
  case IrOp::Shr:
    return 8;
  case IrOp::Lt:
  case IrOp::Le:
  case IrOp::Gt:
  case IrOp::Ge:
    return 7;
  case IrOp::Eq:
  case IrOp::Ne:
    return 6;
  case IrOp::BitAnd:
    return 5;
  case IrOp::BitXor:
    return 4;
  case IrOp::BitOr:
    return 3;
  case IrOp::LAnd:
    return 2;
  case IrOp::LOr:
    return 1;
  default:
    return 11;
  }
}

inline const char *opToken(IrOp op) {
  switch (op) {
  case IrOp::Add:
    return "+";
  case IrOp::Sub:
    return "-";
  case IrOp::Mul:
    return "*";
  case IrOp::BitAnd:
    return "&";
  case IrOp::BitOr:
    return "|";
  case IrOp::BitXor:
    return "^";
  case IrOp::Shl:
    return "<<";
  case IrOp::Shr:
    return ">>";
  case IrOp::Lt:
    return "<";
  case IrOp::Le:
    return "<=";
  case IrOp::Gt:
    return ">";
  case IrOp::Ge:
    return ">=";
  case IrOp::Eq:
    return "==";
  case IrOp::Ne:
    return "!=";
  case IrOp::LAnd:
    return "&&";
  case IrOp::LOr:
    return "||";
  default:
    return "?";
  }
}

inline void printExpr(std::ostream &os, const IrExpr &e, int parentPrec) {
  switch (e.kind) {
  case IrExpr::Kind::Lit:
    os << e.lit;
    return;
  case IrExpr::Kind::Ref:
    os << e.ref;
    return;
  case IrExpr::Kind::Unary:
    os << (e.op == IrOp::LNot ? "!" : "-");
    printExpr(os, *e.lhs, 11);
    return;
  case IrExpr::Kind::Binary: {
    int prec = precedence(e.op);
    bool paren = prec < parentPrec;
    if (paren)
      os << "(";
    printExpr(os, *e.lhs, prec);
    os << " " << opToken(e.op) << " ";
    printExpr(os, *e.rhs, prec + 1);
    if (paren)
      os << ")";
    return;
  }
  }
}

} // namespace detail

inline std::string printProgram(const Program &p) {
  std::ostringstream os;
  for (const auto &d : p.decls) {
    os << "var " << d.name << " : ";
    if (d.isRegister)
      os << "reg ";
    os << "u" << int(d.width);
    if (d.isArray())
      os << "[" << d.arrayLen << "]";
    os << "\n";
  }
  for (const auto &s : p.sensitive)
    os << "secret " << s << "\n";
  for (const auto &[n, v] : p.publicInit)
    os << "init " << n << " = " << v << "\n";
  auto lbl = [](size_t i) { return "L" + std::to_string(i); };
  for (size_t i = 0; i < p.insts.size(); ++i) {
    const Instruction &inst = p.insts[i];
    os << lbl(i) << ": ";
    switch (inst.kind) {
    case Instruction::Kind::Assign:
      os << "assign " << inst.dst << " = ";
      detail::printExpr(os, *inst.value, 0);
      break;
    case Instruction::Kind::Load:
      os << "load " << inst.dst << " = " << inst.base << "[";
      detail::printExpr(os, *inst.index, 0);
      os << "]";
      break;
    case Instruction::Kind::Store:
      os << "store " << inst.base << "[";
      detail::printExpr(os, *inst.index, 0);
      os << "] = ";
      detail::printExpr(os, *inst.value, 0);
      break;
    case Instruction::Kind::Branch:
      os << "br ";
      detail::printExpr(os, *inst.cond, 0);
      os << " ? " << lbl(inst.thenTarget) << " : " << lbl(inst.elseTarget);
      break;
    case Instruction::Kind::Jump:
      os << "jmp " << lbl(inst.jumpTarget);
      break;
    case Instruction::Kind::Halt:
      os << "halt";
      break;
    }
    os << "\n";
  }
  return os.str();
}

} // namespace speculeak
