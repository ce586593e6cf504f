//===-- smtlib.hpp - Constraint emission in SMT-LIB v2 text ---------------===//
//
// One-way emission of queries for cross-checking with an external solver,
// plus a parser for the (sat/unsat + get-model) response text. Width-1 nodes
// map to Bool, wider nodes to (_ BitVec w); shared subterms are let-bound.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <unistd.h>
#include <unordered_map>
#include <vector>

#include "speculeak/expr.hpp"
#include "speculeak/solver.hpp"

namespace speculeak {

namespace detail {

inline void countParents(ExprRef e,
                         std::unordered_map<uint32_t, uint32_t> &uses) {
  if (++uses[e->id] > 1)
    return;
  for (ExprRef c : e->children)
    countParents(c, uses);
}

class SmtPrinter {
public:
  SmtPrinter(std::ostream &os, const std::unordered_map<uint32_t, uint32_t> &uses)
      : os_(os), uses_(uses) {}

  std::string ref(ExprRef e) {
    auto it = names_.find(e->id);
    if (it != names_.end())
      return it->second;
    std::string text = render(e);
    bool shared = uses_.at(e->id) > 1 && !e->isConst() &&
                  e->kind != ExprKind::Symbol;
    if (!shared)
      return text;
    std::string nm = "?t" + std::to_string(names_.size());
    lets_.emplace_back(nm, text);
    names_[e->id] = nm;
    return nm;
  }

  const std::vector<std::pair<std::string, std::string>> &lets() const {
    return lets_;
  }

  static std::string symbolName(const std::string &raw) {
    // Symbol names may contain characters like [ ] ', which SMT-LIB only
    // allows inside | | quoting.
    for (char c : raw)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.')
        return "|" + raw + "|";
    return raw;
  }

private:
  std::string render(ExprRef e) {
    switch (e->kind) {
    case ExprKind::Const:
      if (e->width == BoolWidth)
        return e->value ? "true" : "false";
      return bvLit(e->value, e->width);
    case ExprKind::Symbol:
      return symbolName(e->name);
    case ExprKind::Not:
      return "(not " + ref(e->children[0]) + ")";
    case ExprKind::ZExt:
      return "((_ zero_extend " +
             std::to_string(e->width - e->children[0]->width) + ") " +
             ref(e->children[0]) + ")";
    case ExprKind::BinOp: {
      std::string a = ref(e->children[0]), b = ref(e->children[1]);
      if (e->width == BoolWidth) {
        switch (e->binOp()) {
        case BinOpcode::And:
          return "(and " + a + " " + b + ")";
        case BinOpcode::Or:
          return "(or " + a + " " + b + ")";
        case BinOpcode::Xor:
          return "(xor " + a + " " + b + ")";
        default:
          throw std::logic_error("arithmetic on booleans is not emitted");
        }
      }
      const char *op = nullptr;
      switch (e->binOp()) {
      case BinOpcode::Add:
        op = "bvadd";
        break;
      case BinOpcode::Sub:
        op = "bvsub";
        break;
      case BinOpcode::Mul:
        op = "bvmul";
        break;
      case BinOpcode::And:
        op = "bvand";
        break;
      case BinOpcode::Or:
        op = "bvor";
        break;
      case BinOpcode::Xor:
        op = "bvxor";
        break;
      case BinOpcode::Shl:
        op = "bvshl";
        break;
      case BinOpcode::LShr:
        op = "bvlshr";
        break;
      }
      return std::string("(") + op + " " + a + " " + b + ")";
    }
    case ExprKind::Cmp: {
      std::string a = ref(e->children[0]), b = ref(e->children[1]);
      switch (e->cmpOp()) {
      case CmpOpcode::Eq:
        return "(= " + a + " " + b + ")";
      case CmpOpcode::Ne:
        return "(distinct " + a + " " + b + ")";
      case CmpOpcode::Ult:
        return "(bvult " + a + " " + b + ")";
      case CmpOpcode::Ule:
        return "(bvule " + a + " " + b + ")";
      case CmpOpcode::Ugt:
        return "(bvugt " + a + " " + b + ")";
      case CmpOpcode::Uge:
        return "(bvuge " + a + " " + b + ")";
      }
      return "";
    }
    case ExprKind::Ite:
      return "(ite " + ref(e->children[0]) + " " + ref(e->children[1]) + " " +
             ref(e->children[2]) + ")";
    case ExprKind::CountLessThan: {
      // Bounded sum of guards, compared against the bound at 16 bits.
      std::string sum = bvLit(0, 16);
      for (ExprRef g : e->children)
        sum = "(bvadd " + sum + " (ite " + ref(g) + " " + bvLit(1, 16) + " " +
              bvLit(0, 16) + "))";
      return "(bvult " + sum + " " + bvLit(e->value, 16) + ")";
    }
    }
    return "";
  }

  static std::string bvLit(uint64_t v, Width w) {
    std::ostringstream os;
    os << "(_ bv" << (v & widthMask(w)) << " " << int(w) << ")";
    return os.str();
  }

  std::ostream &os_;
  const std::unordered_map<uint32_t, uint32_t> &uses_;
  std::unordered_map<uint32_t, std::string> names_;
  std::vector<std::pair<std::string, std::string>> lets_;
};

} // namespace detail

/// Renders `query` as a complete SMT-LIB script (QF_BV, one assert,
/// check-sat, get-model).
inline std::string toSmtLib(ExprRef query) {
  std::unordered_map<uint32_t, uint32_t> uses;
  detail::countParents(query, uses);
  std::ostringstream os;
  os << "(set-logic QF_BV)\n";
  for (ExprRef s : symbolsOf(query))
    os << "(declare-const " << detail::SmtPrinter::symbolName(s->name)
       << " (_ BitVec " << int(s->width) << "))\n";
  detail::SmtPrinter pr(os, uses);
  std::string body = pr.ref(query);
  std::string assertion = body;
  // Wrap shared subterms in nested lets, innermost binding first.
  for (auto it = pr.lets().rbegin(); it != pr.lets().rend(); ++it)
    assertion = "(let ((" + it->first + " " + it->second + ")) " + assertion +
                ")";
  os << "(assert " << assertion << ")\n";
  os << "(check-sat)\n(get-model)\n";
  return os.str();
}

/// Parses solver response text: "sat" plus define-fun lines, or "unsat".
/// Understands the common model shapes `(_ bvN w)`, `#xNN`, and `#b...`.
inline SolveResult parseSmtResponse(const std::string &text) {
  std::istringstream in(text);
  std::string first;
  if (!(in >> first))
    return SolveResult::unknown("empty solver response");
  if (first == "unsat")
    return SolveResult::unsat();
  if (first != "sat")
    return SolveResult::unknown("unrecognized solver verdict: " + first);

  Assignment model;
  std::string rest((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  size_t pos = 0;
  while ((pos = rest.find("define-fun", pos)) != std::string::npos) {
    pos += 10;
    size_t nameStart = rest.find_first_not_of(" \t\n", pos);
    if (nameStart == std::string::npos)
      break;
    size_t nameEnd;
    std::string name;
    if (rest[nameStart] == '|') {
      nameEnd = rest.find('|', nameStart + 1);
      name = rest.substr(nameStart + 1, nameEnd - nameStart - 1);
      ++nameEnd;
    } else {
      nameEnd = rest.find_first_of(" \t\n(", nameStart);
      name = rest.substr(nameStart, nameEnd - nameStart);
    }
    uint64_t value = 0;
    bool found = false;
    if (size_t bv = rest.find("(_ bv", nameEnd); bv != std::string::npos) {
      size_t lineEnd = rest.find('\n', nameEnd);
      if (lineEnd == std::string::npos || bv < lineEnd + 80) {
        value = std::stoull(rest.substr(bv + 5), nullptr, 10);
        found = true;
      }
    }
    if (!found) {
      if (size_t hx = rest.find("#x", nameEnd); hx != std::string::npos) {
        value = std::stoull(rest.substr(hx + 2), nullptr, 16);
        found = true;
      } else if (size_t bn = rest.find("#b", nameEnd);
                 bn != std::string::npos) {
        value = std::stoull(rest.substr(bn + 2), nullptr, 2);
        found = true;
      }
    }
    if (found)
      model[name] = value;
    pos = nameEnd;
  }
  return SolveResult::sat(std::move(model));
}

/// Subprocess adapter speaking the SMT-LIB exchange format. Disabled unless a
/// solver binary is configured; the enumeration backend is the default.
class SmtTextAdapter {
public:
  explicit SmtTextAdapter(std::string solverCommand)
      : command_(std::move(solverCommand)) {}

  SolveResult check(ExprRef query) const {
    std::string script = toSmtLib(query);
    std::string tmp = "/tmp/speculeak_query_" + std::to_string(::getpid()) +
                      ".smt2";
    {
      std::ofstream out(tmp);
      out << script;
    }
    std::string cmd = command_ + " " + tmp + " 2>/dev/null";
    FILE *pipe = ::popen(cmd.c_str(), "r");
    if (!pipe)
      return SolveResult::unknown("failed to launch solver: " + command_);
    std::string output;
    char buf[4096];
    size_t n;
    while ((n = ::fread(buf, 1, sizeof(buf), pipe)) > 0)
      output.append(buf, n);
    ::pclose(pipe);
    ::remove(tmp.c_str());
    return parseSmtResponse(output);
  }

private:
  std::string command_;
};

} // namespace speculeak
