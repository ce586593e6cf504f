//===-- expr.hpp - Hash-consed fixed-width expression trees ---------------===//
//
// Quantifier-free expressions over fixed-width unsigned integers and booleans.
// Nodes are immutable and interned per ExprContext, so structural equality is
// pointer equality and repeated sub-formulas share storage. The same node
// algebra serves both the engine's symbolic values and the cache-behavior
// constraints; CountLessThan is the one constraint-only node (a bounded sum of
// boolean guards compared against the cache associativity).
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cassert>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace speculeak {

using Width = uint8_t; // bits: 1 (bool), 8, 16, 32, 64

inline constexpr Width BoolWidth = 1;

inline uint64_t widthMask(Width w) {
  return w >= 64 ? ~uint64_t(0) : ((uint64_t(1) << w) - 1);
}

enum class ExprKind : uint8_t {
  Const,
  Symbol,
  Not,  // boolean negation
  ZExt, // zero extension to a wider width
  BinOp,
  Cmp,
  Ite,
  CountLessThan, // sum of boolean guards < bound
};

enum class BinOpcode : uint8_t { Add, Sub, Mul, And, Or, Xor, Shl, LShr };
enum class CmpOpcode : uint8_t { Eq, Ne, Ult, Ule, Ugt, Uge };

class ExprNode;
using ExprRef = const ExprNode *;

class ExprNode {
public:
  ExprKind kind;
  Width width;
  uint8_t op = 0;       // BinOpcode or CmpOpcode
  uint64_t value = 0;   // Const payload, or CountLessThan bound
  std::string name;     // Symbol payload
  std::vector<ExprRef> children;
  uint32_t id = 0;      // creation index within the owning context
  bool hasSymbol = false;

  bool isConst() const { return kind == ExprKind::Const; }
  bool isTrue() const { return isConst() && width == BoolWidth && value == 1; }
  bool isFalse() const { return isConst() && width == BoolWidth && value == 0; }
  uint64_t constValue() const {
    assert(isConst());
    return value;
  }
  BinOpcode binOp() const { return static_cast<BinOpcode>(op); }
  CmpOpcode cmpOp() const { return static_cast<CmpOpcode>(op); }
};

class EvalError : public std::runtime_error {
public:
  explicit EvalError(const std::string &what) : std::runtime_error(what) {}
};

/// A total assignment of concrete values to symbols, keyed by symbol name.
using Assignment = std::map<std::string, uint64_t>;

/// Owns and interns all expression nodes of one analysis session. Not shared
/// across sessions; distinct contexts may be used from distinct threads.
class ExprContext {
public:
  ExprContext() {
    falseExpr_ = constant(BoolWidth, 0);
    trueExpr_ = constant(BoolWidth, 1);
  }
  ExprContext(const ExprContext &) = delete;
  ExprContext &operator=(const ExprContext &) = delete;

  ExprRef constant(Width w, uint64_t v) {
    ExprNode n;
    n.kind = ExprKind::Const;
    n.width = w;
    n.value = v & widthMask(w);
    return intern(std::move(n));
  }
  ExprRef trueExpr() const { return trueExpr_; }
  ExprRef falseExpr() const { return falseExpr_; }
  ExprRef boolConst(bool b) { return b ? trueExpr_ : falseExpr_; }

  ExprRef symbol(const std::string &name, Width w) {
    ExprNode n;
    n.kind = ExprKind::Symbol;
    n.width = w;
    n.name = name;
    n.hasSymbol = true;
    return intern(std::move(n));
  }

  ExprRef zext(ExprRef e, Width w) {
    assert(w >= e->width);
    if (w == e->width)
      return e;
    if (e->isConst())
      return constant(w, e->value);
    ExprNode n;
    n.kind = ExprKind::ZExt;
    n.width = w;
    n.children = {e};
    n.hasSymbol = e->hasSymbol;
    return intern(std::move(n));
  }

  ExprRef binop(BinOpcode op, ExprRef l, ExprRef r) {
    assert(l->width == r->width && "binop operands must share width");
    Width w = l->width;
    if (l->isConst() && r->isConst())
      return constant(w, evalBinOp(op, l->value, r->value, w));
    // Boolean short circuits; these are the only folds that may drop an
    // operand, and booleans never form addresses or stored bytes.
    if (w == BoolWidth && op == BinOpcode::And) {
      if (l->isFalse() || r->isFalse())
        return falseExpr_;
      if (l->isTrue())
        return r;
      if (r->isTrue())
        return l;
      if (l == r)
        return l;
    }
    if (w == BoolWidth && op == BinOpcode::Or) {
      if (l->isTrue() || r->isTrue())
        return trueExpr_;
      if (l->isFalse())
        return r;
      if (r->isFalse())
        return l;
      if (l == r)
        return l;
    }
    // Arithmetic identities that keep both symbolic operands intact.
    if (r->isConst() && r->value == 0 &&
        (op == BinOpcode::Add || op == BinOpcode::Sub || op == BinOpcode::Or ||
         op == BinOpcode::Xor || op == BinOpcode::Shl || op == BinOpcode::LShr))
      return l;
    if (l->isConst() && l->value == 0 &&
        (op == BinOpcode::Add || op == BinOpcode::Or || op == BinOpcode::Xor))
      return r;
    if (r->isConst() && r->value == 1 && op == BinOpcode::Mul)
      return l;
    ExprNode n;
    n.kind = ExprKind::BinOp;
    n.width = w;
    n.op = static_cast<uint8_t>(op);
    n.children = {l, r};
    n.hasSymbol = l->hasSymbol || r->hasSymbol;
    return intern(std::move(n));
  }

  ExprRef add(ExprRef l, ExprRef r) { return binop(BinOpcode::Add, l, r); }
  ExprRef land(ExprRef l, ExprRef r) { return binop(BinOpcode::And, l, r); }
  ExprRef lor(ExprRef l, ExprRef r) { return binop(BinOpcode::Or, l, r); }

  ExprRef lnot(ExprRef e) {
    assert(e->width == BoolWidth);
    if (e->isConst())
      return boolConst(e->value == 0);
    if (e->kind == ExprKind::Not)
      return e->children[0];
    if (e->kind == ExprKind::Cmp)
      return cmp(negateCmp(e->cmpOp()), e->children[0], e->children[1]);
    ExprNode n;
    n.kind = ExprKind::Not;
    n.width = BoolWidth;
    n.children = {e};
    n.hasSymbol = e->hasSymbol;
    return intern(std::move(n));
  }

  ExprRef cmp(CmpOpcode op, ExprRef l, ExprRef r) {
    assert(l->width == r->width && "cmp operands must share width");
    if (l->isConst() && r->isConst())
      return boolConst(evalCmp(op, l->value, r->value));
    if (l == r) {
      switch (op) {
      case CmpOpcode::Eq:
      case CmpOpcode::Ule:
      case CmpOpcode::Uge:
        return trueExpr_;
      case CmpOpcode::Ne:
      case CmpOpcode::Ult:
      case CmpOpcode::Ugt:
        return falseExpr_;
      }
    }
    // Vacuous unsigned bounds.
    uint64_t maxv = widthMask(l->width);
    if (r->isConst() && r->value == 0 && op == CmpOpcode::Ult)
      return falseExpr_;
    if (r->isConst() && r->value == 0 && op == CmpOpcode::Uge)
      return trueExpr_;
    if (l->isConst() && l->value == 0 && op == CmpOpcode::Ule)
      return trueExpr_;
    if (l->isConst() && l->value == 0 && op == CmpOpcode::Ugt)
      return falseExpr_;
    if (r->isConst() && r->value == maxv && op == CmpOpcode::Ule)
      return trueExpr_;
    if (r->isConst() && r->value == maxv && op == CmpOpcode::Ugt)
      return falseExpr_;
    ExprNode n;
    n.kind = ExprKind::Cmp;
    n.width = BoolWidth;
    n.op = static_cast<uint8_t>(op);
    n.children = {l, r};
    n.hasSymbol = l->hasSymbol || r->hasSymbol;
    return intern(std::move(n));
  }

  ExprRef eq(ExprRef l, ExprRef r) { return cmp(CmpOpcode::Eq, l, r); }
  ExprRef ne(ExprRef l, ExprRef r) { return cmp(CmpOpcode::Ne, l, r); }

  ExprRef ite(ExprRef c, ExprRef t, ExprRef f) {
    assert(c->width == BoolWidth && t->width == f->width);
    if (c->isConst())
      return c->value ? t : f;
    if (t == f)
      return t;
    ExprNode n;
    n.kind = ExprKind::Ite;
    n.width = t->width;
    n.children = {c, t, f};
    n.hasSymbol = c->hasSymbol || t->hasSymbol || f->hasSymbol;
    return intern(std::move(n));
  }

  /// True iff fewer than `bound` of the boolean guards hold. Constant guards
  /// are folded away during construction: false guards are dropped, true
  /// guards decrement the bound.
  ExprRef countLessThan(const std::vector<ExprRef> &guards, uint64_t bound) {
    std::vector<ExprRef> live;
    uint64_t need = bound;
    for (ExprRef g : guards) {
      assert(g->width == BoolWidth);
      if (g->isFalse())
        continue;
      if (g->isTrue()) {
        if (need == 0)
          return falseExpr_;
        --need;
        continue;
      }
      live.push_back(g);
    }
    if (need == 0)
      return falseExpr_;
    if (live.size() < need)
      return trueExpr_;
    ExprNode n;
    n.kind = ExprKind::CountLessThan;
    n.width = BoolWidth;
    n.value = need;
    n.children = std::move(live);
    for (ExprRef g : n.children)
      n.hasSymbol = n.hasSymbol || g->hasSymbol;
    return intern(std::move(n));
  }

  // Raw variants intern the literal node shape without simplification. The
  // unoptimized constraint encodings use these so their size reflects the
  // full written-out formulas; reduce() folds them back down.
  ExprRef rawBinop(BinOpcode op, ExprRef l, ExprRef r) {
    assert(l->width == r->width);
    ExprNode n;
    n.kind = ExprKind::BinOp;
    n.width = l->width;
    n.op = static_cast<uint8_t>(op);
    n.children = {l, r};
    n.hasSymbol = l->hasSymbol || r->hasSymbol;
    return intern(std::move(n));
  }
  ExprRef rawCmp(CmpOpcode op, ExprRef l, ExprRef r) {
    assert(l->width == r->width);
    ExprNode n;
    n.kind = ExprKind::Cmp;
    n.width = BoolWidth;
    n.op = static_cast<uint8_t>(op);
    n.children = {l, r};
    n.hasSymbol = l->hasSymbol || r->hasSymbol;
    return intern(std::move(n));
  }
  ExprRef rawNot(ExprRef e) {
    assert(e->width == BoolWidth);
    ExprNode n;
    n.kind = ExprKind::Not;
    n.width = BoolWidth;
    n.children = {e};
    n.hasSymbol = e->hasSymbol;
    return intern(std::move(n));
  }
  ExprRef rawIte(ExprRef c, ExprRef t, ExprRef f) {
    assert(c->width == BoolWidth && t->width == f->width);
    ExprNode n;
    n.kind = ExprKind::Ite;
    n.width = t->width;
    n.children = {c, t, f};
    n.hasSymbol = c->hasSymbol || t->hasSymbol || f->hasSymbol;
    return intern(std::move(n));
  }
  ExprRef rawCountLessThan(const std::vector<ExprRef> &guards,
                           uint64_t bound) {
    ExprNode n;
    n.kind = ExprKind::CountLessThan;
    n.width = BoolWidth;
    n.value = bound;
    n.children = guards;
    for (ExprRef g : n.children) {
      assert(g->width == BoolWidth);
      n.hasSymbol = n.hasSymbol || g->hasSymbol;
    }
    return intern(std::move(n));
  }

  size_t nodeCount() const { return nodes_.size(); }

private:
  static CmpOpcode negateCmp(CmpOpcode op) {
    switch (op) {
    case CmpOpcode::Eq:
      return CmpOpcode::Ne;
    case CmpOpcode::Ne:
      return CmpOpcode::Eq;
    case CmpOpcode::Ult:
      return CmpOpcode::Uge;
    case CmpOpcode::Ule:
      return CmpOpcode::Ugt;
    case CmpOpcode::Ugt:
      return CmpOpcode::Ule;
    case CmpOpcode::Uge:
      return CmpOpcode::Ult;
    }
    return CmpOpcode::Eq;
  }

  static uint64_t evalBinOp(BinOpcode op, uint64_t a, uint64_t b, Width w) {
    uint64_t m = widthMask(w);
    switch (op) {
    case BinOpcode::Add:
      return (a + b) & m;
    case BinOpcode::Sub:
      return (a - b) & m;
    case BinOpcode::Mul:
      return (a * b) & m;
    case BinOpcode::And:
      return a & b;
    case BinOpcode::Or:
      return a | b;
    case BinOpcode::Xor:
      return a ^ b;
    case BinOpcode::Shl:
      return b >= w ? 0 : (a << b) & m;
    case BinOpcode::LShr:
      return b >= w ? 0 : (a >> b);
    }
    return 0;
  }

  static bool evalCmp(CmpOpcode op, uint64_t a, uint64_t b) {
    switch (op) {
    case CmpOpcode::Eq:
      return a == b;
    case CmpOpcode::Ne:
      return a != b;
    case CmpOpcode::Ult:
      return a < b;
    case CmpOpcode::Ule:
      return a <= b;
    case CmpOpcode::Ugt:
      return a > b;
    case CmpOpcode::Uge:
      return a >= b;
    }
    return false;
  }

  static size_t hashNode(const ExprNode &n) {
    size_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ull;
    };
    mix(static_cast<uint64_t>(n.kind));
    mix(n.width);
    mix(n.op);
    mix(n.value);
    for (char c : n.name)
      mix(static_cast<uint64_t>(static_cast<unsigned char>(c)));
    for (ExprRef c : n.children)
      mix(c->id);
    return h;
  }

  static bool sameNode(const ExprNode &a, const ExprNode &b) {
    return a.kind == b.kind && a.width == b.width && a.op == b.op &&
           a.value == b.value && a.name == b.name && a.children == b.children;
  }

  ExprRef intern(ExprNode &&n) {
    size_t h = hashNode(n);
    auto [it, inserted] = table_.try_emplace(h);
    for (ExprRef cand : it->second)
      if (sameNode(*cand, n))
        return cand;
    n.id = static_cast<uint32_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    ExprRef ref = &nodes_.back();
    it->second.push_back(ref);
    return ref;
  }

  std::deque<ExprNode> nodes_;
  std::unordered_map<size_t, std::vector<ExprRef>> table_;
  ExprRef trueExpr_ = nullptr;
  ExprRef falseExpr_ = nullptr;
};

namespace detail {
inline uint64_t evalRec(ExprRef e, const Assignment &model,
                        std::unordered_map<uint32_t, uint64_t> &memo) {
  if (e->isConst())
    return e->value;
  auto it = memo.find(e->id);
  if (it != memo.end())
    return it->second;
  uint64_t r = 0;
  switch (e->kind) {
  case ExprKind::Symbol: {
    auto sit = model.find(e->name);
    if (sit == model.end())
      throw EvalError("missing symbol in model: " + e->name);
    r = sit->second & widthMask(e->width);
    break;
  }
  case ExprKind::Not:
    r = evalRec(e->children[0], model, memo) ? 0 : 1;
    break;
  case ExprKind::ZExt:
    r = evalRec(e->children[0], model, memo);
    break;
  case ExprKind::BinOp: {
    uint64_t a = evalRec(e->children[0], model, memo);
    uint64_t b = evalRec(e->children[1], model, memo);
    uint64_t m = widthMask(e->width);
    switch (e->binOp()) {
    case BinOpcode::Add:
      r = (a + b) & m;
      break;
    case BinOpcode::Sub:
      r = (a - b) & m;
      break;
    case BinOpcode::Mul:
      r = (a * b) & m;
      break;
    case BinOpcode::And:
      r = a & b;
      break;
    case BinOpcode::Or:
      r = a | b;
      break;
    case BinOpcode::Xor:
      r = a ^ b;
      break;
    case BinOpcode::Shl:
      r = b >= e->width ? 0 : (a << b) & m;
      break;
    case BinOpcode::LShr:
      r = b >= e->width ? 0 : (a >> b);
      break;
    }
    break;
  }
  case ExprKind::Cmp: {
    uint64_t a = evalRec(e->children[0], model, memo);
    uint64_t b = evalRec(e->children[1], model, memo);
    switch (e->cmpOp()) {
    case CmpOpcode::Eq:
      r = a == b;
      break;
    case CmpOpcode::Ne:
      r = a != b;
      break;
    case CmpOpcode::Ult:
      r = a < b;
      break;
    case CmpOpcode::Ule:
      r = a <= b;
      break;
    case CmpOpcode::Ugt:
      r = a > b;
      break;
    case CmpOpcode::Uge:
      r = a >= b;
      break;
    }
    break;
  }
  case ExprKind::Ite:
    r = evalRec(e->children[0], model, memo)
            ? evalRec(e->children[1], model, memo)
            : evalRec(e->children[2], model, memo);
    break;
  case ExprKind::CountLessThan: {
    uint64_t cnt = 0;
    for (ExprRef g : e->children)
      cnt += evalRec(g, model, memo);
    r = cnt < e->value;
    break;
  }
  case ExprKind::Const:
    break;
  }
  memo.emplace(e->id, r);
  return r;
}
} // namespace detail

/// Concrete evaluation under a total assignment; modular in each node's width.
inline uint64_t evaluate(ExprRef e, const Assignment &model) {
  std::unordered_map<uint32_t, uint64_t> memo;
  return detail::evalRec(e, model, memo);
}

/// Collects the distinct symbols of `e`, ordered by name.
inline std::vector<ExprRef> symbolsOf(ExprRef e) {
  std::map<std::string, ExprRef> found;
  std::vector<ExprRef> stack{e};
  std::unordered_map<uint32_t, bool> seen;
  while (!stack.empty()) {
    ExprRef n = stack.back();
    stack.pop_back();
    if (!n->hasSymbol || seen.count(n->id))
      continue;
    seen[n->id] = true;
    if (n->kind == ExprKind::Symbol)
      found.emplace(n->name, n);
    for (ExprRef c : n->children)
      stack.push_back(c);
  }
  std::vector<ExprRef> out;
  out.reserve(found.size());
  for (auto &[_, s] : found)
    out.push_back(s);
  return out;
}

/// Number of distinct nodes reachable from `e` (DAG size, not tree size).
inline size_t dagSize(ExprRef e) {
  std::unordered_map<uint32_t, bool> seen;
  std::vector<ExprRef> stack{e};
  size_t n = 0;
  while (!stack.empty()) {
    ExprRef cur = stack.back();
    stack.pop_back();
    if (seen.count(cur->id))
      continue;
    seen[cur->id] = true;
    ++n;
    for (ExprRef c : cur->children)
      stack.push_back(c);
  }
  return n;
}

namespace detail {
inline ExprRef substRec(ExprContext &ctx, ExprRef e,
                        const std::map<std::string, ExprRef> &map,
                        std::unordered_map<uint32_t, ExprRef> &memo) {
  if (!e->hasSymbol)
    return e;
  auto it = memo.find(e->id);
  if (it != memo.end())
    return it->second;
  ExprRef r = e;
  if (e->kind == ExprKind::Symbol) {
    auto sit = map.find(e->name);
    if (sit != map.end())
      r = sit->second;
  } else {
    std::vector<ExprRef> ch;
    ch.reserve(e->children.size());
    bool changed = false;
    for (ExprRef c : e->children) {
      ExprRef nc = substRec(ctx, c, map, memo);
      changed = changed || nc != c;
      ch.push_back(nc);
    }
    if (changed) {
      // Structure-preserving rebuild: a renamed copy must mirror the
      // original node for node, so renaming detection and size accounting
      // stay exact.
      switch (e->kind) {
      case ExprKind::Not:
        r = ctx.rawNot(ch[0]);
        break;
      case ExprKind::ZExt:
        r = ctx.zext(ch[0], e->width);
        break;
      case ExprKind::BinOp:
        r = ctx.rawBinop(e->binOp(), ch[0], ch[1]);
        break;
      case ExprKind::Cmp:
        r = ctx.rawCmp(e->cmpOp(), ch[0], ch[1]);
        break;
      case ExprKind::Ite:
        r = ctx.rawIte(ch[0], ch[1], ch[2]);
        break;
      case ExprKind::CountLessThan:
        r = ctx.rawCountLessThan(ch, e->value);
        break;
      default:
        break;
      }
    }
  }
  memo.emplace(e->id, r);
  return r;
}
} // namespace detail

/// Rebuilds `e` with symbols replaced per `map`; untouched subtrees are shared.
inline ExprRef substitute(ExprContext &ctx, ExprRef e,
                          const std::map<std::string, ExprRef> &map) {
  std::unordered_map<uint32_t, ExprRef> memo;
  return detail::substRec(ctx, e, map, memo);
}

} // namespace speculeak
