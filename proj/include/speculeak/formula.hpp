//===-- formula.hpp - Cache-behavior constraint encodings -----------------===//
//
// Builds the hit condition of a trace event as a quantifier-free formula over
// the secret bytes: a disjunction over prior same-block candidates, each
// guarded by nearest-ness and by a bounded count of uniquely-new same-set
// mappings against the associativity (the LRU survival bound). The merged
// world ranges over all events of the view; the architectural world skips
// speculative-origin events everywhere they are quantified.
//
// Two builder modes:
//  - Base writes the formulas out literally (raw connectives, every
//    candidate), mirroring the unoptimized encoding.
//  - Optimized folds constant subterms during construction, skips candidates
//    with a decided block mismatch, stops the scan at a concrete nearest
//    match, shares negated comparisons between adjacent candidates, and
//    memoizes sub-formulas across builds.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <unordered_map>

#include "speculeak/cache.hpp"
#include "speculeak/expr.hpp"
#include "speculeak/trace.hpp"

namespace speculeak {

enum class World : uint8_t { Merged, ArchitecturalOnly };
enum class BuildMode : uint8_t { Base, Optimized };

class MustBehaviorUnknown : public std::runtime_error {
public:
  explicit MustBehaviorUnknown(const std::string &what)
      : std::runtime_error(what) {}
};

/// Cross-build cache of sub-formulas plus builder instrumentation.
struct MemoTable {
  std::unordered_map<uint64_t, ExprRef> blockEq;
  std::unordered_map<uint64_t, ExprRef> reduced;
  uint64_t hits = 0;
  uint64_t misses = 0;

  static uint64_t pairKey(ExprRef a, ExprRef b) {
    return (uint64_t(a->id) << 32) | b->id;
  }
};

namespace geometry {

inline uint32_t log2u(uint32_t v) {
  uint32_t p = 0;
  while ((1u << p) < v)
    ++p;
  return p;
}

/// Block number of an address expression (folds for concrete addresses).
inline ExprRef blockExpr(ExprContext &ctx, ExprRef addr,
                         const CacheConfig &cfg) {
  if (cfg.lineSize == 1)
    return addr;
  return ctx.binop(BinOpcode::LShr, addr,
                   ctx.constant(addr->width, log2u(cfg.lineSize)));
}

/// Set index of an address expression.
inline ExprRef setExpr(ExprContext &ctx, ExprRef addr,
                       const CacheConfig &cfg) {
  uint32_t sets = cfg.numSets();
  if (sets == 1)
    return ctx.constant(addr->width, 0);
  return ctx.binop(BinOpcode::And, blockExpr(ctx, addr, cfg),
                   ctx.constant(addr->width, sets - 1));
}

} // namespace geometry

namespace detail {

struct HitBuilder {
  ExprContext &ctx;
  const CacheConfig &cfg;
  BuildMode mode;
  MemoTable *memo;

  ExprRef mkAnd(ExprRef a, ExprRef b) {
    return mode == BuildMode::Base ? ctx.rawBinop(BinOpcode::And, a, b)
                                   : ctx.land(a, b);
  }
  ExprRef mkOr(ExprRef a, ExprRef b) {
    return mode == BuildMode::Base ? ctx.rawBinop(BinOpcode::Or, a, b)
                                   : ctx.lor(a, b);
  }
  ExprRef mkNot(ExprRef a) {
    return mode == BuildMode::Base ? ctx.rawNot(a) : ctx.lnot(a);
  }

  ExprRef blockEq(ExprRef a, ExprRef b) {
    if (memo) {
      uint64_t key = MemoTable::pairKey(a, b);
      if (auto it = memo->blockEq.find(key); it != memo->blockEq.end()) {
        ++memo->hits;
        return it->second;
      }
      ++memo->misses;
      ExprRef r = blockEqUncached(a, b);
      memo->blockEq.emplace(key, r);
      return r;
    }
    return blockEqUncached(a, b);
  }

  ExprRef blockEqUncached(ExprRef a, ExprRef b) {
    ExprRef ta = geometry::blockExpr(ctx, a, cfg);
    ExprRef tb = geometry::blockExpr(ctx, b, cfg);
    return mode == BuildMode::Base ? ctx.rawCmp(CmpOpcode::Eq, ta, tb)
                                   : ctx.eq(ta, tb);
  }

  ExprRef setEq(ExprRef a, ExprRef b) {
    ExprRef sa = geometry::setExpr(ctx, a, cfg);
    ExprRef sb = geometry::setExpr(ctx, b, cfg);
    return mode == BuildMode::Base ? ctx.rawCmp(CmpOpcode::Eq, sa, sb)
                                   : ctx.eq(sa, sb);
  }

  /// Hit condition for the view's target in `world`.
  ExprRef build(const TraceView &view, World world) {
    const size_t i = view.target();
    ExprRef targetAddr = view.events[i]->addr;

    std::vector<size_t> scope; // indices quantified over in this world
    for (size_t k = 0; k < i; ++k)
      if (world == World::Merged || !view.events[k]->speculative)
        scope.push_back(k);
    if (scope.empty())
      return ctx.falseExpr(); // cold access

    // Freshness guards: guard(jPos) for candidate at scope[jPos] counts
    // events scope[y] in (j, i). fresh(j, y) means the block of a_y was not
    // touched between them; built as suffix-shared chains.
    //
    // Candidates are scanned nearest-first; the nearest-ness constraint of
    // candidate j is the accumulated negation of the block matches of all
    // nearer events, so each comparison is built once and shared.
    ExprRef result = nullptr;
    ExprRef nearness = nullptr; // over events nearer than the current j
    for (size_t jPos = scope.size(); jPos-- > 0;) {
      size_t j = scope[jPos];
      ExprRef aj = view.events[j]->addr;
      ExprRef candBlockEq = blockEq(aj, targetAddr);
      bool skip = mode == BuildMode::Optimized && candBlockEq->isFalse();
      if (!skip) {
        ExprRef cand = candBlockEq;
        if (nearness)
          cand = mkAnd(cand, nearness);
        cand = mkAnd(cand, survivalBound(view, scope, jPos, targetAddr));
        result = result ? mkOr(result, cand) : cand;
      }
      if (mode == BuildMode::Optimized && candBlockEq->isTrue())
        break; // every farther candidate fails nearest-ness
      ExprRef notEq = mkNot(candBlockEq);
      nearness = nearness ? mkAnd(notEq, nearness) : notEq;
    }
    return result ? result : ctx.falseExpr();
  }

  /// Count of uniquely-new same-set mappings strictly between candidate
  /// scope[jPos] and the target, bounded by the associativity.
  ExprRef survivalBound(const TraceView &view, const std::vector<size_t> &scope,
                        size_t jPos, ExprRef targetAddr) {
    std::vector<ExprRef> guards;
    for (size_t yPos = jPos + 1; yPos < scope.size(); ++yPos) {
      ExprRef ay = view.events[scope[yPos]]->addr;
      ExprRef sameSet = setEq(ay, targetAddr);
      if (mode == BuildMode::Optimized && sameSet->isFalse())
        continue;
      // First occurrence of a_y's block within (j, y).
      ExprRef fresh = nullptr;
      for (size_t zPos = jPos + 1; zPos < yPos; ++zPos) {
        ExprRef az = view.events[scope[zPos]]->addr;
        ExprRef ne = mkNot(blockEq(az, ay));
        if (mode == BuildMode::Optimized && ne->isFalse()) {
          fresh = ctx.falseExpr();
          break;
        }
        fresh = fresh ? mkAnd(fresh, ne) : ne;
      }
      ExprRef guard = fresh ? mkAnd(sameSet, fresh) : sameSet;
      if (mode == BuildMode::Optimized && guard->isFalse())
        continue;
      guards.push_back(guard);
    }
    return mode == BuildMode::Base
               ? ctx.rawCountLessThan(guards, cfg.assoc)
               : ctx.countLessThan(guards, cfg.assoc);
  }
};

} // namespace detail

/// Always-hit condition of the target under speculative execution: all view
/// events, speculative included, participate.
inline ExprRef buildEta(ExprContext &ctx, const TraceView &view,
                        const CacheConfig &cfg,
                        BuildMode mode = BuildMode::Optimized,
                        MemoTable *memo = nullptr) {
  detail::HitBuilder b{ctx, cfg, mode, memo};
  return b.build(view, World::Merged);
}

/// Always-hit condition under non-speculative execution: candidate,
/// nearest-ness, and counting ranges all skip speculative-origin events.
inline ExprRef buildEtaPrime(ExprContext &ctx, const TraceView &view,
                             const CacheConfig &cfg,
                             BuildMode mode = BuildMode::Optimized,
                             MemoTable *memo = nullptr) {
  detail::HitBuilder b{ctx, cfg, mode, memo};
  return b.build(view, World::ArchitecturalOnly);
}

/// General (may-hit) condition in the merged world. With block-number tags
/// the same-block candidate test coincides with the always-hit form, so this
/// agrees with buildEta; both entry points stay because callers distinguish
/// the two roles.
inline ExprRef buildMu(ExprContext &ctx, const TraceView &view,
                       const CacheConfig &cfg,
                       BuildMode mode = BuildMode::Optimized,
                       MemoTable *memo = nullptr) {
  detail::HitBuilder b{ctx, cfg, mode, memo};
  return b.build(view, World::Merged);
}

/// Complement query for the new-opposite check after the architectural
/// verdict has been resolved to the constant `archHit`: satisfiable iff some
/// input makes the speculative-world behavior AGREE with the architectural
/// one, i.e. unsatisfiability of this formula establishes the opposite leak.
inline ExprRef buildOppositeComplement(ExprContext &ctx, ExprRef eta,
                                       bool archHit) {
  return archHit ? eta : ctx.lnot(eta);
}

struct DivergentEncoding {
  ExprRef query = nullptr;   // distinct ∧ (mu != mu') ∧ pc'
  ExprRef muPrimed = nullptr;
  ExprRef pcPrimed = nullptr;
};

/// Two-input divergence constraint: a primed copy of every secret symbol is
/// substituted into a second instance of the hit condition and of the path
/// condition. Satisfiable iff two same-path inputs disagree on the target's
/// speculative-world verdict.
inline DivergentEncoding buildDivergent(ExprContext &ctx, ExprRef mu,
                                        ExprRef pc,
                                        const std::string &primeSuffix = "'") {
  DivergentEncoding enc;
  std::map<std::string, ExprRef> priming;
  std::vector<ExprRef> syms = symbolsOf(ctx.land(mu, pc));
  ExprRef distinct = ctx.falseExpr();
  for (ExprRef s : syms) {
    ExprRef sp = ctx.symbol(s->name + primeSuffix, s->width);
    priming[s->name] = sp;
    distinct = ctx.lor(distinct, ctx.ne(s, sp));
  }
  enc.muPrimed = substitute(ctx, mu, priming);
  enc.pcPrimed = substitute(ctx, pc, priming);
  enc.query = ctx.land(ctx.land(distinct, ctx.ne(mu, enc.muPrimed)),
                       enc.pcPrimed);
  return enc;
}

/// Single-input behavior-flip constraint: satisfiable iff some input makes
/// the speculative-world verdict differ from the (constant) architectural
/// verdict. Implies the base leak constraint.
inline ExprRef buildThetaPrime(ExprContext &ctx, ExprRef mu, bool archHit) {
  return ctx.ne(mu, ctx.boolConst(archHit));
}

namespace detail {

inline ExprRef reduceRec(ExprContext &ctx, ExprRef e, MemoTable &memo) {
  if (e->isConst() || e->kind == ExprKind::Symbol)
    return e;
  if (auto it = memo.reduced.find(e->id); it != memo.reduced.end()) {
    ++memo.hits;
    return it->second;
  }
  ++memo.misses;
  ExprRef r = nullptr;
  switch (e->kind) {
  case ExprKind::BinOp:
    if (e->width == BoolWidth && e->binOp() == BinOpcode::And) {
      // Short-circuit: a false conjunct decides the formula without
      // descending into its sibling.
      ExprRef l = reduceRec(ctx, e->children[0], memo);
      if (l->isFalse()) {
        r = ctx.falseExpr();
        break;
      }
      ExprRef rr = reduceRec(ctx, e->children[1], memo);
      r = ctx.land(l, rr);
      break;
    }
    if (e->width == BoolWidth && e->binOp() == BinOpcode::Or) {
      ExprRef l = reduceRec(ctx, e->children[0], memo);
      if (l->isTrue()) {
        r = ctx.trueExpr();
        break;
      }
      ExprRef rr = reduceRec(ctx, e->children[1], memo);
      r = ctx.lor(l, rr);
      break;
    }
    r = ctx.binop(e->binOp(), reduceRec(ctx, e->children[0], memo),
                  reduceRec(ctx, e->children[1], memo));
    break;
  case ExprKind::Not:
    r = ctx.lnot(reduceRec(ctx, e->children[0], memo));
    break;
  case ExprKind::ZExt:
    r = ctx.zext(reduceRec(ctx, e->children[0], memo), e->width);
    break;
  case ExprKind::Cmp:
    r = ctx.cmp(e->cmpOp(), reduceRec(ctx, e->children[0], memo),
                reduceRec(ctx, e->children[1], memo));
    break;
  case ExprKind::Ite:
    r = ctx.ite(reduceRec(ctx, e->children[0], memo),
                reduceRec(ctx, e->children[1], memo),
                reduceRec(ctx, e->children[2], memo));
    break;
  case ExprKind::CountLessThan: {
    std::vector<ExprRef> guards;
    guards.reserve(e->children.size());
    for (ExprRef g : e->children)
      guards.push_back(reduceRec(ctx, g, memo));
    r = ctx.countLessThan(guards, e->value);
    break;
  }
  default:
    r = e;
    break;
  }
  memo.reduced.emplace(e->id, r);
  return r;
}

} // namespace detail

/// Formula reduction: constant folding with conjunction/disjunction
/// short-circuiting and memoization. The result agrees with the input on
/// every assignment over the shared symbols.
inline ExprRef reduce(ExprContext &ctx, ExprRef f, MemoTable &memo) {
  return detail::reduceRec(ctx, f, memo);
}

} // namespace speculeak
