//===-- solver.hpp - Satisfiability over secret-input bytes ---------------===//
//
// Reference backend: exact bounded enumeration of the secret bytes' joint
// domain. Desk-scale secrets (1-4 bytes) make enumeration exact and
// dependency-free; the SmtTextAdapter seam below allows swapping in an
// external SMT engine without touching callers.
//
// Two-input ("divergent") queries double the symbol set with a primed copy.
// The backend recognizes that shape - conjuncts over the primed symbols that
// are a pure renaming of the unprimed ones, plus a distinctness clause and a
// single cross-world disequality - and solves it by enumerating the unprimed
// domain once, bucketing models by the cross-world term's value.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "speculeak/expr.hpp"

namespace speculeak {

struct SolveResult {
  enum class Status : uint8_t { Sat, Unsat, Unknown };
  Status status = Status::Unknown;
  Assignment model; // covers every symbol of the query when Sat
  std::string reason;

  bool isSat() const { return status == Status::Sat; }
  bool isUnsat() const { return status == Status::Unsat; }

  static SolveResult sat(Assignment m) {
    return {Status::Sat, std::move(m), ""};
  }
  static SolveResult unsat() { return {Status::Unsat, {}, ""}; }
  static SolveResult unknown(std::string why) {
    return {Status::Unknown, {}, std::move(why)};
  }
};

struct SolverStats {
  uint64_t queries = 0;
  uint64_t formulaNodes = 0; // sum of query DAG sizes
  uint64_t modelsTried = 0;
  uint64_t millis = 0;
};

struct SolverOptions {
  uint64_t timeoutMs = 30000;
  uint32_t maxDomainBits = 20;
  // Optional restriction of every symbol's enumeration range.
  std::optional<std::pair<uint64_t, uint64_t>> domainMask;
  std::string primeSuffix = "'";
};

class EnumerationSolver {
public:
  using Options = SolverOptions;

  EnumerationSolver(ExprContext &ctx, Options opts = Options())
      : ctx_(ctx), opts_(std::move(opts)) {}

  SolverStats &stats() { return stats_; }
  const Options &options() const { return opts_; }

  /// Decides f ∧ assumptions. Sat models are evaluated against the query
  /// before being returned; Unsat is exact within the enumeration budget.
  SolveResult check(ExprRef f, ExprRef assumptions) {
    auto start = std::chrono::steady_clock::now();
    ExprRef query = ctx_.land(f, assumptions);
    ++stats_.queries;
    stats_.formulaNodes += dagSize(query);

    SolveResult r = checkInner(query, start);

    stats_.millis += static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start)
            .count());
    if (r.isSat() && evaluate(query, r.model) != 1)
      return SolveResult::unknown("internal: model failed self-check");
    return r;
  }

  SolveResult check(ExprRef f) { return check(f, ctx_.trueExpr()); }

private:
  using Clock = std::chrono::steady_clock;

  SolveResult checkInner(ExprRef query, Clock::time_point start) {
    if (query->isConst())
      return query->value ? SolveResult::sat({}) : SolveResult::unsat();

    std::vector<ExprRef> syms = symbolsOf(query);
    uint32_t totalBits = 0;
    for (ExprRef s : syms)
      totalBits += s->width;
    if (totalBits <= opts_.maxDomainBits)
      return enumerate(query, syms, start);

    if (auto r = tryTwoWorld(query, syms, start))
      return *r;
    return SolveResult::unknown("domain exceeds " +
                                std::to_string(opts_.maxDomainBits) + " bits");
  }

  std::pair<uint64_t, uint64_t> domainOf(ExprRef sym) const {
    uint64_t lo = 0, hi = widthMask(sym->width);
    if (opts_.domainMask) {
      lo = std::max(lo, opts_.domainMask->first);
      hi = std::min(hi, opts_.domainMask->second);
    }
    return {lo, hi};
  }

  // Plain odometer enumeration, lowest values first, symbols ordered by name.
  SolveResult enumerate(ExprRef query, const std::vector<ExprRef> &syms,
                        Clock::time_point start) {
    if (syms.empty())
      return evaluate(query, {}) ? SolveResult::sat({})
                                 : SolveResult::unsat();
    std::vector<std::pair<uint64_t, uint64_t>> dom;
    for (ExprRef s : syms) {
      dom.push_back(domainOf(s));
      if (dom.back().first > dom.back().second)
        return SolveResult::unsat(); // empty masked domain
    }
    Assignment model;
    std::vector<uint64_t> cur;
    for (size_t i = 0; i < syms.size(); ++i) {
      cur.push_back(dom[i].first);
      model[syms[i]->name] = dom[i].first;
    }
    uint64_t sinceCheck = 0;
    for (;;) {
      ++stats_.modelsTried;
      if (evaluate(query, model) == 1)
        return SolveResult::sat(model);
      if (++sinceCheck >= 1024) {
        sinceCheck = 0;
        if (timedOut(start))
          return SolveResult::unknown("timeout");
      }
      // advance odometer
      size_t i = 0;
      for (; i < syms.size(); ++i) {
        if (cur[i] < dom[i].second) {
          ++cur[i];
          model[syms[i]->name] = cur[i];
          break;
        }
        cur[i] = dom[i].first;
        model[syms[i]->name] = cur[i];
      }
      if (i == syms.size())
        return SolveResult::unsat();
    }
  }

  bool timedOut(Clock::time_point start) const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               Clock::now() - start)
               .count() > static_cast<int64_t>(opts_.timeoutMs);
  }

  static void flattenAnd(ExprRef e, std::vector<ExprRef> &out) {
    if (e->kind == ExprKind::BinOp && e->width == BoolWidth &&
        e->binOp() == BinOpcode::And) {
      flattenAnd(e->children[0], out);
      flattenAnd(e->children[1], out);
      return;
    }
    out.push_back(e);
  }

  static bool allSymbolsIn(ExprRef e, const std::set<std::string> &names) {
    for (ExprRef s : symbolsOf(e))
      if (!names.count(s->name))
        return false;
    return true;
  }

  // Recognize: conj = U ∧ P ∧ distinct ∧ (A ≠ B) with P = rename(U),
  // B = rename(A), where rename maps primed symbols to their base names.
  // Solved by bucketing unprimed models on eval(A).
  std::optional<SolveResult> tryTwoWorld(ExprRef query,
                                         const std::vector<ExprRef> &syms,
                                         Clock::time_point start) {
    const std::string &suf = opts_.primeSuffix;
    std::set<std::string> unprimed, primed;
    std::map<std::string, ExprRef> renameDown; // primed name -> base symbol
    for (ExprRef s : syms) {
      if (s->name.size() > suf.size() &&
          s->name.compare(s->name.size() - suf.size(), suf.size(), suf) == 0)
        primed.insert(s->name);
      else
        unprimed.insert(s->name);
    }
    if (primed.empty())
      return std::nullopt;
    uint32_t unprimedBits = 0;
    for (ExprRef s : syms) {
      if (!primed.count(s->name)) {
        unprimedBits += s->width;
        continue;
      }
      std::string base = s->name.substr(0, s->name.size() - suf.size());
      if (!unprimed.count(base))
        return std::nullopt;
      renameDown[s->name] = ctx_.symbol(base, s->width);
    }
    if (unprimedBits > opts_.maxDomainBits)
      return std::nullopt;

    std::vector<ExprRef> conj;
    flattenAnd(query, conj);
    std::vector<ExprRef> uParts, pParts, mixed;
    for (ExprRef c : conj) {
      bool hasP = !allSymbolsIn(c, unprimed);
      bool hasU = !allSymbolsIn(c, primed);
      if (!hasP)
        uParts.push_back(c);
      else if (!hasU)
        pParts.push_back(c);
      else
        mixed.push_back(c);
    }
    // Pick the cross-world disequality: the mixed Ne whose unprimed side is
    // a renaming of its primed side. Prefer the largest (the distinctness
    // clause over bare symbols also matches the shape).
    std::sort(mixed.begin(), mixed.end(), [](ExprRef a, ExprRef b) {
      return dagSize(a) > dagSize(b);
    });
    ExprRef a = nullptr;
    for (ExprRef c : mixed) {
      if (c->kind != ExprKind::Cmp || c->cmpOp() != CmpOpcode::Ne)
        continue;
      ExprRef l = c->children[0], r = c->children[1];
      if (!allSymbolsIn(l, unprimed) || !allSymbolsIn(r, primed))
        std::swap(l, r);
      if (!allSymbolsIn(l, unprimed) || !allSymbolsIn(r, primed))
        continue;
      if (substitute(ctx_, r, renameDown) == l) {
        a = l;
        break;
      }
    }
    if (!a)
      return std::nullopt;
    // The primed side constraints must be a renaming of the unprimed side.
    ExprRef uAll = ctx_.trueExpr();
    for (ExprRef c : uParts)
      uAll = ctx_.land(uAll, c);
    ExprRef pAll = ctx_.trueExpr();
    for (ExprRef c : pParts)
      pAll = ctx_.land(pAll, c);
    if (substitute(ctx_, pAll, renameDown) != uAll)
      return std::nullopt;
    // Remaining mixed conjuncts (the distinctness clause) are validated on
    // the combined model below.

    std::vector<ExprRef> uSyms;
    for (ExprRef s : syms)
      if (!primed.count(s->name))
        uSyms.push_back(s);
    std::vector<std::pair<uint64_t, uint64_t>> dom;
    for (ExprRef s : uSyms) {
      dom.push_back(domainOf(s));
      if (dom.back().first > dom.back().second)
        return SolveResult::unsat();
    }
    Assignment model;
    std::vector<uint64_t> cur;
    for (size_t i = 0; i < uSyms.size(); ++i) {
      cur.push_back(dom[i].first);
      model[uSyms[i]->name] = dom[i].first;
    }
    std::map<uint64_t, Assignment> buckets;
    uint64_t sinceCheck = 0;
    for (;;) {
      ++stats_.modelsTried;
      if (evaluate(uAll, model) == 1) {
        uint64_t v = evaluate(a, model);
        auto [it, fresh] = buckets.try_emplace(v, model);
        if (fresh && buckets.size() >= 2) {
          auto first = buckets.begin();
          auto second = std::next(first);
          Assignment combined = first->second;
          for (auto &[name, val] : second->second)
            combined[name + suf] = val;
          if (evaluate(query, combined) == 1)
            return SolveResult::sat(combined);
          return std::nullopt; // unexpected shape; fall back
        }
      }
      if (++sinceCheck >= 1024) {
        sinceCheck = 0;
        if (timedOut(start))
          return SolveResult::unknown("timeout");
      }
      size_t i = 0;
      for (; i < uSyms.size(); ++i) {
        if (cur[i] < dom[i].second) {
          ++cur[i];
          model[uSyms[i]->name] = cur[i];
          break;
        }
        cur[i] = dom[i].first;
        model[uSyms[i]->name] = cur[i];
      }
      if (i == uSyms.size())
        return SolveResult::unsat(); // at most one bucket: no divergence
    }
  }

  ExprContext &ctx_;
  Options opts_;
  SolverStats stats_;
};

} // namespace speculeak
