//===-- speculation.hpp - Branch misprediction modeling -------------------===//
//
// Forks a speculative state down the mispredicted side of a branch, runs it
// under the window budget (ROB events, branch depth, stop-on-miss), and
// merges the accumulated memory events back into the regular child. The
// speculative run only ever contributes trace events; the regular state's
// symbolic memory is untouched.
//
// Assumption checking (an opt-mode filter): if every load feeding the branch
// condition was itself a must-hit within the window back to the previous
// branch, the predicate resolves too fast for speculation to reach the cache
// and the window is skipped.
//
//===----------------------------------------------------------------------===//
#pragma once

#include "speculeak/cache.hpp"
#include "speculeak/engine.hpp"

namespace speculeak {

enum class ResidencyVerdict : uint8_t { Cached, NotProvedCached };

struct SpeculationOptions {
  SpeculationBudget budget;  // defaults: ROB 32, depth 2, stop-on-miss
  bool assumptionCheck = false; // enabled in opt mode
};

/// Backward residency check over the architectural trace, limited to the
/// window since the previous branch event. Cached only when every feeding
/// load has a concrete address and replays as a hit at its own position;
/// anything unprovable stays NotProvedCached so no window is dropped
/// unsoundly.
inline ResidencyVerdict assumptionCheck(const SymbolicState &state,
                                        const std::set<uint32_t> &condFeeds,
                                        const CacheConfig &cacheCfg) {
  if (condFeeds.empty())
    return ResidencyVerdict::NotProvedCached;
  CacheSim sim(cacheCfg);
  std::map<uint32_t, bool> verdictBySeq;
  for (const MemoryEvent &ev : state.trace) {
    if (ev.window != 0)
      continue; // architectural prefix only
    if (!ev.addr->isConst())
      return ResidencyVerdict::NotProvedCached;
    verdictBySeq[ev.seq] = sim.access(ev.addr->constValue()).hit;
  }
  for (uint32_t feed : condFeeds) {
    if (feed < state.traceLenAtLastBranch)
      return ResidencyVerdict::NotProvedCached; // outside the scan window
    auto it = verdictBySeq.find(feed);
    if (it == verdictBySeq.end() || !it->second)
      return ResidencyVerdict::NotProvedCached;
  }
  return ResidencyVerdict::Cached;
}

/// A branch is worth mispredicting when its condition carries a loaded value
/// (a register-only condition resolves without a memory stall) and, with the
/// optimization enabled, when that value is not proved cache-resident.
inline bool shouldSpeculate(const SymbolicState &state, const BranchSite &site,
                            const SpeculationOptions &opts,
                            const CacheConfig &cacheCfg) {
  if (opts.budget.maxEvents == 0)
    return false;
  if (site.condFeeds.empty())
    return false;
  if (opts.assumptionCheck &&
      assumptionCheck(state, site.condFeeds, cacheCfg) ==
          ResidencyVerdict::Cached)
    return false;
  return true;
}

namespace detail {

/// True when the last event of the window must miss under the concrete
/// prefix (architectural events plus this window's own). Symbolic addresses
/// never trigger the stop.
inline bool lastEventMustMiss(const SymbolicState &spec,
                              const CacheConfig &cacheCfg) {
  if (spec.trace.empty())
    return false;
  const MemoryEvent &last = spec.trace.back();
  if (last.window != spec.currentWindow || !last.addr->isConst())
    return false;
  CacheSim sim(cacheCfg);
  bool verdict = true;
  for (const MemoryEvent &ev : spec.trace) {
    if (ev.window != 0 && ev.window != spec.currentWindow)
      continue;
    if (!ev.addr->isConst())
      return false;
    verdict = sim.access(ev.addr->constValue()).hit;
  }
  return !verdict;
}

/// Bounded straight-line run of a speculative state. Branches inside the
/// window consume branch budget, recursively mispredict while budget remains,
/// and then follow the then-side-first feasible direction.
inline void runWindow(Engine &engine, SymbolicState &spec,
                      const SpeculationOptions &opts,
                      const CacheConfig &cacheCfg) {
  ExprContext &ctx = engine.ctx();
  const Program &program = engine.program();
  ExploreHooks noHooks; // no analysis inside speculative execution
  for (;;) {
    if (spec.budget.eventsExhausted())
      return;
    if (spec.ip >= program.insts.size())
      return;
    const Instruction &inst = program.insts[spec.ip];
    if (inst.kind == Instruction::Kind::Branch) {
      if (spec.budget.consumedBranches >= spec.budget.maxBranchDepth)
        return; // depth dimension exhausted at this branch
      ++spec.budget.consumedBranches;
      ++spec.budget.consumedEvents;
      if (spec.budget.eventsExhausted())
        return;
      TrackedValue cond = engine.evalExpr(spec, *inst.cond);
      size_t chosenTarget;
      ExprRef chosenSide = nullptr, otherSide = nullptr;
      size_t otherTarget = 0;
      if (cond.expr->isConst()) {
        chosenTarget =
            cond.expr->value ? inst.thenTarget : inst.elseTarget;
      } else {
        ExprRef pcThen = ctx.land(spec.pc, cond.expr);
        ExprRef pcElse = ctx.land(spec.pc, ctx.lnot(cond.expr));
        bool thenOk = !pcThen->isFalse() && engine.satisfiable(pcThen);
        bool elseOk = !pcElse->isFalse() && engine.satisfiable(pcElse);
        if (!thenOk && !elseOk)
          return;
        if (thenOk) {
          chosenSide = cond.expr;
          chosenTarget = inst.thenTarget;
          if (elseOk) {
            otherSide = ctx.lnot(cond.expr);
            otherTarget = inst.elseTarget;
          }
        } else {
          chosenSide = ctx.lnot(cond.expr);
          chosenTarget = inst.elseTarget;
        }
      }
      // Nested misprediction of the unchosen side, sharing this window's
      // identity and budget.
      if (otherSide && !cond.feeds.empty()) {
        SymbolicState nested = spec;
        nested.pc = ctx.land(spec.pc, otherSide);
        nested.ip = otherTarget;
        ++engine.stats().speculativeStates;
        runWindow(engine, nested, opts, cacheCfg);
        spec.trace = std::move(nested.trace);
        spec.budget = nested.budget;
        if (spec.budget.eventsExhausted())
          return;
      }
      if (chosenSide)
        spec.pc = ctx.land(spec.pc, chosenSide);
      spec.ip = chosenTarget;
      continue;
    }
    StepOutcome o = engine.interpretAt(spec, noHooks);
    switch (o.status) {
    case StepStatus::Continue:
      break;
    default:
      return; // halt, fault, or modeling limit ends the window
    }
    if (opts.budget.stopOnMiss && !spec.trace.empty() &&
        spec.trace.back().window == spec.currentWindow &&
        lastEventMustMiss(spec, cacheCfg))
      return;
  }
}

} // namespace detail

/// Models one misprediction at `site` for the regular child that just took
/// the other direction: duplicates the child toward the mispredicted side
/// under the pre-branch path condition, runs it within the budget, and
/// adopts the extended trace. Returns the window id, or 0 if nothing ran.
inline uint32_t speculativeExplore(Engine &engine, SymbolicState &child,
                                   const BranchSite &site,
                                   const SpeculationOptions &opts,
                                   const CacheConfig &cacheCfg) {
  if (!shouldSpeculate(child, site, opts, cacheCfg))
    return 0;

  SymbolicState spec = child;
  spec.kind = StateKind::Speculative;
  spec.pc = engine.ctx().land(site.parentPc, site.otherSide);
  if (spec.pc->isFalse())
    return 0;
  spec.ip = site.otherTarget;
  spec.budget = opts.budget;
  spec.budget.consumedEvents = 0;
  spec.budget.consumedBranches = 0;
  spec.currentWindow = ++child.windowCount;
  ++engine.stats().speculativeStates;

  detail::runWindow(engine, spec, opts, cacheCfg);

  // Merge: the child adopts the trace (original events plus the window's
  // org=1 events); its symbolic memory Ω is untouched by construction.
  child.trace = std::move(spec.trace);
  child.hasSymbolicAddrEvent =
      child.hasSymbolicAddrEvent || spec.hasSymbolicAddrEvent;
  child.windowOrigins[spec.currentWindow] = site.line;
  return spec.currentWindow;
}

} // namespace speculeak
