//===-- analysis.hpp - Per-event cache behavior analysis ------------------===//
//
// Before a regular state interprets a memory event, this module decides
// whether the event can expose a new cache behavior, builds the leak
// constraints over each misprediction window recorded in the trace, solves
// them, and assembles concrete witnesses. Every Sat result is replayed
// through the cache simulator before a witness is emitted; a replay mismatch
// is an encoding bug and raises InternalSoundnessError rather than being
// dropped.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <optional>

#include "speculeak/engine.hpp"
#include "speculeak/formula.hpp"
#include "speculeak/solver.hpp"

namespace speculeak {

class InternalSoundnessError : public std::runtime_error {
public:
  explicit InternalSoundnessError(const std::string &what)
      : std::runtime_error(what) {}
};

enum class Behavior : uint8_t { Divergent, Opposite };
enum class MustVerdict : uint8_t { Hit, Miss, Unknown };
enum class AnalysisMode : uint8_t { Base, Opt };

struct LeakWitness {
  int location = 0;     // source line of the leaking access
  std::string var;      // accessed variable
  uint32_t eventSeq = 0;
  uint32_t window = 0;  // misprediction window exposing the leak
  int mispredictedBranchLine = 0;
  Behavior behavior = Behavior::Divergent;
  Assignment primary;                  // flips vs the architectural verdict
  std::optional<Assignment> secondary; // agrees with it (Divergent only)
  bool archHit = false;        // architectural must-verdict at the event
  bool primarySpecHit = false; // speculative-world verdict under primary
  bool secondarySpecHit = false;
  std::vector<ReplayEvent> concreteTrace; // view concretized under primary
};

struct AnalysisConfig {
  CacheConfig cache = cachePreset("M0");
  AnalysisMode mode = AnalysisMode::Opt;
  bool allPaths = false; // disable once-per-location dedup
  std::string primeSuffix = "'";
  uint64_t classifyEnumCap = 1u << 16;
};

/// True iff the event's address expression or stored value carries a secret
/// symbol.
inline bool taintRelated(const MemoryEvent &ev) {
  return ev.addr->hasSymbol || ev.valueTainted;
}

/// Architectural must-behavior of the view's target under pc: Hit when the
/// hit condition is implied, Miss when it is unsatisfiable, Unknown when the
/// behavior is input-dependent (a leakage-free-premise violation).
inline MustVerdict mustBehavior(ExprContext &ctx, ExprRef etaPrime, ExprRef pc,
                                EnumerationSolver &solver) {
  if (etaPrime->isConst())
    return etaPrime->value ? MustVerdict::Hit : MustVerdict::Miss;
  SolveResult notHit = solver.check(ctx.lnot(etaPrime), pc);
  if (notHit.isUnsat())
    return MustVerdict::Hit;
  SolveResult hit = solver.check(etaPrime, pc);
  if (hit.isUnsat())
    return MustVerdict::Miss;
  return MustVerdict::Unknown;
}

struct AnalyzerStats {
  uint64_t eventsConsidered = 0;
  uint64_t eventsAnalyzed = 0;
  uint64_t premiseViolations = 0;
};

/// Session-confined analysis driver, invoked from the engine's memory-event
/// hook. Collects witnesses and statistics for the final report.
class Analyzer {
public:
  Analyzer(ExprContext &ctx, AnalysisConfig cfg)
      : ctx_(ctx), cfg_(std::move(cfg)), solver_(ctx) {}

  const std::vector<LeakWitness> &witnesses() const { return witnesses_; }
  const std::vector<std::string> &warnings() const { return warnings_; }
  SolverStats &solverStats() { return solver_.stats(); }
  const AnalyzerStats &stats() const { return stats_; }
  MemoTable &memo() { return memo_; }

  /// The engine hook: analyze `pending` against every misprediction window
  /// present in the state's trace.
  void onMemoryAccess(const SymbolicState &state, const MemoryEvent &pending) {
    if (state.kind != StateKind::Regular)
      return; // timing effects inside speculation are externally invisible
    ++stats_.eventsConsidered;
    if (!cfg_.allPaths && flaggedLocations_.count(pending.location))
      return;
    if (!taintRelated(pending) && !state.hasSymbolicAddrEvent)
      return; // verdict cannot depend on the secret
    std::vector<uint32_t> windows = windowsOf(state.trace);
    if (windows.empty())
      return; // no speculation, no new behavior
    ++stats_.eventsAnalyzed;
    for (uint32_t w : windows) {
      if (analyzeWindow(state, pending, w))
        break; // location flagged; later windows add nothing new
    }
  }

private:
  BuildMode buildMode() const {
    return cfg_.mode == AnalysisMode::Opt ? BuildMode::Optimized
                                          : BuildMode::Base;
  }

  bool analyzeWindow(const SymbolicState &state, const MemoryEvent &pending,
                     uint32_t window) {
    TraceView view = makeView(state.trace, pending, window);
    MemoTable *memo = cfg_.mode == AnalysisMode::Opt ? &memo_ : nullptr;
    ExprRef mu = buildMu(ctx_, view, cfg_.cache, buildMode(), memo);
    ExprRef etaPrime = buildEtaPrime(ctx_, view, cfg_.cache, buildMode(), memo);
    ExprRef pc = state.pc;

    MustVerdict must = mustBehavior(ctx_, etaPrime, pc, solver_);
    if (must == MustVerdict::Unknown) {
      ++stats_.premiseViolations;
      warnings_.push_back(
          "line " + std::to_string(pending.location) +
          ": architectural behavior depends on the secret input "
          "(leakage-free premise violated)");
      if (cfg_.mode == AnalysisMode::Opt)
        return false;
      return solveDivergent(state, view, mu, pc,
                            /*archHitKnown=*/std::nullopt);
    }
    bool archHit = must == MustVerdict::Hit;

    if (cfg_.mode == AnalysisMode::Opt)
      return analyzeOpt(state, view, mu, pc, archHit);
    return analyzeBase(state, view, mu, pc, archHit);
  }

  // Optimized pipeline: one flip query, then classification by concrete
  // replay over the secret domain (no extra solver formula).
  bool analyzeOpt(const SymbolicState &state, const TraceView &view,
                  ExprRef mu, ExprRef pc, bool archHit) {
    ExprRef thetaPrime = buildThetaPrime(ctx_, mu, archHit);
    thetaPrime = reduce(ctx_, thetaPrime, memo_);
    if (thetaPrime->isFalse())
      return false;
    SolveResult flip = solver_.check(thetaPrime, pc);
    if (!flip.isSat())
      return false;
    Assignment primary = completeModel(flip.model, view, pc);

    bool primarySpec = specVerdict(view, primary);
    if (primarySpec == archHit)
      throw InternalSoundnessError(
          "flip model does not flip at line " +
          std::to_string(view.targetEvent().location));

    // Classification: a second input with the architectural verdict makes it
    // a divergent pair; if the whole domain flips, the behavior is opposite.
    std::optional<Assignment> secondary =
        findAgreeingInput(view, pc, primary, archHit);
    return emitWitness(state, view, archHit, primary, primarySpec, secondary);
  }

  // Base pipeline: must-substituted opposite check first, then the two-input
  // divergence constraint, per the cheap-to-expensive query ordering.
  bool analyzeBase(const SymbolicState &state, const TraceView &view,
                   ExprRef mu, ExprRef pc, bool archHit) {
    ExprRef eta = buildEta(ctx_, view, cfg_.cache, buildMode(), nullptr);
    ExprRef agree = buildOppositeComplement(ctx_, eta, archHit);
    SolveResult agreeRes = solver_.check(agree, pc);
    if (agreeRes.isUnsat()) {
      // No input agrees with the architectural verdict: opposite behavior.
      SolveResult anyInput = solver_.check(pc);
      if (!anyInput.isSat())
        return false; // path condition itself unsatisfiable
      Assignment primary = completeModel(anyInput.model, view, pc);
      bool primarySpec = specVerdict(view, primary);
      if (primarySpec == archHit)
        throw InternalSoundnessError(
            "opposite claim contradicted by replay at line " +
            std::to_string(view.targetEvent().location));
      return emitWitness(state, view, archHit, primary, primarySpec,
                         std::nullopt);
    }
    return solveDivergent(state, view, mu, pc, archHit);
  }

  bool solveDivergent(const SymbolicState &state, const TraceView &view,
                      ExprRef mu, ExprRef pc, std::optional<bool> archHit) {
    DivergentEncoding enc = buildDivergent(ctx_, mu, pc, cfg_.primeSuffix);
    SolveResult r = solver_.check(enc.query, pc);
    if (!r.isSat())
      return false;
    Assignment primaryRaw, secondaryRaw;
    for (const auto &[name, value] : r.model) {
      if (name.size() > cfg_.primeSuffix.size() &&
          name.compare(name.size() - cfg_.primeSuffix.size(),
                       cfg_.primeSuffix.size(), cfg_.primeSuffix) == 0)
        secondaryRaw[name.substr(0, name.size() - cfg_.primeSuffix.size())] =
            value;
      else
        primaryRaw[name] = value;
    }
    Assignment a = completeModel(primaryRaw, view, pc);
    Assignment b = completeModel(secondaryRaw, view, pc);
    bool specA = specVerdict(view, a);
    bool specB = specVerdict(view, b);
    if (specA == specB)
      throw InternalSoundnessError(
          "divergent model pair replays identically at line " +
          std::to_string(view.targetEvent().location));
    // Order the pair so `primary` is the one flipping vs the architectural
    // verdict when that verdict is known.
    bool wantPrimaryHit = archHit ? !*archHit : specA;
    if (specA != wantPrimaryHit) {
      std::swap(a, b);
      std::swap(specA, specB);
    }
    return emitWitness(state, view, archHit.value_or(specB), a, specA,
                       std::make_optional(b));
  }

  /// Looks for an input satisfying pc whose speculative-world verdict equals
  /// the architectural one, by enumerating the secret domain and replaying
  /// concretely. Falls back to one solver query past the enumeration cap.
  std::optional<Assignment> findAgreeingInput(const TraceView &view, ExprRef pc,
                                              const Assignment &exclude,
                                              bool archHit) {
    std::vector<ExprRef> syms = collectSymbols(view, pc);
    uint64_t domain = 1;
    bool capped = syms.empty();
    for (ExprRef s : syms) {
      if (s->width >= 64 || (domain << s->width) < domain) {
        capped = true;
        break;
      }
      domain <<= s->width;
      if (domain > cfg_.classifyEnumCap) {
        capped = true;
        break;
      }
    }
    if (!capped) {
      Assignment model;
      for (ExprRef s : syms)
        model[s->name] = 0;
      for (;;) {
        if (model != exclude && evaluate(pc, model) == 1 &&
            specVerdict(view, model) == archHit)
          return model;
        size_t i = 0;
        for (; i < syms.size(); ++i) {
          uint64_t &v = model[syms[i]->name];
          if (v < widthMask(syms[i]->width)) {
            ++v;
            break;
          }
          v = 0;
        }
        if (i == syms.size())
          return std::nullopt; // whole domain flips: opposite behavior
      }
    }
    // Domain too large to enumerate: ask the solver for an agreeing input.
    ExprRef mu = buildMu(ctx_, view, cfg_.cache, buildMode(), &memo_);
    SolveResult r = solver_.check(ctx_.eq(mu, ctx_.boolConst(archHit)), pc);
    if (!r.isSat())
      return std::nullopt;
    return completeModel(r.model, view, pc);
  }

  bool emitWitness(const SymbolicState &state, const TraceView &view,
                   bool archHit, const Assignment &primary, bool primarySpec,
                   const std::optional<Assignment> &secondary) {
    LeakWitness w;
    const MemoryEvent &target = view.targetEvent();
    w.location = target.location;
    w.var = target.var;
    w.eventSeq = target.seq;
    w.window = view.window;
    if (auto it = state.windowOrigins.find(view.window);
        it != state.windowOrigins.end())
      w.mispredictedBranchLine = it->second;
    w.behavior = secondary ? Behavior::Divergent : Behavior::Opposite;
    w.primary = primary;
    w.archHit = archHit;
    w.primarySpecHit = primarySpec;
    if (secondary) {
      w.secondary = secondary;
      w.secondarySpecHit = specVerdict(view, *secondary);
      if (w.secondarySpecHit == w.primarySpecHit)
        throw InternalSoundnessError(
            "witness pair does not diverge at line " +
            std::to_string(w.location));
    } else {
      // Opposite: the architectural and speculative verdicts must differ
      // under the same input.
      std::vector<bool> arch = replayView(view, primary, cfg_.cache, false);
      if (arch.back() != archHit)
        throw InternalSoundnessError(
            "architectural replay contradicts must-verdict at line " +
            std::to_string(w.location));
      if (arch.back() == w.primarySpecHit)
        throw InternalSoundnessError(
            "opposite witness does not flip at line " +
            std::to_string(w.location));
    }
    for (const MemoryEvent *ev : view.events)
      w.concreteTrace.push_back(
          {evaluate(ev->addr, primary), ev->speculative});
    witnesses_.push_back(std::move(w));
    flaggedLocations_.insert(target.location);
    return true;
  }

  bool specVerdict(const TraceView &view, const Assignment &model) {
    return replayView(view, model, cfg_.cache, true).back();
  }

  /// Model completion: symbols appearing in view addresses but absent from
  /// the query (folded away or unconstrained) get the lowest domain value.
  Assignment completeModel(const Assignment &model, const TraceView &view,
                           ExprRef pc) {
    Assignment out = model;
    for (ExprRef s : collectSymbols(view, pc))
      out.try_emplace(s->name, 0);
    return out;
  }

  std::vector<ExprRef> collectSymbols(const TraceView &view, ExprRef pc) {
    std::map<std::string, ExprRef> found;
    for (const MemoryEvent *ev : view.events)
      for (ExprRef s : symbolsOf(ev->addr))
        found.emplace(s->name, s);
    for (ExprRef s : symbolsOf(pc))
      found.emplace(s->name, s);
    std::vector<ExprRef> out;
    out.reserve(found.size());
    for (auto &[_, s] : found)
      out.push_back(s);
    return out;
  }

  ExprContext &ctx_;
  AnalysisConfig cfg_;
  EnumerationSolver solver_;
  MemoTable memo_;
  AnalyzerStats stats_;
  std::vector<LeakWitness> witnesses_;
  std::vector<std::string> warnings_;
  std::set<int> flaggedLocations_;
};

} // namespace speculeak
