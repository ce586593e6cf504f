//===-- engine.hpp - Depth-first symbolic execution ----------------------===//
//
// State representation, per-instruction interpretation, branch forking, and
// the exploration driver. Speculation modeling and cache-behavior analysis
// attach through ExploreHooks so the baseline engine stays a plain symbolic
// executor: with no hooks (or a zero speculation budget) explore() is exactly
// depth-first path enumeration with then-side-first ordering.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "speculeak/expr.hpp"
#include "speculeak/ir.hpp"
#include "speculeak/solver.hpp"
#include "speculeak/trace.hpp"

namespace speculeak {

inline constexpr Width AddrWidth = 32;

/// A register value plus the load events whose results flow into it. The
/// feed set is what "the branch condition relies on a memory access" means.
struct TrackedValue {
  ExprRef expr = nullptr;
  std::set<uint32_t> feeds; // trace seq numbers of feeding loads
};

enum class StateKind : uint8_t { Regular, Speculative };

struct SpeculationBudget {
  uint32_t maxEvents = 32;     // ROB size: instructions per window
  uint32_t maxBranchDepth = 2; // branch events a window may pass
  bool stopOnMiss = true;
  uint32_t consumedEvents = 0;
  uint32_t consumedBranches = 0;

  bool eventsExhausted() const { return consumedEvents >= maxEvents; }
};

struct SymbolicState {
  ExprRef pc = nullptr;
  size_t ip = 0;
  std::map<std::string, TrackedValue> regs;
  std::map<std::string, std::vector<ExprRef>> mem; // Ω: per-variable cells
  Trace trace;
  StateKind kind = StateKind::Regular;
  SpeculationBudget budget; // live counters while kind == Speculative
  uint32_t currentWindow = 0; // window id new events are tagged with
  uint32_t windowCount = 0;   // windows created on this path so far
  std::map<size_t, uint32_t> forkCounts; // per-branch-site two-sided forks
  uint64_t steps = 0;
  size_t traceLenAtLastBranch = 0; // assumption-check window start
  bool unknownFlag = false; // hit a modeling limit; results incomplete
  bool hasSymbolicAddrEvent = false; // some trace event has a symbolic address
  std::map<uint32_t, int> windowOrigins; // window id -> mispredicted branch line
};

enum class StepStatus : uint8_t {
  Continue,
  Forked,
  Halted,
  Infeasible,
  OutOfBounds,
  Truncated, // path or fork budget tripped
};

struct StepOutcome {
  StepStatus status = StepStatus::Continue;
  std::vector<SymbolicState> children; // Forked only
  std::string note;
};

struct BranchSite {
  ExprRef takenSide = nullptr;   // constraint the child just assumed
  ExprRef otherSide = nullptr;   // the mispredicted direction
  size_t otherTarget = 0;        // instruction index of the other side
  ExprRef parentPc = nullptr;    // pc before the branch constraint
  std::set<uint32_t> condFeeds;  // loads feeding the condition
  int line = 0;
  size_t site = 0; // instruction index of the branch
};

struct ExploreHooks {
  // Invoked on each regular two-sided fork child before it resumes; the
  // speculation model uses this to run and merge a mispredicted window.
  std::function<void(SymbolicState &child, const BranchSite &)> onBranch;
  // Invoked before a memory event of a regular state is interpreted.
  std::function<void(SymbolicState &, const MemoryEvent &pending)>
      onMemoryAccess;
  std::function<void(const SymbolicState &, StepStatus)> onPathEnd;
};

struct ExploreLimits {
  uint64_t maxPathEvents = 10000;
  uint32_t branchRevisitCap = 512;
  uint32_t storeForkThreshold = 256;
};

struct ExploreStats {
  uint64_t pathsExplored = 0;
  uint64_t speculativeStates = 0;
  uint64_t budgetTrips = 0;
  uint64_t outOfBoundsHalts = 0;
  uint64_t unknownPaths = 0;
  uint64_t steps = 0;
};

class Engine {
public:
  Engine(ExprContext &ctx, const Program &program, const AddressMap &addrs,
         ExploreLimits limits = ExploreLimits())
      : ctx_(ctx), program_(program), addrs_(addrs), limits_(limits),
        pathSolver_(ctx) {}

  ExprContext &ctx() { return ctx_; }
  const Program &program() const { return program_; }
  const AddressMap &addressMap() const { return addrs_; }
  ExploreStats &stats() { return stats_; }
  const ExploreLimits &limits() const { return limits_; }

  /// Initial state: concrete public values, symbolic sensitive bytes.
  SymbolicState initialState() {
    SymbolicState s;
    s.pc = ctx_.trueExpr();
    for (const VarDecl &d : program_.decls) {
      uint64_t init = 0;
      if (auto it = program_.publicInit.find(d.name);
          it != program_.publicInit.end())
        init = it->second;
      if (d.isRegister) {
        s.regs[d.name] = {ctx_.constant(d.width, init), {}};
        continue;
      }
      bool secret = program_.sensitive.count(d.name) > 0;
      std::vector<ExprRef> cells;
      if (d.isArray()) {
        cells.reserve(d.arrayLen);
        for (uint32_t i = 0; i < d.arrayLen; ++i)
          cells.push_back(secret ? ctx_.symbol(d.name + "[" +
                                                   std::to_string(i) + "]",
                                               8)
                                 : ctx_.constant(8, init));
      } else {
        cells.push_back(secret ? ctx_.symbol(d.name, d.width)
                               : ctx_.constant(d.width, init));
      }
      s.mem[d.name] = std::move(cells);
    }
    return s;
  }

  /// Evaluates an IR expression over the state's registers.
  TrackedValue evalExpr(const SymbolicState &s, const IrExpr &e) {
    switch (e.kind) {
    case IrExpr::Kind::Lit:
      return {ctx_.constant(e.width, e.lit), {}};
    case IrExpr::Kind::Ref: {
      auto it = s.regs.find(e.ref);
      if (it == s.regs.end())
        throw std::logic_error("unknown register " + e.ref);
      return it->second;
    }
    case IrExpr::Kind::Unary: {
      TrackedValue a = evalExpr(s, *e.lhs);
      ExprRef r = e.op == IrOp::LNot
                      ? ctx_.lnot(a.expr)
                      : ctx_.binop(BinOpcode::Sub,
                                   ctx_.constant(e.width, 0), a.expr);
      return {r, std::move(a.feeds)};
    }
    case IrExpr::Kind::Binary: {
      TrackedValue a = evalExpr(s, *e.lhs);
      TrackedValue b = evalExpr(s, *e.rhs);
      a.feeds.insert(b.feeds.begin(), b.feeds.end());
      ExprRef r = nullptr;
      switch (e.op) {
      case IrOp::Add:
        r = ctx_.binop(BinOpcode::Add, a.expr, b.expr);
        break;
      case IrOp::Sub:
        r = ctx_.binop(BinOpcode::Sub, a.expr, b.expr);
        break;
      case IrOp::Mul:
        r = ctx_.binop(BinOpcode::Mul, a.expr, b.expr);
        break;
      case IrOp::BitAnd:
        r = ctx_.binop(BinOpcode::And, a.expr, b.expr);
        break;
      case IrOp::BitOr:
        r = ctx_.binop(BinOpcode::Or, a.expr, b.expr);
        break;
      case IrOp::BitXor:
        r = ctx_.binop(BinOpcode::Xor, a.expr, b.expr);
        break;
      case IrOp::Shl:
        r = ctx_.binop(BinOpcode::Shl, a.expr, b.expr);
        break;
      case IrOp::Shr:
        r = ctx_.binop(BinOpcode::LShr, a.expr, b.expr);
        break;
      case IrOp::Lt:
        r = ctx_.cmp(CmpOpcode::Ult, a.expr, b.expr);
        break;
      case IrOp::Le:
        r = ctx_.cmp(CmpOpcode::Ule, a.expr, b.expr);
        break;
      case IrOp::Gt:
        r = ctx_.cmp(CmpOpcode::Ugt, a.expr, b.expr);
        break;
      case IrOp::Ge:
        r = ctx_.cmp(CmpOpcode::Uge, a.expr, b.expr);
        break;
      case IrOp::Eq:
        r = ctx_.eq(a.expr, b.expr);
        break;
      case IrOp::Ne:
        r = ctx_.ne(a.expr, b.expr);
        break;
      case IrOp::LAnd:
        r = ctx_.land(a.expr, b.expr);
        break;
      case IrOp::LOr:
        r = ctx_.lor(a.expr, b.expr);
        break;
      default:
        throw std::logic_error("bad binary op");
      }
      return {r, std::move(a.feeds)};
    }
    }
    throw std::logic_error("bad expr kind");
  }

  bool satisfiable(ExprRef pc) {
    SolveResult r = pathSolver_.check(pc);
    return !r.isUnsat(); // Unknown explores conservatively
  }

  /// Up to two children with pc ∧ c and pc ∧ ¬c; infeasible sides are
  /// dropped silently. Children inherit trace and memory by value.
  std::vector<SymbolicState> forkBranch(const SymbolicState &s, ExprRef cond,
                                        size_t thenTarget, size_t elseTarget) {
    std::vector<SymbolicState> out;
    ExprRef notCond = ctx_.lnot(cond);
    ExprRef pcThen = ctx_.land(s.pc, cond);
    ExprRef pcElse = ctx_.land(s.pc, notCond);
    if (!pcThen->isFalse() && satisfiable(pcThen)) {
      SymbolicState c = s;
      c.pc = pcThen;
      c.ip = thenTarget;
      out.push_back(std::move(c));
    }
    if (!pcElse->isFalse() && satisfiable(pcElse)) {
      SymbolicState c = s;
      c.pc = pcElse;
      c.ip = elseTarget;
      out.push_back(std::move(c));
    }
    return out;
  }

  /// Interprets the instruction at s.ip. Mutates s for straight-line events;
  /// returns children for two-way branches and symbolic-index store forks.
  StepOutcome interpretAt(SymbolicState &s, const ExploreHooks &hooks) {
    if (s.ip >= program_.insts.size())
      return {StepStatus::Halted, {}, "fell off program end"};
    const Instruction &inst = program_.insts[s.ip];
    ++s.steps;
    ++stats_.steps;
    if (s.kind == StateKind::Speculative)
      ++s.budget.consumedEvents;

    switch (inst.kind) {
    case Instruction::Kind::Halt:
      return {StepStatus::Halted, {}, ""};

    case Instruction::Kind::Jump:
      s.ip = inst.jumpTarget;
      return {};

    case Instruction::Kind::Assign: {
      TrackedValue v = evalExpr(s, *inst.value);
      s.regs[inst.dst] = std::move(v);
      ++s.ip;
      return {};
    }

    case Instruction::Kind::Load:
    case Instruction::Kind::Store:
      return interpretMemory(s, inst, hooks);

    case Instruction::Kind::Branch: {
      TrackedValue cond = evalExpr(s, *inst.cond);
      s.traceLenAtLastBranch = s.trace.size();
      if (cond.expr->isConst()) {
        s.ip = cond.expr->value ? inst.thenTarget : inst.elseTarget;
        return {};
      }
      if (++s.forkCounts[s.ip] > limits_.branchRevisitCap) {
        ++stats_.budgetTrips;
        return {StepStatus::Truncated, {}, "branch revisit cap"};
      }
      ExprRef parentPc = s.pc;
      std::vector<SymbolicState> children =
          forkBranch(s, cond.expr, inst.thenTarget, inst.elseTarget);
      if (children.empty())
        return {StepStatus::Infeasible, {}, ""};
      if (children.size() == 2 && s.kind == StateKind::Regular &&
          hooks.onBranch) {
        for (SymbolicState &child : children) {
          BranchSite site;
          bool tookThen = child.ip == inst.thenTarget;
          site.takenSide = tookThen ? cond.expr : ctx_.lnot(cond.expr);
          site.otherSide = tookThen ? ctx_.lnot(cond.expr) : cond.expr;
          site.otherTarget = tookThen ? inst.elseTarget : inst.thenTarget;
          site.parentPc = parentPc;
          site.condFeeds = cond.feeds;
          site.line = inst.line;
          site.site = s.ip;
          hooks.onBranch(child, site);
          child.traceLenAtLastBranch = child.trace.size();
        }
      }
      StepOutcome o;
      o.status = StepStatus::Forked;
      o.children = std::move(children);
      return o;
    }
    }
    return {StepStatus::Halted, {}, "unreachable"};
  }

  /// Depth-first exploration, then-side first. Hook order per memory event:
  /// analysis first, then the event lands in the trace.
  void explore(const ExploreHooks &hooks) {
    std::vector<SymbolicState> stack;
    stack.push_back(initialState());
    while (!stack.empty()) {
      SymbolicState s = std::move(stack.back());
      stack.pop_back();
      for (;;) {
        if (s.steps >= limits_.maxPathEvents) {
          ++stats_.budgetTrips;
          endPath(s, StepStatus::Truncated, hooks);
          break;
        }
        StepOutcome o = interpretAt(s, hooks);
        if (o.status == StepStatus::Continue)
          continue;
        if (o.status == StepStatus::Forked) {
          // Push else-side first so the then-side child is explored next.
          for (auto it = o.children.rbegin(); it != o.children.rend(); ++it)
            stack.push_back(std::move(*it));
          break;
        }
        endPath(s, o.status, hooks);
        break;
      }
    }
  }

private:
  void endPath(const SymbolicState &s, StepStatus status,
               const ExploreHooks &hooks) {
    switch (status) {
    case StepStatus::Halted:
      ++stats_.pathsExplored;
      break;
    case StepStatus::OutOfBounds:
      ++stats_.outOfBoundsHalts;
      break;
    case StepStatus::Truncated:
      ++stats_.unknownPaths;
      break;
    default:
      break;
    }
    if (hooks.onPathEnd)
      hooks.onPathEnd(s, status);
  }

  StepOutcome interpretMemory(SymbolicState &s, const Instruction &inst,
                              const ExploreHooks &hooks) {
    const VarDecl *decl = program_.findDecl(inst.base);
    uint32_t len = decl->isArray() ? decl->arrayLen : 1;
    uint32_t baseAddr = addrs_.addressOf(inst.base);
    bool isLoad = inst.kind == Instruction::Kind::Load;

    TrackedValue idx = evalExpr(s, *inst.index);
    ExprRef idx32 = ctx_.zext(idx.expr, AddrWidth);

    if (idx32->isConst()) {
      if (idx32->value >= len) {
        ++stats_.outOfBoundsHalts;
        return {StepStatus::OutOfBounds, {},
                inst.base + "[" + std::to_string(idx32->value) + "] at line " +
                    std::to_string(inst.line)};
      }
      executeAccess(s, inst, static_cast<uint32_t>(idx32->value), baseAddr,
                    hooks);
      ++s.ip;
      return {};
    }

    // Symbolic index: loads stay lazy behind a bounds clause; stores fork
    // over the concrete cells so traces keep concrete store addresses.
    ExprRef bounds =
        ctx_.cmp(CmpOpcode::Ult, idx32, ctx_.constant(AddrWidth, len));
    if (isLoad) {
      ExprRef pc = ctx_.land(s.pc, bounds);
      if (pc->isFalse() || !satisfiable(pc))
        return {StepStatus::Infeasible, {}, "index bounds unsatisfiable"};
      s.pc = pc;
      ExprRef addr = ctx_.add(ctx_.constant(AddrWidth, baseAddr), idx32);
      MemoryEvent ev = makeEvent(s, inst, addr, AccessKind::Load, false);
      if (s.kind == StateKind::Regular && hooks.onMemoryAccess)
        hooks.onMemoryAccess(s, ev);
      s.trace.push_back(ev);
      s.hasSymbolicAddrEvent = true;
      // Loaded value: selection over the cells, exact under the bounds.
      const auto &cells = s.mem.at(inst.base);
      ExprRef val = cells[len - 1];
      for (uint32_t k = len - 1; k-- > 0;)
        val = ctx_.ite(ctx_.eq(idx32, ctx_.constant(AddrWidth, k)), cells[k],
                       val);
      s.regs[inst.dst] = {val, {ev.seq}};
      ++s.ip;
      return {};
    }

    if (len > limits_.storeForkThreshold) {
      s.unknownFlag = true;
      return {StepStatus::Truncated, {}, "symbolic store index over threshold"};
    }
    if (s.kind == StateKind::Speculative) {
      // A bounded window cannot fork; end the window conservatively.
      s.budget.consumedEvents = s.budget.maxEvents;
      return {StepStatus::Truncated, {}, "symbolic store in window"};
    }
    StepOutcome o;
    o.status = StepStatus::Forked;
    for (uint32_t k = 0; k < len; ++k) {
      ExprRef pinned =
          ctx_.land(s.pc, ctx_.eq(idx32, ctx_.constant(AddrWidth, k)));
      if (pinned->isFalse() || !satisfiable(pinned))
        continue;
      SymbolicState child = s;
      child.pc = pinned;
      executeAccess(child, inst, k, baseAddr, hooks);
      ++child.ip;
      o.children.push_back(std::move(child));
    }
    if (o.children.empty())
      return {StepStatus::Infeasible, {}, "store index bounds unsatisfiable"};
    return o;
  }

  void executeAccess(SymbolicState &s, const Instruction &inst,
                     uint32_t concreteIdx, uint32_t baseAddr,
                     const ExploreHooks &hooks) {
    bool isLoad = inst.kind == Instruction::Kind::Load;
    ExprRef addr = ctx_.constant(AddrWidth, baseAddr + concreteIdx);
    MemoryEvent ev = makeEvent(s, inst, addr,
                               isLoad ? AccessKind::Load : AccessKind::Store,
                               false);
    TrackedValue stored;
    if (!isLoad) {
      stored = evalExpr(s, *inst.value);
      ev.valueTainted = stored.expr->hasSymbol;
    }
    if (s.kind == StateKind::Regular && hooks.onMemoryAccess)
      hooks.onMemoryAccess(s, ev);
    s.trace.push_back(ev);
    auto &cells = s.mem.at(inst.base);
    if (isLoad)
      s.regs[inst.dst] = {cells[concreteIdx], {ev.seq}};
    else
      cells[concreteIdx] = stored.expr;
  }

  MemoryEvent makeEvent(const SymbolicState &s, const Instruction &inst,
                        ExprRef addr, AccessKind kind, bool valueTainted) {
    MemoryEvent ev;
    ev.seq = static_cast<uint32_t>(s.trace.size());
    ev.addr = addr;
    ev.kind = kind;
    ev.speculative = s.kind == StateKind::Speculative;
    ev.window = s.currentWindow;
    ev.location = inst.line;
    ev.var = inst.base;
    ev.valueTainted = valueTainted;
    return ev;
  }

  ExprContext &ctx_;
  const Program &program_;
  const AddressMap &addrs_;
  ExploreLimits limits_;
  EnumerationSolver pathSolver_;
  ExploreStats stats_;
};

} // namespace speculeak
