#include <catch2/catch_amalgamated.hpp>

#include "speculeak/engine.hpp"
#include "support.hpp"

using namespace speculeak;

namespace {

struct Session {
  ExprContext ctx;
  Program program;
  AddressMap addrs;
  Engine engine;

  explicit Session(const std::string &text, ExploreLimits limits = {})
      : program(parseProgram(text, "test")),
        addrs(layoutMemory(program)),
        engine(ctx, program, addrs, limits) {}
};

// Runs the state until the next fork/halt, returning the final status.
StepStatus runStraight(Engine &engine, SymbolicState &s,
                       const ExploreHooks &hooks = {}) {
  for (;;) {
    StepOutcome o = engine.interpretAt(s, hooks);
    if (o.status != StepStatus::Continue)
      return o.status;
  }
}

} // namespace

TEST_CASE("concrete load emits one event with the laid-out address") {
  Session s("var S : u8[8]\nvar v : reg u8\nL0: load v = S[3]\nL1: halt\n");
  SymbolicState st = s.engine.initialState();
  REQUIRE(runStraight(s.engine, st) == StepStatus::Halted);
  REQUIRE(st.trace.size() == 1);
  REQUIRE(st.trace[0].addr->isConst());
  REQUIRE(st.trace[0].addr->constValue() == 3);
  REQUIRE(st.trace[0].kind == AccessKind::Load);
  REQUIRE_FALSE(st.trace[0].speculative);
  REQUIRE(st.trace[0].var == "S");
}

TEST_CASE("symbolic-index load records a bounds clause and a lazy value") {
  Session s("var S : u8[16]\nvar x : u8\nvar t : reg u8\nvar u : reg u8\n"
            "secret x\n"
            "L0: load t = x[0]\nL1: load u = S[t]\nL2: halt\n");
  SymbolicState st = s.engine.initialState();
  REQUIRE(runStraight(s.engine, st) == StepStatus::Halted);
  REQUIRE(st.trace.size() == 2);
  const MemoryEvent &ev = st.trace[1];
  REQUIRE_FALSE(ev.addr->isConst());
  REQUIRE(ev.addr->hasSymbol);
  // pc gained 0 <= t < 16 (the lower bound is vacuous for unsigned).
  REQUIRE_FALSE(st.pc->isTrue());
  REQUIRE(evaluate(st.pc, {{"x", 15}}) == 1);
  REQUIRE(evaluate(st.pc, {{"x", 16}}) == 0);
  // The loaded value selects the indexed cell.
  REQUIRE(evaluate(ev.addr, {{"x", 5}}) == s.addrs.addressOf("S") + 5);
  REQUIRE(st.hasSymbolicAddrEvent);
}

TEST_CASE("register assignments emit no memory events") {
  Session s("var i : reg u8\nL0: assign i = i + 1\nL1: assign i = i * 2\n"
            "L2: halt\n");
  SymbolicState st = s.engine.initialState();
  REQUIRE(runStraight(s.engine, st) == StepStatus::Halted);
  REQUIRE(st.trace.empty());
  REQUIRE(st.regs.at("i").expr->constValue() == 2);
}

TEST_CASE("out-of-bounds concrete access halts the path") {
  Session s("var S : u8[4]\nvar v : reg u8\nL0: load v = S[9]\nL1: halt\n");
  SymbolicState st = s.engine.initialState();
  REQUIRE(runStraight(s.engine, st) == StepStatus::OutOfBounds);
}

TEST_CASE("fork produces two feasible children, then-side first") {
  Session s("var x : u8\nvar t : reg u8\nsecret x\n"
            "L0: load t = x[0]\nL1: br t > 128 ? L2 : L3\n"
            "L2: halt\nL3: halt\n");
  SymbolicState st = s.engine.initialState();
  StepOutcome o;
  for (;;) {
    o = s.engine.interpretAt(st, {});
    if (o.status != StepStatus::Continue)
      break;
  }
  REQUIRE(o.status == StepStatus::Forked);
  REQUIRE(o.children.size() == 2);
  REQUIRE(o.children[0].ip == 2); // then target
  REQUIRE(o.children[1].ip == 3);
  // Children are independent: mutating one trace leaves the other intact.
  o.children[0].trace.push_back(o.children[0].trace[0]);
  REQUIRE(o.children[1].trace.size() == 1);
  // Sides carry pc ∧ c and pc ∧ ¬c.
  REQUIRE(evaluate(o.children[0].pc, {{"x", 200}}) == 1);
  REQUIRE(evaluate(o.children[0].pc, {{"x", 7}}) == 0);
  REQUIRE(evaluate(o.children[1].pc, {{"x", 7}}) == 1);
}

TEST_CASE("a literal-true condition leaves only the then child") {
  Session s("var a : reg u8\nL0: br 1 ? L1 : L2\nL1: halt\nL2: halt\n");
  SymbolicState st = s.engine.initialState();
  StepOutcome o = s.engine.interpretAt(st, {});
  // Constant conditions do not fork at all; the direction is deterministic.
  REQUIRE(o.status == StepStatus::Continue);
  REQUIRE(st.ip == 1);
}

TEST_CASE("a path condition implying the condition drops the else side") {
  Session s("var x : u8\nvar t : reg u8\nsecret x\n"
            "L0: load t = x[0]\n"
            "L1: br t > 100 ? L2 : L5\n"
            "L2: br t > 50 ? L3 : L4\n" // implied by t > 100
            "L3: halt\nL4: halt\nL5: halt\n");
  SymbolicState st = s.engine.initialState();
  StepOutcome first;
  for (;;) {
    first = s.engine.interpretAt(st, {});
    if (first.status != StepStatus::Continue)
      break;
  }
  REQUIRE(first.children.size() == 2);
  SymbolicState thenChild = first.children[0];
  StepOutcome second = s.engine.interpretAt(thenChild, {});
  REQUIRE(second.status == StepStatus::Forked);
  REQUIRE(second.children.size() == 1);
  REQUIRE(second.children[0].ip == 3);
}

TEST_CASE("walk-through program explores exactly two regular paths") {
  Session s(testprog::motivating);
  ExploreHooks hooks;
  std::vector<size_t> pathTraceLens;
  hooks.onPathEnd = [&](const SymbolicState &st, StepStatus status) {
    if (status == StepStatus::Halted)
      pathTraceLens.push_back(st.trace.size());
  };
  s.engine.explore(hooks);
  REQUIRE(s.engine.stats().pathsExplored == 2);
  // 254 table loads + the secret load + one store + the final load.
  REQUIRE(pathTraceLens == std::vector<size_t>{257, 257});
}

TEST_CASE("straight-line program explores one path") {
  Session s(testprog::straightline);
  s.engine.explore({});
  REQUIRE(s.engine.stats().pathsExplored == 1);
  REQUIRE(s.engine.stats().speculativeStates == 0);
}

TEST_CASE("exploration is deterministic") {
  auto run = [] {
    Session s(testprog::motivating);
    std::vector<std::pair<size_t, uint64_t>> ends;
    ExploreHooks hooks;
    hooks.onPathEnd = [&](const SymbolicState &st, StepStatus) {
      ends.emplace_back(st.trace.size(), st.steps);
    };
    s.engine.explore(hooks);
    return ends;
  };
  REQUIRE(run() == run());
}

TEST_CASE("path count matches concrete enumeration of an 8-bit secret") {
  // Two feasible branches over one secret byte: the symbolic path count must
  // equal the number of distinct concrete path signatures.
  std::string text = "var x : u8\nvar t : reg u8\nsecret x\n"
                     "L0: load t = x[0]\n"
                     "L1: br t > 200 ? L2 : L3\n"
                     "L2: halt\n"
                     "L3: br (t & 1) == 1 ? L4 : L5\n"
                     "L4: halt\nL5: halt\n";
  Session s(text);
  s.engine.explore({});

  // Concrete signatures: executed under every secret value.
  std::set<std::string> signatures;
  for (int x = 0; x < 256; ++x) {
    std::string sig;
    if (x > 200) {
      sig = "T";
    } else {
      sig = (x & 1) ? "FT" : "FF";
    }
    signatures.insert(sig);
  }
  REQUIRE(s.engine.stats().pathsExplored == signatures.size());
}

TEST_CASE("path soundness: pc models drive the concrete path") {
  // For each explored path, a model of its pc executed concretely follows
  // exactly that branch sequence.
  Session s(testprog::motivating);
  struct PathInfo {
    ExprRef pc;
    size_t finalIp;
  };
  std::vector<PathInfo> paths;
  ExploreHooks hooks;
  hooks.onPathEnd = [&](const SymbolicState &st, StepStatus status) {
    if (status == StepStatus::Halted)
      paths.push_back({st.pc, st.ip});
  };
  s.engine.explore(hooks);
  REQUIRE(paths.size() == 2);

  EnumerationSolver solver(s.ctx);
  for (const PathInfo &p : paths) {
    SolveResult r = solver.check(p.pc);
    REQUIRE(r.isSat());
    uint64_t x = r.model.at("x");
    // Concrete execution of the walk-through program.
    bool thenSide = x > 128;
    // Path ending at L11 via the then side has pc x > 128.
    ExprRef pcThen = p.pc;
    bool pcSaysThen = evaluate(s.ctx.cmp(CmpOpcode::Ugt,
                                         s.ctx.symbol("x", 8),
                                         s.ctx.constant(8, 128)),
                               r.model) == 1;
    REQUIRE(pcSaysThen == thenSide);
    (void)pcThen;
  }
}

TEST_CASE("store with symbolic index forks over feasible cells") {
  Session s("var A : u8[4]\nvar x : u8\nvar t : reg u8\nsecret x\n"
            "L0: load t = x[0]\n"
            "L1: store A[t & 3] = 7\n"
            "L2: halt\n");
  s.engine.explore({});
  REQUIRE(s.engine.stats().pathsExplored == 4);
}

TEST_CASE("store fork beyond the threshold truncates with unknown flag") {
  ExploreLimits limits;
  limits.storeForkThreshold = 4;
  Session s("var A : u8[8]\nvar x : u8\nvar t : reg u8\nsecret x\n"
            "L0: load t = x[0]\n"
            "L1: store A[t & 7] = 7\n"
            "L2: halt\n",
            limits);
  s.engine.explore({});
  REQUIRE(s.engine.stats().pathsExplored == 0);
  REQUIRE(s.engine.stats().unknownPaths == 1);
}

TEST_CASE("event org flag matches the emitting state's kind") {
  Session s(testprog::motivating);
  ExploreHooks hooks;
  bool sawEvents = false;
  hooks.onPathEnd = [&](const SymbolicState &st, StepStatus) {
    for (const MemoryEvent &ev : st.trace) {
      sawEvents = true;
      REQUIRE(ev.speculative == (ev.window != 0));
    }
  };
  s.engine.explore(hooks);
  REQUIRE(sawEvents);
}

TEST_CASE("per-branch revisit cap truncates runaway symbolic loops") {
  ExploreLimits limits;
  limits.branchRevisitCap = 8;
  // A loop whose exit depends on the secret forks every iteration.
  Session s("var x : u8\nvar t : reg u8\nvar i : reg u8\nsecret x\n"
            "L0: load t = x[0]\n"
            "L1: assign i = 0\n"
            "L2: br i < t ? L3 : L5\n"
            "L3: assign i = i + 1\n"
            "L4: jmp L2\n"
            "L5: halt\n",
            limits);
  s.engine.explore({});
  REQUIRE(s.engine.stats().budgetTrips > 0);
  REQUIRE(s.engine.stats().pathsExplored > 0);
}

TEST_CASE("global step cap truncates infinite concrete loops") {
  ExploreLimits limits;
  limits.maxPathEvents = 100;
  Session s("var i : reg u8\nL0: assign i = 1\nL1: br i > 0 ? L0 : L2\n"
            "L2: halt\n",
            limits);
  s.engine.explore({});
  REQUIRE(s.engine.stats().pathsExplored == 0);
  REQUIRE(s.engine.stats().budgetTrips == 1);
}
