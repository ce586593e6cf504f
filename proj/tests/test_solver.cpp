#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "speculeak/smtlib.hpp"
#include "speculeak/solver.hpp"

using namespace speculeak;

TEST_CASE("trivial sat and unsat") {
  ExprContext ctx;
  EnumerationSolver solver(ctx);
  ExprRef x = ctx.symbol("x", 8);

  SolveResult r = solver.check(ctx.eq(x, ctx.constant(8, 5)));
  REQUIRE(r.isSat());
  REQUIRE(r.model.at("x") == 5);

  // x < 0 over unsigned bytes folds to false at construction.
  ExprRef lt0 = ctx.cmp(CmpOpcode::Ult, x, ctx.constant(8, 0));
  REQUIRE(lt0->isFalse());
  REQUIRE(solver.check(lt0).isUnsat());
}

TEST_CASE("models are lowest-value-first and satisfy assumptions") {
  ExprContext ctx;
  EnumerationSolver solver(ctx);
  ExprRef x = ctx.symbol("x", 8);
  ExprRef f = ctx.cmp(CmpOpcode::Ugt, x, ctx.constant(8, 10));
  ExprRef pc = ctx.cmp(CmpOpcode::Ult, x, ctx.constant(8, 100));
  SolveResult r = solver.check(f, pc);
  REQUIRE(r.isSat());
  REQUIRE(r.model.at("x") == 11);
}

TEST_CASE("enumeration is exact against a truth table") {
  ExprContext ctx;
  EnumerationSolver solver(ctx);
  std::mt19937 rng(99);
  for (int iter = 0; iter < 40; ++iter) {
    ExprRef a = ctx.symbol("a", 8);
    ExprRef b = ctx.symbol("b", 8);
    uint64_t k1 = rng() % 256, k2 = rng() % 256, k3 = rng() % 256;
    // (a ^ k1) + b == k2 && a < k3
    ExprRef f = ctx.land(
        ctx.eq(ctx.add(ctx.binop(BinOpcode::Xor, a, ctx.constant(8, k1)), b),
               ctx.constant(8, k2)),
        ctx.cmp(CmpOpcode::Ult, a, ctx.constant(8, k3)));
    bool expectSat = false;
    for (uint64_t va = 0; va < 256 && !expectSat; ++va)
      for (uint64_t vb = 0; vb < 256 && !expectSat; ++vb)
        expectSat = evaluate(f, {{"a", va}, {"b", vb}}) == 1;
    SolveResult r = solver.check(f);
    REQUIRE(r.isSat() == expectSat);
    REQUIRE(r.isUnsat() == !expectSat);
    if (r.isSat())
      REQUIRE(evaluate(f, r.model) == 1);
  }
}

TEST_CASE("domain mask restricts enumeration") {
  ExprContext ctx;
  EnumerationSolver::Options opts;
  opts.domainMask = {{10, 20}};
  EnumerationSolver solver(ctx, opts);
  ExprRef x = ctx.symbol("x", 8);
  REQUIRE(solver.check(ctx.eq(x, ctx.constant(8, 5))).isUnsat());
  REQUIRE(solver.check(ctx.eq(x, ctx.constant(8, 15))).isSat());
}

TEST_CASE("oversized domains come back unknown") {
  ExprContext ctx;
  EnumerationSolver::Options opts;
  opts.maxDomainBits = 8;
  EnumerationSolver solver(ctx, opts);
  ExprRef a = ctx.symbol("a", 8);
  ExprRef b = ctx.symbol("b", 8);
  SolveResult r = solver.check(ctx.eq(a, b));
  REQUIRE(r.status == SolveResult::Status::Unknown);
}

TEST_CASE("two-world queries solve by verdict bucketing") {
  ExprContext ctx;
  EnumerationSolver::Options opts;
  opts.maxDomainBits = 8; // force the primed-copy path for the 16-bit query
  EnumerationSolver solver(ctx, opts);

  ExprRef x = ctx.symbol("x", 8);
  ExprRef xp = ctx.symbol("x'", 8);
  // "verdict" differs: (x != 0) vs (x' != 0)
  ExprRef vu = ctx.ne(x, ctx.constant(8, 0));
  ExprRef vp = ctx.ne(xp, ctx.constant(8, 0));
  ExprRef distinct = ctx.ne(x, xp);
  ExprRef pc = ctx.cmp(CmpOpcode::Ult, x, ctx.constant(8, 200));
  ExprRef pcp = ctx.cmp(CmpOpcode::Ult, xp, ctx.constant(8, 200));

  ExprRef query =
      ctx.land(ctx.land(distinct, ctx.ne(vu, vp)), ctx.land(pc, pcp));
  SolveResult r = solver.check(query);
  REQUIRE(r.isSat());
  REQUIRE(r.model.at("x") == 0);
  REQUIRE(r.model.at("x'") == 1);

  // Constant verdict on both sides folds away before any solving.
  ExprRef same = ctx.cmp(CmpOpcode::Uge, x, ctx.constant(8, 0)); // true
  ExprRef samep = ctx.cmp(CmpOpcode::Uge, xp, ctx.constant(8, 0));
  ExprRef q2 =
      ctx.land(ctx.land(ctx.ne(x, xp), ctx.ne(same, samep)), ctx.land(pc, pcp));
  REQUIRE(q2->isFalse());
}

TEST_CASE("stats count queries and formula nodes") {
  ExprContext ctx;
  EnumerationSolver solver(ctx);
  ExprRef x = ctx.symbol("x", 8);
  ExprRef f = ctx.eq(x, ctx.constant(8, 3));
  solver.check(f);
  solver.check(f);
  REQUIRE(solver.stats().queries == 2);
  REQUIRE(solver.stats().formulaNodes == 2 * dagSize(f));
}

TEST_CASE("smtlib emission is well-formed") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef shared = ctx.add(x, ctx.constant(8, 1));
  ExprRef f = ctx.land(
      ctx.eq(shared, ctx.constant(8, 7)),
      ctx.countLessThan(
          {ctx.ne(shared, ctx.constant(8, 0)), ctx.eq(x, ctx.constant(8, 9))},
          2));
  std::string text = toSmtLib(f);
  REQUIRE(text.find("(set-logic QF_BV)") != std::string::npos);
  REQUIRE(text.find("(declare-const x (_ BitVec 8))") != std::string::npos);
  REQUIRE(text.find("(check-sat)") != std::string::npos);
  // The shared (x + 1) subterm is let-bound.
  REQUIRE(text.find("(let ((?t") != std::string::npos);
  size_t parens = 0;
  for (char c : text) {
    if (c == '(')
      ++parens;
    if (c == ')') {
      REQUIRE(parens > 0);
      --parens;
    }
  }
  REQUIRE(parens == 0);
}

TEST_CASE("solver response parsing") {
  SolveResult u = parseSmtResponse("unsat\n");
  REQUIRE(u.isUnsat());

  SolveResult s = parseSmtResponse(
      "sat\n((define-fun x () (_ BitVec 8) (_ bv5 8))\n"
      " (define-fun |S[2]| () (_ BitVec 8) #x1f))\n");
  REQUIRE(s.isSat());
  REQUIRE(s.model.at("x") == 5);
  REQUIRE(s.model.at("S[2]") == 0x1f);

  REQUIRE(parseSmtResponse("flibber\n").status ==
          SolveResult::Status::Unknown);
}
