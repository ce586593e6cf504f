#include <catch2/catch_amalgamated.hpp>

#include "speculeak/expr.hpp"

using namespace speculeak;

TEST_CASE("constants are interned and width-masked") {
  ExprContext ctx;
  ExprRef a = ctx.constant(8, 0x1ff);
  ExprRef b = ctx.constant(8, 0xff);
  REQUIRE(a == b);
  REQUIRE(a->constValue() == 0xff);
  REQUIRE(ctx.constant(64, ~uint64_t(0))->constValue() == ~uint64_t(0));
}

TEST_CASE("structural sharing makes equal trees pointer-equal") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef e1 = ctx.add(x, ctx.constant(8, 3));
  ExprRef e2 = ctx.add(ctx.symbol("x", 8), ctx.constant(8, 3));
  REQUIRE(e1 == e2);
  REQUIRE(e1->hasSymbol);
}

TEST_CASE("modular arithmetic wraps at the declared width") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef sum = ctx.add(x, ctx.constant(8, 1));
  REQUIRE(evaluate(sum, {{"x", 255}}) == 0);
  REQUIRE(evaluate(sum, {{"x", 41}}) == 42);

  ExprRef shl = ctx.binop(BinOpcode::Shl, x, ctx.constant(8, 9));
  REQUIRE(evaluate(shl, {{"x", 0xff}}) == 0); // shift past width
}

TEST_CASE("boolean factories short-circuit") {
  ExprContext ctx;
  ExprRef g = ctx.cmp(CmpOpcode::Ugt, ctx.symbol("x", 8), ctx.constant(8, 5));
  REQUIRE(ctx.land(ctx.falseExpr(), g) == ctx.falseExpr());
  REQUIRE(ctx.lor(ctx.trueExpr(), g) == ctx.trueExpr());
  REQUIRE(ctx.land(ctx.trueExpr(), g) == g);
  REQUIRE(ctx.lnot(ctx.lnot(g)) == g);
}

TEST_CASE("comparison folding on identical nodes") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 32);
  REQUIRE(ctx.eq(x, x)->isTrue());
  REQUIRE(ctx.ne(x, x)->isFalse());
  REQUIRE(ctx.cmp(CmpOpcode::Ult, ctx.constant(8, 3), ctx.constant(8, 4))
              ->isTrue());
}

TEST_CASE("count-less-than folds constant guards") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef g = ctx.eq(x, ctx.constant(8, 7));

  // All-constant guard lists fold to a constant verdict.
  REQUIRE(ctx.countLessThan({ctx.trueExpr(), ctx.falseExpr(), ctx.trueExpr()},
                            3) == ctx.trueExpr());
  REQUIRE(ctx.countLessThan({ctx.trueExpr(), ctx.trueExpr()}, 2) ==
          ctx.falseExpr());

  // True guards decrement the bound; false guards vanish.
  ExprRef clt = ctx.countLessThan({g, ctx.trueExpr(), ctx.falseExpr()}, 2);
  REQUIRE(clt->kind == ExprKind::CountLessThan);
  REQUIRE(clt->value == 1);
  REQUIRE(evaluate(clt, {{"x", 3}}) == 1);
  REQUIRE(evaluate(clt, {{"x", 7}}) == 0);
}

TEST_CASE("count-less-than evaluates the guard tally") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  std::vector<ExprRef> guards = {
      ctx.cmp(CmpOpcode::Ugt, x, ctx.constant(8, 10)),
      ctx.cmp(CmpOpcode::Ugt, x, ctx.constant(8, 20)),
      ctx.cmp(CmpOpcode::Ugt, x, ctx.constant(8, 30)),
  };
  ExprRef clt = ctx.countLessThan(guards, 3);
  REQUIRE(evaluate(clt, {{"x", 25}}) == 1); // 2 guards hold
  REQUIRE(evaluate(clt, {{"x", 40}}) == 0); // all 3 hold
}

TEST_CASE("missing symbol raises") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  REQUIRE_THROWS_AS(evaluate(x, {}), EvalError);
}

TEST_CASE("substitution rebuilds with sharing") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef y = ctx.symbol("y", 8);
  ExprRef e = ctx.add(x, ctx.constant(8, 1));
  ExprRef e2 = substitute(ctx, e, {{"x", y}});
  REQUIRE(e2 == ctx.add(y, ctx.constant(8, 1)));
  // Untouched expressions come back unchanged.
  REQUIRE(substitute(ctx, e, {{"z", y}}) == e);
}

TEST_CASE("symbol collection is ordered by name") {
  ExprContext ctx;
  ExprRef b = ctx.symbol("b", 8);
  ExprRef a = ctx.symbol("a", 8);
  ExprRef e = ctx.add(b, a);
  auto syms = symbolsOf(e);
  REQUIRE(syms.size() == 2);
  REQUIRE(syms[0]->name == "a");
  REQUIRE(syms[1]->name == "b");
}

TEST_CASE("dag size counts distinct nodes once") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef s = ctx.add(x, x); // x, add
  REQUIRE(dagSize(s) == 2);
  ExprRef t = ctx.add(s, s); // x, add, add2
  REQUIRE(dagSize(t) == 3);
}

TEST_CASE("zext widens and folds constants") {
  ExprContext ctx;
  ExprRef x = ctx.symbol("x", 8);
  ExprRef z = ctx.zext(x, 32);
  REQUIRE(z->width == 32);
  REQUIRE(ctx.zext(x, 8) == x);
  REQUIRE(ctx.zext(ctx.constant(8, 200), 32) == ctx.constant(32, 200));
  REQUIRE(evaluate(ctx.add(z, ctx.constant(32, 1000)), {{"x", 255}}) == 1255);
}
