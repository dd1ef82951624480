#include "doctest.h"

#include <sstream>

#include "stepdbg/render.hpp"
#include "stepdbg/stepper.hpp"
#include "stepdbg/syntax.hpp"
#include "support/gen.hpp"

using namespace stepdbg;

namespace {

struct Trace {
  std::vector<std::string> states;
  std::vector<LastOp> ops;
  FinalOutcome outcome;
  std::string output;
};

Trace trace(const std::string& src, EvalOptions opts = {}) {
  Trace t;
  Program prog = parse_program(src);
  Expr e = program_to_expr(prog);
  t.states.push_back(to_string(e));
  std::ostringstream out;
  t.outcome = run(
      initial_env(), e,
      [&](const Expr&, const LastOp& op, const Expr& after) {
        t.ops.push_back(op);
        t.states.push_back(to_string(after));
      },
      opts, BuiltinContext{&out}, &prog.constructors);
  t.output = out.str();
  return t;
}

EvalOptions untyped() {
  EvalOptions o;
  o.no_typecheck = true;
  return o;
}

}  // namespace

TEST_CASE("arithmetic reduces right operand first when the left is a value") {
  auto t = trace("1 + 2 > 3 + 4");
  CHECK(t.states == std::vector<std::string>{"1 + 2 > 3 + 4", "1 + 2 > 7", "3 > 7", "false"});
  CHECK(t.ops[0].kind == LastOp::Arith);
  CHECK(t.ops[2].kind == LastOp::Comparison);
}

TEST_CASE("recursive factorial follows the textbook trace") {
  const std::string def = "let rec factorial n = if n = 1 then 1 else n * factorial (n - 1) in ";
  auto t = trace(def + "factorial 4");
  std::vector<std::string> expected = {
      def + "factorial 4",
      def + "let n = 4 in if n = 1 then 1 else n * factorial (n - 1)",
      def + "let n = 4 in if false then 1 else n * factorial (n - 1)",
      def + "let n = 4 in n * factorial (n - 1)",
      def + "let n = 4 in 4 * factorial (n - 1)",
      def + "4 * factorial (4 - 1)",
      def + "4 * factorial 3",
      def + "4 * (let n = 3 in if n = 1 then 1 else n * factorial (n - 1))",
      def + "4 * (let n = 3 in if false then 1 else n * factorial (n - 1))",
      def + "4 * (let n = 3 in n * factorial (n - 1))",
      def + "4 * (let n = 3 in 3 * factorial (n - 1))",
      def + "4 * (3 * factorial (3 - 1))",
      def + "4 * (3 * factorial 2)",
      def + "4 * (3 * (let n = 2 in if n = 1 then 1 else n * factorial (n - 1)))",
      def + "4 * (3 * (let n = 2 in if false then 1 else n * factorial (n - 1)))",
      def + "4 * (3 * (let n = 2 in n * factorial (n - 1)))",
      def + "4 * (3 * (let n = 2 in 2 * factorial (n - 1)))",
      def + "4 * (3 * (2 * factorial (2 - 1)))",
      def + "4 * (3 * (2 * factorial 1))",
      def + "4 * (3 * (2 * (let n = 1 in if n = 1 then 1 else n * factorial (n - 1))))",
      def + "4 * (3 * (2 * (let n = 1 in if true then 1 else n * factorial (n - 1))))",
      def + "4 * (3 * (2 * 1))",
      def + "4 * (3 * 2)",
      def + "4 * 6",
      "24",
  };
  CHECK(t.states == expected);
}

TEST_CASE("curried application builds lets, fast-curry applies at once") {
  auto slow = trace("(fun x y -> x + y) 4 5");
  CHECK(slow.states == std::vector<std::string>{
                           "(fun x y -> x + y) 4 5",
                           "(let x = 4 in fun y -> x + y) 5",
                           "(fun y -> let x = 4 in x + y) 5",
                           "let y = 5 in let x = 4 in x + y",
                           "let y = 5 in 4 + y",
                           "4 + 5",
                           "9",
                       });
  EvalOptions fast;
  fast.fast_curry = true;
  auto quick = trace("(fun x y -> x + y) 4 5", fast);
  CHECK(quick.states == std::vector<std::string>{
                            "(fun x y -> x + y) 4 5",
                            "let x = 4 in let y = 5 in x + y",
                            "let y = 5 in 4 + y",
                            "4 + 5",
                            "9",
                        });
}

TEST_CASE("division by zero raises and try catches it") {
  auto uncaught = trace("1 + 1 / (1 - 1)");
  CHECK(uncaught.states ==
        std::vector<std::string>{"1 + 1 / (1 - 1)", "1 + 1 / 0", "1 + raise Division_by_zero"});
  CHECK(uncaught.outcome.kind == FinalOutcome::Uncaught);
  CHECK(uncaught.outcome.exception == "Division_by_zero");

  auto caught = trace("try 1 + 1 / (1 - 1) with Division_by_zero -> 2 + 2");
  CHECK(caught.states == std::vector<std::string>{
                             "try 1 + 1 / (1 - 1) with Division_by_zero -> 2 + 2",
                             "try 1 + 1 / 0 with Division_by_zero -> 2 + 2",
                             "try 1 + raise Division_by_zero with Division_by_zero -> 2 + 2",
                             "2 + 2",
                             "4",
                         });
}

TEST_CASE("match drops failed cases from the front") {
  auto t = trace("match 1 + 2 with 4 -> 0 | 3 -> 1 + 2 | _ -> 1");
  CHECK(t.states == std::vector<std::string>{
                        "match 1 + 2 with 4 -> 0 | 3 -> 1 + 2 | _ -> 1",
                        "match 3 with 4 -> 0 | 3 -> 1 + 2 | _ -> 1",
                        "match 3 with 3 -> 1 + 2 | _ -> 1",
                        "1 + 2",
                        "3",
                    });
}

TEST_CASE("references show their contents") {
  auto t = trace("let x = ref 0 in x := !x + 1");
  CHECK(t.states == std::vector<std::string>{
                        "let x = ref 0 in x := !x + 1",
                        "let x = {contents = 0} in x := !x + 1",
                        "let x = {contents = 0} in x := 0 + 1",
                        "let x = {contents = 0} in x := 1",
                        "let x = {contents = 1} in ()",
                        "()",
                    });
}

TEST_CASE("fast-for loops print between steps") {
  EvalOptions o;
  o.fast_for = true;
  auto t = trace("for y = 0 + 1 to 6 - 1 do print_int y done", o);
  CHECK(t.states.size() == 9);
  CHECK(t.states[2] == "for y = 1 to 5 do print_int y done");
  CHECK(t.states[7] == "for y = 6 to 5 do print_int y done");
  CHECK(t.states.back() == "()");
  CHECK(t.output == "12345");
}

TEST_CASE("polymorphic operators cannot see a cons/append confusion") {
  auto t = trace("[1] :: [2] @ [3]", untyped());
  CHECK(t.outcome.kind == FinalOutcome::Value);
  CHECK(t.states.back() == "[[1]; 2; 3]");
}

TEST_CASE("run-time type errors under no-typecheck") {
  auto cmp = trace("1 < 2 < 3", untyped());
  CHECK(cmp.states == std::vector<std::string>{"1 < 2 < 3", "true < 3"});
  CHECK(cmp.outcome.kind == FinalOutcome::RunTimeTypeError);
  CHECK(cmp.outcome.message == "Comparison between values of differing types");

  auto cons = trace("(fun x y -> x :: y) 2 ['a']", untyped());
  CHECK(cons.states.back() == "let y = ['a'] in 2::y");
  CHECK(cons.outcome.message == "Cannot cons onto this list: differing element types");

  auto arith = trace("1 + false", untyped());
  CHECK(arith.outcome.kind == FinalOutcome::RunTimeTypeError);
}

TEST_CASE("ill-typed programs are internal errors when type checking is assumed") {
  CHECK_THROWS_AS(trace("1 + false"), InternalError);
}

TEST_CASE("comparing functions raises Invalid_argument") {
  auto t = trace("(fun x -> x) = (fun y -> y)");
  CHECK(t.outcome.kind == FinalOutcome::Uncaught);
  CHECK(t.outcome.exception == "Invalid_argument");
  CHECK(to_string(t.outcome.payload) == "\"compare: functional value\"");
}

TEST_CASE("exhaustion raises Match_failure") {
  auto t = trace("match 3 with 1 -> 2");
  CHECK(t.outcome.kind == FinalOutcome::Uncaught);
  CHECK(t.outcome.exception == "Match_failure");
}

TEST_CASE("failwith carries its message") {
  auto t = trace("failwith \"bad\"");
  CHECK(t.outcome.exception == "Failure");
  CHECK(to_string(t.outcome.payload) == "\"bad\"");
}

TEST_CASE("arithmetic wraps on overflow") {
  auto t = trace("4611686018427387904 * 4");
  CHECK(t.states.back() == "0");
}

TEST_CASE("boolean operators short-circuit") {
  auto t = trace("false && (1 / 0 = 1)");
  CHECK(t.states.back() == "false");
  CHECK(t.ops.size() == 1);
  CHECK(t.ops[0].kind == LastOp::Boolean);
}

TEST_CASE("step limit stops runaway programs") {
  EvalOptions o;
  o.max_steps = 50;
  CHECK_THROWS_AS(trace("let rec f x = f x in f 1", o), StepLimitExceeded);
}

TEST_CASE("the last op of each step is classified") {
  auto t = trace("let x = 1 in if x < 2 && true then print_int x else ()");
  std::vector<LastOp::Kind> kinds;
  for (auto& op : t.ops) kinds.push_back(op.kind);
  CHECK(std::count(kinds.begin(), kinds.end(), LastOp::Comparison) == 1);
  CHECK(std::count(kinds.begin(), kinds.end(), LastOp::Boolean) == 1);
  CHECK(std::count(kinds.begin(), kinds.end(), LastOp::IfBool) == 1);
  CHECK(std::count(kinds.begin(), kinds.end(), LastOp::InsideBuiltIn) == 1);
  CHECK(t.output == "1");
}

TEST_CASE("peek predicts the next step without effects") {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    gen::SourceGen g(seed);
    Expr e = parse_expr(g.program(4));
    Env env = initial_env();
    std::ostringstream out;
    Stepper s({}, BuiltinContext{&out});
    for (int n = 0; n < 5000 && !is_value(e); ++n) {
      std::string before = out.str();
      PeekResult p = s.peek(env, e);
      CHECK(out.str() == before);
      StepOutcome o = s.eval_step(env, e);
      if (o.kind != StepOutcome::Next) break;
      CHECK(o.op == p.op);
      e = o.expr;
    }
  }
}

TEST_CASE("peek on a value is an error") {
  Stepper s({}, {});
  CHECK_THROWS_AS(s.peek(initial_env(), int_(3)), PeekOnValue);
}

TEST_CASE("evaluation is deterministic") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    gen::SourceGen g1(seed), g2(seed);
    auto a = trace(g1.program(4));
    auto b = trace(g2.program(4));
    CHECK(a.states == b.states);
    CHECK(a.output == b.output);
  }
}

TEST_CASE("every intermediate state parses back") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    gen::SourceGen g(seed);
    auto t = trace(g.program(4));
    for (auto& s : t.states) {
      CAPTURE(s);
      CHECK_NOTHROW(parse_expr(s));
    }
  }
}
