#include "doctest.h"

#include "stepdbg/bytecode.hpp"
#include "stepdbg/stepper.hpp"
#include "stepdbg/syntax.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

using namespace stepdbg;

namespace {

const char* kDemo = "let x = 5 in if x = 4 then 1 else (fun x -> x + 1) 2";

CoreProg demo() { return lower(parse_expr(kDemo)); }

std::string without_empty(const Code& code) {
  std::string s = to_string(code);
  const std::string tail = "; EMPTY";
  REQUIRE(s.size() > tail.size());
  CHECK(s.substr(s.size() - tail.size()) == tail);
  return s.substr(0, s.size() - tail.size());
}

// Runs the machine and keeps every state.
std::vector<MachineState> states(const Code& code) {
  std::vector<MachineState> out = {initial_state(code)};
  while (!finished(out.back())) out.push_back(machine_step(out.back()));
  return out;
}

}  // namespace

TEST_CASE("lowering produces the core tree") {
  CHECK(describe(demo()) ==
        "Let (x, Int 5, If (Eq (Var (x, 1), Int 4), Int 1, "
        "Apply (Lambda (x, Op (Var (x, 1), Add, Int 1)), Int 2)))");
}

TEST_CASE("lowering rejects constructs outside the subset") {
  CHECK_THROWS_AS(lower(parse_expr("[1]")), UnsupportedConstruct);
  CHECK_THROWS_AS(lower(parse_expr("1 < 2")), UnsupportedConstruct);
  CHECK_THROWS_AS(lower(parse_expr("y + 1")), UnsupportedConstruct);
  CHECK_THROWS_AS(lower(parse_expr("let rec f x = x in f 1")), UnsupportedConstruct);
}

TEST_CASE("indices count enclosing binders") {
  auto p = lower(parse_expr("fun a -> fun b -> a + b"));
  CHECK(describe(p) == "Lambda (a, Lambda (b, Op (Var (a, 2), Add, Var (b, 1))))");
}

TEST_CASE("compiled demo program") {
  CHECK(without_empty(compile(demo())) ==
        "INT 5; LET; CLOSURE [INT 1; RETURN]; "
        "CLOSURE [CLOSURE [ACCESS 1; INT 1; OP +; RETURN]; INT 2; APPLY; RETURN]; "
        "ACCESS 1; INT 4; EQ; IF; ENDLET");
}

TEST_CASE("listing indents closure bodies") {
  CHECK(listing(compile(demo())) ==
        "INT 5\nLET\nCLOSURE\n  INT 1\n  RETURN\nCLOSURE\n  CLOSURE\n    ACCESS 1\n    INT 1\n"
        "    OP +\n    RETURN\n  INT 2\n  APPLY\n  RETURN\nACCESS 1\nINT 4\nEQ\nIF\nENDLET\nEMPTY\n");
}

TEST_CASE("compiled code ends in its only EMPTY") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    gen::CoreGen g(seed);
    Code code = compile(g.program());
    size_t empties = 0;
    for (auto& i : code) empties += i.kind == Instr::EMPTY;
    CHECK(empties == 1);
    CHECK(code.back().kind == Instr::EMPTY);
  }
}

TEST_CASE("machine states of the demo program") {
  auto ss = states(compile(demo()));
  REQUIRE(ss.size() == 18);
  CHECK(to_string(ss.back()) == "code: EMPTY\nenv: {}\nstack: {3}");
  CHECK(to_string(ss[7]) ==
        "code: IF; ENDLET; EMPTY\nenv: {5}\n"
        "stack: {false; [CLOSURE [ACCESS 1; INT 1; OP +; RETURN]; INT 2; APPLY; RETURN]{5}; "
        "[INT 1; RETURN]{5}}");
  CHECK(to_string(ss[11]) ==
        "code: ACCESS 1; INT 1; OP +; RETURN\nenv: {2; 5}\nstack: {[RETURN]; {5}; [ENDLET; EMPTY]; {5}}");
  CHECK(to_string(ss[16]) == "code: ENDLET; EMPTY\nenv: {5}\nstack: {3}");
  CHECK(to_string(machine_run(compile(demo()))) == "3");
}

TEST_CASE("decompiling fresh code gives the program back") {
  CHECK(equal(decompile(compile(demo())), demo()));
}

TEST_CASE("decompiling a partly run state") {
  auto ss = states(compile(demo()));
  CHECK(to_source(decompile(ss[7])) == "if false then 1 else (fun x -> x + 1) 2");
  CHECK(to_source(decompile(ss[5])) == "if 5 = 4 then 1 else (fun x -> x + 1) 2");
  CHECK(to_source(decompile(ss[12])) == "2 + 1");
}

TEST_CASE("free variables decompile to their machine values") {
  auto p = lower(parse_expr("let x = 5 in let f = fun y -> y + x in f (x * 2)"));
  auto ss = states(compile(p));
  bool seen = false;
  for (auto& s : ss)
    if (to_source(decompile(s)) == "(fun y -> y + 5) (5 * 2)") seen = true;
  CHECK(seen);
}

TEST_CASE("bytecode trace of the demo program") {
  CHECK(bytecode_trace(demo()) == std::vector<std::string>{
                                         "let x = 5 in if x = 4 then 1 else (fun x -> x + 1) 2",
                                         "if 5 = 4 then 1 else (fun x -> x + 1) 2",
                                         "if false then 1 else (fun x -> x + 1) 2",
                                         "(fun x -> x + 1) 2",
                                         "2 + 1",
                                         "3",
                                     });
}

TEST_CASE("trivial programs") {
  auto five = core::mk(core::Int{5});
  CHECK(bytecode_trace(five) == std::vector<std::string>{"5"});
  CHECK(to_string(machine_run(compile(five))) == "5");
  auto t = core::mk(core::If{core::mk(core::Bool{true}), core::mk(core::Int{1}),
                             core::mk(core::Int{2})});
  CHECK(to_string(machine_run(compile(t))) == "1");
}

TEST_CASE("division by zero stops the machine") {
  auto p = lower(parse_expr("1 / (1 - 1)"));
  CHECK_THROWS_AS(machine_run(compile(p)), MachineDivisionByZero);
}

TEST_CASE("stepping a finished machine is an error") {
  MachineState s = initial_state(compile(core::mk(core::Int{1})));
  s = machine_step(s);
  CHECK(finished(s));
  CHECK_THROWS_AS(machine_step(s), MachineStuck);
}

TEST_CASE("round trip on random core programs") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    gen::CoreGen g(seed);
    CoreProg p = g.program(6);
    CoreProg back = decompile(compile(p));
    CAPTURE(describe(p));
    CHECK(equal(back, p));
  }
}

TEST_CASE("machine agrees with the oracle and the stepper") {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    gen::CoreGen g(seed);
    CoreProg p = g.program(6);
    Expr e = to_expr(p);
    auto expected = oracle::evaluate(e);
    std::string machine;
    try {
      machine = to_string(machine_run(compile(p), 1000000));
    } catch (const MachineDivisionByZero&) {
      machine = "Division_by_zero";
    }
    FinalOutcome r = run(initial_env(), e, nullptr, {});
    std::string stepped =
        r.kind == FinalOutcome::Value ? oracle::canon(r.value) : r.exception;
    CAPTURE(to_source(p));
    CHECK(machine == expected.text);
    CHECK(stepped == expected.text);
  }
}

TEST_CASE("bytecode trace lines parse and end at the value") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    gen::CoreGen g(seed);
    CoreProg p = g.program(6);
    auto expected = oracle::evaluate(to_expr(p));
    if (expected.kind != oracle::Outcome::Value) continue;
    auto lines = bytecode_trace(p);
    CAPTURE(to_source(p));
    for (auto& l : lines) CHECK_NOTHROW(parse_expr(l));
    CHECK(lines.back() == expected.text);
    for (size_t k = 1; k < lines.size(); ++k) CHECK(lines[k] != lines[k - 1]);
  }
}
