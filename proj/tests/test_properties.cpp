#include "doctest.h"

#include <fstream>
#include <sstream>

#include "support/agreement.hpp"
#include "support/gen.hpp"
#include "support/helpers.hpp"

using namespace stepdbg;
using namespace testing_support;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("stepper agrees with the oracle on random programs") {
  int machine_checked = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    gen::SourceGen g(seed);
    std::string src = g.program(4 + seed % 2);
    CAPTURE(src);
    Expr e = parse_expr(src);
    auto want = oracle_result(e);
    auto got = stepped(e);
    CHECK(got.text == want.text);
    CHECK(got.output == want.output);
    std::string m = machine_result(e);
    if (!m.empty()) {
      ++machine_checked;
      CHECK(m == want.text);
    }
  }
  MESSAGE("programs in the bytecode subset: " << machine_checked);
}

TEST_CASE("fast curry does not change results") {
  EvalOptions fast;
  fast.fast_curry = true;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    gen::SourceGen g(seed);
    Expr e = parse_expr(g.program(4));
    CHECK(stepped(e, fast).text == stepped(e).text);
  }
}

TEST_CASE("corpus programs agree with the oracle") {
  struct Case {
    const char* file;
    const char* value;
  };
  Case cases[] = {
      {"factorial.mml", "3628800"}, {"factorialacc.mml", "3628800"}, {"helloworld.mml", "()"},
      {"reference_swap.mml", "()"}, {"exception.mml", "()"},        {"table.mml", "()"},
      {"tree.mml", "()"},           {"donothing.mml", "1"},         {"bytecode_demo.mml", "3"},
  };
  for (auto& c : cases) {
    CAPTURE(c.file);
    Program p = parse_program(slurp(corpus(c.file)));
    Expr e = program_to_expr(p);
    auto want = oracle_result(e);
    auto got = stepped(e, {}, &p.constructors);
    CHECK(want.text == c.value);
    CHECK(got.text == want.text);
    CHECK(got.output == want.output);
  }
}
