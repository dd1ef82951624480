#include "doctest.h"

#include <sstream>

#include "stepdbg/syntax.hpp"
#include "stepdbg/trace.hpp"
#include "support/gen.hpp"
#include "support/helpers.hpp"

using namespace stepdbg;
using testing_support::state_lines;

namespace {

struct SessionRun {
  std::string out, err;
  TraceSession::End end;
  int code;
};

SessionRun session(const std::string& src, TraceConfig cfg) {
  std::ostringstream out, err;
  Program p = parse_program(src);
  TraceSession s(program_to_expr(p), initial_env(), cfg, out, err, &p.constructors);
  s.run_to_end();
  return {out.str(), err.str(), s.end(), s.exit_code()};
}

TraceConfig plain() {
  TraceConfig c;
  return c;
}

TraceConfig elide(std::set<LastOp::Kind> kinds) {
  TraceConfig c;
  c.policy.show_all = false;
  c.policy.suppressed = std::move(kinds);
  return c;
}

const std::string kMap =
    "let rec map f l = match l with [] -> [] | a :: l -> let r = f a in r :: map f l in "
    "map (fun x -> x + 1) [1; 2; 3]";

RenderedStep step_text(const std::string& text, size_t index = 1) {
  RenderedStep s;
  s.index = index;
  s.text = text;
  return s;
}

}  // namespace

TEST_CASE("should_print truth table") {
  ElisionPolicy all;
  ElisionPolicy arith;
  arith.show_all = false;
  arith.suppressed = {LastOp::Arith};
  LastOp a{LastOp::Arith, {}}, o = LastOp::other("application");

  CHECK(should_print(a, false, a, all));
  CHECK(should_print(std::nullopt, false, a, arith));
  CHECK(should_print(a, true, std::nullopt, arith));
  CHECK_FALSE(should_print(a, false, a, arith));
  CHECK(should_print(o, false, a, arith));
  CHECK(should_print(a, false, o, arith));
  CHECK(should_print(a, false, std::nullopt, arith));
}

TEST_CASE("Other steps are never suppressed") {
  ElisionPolicy p;
  p.show_all = false;
  p.suppressed = {LastOp::Other};
  CHECK_FALSE(p.suppresses(LastOp::other("application")));
}

TEST_CASE("arithmetic elision keeps the first and last states") {
  auto r = session("1 * (2 * (3 * 4))", elide({LastOp::Arith}));
  CHECK(state_lines(r.out) == std::vector<std::string>{"    1 * (2 * (3 * 4))", "=>  24"});
  auto full = session("1 * (2 * (3 * 4))", plain());
  CHECK(state_lines(full.out).size() == 4);
}

TEST_CASE("elided steps keep the states next to a visible step") {
  auto r = session("(1 + 2) * (fun x -> x) 3", elide({LastOp::Arith}));
  auto lines = state_lines(r.out);
  CHECK(lines.front() == "    (1 + 2) * (fun x -> x) 3");
  CHECK(lines.back() == "=>  9");
  CHECK(std::find(lines.begin(), lines.end(), "=>  3 * (fun x -> x) 3") != lines.end());
}

TEST_CASE("caret lines sit under the redex") {
  auto r = session("1 + 2 > 3 + 4", plain());
  auto lines = testing_support::lines_of(r.out);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "    1 + 2 > 3 + 4");
  CHECK(lines[1] == "            ^^^^^");
  CHECK(lines[3] == "    ^^^^^");
  CHECK(lines[5] == "    ^^^^^");
  CHECK(lines[6] == "=>  false");
}

TEST_CASE("a variable operand marks the whole operation") {
  auto r = session("let y = 5 in 4 + y", plain());
  auto lines = testing_support::lines_of(r.out);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[1] == "                 ^^^^^");
}

TEST_CASE("side-lets move outer bindings to a column") {
  TraceConfig c;
  c.eval.fast_curry = true;
  c.display.side_lets = true;
  auto r = session("(fun x y -> x + y) 4 5", c);
  CHECK(state_lines(r.out) == std::vector<std::string>{
                                  "    (fun x y -> x + y) 4 5",
                                  "x = 4 y = 5 =>  x + y",
                                  "      y = 5 =>  4 + y",
                                  "            =>  4 + 5",
                                  "            =>  9",
                              });
}

TEST_CASE("remove-rec-all hides recursive function definitions") {
  TraceConfig c;
  c.display.remove_rec_all = true;
  auto r = session("let rec f n = if n = 0 then 0 else f (n - 1) in f 1", c);
  for (auto& l : state_lines(r.out)) CHECK(l.find("let rec") == std::string::npos);
  CHECK(state_lines(r.out).back() == "=>  0");
}

TEST_CASE("remove-unused-lets drops dead value bindings") {
  Expr e = parse_expr("let a = 1 in let b = 2 in b");
  CHECK(to_string(remove_unused_lets(e)) == "let b = 2 in b");
}

TEST_CASE("search tokens tolerate spacing and parentheses") {
  auto m = compile_search("4::");
  CHECK(m.matches("2::3::4::map f l"));
  CHECK(m.matches("4 :: []"));
  CHECK_FALSE(m.matches("14::[]"));
  CHECK_FALSE(m.matches("4 + 1"));

  auto list = compile_search("[1; _; _]");
  CHECK(list.matches("map f [1; 2; 3]"));
  CHECK(list.matches("[1;x;y]"));
  CHECK_FALSE(list.matches("[1; 2]"));
  CHECK_FALSE(list.matches("[1; 2; 3; 4]"));

  CHECK_FALSE(compile_search("f x").matches("f (x)"));
  CHECK(compile_search("f x", true).matches("f (x)"));
  CHECK(compile_search("f (x)", true).matches("f x"));
}

TEST_CASE("search respects identifier boundaries") {
  auto m = compile_search("x");
  CHECK(m.matches("x + 1"));
  CHECK(m.matches("f x"));
  CHECK_FALSE(m.matches("xs"));
  CHECK_FALSE(m.matches("x'"));
  CHECK_FALSE(m.matches("ax"));
}

TEST_CASE("regexp search uses the pattern verbatim") {
  auto m = compile_search("[0-9]+ \\+", false, true);
  CHECK(m.matches("let x = 12 + y"));
  auto spans = m.find_all("1 + 2 + 3");
  CHECK(spans.size() == 2);
}

TEST_CASE("bad search patterns are reported") {
  CHECK_THROWS_AS(compile_search("\"open"), SearchSyntaxError);
  CHECK_THROWS_AS(compile_search("[", false, true), SearchSyntaxError);
}

TEST_CASE("search shows only matching steps") {
  TraceConfig c;
  c.search.pattern = "4::";
  c.display.remove_rec_all = true;
  auto lines = state_lines(session(kMap, c).out);
  REQUIRE(!lines.empty());
  for (auto& l : lines) CHECK(l.find("4::") != std::string::npos);
  CHECK(lines.front() == "=>  2::3::(let f x = x + 1 in let l = [] in 4::map f l)");
}

TEST_CASE("highlight marks the matched text") {
  TraceConfig c;
  c.search.pattern = "[1; _; _]";
  c.search.highlight = true;
  c.display.remove_rec_all = true;
  auto lines = testing_support::lines_of(session(kMap, c).out);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0] == "    map (fun x -> x + 1) [1; 2; 3]");
  CHECK(lines[1] == "    ^^^^^^^^^^^^^^^^^^^^ ~~~~~~~~~");
}

TEST_CASE("after and until bracket the shown steps") {
  TraceConfig c;
  c.search.after = "3 + 1";
  c.search.until = "2::3::4";
  c.display.remove_rec_all = true;
  auto lines = state_lines(session(kMap, c).out);
  REQUIRE(lines.size() == 7);
  CHECK(lines.front() == "=>  2::3::(let f x = x + 1 in let l = [] in let r = 3 + 1 in r::map f l)");
  CHECK(lines.back().rfind("=>  2::3::4::", 0) == 0);
}

TEST_CASE("-n limits results and -stop ends the run") {
  TraceConfig c;
  c.search.pattern = "map";
  c.search.limit_n = 2;
  auto r = session(kMap, c);
  CHECK(state_lines(r.out).size() == 2);
  CHECK(r.end == TraceSession::End::Value);
  c.search.stop = true;
  auto s = session(kMap, c);
  CHECK(state_lines(s.out).size() == 2);
  CHECK(s.end == TraceSession::End::Stopped);
  CHECK(s.code == 0);
}

TEST_CASE("invert-search shows the complement") {
  TraceConfig all = plain(), hit = plain(), miss = plain();
  hit.search.pattern = "r";
  miss.search.pattern = "r";
  miss.search.invert = true;
  size_t total = state_lines(session(kMap, all).out).size();
  size_t a = state_lines(session(kMap, hit).out).size();
  size_t b = state_lines(session(kMap, miss).out).size();
  CHECK(a + b == total);
  CHECK(a > 0);
  CHECK(b > 0);
}

TEST_CASE("upto keeps context lines before each result") {
  SearchSpec spec;
  spec.pattern = "hit";
  spec.upto = 2;
  StepFilter f(spec);
  std::vector<std::string> seen;
  for (std::string t : {"a", "b", "c", "hit", "d", "hit"})
    for (auto& s : f.feed(step_text(t), true)) seen.push_back(s.text);
  CHECK(seen == std::vector<std::string>{"b", "c", "hit", "d", "hit"});
}

TEST_CASE("repeat lets the after/until window reopen") {
  SearchSpec spec;
  spec.after = "open";
  spec.until = "close";
  std::vector<std::string> input = {"x", "open", "y", "close", "z", "open", "w", "close"};
  auto run_filter = [&](SearchSpec sp) {
    StepFilter f(sp);
    std::vector<std::string> seen;
    for (auto& t : input)
      for (auto& s : f.feed(step_text(t), true)) seen.push_back(s.text);
    return seen;
  };
  CHECK(run_filter(spec) == std::vector<std::string>{"open", "y", "close"});
  spec.repeat = true;
  CHECK(run_filter(spec) ==
        std::vector<std::string>{"open", "y", "close", "open", "w", "close"});
}

TEST_CASE("after-any sees elided steps while after does not") {
  SearchSpec printed, any;
  printed.after = "trigger";
  any.after_any = "trigger";
  StepFilter f1(printed), f2(any);
  std::vector<std::string> s1, s2;
  std::vector<std::pair<std::string, bool>> input = {{"a", true}, {"trigger", false}, {"b", true}};
  for (auto& [t, shown] : input) {
    for (auto& s : f1.feed(step_text(t), shown)) s1.push_back(s.text);
    for (auto& s : f2.feed(step_text(t), shown)) s2.push_back(s.text);
  }
  CHECK(s1.empty());
  CHECK(s2 == std::vector<std::string>{"b"});
}

TEST_CASE("invert-after opens on the first non-matching step") {
  SearchSpec spec;
  spec.after = "a";
  spec.invert_after = true;
  StepFilter f(spec);
  std::vector<std::string> seen;
  for (std::string t : {"a", "a", "b", "a"})
    for (auto& s : f.feed(step_text(t), true)) seen.push_back(s.text);
  CHECK(seen == std::vector<std::string>{"b", "a"});
}

TEST_CASE("an inactive filter passes every shown step through") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    gen::SourceGen g(seed);
    std::string src = g.program(4);
    TraceConfig a = plain(), b = plain();
    b.search.until_any = "this_never_appears_anywhere";
    CHECK(session(src, a).out == session(src, b).out);
  }
}

TEST_CASE("printer wraps long states") {
  StepPrinter p(false, 20);
  RenderedStep s = step_text("aaaa bbbb cccc dddd eeee ffff");
  std::string out = p.format(s);
  auto lines = testing_support::lines_of(out);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0].size() <= 20);
  CHECK(lines[1].rfind("      ", 0) == 0);
}

TEST_CASE("printer uses ANSI styles when color is on") {
  StepPrinter p(true, 0);
  RenderedStep s = step_text("let x = 1 in x", 0);
  s.keywords = {{0, 3}, {10, 12}};
  s.redex = Span{13, 14};
  std::string out = p.format(s);
  CHECK(out.find("\x1b[1mlet") != std::string::npos);
  CHECK(out.find("\x1b[4mx") != std::string::npos);
  CHECK(out.find('^') == std::string::npos);
}

TEST_CASE("marker line recognition") {
  CHECK(is_marker_line("    ^^^ ~~"));
  CHECK_FALSE(is_marker_line("    "));
  CHECK_FALSE(is_marker_line("=>  1 ^ 2"));
}

TEST_CASE("exceptions and type errors end the session") {
  auto exn = session("1 + 1 / (1 - 1)", plain());
  CHECK(state_lines(exn.out).back() == "Exception: Division_by_zero.");
  CHECK(exn.code == 1);

  TraceConfig c;
  c.eval.no_typecheck = true;
  auto rtte = session("1 < 2 < 3", c);
  auto lines = state_lines(rtte.out);
  CHECK(lines == std::vector<std::string>{"    1 < 2 < 3", "=>  true < 3", "Run time type error:",
                                          "  Comparison between values of differing types"});
  CHECK(rtte.code == 3);

  TraceConfig lim;
  lim.eval.max_steps = 10;
  auto loop = session("let rec f x = f x in f 1", lim);
  CHECK(loop.end == TraceSession::End::StepLimit);
  CHECK(loop.err.rfind("Error: ", 0) == 0);
  CHECK(loop.code == 4);
}

TEST_CASE("exception text renders payloads") {
  CHECK(exception_text("Failure", str("x")) == "Failure \"x\"");
  CHECK(exception_text("Not_found", nullptr) == "Not_found");
}
