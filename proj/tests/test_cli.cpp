#include "doctest.h"

#include "support/helpers.hpp"

using namespace stepdbg;
using testing_support::cli;
using testing_support::corpus;
using testing_support::state_lines;

TEST_CASE("-show prints the final value") {
  auto r = cli({"-e", "1 + 2 * 3", "-show"});
  CHECK(r.code == 0);
  CHECK(r.out == "7\n");
}

TEST_CASE("-show-all prints every state") {
  auto r = cli({"-e", "1 + 2 * 3", "-show-all"});
  CHECK(state_lines(r.out) == std::vector<std::string>{"    1 + 2 * 3", "=>  1 + 6", "=>  7"});
}

TEST_CASE("silent mode runs the program for its effects") {
  auto r = cli({"-e", "print_string \"hi\""});
  CHECK(r.code == 0);
  CHECK(r.out == "hi");
}

TEST_CASE("uncaught exceptions exit 1") {
  auto shown = cli({"-e", "1 + 1 / (1 - 1)", "-show"});
  CHECK(shown.code == 1);
  CHECK(shown.out == "Exception: Division_by_zero.\n");
  auto silent = cli({"-e", "failwith \"x\""});
  CHECK(silent.code == 1);
  CHECK(silent.err == "Exception: Failure \"x\".\n");
}

TEST_CASE("syntax errors exit 2 with a position") {
  auto r = cli({"-e", "let x = in 1"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("1:9:", 0) == 0);
}

TEST_CASE("-help prints usage and exits 0") {
  auto r = cli({"-help"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("usage: stepdbg", 0) == 0);
}

TEST_CASE("flag errors exit 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"-e", "1", "-bogus"}).code == 2);
  CHECK(cli({"-e", "1", "-show", "-show-all"}).code == 2);
  CHECK(cli({"-e", "1", "-bytecode", "-search", "1"}).code == 2);
  CHECK(cli({"-e", "1", "-elide", "arith", "-show-all"}).code == 2);
  CHECK(cli({"-e", "1", "-elide", "nonsense"}).code == 2);
  CHECK(cli({"-e", "1", "-n", "0"}).code == 2);
  CHECK(cli({"-e", "1", "-upto"}).code == 2);
  CHECK(cli({"-e", "1", "-e", "2"}).code == 2);
  CHECK(cli({"missing_file.mml"}).code == 2);
  auto r = cli({"-e", "1", "-bytecode", "-fast-curry"});
  CHECK(r.err.find("-fast-curry") != std::string::npos);
}

TEST_CASE("run-time type errors exit 3") {
  auto r = cli({"-e", "1 < 2 < 3", "-no-typecheck", "-show-all"});
  CHECK(r.code == 3);
  CHECK(state_lines(r.out).back() == "  Comparison between values of differing types");
}

TEST_CASE("step limit exits 4") {
  auto r = cli({"-e", "let rec f x = f x in f 1", "-max-steps", "100"});
  CHECK(r.code == 4);
  CHECK(r.err.rfind("Error: ", 0) == 0);
}

TEST_CASE("search flags imply a trace") {
  auto r = cli({"-e", "1 + 2 * 3", "-search", "6"});
  CHECK(state_lines(r.out) == std::vector<std::string>{"=>  1 + 6"});
}

TEST_CASE("-elide implies a trace") {
  auto r = cli({"-e", "1 * (2 * (3 * 4))", "-elide", "arith"});
  CHECK(state_lines(r.out) == std::vector<std::string>{"    1 * (2 * (3 * 4))", "=>  24"});
}

TEST_CASE("bytecode mode prints the decompiled trace") {
  auto r = cli({corpus("bytecode_demo.mml"), "-bytecode"});
  CHECK(r.code == 0);
  CHECK(testing_support::lines_of(r.out).size() == 6);
  auto dz = cli({"-e", "1 / 0", "-bytecode"});
  CHECK(dz.code == 1);
  CHECK(dz.out == "Exception: Division_by_zero.\n");
  auto bad = cli({"-e", "[1]", "-bytecode"});
  CHECK(bad.code == 2);
}

TEST_CASE("-dump-code prints the listing") {
  auto r = cli({corpus("bytecode_demo.mml"), "-dump-code"});
  CHECK(r.code == 0);
  CHECK(testing_support::lines_of(r.out).size() == 20);
}

TEST_CASE("corpus programs run to their expected results") {
  struct Case {
    const char* file;
    const char* out;
    int code;
  };
  Case cases[] = {
      {"factorial.mml", "3628800\n", 0},
      {"factorialacc.mml", "3628800\n", 0},
      {"helloworld.mml", "Hello, World!\nHello, World!\nHello, World!\nHello, World!\n()\n", 0},
      {"donothing.mml", "1\n", 0},
  };
  for (auto& c : cases) {
    CAPTURE(c.file);
    auto r = cli({corpus(c.file), "-show"});
    CHECK(r.code == c.code);
    CHECK(r.out == c.out);
  }
}

TEST_CASE("batch output is deterministic") {
  auto a = cli({corpus("table.mml"), "-show-all"});
  auto b = cli({corpus("table.mml"), "-show-all"});
  CHECK(a.out == b.out);
}

TEST_CASE("show-final equals the last state of show-all") {
  for (const char* f : {"factorial.mml", "factorialacc.mml", "table.mml", "tree.mml",
                        "reference_swap.mml", "bytecode_demo.mml"}) {
    CAPTURE(f);
    auto fin = cli({corpus(f), "-show"});
    auto all = cli({corpus(f), "-show-all", "-no-color"});
    auto lines = state_lines(all.out);
    REQUIRE(!lines.empty());
    std::string last = lines.back();
    CHECK(last.substr(last.find("=>  ") + 4) + "\n" ==
          testing_support::lines_of(fin.out).back() + "\n");
  }
}

TEST_CASE("interactive next, next N and exit") {
  auto r = cli({"-e", "1 + 2 + 3 + 4 + 5 + 6 + 7 + 8", "-interactive", "-no-color"},
               "next\nnext 5\nexit\n");
  CHECK(r.code == 0);
  auto lines = state_lines(r.out);
  std::vector<std::string> expected = {
      "    1 + 2 + 3 + 4 + 5 + 6 + 7 + 8",
      "?next",
      "=>  3 + 3 + 4 + 5 + 6 + 7 + 8",
      "?next 5",
      "=>  6 + 4 + 5 + 6 + 7 + 8",
      "=>  10 + 5 + 6 + 7 + 8",
      "=>  15 + 6 + 7 + 8",
      "=>  21 + 7 + 8",
      "=>  28 + 8",
      "?exit",
  };
  CHECK(lines == expected);
}

TEST_CASE("interactive run matches the batch trace") {
  std::string src = corpus("factorial.mml");
  auto batch = cli({src, "-show-all"});
  auto inter = cli({src, "-interactive"}, "run\n");
  std::string out = inter.out;
  auto pos = out.find("?run\n");
  REQUIRE(pos != std::string::npos);
  out.erase(pos, 5);
  CHECK(out == batch.out);
  CHECK(inter.code == batch.code);
}

TEST_CASE("interactive end of input behaves as exit") {
  auto r = cli({"-e", "1 + 2 + 3", "-interactive"}, "");
  CHECK(r.code == 0);
}

TEST_CASE("interactive next past the end prints the value once") {
  auto r = cli({"-e", "1 + 2", "-interactive"}, "next\nnext\nnext\n");
  CHECK(r.code == 0);
  auto lines = state_lines(r.out);
  CHECK(std::count(lines.begin(), lines.end(), "=>  3") == 1);
  CHECK(lines.back() == "=>  3");
}

TEST_CASE("interactive unknown command prints a hint") {
  auto r = cli({"-e", "1 + 2", "-interactive"}, "jump\nexit\n");
  CHECK(r.out.find("commands: next, next N, run, exit\n") != std::string::npos);
}

TEST_CASE("interactive factorial run terminates with the value") {
  auto r = cli({"-e", "let rec f n = if n = 0 then 1 else n * f (n - 1) in f 4", "-interactive"},
               "run\n");
  CHECK(r.code == 0);
  CHECK(state_lines(r.out).back() == "=>  24");
}
