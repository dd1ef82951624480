// Command line: flag parsing, the run modes and the interactive dialogue.
#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bytecode.hpp"
#include "syntax.hpp"
#include "trace.hpp"

namespace stepdbg {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { Silent, ShowFinal, Trace, Bytecode, Interactive };

struct Invocation {
  std::optional<std::string> expr;  // -e
  std::optional<std::string> file;
  Mode mode = Mode::Silent;
  EvalOptions eval;
  ElisionPolicy policy;
  DisplayOptions display;
  SearchSpec search;
  bool no_color = false;
  int width = 0;
  bool dump_code = false;
};

inline const char* usage_text() {
  return "usage: stepdbg [options] (FILE | -e EXPR)\n"
         "modes:   -show  -show-all  -bytecode  -interactive  -elide CLASSES\n"
         "search:  -search P  -highlight  -no-parens  -regexp  -upto N  -invert-search  -n N\n"
         "         -after P  -until P  -after-any P  -until-any P  -invert-after  -invert-until\n"
         "         -stop  -repeat\n"
         "display: -side-lets  -remove-rec-all  -remove-unused-lets  -no-color  -width N\n"
         "eval:    -fast-curry  -fast-for  -no-typecheck  -max-steps N  -dump-code\n"
         "CLASSES is a comma list of arith, boolean, comparison, ifbool, varlookup, builtin, all\n";
}

namespace detail {

inline std::uint64_t parse_count(const std::string& flag, const std::string& v) {
  std::uint64_t n = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || p != v.data() + v.size())
    throw UsageError("flag " + flag + " expects a non-negative integer, got '" + v + "'");
  return n;
}

inline std::set<LastOp::Kind> parse_classes(const std::string& v) {
  std::set<LastOp::Kind> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "arith")
      out.insert(LastOp::Arith);
    else if (item == "boolean")
      out.insert(LastOp::Boolean);
    else if (item == "comparison")
      out.insert(LastOp::Comparison);
    else if (item == "ifbool")
      out.insert(LastOp::IfBool);
    else if (item == "varlookup")
      out.insert(LastOp::VarLookup);
    else if (item == "builtin")
      out.insert(LastOp::InsideBuiltIn);
    else if (item == "all")
      out.insert({LastOp::Arith, LastOp::Boolean, LastOp::Comparison, LastOp::IfBool,
                  LastOp::VarLookup, LastOp::InsideBuiltIn});
    else
      throw UsageError("unknown elision class '" + item + "'");
  }
  if (out.empty()) throw UsageError("-elide needs at least one class");
  return out;
}

}  // namespace detail

inline Invocation parse_args(const std::vector<std::string>& args) {
  Invocation inv;
  std::vector<std::string> modes;
  std::vector<std::string> trace_only;  // flags meaningless for the bytecode route
  bool elide = false, implies_trace = false;
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto value = [&]() -> const std::string& {
      if (i + 1 >= args.size()) throw UsageError("flag " + a + " expects a value");
      return args[++i];
    };
    auto count = [&]() { return detail::parse_count(a, value()); };
    auto search_flag = [&]() {
      trace_only.push_back(a);
      implies_trace = true;
    };
    if (a == "-e") {
      if (inv.expr) throw UsageError("-e given twice");
      inv.expr = value();
    } else if (a == "-show") {
      modes.push_back(a);
      inv.mode = Mode::ShowFinal;
    } else if (a == "-show-all") {
      modes.push_back(a);
      inv.mode = Mode::Trace;
    } else if (a == "-bytecode") {
      modes.push_back(a);
      inv.mode = Mode::Bytecode;
    } else if (a == "-interactive") {
      modes.push_back(a);
      inv.mode = Mode::Interactive;
    } else if (a == "-elide") {
      inv.policy.suppressed = detail::parse_classes(value());
      inv.policy.show_all = false;
      elide = true;
      trace_only.push_back(a);
    } else if (a == "-search") {
      inv.search.pattern = value();
      search_flag();
    } else if (a == "-highlight") {
      inv.search.highlight = true;
      search_flag();
    } else if (a == "-no-parens") {
      inv.search.no_parens = true;
      search_flag();
    } else if (a == "-regexp") {
      inv.search.regexp = true;
      search_flag();
    } else if (a == "-upto") {
      inv.search.upto = count();
      search_flag();
    } else if (a == "-invert-search") {
      inv.search.invert = true;
      search_flag();
    } else if (a == "-n") {
      inv.search.limit_n = count();
      if (!inv.search.limit_n) throw UsageError("-n expects a positive count");
      search_flag();
    } else if (a == "-until") {
      inv.search.until = value();
      search_flag();
    } else if (a == "-after") {
      inv.search.after = value();
      search_flag();
    } else if (a == "-until-any") {
      inv.search.until_any = value();
      search_flag();
    } else if (a == "-after-any") {
      inv.search.after_any = value();
      search_flag();
    } else if (a == "-invert-after") {
      inv.search.invert_after = true;
      search_flag();
    } else if (a == "-invert-until") {
      inv.search.invert_until = true;
      search_flag();
    } else if (a == "-stop") {
      inv.search.stop = true;
      search_flag();
    } else if (a == "-repeat") {
      inv.search.repeat = true;
      search_flag();
    } else if (a == "-fast-curry") {
      inv.eval.fast_curry = true;
      trace_only.push_back(a);
    } else if (a == "-fast-for") {
      inv.eval.fast_for = true;
      trace_only.push_back(a);
    } else if (a == "-no-typecheck") {
      inv.eval.no_typecheck = true;
      trace_only.push_back(a);
    } else if (a == "-side-lets") {
      inv.display.side_lets = true;
      trace_only.push_back(a);
    } else if (a == "-remove-rec-all") {
      inv.display.remove_rec_all = true;
      trace_only.push_back(a);
    } else if (a == "-remove-unused-lets") {
      inv.display.remove_unused_lets = true;
      trace_only.push_back(a);
    } else if (a == "-no-color") {
      inv.no_color = true;
    } else if (a == "-width") {
      inv.width = static_cast<int>(count());
    } else if (a == "-max-steps") {
      inv.eval.max_steps = count();
    } else if (a == "-dump-code") {
      inv.dump_code = true;
    } else if (a == "-help" || a == "--help") {
      throw UsageError("");
    } else if (!a.empty() && a[0] == '-' && a != "-") {
      throw UsageError("unknown flag " + a);
    } else {
      if (inv.file) throw UsageError("more than one source file given");
      inv.file = a;
    }
  }
  if (inv.expr && inv.file) throw UsageError("give either -e or a file, not both");
  if (!inv.expr && !inv.file) throw UsageError("no program given");
  if (modes.size() > 1) throw UsageError("conflicting modes " + modes[0] + " and " + modes[1]);
  if (inv.mode == Mode::Bytecode && !trace_only.empty())
    throw UsageError("flag " + trace_only[0] + " does not apply with -bytecode");
  if (elide && inv.mode == Mode::Trace) throw UsageError("-elide conflicts with -show-all");
  if (inv.mode == Mode::ShowFinal && (elide || implies_trace))
    throw UsageError("trace flags do not apply with -show");
  if (inv.mode == Mode::Silent && (elide || implies_trace)) inv.mode = Mode::Trace;
  return inv;
}

// Drives a session from commands on `in`. When `echo` is set each command is
// written back after the prompt, so a scripted transcript reads like a typed one.
inline int interactive_loop(TraceSession& session, std::istream& in, std::ostream& out,
                            bool echo) {
  session.advance();
  while (session.end() == TraceSession::End::Running) {
    out << "?" << std::flush;
    std::string line;
    if (!std::getline(in, line)) {
      if (echo) out << "\n";
      return 0;
    }
    if (echo) out << line << "\n";
    std::stringstream ss(line);
    std::string cmd, extra;
    ss >> cmd;
    if (cmd == "exit") return 0;
    std::uint64_t n = 1;
    bool ok = true;
    if (cmd == "next") {
      std::string arg;
      if (ss >> arg) {
        try {
          n = detail::parse_count("next", arg);
        } catch (const UsageError&) {
          ok = false;
        }
      }
      if (ss >> extra) ok = false;
    } else if (cmd == "run") {
      n = 0;
    } else {
      ok = false;
    }
    if (!ok) {
      out << "commands: next, next N, run, exit\n";
      continue;
    }
    if (n == 0) {
      session.run_to_end();
    } else {
      for (std::uint64_t k = 0; k < n && session.advance(); ++k) {
      }
    }
  }
  out.flush();
  return session.exit_code();
}

inline int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                   std::ostream& err, bool stdout_tty = false, bool stdin_tty = false) {
  Invocation inv;
  for (auto& a : args)
    if (a == "-help" || a == "--help") {
      out << usage_text();
      return 0;
    }
  try {
    inv = parse_args(args);
  } catch (const UsageError& e) {
    if (*e.what()) err << "stepdbg: " << e.what() << "\n";
    err << usage_text();
    return 2;
  }

  std::string source;
  if (inv.expr) {
    source = *inv.expr;
  } else {
    std::ifstream f(*inv.file, std::ios::binary);
    if (!f) {
      err << "stepdbg: cannot read " << *inv.file << "\n";
      return 2;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    source = ss.str();
  }
  std::string where = inv.file ? *inv.file + ":" : "";

  Program prog;
  try {
    prog = parse_program(source);
  } catch (const SyntaxError& e) {
    err << where << e.what() << "\n";
    return 2;
  }
  Expr program = program_to_expr(prog);

  if (inv.mode == Mode::Bytecode || inv.dump_code) {
    try {
      CoreProg core = lower(program);
      if (inv.dump_code) out << listing(compile(core));
      if (inv.mode != Mode::Bytecode) return 0;
      for (auto& line : bytecode_trace(core, inv.eval.max_steps)) out << line << "\n";
      return 0;
    } catch (const UnsupportedConstruct& e) {
      err << "stepdbg: " << e.what() << "\n";
      return 2;
    } catch (const MachineDivisionByZero&) {
      out << "Exception: Division_by_zero.\n";
      return 1;
    } catch (const std::exception& e) {
      err << "Internal error: " << e.what() << "\n";
      return 4;
    }
  }

  Env env = initial_env();
  if (inv.mode == Mode::Silent || inv.mode == Mode::ShowFinal) {
    try {
      FinalOutcome r = run(env, program, nullptr, inv.eval, BuiltinContext{&out},
                           &prog.constructors);
      std::ostream& report = inv.mode == Mode::ShowFinal ? out : err;
      switch (r.kind) {
        case FinalOutcome::Value:
          if (inv.mode == Mode::ShowFinal) out << to_string(r.value) << "\n";
          return 0;
        case FinalOutcome::Uncaught:
          out.flush();
          report << "Exception: " << exception_text(r.exception, r.payload) << ".\n";
          return 1;
        case FinalOutcome::RunTimeTypeError:
          out.flush();
          report << "Run time type error:\n  " << r.message << "\n";
          return 3;
      }
    } catch (const StepLimitExceeded& e) {
      out.flush();
      err << "Error: " << e.what() << "\n";
      return 4;
    } catch (const std::exception& e) {
      out.flush();
      err << "Internal error: " << e.what() << "\n";
      return 4;
    }
    return 4;
  }

  const char* env_no_color = std::getenv("STEPDBG_NO_COLOR");
  TraceConfig cfg;
  cfg.eval = inv.eval;
  cfg.policy = inv.policy;
  cfg.display = inv.display;
  cfg.search = inv.search;
  cfg.color = stdout_tty && !inv.no_color && !(env_no_color && std::string(env_no_color) == "1");
  cfg.width = inv.width;
  std::optional<TraceSession> session;
  try {
    session.emplace(program, env, cfg, out, err, &prog.constructors);
  } catch (const SearchSyntaxError& e) {
    err << "stepdbg: " << e.what() << "\n";
    return 2;
  }
  if (inv.mode == Mode::Interactive) return interactive_loop(*session, in, out, !stdin_tty);
  session->run_to_end();
  out.flush();
  return session->exit_code();
}

}  // namespace stepdbg
