#pragma once

#include <sstream>
#include <string>

#include "stepdbg/bytecode.hpp"
#include "stepdbg/stepper.hpp"
#include "stepdbg/syntax.hpp"
#include "support/oracle.hpp"

namespace testing_support {

struct Result {
  std::string text;
  std::string output;
};

inline Result stepped(const stepdbg::Expr& e, stepdbg::EvalOptions opts = {},
                      const stepdbg::ConstructorTable* ctors = nullptr) {
  std::ostringstream out;
  opts.max_steps = 10000000;
  auto r = stepdbg::run(stepdbg::initial_env(), e, nullptr, opts, stepdbg::BuiltinContext{&out}, ctors);
  Result res;
  res.text = r.kind == stepdbg::FinalOutcome::Value ? oracle::canon(r.value)
             : r.kind == stepdbg::FinalOutcome::Uncaught ? r.exception
                                                         : "type error";
  res.output = out.str();
  return res;
}

inline Result oracle_result(const stepdbg::Expr& e) {
  auto o = oracle::evaluate(e, 10000000);
  return {o.kind == oracle::Outcome::TypeError ? "type error" : o.text, o.output};
}

// Machine result for programs inside the core subset, empty otherwise.
inline std::string machine_result(const stepdbg::Expr& e) {
  stepdbg::CoreProg p;
  try {
    p = stepdbg::lower(e);
  } catch (const stepdbg::UnsupportedConstruct&) {
    return "";
  }
  try {
    return stepdbg::to_string(stepdbg::machine_run(stepdbg::compile(p), 10000000));
  } catch (const stepdbg::MachineDivisionByZero&) {
    return "Division_by_zero";
  }
}

}  // namespace testing_support
