// A small stack machine for the core subset: compilation, evaluation and
// decompilation back to source, so that machine states can be shown as programs.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ast.hpp"
#include "render.hpp"

namespace stepdbg {

// ---------------------------------------------------------------- core programs

namespace core {

struct Node;
using Prog = std::shared_ptr<const Node>;

struct Int { std::int64_t v; };
struct Bool { bool v; };
struct Var { std::string name; int index; };  // index 1 is the innermost binder
struct Eq { Prog a, b; };
struct Op { ArithOp op; Prog a, b; };
struct Apply { Prog f, arg; };
struct Lambda { std::string name; Prog body; };
struct Let { std::string name; Prog rhs, body; };
struct If { Prog cond, then_, else_; };

struct Node {
  std::variant<Int, Bool, Var, Eq, Op, Apply, Lambda, Let, If> data;
};

template <class T>
const T* as(const Prog& p) {
  return p ? std::get_if<T>(&p->data) : nullptr;
}

template <class T>
Prog mk(T v) {
  return std::make_shared<const Node>(Node{std::move(v)});
}

}  // namespace core

using CoreProg = core::Prog;

inline bool equal(const CoreProg& x, const CoreProg& y) {
  using namespace core;
  if (!x || !y) return x == y;
  if (x->data.index() != y->data.index()) return false;
  if (auto* a = as<Int>(x)) return a->v == as<Int>(y)->v;
  if (auto* a = as<Bool>(x)) return a->v == as<Bool>(y)->v;
  if (auto* a = as<Var>(x)) {
    auto* b = as<Var>(y);
    return a->name == b->name && a->index == b->index;
  }
  if (auto* a = as<Eq>(x)) return equal(a->a, as<Eq>(y)->a) && equal(a->b, as<Eq>(y)->b);
  if (auto* a = as<Op>(x)) {
    auto* b = as<Op>(y);
    return a->op == b->op && equal(a->a, b->a) && equal(a->b, b->b);
  }
  if (auto* a = as<Apply>(x)) {
    auto* b = as<Apply>(y);
    return equal(a->f, b->f) && equal(a->arg, b->arg);
  }
  if (auto* a = as<Lambda>(x)) {
    auto* b = as<Lambda>(y);
    return a->name == b->name && equal(a->body, b->body);
  }
  if (auto* a = as<Let>(x)) {
    auto* b = as<Let>(y);
    return a->name == b->name && equal(a->rhs, b->rhs) && equal(a->body, b->body);
  }
  auto* a = as<If>(x);
  auto* b = as<If>(y);
  return equal(a->cond, b->cond) && equal(a->then_, b->then_) && equal(a->else_, b->else_);
}

inline const char* op_name(ArithOp op) {
  switch (op) {
    case ArithOp::Add: return "Add";
    case ArithOp::Sub: return "Sub";
    case ArithOp::Mul: return "Mul";
    case ArithOp::Div: return "Div";
    case ArithOp::Mod: return "Mod";
  }
  return "?";
}

// Constructor notation, e.g. Let (x, Int 5, Var (x, 1)).
inline std::string describe(const CoreProg& p) {
  using namespace core;
  if (auto* n = as<Int>(p)) return "Int " + std::to_string(n->v);
  if (auto* n = as<Bool>(p)) return std::string("Bool ") + (n->v ? "true" : "false");
  if (auto* n = as<Var>(p)) return "Var (" + n->name + ", " + std::to_string(n->index) + ")";
  if (auto* n = as<Eq>(p)) return "Eq (" + describe(n->a) + ", " + describe(n->b) + ")";
  if (auto* n = as<Op>(p))
    return "Op (" + describe(n->a) + ", " + op_name(n->op) + ", " + describe(n->b) + ")";
  if (auto* n = as<Apply>(p)) return "Apply (" + describe(n->f) + ", " + describe(n->arg) + ")";
  if (auto* n = as<Lambda>(p)) return "Lambda (" + n->name + ", " + describe(n->body) + ")";
  if (auto* n = as<Let>(p))
    return "Let (" + n->name + ", " + describe(n->rhs) + ", " + describe(n->body) + ")";
  auto* n = as<If>(p);
  return "If (" + describe(n->cond) + ", " + describe(n->then_) + ", " + describe(n->else_) + ")";
}

struct UnsupportedConstruct : std::runtime_error {
  std::string kind;
  explicit UnsupportedConstruct(const std::string& k)
      : std::runtime_error("not in the bytecode subset: " + k), kind(k) {}
};

namespace detail {

inline const char* node_kind(const Expr& e) {
  static const char* names[] = {"Unit", "Int",    "Bool",     "Char",     "Str",    "Tuple",
                                "Nil",  "Cons",   "Record",   "Constr",   "Var",    "Op",
                                "Cmp",  "And",    "Or",       "If",       "Let",    "Fun",
                                "Function", "App", "Seq",     "While",    "For",    "Field",
                                "SetField", "Raise", "TryWith", "Match",  "Builtin"};
  return names[e->data.index()];
}

inline CoreProg lower(const Expr& e, std::vector<std::string>& scope) {
  using namespace core;
  if (auto* n = stepdbg::as<ex::Int>(e)) return mk(Int{n->v});
  if (auto* n = stepdbg::as<ex::Bool>(e)) return mk(Bool{n->v});
  if (auto* n = stepdbg::as<ex::Var>(e)) {
    for (size_t i = scope.size(); i-- > 0;)
      if (scope[i] == n->name) return mk(Var{n->name, static_cast<int>(scope.size() - i)});
    throw UnsupportedConstruct("free variable " + n->name);
  }
  if (auto* n = stepdbg::as<ex::Cmp>(e)) {
    if (n->op != CmpOp::Eq) throw UnsupportedConstruct("Cmp other than =");
    return mk(Eq{lower(n->a, scope), lower(n->b, scope)});
  }
  if (auto* n = stepdbg::as<ex::Op>(e)) {
    if (n->op == ArithOp::Mod) throw UnsupportedConstruct("Op mod");
    return mk(Op{n->op, lower(n->a, scope), lower(n->b, scope)});
  }
  if (auto* n = stepdbg::as<ex::App>(e)) return mk(Apply{lower(n->f, scope), lower(n->arg, scope)});
  if (auto* n = stepdbg::as<ex::Fun>(e)) {
    auto* pv = stepdbg::as<pt::Var>(n->param);
    if (!pv || !n->env.empty()) throw UnsupportedConstruct("Fun with a pattern or environment");
    scope.push_back(pv->name);
    CoreProg body = lower(n->body, scope);
    scope.pop_back();
    return mk(Lambda{pv->name, body});
  }
  if (auto* n = stepdbg::as<ex::Let>(e)) {
    if (n->rec || n->bindings.size() != 1) throw UnsupportedConstruct("Let rec or let-and");
    auto* pv = stepdbg::as<pt::Var>(n->bindings[0].pat);
    if (!pv) throw UnsupportedConstruct("Let with a pattern");
    CoreProg rhs = lower(n->bindings[0].rhs, scope);
    scope.push_back(pv->name);
    CoreProg body = lower(n->body, scope);
    scope.pop_back();
    return mk(Let{pv->name, rhs, body});
  }
  if (auto* n = stepdbg::as<ex::If>(e)) {
    if (!n->else_) throw UnsupportedConstruct("If without else");
    return mk(If{lower(n->cond, scope), lower(n->then_, scope), lower(n->else_, scope)});
  }
  throw UnsupportedConstruct(node_kind(e));
}

}  // namespace detail

inline CoreProg lower(const Expr& e) {
  std::vector<std::string> scope;
  return detail::lower(e, scope);
}

inline Expr to_expr(const CoreProg& p) {
  using namespace core;
  if (auto* n = as<Int>(p)) return int_(n->v);
  if (auto* n = as<Bool>(p)) return bool_(n->v);
  if (auto* n = as<Var>(p)) return var(n->name);
  if (auto* n = as<Eq>(p)) return cmp(CmpOp::Eq, to_expr(n->a), to_expr(n->b));
  if (auto* n = as<Op>(p)) return op(n->op, to_expr(n->a), to_expr(n->b));
  if (auto* n = as<Apply>(p)) return app(to_expr(n->f), to_expr(n->arg));
  if (auto* n = as<Lambda>(p)) return fun(n->name, to_expr(n->body));
  if (auto* n = as<Let>(p)) return let1(n->name, to_expr(n->rhs), to_expr(n->body));
  auto* n = as<If>(p);
  return if_(to_expr(n->cond), to_expr(n->then_), to_expr(n->else_));
}

inline std::string to_source(const CoreProg& p) { return to_string(to_expr(p)); }

// ---------------------------------------------------------------- instructions

struct Instr {
  enum Kind { EMPTY, INT, BOOL, OPR, EQI, ACCESS, CLOSURE, LETI, ENDLET, APPLY, RETURN, IFI };
  Kind kind = EMPTY;
  std::int64_t i = 0;
  bool b = false;
  ArithOp op = ArithOp::Add;
  std::string name;
  int index = 0;
  std::shared_ptr<const std::vector<Instr>> code;  // CLOSURE body
};

using Code = std::vector<Instr>;

inline Instr instr(Instr::Kind k) {
  Instr i;
  i.kind = k;
  return i;
}

namespace detail {

inline void compile(const CoreProg& p, Code& out) {
  using namespace core;
  auto closure = [&](const std::string& name, const CoreProg& body) {
    auto c = std::make_shared<Code>();
    compile(body, *c);
    c->push_back(instr(Instr::RETURN));
    Instr ins = instr(Instr::CLOSURE);
    ins.name = name;
    ins.code = std::move(c);
    out.push_back(std::move(ins));
  };
  if (auto* n = as<Int>(p)) {
    Instr ins = instr(Instr::INT);
    ins.i = n->v;
    out.push_back(ins);
  } else if (auto* n = as<Bool>(p)) {
    Instr ins = instr(Instr::BOOL);
    ins.b = n->v;
    out.push_back(ins);
  } else if (auto* n = as<Var>(p)) {
    Instr ins = instr(Instr::ACCESS);
    ins.name = n->name;
    ins.index = n->index;
    out.push_back(ins);
  } else if (auto* n = as<Eq>(p)) {
    compile(n->a, out);
    compile(n->b, out);
    out.push_back(instr(Instr::EQI));
  } else if (auto* n = as<Op>(p)) {
    compile(n->a, out);
    compile(n->b, out);
    Instr ins = instr(Instr::OPR);
    ins.op = n->op;
    out.push_back(ins);
  } else if (auto* n = as<Apply>(p)) {
    compile(n->f, out);
    compile(n->arg, out);
    out.push_back(instr(Instr::APPLY));
  } else if (auto* n = as<Lambda>(p)) {
    closure(n->name, n->body);
  } else if (auto* n = as<Let>(p)) {
    compile(n->rhs, out);
    Instr ins = instr(Instr::LETI);
    ins.name = n->name;
    out.push_back(ins);
    compile(n->body, out);
    out.push_back(instr(Instr::ENDLET));
  } else if (auto* n = as<If>(p)) {
    closure("", n->then_);
    closure("", n->else_);
    compile(n->cond, out);
    out.push_back(instr(Instr::IFI));
  }
}

}  // namespace detail

inline Code compile(const CoreProg& p) {
  Code out;
  detail::compile(p, out);
  out.push_back(instr(Instr::EMPTY));
  return out;
}


// The instruction alone, without any closure body.
inline std::string mnemonic(const Instr& ins) {
  switch (ins.kind) {
    case Instr::EMPTY: return "EMPTY";
    case Instr::INT: return "INT " + std::to_string(ins.i);
    case Instr::BOOL: return std::string("BOOL ") + (ins.b ? "true" : "false");
    case Instr::OPR: return std::string("OP ") + arith_symbol(ins.op);
    case Instr::EQI: return "EQ";
    case Instr::ACCESS: return "ACCESS " + std::to_string(ins.index);
    case Instr::CLOSURE: return "CLOSURE";
    case Instr::LETI: return "LET";
    case Instr::ENDLET: return "ENDLET";
    case Instr::APPLY: return "APPLY";
    case Instr::RETURN: return "RETURN";
    case Instr::IFI: return "IF";
  }
  return "?";
}

// One instruction per line, closure bodies indented by two spaces.
inline std::string listing(const Code& code, int indent = 0) {
  std::string out;
  for (auto& ins : code) {
    out += std::string(static_cast<size_t>(indent), ' ') + mnemonic(ins) + '\n';
    if (ins.kind == Instr::CLOSURE) out += listing(*ins.code, indent + 2);
  }
  return out;
}

// Inline form: INT 5; LET; CLOSURE [INT 1; RETURN]
inline std::string to_string(const Code& code, size_t from = 0) {
  std::string out;
  for (size_t k = from; k < code.size(); ++k) {
    if (k > from) out += "; ";
    out += mnemonic(code[k]);
    if (code[k].kind == Instr::CLOSURE) out += " [" + to_string(*code[k].code) + "]";
  }
  return out;
}

// ---------------------------------------------------------------- the machine

struct MachineValue;
using MachineEnv = std::vector<MachineValue>;  // innermost first

struct CodePtr {
  std::shared_ptr<const Code> code;
  size_t pc = 0;

  bool at_end() const { return !code || pc >= code->size(); }
  const Instr& head() const { return (*code)[pc]; }
  CodePtr next() const { return {code, pc + 1}; }
};

struct Closure {
  CodePtr code;
  std::shared_ptr<const MachineEnv> env;
  std::string name;
};

struct MachineValue {
  std::variant<std::int64_t, bool, std::shared_ptr<const Closure>> v;
};

struct SavedCode { CodePtr code; };
struct SavedEnv { std::shared_ptr<const MachineEnv> env; };
using StackItem = std::variant<MachineValue, SavedCode, SavedEnv>;

struct MachineState {
  CodePtr code;
  std::shared_ptr<const MachineEnv> env = std::make_shared<const MachineEnv>();
  std::vector<StackItem> stack;  // top last
};

inline std::string to_string(const MachineEnv& env);

inline std::string to_string(const MachineValue& v) {
  if (auto* i = std::get_if<std::int64_t>(&v.v)) return std::to_string(*i);
  if (auto* b = std::get_if<bool>(&v.v)) return *b ? "true" : "false";
  auto& c = std::get<std::shared_ptr<const Closure>>(v.v);
  return "[" + to_string(*c->code.code, c->code.pc) + "]" + to_string(*c->env);
}

inline std::string to_string(const MachineEnv& env) {
  std::string out = "{";
  for (size_t k = 0; k < env.size(); ++k) {
    if (k) out += "; ";
    out += to_string(env[k]);
  }
  return out + "}";
}

inline std::string to_string(const MachineState& s) {
  std::string out = "code: " + (s.code.at_end() ? "" : to_string(*s.code.code, s.code.pc));
  out += "\nenv: " + to_string(*s.env) + "\nstack: {";
  for (size_t k = s.stack.size(); k-- > 0;) {
    if (k + 1 != s.stack.size()) out += "; ";
    const StackItem& it = s.stack[k];
    if (auto* v = std::get_if<MachineValue>(&it))
      out += to_string(*v);
    else if (auto* c = std::get_if<SavedCode>(&it))
      out += "[" + (c->code.at_end() ? "" : to_string(*c->code.code, c->code.pc)) + "]";
    else
      out += to_string(*std::get<SavedEnv>(it).env);
  }
  return out + "}";
}

struct MachineStuck : std::runtime_error {
  explicit MachineStuck(const MachineState& s)
      : std::runtime_error("machine stuck at\n" + to_string(s)) {}
};

// The machine's only run-time failure; mirrors Division_by_zero.
struct MachineDivisionByZero : std::runtime_error {
  MachineDivisionByZero() : std::runtime_error("Division_by_zero") {}
};

inline MachineState initial_state(const Code& code) {
  MachineState s;
  s.code = {std::make_shared<const Code>(code), 0};
  return s;
}

inline bool finished(const MachineState& s) {
  return s.code.at_end() || s.code.head().kind == Instr::EMPTY;
}

inline MachineState machine_step(MachineState s) {
  if (finished(s)) throw MachineStuck(s);
  const Instr ins = s.code.head();
  CodePtr rest = s.code.next();
  auto pop_value = [&]() -> MachineValue {
    if (s.stack.empty() || !std::holds_alternative<MachineValue>(s.stack.back()))
      throw MachineStuck(s);
    MachineValue v = std::get<MachineValue>(s.stack.back());
    s.stack.pop_back();
    return v;
  };
  auto pop_int = [&]() {
    MachineValue v = pop_value();
    auto* i = std::get_if<std::int64_t>(&v.v);
    if (!i) throw MachineStuck(s);
    return *i;
  };
  auto pop_closure = [&]() {
    MachineValue v = pop_value();
    auto* c = std::get_if<std::shared_ptr<const Closure>>(&v.v);
    if (!c) throw MachineStuck(s);
    return *c;
  };
  auto push = [&](MachineValue v) { s.stack.emplace_back(std::move(v)); };
  auto extend = [](const std::shared_ptr<const MachineEnv>& env, MachineValue v) {
    auto e = std::make_shared<MachineEnv>();
    e->reserve(env->size() + 1);
    e->push_back(std::move(v));
    e->insert(e->end(), env->begin(), env->end());
    return std::shared_ptr<const MachineEnv>(std::move(e));
  };
  switch (ins.kind) {
    case Instr::EMPTY: throw MachineStuck(s);
    case Instr::INT: push({ins.i}); break;
    case Instr::BOOL: push({ins.b}); break;
    case Instr::OPR: {
      std::int64_t b = pop_int(), a = pop_int();
      std::uint64_t ua = static_cast<std::uint64_t>(a), ub = static_cast<std::uint64_t>(b);
      std::int64_t r = 0;
      switch (ins.op) {
        case ArithOp::Add: r = static_cast<std::int64_t>(ua + ub); break;
        case ArithOp::Sub: r = static_cast<std::int64_t>(ua - ub); break;
        case ArithOp::Mul: r = static_cast<std::int64_t>(ua * ub); break;
        case ArithOp::Div:
        case ArithOp::Mod:
          if (b == 0) throw MachineDivisionByZero();
          if (b == -1)
            r = ins.op == ArithOp::Div ? static_cast<std::int64_t>(0 - ua) : 0;
          else
            r = ins.op == ArithOp::Div ? a / b : a % b;
          break;
      }
      push({r});
      break;
    }
    case Instr::EQI: {
      MachineValue b = pop_value(), a = pop_value();
      if (a.v.index() != b.v.index() || a.v.index() == 2) throw MachineStuck(s);
      push({a.v == b.v});
      break;
    }
    case Instr::ACCESS:
      if (ins.index < 1 || static_cast<size_t>(ins.index) > s.env->size()) throw MachineStuck(s);
      push((*s.env)[static_cast<size_t>(ins.index - 1)]);
      break;
    case Instr::CLOSURE:
      push({std::make_shared<const Closure>(Closure{{ins.code, 0}, s.env, ins.name})});
      break;
    case Instr::LETI: s.env = extend(s.env, pop_value()); break;
    case Instr::ENDLET: {
      if (s.env->empty()) throw MachineStuck(s);
      s.env = std::make_shared<const MachineEnv>(s.env->begin() + 1, s.env->end());
      break;
    }
    case Instr::APPLY: {
      MachineValue v = pop_value();
      auto c = pop_closure();
      s.stack.emplace_back(SavedEnv{s.env});
      s.stack.emplace_back(SavedCode{rest});
      s.code = c->code;
      s.env = extend(c->env, std::move(v));
      return s;
    }
    case Instr::RETURN: {
      if (s.stack.size() < 3 || !std::holds_alternative<MachineValue>(s.stack.back()) ||
          !std::holds_alternative<SavedCode>(s.stack[s.stack.size() - 2]) ||
          !std::holds_alternative<SavedEnv>(s.stack[s.stack.size() - 3]))
        throw MachineStuck(s);
      MachineValue v = pop_value();
      CodePtr c = std::get<SavedCode>(s.stack.back()).code;
      s.stack.pop_back();
      auto e = std::get<SavedEnv>(s.stack.back()).env;
      s.stack.pop_back();
      push(std::move(v));
      s.code = c;
      s.env = e;
      return s;
    }
    case Instr::IFI: {
      MachineValue cond = pop_value();
      auto* b = std::get_if<bool>(&cond.v);
      if (!b) throw MachineStuck(s);
      auto else_c = pop_closure();
      auto then_c = pop_closure();
      auto& chosen = *b ? then_c : else_c;
      s.stack.emplace_back(SavedEnv{s.env});
      s.stack.emplace_back(SavedCode{rest});
      s.code = chosen->code;
      s.env = chosen->env;
      return s;
    }
  }
  s.code = rest;
  return s;
}

inline MachineValue machine_run(const Code& code, std::uint64_t max_steps = 0) {
  MachineState s = initial_state(code);
  std::uint64_t n = 0;
  while (!finished(s)) {
    s = machine_step(std::move(s));
    if (max_steps && ++n > max_steps) throw std::runtime_error("machine step limit exceeded");
  }
  if (s.stack.size() != 1 || !std::holds_alternative<MachineValue>(s.stack.back()))
    throw MachineStuck(s);
  return std::get<MachineValue>(s.stack.back());
}

// ---------------------------------------------------------------- decompilation

struct DecompileStuck : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// What a variable index refers to while decompiling: a binder that is shown in
// the output (nullopt) or a value already held in a machine environment.
using DecompileScope = std::vector<std::optional<CoreProg>>;

struct CloFrag {
  CodePtr code;
  std::string name;
  DecompileScope scope;
};

using Frag = std::variant<CoreProg, CloFrag, SavedCode, SavedEnv>;

inline DecompileScope scope_of(const MachineEnv& env);

inline CoreProg decompile(CodePtr c, std::vector<Frag> stack, DecompileScope scope);

inline CoreProg lambda_of(const CloFrag& f) {
  DecompileScope inner = f.scope;
  inner.insert(inner.begin(), std::nullopt);
  return core::mk(core::Lambda{f.name, decompile(f.code, {}, std::move(inner))});
}

inline CoreProg value_prog(const MachineValue& v) {
  if (auto* i = std::get_if<std::int64_t>(&v.v)) return core::mk(core::Int{*i});
  if (auto* b = std::get_if<bool>(&v.v)) return core::mk(core::Bool{*b});
  auto& c = std::get<std::shared_ptr<const Closure>>(v.v);
  return lambda_of(CloFrag{c->code, c->name, scope_of(*c->env)});
}

inline DecompileScope scope_of(const MachineEnv& env) {
  DecompileScope s;
  for (auto& v : env) s.push_back(value_prog(v));
  return s;
}

inline Frag frag_of(const StackItem& it) {
  if (auto* v = std::get_if<MachineValue>(&it)) {
    if (auto* c = std::get_if<std::shared_ptr<const Closure>>(&v->v))
      return CloFrag{(*c)->code, (*c)->name, scope_of(*(*c)->env)};
    return value_prog(*v);
  }
  if (auto* c = std::get_if<SavedCode>(&it)) return *c;
  return std::get<SavedEnv>(it);
}

// Index of the ENDLET closing the LET just before `from`, or npos.
inline size_t matching_endlet(const Code& code, size_t from) {
  int depth = 0;
  for (size_t k = from; k < code.size(); ++k) {
    if (code[k].kind == Instr::LETI) ++depth;
    if (code[k].kind == Instr::ENDLET) {
      if (depth == 0) return k;
      --depth;
    }
  }
  return std::string::npos;
}

inline CoreProg decompile(CodePtr c, std::vector<Frag> stack, DecompileScope scope) {
  auto stuck = [&](const std::string& why) -> DecompileStuck {
    return DecompileStuck("cannot decompile: " + why);
  };
  auto pop_prog = [&]() -> CoreProg {
    if (stack.empty()) throw stuck("empty stack");
    if (auto* p = std::get_if<CoreProg>(&stack.back())) {
      CoreProg r = *p;
      stack.pop_back();
      return r;
    }
    if (auto* f = std::get_if<CloFrag>(&stack.back())) {
      CoreProg r = lambda_of(*f);
      stack.pop_back();
      return r;
    }
    throw stuck("expected a program fragment");
  };
  auto pop_clo = [&]() -> CloFrag {
    if (stack.empty() || !std::holds_alternative<CloFrag>(stack.back()))
      throw stuck("expected a closure");
    CloFrag f = std::get<CloFrag>(stack.back());
    stack.pop_back();
    return f;
  };
  for (;;) {
    if (c.at_end() || c.head().kind == Instr::EMPTY) return pop_prog();
    const Instr& ins = c.head();
    CodePtr rest = c.next();
    switch (ins.kind) {
      case Instr::EMPTY: break;
      case Instr::INT: stack.emplace_back(core::mk(core::Int{ins.i})); break;
      case Instr::BOOL: stack.emplace_back(core::mk(core::Bool{ins.b})); break;
      case Instr::OPR: {
        CoreProg b = pop_prog(), a = pop_prog();
        stack.emplace_back(core::mk(core::Op{ins.op, a, b}));
        break;
      }
      case Instr::EQI: {
        CoreProg b = pop_prog(), a = pop_prog();
        stack.emplace_back(core::mk(core::Eq{a, b}));
        break;
      }
      case Instr::ACCESS: {
        size_t k = static_cast<size_t>(ins.index - 1);
        if (ins.index >= 1 && k < scope.size() && scope[k])
          stack.emplace_back(*scope[k]);
        else
          stack.emplace_back(core::mk(core::Var{ins.name, ins.index}));
        break;
      }
      case Instr::CLOSURE: stack.emplace_back(CloFrag{{ins.code, 0}, ins.name, scope}); break;
      case Instr::LETI: {
        CoreProg v = pop_prog();
        DecompileScope inner = scope;
        inner.insert(inner.begin(), std::nullopt);
        size_t end = matching_endlet(*c.code, rest.pc);
        if (end == std::string::npos)
          return core::mk(core::Let{ins.name, v, decompile(rest, std::move(stack), inner)});
        auto body_code = std::make_shared<Code>(c.code->begin() + static_cast<long>(rest.pc),
                                                c.code->begin() + static_cast<long>(end));
        CoreProg body = decompile({body_code, 0}, {}, std::move(inner));
        stack.emplace_back(core::mk(core::Let{ins.name, v, body}));
        rest = {c.code, end + 1};
        break;
      }
      case Instr::ENDLET: break;
      case Instr::APPLY: {
        CoreProg v = pop_prog();
        CoreProg f = pop_prog();
        stack.emplace_back(core::mk(core::Apply{f, v}));
        break;
      }
      case Instr::RETURN: {
        size_t n = stack.size();
        if (n >= 3 && std::holds_alternative<CoreProg>(stack[n - 1]) &&
            std::holds_alternative<SavedCode>(stack[n - 2]) &&
            std::holds_alternative<SavedEnv>(stack[n - 3])) {
          CoreProg v = std::get<CoreProg>(stack[n - 1]);
          CodePtr back = std::get<SavedCode>(stack[n - 2]).code;
          scope = scope_of(*std::get<SavedEnv>(stack[n - 3]).env);
          stack.resize(n - 3);
          stack.emplace_back(v);
          c = back;
          continue;
        }
        break;
      }
      case Instr::IFI: {
        CoreProg cond = pop_prog();
        CloFrag else_c = pop_clo();
        CloFrag then_c = pop_clo();
        stack.emplace_back(core::mk(core::If{cond, decompile(then_c.code, {}, then_c.scope),
                                             decompile(else_c.code, {}, else_c.scope)}));
        break;
      }
    }
    c = rest;
  }
}

}  // namespace detail

// Decompiles code together with a stack of machine items. Variables held in
// `env` are replaced by their values.
inline CoreProg decompile(const Code& code, const std::vector<StackItem>& stack = {},
                          const MachineEnv& env = {}) {
  std::vector<detail::Frag> frags;
  for (auto& it : stack) frags.push_back(detail::frag_of(it));
  return detail::decompile({std::make_shared<const Code>(code), 0}, std::move(frags),
                           detail::scope_of(env));
}

inline CoreProg decompile(const MachineState& s) {
  std::vector<detail::Frag> frags;
  for (auto& it : s.stack) frags.push_back(detail::frag_of(it));
  return detail::decompile(s.code, std::move(frags), detail::scope_of(*s.env));
}

inline bool is_interesting(const Instr& prev) {
  return prev.kind == Instr::ACCESS || prev.kind == Instr::IFI || prev.kind == Instr::OPR ||
         prev.kind == Instr::EQI;
}

// The source line, then the decompiled state after each interesting step and
// at the end, with consecutive repeats removed.
inline std::vector<std::string> bytecode_trace(const CoreProg& p, std::uint64_t max_steps = 0) {
  std::vector<std::string> lines = {to_source(p)};
  auto add = [&](const std::string& l) {
    if (lines.back() != l) lines.push_back(l);
  };
  MachineState s = initial_state(compile(p));
  std::uint64_t n = 0;
  while (!finished(s)) {
    Instr prev = s.code.head();
    s = machine_step(std::move(s));
    if (is_interesting(prev)) add(to_source(decompile(s)));
    if (max_steps && ++n > max_steps) throw std::runtime_error("machine step limit exceeded");
  }
  add(to_source(decompile(s)));
  return lines;
}

}  // namespace stepdbg
