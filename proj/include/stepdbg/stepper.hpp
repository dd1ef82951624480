// Single-step reduction engine.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ast.hpp"
#include "render.hpp"

namespace stepdbg {

// ---------------------------------------------------------------- classification

struct LastOp {
  enum Kind { Arith, Boolean, Comparison, IfBool, InsideBuiltIn, VarLookup, Other };
  Kind kind = Other;
  std::string descriptor;

  bool operator==(const LastOp& o) const { return kind == o.kind && descriptor == o.descriptor; }
  static LastOp other(std::string d) { return {Other, std::move(d)}; }
};

inline std::string to_string(const LastOp& op) {
  switch (op.kind) {
    case LastOp::Arith: return "Arith";
    case LastOp::Boolean: return "Boolean";
    case LastOp::Comparison: return "Comparison";
    case LastOp::IfBool: return "IfBool";
    case LastOp::InsideBuiltIn: return "InsideBuiltIn";
    case LastOp::VarLookup: return "VarLookup";
    case LastOp::Other: return "Other(" + op.descriptor + ")";
  }
  return "?";
}

// ---------------------------------------------------------------- errors

struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PeekOnValue : std::logic_error {
  PeekOnValue() : std::logic_error("peek on a value") {}
};
struct DuplicateBuiltin : std::runtime_error {
  explicit DuplicateBuiltin(const std::string& n) : std::runtime_error("duplicate builtin " + n) {}
};
struct CompareFunction : std::runtime_error {
  CompareFunction() : std::runtime_error("compare: functional value") {}
};
struct StepLimitExceeded : std::runtime_error {
  explicit StepLimitExceeded(std::uint64_t n)
      : std::runtime_error("step limit of " + std::to_string(n) + " exceeded") {}
};

// Thrown by host functions to raise a MiniML exception.
struct HostRaise {
  std::string name;
  Expr payload;
};

// ---------------------------------------------------------------- environments

struct EnvNode;
using EnvPtr = std::shared_ptr<const EnvNode>;
struct EnvNode {
  EnvItem item;
  EnvPtr next;
};

using BuiltinTable = std::map<std::string, Expr>;

struct Env {
  EnvPtr items;  // innermost first
  std::shared_ptr<const BuiltinTable> builtins = std::make_shared<BuiltinTable>();

  Env push(EnvItem item) const {
    return {std::make_shared<EnvNode>(EnvNode{std::move(item), items}), builtins};
  }
  Env with_items(EnvPtr p) const { return {std::move(p), builtins}; }
};

struct Lookup {
  Expr value;
  const EnvNode* node = nullptr;  // binding group, null for builtins
};

inline std::optional<Lookup> lookup(const Env& env, const std::string& name) {
  for (const EnvNode* n = env.items.get(); n; n = n->next.get())
    for (auto& b : n->item.bindings)
      if (b.first == name) return Lookup{b.second, n};
  auto it = env.builtins->find(name);
  if (it != env.builtins->end()) return Lookup{it->second, nullptr};
  return std::nullopt;
}

inline BuiltinTable register_builtin(const BuiltinTable& table, const std::string& name, int arity,
                                     HostFn fn) {
  if (arity < 1) throw std::invalid_argument("builtin arity must be at least 1");
  if (table.count(name)) throw DuplicateBuiltin(name);
  BuiltinTable t = table;
  t[name] = make(ex::Builtin{name, arity, {}, std::make_shared<const HostFn>(std::move(fn))});
  return t;
}

namespace detail {

inline std::vector<Expr> list_items(const Expr& l) {
  std::vector<Expr> out;
  const Expr* cur = &l;
  while (auto* c = as<ex::Cons>(*cur)) {
    out.push_back(c->head);
    cur = &c->tail;
  }
  if (!as<ex::Nil>(*cur)) throw BuiltinTypeError("expected a list");
  return out;
}

inline const ex::Record& ref_cell(const Expr& e) {
  auto* r = as<ex::Record>(e);
  if (!r || r->fields.size() != 1 || r->fields[0].name != "contents")
    throw BuiltinTypeError("expected a reference");
  return *r;
}

}  // namespace detail

inline BuiltinTable prelude() {
  BuiltinTable t;
  auto out = [](BuiltinContext& c) -> std::ostream& {
    static std::ostream null(nullptr);
    return c.out ? *c.out : null;
  };
  t = register_builtin(t, "print_int", 1, [out](const std::vector<Expr>& a, BuiltinContext& c) {
    auto* i = as<ex::Int>(a[0]);
    if (!i) throw BuiltinTypeError("print_int expects an integer");
    out(c) << i->v;
    return unit();
  });
  t = register_builtin(t, "print_string", 1, [out](const std::vector<Expr>& a, BuiltinContext& c) {
    auto* s = as<ex::Str>(a[0]);
    if (!s) throw BuiltinTypeError("print_string expects a string");
    out(c) << s->v;
    return unit();
  });
  t = register_builtin(t, "print_char", 1, [out](const std::vector<Expr>& a, BuiltinContext& c) {
    auto* ch = as<ex::Char>(a[0]);
    if (!ch) throw BuiltinTypeError("print_char expects a character");
    std::string s;
    append_utf8(s, ch->v);
    out(c) << s;
    return unit();
  });
  t = register_builtin(t, "ref", 1, [](const std::vector<Expr>& a, BuiltinContext&) {
    return record({{"contents", a[0]}});
  });
  t = register_builtin(t, "!", 1, [](const std::vector<Expr>& a, BuiltinContext&) {
    return detail::ref_cell(a[0]).fields[0].cell->value;
  });
  t = register_builtin(t, ":=", 2, [](const std::vector<Expr>& a, BuiltinContext&) {
    detail::ref_cell(a[0]).fields[0].cell->value = a[1];
    return unit();
  });
  t = register_builtin(t, "failwith", 1, [](const std::vector<Expr>& a, BuiltinContext&) -> Expr {
    if (!as<ex::Str>(a[0])) throw BuiltinTypeError("failwith expects a string");
    throw HostRaise{"Failure", a[0]};
  });
  t = register_builtin(t, "invalid_arg", 1, [](const std::vector<Expr>& a, BuiltinContext&) -> Expr {
    if (!as<ex::Str>(a[0])) throw BuiltinTypeError("invalid_arg expects a string");
    throw HostRaise{"Invalid_argument", a[0]};
  });
  t = register_builtin(t, "@", 2, [](const std::vector<Expr>& a, BuiltinContext&) {
    auto xs = detail::list_items(a[0]);
    detail::list_items(a[1]);
    Expr r = a[1];
    for (auto it = xs.rbegin(); it != xs.rend(); ++it) r = cons(*it, r);
    return r;
  });
  return t;
}

inline Env initial_env(BuiltinTable builtins = prelude()) {
  Env e;
  e.builtins = std::make_shared<const BuiltinTable>(std::move(builtins));
  return e;
}

// ---------------------------------------------------------------- comparison

enum class Ordering { LT, EQ, GT };

namespace detail {

enum class Shape { Unit, Int, Bool, Char, Str, List, Tuple, Record, Constr, Function, Other };

inline Shape shape(const Expr& e) {
  return std::visit(
      [](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ex::Unit>) return Shape::Unit;
        else if constexpr (std::is_same_v<T, ex::Int>) return Shape::Int;
        else if constexpr (std::is_same_v<T, ex::Bool>) return Shape::Bool;
        else if constexpr (std::is_same_v<T, ex::Char>) return Shape::Char;
        else if constexpr (std::is_same_v<T, ex::Str>) return Shape::Str;
        else if constexpr (std::is_same_v<T, ex::Nil> || std::is_same_v<T, ex::Cons>)
          return Shape::List;
        else if constexpr (std::is_same_v<T, ex::Tuple>) return Shape::Tuple;
        else if constexpr (std::is_same_v<T, ex::Record>) return Shape::Record;
        else if constexpr (std::is_same_v<T, ex::Constr>) return Shape::Constr;
        else if constexpr (std::is_same_v<T, ex::Fun> || std::is_same_v<T, ex::Function> ||
                           std::is_same_v<T, ex::Builtin>)
          return Shape::Function;
        else
          return Shape::Other;
      },
      e->data);
}

template <class T>
Ordering order_of(const T& a, const T& b) {
  return a < b ? Ordering::LT : (b < a ? Ordering::GT : Ordering::EQ);
}

}  // namespace detail

// Structural comparison of values.
inline Ordering poly_compare(const Expr& a, const Expr& b) {
  using detail::Shape;
  Shape sa = detail::shape(a), sb = detail::shape(b);
  if (sa == Shape::Function || sb == Shape::Function) throw CompareFunction();
  if (sa != sb) return detail::order_of(static_cast<int>(sa), static_cast<int>(sb));
  switch (sa) {
    case Shape::Unit: return Ordering::EQ;
    case Shape::Int: return detail::order_of(as<ex::Int>(a)->v, as<ex::Int>(b)->v);
    case Shape::Bool: return detail::order_of(as<ex::Bool>(a)->v, as<ex::Bool>(b)->v);
    case Shape::Char: return detail::order_of(as<ex::Char>(a)->v, as<ex::Char>(b)->v);
    case Shape::Str: return detail::order_of(as<ex::Str>(a)->v, as<ex::Str>(b)->v);
    case Shape::List: {
      auto* ca = as<ex::Cons>(a);
      auto* cb = as<ex::Cons>(b);
      if (!ca || !cb) return detail::order_of(ca != nullptr, cb != nullptr);
      Ordering h = poly_compare(ca->head, cb->head);
      return h != Ordering::EQ ? h : poly_compare(ca->tail, cb->tail);
    }
    case Shape::Tuple: {
      auto& x = as<ex::Tuple>(a)->items;
      auto& y = as<ex::Tuple>(b)->items;
      for (size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        Ordering o = poly_compare(x[i], y[i]);
        if (o != Ordering::EQ) return o;
      }
      return detail::order_of(x.size(), y.size());
    }
    case Shape::Record: {
      auto& x = as<ex::Record>(a)->fields;
      auto& y = as<ex::Record>(b)->fields;
      for (size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        Ordering o = poly_compare(x[i].cell->value, y[i].cell->value);
        if (o != Ordering::EQ) return o;
      }
      return detail::order_of(x.size(), y.size());
    }
    case Shape::Constr: {
      auto* x = as<ex::Constr>(a);
      auto* y = as<ex::Constr>(b);
      bool px = x->payload != nullptr, py = y->payload != nullptr;
      if (px != py) return detail::order_of(px, py);
      if (x->tag != y->tag) return detail::order_of(x->tag, y->tag);
      if (x->name != y->name) return detail::order_of(x->name, y->name);
      return px ? poly_compare(x->payload, y->payload) : Ordering::EQ;
    }
    default: throw InternalError("comparison of non-values");
  }
}

// Shape-class approximation of "has the same type", one structural level deep.
inline bool check_same_type(const Expr& a, const Expr& b) {
  using detail::Shape;
  Shape sa = detail::shape(a), sb = detail::shape(b);
  if (sa != sb) return false;
  if (sa == Shape::List) {
    auto* ca = as<ex::Cons>(a);
    auto* cb = as<ex::Cons>(b);
    if (ca && cb) return detail::shape(ca->head) == detail::shape(cb->head);
    return true;
  }
  if (sa == Shape::Tuple) {
    auto& x = as<ex::Tuple>(a)->items;
    auto& y = as<ex::Tuple>(b)->items;
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (detail::shape(x[i]) != detail::shape(y[i])) return false;
    return true;
  }
  if (sa == Shape::Record) {
    auto& x = as<ex::Record>(a)->fields;
    auto& y = as<ex::Record>(b)->fields;
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (x[i].name != y[i].name) return false;
    return true;
  }
  return true;
}

// ---------------------------------------------------------------- pattern matching

using PatBindings = std::vector<std::pair<std::string, Expr>>;

// Collects bindings in the order the matching rules thread them: for a cons
// pattern the head is matched first and the tail wraps outside it, so later
// entries end up outermost.
inline bool match_bindings(const Expr& v, const Pattern& p, PatBindings& out) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, pt::Any>) return true;
        else if constexpr (std::is_same_v<T, pt::Var>) {
          out.emplace_back(n.name, v);
          return true;
        } else if constexpr (std::is_same_v<T, pt::Int>) {
          auto* i = as<ex::Int>(v);
          return i && i->v == n.v;
        } else if constexpr (std::is_same_v<T, pt::Bool>) {
          auto* b = as<ex::Bool>(v);
          return b && b->v == n.v;
        } else if constexpr (std::is_same_v<T, pt::Char>) {
          auto* c = as<ex::Char>(v);
          return c && c->v == n.v;
        } else if constexpr (std::is_same_v<T, pt::CharRange>) {
          auto* c = as<ex::Char>(v);
          return c && c->v >= n.lo && c->v <= n.hi;
        } else if constexpr (std::is_same_v<T, pt::Str>) {
          auto* s = as<ex::Str>(v);
          return s && s->v == n.v;
        } else if constexpr (std::is_same_v<T, pt::Unit>) {
          return as<ex::Unit>(v) != nullptr;
        } else if constexpr (std::is_same_v<T, pt::Nil>) {
          return as<ex::Nil>(v) != nullptr;
        } else if constexpr (std::is_same_v<T, pt::Cons>) {
          auto* c = as<ex::Cons>(v);
          return c && match_bindings(c->head, n.head, out) && match_bindings(c->tail, n.tail, out);
        } else if constexpr (std::is_same_v<T, pt::Tuple>) {
          auto* t = as<ex::Tuple>(v);
          if (!t || t->items.size() != n.items.size()) return false;
          for (size_t i = 0; i < n.items.size(); ++i)
            if (!match_bindings(t->items[i], n.items[i], out)) return false;
          return true;
        } else if constexpr (std::is_same_v<T, pt::Constr>) {
          auto* c = as<ex::Constr>(v);
          if (!c || c->name != n.name) return false;
          if (!n.payload) return true;
          return c->payload && match_bindings(c->payload, n.payload, out);
        } else if constexpr (std::is_same_v<T, pt::Record>) {
          auto* r = as<ex::Record>(v);
          if (!r) return false;
          for (auto& [name, fp] : n.fields) {
            const RecordField* f = nullptr;
            for (auto& rf : r->fields)
              if (rf.name == name) f = &rf;
            if (!f || !match_bindings(f->cell->value, fp, out)) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<T, pt::Alias>) {
          if (!match_bindings(v, n.pat, out)) return false;
          out.emplace_back(n.name, v);
          return true;
        } else if constexpr (std::is_same_v<T, pt::Or>) {
          size_t mark = out.size();
          if (match_bindings(v, n.a, out)) return true;
          out.resize(mark);
          return match_bindings(v, n.b, out);
        }
      },
      p->data);
}

// rhs wrapped in non-recursive lets for each matched variable, or nothing.
inline std::optional<Expr> matches(const Expr& subject, const Pattern& p, const Expr& rhs) {
  PatBindings bs;
  if (!match_bindings(subject, p, bs)) return std::nullopt;
  Expr r = rhs;
  for (auto& [name, v] : bs) r = let1(name, v, r);
  return r;
}

// ---------------------------------------------------------------- options & outcomes

struct EvalOptions {
  bool fast_curry = false;
  bool fast_for = false;
  bool no_typecheck = false;
  std::uint64_t max_steps = 0;  // 0 = unlimited
};

struct StepOutcome {
  enum Kind { Next, AlreadyValue, Uncaught, RunTimeTypeError };
  Kind kind = AlreadyValue;
  Expr expr;          // Next
  LastOp op;          // Next
  std::string name;   // Uncaught exception name
  Expr payload;       // Uncaught payload
  std::string message;  // RunTimeTypeError
};

struct PeekResult {
  LastOp op;
  const Node* redex = nullptr;
};

// ---------------------------------------------------------------- the engine

namespace detail {

struct Peeked {
  LastOp op;
  const Node* redex;
};

struct Raised {
  std::string name;
  Expr payload;
  Env env;
};

struct TypeErr {
  std::string message;
};

inline bool names_free_in(const NameSet& names, const Expr& e) {
  if (names.empty()) return false;
  NameSet fv = free_vars(e);
  for (auto& n : names)
    if (fv.count(n)) return true;
  return false;
}

// Fresh record cells for record literals, leaving function bodies alone.
inline Expr freshen(const Expr& e);

inline std::vector<Case> freshen_cases(const std::vector<Case>& cs) {
  std::vector<Case> out;
  for (auto& c : cs) out.push_back({c.pat, c.guard ? freshen(c.guard) : nullptr, freshen(c.rhs)});
  return out;
}

inline Expr freshen(const Expr& e) {
  if (!e || !e->has_record) return e;
  auto f = [](const Expr& x) { return freshen(x); };
  NodeData d = std::visit(
      [&](const auto& n) -> NodeData {
        using T = std::decay_t<decltype(n)>;
        T c = n;
        if constexpr (std::is_same_v<T, ex::Tuple>) {
          for (auto& i : c.items) i = f(i);
        } else if constexpr (std::is_same_v<T, ex::Cons>) {
          c.head = f(c.head), c.tail = f(c.tail);
        } else if constexpr (std::is_same_v<T, ex::Record>) {
          for (auto& fl : c.fields) fl.cell = std::make_shared<Cell>(Cell{f(fl.cell->value)});
        } else if constexpr (std::is_same_v<T, ex::Constr> || std::is_same_v<T, ex::Raise>) {
          c.payload = f(c.payload);
        } else if constexpr (std::is_same_v<T, ex::Op> || std::is_same_v<T, ex::Cmp> ||
                             std::is_same_v<T, ex::And> || std::is_same_v<T, ex::Or> ||
                             std::is_same_v<T, ex::Seq>) {
          c.a = f(c.a), c.b = f(c.b);
        } else if constexpr (std::is_same_v<T, ex::If>) {
          c.cond = f(c.cond), c.then_ = f(c.then_), c.else_ = f(c.else_);
        } else if constexpr (std::is_same_v<T, ex::Let>) {
          for (auto& b : c.bindings) b.rhs = f(b.rhs);
          c.body = f(c.body);
        } else if constexpr (std::is_same_v<T, ex::App>) {
          c.f = f(c.f), c.arg = f(c.arg);
        } else if constexpr (std::is_same_v<T, ex::While>) {
          c.guard = f(c.guard), c.body = f(c.body);
        } else if constexpr (std::is_same_v<T, ex::For>) {
          c.from = f(c.from), c.to = f(c.to), c.body = f(c.body);
        } else if constexpr (std::is_same_v<T, ex::Field>) {
          c.rec = f(c.rec);
        } else if constexpr (std::is_same_v<T, ex::SetField>) {
          c.rec = f(c.rec), c.value = f(c.value);
        } else if constexpr (std::is_same_v<T, ex::TryWith>) {
          c.body = f(c.body);
          c.cases = freshen_cases(c.cases);
        } else if constexpr (std::is_same_v<T, ex::Match>) {
          c.subject = f(c.subject);
          c.cases = freshen_cases(c.cases);
        } else if constexpr (std::is_same_v<T, ex::Builtin>) {
          for (auto& a : c.args) a = f(a);
        }
        return c;
      },
      e->data);
  return make(std::move(d), e->print_as);
}

inline NameSet names_until(const EnvNode* from, const EnvNode* stop, bool inclusive) {
  NameSet s;
  for (const EnvNode* n = from; n; n = n->next.get()) {
    if (n == stop && !inclusive) break;
    for (auto& b : n->item.bindings) s.insert(b.first);
    if (n == stop) break;
  }
  return s;
}

}  // namespace detail

// Makes a value self-contained with respect to `hidden`: names in that set
// may mean something else where the value is going, so any function value
// that refers to them captures their bindings (looked up in `site`).
inline Expr close(const Expr& v, const NameSet& hidden, const EnvPtr& site);

namespace detail {

inline ClosureEnv capture(const NameSet& need, const NameSet& hidden, const EnvPtr& site) {
  struct Group {
    const EnvNode* node;
    EnvPtr ptr;
    NameSet names;
  };
  std::vector<Group> groups;  // innermost first
  NameSet remaining = need;
  for (EnvPtr n = site; n && !remaining.empty(); n = n->next) {
    NameSet here;
    for (auto& b : n->item.bindings)
      if (remaining.count(b.first)) here.insert(b.first);
    if (here.empty()) continue;
    for (auto& x : here) remaining.erase(x);
    groups.push_back({n.get(), n, here});
  }
  ClosureEnv captured;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    const EnvNode* node = it->node;
    EnvItem item;
    item.rec = node->item.rec;
    NameSet between = names_until(site.get(), node, !node->item.rec);
    NameSet h2 = hidden;
    h2.insert(between.begin(), between.end());
    if (node->item.rec) {
      for (auto& b : node->item.bindings) h2.erase(b.first);
      EnvPtr inner = it->ptr;
      for (auto& b : node->item.bindings) item.bindings.emplace_back(b.first, close(b.second, h2, inner));
    } else {
      EnvPtr outer = it->ptr->next;
      for (auto& b : node->item.bindings)
        if (it->names.count(b.first)) item.bindings.emplace_back(b.first, close(b.second, h2, outer));
    }
    captured.push_back(std::move(item));
  }
  return captured;
}

}  // namespace detail

inline Expr close(const Expr& v, const NameSet& hidden, const EnvPtr& site) {
  if (hidden.empty() || !v) return v;
  if (as<ex::Fun>(v) || as<ex::Function>(v)) {
    NameSet need;
    for (auto& n : free_vars(v))
      if (hidden.count(n)) need.insert(n);
    if (need.empty()) return v;
    ClosureEnv captured = detail::capture(need, hidden, site);
    if (captured.empty()) return v;
    if (auto* f = as<ex::Fun>(v)) {
      ex::Fun c = *f;
      c.env.insert(c.env.begin(), captured.begin(), captured.end());
      return make(std::move(c), v->print_as);
    }
    ex::Function c = *as<ex::Function>(v);
    c.env.insert(c.env.begin(), captured.begin(), captured.end());
    return make(std::move(c), v->print_as);
  }
  if (auto* t = as<ex::Tuple>(v)) {
    ex::Tuple c = *t;
    bool changed = false;
    for (auto& i : c.items) {
      Expr n = close(i, hidden, site);
      changed = changed || n != i;
      i = n;
    }
    return changed ? make(std::move(c), v->print_as) : v;
  }
  if (auto* c = as<ex::Cons>(v)) {
    Expr h = close(c->head, hidden, site), t = close(c->tail, hidden, site);
    if (h == c->head && t == c->tail) return v;
    return make(ex::Cons{h, t}, v->print_as);
  }
  if (auto* c = as<ex::Constr>(v)) {
    if (!c->payload) return v;
    Expr p = close(c->payload, hidden, site);
    if (p == c->payload) return v;
    return make(ex::Constr{c->tag, c->name, p}, v->print_as);
  }
  if (auto* b = as<ex::Builtin>(v)) {
    ex::Builtin c = *b;
    bool changed = false;
    for (auto& a : c.args) {
      Expr n = close(a, hidden, site);
      changed = changed || n != a;
      a = n;
    }
    return changed ? make(std::move(c), v->print_as) : v;
  }
  return v;
}

class Stepper {
 public:
  Stepper(EvalOptions opts, BuiltinContext ctx, const ConstructorTable* ctors = nullptr)
      : opts_(opts), ctx_(ctx), ctors_(ctors) {}

  StepOutcome eval_step(const Env& env, const Expr& e) {
    StepOutcome out;
    if (is_value(e)) return out;
    peeking_ = false;
    try {
      out.expr = step(e, env);
      out.kind = StepOutcome::Next;
      out.op = last_;
    } catch (detail::Raised& r) {
      out.kind = StepOutcome::Uncaught;
      out.name = r.name;
      out.payload = r.payload;
    } catch (detail::TypeErr& t) {
      out.kind = StepOutcome::RunTimeTypeError;
      out.message = t.message;
    }
    return out;
  }

  PeekResult peek(const Env& env, const Expr& e) {
    if (is_value(e)) throw PeekOnValue();
    peeking_ = true;
    try {
      step(e, env);
    } catch (detail::Peeked& p) {
      peeking_ = false;
      return {p.op, p.redex};
    } catch (...) {
      peeking_ = false;
      throw;
    }
    peeking_ = false;
    throw InternalError("peek found no redex");
  }

  const EvalOptions& options() const { return opts_; }

 private:
  EvalOptions opts_;
  BuiltinContext ctx_;
  const ConstructorTable* ctors_;
  bool peeking_ = false;
  LastOp last_;

  void fire(LastOp op, const Expr& at) {
    if (peeking_) throw detail::Peeked{std::move(op), at.get()};
    last_ = std::move(op);
  }

  [[noreturn]] void type_error(const std::string& msg, const Expr& at) {
    if (opts_.no_typecheck) throw detail::TypeErr{msg};
    throw InternalError(msg + " in: " + to_string(at));
  }

  [[noreturn]] static void raise(const std::string& name, Expr payload, const Env& env) {
    throw detail::Raised{name, std::move(payload), env};
  }

  // Runs an expression to a value with no visible steps.
  Expr run_silently(Expr e, const Env& env) {
    Stepper inner(opts_, ctx_, ctors_);
    std::uint64_t n = 0;
    while (!is_value(e)) {
      e = inner.step(e, env);
      if (opts_.max_steps && ++n > opts_.max_steps) throw StepLimitExceeded(opts_.max_steps);
    }
    return e;
  }

  // ------------------------------------------------------------ variables

  std::optional<Lookup> find(const Env& env, const std::string& name) const {
    return stepdbg::lookup(env, name);
  }

  // Value of a variable, made valid at the lookup site.
  Expr resolve(const Env& env, const std::string& name, const Expr& at) {
    auto l = find(env, name);
    if (!l) throw InternalError("unbound variable " + name + " in: " + to_string(at));
    if (!l->node) return l->value;
    bool rec = l->node->item.rec;
    NameSet hidden = detail::names_until(env.items.get(), l->node, !rec);
    EnvPtr site;
    for (EnvPtr p = env.items; p; p = p->next)
      if (p.get() == l->node) {
        site = rec ? p : p->next;
        break;
      }
    return close(l->value, hidden, site);
  }

  bool var_is_ready(const Env& env, const Expr& e) const {
    auto* v = as<ex::Var>(e);
    return v && find(env, v->name).has_value();
  }

  // A callee resolves inline when it is a variable naming a function.
  bool callee_ready(const Env& env, const Expr& e) const {
    auto* v = as<ex::Var>(e);
    if (!v) return false;
    auto l = find(env, v->name);
    return l && (as<ex::Fun>(l->value) || as<ex::Function>(l->value) || as<ex::Builtin>(l->value));
  }

  Expr value_or_resolve(const Env& env, const Expr& e) {
    if (auto* v = as<ex::Var>(e)) return resolve(env, v->name, e);
    return e;
  }

  // ------------------------------------------------------------ let construction

  // Wraps body in lets for the pattern bindings (later bindings outermost)
  // and then the captured environment (innermost), each value made valid at
  // its new position.
  static Expr build_lets(const PatBindings& bs, const ClosureEnv& cenv, Expr body,
                         const EnvPtr& site) {
    NameSet pattern_names;
    for (auto& [n, _] : bs) pattern_names.insert(n);
    for (auto it = cenv.rbegin(); it != cenv.rend(); ++it) {
      ex::Let l{it->rec, {}, body};
      for (auto& [n, v] : it->bindings) l.bindings.push_back({pvar(n), close(v, pattern_names, site)});
      body = make(std::move(l));
    }
    for (size_t i = 0; i < bs.size(); ++i) {
      NameSet outer;
      for (size_t j = i + 1; j < bs.size(); ++j) outer.insert(bs[j].first);
      body = let1(bs[i].first, close(bs[i].second, outer, site), body);
    }
    return body;
  }

  const ConstructorTable& ctors() const {
    static const ConstructorTable builtin = ConstructorTable::builtin();
    return ctors_ ? *ctors_ : builtin;
  }

  Expr exception_value(const std::string& name, const Expr& payload) const {
    const CtorInfo* info = ctors().find(name);
    return make(ex::Constr{info ? info->tag : 0, name, payload});
  }

  bool guard_holds(const Expr& guard, const PatBindings& bs, const ClosureEnv& cenv,
                   const Env& env, const Expr& at) {
    if (!guard) return true;
    Expr g = run_silently(build_lets(bs, cenv, guard, env.items), env);
    auto* b = as<ex::Bool>(g);
    if (!b) type_error("Guard did not evaluate to a boolean", at);
    return b->v;
  }

  // ------------------------------------------------------------ the step

  Expr step(const Expr& e, const Env& env) {
    return std::visit([&](const auto& n) { return step_node(e, n, env); }, e->data);
  }

  template <class T>
  Expr step_node(const Expr& e, const T&, const Env&) {
    throw InternalError("no rule to reduce " + to_string(e));
  }

  Expr step_node(const Expr& e, const ex::Var& n, const Env& env) {
    if (!find(env, n.name)) throw InternalError("unbound variable " + n.name);
    fire({LastOp::VarLookup, {}}, e);
    Expr v = resolve(env, n.name, e);
    if ((as<ex::Fun>(v) || as<ex::Function>(v) || as<ex::Builtin>(v)) && !v->print_as)
      return with_print_as(v, builtin_display_name(n.name));
    return v;
  }

  Expr step_node(const Expr& e, const ex::Tuple& n, const Env& env) {
    ex::Tuple c = n;
    for (auto& i : c.items)
      if (!is_value(i)) {
        i = step(i, env);
        return make(std::move(c));
      }
    (void)e;
    throw InternalError("tuple has no redex");
  }

  void check_cons(const Expr& result, const Expr& at) {
    if (!opts_.no_typecheck || !is_value(result)) return;
    auto* c = as<ex::Cons>(result);
    if (!as<ex::Nil>(c->tail) && !as<ex::Cons>(c->tail)) type_error("Attempt to cons onto non-list", at);
    if (auto* t = as<ex::Cons>(c->tail))
      if (!check_same_type(c->head, t->head))
        type_error("Cannot cons onto this list: differing element types", at);
  }

  Expr step_node(const Expr& e, const ex::Cons& n, const Env& env) {
    Expr r;
    if (!is_value(n.head))
      r = cons(step(n.head, env), n.tail);
    else
      r = cons(n.head, step(n.tail, env));
    check_cons(r, e);
    return r;
  }

  Expr step_node(const Expr&, const ex::Record& n, const Env& env) {
    ex::Record c;
    bool done = false;
    for (auto& f : n.fields) {
      Expr v = f.cell->value;
      if (!done && !is_value(v)) {
        v = step(v, env);
        done = true;
      }
      c.fields.push_back({f.name, std::make_shared<Cell>(Cell{v})});
    }
    return make(std::move(c));
  }

  Expr step_node(const Expr&, const ex::Constr& n, const Env& env) {
    return make(ex::Constr{n.tag, n.name, step(n.payload, env)});
  }

  Expr step_node(const Expr& e, const ex::Op& n, const Env& env) {
    if (!is_value(n.a)) return op(n.op, step(n.a, env), n.b);
    if (!is_value(n.b)) return op(n.op, n.a, step(n.b, env));
    fire({LastOp::Arith, {}}, e);
    auto* x = as<ex::Int>(n.a);
    auto* y = as<ex::Int>(n.b);
    if (!x || !y) type_error("Arithmetic on non-integer values", e);
    std::uint64_t a = static_cast<std::uint64_t>(x->v), b = static_cast<std::uint64_t>(y->v);
    switch (n.op) {
      case ArithOp::Add: return int_(static_cast<std::int64_t>(a + b));
      case ArithOp::Sub: return int_(static_cast<std::int64_t>(a - b));
      case ArithOp::Mul: return int_(static_cast<std::int64_t>(a * b));
      case ArithOp::Div:
      case ArithOp::Mod:
        if (y->v == 0) return make(ex::Raise{"Division_by_zero", nullptr});
        if (y->v == -1) return n.op == ArithOp::Div ? int_(static_cast<std::int64_t>(0 - a)) : int_(0);
        return int_(n.op == ArithOp::Div ? x->v / y->v : x->v % y->v);
    }
    throw InternalError("bad arithmetic operator");
  }

  Expr step_node(const Expr& e, const ex::Cmp& n, const Env& env) {
    bool a_ready = is_value(n.a) || var_is_ready(env, n.a);
    bool b_ready = is_value(n.b) || var_is_ready(env, n.b);
    if (!b_ready) return cmp(n.op, n.a, step(n.b, env));
    if (!a_ready) return cmp(n.op, step(n.a, env), n.b);
    fire({LastOp::Comparison, {}}, e);
    Expr a = value_or_resolve(env, n.a), b = value_or_resolve(env, n.b);
    if (!check_same_type(a, b)) type_error("Comparison between values of differing types", e);
    Ordering o;
    try {
      o = poly_compare(a, b);
    } catch (CompareFunction&) {
      raise("Invalid_argument", str("compare: functional value"), env);
    }
    bool r = false;
    switch (n.op) {
      case CmpOp::Eq: r = o == Ordering::EQ; break;
      case CmpOp::Ne: r = o != Ordering::EQ; break;
      case CmpOp::Lt: r = o == Ordering::LT; break;
      case CmpOp::Le: r = o != Ordering::GT; break;
      case CmpOp::Gt: r = o == Ordering::GT; break;
      case CmpOp::Ge: r = o != Ordering::LT; break;
    }
    return bool_(r);
  }

  Expr step_node(const Expr& e, const ex::And& n, const Env& env) {
    if (!is_value(n.a)) return make(ex::And{step(n.a, env), n.b});
    auto* a = as<ex::Bool>(n.a);
    if (!a) type_error("Boolean operation on non-boolean value", e);
    if (!a->v) {
      fire({LastOp::Boolean, {}}, e);
      return bool_(false);
    }
    if (is_value(n.b)) {
      fire({LastOp::Boolean, {}}, e);
      if (!as<ex::Bool>(n.b)) type_error("Boolean operation on non-boolean value", e);
      return n.b;
    }
    return step(n.b, env);
  }

  Expr step_node(const Expr& e, const ex::Or& n, const Env& env) {
    if (!is_value(n.a)) return make(ex::Or{step(n.a, env), n.b});
    auto* a = as<ex::Bool>(n.a);
    if (!a) type_error("Boolean operation on non-boolean value", e);
    if (a->v) {
      fire({LastOp::Boolean, {}}, e);
      return bool_(true);
    }
    if (is_value(n.b)) {
      fire({LastOp::Boolean, {}}, e);
      if (!as<ex::Bool>(n.b)) type_error("Boolean operation on non-boolean value", e);
      return n.b;
    }
    return step(n.b, env);
  }

  Expr step_node(const Expr& e, const ex::If& n, const Env& env) {
    if (!is_value(n.cond)) return make(ex::If{step(n.cond, env), n.then_, n.else_});
    fire({LastOp::IfBool, {}}, e);
    auto* b = as<ex::Bool>(n.cond);
    if (!b) type_error("If condition is not a boolean", e);
    if (b->v) return n.then_;
    return n.else_ ? n.else_ : unit();
  }

  Expr step_node(const Expr& e, const ex::Let& n, const Env& env) {
    for (size_t i = 0; i < n.bindings.size(); ++i) {
      if (!is_value(n.bindings[i].rhs)) {
        ex::Let c = n;
        c.bindings[i].rhs = step(n.bindings[i].rhs, env);
        return make(std::move(c));
      }
    }
    bool simple = true;
    for (auto& b : n.bindings) simple = simple && as<pt::Var>(b.pat);
    if (!simple) {
      fire(LastOp::other("let pattern"), e);
      PatBindings all;
      for (auto& b : n.bindings) {
        PatBindings bs;
        if (!match_bindings(b.rhs, b.pat, bs)) raise("Match_failure", nullptr, env);
        all.insert(all.end(), bs.begin(), bs.end());
      }
      return build_lets(all, {}, n.body, env.items);
    }
    EnvItem item{n.rec, {}};
    NameSet names;
    for (auto& b : n.bindings) {
      item.bindings.emplace_back(as<pt::Var>(b.pat)->name, b.rhs);
      names.insert(as<pt::Var>(b.pat)->name);
    }
    Env inner = env.push(item);
    if (is_value(n.body)) {
      fire(LastOp::other("let"), e);
      return close(n.body, names, inner.items);
    }
    Expr body = step(n.body, inner);
    if (!detail::names_free_in(names, body)) {
      bool keep = n.rec && !is_value(body);
      if (!n.rec && is_value(body))
        for (auto& b : n.bindings) keep = keep || b.rhs->has_record;
      if (!keep) return body;
    }
    return make(ex::Let{n.rec, n.bindings, body});
  }

  Expr step_node(const Expr& e, const ex::Seq& n, const Env& env) {
    if (!is_value(n.a)) return make(ex::Seq{step(n.a, env), n.b});
    fire(LastOp::other("sequence"), e);
    return n.b;
  }

  Expr step_node(const Expr& e, const ex::While& n, const Env& env) {
    if (!is_value(n.guard)) return make(ex::While{step(n.guard, env), n.body, n.guard_copy, n.body_copy});
    auto* g = as<ex::Bool>(n.guard);
    if (!g) type_error("While condition is not a boolean", e);
    if (!g->v) {
      fire(LastOp::other("while"), e);
      return unit();
    }
    if (is_value(n.body)) {
      fire(LastOp::other("while"), e);
      return make(ex::While{detail::freshen(n.guard_copy), detail::freshen(n.body_copy),
                            n.guard_copy, n.body_copy});
    }
    return make(ex::While{n.guard, step(n.body, env), n.guard_copy, n.body_copy});
  }

  Expr step_node(const Expr& e, const ex::For& n, const Env& env) {
    if (!is_value(n.from))
      return make(ex::For{n.var, step(n.from, env), n.dir, n.to, n.body, n.body_copy});
    if (!is_value(n.to))
      return make(ex::For{n.var, n.from, n.dir, step(n.to, env), n.body, n.body_copy});
    auto* from = as<ex::Int>(n.from);
    auto* to = as<ex::Int>(n.to);
    if (!from || !to) {
      fire(LastOp::other("for"), e);
      type_error("For loop bounds are not integers", e);
    }
    bool up = n.dir == ForDir::UpTo;
    if (up ? from->v > to->v : from->v < to->v) {
      fire(LastOp::other("for"), e);
      return unit();
    }
    Env inner = env.push(EnvItem{false, {{n.var, n.from}}});
    auto advance = [&]() -> Expr {
      if (from->v == to->v &&
          (from->v == std::numeric_limits<std::int64_t>::max() ||
           from->v == std::numeric_limits<std::int64_t>::min()))
        return unit();
      std::int64_t next = up ? from->v + 1 : from->v - 1;
      return make(ex::For{n.var, int_(next), n.dir, n.to, detail::freshen(n.body_copy), n.body_copy});
    };
    if (opts_.fast_for && !is_value(n.body)) {
      fire(LastOp::other("for"), e);
      run_silently(n.body, inner);
      return advance();
    }
    if (is_value(n.body)) {
      fire(LastOp::other("for"), e);
      return advance();
    }
    return make(ex::For{n.var, n.from, n.dir, n.to, step(n.body, inner), n.body_copy});
  }

  Expr step_node(const Expr& e, const ex::Field& n, const Env& env) {
    if (!is_value(n.rec)) return make(ex::Field{step(n.rec, env), n.name});
    fire(LastOp::other("field"), e);
    if (auto* r = as<ex::Record>(n.rec))
      for (auto& f : r->fields)
        if (f.name == n.name) return f.cell->value;
    type_error("Field access on a value without field " + n.name, e);
  }

  Expr step_node(const Expr& e, const ex::SetField& n, const Env& env) {
    if (!is_value(n.rec)) return make(ex::SetField{step(n.rec, env), n.name, n.value});
    if (!is_value(n.value)) return make(ex::SetField{n.rec, n.name, step(n.value, env)});
    fire(LastOp::other("field assignment"), e);
    if (auto* r = as<ex::Record>(n.rec))
      for (auto& f : r->fields)
        if (f.name == n.name) {
          f.cell->value = n.value;
          return unit();
        }
    type_error("Field assignment on a value without field " + n.name, e);
  }

  Expr step_node(const Expr& e, const ex::Raise& n, const Env& env) {
    if (n.payload && !is_value(n.payload)) return make(ex::Raise{n.name, step(n.payload, env)});
    fire(LastOp::other("raise"), e);
    raise(n.name, n.payload, env);
  }

  Expr step_node(const Expr& e, const ex::TryWith& n, const Env& env) {
    if (is_value(n.body)) {
      fire(LastOp::other("try"), e);
      return n.body;
    }
    try {
      return make(ex::TryWith{step(n.body, env), n.cases});
    } catch (detail::Raised& r) {
      Expr payload = r.payload;
      if (payload) {
        NameSet hidden = detail::names_until(r.env.items.get(), env.items.get(), false);
        payload = close(payload, hidden, r.env.items);
      }
      Expr subject = exception_value(r.name, payload);
      for (auto& c : n.cases) {
        PatBindings bs;
        if (!match_bindings(subject, c.pat, bs)) continue;
        if (!guard_holds(c.guard, bs, {}, env, e)) continue;
        return build_lets(bs, {}, detail::freshen(c.rhs), env.items);
      }
      throw;
    }
  }

  Expr step_node(const Expr& e, const ex::Match& n, const Env& env) {
    if (!is_value(n.subject)) return make(ex::Match{step(n.subject, env), n.cases});
    fire(LastOp::other("match"), e);
    const Case& c = n.cases.front();
    PatBindings bs;
    if (match_bindings(n.subject, c.pat, bs) && guard_holds(c.guard, bs, {}, env, e))
      return build_lets(bs, {}, detail::freshen(c.rhs), env.items);
    if (n.cases.size() == 1) raise("Match_failure", nullptr, env);
    return make(ex::Match{n.subject, std::vector<Case>(n.cases.begin() + 1, n.cases.end())});
  }

  // ------------------------------------------------------------ application

  struct Spine {
    Expr head;
    std::vector<const Expr*> apps;  // apps[i] is the App node applying args[0..i]
    std::vector<Expr> args;
  };

  static Spine spine_of(const Expr& e) {
    Spine s;
    std::vector<const Expr*> nodes;
    const Expr* cur = &e;
    while (auto* a = as<ex::App>(*cur)) {
      nodes.push_back(cur);
      cur = &a->f;
    }
    s.head = *cur;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
      s.apps.push_back(*it);
      s.args.push_back(as<ex::App>(**it)->arg);
    }
    return s;
  }

  static Expr reapply(Expr head, const std::vector<Expr>& args, size_t from) {
    for (size_t i = from; i < args.size(); ++i) head = app(head, args[i]);
    return head;
  }

  // Builtin head of a spine, looked up without performing a step.
  std::optional<Expr> builtin_head(const Env& env, const Expr& head) const {
    if (as<ex::Builtin>(head)) return head;
    if (auto* v = as<ex::Var>(head)) {
      auto l = find(env, v->name);
      if (l && as<ex::Builtin>(l->value)) return l->value;
    }
    return std::nullopt;
  }

  Expr step_builtin(const Spine& s, const Expr& builtin, const Env& env) {
    auto* b = as<ex::Builtin>(builtin);
    size_t needed = static_cast<size_t>(b->arity) - b->args.size();
    size_t used = std::min(needed, s.args.size());
    const Expr& node = *s.apps[used - 1];
    // Arguments are evaluated right to left; variables resolve at the call.
    for (size_t k = used; k-- > 0;) {
      const Expr& a = s.args[k];
      if (is_value(a) || var_is_ready(env, a)) continue;
      std::vector<Expr> args = s.args;
      args[k] = step(a, env);
      return reapply(s.head, args, 0);
    }
    std::vector<Expr> collected = b->args;
    for (size_t k = 0; k < used; ++k) collected.push_back(value_or_resolve(env, s.args[k]));
    if (used < needed) {
      fire(LastOp::other("partial application"), node);
      std::string base = builtin_display_name(b->name);
      if (builtin->print_as) {
        base = *builtin->print_as;
        if (!b->args.empty() && base.size() >= 2 && base.front() == '(' && base.back() == ')')
          base = base.substr(1, base.size() - 2);
      }
      std::string label = "(" + base;
      for (size_t k = 0; k < used; ++k) label += " " + render_arg(s.args[k]);
      label += ")";
      ex::Builtin partial = *b;
      partial.args = collected;
      Expr r = make(std::move(partial), label);
      return reapply(r, s.args, used);
    }
    fire({LastOp::InsideBuiltIn, {}}, node);
    Expr result;
    try {
      result = (*b->fn)(collected, ctx_);
    } catch (HostRaise& h) {
      raise(h.name, h.payload, env);
    } catch (BuiltinTypeError& t) {
      type_error(t.what(), node);
    }
    return reapply(result, s.args, used);
  }

  static std::string render_arg(const Expr& a) {
    Expr probe = app(var("f"), a);
    std::string whole = to_string(probe);
    return whole.substr(2);
  }

  Expr step_node(const Expr& e, const ex::App& n, const Env& env) {
    Spine s = spine_of(e);
    if (auto b = builtin_head(env, s.head)) return step_builtin(s, *b, env);

    if (opts_.fast_curry) {
      Expr fn = s.head;
      bool head_ok = is_value(fn) || callee_ready(env, fn);
      if (head_ok) {
        Expr fv = is_value(fn) ? fn : find(env, as<ex::Var>(fn)->name)->value;
        size_t k = 0;
        const Expr* cur = &fv;
        while (k < s.args.size() && is_value(s.args[k])) {
          auto* f = as<ex::Fun>(*cur);
          if (!f || !f->env.empty() || !as<pt::Var>(f->param)) break;
          ++k;
          cur = &f->body;
        }
        if (k >= 2) {
          fire(LastOp::other("application"), *s.apps[k - 1]);
          if (!is_value(fn)) fv = resolve(env, as<ex::Var>(fn)->name, fn);
          std::vector<std::pair<std::string, Expr>> names;
          const Expr* body = &fv;
          for (size_t i = 0; i < k; ++i) {
            auto* f = as<ex::Fun>(*body);
            names.emplace_back(as<pt::Var>(f->param)->name, s.args[i]);
            body = &f->body;
          }
          Expr r = detail::freshen(*body);
          for (size_t i = k; i-- > 0;) {
            NameSet outer;
            for (size_t j = 0; j < i; ++j) outer.insert(names[j].first);
            r = let1(names[i].first, close(names[i].second, outer, env.items), r);
          }
          return reapply(r, s.args, k);
        }
      }
    }

    bool f_ready = is_value(n.f) || callee_ready(env, n.f);
    if (!f_ready) return app(step(n.f, env), n.arg);
    if (!is_value(n.arg)) return app(n.f, step(n.arg, env));
    fire(LastOp::other("application"), e);
    Expr f = value_or_resolve(env, n.f);
    if (auto* fun = as<ex::Fun>(f)) {
      PatBindings bs;
      if (!match_bindings(n.arg, fun->param, bs)) raise("Match_failure", nullptr, env);
      return build_lets(bs, fun->env, detail::freshen(fun->body), env.items);
    }
    if (auto* fn = as<ex::Function>(f)) {
      const Case& c = fn->cases.front();
      PatBindings bs;
      if (match_bindings(n.arg, c.pat, bs)) {
        NameSet pv = pattern_vars(c.pat);
        NameSet needed;
        for (auto& x : free_vars(c.rhs))
          if (!pv.count(x)) needed.insert(x);
        if (c.guard)
          for (auto& x : free_vars(c.guard))
            if (!pv.count(x)) needed.insert(x);
        ClosureEnv used;
        for (auto& item : fn->env) {
          bool any = false;
          for (auto& b : item.bindings) any = any || needed.count(b.first);
          if (any) used.push_back(item);
        }
        if (guard_holds(c.guard, bs, fn->env, env, e))
          return build_lets(bs, used, detail::freshen(c.rhs), env.items);
      }
      if (fn->cases.size() == 1) raise("Match_failure", nullptr, env);
      ex::Function rest{std::vector<Case>(fn->cases.begin() + 1, fn->cases.end()), fn->env};
      return app(make(std::move(rest)), n.arg);
    }
    type_error("Application of a non-function", e);
  }
};

// ---------------------------------------------------------------- driver

struct FinalOutcome {
  enum Kind { Value, Uncaught, RunTimeTypeError };
  Kind kind = Value;
  Expr value;
  std::string exception;
  Expr payload;
  std::string message;
  std::uint64_t steps = 0;
};

using StepObserver = std::function<void(const Expr& before, const LastOp& op, const Expr& after)>;

inline FinalOutcome run(const Env& env, Expr e, const StepObserver& observer, EvalOptions mode,
                        BuiltinContext ctx = {}, const ConstructorTable* ctors = nullptr) {
  Stepper stepper(mode, ctx, ctors);
  FinalOutcome out;
  for (;;) {
    if (mode.max_steps && out.steps >= mode.max_steps && !is_value(e))
      throw StepLimitExceeded(mode.max_steps);
    StepOutcome s = stepper.eval_step(env, e);
    switch (s.kind) {
      case StepOutcome::AlreadyValue:
        out.kind = FinalOutcome::Value;
        out.value = e;
        return out;
      case StepOutcome::Uncaught:
        out.kind = FinalOutcome::Uncaught;
        out.exception = s.name;
        out.payload = s.payload;
        return out;
      case StepOutcome::RunTimeTypeError:
        out.kind = FinalOutcome::RunTimeTypeError;
        out.message = s.message;
        return out;
      case StepOutcome::Next:
        ++out.steps;
        if (observer) observer(e, s.op, s.expr);
        e = s.expr;
        break;
    }
  }
}

}  // namespace stepdbg
