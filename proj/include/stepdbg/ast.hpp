// Abstract syntax shared by the parser, the stepper and the renderer.
// A value is simply an Expr in normal form.
#pragma once

#include <cstdint>
#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace stepdbg {

struct Node;
using Expr = std::shared_ptr<const Node>;
struct PatNode;
using Pattern = std::shared_ptr<const PatNode>;
using NameSet = std::set<std::string>;

enum class ArithOp { Add, Sub, Mul, Div, Mod };
enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
enum class ForDir { UpTo, DownTo };

struct Case {
  Pattern pat;
  Expr guard;  // may be null
  Expr rhs;
};

// One binding group. Closure environments list groups outermost first.
struct EnvItem {
  bool rec = false;
  std::vector<std::pair<std::string, Expr>> bindings;
};
using ClosureEnv = std::vector<EnvItem>;

// Mutable storage behind a record field.
struct Cell {
  Expr value;
};

struct RecordField {
  std::string name;
  std::shared_ptr<Cell> cell;
};

struct BuiltinContext {
  std::ostream* out = nullptr;
};

// Raised by host functions on ill-typed arguments.
struct BuiltinTypeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using HostFn = std::function<Expr(const std::vector<Expr>&, BuiltinContext&)>;

namespace ex {
struct Unit {};
struct Int { std::int64_t v; };
struct Bool { bool v; };
struct Char { char32_t v; };
struct Str { std::string v; };
struct Tuple { std::vector<Expr> items; };
struct Nil {};
struct Cons { Expr head, tail; };
struct Record { std::vector<RecordField> fields; };
struct Constr { int tag; std::string name; Expr payload; };
struct Var { std::string name; };
struct Op { ArithOp op; Expr a, b; };
struct Cmp { CmpOp op; Expr a, b; };
struct And { Expr a, b; };
struct Or { Expr a, b; };
struct If { Expr cond, then_, else_; };
struct Binding { Pattern pat; Expr rhs; };
struct Let { bool rec; std::vector<Binding> bindings; Expr body; };
struct Fun { Pattern param; Expr body; ClosureEnv env; };
struct Function { std::vector<Case> cases; ClosureEnv env; };
struct App { Expr f, arg; };
struct Seq { Expr a, b; };
struct While { Expr guard, body, guard_copy, body_copy; };
struct For { std::string var; Expr from; ForDir dir; Expr to; Expr body, body_copy; };
struct Field { Expr rec; std::string name; };
struct SetField { Expr rec; std::string name; Expr value; };
struct Raise { std::string name; Expr payload; };
struct TryWith { Expr body; std::vector<Case> cases; };
struct Match { Expr subject; std::vector<Case> cases; };
struct Builtin {
  std::string name;
  int arity;
  std::vector<Expr> args;
  std::shared_ptr<const HostFn> fn;
};
}  // namespace ex

using NodeData =
    std::variant<ex::Unit, ex::Int, ex::Bool, ex::Char, ex::Str, ex::Tuple, ex::Nil, ex::Cons,
                 ex::Record, ex::Constr, ex::Var, ex::Op, ex::Cmp, ex::And, ex::Or, ex::If,
                 ex::Let, ex::Fun, ex::Function, ex::App, ex::Seq, ex::While, ex::For, ex::Field,
                 ex::SetField, ex::Raise, ex::TryWith, ex::Match, ex::Builtin>;

struct Node {
  NodeData data;
  std::optional<std::string> print_as;
  bool value = false;       // normal form, computed at construction
  bool has_record = false;  // subtree contains a record literal outside closure environments
};

namespace pt {
struct Any {};
struct Var { std::string name; };
struct Int { std::int64_t v; };
struct Bool { bool v; };
struct Char { char32_t v; };
struct CharRange { char32_t lo, hi; };
struct Str { std::string v; };
struct Unit {};
struct Tuple { std::vector<Pattern> items; };
struct Nil {};
struct Cons { Pattern head, tail; };
struct Constr { std::string name; Pattern payload; };
struct Record { std::vector<std::pair<std::string, Pattern>> fields; };
struct Alias { std::string name; Pattern pat; };
struct Or { Pattern a, b; };
}  // namespace pt

using PatData = std::variant<pt::Any, pt::Var, pt::Int, pt::Bool, pt::Char, pt::CharRange, pt::Str,
                             pt::Unit, pt::Tuple, pt::Nil, pt::Cons, pt::Constr, pt::Record,
                             pt::Alias, pt::Or>;

struct PatNode {
  PatData data;
};

template <class T>
const T* as(const Expr& e) {
  return e ? std::get_if<T>(&e->data) : nullptr;
}
template <class T>
const T* as(const Pattern& p) {
  return p ? std::get_if<T>(&p->data) : nullptr;
}

inline bool is_value(const Expr& e) { return e && e->value; }

namespace detail {

inline bool all_values(const std::vector<Expr>& es) {
  for (auto& e : es)
    if (!is_value(e)) return false;
  return true;
}

inline bool any_record(std::initializer_list<const Expr*> es) {
  for (auto* e : es)
    if (*e && (*e)->has_record) return true;
  return false;
}

inline bool cases_have_record(const std::vector<Case>& cs) {
  for (auto& c : cs)
    if ((c.guard && c.guard->has_record) || c.rhs->has_record) return true;
  return false;
}

struct Classify {
  bool value = false;
  bool rec = false;
  void operator()(const ex::Unit&) { value = true; }
  void operator()(const ex::Int&) { value = true; }
  void operator()(const ex::Bool&) { value = true; }
  void operator()(const ex::Char&) { value = true; }
  void operator()(const ex::Str&) { value = true; }
  void operator()(const ex::Nil&) { value = true; }
  void operator()(const ex::Tuple& t) {
    value = all_values(t.items);
    for (auto& i : t.items) rec = rec || i->has_record;
  }
  void operator()(const ex::Cons& c) {
    value = is_value(c.head) && is_value(c.tail);
    rec = any_record({&c.head, &c.tail});
  }
  void operator()(const ex::Record& r) {
    value = true;
    rec = true;
    for (auto& f : r.fields) value = value && is_value(f.cell->value);
  }
  void operator()(const ex::Constr& c) {
    value = !c.payload || is_value(c.payload);
    rec = any_record({&c.payload});
  }
  void operator()(const ex::Var&) {}
  void operator()(const ex::Op& o) { rec = any_record({&o.a, &o.b}); }
  void operator()(const ex::Cmp& o) { rec = any_record({&o.a, &o.b}); }
  void operator()(const ex::And& o) { rec = any_record({&o.a, &o.b}); }
  void operator()(const ex::Or& o) { rec = any_record({&o.a, &o.b}); }
  void operator()(const ex::If& o) { rec = any_record({&o.cond, &o.then_, &o.else_}); }
  void operator()(const ex::Let& l) {
    rec = l.body->has_record;
    for (auto& b : l.bindings) rec = rec || b.rhs->has_record;
  }
  void operator()(const ex::Fun& f) {
    value = true;
    rec = f.body->has_record;
  }
  void operator()(const ex::Function& f) {
    value = true;
    rec = cases_have_record(f.cases);
  }
  void operator()(const ex::App& a) { rec = any_record({&a.f, &a.arg}); }
  void operator()(const ex::Seq& s) { rec = any_record({&s.a, &s.b}); }
  void operator()(const ex::While& w) {
    rec = any_record({&w.guard, &w.body, &w.guard_copy, &w.body_copy});
  }
  void operator()(const ex::For& f) { rec = any_record({&f.from, &f.to, &f.body, &f.body_copy}); }
  void operator()(const ex::Field& f) { rec = any_record({&f.rec}); }
  void operator()(const ex::SetField& f) { rec = any_record({&f.rec, &f.value}); }
  void operator()(const ex::Raise& r) { rec = any_record({&r.payload}); }
  void operator()(const ex::TryWith& t) { rec = t.body->has_record || cases_have_record(t.cases); }
  void operator()(const ex::Match& m) {
    rec = m.subject->has_record || cases_have_record(m.cases);
  }
  void operator()(const ex::Builtin& b) {
    value = true;
    for (auto& a : b.args) rec = rec || a->has_record;
  }
};

}  // namespace detail

inline Expr make(NodeData d, std::optional<std::string> print_as = std::nullopt) {
  auto n = std::make_shared<Node>();
  n->data = std::move(d);
  n->print_as = std::move(print_as);
  detail::Classify c;
  std::visit(c, n->data);
  n->value = c.value;
  n->has_record = c.rec;
  return n;
}

inline Expr with_print_as(const Expr& e, std::optional<std::string> label) {
  return make(e->data, std::move(label));
}

inline Pattern make_pat(PatData d) {
  auto p = std::make_shared<PatNode>();
  p->data = std::move(d);
  return p;
}

// Convenience constructors.
inline Expr unit() { return make(ex::Unit{}); }
inline Expr int_(std::int64_t v) { return make(ex::Int{v}); }
inline Expr bool_(bool v) { return make(ex::Bool{v}); }
inline Expr char_(char32_t v) { return make(ex::Char{v}); }
inline Expr str(std::string v) { return make(ex::Str{std::move(v)}); }
inline Expr nil() { return make(ex::Nil{}); }
inline Expr cons(Expr h, Expr t) { return make(ex::Cons{std::move(h), std::move(t)}); }
inline Expr var(std::string n) { return make(ex::Var{std::move(n)}); }
inline Expr op(ArithOp o, Expr a, Expr b) { return make(ex::Op{o, std::move(a), std::move(b)}); }
inline Expr cmp(CmpOp o, Expr a, Expr b) { return make(ex::Cmp{o, std::move(a), std::move(b)}); }
inline Expr app(Expr f, Expr a) { return make(ex::App{std::move(f), std::move(a)}); }
inline Expr if_(Expr c, Expr t, Expr e) {
  return make(ex::If{std::move(c), std::move(t), std::move(e)});
}
inline Pattern pvar(std::string n) { return make_pat(pt::Var{std::move(n)}); }
inline Expr fun(std::string x, Expr body, ClosureEnv env = {}) {
  return make(ex::Fun{pvar(std::move(x)), std::move(body), std::move(env)});
}
inline Expr let1(std::string x, Expr rhs, Expr body, bool rec = false) {
  return make(ex::Let{rec, {ex::Binding{pvar(std::move(x)), std::move(rhs)}}, std::move(body)});
}
inline Expr list(const std::vector<Expr>& items) {
  Expr r = nil();
  for (auto it = items.rbegin(); it != items.rend(); ++it) r = cons(*it, r);
  return r;
}
inline Expr record(const std::vector<std::pair<std::string, Expr>>& fields) {
  ex::Record r;
  for (auto& [n, v] : fields) r.fields.push_back({n, std::make_shared<Cell>(Cell{v})});
  return make(std::move(r));
}

// ---------------------------------------------------------------------------
// Names bound by patterns and free variables.

inline void pattern_vars(const Pattern& p, NameSet& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, pt::Var>) {
          out.insert(n.name);
        } else if constexpr (std::is_same_v<T, pt::Tuple>) {
          for (auto& i : n.items) pattern_vars(i, out);
        } else if constexpr (std::is_same_v<T, pt::Cons>) {
          pattern_vars(n.head, out);
          pattern_vars(n.tail, out);
        } else if constexpr (std::is_same_v<T, pt::Constr>) {
          if (n.payload) pattern_vars(n.payload, out);
        } else if constexpr (std::is_same_v<T, pt::Record>) {
          for (auto& f : n.fields) pattern_vars(f.second, out);
        } else if constexpr (std::is_same_v<T, pt::Alias>) {
          out.insert(n.name);
          pattern_vars(n.pat, out);
        } else if constexpr (std::is_same_v<T, pt::Or>) {
          pattern_vars(n.a, out);
        }
      },
      p->data);
}

inline NameSet pattern_vars(const Pattern& p) {
  NameSet s;
  pattern_vars(p, s);
  return s;
}

inline NameSet item_names(const EnvItem& item) {
  NameSet s;
  for (auto& b : item.bindings) s.insert(b.first);
  return s;
}

namespace detail {

struct FreeVars {
  NameSet out;

  void add_minus(const NameSet& inner, const NameSet& bound) {
    for (auto& n : inner)
      if (!bound.count(n)) out.insert(n);
  }

  static NameSet of(const Expr& e) {
    FreeVars fv;
    fv.walk(e);
    return std::move(fv.out);
  }

  // Free names of a closure environment wrapped around names free inside it.
  static NameSet wrap_env(const ClosureEnv& env, NameSet inner) {
    for (auto it = env.rbegin(); it != env.rend(); ++it) {
      NameSet names = item_names(*it);
      NameSet next;
      for (auto& n : inner)
        if (!names.count(n)) next.insert(n);
      for (auto& b : it->bindings)
        for (auto& n : of(b.second))
          if (!(it->rec && names.count(n))) next.insert(n);
      inner = std::move(next);
    }
    return inner;
  }

  static NameSet of_cases(const std::vector<Case>& cases) {
    NameSet s;
    for (auto& c : cases) {
      NameSet bound = pattern_vars(c.pat);
      NameSet inner = of(c.rhs);
      if (c.guard)
        for (auto& n : of(c.guard)) inner.insert(n);
      for (auto& n : inner)
        if (!bound.count(n)) s.insert(n);
    }
    return s;
  }

  void walk(const Expr& e) {
    if (!e) return;
    std::visit([&](const auto& n) { visit(n); }, e->data);
  }

  template <class T>
  void visit(const T&) {}
  void visit(const ex::Tuple& t) {
    for (auto& i : t.items) walk(i);
  }
  void visit(const ex::Cons& c) { walk(c.head), walk(c.tail); }
  void visit(const ex::Record& r) {
    for (auto& f : r.fields) walk(f.cell->value);
  }
  void visit(const ex::Constr& c) { walk(c.payload); }
  void visit(const ex::Var& v) { out.insert(v.name); }
  void visit(const ex::Op& o) { walk(o.a), walk(o.b); }
  void visit(const ex::Cmp& o) { walk(o.a), walk(o.b); }
  void visit(const ex::And& o) { walk(o.a), walk(o.b); }
  void visit(const ex::Or& o) { walk(o.a), walk(o.b); }
  void visit(const ex::If& o) { walk(o.cond), walk(o.then_), walk(o.else_); }
  void visit(const ex::Let& l) {
    NameSet bound;
    for (auto& b : l.bindings) pattern_vars(b.pat, bound);
    for (auto& b : l.bindings) {
      if (l.rec)
        add_minus(of(b.rhs), bound);
      else
        walk(b.rhs);
    }
    add_minus(of(l.body), bound);
  }
  void visit(const ex::Fun& f) {
    NameSet inner;
    NameSet bound = pattern_vars(f.param);
    for (auto& n : of(f.body))
      if (!bound.count(n)) inner.insert(n);
    for (auto& n : wrap_env(f.env, std::move(inner))) out.insert(n);
  }
  void visit(const ex::Function& f) {
    for (auto& n : wrap_env(f.env, of_cases(f.cases))) out.insert(n);
  }
  void visit(const ex::App& a) { walk(a.f), walk(a.arg); }
  void visit(const ex::Seq& s) { walk(s.a), walk(s.b); }
  void visit(const ex::While& w) { walk(w.guard), walk(w.body), walk(w.guard_copy), walk(w.body_copy); }
  void visit(const ex::For& f) {
    walk(f.from), walk(f.to);
    NameSet bound{f.var};
    add_minus(of(f.body), bound);
    add_minus(of(f.body_copy), bound);
  }
  void visit(const ex::Field& f) { walk(f.rec); }
  void visit(const ex::SetField& f) { walk(f.rec), walk(f.value); }
  void visit(const ex::Raise& r) { walk(r.payload); }
  void visit(const ex::TryWith& t) {
    walk(t.body);
    for (auto& n : of_cases(t.cases)) out.insert(n);
  }
  void visit(const ex::Match& m) {
    walk(m.subject);
    for (auto& n : of_cases(m.cases)) out.insert(n);
  }
  void visit(const ex::Builtin& b) {
    for (auto& a : b.args) walk(a);
  }
};

}  // namespace detail

inline NameSet free_vars(const Expr& e) { return detail::FreeVars::of(e); }

// ---------------------------------------------------------------------------
// Structural equality, ignoring print_as labels and record cell identity.

bool equal(const Expr& a, const Expr& b);
bool equal(const Pattern& a, const Pattern& b);

namespace detail {

inline bool equal_list(const std::vector<Expr>& a, const std::vector<Expr>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!equal(a[i], b[i])) return false;
  return true;
}

inline bool equal_cases(const std::vector<Case>& a, const std::vector<Case>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!equal(a[i].pat, b[i].pat) || !equal(a[i].guard, b[i].guard) || !equal(a[i].rhs, b[i].rhs))
      return false;
  return true;
}

inline bool equal_env(const ClosureEnv& a, const ClosureEnv& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].rec != b[i].rec || a[i].bindings.size() != b[i].bindings.size()) return false;
    for (size_t j = 0; j < a[i].bindings.size(); ++j)
      if (a[i].bindings[j].first != b[i].bindings[j].first ||
          !equal(a[i].bindings[j].second, b[i].bindings[j].second))
        return false;
  }
  return true;
}

}  // namespace detail

inline bool equal(const Pattern& a, const Pattern& b) {
  if (!a || !b) return !a && !b;
  if (a->data.index() != b->data.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b->data);
        if constexpr (std::is_same_v<T, pt::Var>) return x.name == y.name;
        else if constexpr (std::is_same_v<T, pt::Int> || std::is_same_v<T, pt::Bool> ||
                           std::is_same_v<T, pt::Char> || std::is_same_v<T, pt::Str>)
          return x.v == y.v;
        else if constexpr (std::is_same_v<T, pt::CharRange>) return x.lo == y.lo && x.hi == y.hi;
        else if constexpr (std::is_same_v<T, pt::Tuple>) {
          if (x.items.size() != y.items.size()) return false;
          for (size_t i = 0; i < x.items.size(); ++i)
            if (!equal(x.items[i], y.items[i])) return false;
          return true;
        } else if constexpr (std::is_same_v<T, pt::Cons>)
          return equal(x.head, y.head) && equal(x.tail, y.tail);
        else if constexpr (std::is_same_v<T, pt::Constr>)
          return x.name == y.name && equal(x.payload, y.payload);
        else if constexpr (std::is_same_v<T, pt::Record>) {
          if (x.fields.size() != y.fields.size()) return false;
          for (size_t i = 0; i < x.fields.size(); ++i)
            if (x.fields[i].first != y.fields[i].first || !equal(x.fields[i].second, y.fields[i].second))
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, pt::Alias>)
          return x.name == y.name && equal(x.pat, y.pat);
        else if constexpr (std::is_same_v<T, pt::Or>)
          return equal(x.a, y.a) && equal(x.b, y.b);
        else
          return true;
      },
      a->data);
}

inline bool equal(const Expr& a, const Expr& b) {
  if (!a || !b) return !a && !b;
  if (a == b) return true;
  if (a->data.index() != b->data.index()) return false;
  using namespace detail;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b->data);
        if constexpr (std::is_same_v<T, ex::Unit> || std::is_same_v<T, ex::Nil>) return true;
        else if constexpr (std::is_same_v<T, ex::Int> || std::is_same_v<T, ex::Bool> ||
                           std::is_same_v<T, ex::Char> || std::is_same_v<T, ex::Str>)
          return x.v == y.v;
        else if constexpr (std::is_same_v<T, ex::Tuple>) return equal_list(x.items, y.items);
        else if constexpr (std::is_same_v<T, ex::Cons>)
          return equal(x.head, y.head) && equal(x.tail, y.tail);
        else if constexpr (std::is_same_v<T, ex::Record>) {
          if (x.fields.size() != y.fields.size()) return false;
          for (size_t i = 0; i < x.fields.size(); ++i)
            if (x.fields[i].name != y.fields[i].name ||
                !equal(x.fields[i].cell->value, y.fields[i].cell->value))
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, ex::Constr>)
          return x.tag == y.tag && x.name == y.name && equal(x.payload, y.payload);
        else if constexpr (std::is_same_v<T, ex::Var>) return x.name == y.name;
        else if constexpr (std::is_same_v<T, ex::Op> || std::is_same_v<T, ex::Cmp>)
          return x.op == y.op && equal(x.a, y.a) && equal(x.b, y.b);
        else if constexpr (std::is_same_v<T, ex::And> || std::is_same_v<T, ex::Or> ||
                           std::is_same_v<T, ex::Seq>)
          return equal(x.a, y.a) && equal(x.b, y.b);
        else if constexpr (std::is_same_v<T, ex::If>)
          return equal(x.cond, y.cond) && equal(x.then_, y.then_) && equal(x.else_, y.else_);
        else if constexpr (std::is_same_v<T, ex::Let>) {
          if (x.rec != y.rec || x.bindings.size() != y.bindings.size()) return false;
          for (size_t i = 0; i < x.bindings.size(); ++i)
            if (!equal(x.bindings[i].pat, y.bindings[i].pat) ||
                !equal(x.bindings[i].rhs, y.bindings[i].rhs))
              return false;
          return equal(x.body, y.body);
        } else if constexpr (std::is_same_v<T, ex::Fun>)
          return equal(x.param, y.param) && equal(x.body, y.body) && equal_env(x.env, y.env);
        else if constexpr (std::is_same_v<T, ex::Function>)
          return equal_cases(x.cases, y.cases) && equal_env(x.env, y.env);
        else if constexpr (std::is_same_v<T, ex::App>)
          return equal(x.f, y.f) && equal(x.arg, y.arg);
        else if constexpr (std::is_same_v<T, ex::While>)
          return equal(x.guard, y.guard) && equal(x.body, y.body) &&
                 equal(x.guard_copy, y.guard_copy) && equal(x.body_copy, y.body_copy);
        else if constexpr (std::is_same_v<T, ex::For>)
          return x.var == y.var && x.dir == y.dir && equal(x.from, y.from) && equal(x.to, y.to) &&
                 equal(x.body, y.body) && equal(x.body_copy, y.body_copy);
        else if constexpr (std::is_same_v<T, ex::Field>)
          return x.name == y.name && equal(x.rec, y.rec);
        else if constexpr (std::is_same_v<T, ex::SetField>)
          return x.name == y.name && equal(x.rec, y.rec) && equal(x.value, y.value);
        else if constexpr (std::is_same_v<T, ex::Raise>)
          return x.name == y.name && equal(x.payload, y.payload);
        else if constexpr (std::is_same_v<T, ex::TryWith>)
          return equal(x.body, y.body) && equal_cases(x.cases, y.cases);
        else if constexpr (std::is_same_v<T, ex::Match>)
          return equal(x.subject, y.subject) && equal_cases(x.cases, y.cases);
        else if constexpr (std::is_same_v<T, ex::Builtin>)
          return x.name == y.name && x.arity == y.arity && equal_list(x.args, y.args);
        else
          return false;
      },
      a->data);
}

// ---------------------------------------------------------------------------
// Programs.

struct LetDef {
  bool rec;
  std::vector<ex::Binding> bindings;
};
struct ExceptionDef {
  std::string name;
  bool has_payload;
};
using Item = std::variant<LetDef, ExceptionDef, Expr>;

struct CtorInfo {
  int tag;
  bool has_payload;
  bool exception;
};

// Constructor names known to the parser. Variant constructors are numbered
// per declaration: nullary ones 0,1,... and payload-carrying ones 0,1,...
struct ConstructorTable {
  std::map<std::string, CtorInfo> ctors;

  static ConstructorTable builtin() {
    ConstructorTable t;
    t.declare_exception("Division_by_zero", false);
    t.declare_exception("Match_failure", false);
    t.declare_exception("Failure", true);
    t.declare_exception("Invalid_argument", true);
    t.declare_exception("Not_found", false);
    t.declare_exception("Exit", false);
    t.declare_variant({{"None", false}, {"Some", true}});
    return t;
  }

  const CtorInfo* find(const std::string& name) const {
    auto it = ctors.find(name);
    return it == ctors.end() ? nullptr : &it->second;
  }

  void declare_exception(const std::string& name, bool payload) {
    int tag = 0;
    for (auto& [n, c] : ctors)
      if (c.exception && c.has_payload == payload) tag = std::max(tag, c.tag + 1);
    ctors[name] = {tag, payload, true};
  }

  void declare_variant(const std::vector<std::pair<std::string, bool>>& alts) {
    int nullary = 0, with_payload = 0;
    for (auto& [name, payload] : alts)
      ctors[name] = {payload ? with_payload++ : nullary++, payload, false};
  }
};

struct Program {
  std::vector<Item> items;
  ConstructorTable constructors = ConstructorTable::builtin();
};

// Nested-let form used for running: definitions scope over the rest,
// bare expressions are sequenced, and an empty tail is ().
inline Expr program_to_expr(const Program& p) {
  Expr result;
  for (auto it = p.items.rbegin(); it != p.items.rend(); ++it) {
    if (auto* d = std::get_if<LetDef>(&*it)) {
      result = make(ex::Let{d->rec, d->bindings, result ? result : unit()});
    } else if (auto* e = std::get_if<Expr>(&*it)) {
      result = result ? make(ex::Seq{*e, result}) : *e;
    }
  }
  return result ? result : unit();
}

}  // namespace stepdbg
