// Prettyprinter for Expr with minimal parentheses and an optional marked node.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ast.hpp"
#include "lexer.hpp"

namespace stepdbg {

struct Span {
  size_t begin = 0, end = 0;
  bool operator==(const Span&) const = default;
};

struct RenderResult {
  std::string text;
  std::optional<Span> mark;   // span of the marked node, parentheses included
  std::vector<Span> keywords;
};

inline std::string escape_char(char32_t c, char quote) {
  switch (c) {
    case '\n': return "\\n";
    case '\t': return "\\t";
    case '\r': return "\\r";
    case '\b': return "\\b";
    case '\\': return "\\\\";
    default: break;
  }
  if (c == static_cast<char32_t>(quote)) return std::string("\\") + quote;
  if (c < 32 || c == 127) {
    std::string d = std::to_string(static_cast<unsigned>(c));
    return "\\" + std::string(3 - d.size(), '0') + d;
  }
  std::string out;
  append_utf8(out, c);
  return out;
}

inline std::string render_char(char32_t c) { return "'" + escape_char(c, '\'') + "'"; }

inline std::string render_string(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    if (c >= 0x80)
      out += static_cast<char>(c);
    else
      out += escape_char(c, '"');
  }
  return out + "\"";
}

inline const char* arith_symbol(ArithOp op) {
  switch (op) {
    case ArithOp::Add: return "+";
    case ArithOp::Sub: return "-";
    case ArithOp::Mul: return "*";
    case ArithOp::Div: return "/";
    case ArithOp::Mod: return "mod";
  }
  return "?";
}

inline const char* cmp_symbol(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "<>";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

inline bool is_operator_name(const std::string& n) {
  return !n.empty() && !(std::isalpha(static_cast<unsigned char>(n[0])) || n[0] == '_');
}

inline std::string builtin_display_name(const std::string& n) {
  return is_operator_name(n) ? "(" + n + ")" : n;
}

// Infix prelude functions rendered as binary operators.
inline int infix_level(const std::string& name) {
  if (name == ":=") return 3;
  if (name == "@") return 8;
  return -1;
}

struct RenderOptions {
  bool use_print_as = true;
};

class Renderer {
 public:
  Renderer(RenderOptions opts, const Node* mark) : opts_(opts), mark_(mark) {}

  RenderResult run(const Expr& e) {
    emit(e, 0, Follow::Hard);
    return {std::move(out_), mark_span_, std::move(keywords_)};
  }

  std::string pattern_text(const Pattern& p) {
    pat(p, 0);
    return std::move(out_);
  }

 private:
  enum class Follow { Hard, Op, Bar, Else };

  RenderOptions opts_;
  const Node* mark_;
  std::string out_;
  std::optional<Span> mark_span_;
  std::vector<Span> keywords_;

  void text(const std::string& s) { out_ += s; }
  void kw(const std::string& s) {
    keywords_.push_back({out_.size(), out_.size() + s.size()});
    out_ += s;
  }

  static bool is_proper_list(const Expr& e) {
    const Expr* cur = &e;
    while (auto* c = as<ex::Cons>(*cur)) {
      if ((*cur)->print_as) return false;
      cur = &c->tail;
    }
    return as<ex::Nil>(*cur) != nullptr;
  }

  // A binding whose value is labelled with its own name prints in full.
  const Node* unlabel_ = nullptr;

  bool labelled(const Expr& e) const {
    return opts_.use_print_as && e->print_as.has_value() && e.get() != unlabel_;
  }

  static const std::string* infix_app(const Expr& e, Expr& a, Expr& b) {
    auto* outer = as<ex::App>(e);
    if (!outer) return nullptr;
    auto* inner = as<ex::App>(outer->f);
    if (!inner || outer->f->print_as) return nullptr;
    auto* v = as<ex::Var>(inner->f);
    if (!v || inner->f->print_as || infix_level(v->name) < 0) return nullptr;
    a = inner->arg;
    b = outer->arg;
    return &v->name;
  }

  static bool is_bang(const Expr& e, Expr& arg) {
    auto* a = as<ex::App>(e);
    if (!a) return false;
    auto* v = as<ex::Var>(a->f);
    if (!v || v->name != "!" || a->f->print_as) return false;
    arg = a->arg;
    return true;
  }

  int level_of(const Expr& e) const {
    if (labelled(e)) return 15;
    Expr a, b;
    return std::visit(
        [&](const auto& n) -> int {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ex::Let> || std::is_same_v<T, ex::Match> ||
                        std::is_same_v<T, ex::Fun> || std::is_same_v<T, ex::TryWith>)
            return 0;
          else if constexpr (std::is_same_v<T, ex::Function>)
            return 0;
          else if constexpr (std::is_same_v<T, ex::Seq>)
            return 1;
          else if constexpr (std::is_same_v<T, ex::If>)
            return 2;
          else if constexpr (std::is_same_v<T, ex::SetField>)
            return 3;
          else if constexpr (std::is_same_v<T, ex::Or>)
            return 5;
          else if constexpr (std::is_same_v<T, ex::And>)
            return 6;
          else if constexpr (std::is_same_v<T, ex::Cmp>)
            return 7;
          else if constexpr (std::is_same_v<T, ex::Cons>)
            return is_proper_list(e) ? 15 : 9;
          else if constexpr (std::is_same_v<T, ex::Op>)
            return (n.op == ArithOp::Add || n.op == ArithOp::Sub) ? 10 : 11;
          else if constexpr (std::is_same_v<T, ex::Int>)
            return n.v < 0 ? 12 : 15;
          else if constexpr (std::is_same_v<T, ex::App>) {
            if (auto* name = infix_app(e, a, b)) return infix_level(*name);
            if (is_bang(e, a)) return 14;
            return 13;
          } else if constexpr (std::is_same_v<T, ex::Constr>)
            return n.payload ? 13 : 15;
          else if constexpr (std::is_same_v<T, ex::Raise>)
            return 13;
          else if constexpr (std::is_same_v<T, ex::Builtin>)
            return n.args.empty() ? 15 : 13;
          else
            return 15;
        },
        e->data);
  }

  void emit(const Expr& e, int level, Follow follow) {
    int own = level_of(e);
    bool paren = own < level;
    // An if may follow `else` without parentheses.
    if (paren && own == 2 && level == 3 && else_branch_) paren = false;
    if (!paren && !labelled(e)) {
      if (follow == Follow::Bar &&
          (as<ex::Match>(e) || as<ex::Function>(e) || as<ex::TryWith>(e)))
        paren = true;
      if (follow == Follow::Else) {
        auto* i = as<ex::If>(e);
        if (i && !i->else_) paren = true;
      }
      if (follow == Follow::Op && own == 0) paren = true;
    }
    size_t start = out_.size();
    if (paren) text("(");
    if (paren) {
      body(e, Follow::Hard);
    } else {
      body(e, follow);
    }
    if (paren) text(")");
    if (e.get() == mark_ && !mark_span_ && !in_closure_) mark_span_ = Span{start, out_.size()};
  }

  // Closure bodies share nodes with the code being run, so they never hold the mark.
  int in_closure_ = 0;

  bool else_branch_ = false;

  void child(const Expr& e, int level, Follow follow) {
    bool saved = else_branch_;
    else_branch_ = false;
    emit(e, level, follow);
    else_branch_ = saved;
  }

  void env_lets(const ClosureEnv& env) {
    for (auto& item : env) {
      kw("let");
      text(" ");
      if (item.rec) {
        kw("rec");
        text(" ");
      }
      for (size_t i = 0; i < item.bindings.size(); ++i) {
        if (i) {
          text(" ");
          kw("and");
          text(" ");
        }
        binding(pvar(item.bindings[i].first), item.bindings[i].second);
      }
      text(" ");
      kw("in");
      text(" ");
    }
  }

  void binding(const Pattern& p, const Expr& rhs) {
    auto* pv = as<pt::Var>(p);
    if (pv && rhs->print_as == pv->name) unlabel_ = rhs.get();
    auto* f = as<ex::Fun>(rhs);
    if (as<pt::Var>(p) && f && !labelled(rhs) && rhs.get() != mark_) {
      pat(p, 0);
      Expr b = fun_params(rhs);
      const ClosureEnv* env = pending_env_;
      text(" = ");
      ++in_closure_;
      if (env) env_lets(*env);
      child(b, 0, Follow::Hard);
      --in_closure_;
      return;
    }
    pat(p, 0);
    text(" = ");
    child(rhs, 0, Follow::Hard);
  }

  // Writes " p1 p2 ..." for a chain of curried funs, then any captured lets;
  // returns the innermost body.
  Expr fun_params(const Expr& e) {
    const Expr* cur = &e;
    for (;;) {
      auto* f = as<ex::Fun>(*cur);
      text(" ");
      pat(f->param, 2);
      auto* next = as<ex::Fun>(f->body);
      if (f->env.empty() && next && !labelled(f->body) && f->body.get() != mark_) {
        cur = &f->body;
        continue;
      }
      pending_env_ = &f->env;
      return f->body;
    }
  }

  const ClosureEnv* pending_env_ = nullptr;

  void cases(const std::vector<Case>& cs, Follow follow) {
    for (size_t i = 0; i < cs.size(); ++i) {
      if (i) text(" | ");
      pat(cs[i].pat, 0);
      if (cs[i].guard) {
        text(" ");
        kw("when");
        text(" ");
        child(cs[i].guard, 0, Follow::Hard);
      }
      text(" -> ");
      child(cs[i].rhs, 0, i + 1 < cs.size() ? Follow::Bar : follow);
    }
  }

  void body(const Expr& e, Follow follow) {
    if (labelled(e)) {
      text(*e->print_as);
      return;
    }
    Expr a, b;
    if (auto* name = infix_app(e, a, b)) {
      int lv = infix_level(*name);
      child(a, lv + 1, Follow::Op);
      text(" " + *name + " ");
      child(b, lv, follow);
      return;
    }
    if (is_bang(e, a)) {
      text("!");
      child(a, 15, follow);
      return;
    }
    std::visit([&](const auto& n) { node(e, n, follow); }, e->data);
  }

  void node(const Expr&, const ex::Unit&, Follow) { text("()"); }
  void node(const Expr&, const ex::Int& n, Follow) { text(std::to_string(n.v)); }
  void node(const Expr&, const ex::Bool& n, Follow) { kw(n.v ? "true" : "false"); }
  void node(const Expr&, const ex::Char& n, Follow) { text(render_char(n.v)); }
  void node(const Expr&, const ex::Str& n, Follow) { text(render_string(n.v)); }
  void node(const Expr&, const ex::Nil&, Follow) { text("[]"); }
  void node(const Expr&, const ex::Tuple& n, Follow) {
    text("(");
    for (size_t i = 0; i < n.items.size(); ++i) {
      if (i) text(", ");
      child(n.items[i], 5, Follow::Hard);
    }
    text(")");
  }
  void node(const Expr& e, const ex::Cons& n, Follow follow) {
    if (is_proper_list(e)) {
      text("[");
      const Expr* cur = &e;
      bool first = true;
      while (auto* c = as<ex::Cons>(*cur)) {
        if (!first) text("; ");
        first = false;
        child(c->head, 3, Follow::Hard);
        cur = &c->tail;
      }
      text("]");
      return;
    }
    child(n.head, 10, Follow::Op);
    text("::");
    child(n.tail, 9, follow);
  }
  void node(const Expr&, const ex::Record& n, Follow) {
    text("{");
    for (size_t i = 0; i < n.fields.size(); ++i) {
      if (i) text("; ");
      text(n.fields[i].name + " = ");
      child(n.fields[i].cell->value, 3, Follow::Hard);
    }
    text("}");
  }
  void node(const Expr&, const ex::Constr& n, Follow follow) {
    text(n.name);
    if (n.payload) {
      text(" ");
      child(n.payload, 14, follow);
    }
  }
  void node(const Expr&, const ex::Var& n, Follow) {
    text(is_operator_name(n.name) ? "(" + n.name + ")" : n.name);
  }
  void node(const Expr&, const ex::Op& n, Follow follow) {
    int lv = (n.op == ArithOp::Add || n.op == ArithOp::Sub) ? 10 : 11;
    child(n.a, lv, Follow::Op);
    text(" ");
    if (n.op == ArithOp::Mod)
      kw("mod");
    else
      text(arith_symbol(n.op));
    text(" ");
    child(n.b, lv + 1, follow);
  }
  void node(const Expr&, const ex::Cmp& n, Follow follow) {
    child(n.a, 7, Follow::Op);
    text(std::string(" ") + cmp_symbol(n.op) + " ");
    child(n.b, 8, follow);
  }
  void node(const Expr&, const ex::And& n, Follow follow) {
    child(n.a, 7, Follow::Op);
    text(" && ");
    child(n.b, 6, follow);
  }
  void node(const Expr&, const ex::Or& n, Follow follow) {
    child(n.a, 6, Follow::Op);
    text(" || ");
    child(n.b, 5, follow);
  }
  void node(const Expr&, const ex::If& n, Follow follow) {
    kw("if");
    text(" ");
    child(n.cond, 0, Follow::Hard);
    text(" ");
    kw("then");
    text(" ");
    child(n.then_, 3, n.else_ ? Follow::Else : follow);
    if (n.else_) {
      text(" ");
      kw("else");
      text(" ");
      bool saved = else_branch_;
      else_branch_ = true;
      emit(n.else_, 3, follow);
      else_branch_ = saved;
    }
  }
  void node(const Expr&, const ex::Let& n, Follow follow) {
    kw("let");
    text(" ");
    if (n.rec) {
      kw("rec");
      text(" ");
    }
    for (size_t i = 0; i < n.bindings.size(); ++i) {
      if (i) {
        text(" ");
        kw("and");
        text(" ");
      }
      binding(n.bindings[i].pat, n.bindings[i].rhs);
    }
    text(" ");
    kw("in");
    text(" ");
    child(n.body, 0, follow);
  }
  void node(const Expr& e, const ex::Fun&, Follow follow) {
    kw("fun");
    Expr b = fun_params(e);
    const ClosureEnv* env = pending_env_;
    text(" -> ");
    ++in_closure_;
    if (env) env_lets(*env);
    child(b, 0, follow);
    --in_closure_;
  }
  void node(const Expr&, const ex::Function& n, Follow follow) {
    ++in_closure_;
    env_lets(n.env);
    kw("function");
    text(" ");
    cases(n.cases, follow);
    --in_closure_;
  }
  void node(const Expr&, const ex::App& n, Follow follow) {
    child(n.f, 13, Follow::Op);
    text(" ");
    child(n.arg, 14, follow);
  }
  void node(const Expr&, const ex::Seq& n, Follow follow) {
    child(n.a, 2, Follow::Op);
    text("; ");
    child(n.b, 0, follow);
  }
  void node(const Expr&, const ex::While& n, Follow) {
    kw("while");
    text(" ");
    child(n.guard, 0, Follow::Hard);
    text(" ");
    kw("do");
    text(" ");
    child(n.body, 0, Follow::Hard);
    text(" ");
    kw("done");
  }
  void node(const Expr&, const ex::For& n, Follow) {
    kw("for");
    text(" " + n.var + " = ");
    child(n.from, 0, Follow::Hard);
    text(" ");
    kw(n.dir == ForDir::UpTo ? "to" : "downto");
    text(" ");
    child(n.to, 0, Follow::Hard);
    text(" ");
    kw("do");
    text(" ");
    child(n.body, 0, Follow::Hard);
    text(" ");
    kw("done");
  }
  void node(const Expr&, const ex::Field& n, Follow) {
    child(n.rec, 15, Follow::Op);
    text("." + n.name);
  }
  void node(const Expr&, const ex::SetField& n, Follow follow) {
    child(n.rec, 15, Follow::Op);
    text("." + n.name + " <- ");
    child(n.value, 3, follow);
  }
  void node(const Expr&, const ex::Raise& n, Follow follow) {
    kw("raise");
    text(" ");
    if (!n.payload) {
      text(n.name);
      return;
    }
    text("(" + n.name + " ");
    child(n.payload, 14, Follow::Hard);
    text(")");
    (void)follow;
  }
  void node(const Expr&, const ex::TryWith& n, Follow follow) {
    kw("try");
    text(" ");
    child(n.body, 0, Follow::Hard);
    text(" ");
    kw("with");
    text(" ");
    cases(n.cases, follow);
  }
  void node(const Expr&, const ex::Match& n, Follow follow) {
    kw("match");
    text(" ");
    child(n.subject, 0, Follow::Hard);
    text(" ");
    kw("with");
    text(" ");
    cases(n.cases, follow);
  }
  void node(const Expr&, const ex::Builtin& n, Follow follow) {
    text(builtin_display_name(n.name));
    for (size_t i = 0; i < n.args.size(); ++i) {
      text(" ");
      child(n.args[i], 14, i + 1 == n.args.size() ? follow : Follow::Op);
    }
  }

  static bool is_proper_list_pat(const Pattern& p) {
    const Pattern* cur = &p;
    while (auto* c = as<pt::Cons>(*cur)) cur = &c->tail;
    return as<pt::Nil>(*cur) != nullptr;
  }

  // Pattern levels: 0 anywhere, 1 left of ::, 2 atomic.
  void pat(const Pattern& p, int level) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, pt::Any>) text("_");
          else if constexpr (std::is_same_v<T, pt::Var>) text(n.name);
          else if constexpr (std::is_same_v<T, pt::Int>) {
            if (n.v < 0 && level >= 2)
              text("(" + std::to_string(n.v) + ")");
            else
              text(std::to_string(n.v));
          } else if constexpr (std::is_same_v<T, pt::Bool>) kw(n.v ? "true" : "false");
          else if constexpr (std::is_same_v<T, pt::Char>) text(render_char(n.v));
          else if constexpr (std::is_same_v<T, pt::CharRange>)
            text(render_char(n.lo) + ".." + render_char(n.hi));
          else if constexpr (std::is_same_v<T, pt::Str>) text(render_string(n.v));
          else if constexpr (std::is_same_v<T, pt::Unit>) text("()");
          else if constexpr (std::is_same_v<T, pt::Nil>) text("[]");
          else if constexpr (std::is_same_v<T, pt::Tuple>) {
            text("(");
            for (size_t i = 0; i < n.items.size(); ++i) {
              if (i) text(", ");
              pat(n.items[i], 0);
            }
            text(")");
          } else if constexpr (std::is_same_v<T, pt::Cons>) {
            if (is_proper_list_pat(p)) {
              text("[");
              const Pattern* cur = &p;
              bool first = true;
              while (auto* c = as<pt::Cons>(*cur)) {
                if (!first) text("; ");
                first = false;
                pat(c->head, 0);
                cur = &c->tail;
              }
              text("]");
              return;
            }
            if (level >= 1) text("(");
            pat(n.head, 1);
            text("::");
            pat(n.tail, 0);
            if (level >= 1) text(")");
          } else if constexpr (std::is_same_v<T, pt::Constr>) {
            if (!n.payload) {
              text(n.name);
              return;
            }
            if (level >= 2) text("(");
            text(n.name + " ");
            pat(n.payload, 2);
            if (level >= 2) text(")");
          } else if constexpr (std::is_same_v<T, pt::Record>) {
            text("{");
            for (size_t i = 0; i < n.fields.size(); ++i) {
              if (i) text("; ");
              text(n.fields[i].first + " = ");
              pat(n.fields[i].second, 0);
            }
            text("}");
          } else if constexpr (std::is_same_v<T, pt::Alias>) {
            text("(");
            pat(n.pat, 0);
            text(" ");
            kw("as");
            text(" " + n.name + ")");
          } else if constexpr (std::is_same_v<T, pt::Or>) {
            text("(");
            pat(n.a, 0);
            text(" | ");
            pat(n.b, 0);
            text(")");
          }
        },
        p->data);
  }
};

inline RenderResult render_marked(const Expr& e, const Node* mark, RenderOptions opts = {}) {
  return Renderer(opts, mark).run(e);
}

inline std::string to_string(const Expr& e, RenderOptions opts = {}) {
  return Renderer(opts, nullptr).run(e).text;
}

inline std::string to_string(const Pattern& p) { return Renderer({}, nullptr).pattern_text(p); }

}  // namespace stepdbg
