// Trace presentation: which states to show, how to show them, and search.
#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "render.hpp"
#include "stepper.hpp"

namespace stepdbg {

// ---------------------------------------------------------------- elision

struct ElisionPolicy {
  bool show_all = true;
  std::set<LastOp::Kind> suppressed;

  bool suppresses(const LastOp& op) const {
    return op.kind != LastOp::Other && suppressed.count(op.kind) > 0;
  }
};

// `prev` produced the state, `next` leaves it. The first state has no prev and
// a value has no next.
inline bool should_print(const std::optional<LastOp>& prev, bool state_is_value,
                         const std::optional<LastOp>& next, const ElisionPolicy& p) {
  if (p.show_all || state_is_value) return true;
  if (!prev || !p.suppresses(*prev)) return true;
  return !next || !p.suppresses(*next);
}

// ---------------------------------------------------------------- display passes

namespace detail {

// Rebuilds a tree bottom-up. The node `keep` and everything under it is left
// untouched so that pointers into it stay valid.
class Rewriter {
 public:
  using Post = std::function<Expr(const Expr&)>;
  using EnvHook = std::function<void(ClosureEnv&)>;

  Rewriter(const Node* keep, Post post, EnvHook env_hook = {})
      : keep_(keep), post_(std::move(post)), env_hook_(std::move(env_hook)) {}

  Expr operator()(const Expr& e) {
    if (!e || e.get() == keep_) return e;
    bool changed = false;
    Expr rebuilt = std::visit([&](const auto& n) { return rebuild(e, n, changed); }, e->data);
    return post_(changed ? rebuilt : e);
  }

 private:
  const Node* keep_;
  Post post_;
  EnvHook env_hook_;

  void sub(Expr& x, bool& changed) {
    if (!x) return;
    Expr y = (*this)(x);
    if (y != x) {
      x = y;
      changed = true;
    }
  }
  void sub_cases(std::vector<Case>& cs, bool& changed) {
    for (auto& c : cs) {
      sub(c.guard, changed);
      sub(c.rhs, changed);
    }
  }
  void sub_env(ClosureEnv& env, bool& changed) {
    size_t before = env.size();
    if (env_hook_) env_hook_(env);
    if (env.size() != before) changed = true;
    for (auto& item : env)
      for (auto& b : item.bindings) sub(b.second, changed);
  }
  Expr done(const Expr& e, NodeData d, bool changed) {
    return changed ? make(std::move(d), e->print_as) : e;
  }

  template <class T>
  Expr rebuild(const Expr& e, const T&, bool&) {
    return e;
  }
  Expr rebuild(const Expr& e, ex::Tuple n, bool& ch) {
    for (auto& i : n.items) sub(i, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Cons n, bool& ch) {
    sub(n.head, ch);
    sub(n.tail, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Constr n, bool& ch) {
    sub(n.payload, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Op n, bool& ch) {
    sub(n.a, ch);
    sub(n.b, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Cmp n, bool& ch) {
    sub(n.a, ch);
    sub(n.b, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::And n, bool& ch) {
    sub(n.a, ch);
    sub(n.b, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Or n, bool& ch) {
    sub(n.a, ch);
    sub(n.b, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::If n, bool& ch) {
    sub(n.cond, ch);
    sub(n.then_, ch);
    sub(n.else_, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Let n, bool& ch) {
    for (auto& b : n.bindings) sub(b.rhs, ch);
    sub(n.body, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Fun n, bool& ch) {
    sub_env(n.env, ch);
    sub(n.body, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Function n, bool& ch) {
    sub_env(n.env, ch);
    sub_cases(n.cases, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::App n, bool& ch) {
    sub(n.f, ch);
    sub(n.arg, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Seq n, bool& ch) {
    sub(n.a, ch);
    sub(n.b, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::While n, bool& ch) {
    sub(n.guard, ch);
    sub(n.body, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::For n, bool& ch) {
    sub(n.from, ch);
    sub(n.to, ch);
    sub(n.body, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Field n, bool& ch) {
    sub(n.rec, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::SetField n, bool& ch) {
    sub(n.rec, ch);
    sub(n.value, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Raise n, bool& ch) {
    sub(n.payload, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::TryWith n, bool& ch) {
    sub(n.body, ch);
    sub_cases(n.cases, ch);
    return done(e, std::move(n), ch);
  }
  Expr rebuild(const Expr& e, ex::Match n, bool& ch) {
    sub(n.subject, ch);
    sub_cases(n.cases, ch);
    return done(e, std::move(n), ch);
  }
};

inline bool is_function_value(const Expr& e) {
  return as<ex::Fun>(e) || as<ex::Function>(e);
}

}  // namespace detail

// Drops recursive definitions of functions from the displayed state.
inline Expr remove_rec_all(const Expr& e, const Node* keep = nullptr) {
  auto post = [](const Expr& x) -> Expr {
    auto* l = as<ex::Let>(x);
    if (!l || !l->rec) return x;
    for (auto& b : l->bindings)
      if (!detail::is_function_value(b.rhs)) return x;
    return l->body;
  };
  auto hook = [](ClosureEnv& env) {
    std::erase_if(env, [](const EnvItem& item) {
      if (!item.rec) return false;
      for (auto& b : item.bindings)
        if (!detail::is_function_value(b.second)) return false;
      return true;
    });
  };
  return detail::Rewriter(keep, post, hook)(e);
}

// Drops value bindings whose names no longer occur in their body.
inline Expr remove_unused_lets(const Expr& e, const Node* keep = nullptr) {
  auto post = [](const Expr& x) -> Expr {
    auto* l = as<ex::Let>(x);
    if (!l) return x;
    NameSet names;
    for (auto& b : l->bindings) {
      if (!is_value(b.rhs)) return x;
      pattern_vars(b.pat, names);
    }
    return detail::names_free_in(names, l->body) ? x : l->body;
  };
  return detail::Rewriter(keep, post)(e);
}

struct HoistedLets {
  std::string prefix;  // "x = 4 y = 5"
  Expr body;
};

// Pulls the outermost run of simple value bindings out of the expression.
inline HoistedLets hoist_side_lets(const Expr& e, const Node* keep = nullptr,
                                   RenderOptions ropts = {}) {
  HoistedLets out{"", e};
  for (;;) {
    auto* l = as<ex::Let>(out.body);
    if (!l || l->rec || out.body.get() == keep) break;
    bool simple = true;
    for (auto& b : l->bindings)
      simple = simple && as<pt::Var>(b.pat) && is_value(b.rhs);
    if (!simple) break;
    for (auto& b : l->bindings) {
      if (!out.prefix.empty()) out.prefix += ' ';
      out.prefix += as<pt::Var>(b.pat)->name + " = " + to_string(b.rhs, ropts);
    }
    out.body = l->body;
  }
  return out;
}

struct DisplayOptions {
  bool remove_rec_all = false;
  bool remove_unused_lets = false;
  bool side_lets = false;
  RenderOptions render;
};

struct RenderedStep {
  size_t index = 0;
  std::string text;
  std::optional<Span> redex;
  std::vector<Span> keywords;
  std::vector<Span> highlights;
  std::string side_lets;
  bool is_value = false;
};

inline RenderedStep render_step(const Expr& state, const Node* redex, size_t index,
                                const DisplayOptions& d) {
  Expr shown = state;
  if (d.remove_rec_all) shown = remove_rec_all(shown, redex);
  if (d.remove_unused_lets) shown = remove_unused_lets(shown, redex);
  RenderedStep out;
  out.index = index;
  out.is_value = is_value(state);
  if (d.side_lets) {
    auto h = hoist_side_lets(shown, redex, d.render);
    out.side_lets = std::move(h.prefix);
    shown = h.body;
  }
  auto r = render_marked(shown, redex, d.render);
  out.text = std::move(r.text);
  out.redex = r.mark;
  out.keywords = std::move(r.keywords);
  return out;
}

namespace detail {

// The arithmetic or comparison node that has `target` as an operand, searched
// outside closure bodies.
inline const Node* operator_parent(const Expr& e, const Node* target) {
  if (!e) return nullptr;
  return std::visit(
      [&](const auto& n) -> const Node* {
        using T = std::decay_t<decltype(n)>;
        auto first = [&](std::initializer_list<const Expr*> kids) -> const Node* {
          for (const Expr* k : kids)
            if (auto* r = operator_parent(*k, target)) return r;
          return nullptr;
        };
        auto cases = [&](const std::vector<Case>& cs) -> const Node* {
          for (auto& c : cs)
            if (auto* r = first({&c.guard, &c.rhs})) return r;
          return nullptr;
        };
        if constexpr (std::is_same_v<T, ex::Op> || std::is_same_v<T, ex::Cmp>) {
          if (n.a.get() == target || n.b.get() == target) return e.get();
          return first({&n.a, &n.b});
        } else if constexpr (std::is_same_v<T, ex::And> || std::is_same_v<T, ex::Or> ||
                             std::is_same_v<T, ex::Seq>) {
          return first({&n.a, &n.b});
        } else if constexpr (std::is_same_v<T, ex::Tuple>) {
          for (auto& i : n.items)
            if (auto* r = operator_parent(i, target)) return r;
          return nullptr;
        } else if constexpr (std::is_same_v<T, ex::Cons>) {
          return first({&n.head, &n.tail});
        } else if constexpr (std::is_same_v<T, ex::Record>) {
          for (auto& f : n.fields)
            if (auto* r = operator_parent(f.cell->value, target)) return r;
          return nullptr;
        } else if constexpr (std::is_same_v<T, ex::Constr> || std::is_same_v<T, ex::Raise>) {
          return operator_parent(n.payload, target);
        } else if constexpr (std::is_same_v<T, ex::If>) {
          return first({&n.cond, &n.then_, &n.else_});
        } else if constexpr (std::is_same_v<T, ex::Let>) {
          for (auto& b : n.bindings)
            if (auto* r = operator_parent(b.rhs, target)) return r;
          return operator_parent(n.body, target);
        } else if constexpr (std::is_same_v<T, ex::App>) {
          return first({&n.f, &n.arg});
        } else if constexpr (std::is_same_v<T, ex::While>) {
          return first({&n.guard, &n.body});
        } else if constexpr (std::is_same_v<T, ex::For>) {
          return first({&n.from, &n.to, &n.body});
        } else if constexpr (std::is_same_v<T, ex::Field>) {
          return operator_parent(n.rec, target);
        } else if constexpr (std::is_same_v<T, ex::SetField>) {
          return first({&n.rec, &n.value});
        } else if constexpr (std::is_same_v<T, ex::TryWith>) {
          if (auto* r = operator_parent(n.body, target)) return r;
          return cases(n.cases);
        } else if constexpr (std::is_same_v<T, ex::Match>) {
          if (auto* r = operator_parent(n.subject, target)) return r;
          return cases(n.cases);
        } else if constexpr (std::is_same_v<T, ex::Builtin>) {
          for (auto& a : n.args)
            if (auto* r = operator_parent(a, target)) return r;
          return nullptr;
        } else {
          return nullptr;
        }
      },
      e->data);
}

}  // namespace detail

// The span to mark for a step. A variable looked up as an operand marks the
// whole operation, as in "let y = 5 in 4 + y" with "4 + y" underlined.
inline const Node* display_redex(const Expr& state, const Node* redex, const LastOp& op) {
  if (!redex || op.kind != LastOp::VarLookup) return redex;
  if (auto* p = detail::operator_parent(state, redex)) return p;
  return redex;
}

// ---------------------------------------------------------------- search

struct SearchSyntaxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class StepMatcher {
 public:
  StepMatcher(std::regex re, int group) : re_(std::move(re)), group_(group) {}

  bool matches(const std::string& text) const { return std::regex_search(text, re_); }

  std::vector<Span> find_all(const std::string& text) const {
    std::vector<Span> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re_);
         it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      size_t b = static_cast<size_t>(m.position(group_));
      size_t len = static_cast<size_t>(m.length(group_));
      if (len > 0) out.push_back({b, b + len});
    }
    return out;
  }

 private:
  std::regex re_;
  int group_;
};

namespace detail {

inline std::string regex_escape(const std::string& s) {
  static const std::string special = R"(\^$.|?*+()[]{}/)";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out += '\\';
    out += c;
  }
  return out;
}

inline bool word_byte(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
}

}  // namespace detail

// Builds a matcher from a MiniML fragment in which `_` stands for any single
// token. Matching is insensitive to spacing, and with `no_parens` to
// parentheses as well.
inline StepMatcher compile_search(const std::string& pattern, bool no_parens = false,
                                  bool regexp = false) {
  try {
    if (regexp) return StepMatcher(std::regex(pattern), 0);
    std::vector<Token> toks;
    try {
      toks = tokenize(pattern);
    } catch (const SyntaxError& e) {
      throw SearchSyntaxError(std::string("bad search pattern: ") + e.what());
    }
    toks.pop_back();  // Eof
    if (no_parens)
      std::erase_if(toks, [](const Token& t) {
        return t.kind == Tok::Symbol && (t.text == "(" || t.text == ")");
      });
    if (toks.empty()) throw SearchSyntaxError("empty search pattern");
    static const std::string any_token =
        R"((?:[A-Za-z_][A-Za-z0-9_']*|\d+|'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*"|->|<=|>=|<>|&&|\|\||::|:=|[^\s]))";
    const std::string gap = no_parens ? R"([\s()]*)" : R"(\s*)";
    std::string body;
    std::vector<std::string> texts;
    for (size_t i = 0; i < toks.size(); ++i) {
      const Token& t = toks[i];
      std::string piece;
      switch (t.kind) {
        case Tok::Str: piece = render_string(t.text); break;
        case Tok::Char: piece = render_char(t.ch); break;
        default: piece = t.text; break;
      }
      texts.push_back(piece);
      if (i) body += gap;
      body += (t.kind == Tok::Symbol && t.text == "_") ? any_token : detail::regex_escape(piece);
    }
    bool wildcard_first = toks.front().kind == Tok::Symbol && toks.front().text == "_";
    bool wildcard_last = toks.back().kind == Tok::Symbol && toks.back().text == "_";
    std::string pre = (wildcard_first || detail::word_byte(texts.front().front()))
                          ? "(?:^|[^A-Za-z0-9_'])"
                          : "";
    std::string post = (wildcard_last || detail::word_byte(texts.back().back()))
                           ? "(?![A-Za-z0-9_'])"
                           : "";
    return StepMatcher(std::regex(pre + "(" + body + ")" + post), 1);
  } catch (const std::regex_error& e) {
    throw SearchSyntaxError(std::string("bad search pattern: ") + e.what());
  }
}

struct SearchSpec {
  std::optional<std::string> pattern;
  bool no_parens = false;
  bool regexp = false;
  bool invert = false;
  bool highlight = false;
  std::size_t limit_n = 0;  // 0 = unlimited
  std::size_t upto = 0;
  std::optional<std::string> after, after_any, until, until_any;
  bool invert_after = false;
  bool invert_until = false;
  bool stop = false;
  bool repeat = false;

  bool active() const {
    return pattern || after || after_any || until || until_any || limit_n || highlight;
  }
};

// Decides which rendered steps are emitted, given the order in which they occur.
class StepFilter {
 public:
  explicit StepFilter(SearchSpec spec) : spec_(std::move(spec)) {
    auto mk = [&](const std::optional<std::string>& p) -> std::optional<StepMatcher> {
      if (!p) return std::nullopt;
      return compile_search(*p, spec_.no_parens, spec_.regexp);
    };
    search_ = mk(spec_.pattern);
    after_ = mk(spec_.after);
    after_any_ = mk(spec_.after_any);
    until_ = mk(spec_.until);
    until_any_ = mk(spec_.until_any);
    open_ = !after_ && !after_any_;
  }

  // Feeds one state. Returns the steps to emit now, oldest first.
  std::vector<RenderedStep> feed(RenderedStep s, bool shown) {
    std::vector<RenderedStep> out;
    if (stopped_) return out;
    const std::string text = s.text;
    if (!open_ && !closed_for_good_ && hits(after_, after_any_, text, shown, spec_.invert_after))
      open_ = true;
    if (open_ && shown) {
      bool hit = !search_ || (search_->matches(text) != spec_.invert);
      if (hit && (!spec_.limit_n || results_ < spec_.limit_n)) {
        for (auto& c : context_) out.push_back(std::move(c));
        context_.clear();
        if (search_ && spec_.highlight && !spec_.invert) s.highlights = search_->find_all(text);
        out.push_back(std::move(s));
        ++results_;
      } else if (search_ && spec_.upto) {
        context_.push_back(std::move(s));
        if (context_.size() > spec_.upto) context_.pop_front();
      }
    }
    if (open_ && hits(until_, until_any_, text, shown, spec_.invert_until)) {
      open_ = false;
      context_.clear();
      if (!spec_.repeat) closed_for_good_ = true;
    }
    if (spec_.stop && ((spec_.limit_n && results_ >= spec_.limit_n) || closed_for_good_))
      stopped_ = true;
    return out;
  }

  // Set by feed when evaluation should end early.
  bool stopped() const { return stopped_; }

 private:
  SearchSpec spec_;
  std::optional<StepMatcher> search_, after_, after_any_, until_, until_any_;
  bool open_ = true;
  bool closed_for_good_ = false;
  bool stopped_ = false;
  std::size_t results_ = 0;
  std::deque<RenderedStep> context_;

  static bool hits(const std::optional<StepMatcher>& printed,
                   const std::optional<StepMatcher>& any, const std::string& text, bool shown,
                   bool invert) {
    if (printed && shown && printed->matches(text) != invert) return true;
    if (any && any->matches(text) != invert) return true;
    return false;
  }
};

// ---------------------------------------------------------------- formatting

namespace detail {

enum Style : unsigned { Bold = 1, Under = 2, Rev = 4 };

inline std::string style_codes(unsigned from, unsigned to) {
  std::string s;
  auto flip = [&](unsigned bit, const char* on, const char* off) {
    if ((from & bit) != (to & bit)) s += (to & bit) ? on : off;
  };
  flip(Bold, "\x1b[1m", "\x1b[22m");
  flip(Under, "\x1b[4m", "\x1b[24m");
  flip(Rev, "\x1b[7m", "\x1b[27m");
  return s;
}

inline bool utf8_lead(char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }

inline size_t columns(const std::string& s) {
  return static_cast<size_t>(std::count_if(s.begin(), s.end(), utf8_lead));
}

// Byte ranges of the wrapped pieces of `text`, the spaces at breaks dropped.
inline std::vector<Span> wrap(const std::string& text, size_t first_width, size_t rest_width) {
  std::vector<Span> out;
  size_t pos = 0;
  size_t width = first_width;
  while (text.size() - pos > width && width > 0) {
    size_t cut = text.rfind(' ', pos + width);
    if (cut == std::string::npos || cut <= pos) cut = text.find(' ', pos + width);
    if (cut == std::string::npos) break;
    out.push_back({pos, cut});
    pos = cut + 1;
    width = rest_width;
  }
  out.push_back({pos, text.size()});
  return out;
}

}  // namespace detail

// Writes rendered steps as lines, keeping the side-binding column aligned.
class StepPrinter {
 public:
  StepPrinter(bool color, int width) : color_(color), width_(width) {}

  std::string format(const RenderedStep& s) {
    std::string arrow = s.index == 0 ? "    " : "=>  ";
    std::string prefix;
    if (!s.side_lets.empty() || side_width_ > 0) {
      side_width_ = std::max(side_width_, detail::columns(s.side_lets));
      prefix = std::string(side_width_ - detail::columns(s.side_lets), ' ') + s.side_lets + " ";
    }
    prefix += arrow;
    size_t pw = detail::columns(prefix);
    std::vector<unsigned> style(s.text.size(), 0);
    auto paint = [&](const Span& sp, unsigned bit) {
      for (size_t i = sp.begin; i < sp.end && i < style.size(); ++i) style[i] |= bit;
    };
    for (auto& k : s.keywords) paint(k, detail::Bold);
    if (s.redex) paint(*s.redex, detail::Under);
    for (auto& h : s.highlights) paint(h, detail::Rev);

    std::vector<Span> pieces = {{0, s.text.size()}};
    if (width_ > 0) {
      size_t w = static_cast<size_t>(width_);
      pieces = detail::wrap(s.text, w > pw ? w - pw : 1, w > pw + 2 ? w - pw - 2 : 1);
    }
    std::string out;
    for (size_t p = 0; p < pieces.size(); ++p) {
      std::string lead = p == 0 ? prefix : std::string(pw + 2, ' ');
      const Span& sp = pieces[p];
      out += lead;
      if (color_) {
        unsigned cur = 0;
        for (size_t i = sp.begin; i < sp.end; ++i) {
          unsigned want = style[i] & (detail::Bold | detail::Under | detail::Rev);
          if (want != cur) out += detail::style_codes(cur, want);
          cur = want;
          out += s.text[i];
        }
        out += detail::style_codes(cur, 0);
        out += '\n';
      } else {
        out += s.text.substr(sp.begin, sp.end - sp.begin);
        out += '\n';
        std::string marks;
        bool any = false;
        for (size_t i = sp.begin; i < sp.end; ++i) {
          if (!detail::utf8_lead(s.text[i])) continue;
          char m = ' ';
          if (style[i] & detail::Under)
            m = '^';
          else if (style[i] & detail::Rev)
            m = '~';
          any = any || m != ' ';
          marks += m;
        }
        if (any) {
          while (!marks.empty() && marks.back() == ' ') marks.pop_back();
          out += std::string(detail::columns(lead), ' ') + marks + '\n';
        }
      }
    }
    return out;
  }

 private:
  bool color_;
  int width_;
  size_t side_width_ = 0;
};

// True for lines written under a step to mark its redex or search hits.
inline bool is_marker_line(const std::string& line) {
  bool any = false;
  for (char c : line) {
    if (c == '^' || c == '~')
      any = true;
    else if (c != ' ')
      return false;
  }
  return any;
}

// ---------------------------------------------------------------- sessions

struct TraceConfig {
  EvalOptions eval;
  ElisionPolicy policy;
  DisplayOptions display;
  SearchSpec search;
  bool color = false;
  int width = 0;
  bool markers = true;  // caret lines when color is off
};

inline std::string exception_text(const std::string& name, const Expr& payload) {
  return to_string(make(ex::Constr{0, name, payload}));
}

// Runs a program one shown step at a time.
class TraceSession {
 public:
  enum class End { Running, Value, Uncaught, RunTimeTypeError, Stopped, Internal, StepLimit };

  TraceSession(Expr program, Env env, TraceConfig cfg, std::ostream& out, std::ostream& err,
               const ConstructorTable* ctors = nullptr)
      : state_(std::move(program)),
        env_(std::move(env)),
        cfg_(std::move(cfg)),
        out_(out),
        err_(err),
        stepper_(cfg_.eval, BuiltinContext{&out}, ctors),
        filter_(cfg_.search),
        printer_(cfg_.color, cfg_.width) {}

  // Processes states until something is written or the run ends.
  // Returns false once the run has ended.
  bool advance() {
    while (end_ == End::Running) {
      if (process_one()) break;
    }
    return end_ == End::Running;
  }

  void run_to_end() {
    while (advance()) {
    }
  }

  End end() const { return end_; }
  const Expr& state() const { return state_; }
  std::uint64_t steps() const { return steps_; }

  int exit_code() const {
    switch (end_) {
      case End::Running:
      case End::Value:
      case End::Stopped: return 0;
      case End::Uncaught: return 1;
      case End::RunTimeTypeError: return 3;
      case End::Internal:
      case End::StepLimit: return 4;
    }
    return 4;
  }

 private:
  Expr state_;
  Env env_;
  TraceConfig cfg_;
  std::ostream& out_;
  std::ostream& err_;
  Stepper stepper_;
  StepFilter filter_;
  StepPrinter printer_;
  std::optional<LastOp> prev_;
  std::uint64_t steps_ = 0;
  End end_ = End::Running;

  void emit(const RenderedStep& s) {
    std::string text = printer_.format(s);
    if (!cfg_.markers && !cfg_.color) {
      std::string kept;
      size_t pos = 0;
      while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl - pos);
        if (!is_marker_line(line)) kept += line + '\n';
        pos = nl + 1;
      }
      text = kept;
    }
    out_ << text;
  }

  // Returns true when it wrote something.
  bool process_one() {
    bool wrote = false;
    try {
      bool value = is_value(state_);
      std::optional<LastOp> next;
      const Node* redex = nullptr;
      if (!value) {
        auto pk = stepper_.peek(env_, state_);
        next = pk.op;
        redex = display_redex(state_, pk.redex, pk.op);
      }
      bool shown = should_print(prev_, value, next, cfg_.policy);
      RenderedStep r = render_step(state_, redex, steps_, cfg_.display);
      for (auto& s : filter_.feed(std::move(r), shown)) {
        emit(s);
        wrote = true;
      }
      if (value) {
        end_ = End::Value;
        return true;
      }
      if (filter_.stopped()) {
        end_ = End::Stopped;
        return true;
      }
      if (cfg_.eval.max_steps && steps_ >= cfg_.eval.max_steps)
        throw StepLimitExceeded(cfg_.eval.max_steps);
      StepOutcome o = stepper_.eval_step(env_, state_);
      switch (o.kind) {
        case StepOutcome::Next:
          state_ = o.expr;
          prev_ = o.op;
          ++steps_;
          break;
        case StepOutcome::AlreadyValue: end_ = End::Value; return true;
        case StepOutcome::Uncaught:
          out_ << "Exception: " << exception_text(o.name, o.payload) << ".\n";
          end_ = End::Uncaught;
          return true;
        case StepOutcome::RunTimeTypeError:
          out_ << "Run time type error:\n  " << o.message << "\n";
          end_ = End::RunTimeTypeError;
          return true;
      }
    } catch (const StepLimitExceeded& e) {
      out_.flush();
      err_ << "Error: " << e.what() << "\n";
      end_ = End::StepLimit;
      return true;
    } catch (const std::exception& e) {
      out_.flush();
      err_ << "Internal error: " << e.what() << "\n";
      end_ = End::Internal;
      return true;
    }
    return wrote;
  }
};

}  // namespace stepdbg
