// Precedence-climbing parser for MiniML.
//
// Levels, loosest first:
//   0  let / match / fun / function / try (extend as far right as possible)
//   1  ;            right
//   2  if
//   3  := <-       right
//   4  ,
//   5  ||           right
//   6  &&           right
//   7  = <> < > <= >=  left
//   8  @            right
//   9  ::           right
//   10 + -          left
//   11 * / mod      left
//   12 unary minus
//   13 application, constructor application, raise
//   14 prefix !
//   15 atoms and .field
#pragma once

#include <limits>
#include <string>
#include <string_view>

#include "ast.hpp"
#include "lexer.hpp"

namespace stepdbg {

class Parser {
 public:
  Parser(std::string_view src, ConstructorTable ctors, bool program_mode = false)
      : toks_(tokenize(src)), ctors_(std::move(ctors)), program_mode_(program_mode) {}

  Expr parse_single() {
    Expr e = expr(0);
    expect_eof();
    return e;
  }

  Program parse_program() {
    Program prog;
    while (!at_eof()) {
      if (is_sym(";;")) {
        ++pos_;
        continue;
      }
      item_start_ = pos_;
      if (is_kw("exception")) {
        prog.items.push_back(exception_decl());
      } else if (is_kw("constr")) {
        constr_decl();
      } else if (is_kw("let")) {
        size_t save = pos_;
        ++pos_;
        bool rec = accept_kw("rec");
        auto bs = let_bindings(rec);
        if (is_kw("in")) {
          pos_ = save;
          prog.items.push_back(expr(0));
        } else {
          prog.items.push_back(LetDef{rec, std::move(bs)});
        }
      } else {
        prog.items.push_back(expr(0));
      }
    }
    prog.constructors = ctors_;
    return prog;
  }

  const ConstructorTable& constructors() const { return ctors_; }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;
  ConstructorTable ctors_;
  bool program_mode_;
  size_t item_start_ = 0;

  const Token& cur() const { return toks_[pos_]; }
  const Token& at(size_t k) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  bool at_eof() const { return cur().kind == Tok::Eof; }
  bool is_sym(std::string_view s) const { return cur().kind == Tok::Symbol && cur().text == s; }
  bool is_kw(std::string_view s) const { return cur().kind == Tok::Keyword && cur().text == s; }
  bool accept_sym(std::string_view s) {
    if (!is_sym(s)) return false;
    ++pos_;
    return true;
  }
  bool accept_kw(std::string_view s) {
    if (!is_kw(s)) return false;
    ++pos_;
    return true;
  }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::Eof: return "end of input";
      case Tok::Str: return "string literal";
      case Tok::Char: return "character literal";
      default: return "'" + t.text + "'";
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError(cur().line, cur().column, msg);
  }
  [[noreturn]] void unexpected() const { fail("unexpected " + describe(cur())); }

  void expect_sym(std::string_view s) {
    if (!accept_sym(s)) fail("expected '" + std::string(s) + "' but found " + describe(cur()));
  }
  void expect_kw(std::string_view s) {
    if (!accept_kw(s)) fail("expected '" + std::string(s) + "' but found " + describe(cur()));
  }
  void expect_eof() {
    if (!at_eof()) unexpected();
  }
  std::string expect_ident() {
    if (cur().kind != Tok::Ident) fail("expected identifier but found " + describe(cur()));
    return toks_[pos_++].text;
  }

  // In program mode a token in column 1 starts a new top-level item.
  bool item_boundary() const {
    return program_mode_ && pos_ > item_start_ && cur().column == 1 && pos_ > 0 &&
           toks_[pos_ - 1].line != cur().line;
  }

  // ---------------------------------------------------------------- declarations

  void skip_type_expr(int line) {
    while (!at_eof() && cur().line == line &&
           (cur().kind == Tok::Ident || is_sym("_") || is_sym("*") || is_sym("(") ||
            is_sym(")") || is_sym(",") || is_sym("->")))
      ++pos_;
  }

  Item exception_decl() {
    ++pos_;
    if (cur().kind != Tok::UIdent) fail("expected exception name");
    std::string name = toks_[pos_++].text;
    bool payload = false;
    if (is_kw("of")) {
      int line = cur().line;
      ++pos_;
      payload = true;
      skip_type_expr(line);
    }
    ctors_.declare_exception(name, payload);
    return ExceptionDef{name, payload};
  }

  void constr_decl() {
    ++pos_;
    accept_sym("|");
    std::vector<std::pair<std::string, bool>> alts;
    for (;;) {
      if (cur().kind != Tok::UIdent) fail("expected constructor name");
      std::string name = toks_[pos_++].text;
      bool payload = false;
      if (is_kw("of")) {
        int line = cur().line;
        ++pos_;
        payload = true;
        skip_type_expr(line);
      }
      alts.emplace_back(name, payload);
      if (!accept_sym("|")) break;
    }
    ctors_.declare_variant(alts);
  }

  // ---------------------------------------------------------------- patterns

  Pattern pattern() {
    Pattern p = pattern_or();
    while (accept_kw("as")) p = make_pat(pt::Alias{expect_ident(), p});
    return p;
  }

  Pattern pattern_or() {
    Pattern p = pattern_tuple();
    while (is_sym("|") && starts_pattern(at(1))) {
      ++pos_;
      Pattern q = pattern_tuple();
      if (pattern_vars(p) != pattern_vars(q))
        fail("both sides of an or-pattern must bind the same variables");
      p = make_pat(pt::Or{p, q});
    }
    return p;
  }

  static bool starts_pattern(const Token& t) {
    switch (t.kind) {
      case Tok::Int: case Tok::Char: case Tok::Str: case Tok::Ident: case Tok::UIdent: return true;
      case Tok::Keyword: return t.text == "true" || t.text == "false";
      case Tok::Symbol:
        return t.text == "_" || t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-";
      default: return false;
    }
  }

  Pattern pattern_tuple() {
    Pattern p = pattern_cons();
    if (!is_sym(",")) return p;
    std::vector<Pattern> items{p};
    while (accept_sym(",")) items.push_back(pattern_cons());
    return make_pat(pt::Tuple{std::move(items)});
  }

  Pattern pattern_cons() {
    Pattern h = pattern_app();
    if (accept_sym("::")) return make_pat(pt::Cons{h, pattern_cons()});
    return h;
  }

  Pattern pattern_app() {
    if (cur().kind == Tok::UIdent) {
      std::string name = cur().text;
      const CtorInfo* info = ctors_.find(name);
      if (!info) fail("unknown constructor " + name);
      ++pos_;
      if (info->has_payload) return make_pat(pt::Constr{name, pattern_atom()});
      return make_pat(pt::Constr{name, nullptr});
    }
    return pattern_atom();
  }

  std::int64_t int_literal(bool negative) {
    const std::string& digits = cur().text;
    unsigned long long v = 0;
    for (char c : digits) {
      if (v > (std::numeric_limits<unsigned long long>::max() - (c - '0')) / 10)
        fail("integer literal out of range");
      v = v * 10 + (c - '0');
    }
    unsigned long long limit = static_cast<unsigned long long>(std::numeric_limits<std::int64_t>::max());
    if (v > limit + (negative ? 1 : 0)) fail("integer literal out of range");
    ++pos_;
    if (negative) return static_cast<std::int64_t>(0ULL - v);
    return static_cast<std::int64_t>(v);
  }

  Pattern pattern_atom() {
    const Token& t = cur();
    switch (t.kind) {
      case Tok::Int: return make_pat(pt::Int{int_literal(false)});
      case Tok::Char: {
        char32_t lo = t.ch;
        ++pos_;
        if (accept_sym("..")) {
          if (cur().kind != Tok::Char) fail("expected character after '..'");
          char32_t hi = cur().ch;
          if (hi < lo) fail("empty character range");
          ++pos_;
          return make_pat(pt::CharRange{lo, hi});
        }
        return make_pat(pt::Char{lo});
      }
      case Tok::Str: {
        std::string s = t.text;
        ++pos_;
        return make_pat(pt::Str{s});
      }
      case Tok::Ident: {
        std::string s = t.text;
        ++pos_;
        return pvar(s);
      }
      case Tok::UIdent: {
        const CtorInfo* info = ctors_.find(t.text);
        if (!info) fail("unknown constructor " + t.text);
        if (info->has_payload) fail("constructor " + t.text + " expects an argument");
        std::string s = t.text;
        ++pos_;
        return make_pat(pt::Constr{s, nullptr});
      }
      case Tok::Keyword:
        if (t.text == "true" || t.text == "false") {
          bool v = t.text == "true";
          ++pos_;
          return make_pat(pt::Bool{v});
        }
        break;
      case Tok::Symbol:
        if (t.text == "_") {
          ++pos_;
          return make_pat(pt::Any{});
        }
        if (t.text == "-" && at(1).kind == Tok::Int) {
          ++pos_;
          return make_pat(pt::Int{int_literal(true)});
        }
        if (t.text == "(") {
          ++pos_;
          if (accept_sym(")")) return make_pat(pt::Unit{});
          Pattern p = pattern();
          expect_sym(")");
          return p;
        }
        if (t.text == "[") {
          ++pos_;
          std::vector<Pattern> items;
          if (!is_sym("]")) {
            items.push_back(pattern());
            while (accept_sym(";")) {
              if (is_sym("]")) break;
              items.push_back(pattern());
            }
          }
          expect_sym("]");
          Pattern r = make_pat(pt::Nil{});
          for (auto it = items.rbegin(); it != items.rend(); ++it) r = make_pat(pt::Cons{*it, r});
          return r;
        }
        if (t.text == "{") {
          ++pos_;
          std::vector<std::pair<std::string, Pattern>> fields;
          do {
            if (is_sym("}")) break;
            std::string name = expect_ident();
            expect_sym("=");
            fields.emplace_back(name, pattern());
          } while (accept_sym(";"));
          expect_sym("}");
          return make_pat(pt::Record{std::move(fields)});
        }
        break;
      default: break;
    }
    fail("expected pattern but found " + describe(t));
  }

  // ---------------------------------------------------------------- expressions

  bool starts_atom() const {
    if (item_boundary()) return false;
    const Token& t = cur();
    switch (t.kind) {
      case Tok::Int: case Tok::Char: case Tok::Str: case Tok::Ident: case Tok::UIdent: return true;
      case Tok::Keyword:
        return t.text == "true" || t.text == "false" || t.text == "begin" || t.text == "for" ||
               t.text == "while";
      case Tok::Symbol: return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "!";
      default: return false;
    }
  }

  struct BinInfo {
    int level;
    bool right;
  };

  std::optional<BinInfo> binop() const {
    if (item_boundary()) return std::nullopt;
    const Token& t = cur();
    if (t.kind == Tok::Keyword && t.text == "mod") return BinInfo{11, false};
    if (t.kind != Tok::Symbol) return std::nullopt;
    const std::string& s = t.text;
    if (s == ";") return BinInfo{1, true};
    if (s == ":=" || s == "<-") return BinInfo{3, true};
    if (s == ",") return BinInfo{4, false};
    if (s == "||") return BinInfo{5, true};
    if (s == "&&") return BinInfo{6, true};
    if (s == "=" || s == "<>" || s == "<" || s == ">" || s == "<=" || s == ">=")
      return BinInfo{7, false};
    if (s == "@") return BinInfo{8, true};
    if (s == "::") return BinInfo{9, true};
    if (s == "+" || s == "-") return BinInfo{10, false};
    if (s == "*" || s == "/") return BinInfo{11, false};
    return std::nullopt;
  }

  // Tokens after which a trailing `;` may close a sequence.
  bool closes_sequence() const {
    if (at_eof()) return true;
    const Token& t = cur();
    if (t.kind == Tok::Symbol)
      return t.text == ")" || t.text == "]" || t.text == "}" || t.text == ";;" || t.text == "|";
    if (t.kind == Tok::Keyword)
      return t.text == "end" || t.text == "done" || t.text == "in" || t.text == "with" ||
             t.text == "then" || t.text == "else" || t.text == "and" ||
             t.text == "exception" || t.text == "constr";
    return item_boundary();
  }

  Expr expr(int level) {
    Expr lhs = prefix(level);
    for (;;) {
      auto info = binop();
      if (!info || info->level < level) return lhs;
      std::string op = cur().text;
      ++pos_;
      if (op == ";") {
        if (closes_sequence()) return lhs;
        if (program_mode_ && cur().kind == Tok::Keyword && cur().text == "let") {
          // `a; let x = 1` followed by another item ends the sequence, `a; let x = 1 in b` does not
          size_t save = pos_;
          try {
            lhs = make(ex::Seq{lhs, expr(1)});
          } catch (const SyntaxError&) {
            pos_ = save;
            return lhs;
          }
          continue;
        }
        lhs = make(ex::Seq{lhs, expr(1)});
      } else if (op == ",") {
        std::vector<Expr> items{lhs};
        items.push_back(expr(5));
        while (accept_sym(",")) items.push_back(expr(5));
        lhs = make(ex::Tuple{std::move(items)});
      } else if (op == "<-") {
        const ex::Field* f = as<ex::Field>(lhs);
        if (!f) fail("left side of '<-' must be a record field");
        lhs = make(ex::SetField{f->rec, f->name, expr(3)});
      } else {
        Expr rhs = expr(info->right ? info->level : info->level + 1);
        lhs = combine(op, lhs, rhs);
      }
    }
  }

  static Expr combine(const std::string& op, Expr a, Expr b) {
    if (op == "+") return stepdbg::op(ArithOp::Add, a, b);
    if (op == "-") return stepdbg::op(ArithOp::Sub, a, b);
    if (op == "*") return stepdbg::op(ArithOp::Mul, a, b);
    if (op == "/") return stepdbg::op(ArithOp::Div, a, b);
    if (op == "mod") return stepdbg::op(ArithOp::Mod, a, b);
    if (op == "=") return cmp(CmpOp::Eq, a, b);
    if (op == "<>") return cmp(CmpOp::Ne, a, b);
    if (op == "<") return cmp(CmpOp::Lt, a, b);
    if (op == "<=") return cmp(CmpOp::Le, a, b);
    if (op == ">") return cmp(CmpOp::Gt, a, b);
    if (op == ">=") return cmp(CmpOp::Ge, a, b);
    if (op == "&&") return make(ex::And{a, b});
    if (op == "||") return make(ex::Or{a, b});
    if (op == "::") return cons(a, b);
    // := and @ are prelude functions
    return app(app(var(op), a), b);
  }

  Expr prefix(int level) {
    const Token& t = cur();
    if (t.kind == Tok::Keyword) {
      const std::string& k = t.text;
      if (k == "let") return let_expr();
      if (k == "fun") return fun_expr();
      if (k == "function") {
        ++pos_;
        return make(ex::Function{cases(), {}});
      }
      if (k == "match") {
        ++pos_;
        Expr subject = expr(0);
        expect_kw("with");
        return make(ex::Match{subject, cases()});
      }
      if (k == "try") {
        ++pos_;
        Expr body = expr(0);
        expect_kw("with");
        return make(ex::TryWith{body, cases()});
      }
      if (k == "if") return if_expr();
      if (k == "raise") {
        ++pos_;
        return raise_of(expr(14));
      }
    }
    if (t.kind == Tok::Symbol && t.text == "-") {
      ++pos_;
      if (cur().kind == Tok::Int) {
        Expr lit = int_(int_literal(true));
        return postfix_apply(lit, level);
      }
      return stepdbg::op(ArithOp::Sub, int_(0), expr(12));
    }
    if (t.kind == Tok::UIdent) {
      const CtorInfo* info = ctors_.find(t.text);
      if (!info) fail("unknown constructor " + t.text);
      std::string name = t.text;
      ++pos_;
      if (info->has_payload) {
        if (!starts_atom()) fail("constructor " + name + " expects an argument");
        return make(ex::Constr{info->tag, name, expr(14)});
      }
      return make(ex::Constr{info->tag, name, nullptr});
    }
    Expr head = bang_or_atom();
    return postfix_apply(head, level);
  }

  Expr postfix_apply(Expr head, int level) {
    if (level > 13) return head;
    while (starts_atom()) head = app(head, bang_or_atom());
    return head;
  }

  Expr bang_or_atom() {
    if (accept_sym("!")) return app(var("!"), bang_or_atom());
    return atom_with_fields();
  }

  Expr raise_of(const Expr& e) {
    if (auto* c = as<ex::Constr>(e)) {
      if (!ctors_.find(c->name)->exception) fail("raise expects an exception, got " + c->name);
      return make(ex::Raise{c->name, c->payload});
    }
    fail("raise expects an exception constructor");
  }

  Expr if_expr() {
    ++pos_;
    Expr c = expr(0);
    expect_kw("then");
    Expr a = expr(3);
    Expr b;
    if (accept_kw("else")) b = expr(3);
    return make(ex::If{c, a, b});
  }

  std::vector<Pattern> params() {
    std::vector<Pattern> ps;
    while (starts_pattern(cur()) && !is_sym("-") && cur().kind != Tok::UIdent)
      ps.push_back(pattern_atom());
    return ps;
  }

  static Expr curry(const std::vector<Pattern>& ps, Expr body) {
    for (auto it = ps.rbegin(); it != ps.rend(); ++it)
      body = make(ex::Fun{*it, body, {}});
    return body;
  }

  Expr fun_expr() {
    ++pos_;
    auto ps = params();
    if (ps.empty()) fail("expected parameter after 'fun'");
    expect_sym("->");
    return curry(ps, expr(0));
  }

  std::vector<ex::Binding> let_bindings(bool rec) {
    std::vector<ex::Binding> bs;
    do {
      Pattern p;
      std::vector<Pattern> ps;
      const Token& next = at(1);
      bool simple_name = cur().kind == Tok::Ident &&
                         !(next.kind == Tok::Symbol &&
                           (next.text == "," || next.text == "::" || next.text == "|")) &&
                         !(next.kind == Tok::Keyword && next.text == "as");
      if (simple_name) {
        p = pvar(cur().text);
        ++pos_;
        ps = params();
      } else {
        p = pattern();
      }
      expect_sym("=");
      Expr rhs = curry(ps, expr(0));
      if (rec && !as<pt::Var>(p)) fail("recursive bindings must bind plain names");
      bs.push_back({p, rhs});
    } while (accept_kw("and"));
    return bs;
  }

  Expr let_expr() {
    ++pos_;
    bool rec = accept_kw("rec");
    auto bs = let_bindings(rec);
    expect_kw("in");
    Expr body = expr(0);
    return make(ex::Let{rec, std::move(bs), body});
  }

  std::vector<Case> cases() {
    accept_sym("|");
    std::vector<Case> cs;
    do {
      Pattern p = pattern();
      Expr guard;
      if (accept_kw("when")) guard = expr(0);
      expect_sym("->");
      cs.push_back({p, guard, expr(0)});
    } while (accept_sym("|"));
    return cs;
  }

  Expr loop_body() {
    if (accept_kw("done")) return unit();
    Expr body = expr(0);
    expect_kw("done");
    return body;
  }

  Expr for_expr() {
    ++pos_;
    std::string name = expect_ident();
    expect_sym("=");
    Expr from = expr(0);
    ForDir dir;
    if (accept_kw("to"))
      dir = ForDir::UpTo;
    else if (accept_kw("downto"))
      dir = ForDir::DownTo;
    else
      fail("expected 'to' or 'downto' but found " + describe(cur()));
    Expr to = expr(0);
    expect_kw("do");
    Expr body = loop_body();
    return make(ex::For{name, from, dir, to, body, body});
  }

  Expr atom_with_fields() {
    Expr e = atom();
    while (is_sym(".") && at(1).kind == Tok::Ident) {
      ++pos_;
      e = make(ex::Field{e, expect_ident()});
    }
    return e;
  }

  Expr atom() {
    const Token& t = cur();
    switch (t.kind) {
      case Tok::Int: return int_(int_literal(false));
      case Tok::Char: {
        char32_t c = t.ch;
        ++pos_;
        return char_(c);
      }
      case Tok::Str: {
        std::string s = t.text;
        ++pos_;
        return str(s);
      }
      case Tok::Ident: {
        std::string s = t.text;
        ++pos_;
        return var(s);
      }
      case Tok::UIdent: {
        const CtorInfo* info = ctors_.find(t.text);
        if (!info) fail("unknown constructor " + t.text);
        if (info->has_payload) fail("constructor " + t.text + " expects an argument");
        std::string s = t.text;
        ++pos_;
        return make(ex::Constr{info->tag, s, nullptr});
      }
      case Tok::Keyword:
        if (t.text == "true" || t.text == "false") {
          bool v = t.text == "true";
          ++pos_;
          return bool_(v);
        }
        if (t.text == "begin") {
          ++pos_;
          if (accept_kw("end")) return unit();
          Expr e = expr(0);
          expect_kw("end");
          return e;
        }
        if (t.text == "for") return for_expr();
        if (t.text == "while") {
          ++pos_;
          Expr g = expr(0);
          expect_kw("do");
          Expr body = loop_body();
          return make(ex::While{g, body, g, body});
        }
        if (t.text == "let" || t.text == "fun" || t.text == "function" || t.text == "match" ||
            t.text == "try" || t.text == "if" || t.text == "raise")
          return prefix(0);
        break;
      case Tok::Symbol:
        if (t.text == "(") {
          ++pos_;
          if (accept_sym(")")) return unit();
          if ((is_sym(":=") || is_sym("@") || is_sym("!")) && at(1).kind == Tok::Symbol &&
              at(1).text == ")") {
            std::string s = cur().text;
            pos_ += 2;
            return var(s);
          }
          Expr e = expr(0);
          expect_sym(")");
          return e;
        }
        if (t.text == "[") {
          ++pos_;
          std::vector<Expr> items;
          if (!is_sym("]")) {
            items.push_back(expr(3));
            while (accept_sym(";")) {
              if (is_sym("]")) break;
              items.push_back(expr(3));
            }
          }
          expect_sym("]");
          return list(items);
        }
        if (t.text == "{") {
          ++pos_;
          std::vector<std::pair<std::string, Expr>> fields;
          do {
            if (is_sym("}")) break;
            std::string name = expect_ident();
            expect_sym("=");
            fields.emplace_back(name, expr(3));
          } while (accept_sym(";"));
          expect_sym("}");
          return record(fields);
        }
        break;
      default: break;
    }
    if (at_eof()) fail("unexpected end of input");
    unexpected();
  }
};

inline Expr parse_expr(std::string_view src,
                       const ConstructorTable& ctors = ConstructorTable::builtin()) {
  return Parser(src, ctors).parse_single();
}

inline Program parse_program(std::string_view src,
                             const ConstructorTable& ctors = ConstructorTable::builtin()) {
  return Parser(src, ctors, true).parse_program();
}

}  // namespace stepdbg
