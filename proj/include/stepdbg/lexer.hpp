// Tokenizer for MiniML source text.
#pragma once

#include <cctype>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stepdbg {

struct SyntaxError : std::runtime_error {
  int line, column;
  SyntaxError(int line, int column, const std::string& msg)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line(line),
        column(column) {}
};

enum class Tok { Int, Char, Str, Ident, UIdent, Keyword, Symbol, Eof };

struct Token {
  Tok kind;
  std::string text;       // identifier, keyword, symbol, raw integer digits, or decoded string
  char32_t ch = 0;        // decoded character literal
  int line = 1, column = 1;
  size_t offset = 0, end = 0;  // byte range in the source
};

inline const std::set<std::string>& keywords() {
  static const std::set<std::string> k = {
      "let", "rec", "in", "if", "then", "else", "fun", "function", "match", "with",
      "try", "raise", "for", "to", "downto", "do", "done", "while", "begin", "end",
      "and", "of", "true", "false", "when", "as", "mod", "constr", "exception"};
  return k;
}

inline void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out += static_cast<char>(c);
  } else if (c < 0x800) {
    out += static_cast<char>(0xC0 | (c >> 6));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else if (c < 0x10000) {
    out += static_cast<char>(0xE0 | (c >> 12));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (c >> 18));
    out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> tokenize() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = col_;
      t.offset = pos_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::Eof;
        t.end = pos_;
        out.push_back(t);
        return out;
      }
      lex_one(t);
      t.end = pos_;
      out.push_back(std::move(t));
    }
  }

 private:
  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;

  char peekc(size_t k = 0) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

  void advance() {
    if (pos_ >= src_.size()) return;
    unsigned char c = static_cast<unsigned char>(src_[pos_++]);
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else if ((c & 0xC0) != 0x80) {
      ++col_;
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(line_, col_, msg); }

  void skip_space() {
    for (;;) {
      char c = peekc();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        advance();
      } else if (c == '-' && peekc(1) == '-') {
        while (pos_ < src_.size() && peekc() != '\n') advance();
      } else {
        return;
      }
    }
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  }

  char32_t read_utf8() {
    unsigned char c = static_cast<unsigned char>(peekc());
    int extra = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F, extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F, extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07, extra = 3;
    } else {
      fail("invalid UTF-8 byte");
    }
    advance();
    for (int i = 0; i < extra; ++i) {
      unsigned char d = static_cast<unsigned char>(peekc());
      if ((d & 0xC0) != 0x80) fail("invalid UTF-8 sequence");
      cp = (cp << 6) | (d & 0x3F);
      advance();
    }
    return cp;
  }

  char32_t read_escape() {
    advance();  // backslash
    char c = peekc();
    switch (c) {
      case 'n': advance(); return '\n';
      case 't': advance(); return '\t';
      case 'r': advance(); return '\r';
      case 'b': advance(); return '\b';
      case '\\': advance(); return '\\';
      case '\'': advance(); return '\'';
      case '"': advance(); return '"';
      case ' ': advance(); return ' ';
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      int v = 0;
      for (int i = 0; i < 3; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(peekc()))) fail("bad decimal escape");
        v = v * 10 + (peekc() - '0');
        advance();
      }
      if (v > 255) fail("decimal escape out of range");
      return static_cast<char32_t>(v);
    }
    fail(std::string("unknown escape \\") + c);
  }

  void lex_one(Token& t) {
    char c = peekc();
    if (std::isdigit(static_cast<unsigned char>(c))) {
      t.kind = Tok::Int;
      while (std::isdigit(static_cast<unsigned char>(peekc())) || peekc() == '_') {
        if (peekc() != '_') t.text += peekc();
        advance();
      }
      if (ident_start(peekc())) fail("malformed integer literal");
      return;
    }
    if (ident_start(c) && !(c == '_' && !ident_char(peekc(1)))) {
      while (ident_char(peekc())) {
        t.text += peekc();
        advance();
      }
      if (keywords().count(t.text))
        t.kind = Tok::Keyword;
      else if (std::isupper(static_cast<unsigned char>(t.text[0])))
        t.kind = Tok::UIdent;
      else
        t.kind = Tok::Ident;
      return;
    }
    if (c == '\'') {
      advance();
      t.kind = Tok::Char;
      if (peekc() == '\\')
        t.ch = read_escape();
      else if (peekc() == '\'' || peekc() == '\0' || peekc() == '\n')
        fail("empty character literal");
      else
        t.ch = read_utf8();
      if (peekc() != '\'') fail("unterminated character literal");
      advance();
      return;
    }
    if (c == '"') {
      advance();
      t.kind = Tok::Str;
      for (;;) {
        char d = peekc();
        if (pos_ >= src_.size()) fail("unterminated string literal");
        if (d == '"') {
          advance();
          break;
        }
        if (d == '\\') {
          append_utf8(t.text, read_escape());
        } else {
          t.text += d;
          advance();
        }
      }
      return;
    }
    static const char* two[] = {";;", "->", "<=", ">=", "<>", "&&", "||", "::", ":=", "..", "<-"};
    for (const char* s : two) {
      if (c == s[0] && peekc(1) == s[1]) {
        t.kind = Tok::Symbol;
        t.text = s;
        advance();
        advance();
        return;
      }
    }
    static const std::string single = "()[]{},;|=<>@!+-*/._";
    if (single.find(c) != std::string::npos) {
      t.kind = Tok::Symbol;
      t.text = std::string(1, c);
      advance();
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

inline std::vector<Token> tokenize(std::string_view src) { return Lexer(src).tokenize(); }

}  // namespace stepdbg
