#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqf/core.hpp"
#include "sqf/ints.hpp"

namespace sqf {

/** Byte range into the text handed to parse_formula. */
struct SourceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
};

/** Syntax or theory violation, located by line and column in the source. */
class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& message, SourceSpan span, std::size_t line,
              std::size_t column)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " +
                           message),
        span_(span),
        line_(line),
        column_(column) {}

  const SourceSpan& span() const { return span_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  SourceSpan span_;
  std::size_t line_;
  std::size_t column_;
};

namespace detail {

enum class Tok {
  End,
  Ident,
  Number,
  LParen,
  RParen,
  LBracket,
  RBracket,
  Comma,
  Dot,
  Amp,
  Pipe,
  Bang,
  BangEq,
  Eq,
  Lt,
  Star,
  Slash,
  Plus,
  Minus,
};

struct Token {
  Tok kind = Tok::End;
  std::string_view text;
  SourceSpan span;
};

inline bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
}
inline bool is_reserved(std::string_view s) {
  return s == "in" || s == "exists" || s == "sqf";
}

class FormulaParser {
 public:
  FormulaParser(std::string_view text, Theory theory) : text_(text), theory_(theory) {
    lex();
  }

  Formula parse() {
    Formula f = at("exists") ? quantified() : disjunction();
    if (cur().kind != Tok::End) fail("unexpected trailing input", cur().span);
    return f;
  }

 private:
  std::string_view text_;
  Theory theory_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;

  // ---- lexing ----

  void lex() {
    std::size_t i = 0, n = text_.size();
    auto push = [&](Tok k, std::size_t s, std::size_t e) {
      toks_.push_back(Token{k, text_.substr(s, e - s), SourceSpan{s, e}});
    };
    while (i < n) {
      char c = text_[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      std::size_t s = i;
      if (is_ident_start(c)) {
        while (i < n && is_ident_char(text_[i])) ++i;
        push(Tok::Ident, s, i);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        while (i < n && std::isdigit(static_cast<unsigned char>(text_[i]))) ++i;
        push(Tok::Number, s, i);
        continue;
      }
      if (c == '!' && i + 1 < n && text_[i + 1] == '=') {
        push(Tok::BangEq, s, i + 2);
        i += 2;
        continue;
      }
      Tok k;
      switch (c) {
        case '(': k = Tok::LParen; break;
        case ')': k = Tok::RParen; break;
        case '[': k = Tok::LBracket; break;
        case ']': k = Tok::RBracket; break;
        case ',': k = Tok::Comma; break;
        case '.': k = Tok::Dot; break;
        case '&': k = Tok::Amp; break;
        case '|': k = Tok::Pipe; break;
        case '!': k = Tok::Bang; break;
        case '=': k = Tok::Eq; break;
        case '<': k = Tok::Lt; break;
        case '*': k = Tok::Star; break;
        case '/': k = Tok::Slash; break;
        case '+': k = Tok::Plus; break;
        case '-': k = Tok::Minus; break;
        default:
          fail("unexpected character '" + std::string(1, c) + "'", SourceSpan{s, s + 1});
      }
      push(k, s, i + 1);
      ++i;
    }
    toks_.push_back(Token{Tok::End, {}, SourceSpan{n, n}});
  }

  // ---- token helpers ----

  const Token& cur() const { return toks_[pos_]; }
  const Token& peek(std::size_t ahead = 1) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  Token advance() { return toks_[pos_++]; }
  bool at(Tok k) const { return cur().kind == k; }
  bool at(std::string_view kw) const { return cur().kind == Tok::Ident && cur().text == kw; }
  bool accept(Tok k) {
    if (!at(k)) return false;
    ++pos_;
    return true;
  }
  Token expect(Tok k, const char* what) {
    if (!at(k)) fail(std::string("expected ") + what, cur().span);
    return advance();
  }

  [[noreturn]] void fail(const std::string& msg, SourceSpan sp) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < sp.start && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw parse_error(msg, sp, line, col);
  }

  // ---- grammar ----

  Formula quantified() {
    advance();  // exists
    Token v = expect(Tok::Ident, "a variable after 'exists'");
    if (is_reserved(v.text)) fail("reserved word used as a variable", v.span);
    expect(Tok::Dot, "'.' after the bound variable");
    return Formula::make_exists(std::string(v.text), disjunction());
  }

  Formula disjunction() {
    std::vector<Formula> kids;
    kids.push_back(conjunction());
    while (accept(Tok::Pipe)) kids.push_back(conjunction());
    return Formula::make_or(std::move(kids));
  }

  Formula conjunction() {
    std::vector<Formula> kids;
    kids.push_back(literal());
    while (accept(Tok::Amp)) kids.push_back(literal());
    return Formula::make_and(std::move(kids));
  }

  Formula literal() {
    if (accept(Tok::Bang)) return Formula::make_not(literal());
    if (at(Tok::LParen)) {
      advance();
      if (at("exists")) fail("quantifier must be outermost", cur().span);
      Formula f = disjunction();
      expect(Tok::RParen, "')'");
      return f;
    }
    return atom();
  }

  Formula atom() {
    if (at("sqf") && peek().kind == Tok::LParen) {
      Token kw = advance();
      advance();  // (
      Term t = term().first;
      Token close = expect(Tok::RParen, "')'");
      check_atom_term(t, SourceSpan{kw.span.start, close.span.end});
      return Formula::make_atom(Atom::in_P(std::move(t), 1));
    }

    auto [lhs, lsp] = term();
    if (at("in")) {
      advance();
      Token which = expect(Tok::Ident, "'U' or 'P' after 'in'");
      if (which.text == "U") {
        expect(Tok::LBracket, "'['");
        auto [p, psp] = integer();
        if (p < 2 || !is_prime(p)) fail("U[p,l] requires a prime p", psp);
        expect(Tok::Comma, "','");
        auto [l, lsp2] = integer();
        if (!l.fits_slong_p()) fail("level out of range", lsp2);
        Token close = expect(Tok::RBracket, "']'");
        check_atom_term(lhs, SourceSpan{lsp.start, close.span.end});
        return Formula::make_atom(Atom::in_U(std::move(lhs), std::move(p), l.get_si()));
      }
      if (which.text == "P") {
        expect(Tok::LBracket, "'['");
        auto [m, msp] = integer();
        if (m < 1) fail("P[m] requires a positive m", msp);
        Token close = expect(Tok::RBracket, "']'");
        check_atom_term(lhs, SourceSpan{lsp.start, close.span.end});
        return Formula::make_atom(Atom::in_P(std::move(lhs), std::move(m)));
      }
      fail("expected 'U' or 'P' after 'in'", which.span);
    }
    if (accept(Tok::Eq)) {
      auto [rhs, rsp] = term();
      Term d = lhs - rhs;
      check_atom_term(d, SourceSpan{lsp.start, rsp.end});
      return Formula::make_atom(Atom::eq_zero(std::move(d)));
    }
    if (accept(Tok::BangEq)) {
      auto [rhs, rsp] = term();
      Term d = lhs - rhs;
      check_atom_term(d, SourceSpan{lsp.start, rsp.end});
      return Formula::make_not(Formula::make_atom(Atom::eq_zero(std::move(d))));
    }
    if (at(Tok::Lt)) {
      Token op = advance();
      if (theory_ != Theory::Q2) fail("order atoms are only allowed under theory q2", op.span);
      auto [rhs, rsp] = term();
      Term d = lhs - rhs;
      check_atom_term(d, SourceSpan{lsp.start, rsp.end});
      return Formula::make_atom(Atom::lt_zero(std::move(d)));
    }
    fail("expected 'in', '=', '!=' or '<' after a term", cur().span);
  }

  // Signed integer literal, e.g. the level in U[2,-1].
  std::pair<Int, SourceSpan> integer() {
    std::size_t s = cur().span.start;
    bool neg = accept(Tok::Minus);
    Token n = expect(Tok::Number, "an integer");
    Int v(std::string(n.text));
    if (neg) v = -v;
    return {std::move(v), SourceSpan{s, n.span.end}};
  }

  // One multiplicative factor of an addend: an integer or rational literal,
  // or a variable.  Adjacent number-then-variable counts as multiplication.
  struct Addend {
    Rat scale = Rat(1);
    std::string var;  // empty when the addend is constant
  };

  void factor(Addend& a) {
    if (at(Tok::Number)) {
      Token n = advance();
      Rat v(Int(std::string(n.text)));
      if (accept(Tok::Slash)) {
        Token d = expect(Tok::Number, "a denominator");
        Int dv(std::string(d.text));
        if (dv == 0) fail("zero denominator", d.span);
        v = Rat(num(v), dv);
        v.canonicalize();
      }
      a.scale *= v;
      return;
    }
    Token v = expect(Tok::Ident, "a number or variable");
    if (is_reserved(v.text)) fail("reserved word used as a variable", v.span);
    if (!a.var.empty()) fail("products of variables are not in the language", v.span);
    a.var = std::string(v.text);
  }

  std::pair<Term, SourceSpan> term() {
    std::size_t s = cur().span.start;
    Term t;
    bool first = true;
    for (;;) {
      int sign = 1;
      if (first) {
        while (at(Tok::Plus) || at(Tok::Minus)) {
          if (advance().kind == Tok::Minus) sign = -sign;
        }
      } else if (accept(Tok::Plus)) {
        sign = 1;
      } else if (accept(Tok::Minus)) {
        sign = -1;
      } else {
        break;
      }
      std::size_t addend_start = cur().span.start;
      Addend a;
      factor(a);
      for (;;) {
        if (accept(Tok::Star)) {
          factor(a);
        } else if (cur().kind == Tok::Ident && !is_reserved(cur().text)) {
          factor(a);  // juxtaposition, e.g. "2x"
        } else {
          break;
        }
      }
      if (sign < 0) a.scale = -a.scale;
      if (a.var.empty()) {
        t += Term(a.scale);
      } else {
        if (!is_integral(a.scale))
          fail("coefficient of '" + a.var + "' must be an integer",
               SourceSpan{addend_start, prev_end()});
        t += Term::variable(a.var, num(a.scale));
      }
      first = false;
    }
    return {std::move(t), SourceSpan{s, prev_end()}};
  }

  std::size_t prev_end() const { return pos_ == 0 ? 0 : toks_[pos_ - 1].span.end; }

  void check_atom_term(const Term& t, SourceSpan sp) const {
    if (theory_ == Theory::Z1 && !is_integral(t.constant))
      fail("constants must be integers under theory z1", sp);
  }
};

}  // namespace detail

/**
 * Parses the textual formula language.  Grammar, loosely:
 *
 *   formula := "exists" var "." disj | disj
 *   disj    := conj ("|" conj)*
 *   conj    := lit ("&" lit)*
 *   lit     := "!" lit | "(" disj ")" | atom
 *   atom    := term ("in" ("U[" p "," l "]" | "P[" m "]") | "=" term
 *              | "!=" term | "<" term) | "sqf(" term ")"
 *   term    := signed sum of addends; an addend multiplies integer or
 *              rational literals ("3/4") with at most one variable
 *
 * "sqf(t)" abbreviates "t in P[1]"; "a != b" abbreviates "!(a - b = 0)";
 * comparisons are normalized against zero, so "a < b" yields a - b < 0.
 * Order atoms require q2, and constants must be integers under z1.
 */
inline Formula parse_formula(std::string_view text, Theory theory) {
  detail::FormulaParser p(text, theory);
  Formula f = p.parse();
  validate(f, theory);
  return f;
}

/** Prints a term with variables in lexicographic order, e.g. "2*x - y + 3/4". */
inline std::string print_term(const Term& t) {
  std::string out;
  bool first = true;
  auto add = [&](bool negative, const std::string& body) {
    if (first) {
      if (negative) out += "-";
      first = false;
    } else {
      out += negative ? " - " : " + ";
    }
    out += body;
  };
  for (const auto& [v, k] : t.coeffs) {
    if (k == 0) continue;
    Int a = abs_int(k);
    add(k < 0, a == 1 ? v : a.get_str() + "*" + v);
  }
  if (t.constant != 0 || first) {
    Rat a = abs(t.constant);
    add(t.constant < 0, a.get_str());
  }
  return out;
}

/**
 * Prints a formula in the concrete syntax; parsing the result reproduces the
 * formula structurally.  Nested junctions are parenthesized and negations
 * always parenthesize their operand, so the output is unambiguous.
 */
inline std::string print_formula(const Formula& f) {
  auto junction = [](const std::vector<Formula>& kids, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < kids.size(); ++i) {
      if (i) out += sep;
      bool parens =
          kids[i].kind == Formula::Kind::And || kids[i].kind == Formula::Kind::Or;
      if (parens) out += "(";
      out += print_formula(kids[i]);
      if (parens) out += ")";
    }
    return out;
  };
  switch (f.kind) {
    case Formula::Kind::Atom: {
      const Atom& a = *f.atom;
      std::string t = print_term(a.term);
      switch (a.kind) {
        case AtomKind::InU:
          return t + " in U[" + a.p.get_str() + "," + std::to_string(a.l) + "]";
        case AtomKind::InP:
          return t + " in P[" + a.m.get_str() + "]";
        case AtomKind::EqZero:
          return t + " = 0";
        case AtomKind::LtZero:
          return t + " < 0";
      }
      return t;
    }
    case Formula::Kind::Not:
      return "!(" + print_formula(f.children[0]) + ")";
    case Formula::Kind::And:
      if (f.children.empty()) return "0 = 0";
      return junction(f.children, " & ");
    case Formula::Kind::Or:
      if (f.children.empty()) return "!(0 = 0)";
      return junction(f.children, " | ");
    case Formula::Kind::Exists:
      return "exists " + f.var + ". " + print_formula(f.children[0]);
  }
  return {};
}

}  // namespace sqf
