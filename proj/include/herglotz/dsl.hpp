#pragma once

// Problem-file reader: line-oriented "key: value" headers, an optional
// indented `solver:` block and an optional indented `section:` block, '#'
// comments. Expressions use infix + - * / ^ with numeric-only divisors,
// jet variables u, u_t, u_tx and action densities z^t, z^x.

#include "herglotz/expr.hpp"
#include "herglotz/jet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace herglotz {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, std::string message, std::string token)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message +
                           (token.empty() ? std::string() : " (at '" + token + "')")),
        line_(line),
        column_(column),
        message_(std::move(message)),
        token_(std::move(token)) {}

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }
  const std::string& token() const { return token_; }

 private:
  int line_;
  int column_;
  std::string message_;
  std::string token_;
};

// Text assembled from one or more source lines, remembering where each piece came from.
class SourceText {
 public:
  SourceText() = default;
  SourceText(std::string_view text, int line, int column) { append(text, line, column); }

  void append(std::string_view text, int line, int column) {
    if (!text_.empty()) text_ += ' ';
    segments_.push_back({text_.size(), line, column});
    text_.append(text);
  }

  const std::string& text() const { return text_; }

  std::pair<int, int> position(size_t offset) const {
    const Segment* seg = &segments_.front();
    for (const auto& s : segments_) {
      if (s.offset <= offset) seg = &s;
    }
    return {seg->line, seg->column + static_cast<int>(offset - seg->offset)};
  }

  [[noreturn]] void fail(size_t offset, const std::string& message, const std::string& token) const {
    auto [line, column] = segments_.empty() ? std::pair{1, 1} : position(offset);
    throw ParseError(line, column, message, token);
  }

 private:
  struct Segment {
    size_t offset;
    int line;
    int column;
  };
  std::string text_;
  std::vector<Segment> segments_;
};

// Names an expression may refer to.
struct NameContext {
  std::vector<std::string> coords;
  std::vector<std::string> fields;
  std::vector<std::string> constants;
  bool allow_jets = true;
  bool allow_action_derivatives = false;
  // Highest field-jet order accepted; negative disables the check.
  int max_field_order = -1;

  bool is_constant(const std::string& n) const {
    return n == "pi" || std::find(constants.begin(), constants.end(), n) != constants.end();
  }
  bool is_coord(const std::string& n) const {
    return std::find(coords.begin(), coords.end(), n) != coords.end();
  }
  bool is_field(const std::string& n) const {
    return std::find(fields.begin(), fields.end(), n) != fields.end();
  }
};

namespace detail {

enum class Tok { Ident, Number, Action, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, Equals, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  size_t offset = 0;
};

class Lexer {
 public:
  explicit Lexer(const SourceText& src) : src_(src), s_(src.text()) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    size_t i = 0;
    while (true) {
      while (i < s_.size() && std::isspace(static_cast<unsigned char>(s_[i]))) ++i;
      if (i >= s_.size()) {
        out.push_back({Tok::End, "", s_.size()});
        return out;
      }
      size_t start = i;
      char c = s_[i];
      if (std::isalpha(static_cast<unsigned char>(c))) {
        while (i < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i])) || s_[i] == '_')) ++i;
        std::string word(s_.substr(start, i - start));
        if (word == "z" && i + 1 < s_.size() && s_[i] == '^' &&
            std::isalpha(static_cast<unsigned char>(s_[i + 1]))) {
          i += 2;
          if (i + 1 < s_.size() && s_[i] == '_' && std::isalpha(static_cast<unsigned char>(s_[i + 1]))) {
            ++i;
            while (i < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i]))) ++i;
          }
          out.push_back({Tok::Action, std::string(s_.substr(start, i - start)), start});
        } else {
          out.push_back({Tok::Ident, std::move(word), start});
        }
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < s_.size() &&
                                                          std::isdigit(static_cast<unsigned char>(s_[i + 1])))) {
        while (i < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i]))) ++i;
        if (i < s_.size() && s_[i] == '.') {
          ++i;
          while (i < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i]))) ++i;
        }
        if (i < s_.size() && (s_[i] == 'e' || s_[i] == 'E')) {
          size_t j = i + 1;
          if (j < s_.size() && (s_[j] == '+' || s_[j] == '-')) ++j;
          if (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) {
            i = j;
            while (i < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i]))) ++i;
          }
        }
        out.push_back({Tok::Number, std::string(s_.substr(start, i - start)), start});
        continue;
      }
      Tok k;
      switch (c) {
        case '+': k = Tok::Plus; break;
        case '-': k = Tok::Minus; break;
        case '*': k = Tok::Star; break;
        case '/': k = Tok::Slash; break;
        case '^': k = Tok::Caret; break;
        case '(': k = Tok::LParen; break;
        case ')': k = Tok::RParen; break;
        case ',': k = Tok::Comma; break;
        case '=': k = Tok::Equals; break;
        default:
          src_.fail(start, "unexpected character", std::string(1, c));
      }
      out.push_back({k, std::string(1, c), start});
      ++i;
    }
  }

 private:
  const SourceText& src_;
  std::string_view s_;
};

inline std::optional<Func> func_from_name(const std::string& n) {
  if (n == "sin") return Func::Sin;
  if (n == "cos") return Func::Cos;
  if (n == "exp") return Func::Exp;
  if (n == "log") return Func::Log;
  if (n == "inv") return Func::Inv;
  return std::nullopt;
}

// Pratt parser over a token vector.
class ExprParser {
 public:
  ExprParser(const SourceText& src, std::vector<Token> tokens, const NameContext& ctx)
      : src_(src), toks_(std::move(tokens)), ctx_(ctx) {}

  Expr parse(int min_bp = 0) {
    Expr lhs = prefix();
    while (true) {
      const Token& op = peek();
      int lbp = 0, rbp = 0;
      switch (op.kind) {
        case Tok::Plus:
        case Tok::Minus: lbp = 10; rbp = 11; break;
        case Tok::Star:
        case Tok::Slash: lbp = 20; rbp = 21; break;
        case Tok::Caret: lbp = 40; rbp = 39; break;
        case Tok::Ident:
        case Tok::Number:
        case Tok::Action:
        case Tok::LParen:
          fail(op, "expected an operator");
        default:
          return lhs;
      }
      if (lbp < min_bp) return lhs;
      Token tok = next();
      switch (tok.kind) {
        case Tok::Plus: lhs = lhs + parse(rbp); break;
        case Tok::Minus: lhs = lhs - parse(rbp); break;
        case Tok::Star: lhs = lhs * parse(rbp); break;
        case Tok::Slash: {
          const Token& first = peek();
          Expr divisor = parse(rbp);
          Poly d = to_poly(divisor);
          if (!d.is_constant()) fail(first, "division is only allowed by numeric constants");
          if (d.constant_value().is_zero()) fail(first, "division by zero");
          lhs = lhs * Expr(Number(1) / d.constant_value());
          break;
        }
        case Tok::Caret: {
          Token e = next();
          long n = 0;
          auto res = std::from_chars(e.text.data(), e.text.data() + e.text.size(), n);
          if (e.kind != Tok::Number || res.ec != std::errc() || res.ptr != e.text.data() + e.text.size()) {
            fail(e, "exponent must be a non-negative integer literal");
          }
          lhs = pow(lhs, n);
          break;
        }
        default:
          break;
      }
    }
  }

  const Token& peek() const { return toks_[pos_]; }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    src_.fail(t.offset, msg, t.kind == Tok::End ? std::string() : t.text);
  }
  void expect(Tok k, const std::string& what) {
    if (peek().kind != k) fail(peek(), "expected " + what);
    next();
  }

 private:
  Expr prefix() {
    Token t = next();
    switch (t.kind) {
      case Tok::Number: return number(t);
      case Tok::Action: return action(t);
      case Tok::Ident: {
        if (auto f = func_from_name(t.text); f && peek().kind == Tok::LParen) {
          next();
          Expr arg = parse(0);
          expect(Tok::RParen, "')'");
          return Expr::call(*f, std::move(arg));
        }
        return identifier(t);
      }
      case Tok::LParen: {
        Expr e = parse(0);
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::Minus: return -parse(30);
      case Tok::Plus: return parse(30);
      case Tok::End: fail(t, "unexpected end of expression");
      default: fail(t, "unexpected token");
    }
  }

  Expr number(const Token& t) {
    if (t.text.find_first_of(".eE") == std::string::npos) {
      mpz_class z;
      z.set_str(t.text, 10);
      return Expr(Number(Rational(z)));
    }
    double v = 0;
    auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size()) fail(t, "malformed number");
    return Expr(Number(v));
  }

  void check_suffix(const Token& t, const std::string& suffix, size_t suffix_offset) const {
    if (suffix.empty()) fail(t, "empty derivative suffix");
    for (size_t k = 0; k < suffix.size(); ++k) {
      if (!ctx_.is_coord(std::string(1, suffix[k]))) {
        src_.fail(t.offset, "'" + std::string(1, suffix[k]) + "' in derivative suffix is not a coordinate",
                  t.text);
      }
    }
    (void)suffix_offset;
  }

  // Sorts derivative letters into coordinate declaration order.
  std::string sorted_suffix(const std::string& suffix) const {
    std::string out;
    for (const auto& c : ctx_.coords) out.append(static_cast<size_t>(std::count(suffix.begin(), suffix.end(), c[0])), c[0]);
    return out;
  }

  Expr action(const Token& t) {
    if (!ctx_.allow_jets) fail(t, "action densities are not allowed here");
    std::string comp = t.text.substr(2, 1);
    if (!ctx_.is_coord(comp)) fail(t, "action component '" + comp + "' is not a coordinate");
    std::string suffix;
    if (t.text.size() > 3) {
      suffix = t.text.substr(4);
      check_suffix(t, suffix, t.offset + 4);
      if (!ctx_.allow_action_derivatives) fail(t, "action densities may not be differentiated in the Lagrangian");
      suffix = sorted_suffix(suffix);
    }
    return Expr(Symbol::action(comp, suffix));
  }

  Expr identifier(const Token& t) {
    const std::string& w = t.text;
    if (func_from_name(w)) fail(t, "function '" + w + "' requires an argument list");
    if (ctx_.is_constant(w)) return Expr(Symbol::constant(w));
    if (ctx_.is_coord(w)) return Expr(Symbol::coordinate(w));
    if (ctx_.is_field(w)) {
      if (!ctx_.allow_jets) fail(t, "field values are not allowed here");
      return Expr(Symbol::field(w));
    }
    if (w == "z" && ctx_.coords.size() == 1) {
      if (!ctx_.allow_jets) fail(t, "action variable is not allowed here");
      return Expr(Symbol::action(ctx_.coords[0]));
    }
    size_t us = w.find('_');
    if (us != std::string::npos) {
      std::string base = w.substr(0, us);
      std::string suffix = w.substr(us + 1);
      if (ctx_.is_field(base)) {
        if (!ctx_.allow_jets) fail(t, "field derivatives are not allowed here");
        check_suffix(t, suffix, t.offset + us + 1);
        if (ctx_.max_field_order >= 0 && static_cast<int>(suffix.size()) > ctx_.max_field_order) {
          fail(t, "derivative of order " + std::to_string(suffix.size()) + " exceeds declared order " +
                      std::to_string(ctx_.max_field_order));
        }
        return Expr(Symbol::field(base, sorted_suffix(suffix)));
      }
      if (base == "z" && ctx_.coords.size() == 1) {
        if (!ctx_.allow_jets) fail(t, "action variable is not allowed here");
        check_suffix(t, suffix, t.offset + us + 1);
        if (!ctx_.allow_action_derivatives) fail(t, "action densities may not be differentiated in the Lagrangian");
        return Expr(Symbol::action(ctx_.coords[0], sorted_suffix(suffix)));
      }
      if (ctx_.is_constant(base)) fail(t, "derivative of constant '" + base + "'");
      if (ctx_.is_coord(base)) fail(t, "derivative of coordinate '" + base + "'");
    }
    fail(t, "unknown identifier '" + w + "'");
  }

  const SourceText& src_;
  std::vector<Token> toks_;
  const NameContext& ctx_;
  size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expression(const SourceText& src, const NameContext& ctx) {
  detail::ExprParser p(src, detail::Lexer(src).run(), ctx);
  Expr e = p.parse(0);
  if (p.peek().kind != detail::Tok::End) p.fail(p.peek(), "unexpected token");
  return e;
}

inline Expr parse_expression(std::string_view text, const NameContext& ctx) {
  return parse_expression(SourceText(text, 1, 1), ctx);
}

// A raw `key: value` entry with its source position.
struct Entry {
  std::string key;
  SourceText value;
  int line = 0;
  int column = 0;
};

struct ProblemFile {
  LagrangianSpec spec;
  std::map<std::string, Entry> header;
  std::map<std::string, Entry> solver;
  std::map<std::string, Entry> section;
  bool has_solver = false;
  bool has_section = false;

  NameContext expression_context() const {
    NameContext ctx;
    ctx.coords = spec.coords;
    ctx.fields = spec.fields;
    for (const auto& c : spec.constants) ctx.constants.push_back(c.name);
    return ctx;
  }

  // Context for expressions over coordinates and constants only (initial data, sections).
  NameContext coordinate_context() const {
    NameContext ctx = expression_context();
    ctx.fields.clear();
    ctx.allow_jets = false;
    return ctx;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// Splits "key: value" when the line starts with a key. Returns the key length.
inline size_t key_length(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return 0;
  size_t i = 0;
  while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '^')) ++i;
  size_t j = i;
  while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
  return j < s.size() && s[j] == ':' ? i : 0;
}

struct NameToken {
  std::string name;
  size_t offset;
};

// Comma-separated identifiers.
inline std::vector<NameToken> name_list(const SourceText& src) {
  auto toks = Lexer(src).run();
  std::vector<NameToken> out;
  size_t i = 0;
  while (true) {
    if (toks[i].kind != Tok::Ident) src.fail(toks[i].offset, "expected a name", toks[i].text);
    out.push_back({toks[i].text, toks[i].offset});
    ++i;
    if (toks[i].kind == Tok::End) return out;
    if (toks[i].kind != Tok::Comma) src.fail(toks[i].offset, "expected ','", toks[i].text);
    ++i;
  }
}

inline bool is_reserved(const std::string& n) { return n == "z" || n == "pi" || func_from_name(n).has_value(); }

inline double numeric_value(const SourceText& src, size_t offset, const Expr& e, const Binding& constants) {
  try {
    Binding b = constants;
    b[Symbol::constant("pi")] = std::numbers::pi;
    return eval_numeric(e, b);
  } catch (const UnboundSymbolError& err) {
    src.fail(offset, "'" + err.symbol().to_string() + "' has no numeric value", "");
  } catch (const std::domain_error& err) {
    src.fail(offset, err.what(), "");
  }
}

}  // namespace detail

inline ProblemFile parse_problem(std::string_view text) {
  ProblemFile pf;
  std::map<std::string, Entry>* block = nullptr;
  Entry* last = nullptr;
  int lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view raw = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    size_t indent = 0;
    while (indent < raw.size() && (raw[indent] == ' ' || raw[indent] == '\t')) ++indent;
    if (indent == raw.size()) continue;
    std::string_view content = raw.substr(indent);
    size_t klen = detail::key_length(content);
    if (klen == 0) {
      if (last == nullptr || indent == 0) {
        throw ParseError(lineno, static_cast<int>(indent) + 1, "expected 'key: value'",
                         detail::trim(content));
      }
      last->value.append(content, lineno, static_cast<int>(indent) + 1);
      continue;
    }
    std::string key(content.substr(0, klen));
    size_t colon = content.find(':');
    size_t vstart = colon + 1;
    while (vstart < content.size() && (content[vstart] == ' ' || content[vstart] == '\t')) ++vstart;
    std::string_view value = content.substr(vstart);
    while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back()))) value.remove_suffix(1);
    int vcol = static_cast<int>(indent + vstart) + 1;

    std::map<std::string, Entry>* target = nullptr;
    if (indent == 0) {
      if ((key == "solver" || key == "section") && value.empty()) {
        block = key == "solver" ? &pf.solver : &pf.section;
        (key == "solver" ? pf.has_solver : pf.has_section) = true;
        last = nullptr;
        continue;
      }
      block = nullptr;
      target = &pf.header;
    } else {
      if (block == nullptr) {
        throw ParseError(lineno, static_cast<int>(indent) + 1, "indented entry outside a block", key);
      }
      target = block;
    }
    if (target->count(key) != 0) {
      throw ParseError(lineno, static_cast<int>(indent) + 1, "duplicate key '" + key + "'", key);
    }
    Entry entry{key, {}, lineno, static_cast<int>(indent) + 1};
    if (!value.empty()) entry.value.append(value, lineno, vcol);
    last = &(*target)[key];
    *last = std::move(entry);
  }

  static const std::vector<std::string> known = {"coords", "fields", "order", "constants", "lagrangian",
                                                 "max_order"};
  for (const auto& [key, e] : pf.header) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParseError(e.line, e.column, "unknown header key '" + key + "'", key);
    }
  }
  auto require = [&](const std::string& key) -> const Entry& {
    auto it = pf.header.find(key);
    if (it == pf.header.end() || it->second.value.text().empty()) {
      throw ParseError(lineno, 1, "missing required header '" + key + "'", "");
    }
    return it->second;
  };

  LagrangianSpec& spec = pf.spec;
  std::vector<std::string> declared;
  auto declare = [&](const detail::NameToken& n, const SourceText& src) {
    if (detail::is_reserved(n.name)) src.fail(n.offset, "'" + n.name + "' is a reserved name", n.name);
    if (std::find(declared.begin(), declared.end(), n.name) != declared.end()) {
      src.fail(n.offset, "duplicate declaration of '" + n.name + "'", n.name);
    }
    declared.push_back(n.name);
  };

  const Entry& coords = require("coords");
  for (const auto& n : detail::name_list(coords.value)) {
    if (n.name.size() != 1) coords.value.fail(n.offset, "coordinate names must be single letters", n.name);
    declare(n, coords.value);
    spec.coords.push_back(n.name);
  }
  const Entry& fields = require("fields");
  for (const auto& n : detail::name_list(fields.value)) {
    if (n.name.find('_') != std::string::npos) {
      fields.value.fail(n.offset, "field names may not contain '_'", n.name);
    }
    declare(n, fields.value);
    spec.fields.push_back(n.name);
  }
  if (auto it = pf.header.find("order"); it != pf.header.end()) {
    const std::string& s = it->second.value.text();
    int r = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), r);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || r < 1) {
      it->second.value.fail(0, "order must be a positive integer", s);
    }
    spec.order = r;
  }
  if (auto it = pf.header.find("max_order"); it != pf.header.end()) {
    const std::string& s = it->second.value.text();
    int r = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), r);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || r < 1) {
      it->second.value.fail(0, "max_order must be a positive integer", s);
    }
    spec.max_jet_order = r;
  }
  if (auto it = pf.header.find("constants"); it != pf.header.end() && !it->second.value.text().empty()) {
    const SourceText& src = it->second.value;
    auto toks = detail::Lexer(src).run();
    NameContext numeric_ctx;
    numeric_ctx.allow_jets = false;
    Binding known_values;
    detail::ExprParser p(src, toks, numeric_ctx);
    while (true) {
      detail::Token name = p.next();
      if (name.kind != detail::Tok::Ident) p.fail(name, "expected a constant name");
      declare({name.text, name.offset}, src);
      size_t us = name.text.find('_');
      if (us != std::string::npos) {
        std::string base = name.text.substr(0, us);
        if (std::find(spec.fields.begin(), spec.fields.end(), base) != spec.fields.end()) {
          p.fail(name, "constant name collides with a jet of field '" + base + "'");
        }
      }
      ConstantDecl decl{name.text, std::nullopt};
      if (p.peek().kind == detail::Tok::Equals) {
        p.next();
        size_t at = p.peek().offset;
        Expr v = p.parse(0);
        decl.value = detail::numeric_value(src, at, v, known_values);
        known_values[Symbol::constant(decl.name)] = *decl.value;
      }
      numeric_ctx.constants.push_back(decl.name);
      spec.constants.push_back(std::move(decl));
      if (p.peek().kind == detail::Tok::End) break;
      if (p.peek().kind != detail::Tok::Comma) p.fail(p.peek(), "expected ','");
      p.next();
    }
  }

  const Entry& lag = require("lagrangian");
  NameContext ctx = pf.expression_context();
  ctx.max_field_order = spec.order;
  spec.lagrangian = parse_expression(lag.value, ctx);
  return pf;
}

// Numeric value of a solver/section entry; may reference constants with values and pi.
inline double entry_number(const ProblemFile& pf, const Entry& e) {
  NameContext ctx = pf.coordinate_context();
  ctx.coords.clear();
  Expr v = parse_expression(e.value, ctx);
  return detail::numeric_value(e.value, 0, v, pf.spec.constant_binding());
}

inline std::vector<double> entry_numbers(const ProblemFile& pf, const Entry& e) {
  NameContext ctx = pf.coordinate_context();
  ctx.coords.clear();
  auto toks = detail::Lexer(e.value).run();
  detail::ExprParser p(e.value, toks, ctx);
  std::vector<double> out;
  while (true) {
    size_t at = p.peek().offset;
    out.push_back(detail::numeric_value(e.value, at, p.parse(0), pf.spec.constant_binding()));
    if (p.peek().kind == detail::Tok::End) return out;
    if (p.peek().kind != detail::Tok::Comma) p.fail(p.peek(), "expected ','");
    p.next();
  }
}

inline Expr entry_expression(const ProblemFile& pf, const Entry& e) {
  return parse_expression(e.value, pf.coordinate_context());
}

}  // namespace herglotz
