#pragma once

// Textual program format. See docs/grammar.md for the normative EBNF.
//
//   # kernel: twostage
//   # dims: N=8
//   N
//   | t[{0}]=x[{0}]*2
//   N
//   | y[{0}]=t[{0}]+1
//
//   x f32 [N] heap
//   t f32 [N] heap
//   y f32 [N] heap
//
// A line holds a chain of nodes, each one the child of the token before it.
// Leading `|` columns attach the first token of the line below the node that
// occupied the previous column on the most recent line defining it.

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "perfdojo/ir.hpp"

namespace perfdojo {

namespace text_detail {

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Cursor {
 public:
  Cursor(std::string_view s, int line) : s_(s), line_(line) {}

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }
  void advance(std::size_t n = 1) { pos_ = std::min(s_.size(), pos_ + n); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  std::string_view rest() const { return s_.substr(pos_); }
  int line() const { return line_; }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }
  bool accept(char c) {
    skip_ws();
    if (peek() != c) return false;
    advance();
    return true;
  }
  void expect(char c, const char* what) {
    if (!accept(c)) fail(ErrorCode::Syntax, std::string("expected ") + what);
  }

  [[noreturn]] void fail(ErrorCode code, const std::string& msg) const {
    throw Error(code, msg, line_, static_cast<int>(pos_) + 1);
  }

  std::string ident() {
    skip_ws();
    if (!is_ident_start(peek())) fail(ErrorCode::Syntax, "expected identifier");
    std::size_t start = pos_;
    while (!eof() && is_ident_char(peek())) advance();
    return std::string(s_.substr(start, pos_ - start));
  }

  std::int64_t integer() {
    skip_ws();
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc{}) fail(ErrorCode::Syntax, "expected integer");
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return v;
  }

  double number() {
    skip_ws();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc{}) fail(ErrorCode::Syntax, "expected number");
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return v;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

inline Extent parse_extent(Cursor& c) {
  c.skip_ws();
  Extent e;
  if (std::isdigit(static_cast<unsigned char>(c.peek()))) {
    e = Extent::constant(c.integer());
  } else {
    e = Extent::of(c.ident());
    if (c.peek() == '*') {
      c.advance();
      e.num = c.integer();
    }
  }
  if (c.peek() == '/') {
    c.advance();
    e.den = c.integer();
    if (e.is_constant()) c.fail(ErrorCode::Syntax, "constant extents cannot be divided");
  }
  if (e.num <= 0 || e.den <= 0) c.fail(ErrorCode::Syntax, "extent factors must be positive");
  e.normalize();
  return e;
}

inline AffineExpr parse_affine(Cursor& c) {
  AffineExpr out;
  bool first = true;
  for (;;) {
    c.skip_ws();
    std::int64_t sign = 1;
    if (c.peek() == '-') {
      sign = -1;
      c.advance();
    } else if (c.peek() == '+') {
      if (first) c.fail(ErrorCode::Syntax, "unexpected '+'");
      c.advance();
    } else if (!first) {
      break;
    }
    AffineTerm term{sign, "", -1};
    for (bool more = true; more;) {
      c.skip_ws();
      char ch = c.peek();
      if (ch == '{') {
        c.advance();
        std::int64_t d = c.integer();
        c.expect('}', "'}'");
        if (term.depth >= 0) c.fail(ErrorCode::Syntax, "index terms must be affine");
        term.depth = static_cast<int>(d);
      } else if (std::isdigit(static_cast<unsigned char>(ch))) {
        term.coeff *= c.integer();
      } else if (is_ident_start(ch)) {
        std::string name = c.ident();
        c.skip_ws();
        if (c.peek() == '[') c.fail(ErrorCode::Indirection, "array '" + name + "' used inside an index");
        if (c.peek() == '(') c.fail(ErrorCode::Indirection, "function call inside an index");
        if (!term.symbol.empty()) c.fail(ErrorCode::Syntax, "index terms may hold one symbol");
        term.symbol = std::move(name);
      } else {
        c.fail(ErrorCode::Syntax, "expected index term");
      }
      c.skip_ws();
      more = c.peek() == '*';
      if (more) c.advance();
    }
    out.terms.push_back(std::move(term));
    first = false;
    c.skip_ws();
    if (c.peek() != '+' && c.peek() != '-') break;
  }
  out.normalize();
  return out;
}

inline ArrayAccess parse_access_after_name(Cursor& c, std::string name) {
  ArrayAccess a;
  a.array = std::move(name);
  c.expect('[', "'['");
  if (!c.accept(']')) {
    do {
      a.indices.push_back(parse_affine(c));
    } while (c.accept(','));
    c.expect(']', "']'");
  }
  return a;
}

inline Expr parse_expr(Cursor& c);

inline Expr parse_primary(Cursor& c) {
  c.skip_ws();
  char ch = c.peek();
  if (ch == '(') {
    c.advance();
    Expr e = parse_expr(c);
    c.expect(')', "')'");
    return e;
  }
  if (ch == '{') {
    c.advance();
    std::int64_t d = c.integer();
    c.expect('}', "'}'");
    return Expr::index(static_cast<int>(d));
  }
  if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') return Expr::constant(c.number());
  if (is_ident_start(ch)) {
    std::string name = c.ident();
    c.skip_ws();
    if (c.peek() == '[') return Expr::load(parse_access_after_name(c, std::move(name)));
    if (c.peek() == '(') {
      int arity = builtin_arity(name);
      if (arity < 0) c.fail(ErrorCode::Syntax, "unknown builtin '" + name + "'");
      c.advance();
      std::vector<Expr> args;
      if (!c.accept(')')) {
        do {
          args.push_back(parse_expr(c));
        } while (c.accept(','));
        c.expect(')', "')'");
      }
      if (static_cast<int>(args.size()) != arity)
        c.fail(ErrorCode::Syntax, "builtin '" + name + "' takes " + std::to_string(arity) + " arguments");
      return Expr::call(std::move(name), std::move(args));
    }
    return Expr::symbol(std::move(name));
  }
  c.fail(ErrorCode::Syntax, "expected value");
}

inline Expr parse_unary(Cursor& c) {
  c.skip_ws();
  if (c.peek() == '-') {
    c.advance();
    char next = c.peek();
    if (std::isdigit(static_cast<unsigned char>(next)) || next == '.') return Expr::constant(-c.number());
    return Expr::unary(Expr::Kind::Neg, parse_unary(c));
  }
  return parse_primary(c);
}

inline Expr parse_term(Cursor& c) {
  Expr lhs = parse_unary(c);
  for (;;) {
    c.skip_ws();
    char ch = c.peek();
    if (ch != '*' && ch != '/') return lhs;
    c.advance();
    Expr rhs = parse_unary(c);
    lhs = Expr::binary(ch == '*' ? Expr::Kind::Mul : Expr::Kind::Div, std::move(lhs), std::move(rhs));
  }
}

inline Expr parse_expr(Cursor& c) {
  Expr lhs = parse_term(c);
  for (;;) {
    c.skip_ws();
    char ch = c.peek();
    if (ch != '+' && ch != '-') return lhs;
    c.advance();
    Expr rhs = parse_term(c);
    lhs = Expr::binary(ch == '+' ? Expr::Kind::Add : Expr::Kind::Sub, std::move(lhs), std::move(rhs));
  }
}

/// Classifies the token at the cursor: true when it starts `name[...] =`.
inline bool at_operation(Cursor& c) {
  std::size_t save = c.pos();
  bool result = false;
  if (is_ident_start(c.peek())) {
    while (is_ident_char(c.peek())) c.advance();
    c.skip_ws();
    if (c.peek() == '[') {
      int depth = 0;
      do {
        if (c.peek() == '[') ++depth;
        if (c.peek() == ']') --depth;
        c.advance();
      } while (!c.eof() && depth > 0);
      c.skip_ws();
      result = c.peek() == '=' || (c.peek() == '+' && c.peek(1) == '=');
    }
  }
  c.seek(save);
  return result;
}

inline Operation parse_operation(Cursor& c) {
  Operation op;
  std::string name = c.ident();
  op.output = parse_access_after_name(c, std::move(name));
  c.skip_ws();
  if (c.peek() == '+') {
    c.advance();
    op.kind = OpKind::Accumulate;
  }
  c.expect('=', "'='");
  op.value = parse_expr(c);
  c.skip_ws();
  if (!c.eof()) c.fail(ErrorCode::Syntax, "trailing characters after operation");
  return op;
}

inline bool is_control_keyword(std::string_view w) {
  return w == "while" || w == "if" || w == "for" || w == "else" || w == "goto";
}

inline Node parse_scope_token(Cursor& c) {
  std::size_t start = c.pos();
  if (is_ident_start(c.peek())) {
    std::size_t p = start;
    std::string_view rest = c.rest();
    std::size_t n = 0;
    while (n < rest.size() && is_ident_char(rest[n])) ++n;
    std::string_view word = rest.substr(0, n);
    if (is_control_keyword(word)) c.fail(ErrorCode::GeneralControlFlow, "control flow construct '" + std::string(word) + "'");
    std::size_t q = n;
    while (q < rest.size() && rest[q] == ' ') ++q;
    if (q < rest.size() && rest[q] == '[')
      c.fail(ErrorCode::DataDependentRange, "scope '" + std::string(word) + "' has a data-dependent range");
    (void)p;
  }
  Extent e = parse_extent(c);
  Suffix s = Suffix::None;
  if (c.peek() == ':') {
    c.advance();
    auto parsed = suffix_from_char(c.peek());
    if (!parsed) c.fail(ErrorCode::Syntax, "unknown scope suffix");
    s = *parsed;
    c.advance();
  }
  if (!c.eof() && c.peek() != ' ' && c.peek() != '\t')
    c.fail(ErrorCode::Syntax, "unexpected character after scope");
  return Node::scope(std::move(e), {}, s);
}

inline BufferDim parse_buffer_dim(Cursor& c) {
  BufferDim d;
  d.extent = parse_extent(c);
  while (c.peek() == ':') {
    c.advance();
    if (c.peek() == 'N') {
      c.advance();
      d.materialized = false;
    } else if (c.peek() == 'P') {
      c.advance();
      d.pad = c.integer();
      if (d.pad < 2) c.fail(ErrorCode::Syntax, "padding must be at least 2");
    } else {
      c.fail(ErrorCode::Syntax, "unknown dimension suffix");
    }
  }
  return d;
}

inline BufferDecl parse_buffer(Cursor& c) {
  BufferDecl b;
  b.name = c.ident();
  std::string dt = c.ident();
  auto dtype = dtype_from_string(dt);
  if (!dtype) c.fail(ErrorCode::Syntax, "unknown data type '" + dt + "'");
  b.dtype = *dtype;
  c.expect('[', "'['");
  if (!c.accept(']')) {
    do {
      b.shape.push_back(parse_buffer_dim(c));
    } while (c.accept(','));
    c.expect(']', "']'");
  }
  std::string loc = c.ident();
  if (loc == "heap")
    b.location = Location::Heap;
  else if (loc == "stack")
    b.location = Location::Stack;
  else
    c.fail(ErrorCode::Syntax, "unknown location '" + loc + "'");
  c.skip_ws();
  if (c.peek() == '-' && c.peek(1) == '>') {
    c.advance(2);
    do {
      b.arrays.push_back(c.ident());
    } while (c.accept(','));
  } else {
    b.arrays.push_back(b.name);
  }
  c.skip_ws();
  if (!c.eof()) c.fail(ErrorCode::Syntax, "trailing characters after buffer declaration");
  return b;
}

inline bool is_buffer_line(std::string_view line) {
  Cursor c(line, 0);
  c.skip_ws();
  if (!is_ident_start(c.peek())) return false;
  while (is_ident_char(c.peek())) c.advance();
  c.skip_ws();
  std::size_t s = c.pos();
  while (is_ident_char(c.peek())) c.advance();
  return dtype_from_string(line.substr(s, c.pos() - s)).has_value();
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

/// Post-parse resolution checks that the grammar alone cannot express.
inline void check_references(const Program& p) {
  auto symbol_known = [&](const std::string& s) { return p.dims.contains(s) || p.consts.contains(s); };
  auto check_affine = [&](const AffineExpr& e, std::size_t depth) {
    for (const auto& t : e.terms) {
      if (!t.symbol.empty() && !p.dims.contains(t.symbol))
        throw Error(ErrorCode::UnresolvedSymbol, "index symbol '" + t.symbol + "' is not a bound dimension");
      if (t.depth >= 0 && static_cast<std::size_t>(t.depth) >= depth)
        throw Error(ErrorCode::IndexOutOfRange, "index {" + std::to_string(t.depth) + "} used under " +
                                                     std::to_string(depth) + " scopes");
    }
  };
  auto check_access = [&](const ArrayAccess& a, std::size_t depth) {
    if (!p.buffer_of(a.array)) throw Error(ErrorCode::UnresolvedArray, "array '" + a.array + "' has no buffer");
    for (const auto& idx : a.indices) check_affine(idx, depth);
  };
  std::function<void(const Expr&, std::size_t)> check_value = [&](const Expr& e, std::size_t depth) {
    if (e.kind == Expr::Kind::Symbol && !symbol_known(e.name))
      throw Error(ErrorCode::UnresolvedSymbol, "symbol '" + e.name + "' is not bound");
    if (e.kind == Expr::Kind::IndexRef && (e.depth < 0 || static_cast<std::size_t>(e.depth) >= depth))
      throw Error(ErrorCode::IndexOutOfRange, "index value {" + std::to_string(e.depth) + "} used under " +
                                                   std::to_string(depth) + " scopes");
    if (e.kind == Expr::Kind::Access) check_access(e.access, depth);
    for (const auto& a : e.args) check_value(a, depth);
  };
  for (const auto& b : p.buffers)
    for (const auto& d : b.shape)
      if (!d.extent.symbol.empty() && !p.dims.contains(d.extent.symbol))
        throw Error(ErrorCode::UnresolvedSymbol, "buffer '" + b.name + "' uses unbound dimension '" + d.extent.symbol + "'");
  for_each_scope(p, [&](const Node& n, const NodePath&) {
    if (!n.extent.symbol.empty() && !p.dims.contains(n.extent.symbol))
      throw Error(ErrorCode::UnresolvedSymbol, "scope uses unbound dimension '" + n.extent.symbol + "'");
  });
  for (const auto& leaf : leaves(p)) {
    std::size_t depth = leaf.scopes.size();
    check_access(leaf.op->output, depth);
    check_value(leaf.op->value, depth);
    leaf.op->value.visit_accesses([&](const ArrayAccess& a) {
      if (a.array == leaf.op->output.array && a.indices != leaf.op->output.indices)
        throw Error(ErrorCode::DependentIteration,
                    "'" + a.array + "' reads its own output at a different location");
    });
  }
}

/// Arrays read before being written (inputs) and arrays written but never
/// read by another operation (outputs).
inline void infer_interface(Program& p) {
  std::vector<std::string> written, read_first, read_other;
  auto contains = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  for (const auto& leaf : leaves(p)) {
    leaf.op->value.visit_accesses([&](const ArrayAccess& a) {
      if (a.array != leaf.op->output.array) {
        if (!contains(written, a.array) && !contains(read_first, a.array)) read_first.push_back(a.array);
        if (!contains(read_other, a.array)) read_other.push_back(a.array);
      }
    });
    if (!contains(written, leaf.op->output.array)) written.push_back(leaf.op->output.array);
  }
  auto in_decl_order = [&](auto pred) {
    std::vector<std::string> out;
    for (const auto& b : p.buffers)
      for (const auto& a : b.arrays)
        if (pred(a)) out.push_back(a);
    return out;
  };
  if (p.inputs.empty())
    p.inputs = in_decl_order([&](const std::string& a) { return contains(read_first, a) && !contains(written, a); });
  if (p.outputs.empty())
    p.outputs = in_decl_order([&](const std::string& a) { return contains(written, a) && !contains(read_other, a); });
}

}  // namespace text_detail

/// Parses a textual program. Throws `Error` with the line/column of the
/// first problem; excluded language features carry their own error codes.
inline Program parse_program(std::string_view text) {
  using namespace text_detail;
  Program p;
  std::vector<NodePath> columns;  // node occupying each column on the latest line
  bool explicit_inputs = false, explicit_outputs = false;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      std::string_view body = std::string_view(t).substr(1);
      auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      std::string key = trim(body.substr(0, colon));
      std::string value = trim(body.substr(colon + 1));
      if (key == "kernel") {
        p.name = value;
      } else if (key == "dims" || key == "consts") {
        for (const auto& w : split_words(value)) {
          auto eq = w.find('=');
          if (eq == std::string::npos || eq == 0)
            throw Error(ErrorCode::Syntax, "binding '" + w + "' must look like NAME=VALUE", line_no, 1);
          std::string name = w.substr(0, eq);
          std::string v = w.substr(eq + 1);
          if (key == "dims") {
            std::int64_t iv = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), iv);
            if (ec != std::errc{} || ptr != v.data() + v.size() || iv <= 0)
              throw Error(ErrorCode::Syntax, "dimension '" + name + "' needs a positive integer", line_no, 1);
            p.dims.set(name, iv);
          } else {
            double dv = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), dv);
            if (ec != std::errc{} || ptr != v.data() + v.size())
              throw Error(ErrorCode::Syntax, "constant '" + name + "' needs a number", line_no, 1);
            p.consts.set(name, dv);
          }
        }
      } else if (key == "inputs") {
        p.inputs = split_words(value);
        explicit_inputs = true;
      } else if (key == "outputs") {
        p.outputs = split_words(value);
        explicit_outputs = true;
      }
      continue;
    }
    if (is_buffer_line(line)) {
      Cursor c(line, line_no);
      BufferDecl b = parse_buffer(c);
      for (const auto& other : p.buffers) {
        if (other.name == b.name) throw Error(ErrorCode::Syntax, "duplicate buffer '" + b.name + "'", line_no, 1);
        for (const auto& a : b.arrays)
          if (other.holds(a)) throw Error(ErrorCode::Syntax, "array '" + a + "' declared twice", line_no, 1);
      }
      p.buffers.push_back(std::move(b));
      continue;
    }

    Cursor c(line, line_no);
    std::size_t column = 0;
    c.skip_ws();
    while (c.peek() == '|') {
      c.advance();
      ++column;
      c.skip_ws();
    }
    if (column > columns.size()) c.fail(ErrorCode::Syntax, "'|' column has no parent on a preceding line");
    if (column > 0 && node_at(p.root, columns[column - 1]).is_leaf())
      c.fail(ErrorCode::Syntax, "operations cannot have children");
    columns.resize(column);
    bool saw_leaf = false;
    for (c.skip_ws(); !c.eof(); c.skip_ws()) {
      if (saw_leaf) c.fail(ErrorCode::Syntax, "operation must end its line");
      Node n;
      if (at_operation(c)) {
        n = Node::leaf(parse_operation(c));
        saw_leaf = true;
      } else {
        n = parse_scope_token(c);
      }
      std::vector<Node>& parent = columns.empty() ? p.root : node_at(p.root, columns.back()).children;
      NodePath path = columns.empty() ? NodePath{} : columns.back();
      parent.push_back(std::move(n));
      path.push_back(parent.size() - 1);
      columns.push_back(std::move(path));
    }
    if (columns.size() == column) c.fail(ErrorCode::Syntax, "line has no nodes");
  }
  check_references(p);
  if (!explicit_inputs || !explicit_outputs) {
    if (!explicit_inputs) p.inputs.clear();
    if (!explicit_outputs) p.outputs.clear();
    infer_interface(p);
  }
  return p;
}

namespace text_detail {

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error(ErrorCode::Internal, "cannot format number");
  return std::string(buf, ptr);
}

inline std::string format_affine(const AffineExpr& e) {
  if (e.terms.empty()) return "0";
  std::string out;
  bool first = true;
  for (const auto& t : e.terms) {
    std::int64_t mag = t.coeff < 0 ? -t.coeff : t.coeff;
    if (t.coeff < 0)
      out += "-";
    else if (!first)
      out += "+";
    std::string body;
    if (t.depth >= 0) body = "{" + std::to_string(t.depth) + "}";
    if (!t.symbol.empty()) body += (body.empty() ? "" : "*") + t.symbol;
    if (body.empty())
      body = std::to_string(mag);
    else if (mag != 1)
      body += "*" + std::to_string(mag);
    out += body;
    first = false;
  }
  return out;
}

inline std::string format_access(const ArrayAccess& a) {
  std::string out = a.array + "[";
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    if (i) out += ",";
    out += format_affine(a.indices[i]);
  }
  return out + "]";
}

inline int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Neg: return 3;
    case Expr::Kind::Constant: return e.value < 0 || std::signbit(e.value) ? 0 : 4;
    default: return 4;
  }
}

inline std::string format_expr(const Expr& e);

inline std::string wrap(const Expr& e, bool parens) {
  std::string s = format_expr(e);
  return parens ? "(" + s + ")" : s;
}

inline std::string format_expr(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Constant: return format_number(e.value);
    case Expr::Kind::Symbol: return e.name;
    case Expr::Kind::IndexRef: return "{" + std::to_string(e.depth) + "}";
    case Expr::Kind::Access: return format_access(e.access);
    case Expr::Kind::Neg: {
      const Expr& a = e.args[0];
      bool parens = precedence(a) < 3 || a.kind == Expr::Kind::Constant;
      return "-" + wrap(a, parens);
    }
    case Expr::Kind::Call: {
      std::string out = e.name + "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ",";
        out += format_expr(e.args[i]);
      }
      return out + ")";
    }
    default: {
      int prec = precedence(e);
      const char* op = e.kind == Expr::Kind::Add ? "+" : e.kind == Expr::Kind::Sub ? "-" : e.kind == Expr::Kind::Mul ? "*" : "/";
      return wrap(e.args[0], precedence(e.args[0]) < prec) + op + wrap(e.args[1], precedence(e.args[1]) <= prec);
    }
  }
}

inline std::string format_operation(const Operation& op) {
  return format_access(op.output) + (op.kind == OpKind::Accumulate ? "+=" : "=") + format_expr(op.value);
}

inline std::string format_scope(const Node& n) {
  std::string out = n.extent.str();
  if (n.suffix != Suffix::None) {
    out += ':';
    out += suffix_char(n.suffix);
  }
  return out;
}

inline void format_nodes(const std::vector<Node>& nodes, std::size_t depth, std::string& out) {
  for (const auto& n : nodes) {
    for (std::size_t i = 0; i < depth; ++i) out += "| ";
    if (n.is_leaf()) {
      out += format_operation(n.op);
      out += '\n';
    } else {
      out += format_scope(n);
      out += '\n';
      format_nodes(n.children, depth + 1, out);
    }
  }
}

inline std::string format_buffer(const BufferDecl& b) {
  std::string out = b.name + " " + to_string(b.dtype) + " [";
  for (std::size_t i = 0; i < b.shape.size(); ++i) {
    if (i) out += ", ";
    out += b.shape[i].extent.str();
    if (!b.shape[i].materialized) out += ":N";
    if (b.shape[i].pad > 1) out += ":P" + std::to_string(b.shape[i].pad);
  }
  out += "] ";
  out += to_string(b.location);
  if (b.arrays.size() != 1 || b.arrays[0] != b.name) {
    out += " -> ";
    for (std::size_t i = 0; i < b.arrays.size(); ++i) {
      if (i) out += ", ";
      out += b.arrays[i];
    }
  }
  return out;
}

}  // namespace text_detail

inline std::string print_body(const Program& p) {
  std::string out;
  text_detail::format_nodes(p.root, 0, out);
  return out;
}

/// Canonical text: headers, one node per line, blank line, buffers.
inline std::string print_program(const Program& p) {
  using namespace text_detail;
  std::string out;
  if (!p.name.empty()) out += "# kernel: " + p.name + "\n";
  if (!p.dims.empty()) {
    out += "# dims:";
    for (const auto& [k, v] : p.dims.items()) out += " " + k + "=" + std::to_string(v);
    out += "\n";
  }
  if (!p.consts.empty()) {
    out += "# consts:";
    for (const auto& [k, v] : p.consts.items()) out += " " + k + "=" + format_number(v);
    out += "\n";
  }
  auto list = [&](const char* key, const std::vector<std::string>& names) {
    out += std::string("# ") + key + ":";
    for (const auto& n : names) out += " " + n;
    out += "\n";
  };
  list("inputs", p.inputs);
  list("outputs", p.outputs);
  out += print_body(p);
  out += "\n";
  for (const auto& b : p.buffers) out += format_buffer(b) + "\n";
  return out;
}

inline std::string print_operation(const Operation& op) { return text_detail::format_operation(op); }
inline std::string print_expr(const Expr& e) { return text_detail::format_expr(e); }
inline std::string print_affine(const AffineExpr& e) { return text_detail::format_affine(e); }

}  // namespace perfdojo
