#pragma once

// Core program representation: an ordered tree of iteration scopes whose
// leaves are scalar operations, plus the buffer declarations that map the
// referenced arrays onto memory.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace perfdojo {

enum class ErrorCode {
  Syntax,
  UnresolvedArray,
  UnresolvedSymbol,
  IndexOutOfRange,
  Indirection,
  DataDependentRange,
  DependentIteration,
  GeneralControlFlow,
  NotFound,
  Ambiguous,
  InapplicableMove,
  ParamOutOfDomain,
  UnboundSymbol,
  ShapeMismatch,
  OutOfBounds,
  InterfaceMismatch,
  UnsupportedBackend,
  CompileFailure,
  Timeout,
  UnknownKernel,
  InvalidArgument,
  Internal,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax: return "syntax";
    case ErrorCode::UnresolvedArray: return "unresolved-array";
    case ErrorCode::UnresolvedSymbol: return "unresolved-symbol";
    case ErrorCode::IndexOutOfRange: return "index-out-of-range";
    case ErrorCode::Indirection: return "excluded-indirection";
    case ErrorCode::DataDependentRange: return "excluded-data-dependent-range";
    case ErrorCode::DependentIteration: return "excluded-dependent-iteration";
    case ErrorCode::GeneralControlFlow: return "excluded-general-control-flow";
    case ErrorCode::NotFound: return "not-found";
    case ErrorCode::Ambiguous: return "ambiguous";
    case ErrorCode::InapplicableMove: return "inapplicable-move";
    case ErrorCode::ParamOutOfDomain: return "param-out-of-domain";
    case ErrorCode::UnboundSymbol: return "unbound-symbol";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::OutOfBounds: return "out-of-bounds";
    case ErrorCode::InterfaceMismatch: return "interface-mismatch";
    case ErrorCode::UnsupportedBackend: return "unsupported-backend";
    case ErrorCode::CompileFailure: return "compile-failure";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::UnknownKernel: return "unknown-kernel";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int line = 0, int column = 0)
      : std::runtime_error(format(code, message, line, column)),
        code_(code),
        line_(line),
        column_(column) {}

  ErrorCode code() const { return code_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(ErrorCode code, const std::string& message, int line, int column) {
    std::string out = to_string(code);
    if (line > 0) out += " at " + std::to_string(line) + ":" + std::to_string(column);
    return out + ": " + message;
  }

  ErrorCode code_;
  int line_;
  int column_;
};

/// Ordered symbol -> value binding (dimension sizes or named constants).
template <typename T>
class Bindings {
 public:
  Bindings() = default;
  Bindings(std::initializer_list<std::pair<std::string, T>> init) : items_(init) {}

  const T* find(std::string_view name) const {
    for (const auto& [k, v] : items_)
      if (k == name) return &v;
    return nullptr;
  }
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  void set(const std::string& name, T value) {
    for (auto& [k, v] : items_)
      if (k == name) {
        v = value;
        return;
      }
    items_.emplace_back(name, value);
  }
  T at(std::string_view name) const {
    if (const T* v = find(name)) return *v;
    throw Error(ErrorCode::UnboundSymbol, "symbol '" + std::string(name) + "' is not bound");
  }
  const std::vector<std::pair<std::string, T>>& items() const { return items_; }
  bool empty() const { return items_.empty(); }

  bool operator==(const Bindings&) const = default;

 private:
  std::vector<std::pair<std::string, T>> items_;
};

using DimBindings = Bindings<std::int64_t>;
using ConstBindings = Bindings<double>;

/// Scope or buffer extent: `symbol * num / den`, or the integer `num` when
/// there is no symbol.
struct Extent {
  std::string symbol;
  std::int64_t num = 1;
  std::int64_t den = 1;

  static Extent constant(std::int64_t n) { return Extent{"", n, 1}; }
  static Extent of(std::string sym) { return Extent{std::move(sym), 1, 1}; }

  bool is_constant() const { return symbol.empty(); }

  std::optional<std::int64_t> try_value(const DimBindings& dims) const {
    std::int64_t base = 1;
    if (!symbol.empty()) {
      const auto* v = dims.find(symbol);
      if (!v) return std::nullopt;
      base = *v;
    }
    std::int64_t scaled = base * num;
    if (den == 0 || scaled % den != 0) return std::nullopt;
    return scaled / den;
  }

  std::int64_t value(const DimBindings& dims) const {
    if (!symbol.empty() && !dims.contains(symbol))
      throw Error(ErrorCode::UnboundSymbol, "dimension '" + symbol + "' is not bound");
    auto v = try_value(dims);
    if (!v) throw Error(ErrorCode::InvalidArgument, "extent " + str() + " is not integral");
    return *v;
  }

  /// Extent divided exactly by `factor`, kept symbolic where possible.
  Extent divided(std::int64_t factor) const {
    Extent e = *this;
    if (e.is_constant()) {
      e.num /= factor;
      return e;
    }
    e.den *= factor;
    e.normalize();
    return e;
  }

  void normalize() {
    std::int64_t g = std::gcd(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  std::string str() const {
    if (symbol.empty()) return std::to_string(num);
    std::string out = symbol;
    if (num != 1) out += "*" + std::to_string(num);
    if (den != 1) out += "/" + std::to_string(den);
    return out;
  }

  bool operator==(const Extent&) const = default;
};

/// One term `coeff * symbol * {depth}`; symbol and depth are optional
/// (empty / -1).
struct AffineTerm {
  std::int64_t coeff = 0;
  std::string symbol;
  int depth = -1;

  bool operator==(const AffineTerm&) const = default;
};

/// Affine index expression `c0 + sum(ci * [sym] * {di})` kept in canonical
/// (merged, sorted) form.
struct AffineExpr {
  std::vector<AffineTerm> terms;

  static AffineExpr index(int depth) { return AffineExpr{{AffineTerm{1, "", depth}}}; }
  static AffineExpr constant(std::int64_t c) {
    AffineExpr e;
    if (c != 0) e.terms.push_back(AffineTerm{c, "", -1});
    return e;
  }

  void normalize() {
    auto key = [](const AffineTerm& t) {
      return std::make_pair(t.depth < 0 ? (1 << 30) : t.depth, t.symbol);
    };
    std::stable_sort(terms.begin(), terms.end(),
                     [&](const AffineTerm& a, const AffineTerm& b) { return key(a) < key(b); });
    std::vector<AffineTerm> merged;
    for (const auto& t : terms) {
      if (!merged.empty() && merged.back().depth == t.depth && merged.back().symbol == t.symbol)
        merged.back().coeff += t.coeff;
      else
        merged.push_back(t);
    }
    std::erase_if(merged, [](const AffineTerm& t) { return t.coeff == 0; });
    terms = std::move(merged);
  }

  bool references(int depth) const {
    return std::any_of(terms.begin(), terms.end(), [&](const AffineTerm& t) { return t.depth == depth; });
  }
  int max_depth() const {
    int d = -1;
    for (const auto& t : terms) d = std::max(d, t.depth);
    return d;
  }

  /// Rewrites every `{d}` through `map(d)`, which returns the replacement
  /// expression for one unit of that index.
  AffineExpr substituted(const std::function<AffineExpr(int)>& map) const {
    AffineExpr out;
    for (const auto& t : terms) {
      if (t.depth < 0) {
        out.terms.push_back(t);
        continue;
      }
      for (const auto& r : map(t.depth).terms) {
        if (!r.symbol.empty() && !t.symbol.empty())
          throw Error(ErrorCode::Internal, "affine substitution produced a symbol product");
        out.terms.push_back(AffineTerm{t.coeff * r.coeff, t.symbol.empty() ? r.symbol : t.symbol, r.depth});
      }
    }
    out.normalize();
    return out;
  }

  bool operator==(const AffineExpr&) const = default;
};

/// Affine expression with every symbol resolved: constant + sum(coeff_d * {d}).
struct ConcreteAffine {
  std::int64_t constant = 0;
  std::vector<std::pair<int, std::int64_t>> coeffs;  // sorted by depth, nonzero

  std::int64_t coeff(int depth) const {
    for (const auto& [d, c] : coeffs)
      if (d == depth) return c;
    return 0;
  }
  std::int64_t eval(const std::vector<std::int64_t>& iters) const {
    std::int64_t v = constant;
    for (const auto& [d, c] : coeffs) v += c * iters[static_cast<std::size_t>(d)];
    return v;
  }
  bool operator==(const ConcreteAffine&) const = default;
};

inline ConcreteAffine concretize(const AffineExpr& e, const DimBindings& dims) {
  ConcreteAffine out;
  for (const auto& t : e.terms) {
    std::int64_t c = t.coeff * (t.symbol.empty() ? 1 : dims.at(t.symbol));
    if (t.depth < 0) {
      out.constant += c;
      continue;
    }
    auto it = std::find_if(out.coeffs.begin(), out.coeffs.end(), [&](auto& p) { return p.first == t.depth; });
    if (it == out.coeffs.end())
      out.coeffs.emplace_back(t.depth, c);
    else
      it->second += c;
  }
  std::erase_if(out.coeffs, [](auto& p) { return p.second == 0; });
  std::sort(out.coeffs.begin(), out.coeffs.end());
  return out;
}

struct ArrayAccess {
  std::string array;
  std::vector<AffineExpr> indices;

  bool operator==(const ArrayAccess&) const = default;
};

/// Scalar value expression on the right-hand side of an operation.
struct Expr {
  enum class Kind { Constant, Symbol, IndexRef, Access, Neg, Add, Sub, Mul, Div, Call };

  Kind kind = Kind::Constant;
  double value = 0;          // Constant
  std::string name;          // Symbol, Call
  int depth = 0;             // IndexRef
  ArrayAccess access;        // Access
  std::vector<Expr> args;    // Neg (1), binary (2), Call (n)

  static Expr constant(double v) {
    Expr e;
    e.kind = Kind::Constant;
    e.value = v;
    return e;
  }
  static Expr symbol(std::string n) {
    Expr e;
    e.kind = Kind::Symbol;
    e.name = std::move(n);
    return e;
  }
  static Expr index(int d) {
    Expr e;
    e.kind = Kind::IndexRef;
    e.depth = d;
    return e;
  }
  static Expr load(ArrayAccess a) {
    Expr e;
    e.kind = Kind::Access;
    e.access = std::move(a);
    return e;
  }
  static Expr unary(Kind k, Expr a) {
    Expr e;
    e.kind = k;
    e.args.push_back(std::move(a));
    return e;
  }
  static Expr binary(Kind k, Expr a, Expr b) {
    Expr e;
    e.kind = k;
    e.args.push_back(std::move(a));
    e.args.push_back(std::move(b));
    return e;
  }
  static Expr call(std::string fn, std::vector<Expr> args) {
    Expr e;
    e.kind = Kind::Call;
    e.name = std::move(fn);
    e.args = std::move(args);
    return e;
  }

  template <typename F>
  void visit_accesses(F&& f) const {
    if (kind == Kind::Access) f(access);
    for (const auto& a : args) a.visit_accesses(f);
  }
  template <typename F>
  void mutate_accesses(F&& f) {
    if (kind == Kind::Access) f(access);
    for (auto& a : args) a.mutate_accesses(f);
  }
  template <typename F>
  void mutate_index_refs(F&& f) {
    if (kind == Kind::IndexRef) {
      f(*this);
      return;
    }
    for (auto& a : args) a.mutate_index_refs(f);
  }

  bool operator==(const Expr&) const = default;
};

/// Builtin functions accepted in call position, with their arity.
inline int builtin_arity(std::string_view name) {
  if (name == "max" || name == "min") return 2;
  if (name == "exp" || name == "log" || name == "sqrt" || name == "abs") return 1;
  return -1;
}

enum class OpKind { Assign, Accumulate };

struct Operation {
  ArrayAccess output;
  OpKind kind = OpKind::Assign;
  Expr value;

  /// Every array read by this operation, including the implicit read of
  /// an accumulation.
  std::vector<const ArrayAccess*> reads() const {
    std::vector<const ArrayAccess*> out;
    if (kind == OpKind::Accumulate) out.push_back(&output);
    value.visit_accesses([&](const ArrayAccess& a) { out.push_back(&a); });
    return out;
  }

  /// Number of arithmetic operations one execution performs (at least 1).
  int arithmetic_ops() const {
    int n = kind == OpKind::Accumulate ? 1 : 0;
    std::function<void(const Expr&)> walk = [&](const Expr& e) {
      switch (e.kind) {
        case Expr::Kind::Neg:
        case Expr::Kind::Add:
        case Expr::Kind::Sub:
        case Expr::Kind::Mul:
        case Expr::Kind::Div:
        case Expr::Kind::Call: ++n; break;
        default: break;
      }
      for (const auto& a : e.args) walk(a);
    };
    walk(value);
    return std::max(n, 1);
  }

  bool operator==(const Operation&) const = default;
};

enum class Suffix { None, Unroll, Parallel, Vector, Grid, Block, Warp };

inline char suffix_char(Suffix s) {
  switch (s) {
    case Suffix::Unroll: return 'u';
    case Suffix::Parallel: return 'p';
    case Suffix::Vector: return 'v';
    case Suffix::Grid: return 'g';
    case Suffix::Block: return 'b';
    case Suffix::Warp: return 'w';
    case Suffix::None: break;
  }
  return '\0';
}

inline std::optional<Suffix> suffix_from_char(char c) {
  switch (c) {
    case 'u': return Suffix::Unroll;
    case 'p': return Suffix::Parallel;
    case 'v': return Suffix::Vector;
    case 'g': return Suffix::Grid;
    case 'b': return Suffix::Block;
    case 'w': return Suffix::Warp;
    default: return std::nullopt;
  }
}

inline bool is_gpu_suffix(Suffix s) {
  return s == Suffix::Grid || s == Suffix::Block || s == Suffix::Warp;
}

struct Node {
  enum class Kind { Scope, Leaf };

  Kind kind = Kind::Leaf;
  // Scope
  Extent extent;
  Suffix suffix = Suffix::None;
  std::vector<Node> children;
  // Leaf
  Operation op;

  static Node scope(Extent e, std::vector<Node> children = {}, Suffix s = Suffix::None) {
    Node n;
    n.kind = Kind::Scope;
    n.extent = std::move(e);
    n.suffix = s;
    n.children = std::move(children);
    return n;
  }
  static Node leaf(Operation op) {
    Node n;
    n.kind = Kind::Leaf;
    n.op = std::move(op);
    return n;
  }

  bool is_scope() const { return kind == Kind::Scope; }
  bool is_leaf() const { return kind == Kind::Leaf; }

  bool operator==(const Node&) const = default;
};

enum class DType { F32, F64, I32 };

inline const char* to_string(DType t) {
  switch (t) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::I32: return "i32";
  }
  return "?";
}
inline std::optional<DType> dtype_from_string(std::string_view s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  if (s == "i32") return DType::I32;
  return std::nullopt;
}
inline std::size_t dtype_size(DType t) { return t == DType::F64 ? 8 : 4; }

enum class Location { Heap, Stack };

inline const char* to_string(Location l) { return l == Location::Heap ? "heap" : "stack"; }

struct BufferDim {
  Extent extent;
  bool materialized = true;
  std::int64_t pad = 0;  // storage extent rounded up to a multiple of `pad`

  std::int64_t logical(const DimBindings& dims) const { return extent.value(dims); }
  std::int64_t storage(const DimBindings& dims) const {
    if (!materialized) return 1;
    std::int64_t e = logical(dims);
    if (pad > 1) e = (e + pad - 1) / pad * pad;
    return e;
  }

  bool operator==(const BufferDim&) const = default;
};

struct BufferDecl {
  std::string name;
  DType dtype = DType::F32;
  std::vector<BufferDim> shape;
  Location location = Location::Heap;
  std::vector<std::string> arrays;

  bool holds(std::string_view array) const {
    return std::find(arrays.begin(), arrays.end(), array) != arrays.end();
  }

  std::int64_t footprint_elements(const DimBindings& dims) const {
    std::int64_t n = 1;
    for (const auto& d : shape) n *= d.storage(dims);
    return n;
  }

  bool operator==(const BufferDecl&) const = default;
};

struct Program {
  std::string name;
  DimBindings dims;
  ConstBindings consts;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<Node> root;
  std::vector<BufferDecl> buffers;

  const BufferDecl* buffer_of(std::string_view array) const {
    for (const auto& b : buffers)
      if (b.holds(array)) return &b;
    return nullptr;
  }
  BufferDecl* buffer_of(std::string_view array) {
    for (auto& b : buffers)
      if (b.holds(array)) return &b;
    return nullptr;
  }
  const BufferDecl* buffer_named(std::string_view name) const {
    for (const auto& b : buffers)
      if (b.name == name) return &b;
    return nullptr;
  }
  BufferDecl* buffer_named(std::string_view name) {
    for (auto& b : buffers)
      if (b.name == name) return &b;
    return nullptr;
  }

  bool is_interface(std::string_view array) const {
    return std::find(inputs.begin(), inputs.end(), array) != inputs.end() ||
           std::find(outputs.begin(), outputs.end(), array) != outputs.end();
  }
  bool is_interface_buffer(const BufferDecl& b) const {
    return std::any_of(b.arrays.begin(), b.arrays.end(), [&](const std::string& a) { return is_interface(a); });
  }

  bool operator==(const Program&) const = default;
};

/// Position of a node: child indices from the root list downwards.
using NodePath = std::vector<std::size_t>;

inline const Node& node_at(const std::vector<Node>& root, const NodePath& path) {
  const Node* n = &root.at(path.at(0));
  for (std::size_t i = 1; i < path.size(); ++i) n = &n->children.at(path[i]);
  return *n;
}
inline Node& node_at(std::vector<Node>& root, const NodePath& path) {
  Node* n = &root.at(path.at(0));
  for (std::size_t i = 1; i < path.size(); ++i) n = &n->children.at(path[i]);
  return *n;
}

/// Children list containing the node at `path`.
inline std::vector<Node>& sibling_list(std::vector<Node>& root, const NodePath& path) {
  if (path.size() == 1) return root;
  NodePath parent(path.begin(), path.end() - 1);
  return node_at(root, parent).children;
}
inline const std::vector<Node>& sibling_list(const std::vector<Node>& root, const NodePath& path) {
  if (path.size() == 1) return root;
  NodePath parent(path.begin(), path.end() - 1);
  return node_at(root, parent).children;
}

/// One operation in execution order with its location and enclosing scopes.
struct LeafRef {
  NodePath path;
  const Operation* op;
  std::vector<const Node*> scopes;  // outermost first; size == depth of the leaf
};

inline void collect_leaves(const std::vector<Node>& nodes, NodePath& path, std::vector<const Node*>& scopes,
                           std::vector<LeafRef>& out) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    path.push_back(i);
    const Node& n = nodes[i];
    if (n.is_leaf()) {
      out.push_back(LeafRef{path, &n.op, scopes});
    } else {
      scopes.push_back(&n);
      collect_leaves(n.children, path, scopes, out);
      scopes.pop_back();
    }
    path.pop_back();
  }
}

inline std::vector<LeafRef> leaves(const std::vector<Node>& root) {
  std::vector<LeafRef> out;
  NodePath path;
  std::vector<const Node*> scopes;
  collect_leaves(root, path, scopes, out);
  return out;
}
inline std::vector<LeafRef> leaves(const Program& p) { return leaves(p.root); }

/// Leaves under the node at `prefix` (or all leaves when `prefix` is empty).
inline std::vector<LeafRef> leaves_under(const Program& p, const NodePath& prefix) {
  std::vector<LeafRef> all = leaves(p);
  std::erase_if(all, [&](const LeafRef& l) {
    return l.path.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), l.path.begin());
  });
  return all;
}

inline bool is_prefix(const NodePath& prefix, const NodePath& path) {
  return prefix.size() <= path.size() && std::equal(prefix.begin(), prefix.end(), path.begin());
}

/// Applies `f` to every scope node with its path, pre-order.
inline void for_each_scope(const std::vector<Node>& nodes, NodePath& path,
                           const std::function<void(const Node&, const NodePath&)>& f) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    path.push_back(i);
    if (nodes[i].is_scope()) {
      f(nodes[i], path);
      for_each_scope(nodes[i].children, path, f);
    }
    path.pop_back();
  }
}
inline void for_each_scope(const Program& p, const std::function<void(const Node&, const NodePath&)>& f) {
  NodePath path;
  for_each_scope(p.root, path, f);
}

/// Mutates every operation in the subtree rooted at `nodes`.
inline void for_each_op(std::vector<Node>& nodes, const std::function<void(Operation&)>& f) {
  for (auto& n : nodes) {
    if (n.is_leaf())
      f(n.op);
    else
      for_each_op(n.children, f);
  }
}

/// Builds the value expression computing an affine index combination.
inline Expr affine_to_expr(const AffineExpr& a) {
  std::optional<Expr> sum;
  for (const auto& t : a.terms) {
    std::optional<Expr> term;
    if (t.depth >= 0) term = Expr::index(t.depth);
    if (!t.symbol.empty())
      term = term ? Expr::binary(Expr::Kind::Mul, std::move(*term), Expr::symbol(t.symbol)) : Expr::symbol(t.symbol);
    std::int64_t mag = t.coeff < 0 ? -t.coeff : t.coeff;
    if (!term)
      term = Expr::constant(static_cast<double>(mag));
    else if (mag != 1)
      term = Expr::binary(Expr::Kind::Mul, std::move(*term), Expr::constant(static_cast<double>(mag)));
    if (!sum)
      sum = t.coeff < 0 ? Expr::unary(Expr::Kind::Neg, std::move(*term)) : std::move(*term);
    else
      sum = Expr::binary(t.coeff < 0 ? Expr::Kind::Sub : Expr::Kind::Add, std::move(*sum), std::move(*term));
  }
  return sum ? *sum : Expr::constant(0);
}

/// Renames index depths in one operation (outputs, inputs and index values).
inline void remap_depths(Operation& op, const std::function<AffineExpr(int)>& map) {
  auto fix = [&](ArrayAccess& a) {
    for (auto& idx : a.indices) idx = idx.substituted(map);
  };
  fix(op.output);
  op.value.mutate_accesses(fix);
  op.value.mutate_index_refs([&](Expr& e) { e = affine_to_expr(map(e.depth)); });
}

}  // namespace perfdojo
