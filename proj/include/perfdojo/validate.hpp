#pragma once

#include "perfdojo/analysis.hpp"
#include "perfdojo/text.hpp"

namespace perfdojo {

enum class ViolationKind {
  UnresolvedArray,
  UnboundSymbol,
  IndexOutOfRange,
  IndexCount,
  OutOfBounds,
  BadExtent,
  EmptyScope,
  DependentIteration,
  Interface,
  Buffer,
  Reuse,
  Sharing,
  Suffix,
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::UnresolvedArray: return "unresolved-array";
    case ViolationKind::UnboundSymbol: return "unbound-symbol";
    case ViolationKind::IndexOutOfRange: return "index-out-of-range";
    case ViolationKind::IndexCount: return "index-count";
    case ViolationKind::OutOfBounds: return "out-of-bounds";
    case ViolationKind::BadExtent: return "bad-extent";
    case ViolationKind::EmptyScope: return "empty-scope";
    case ViolationKind::DependentIteration: return "dependent-iteration";
    case ViolationKind::Interface: return "interface";
    case ViolationKind::Buffer: return "buffer";
    case ViolationKind::Reuse: return "reuse";
    case ViolationKind::Sharing: return "sharing";
    case ViolationKind::Suffix: return "suffix";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::string message;
};

namespace validate_detail {

inline bool symbol_ok(const Program& p, const std::string& s, bool allow_consts) {
  return p.dims.contains(s) || (allow_consts && p.consts.contains(s));
}

/// Smallest and largest values of `e` over the iteration box of `scopes`.
inline std::optional<std::pair<std::int64_t, std::int64_t>> range_of(const ConcreteAffine& e,
                                                                     const std::vector<const Node*>& scopes,
                                                                     const DimBindings& dims) {
  std::int64_t lo = e.constant, hi = e.constant;
  for (const auto& [d, c] : e.coeffs) {
    if (d < 0 || static_cast<std::size_t>(d) >= scopes.size()) return std::nullopt;
    auto ext = scopes[static_cast<std::size_t>(d)]->extent.try_value(dims);
    if (!ext) return std::nullopt;
    std::int64_t span = c * (*ext - 1);
    lo += std::min<std::int64_t>(0, span);
    hi += std::max<std::int64_t>(0, span);
  }
  return std::make_pair(lo, hi);
}

}  // namespace validate_detail

/// Every invariant violation in `p`; empty when the program is valid.
inline std::vector<Violation> validate(const Program& p, const EngineConfig& cfg = {}) {
  using namespace validate_detail;
  std::vector<Violation> out;
  auto add = [&](ViolationKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

  for (std::size_t i = 0; i < p.buffers.size(); ++i) {
    const BufferDecl& b = p.buffers[i];
    if (b.arrays.empty()) add(ViolationKind::Buffer, "buffer '" + b.name + "' holds no arrays");
    for (std::size_t k = 0; k < i; ++k) {
      if (p.buffers[k].name == b.name) add(ViolationKind::Buffer, "duplicate buffer '" + b.name + "'");
      for (const auto& a : b.arrays)
        if (p.buffers[k].holds(a)) add(ViolationKind::Buffer, "array '" + a + "' declared in two buffers");
    }
    for (const auto& d : b.shape) {
      if (!d.extent.symbol.empty() && !p.dims.contains(d.extent.symbol)) {
        add(ViolationKind::UnboundSymbol, "buffer '" + b.name + "' uses unbound '" + d.extent.symbol + "'");
        continue;
      }
      auto v = d.extent.try_value(p.dims);
      if (!v || *v <= 0) add(ViolationKind::BadExtent, "buffer '" + b.name + "' has a non-positive dimension");
    }
    if (p.is_interface_buffer(b)) {
      if (b.arrays.size() != 1) add(ViolationKind::Interface, "interface array shares buffer '" + b.name + "'");
      for (const auto& d : b.shape)
        if (!d.materialized) add(ViolationKind::Interface, "interface buffer '" + b.name + "' has a :N dimension");
    }
  }
  for (const auto* list : {&p.inputs, &p.outputs})
    for (const auto& a : *list)
      if (!p.buffer_of(a)) add(ViolationKind::Interface, "interface array '" + a + "' has no buffer");
  for (const auto& a : p.inputs)
    if (std::find(p.outputs.begin(), p.outputs.end(), a) != p.outputs.end())
      add(ViolationKind::Interface, "array '" + a + "' is both input and output");
  if (!out.empty()) return out;

  bool scopes_ok = true;
  for_each_scope(p, [&](const Node& n, const NodePath&) {
    if (!n.extent.symbol.empty() && !p.dims.contains(n.extent.symbol)) {
      add(ViolationKind::UnboundSymbol, "scope uses unbound '" + n.extent.symbol + "'");
      scopes_ok = false;
      return;
    }
    auto v = n.extent.try_value(p.dims);
    if (!v || *v <= 0) {
      add(ViolationKind::BadExtent, "scope extent " + n.extent.str() + " is not a positive integer");
      scopes_ok = false;
    }
    if (n.children.empty()) add(ViolationKind::EmptyScope, "scope " + n.extent.str() + " has no children");
  });

  bool accesses_ok = scopes_ok;
  auto all = leaves(p);
  for (const auto& leaf : all) {
    const std::size_t depth = leaf.scopes.size();
    const Operation& op = *leaf.op;
    auto check_access = [&](const ArrayAccess& a, bool is_output) {
      const BufferDecl* b = p.buffer_of(a.array);
      if (!b) {
        add(ViolationKind::UnresolvedArray, "array '" + a.array + "' has no buffer");
        accesses_ok = false;
        return;
      }
      if (is_output && std::find(p.inputs.begin(), p.inputs.end(), a.array) != p.inputs.end())
        add(ViolationKind::Interface, "input '" + a.array + "' is written");
      if (a.indices.size() != b->shape.size()) {
        add(ViolationKind::IndexCount, "'" + a.array + "' indexed with " + std::to_string(a.indices.size()) +
                                           " subscripts, buffer has " + std::to_string(b->shape.size()));
        accesses_ok = false;
        return;
      }
      for (std::size_t j = 0; j < a.indices.size(); ++j) {
        bool ok = true;
        for (const auto& t : a.indices[j].terms) {
          if (t.depth >= 0 && static_cast<std::size_t>(t.depth) >= depth) {
            add(ViolationKind::IndexOutOfRange, "'" + a.array + "' uses {" + std::to_string(t.depth) + "} under " +
                                                    std::to_string(depth) + " scopes");
            ok = false;
          }
          if (!t.symbol.empty() && !symbol_ok(p, t.symbol, false)) {
            add(ViolationKind::UnboundSymbol, "index symbol '" + t.symbol + "' is unbound");
            ok = false;
          }
        }
        if (!ok || !scopes_ok) {
          accesses_ok = false;
          continue;
        }
        auto r = range_of(concretize(a.indices[j], p.dims), leaf.scopes, p.dims);
        auto ext = b->shape[j].extent.try_value(p.dims);
        if (!r || !ext || r->first < 0 || r->second >= *ext) {
          add(ViolationKind::OutOfBounds, "'" + a.array + "' subscript " + print_affine(a.indices[j]) + " leaves [0, " +
                                              (ext ? std::to_string(*ext) : std::string("?")) + ")");
          accesses_ok = false;
        }
      }
    };
    check_access(op.output, true);
    std::function<void(const Expr&)> walk = [&](const Expr& e) {
      if (e.kind == Expr::Kind::Access) {
        check_access(e.access, false);
        if (e.access.array == op.output.array && e.access.indices != op.output.indices)
          add(ViolationKind::DependentIteration, "'" + e.access.array + "' reads its own output elsewhere");
      }
      if (e.kind == Expr::Kind::Symbol && !symbol_ok(p, e.name, true))
        add(ViolationKind::UnboundSymbol, "value symbol '" + e.name + "' is unbound");
      if (e.kind == Expr::Kind::IndexRef && (e.depth < 0 || static_cast<std::size_t>(e.depth) >= depth))
        add(ViolationKind::IndexOutOfRange, "index value {" + std::to_string(e.depth) + "} under " +
                                                std::to_string(depth) + " scopes");
      if (e.kind == Expr::Kind::Call && builtin_arity(e.name) != static_cast<int>(e.args.size()))
        add(ViolationKind::Buffer, "bad call to '" + e.name + "'");
      for (const auto& a : e.args) walk(a);
    };
    walk(op.value);
  }
  if (!out.empty() || !accesses_ok) return out;

  for (const auto& b : p.buffers) {
    for (std::size_t j = 0; j < b.shape.size(); ++j)
      if (!b.shape[j].materialized)
        if (auto why = reuse_violation(p, b.name, j))
          add(ViolationKind::Reuse, "buffer '" + b.name + "' dim " + std::to_string(j) + ": " + *why);
    if (auto why = share_violation(p, b.name)) add(ViolationKind::Sharing, "buffer '" + b.name + "': " + *why);
  }
  for_each_scope(p, [&](const Node& n, const NodePath& path) {
    if (n.suffix == Suffix::None) return;
    if (auto why = suffix_violation(p, path, n.suffix, cfg))
      add(ViolationKind::Suffix, "scope " + n.extent.str() + ":" + suffix_char(n.suffix) + ": " + *why);
  });
  return out;
}

inline bool is_valid(const Program& p, const EngineConfig& cfg = {}) { return validate(p, cfg).empty(); }

}  // namespace perfdojo
