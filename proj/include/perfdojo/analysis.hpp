#pragma once

// Dependence and legality analyses over storage locations.
//
// Accesses are compared dimension by dimension on the storage layout: a
// non-materialized dimension always maps to slot 0, and two different arrays
// placed in the same buffer are assumed to alias. Every test here is exact
// for single-stride affine subscripts and rejects anything it cannot prove.

#include <map>

#include "perfdojo/ir.hpp"

namespace perfdojo {

struct EngineConfig {
  int vector_width = 4;
  int max_unroll = 16;
  bool gpu_suffixes = false;
  std::vector<std::int64_t> pad_multiples{4, 8, 16, 32};
  std::int64_t stack_limit_bytes = 64 * 1024;
};

struct AccessSite {
  const ArrayAccess* access;
  bool write;
  std::size_t leaf;  // index into the leaf list it was collected from
};

inline std::vector<AccessSite> accesses_of(const std::vector<LeafRef>& ls) {
  std::vector<AccessSite> out;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    out.push_back({&ls[i].op->output, true, i});
    ls[i].op->value.visit_accesses([&](const ArrayAccess& a) { out.push_back({&a, false, i}); });
  }
  return out;
}

namespace analysis_detail {

/// Concrete storage subscripts; nullopt marks a dimension collapsed to one slot.
inline std::vector<std::optional<ConcreteAffine>> storage_subscripts(const Program& p, const ArrayAccess& a) {
  const BufferDecl* b = p.buffer_of(a.array);
  std::vector<std::optional<ConcreteAffine>> out;
  for (std::size_t j = 0; j < a.indices.size(); ++j) {
    if (b && j < b->shape.size() && !b->shape[j].materialized)
      out.emplace_back(std::nullopt);
    else
      out.emplace_back(concretize(a.indices[j], p.dims));
  }
  return out;
}

inline ConcreteAffine without(const ConcreteAffine& e, int depth) {
  ConcreteAffine r = e;
  std::erase_if(r.coeffs, [&](auto& t) { return t.first == depth; });
  return r;
}

inline bool only_below(const ConcreteAffine& e, int limit) {
  return std::all_of(e.coeffs.begin(), e.coeffs.end(), [&](auto& t) { return t.first < limit; });
}

}  // namespace analysis_detail

inline bool same_buffer(const Program& p, const ArrayAccess& a, const ArrayAccess& b) {
  const BufferDecl* ba = p.buffer_of(a.array);
  return ba && ba == p.buffer_of(b.array);
}

/// True when equal storage addresses force the iterator at `depth` to take
/// the same value in both accesses, assuming every iterator shallower than
/// `limit` (default: `depth`) agrees.
inline bool proves_same_iteration(const Program& p, const ArrayAccess& a, const ArrayAccess& b, int depth,
                                  int limit = -1) {
  using namespace analysis_detail;
  if (limit < 0) limit = depth;
  if (a.array != b.array || a.indices.size() != b.indices.size()) return false;
  auto sa = storage_subscripts(p, a);
  auto sb = storage_subscripts(p, b);
  for (std::size_t j = 0; j < sa.size(); ++j) {
    if (!sa[j] || !sb[j]) continue;
    std::int64_t ca = sa[j]->coeff(depth), cb = sb[j]->coeff(depth);
    if (ca == 0 || ca != cb) continue;
    ConcreteAffine ra = without(*sa[j], depth), rb = without(*sb[j], depth);
    if (ra == rb && only_below(ra, limit)) return true;
  }
  return false;
}

/// True when the two accesses can never touch the same storage element while
/// all iterators shallower than `common_depth` agree.
inline bool proves_disjoint(const Program& p, const ArrayAccess& a, const ArrayAccess& b, int common_depth) {
  using namespace analysis_detail;
  if (!same_buffer(p, a, b)) return true;
  if (a.array != b.array || a.indices.size() != b.indices.size()) return false;
  auto sa = storage_subscripts(p, a);
  auto sb = storage_subscripts(p, b);
  for (std::size_t j = 0; j < sa.size(); ++j) {
    if (!sa[j] || !sb[j]) continue;
    if (sa[j]->coeffs == sb[j]->coeffs && only_below(*sa[j], common_depth) && sa[j]->constant != sb[j]->constant)
      return true;
  }
  return false;
}

/// Conflicting access pairs (same buffer, at least one write) between two
/// leaf groups. With `same_group` the pairs within one group are produced,
/// including each write paired with itself.
template <typename F>
void for_each_conflict(const Program& p, const std::vector<LeafRef>& xs, const std::vector<LeafRef>& ys, bool same_group,
                       F&& f) {
  auto ax = accesses_of(xs);
  auto ay = same_group ? ax : accesses_of(ys);
  for (std::size_t i = 0; i < ax.size(); ++i) {
    for (std::size_t k = same_group ? i : 0; k < ay.size(); ++k) {
      const AccessSite& x = ax[i];
      const AccessSite& y = ay[k];
      if (!x.write && !y.write) continue;
      if (!same_buffer(p, *x.access, *y.access)) continue;
      f(x, y);
    }
  }
}

/// Iterations of the scope at `path` are independent of each other.
inline bool iterations_independent(const Program& p, const NodePath& path) {
  int depth = static_cast<int>(path.size()) - 1;
  auto ls = leaves_under(p, path);
  bool ok = true;
  for_each_conflict(p, ls, ls, true, [&](const AccessSite& x, const AccessSite& y) {
    if (ok && !proves_same_iteration(p, *x.access, *y.access, depth)) ok = false;
  });
  return ok;
}

/// Mixed-radix check: `e` enumerates every value in [0, extent) exactly once
/// as the iterators of distinct scopes in `scopes` (indexed by depth) run,
/// using only depths strictly greater than `min_depth`.
inline bool covers_range(const ConcreteAffine& e, std::int64_t extent, const std::vector<const Node*>& scopes,
                         int min_depth, const DimBindings& dims) {
  if (e.constant != 0) return false;
  std::vector<std::pair<std::int64_t, std::int64_t>> radix;  // (coeff, scope extent)
  for (const auto& [d, c] : e.coeffs) {
    if (d <= min_depth || static_cast<std::size_t>(d) >= scopes.size() || c <= 0) return false;
    auto ext = scopes[static_cast<std::size_t>(d)]->extent.try_value(dims);
    if (!ext) return false;
    radix.emplace_back(c, *ext);
  }
  std::sort(radix.begin(), radix.end());
  std::int64_t stride = 1;
  for (const auto& [c, ext] : radix) {
    if (c != stride) return false;
    stride *= ext;
  }
  return stride == extent;
}

/// `op` overwrites every storage element of its output buffer, apart from the
/// dimensions listed in `skip`, before another access to it happens.
inline bool writes_full_slab(const Program& p, const LeafRef& w, int min_depth, std::optional<std::size_t> skip) {
  const Operation& op = *w.op;
  const BufferDecl* b = p.buffer_of(op.output.array);
  if (!b || op.kind != OpKind::Assign) return false;
  bool self_read = false;
  op.value.visit_accesses([&](const ArrayAccess& a) {
    if (p.buffer_of(a.array) == b) self_read = true;
  });
  if (self_read) return false;
  for (std::size_t j = 0; j < b->shape.size(); ++j) {
    if ((skip && *skip == j) || !b->shape[j].materialized) continue;
    auto ext = b->shape[j].extent.try_value(p.dims);
    if (!ext) return false;
    if (!covers_range(concretize(op.output.indices[j], p.dims), *ext, w.scopes, min_depth, p.dims)) return false;
  }
  return true;
}

inline NodePath common_prefix(const std::vector<NodePath>& paths) {
  if (paths.empty()) return {};
  NodePath pre = paths[0];
  for (const auto& q : paths) {
    std::size_t n = 0;
    while (n < pre.size() && n < q.size() && pre[n] == q[n]) ++n;
    pre.resize(n);
  }
  return pre;
}

/// Why collapsing dimension `dim` of `buffer_name` to one slot would change
/// results; nullopt when the reuse is sound.
///
/// Sound when every access lives under one scope S, indexes the dimension
/// with one expression over S and its ancestors, and each iteration of S
/// starts with an assignment that overwrites the whole remaining slab before
/// anything else touches the buffer.
inline std::optional<std::string> reuse_violation(const Program& p, const std::string& buffer_name, std::size_t dim) {
  const BufferDecl* b = p.buffer_named(buffer_name);
  if (!b) return "unknown buffer";
  if (dim >= b->shape.size()) return "dimension out of range";
  if (p.is_interface_buffer(*b)) return "interface buffers are always materialized";
  if (b->arrays.size() != 1) return "buffer holds several arrays";
  const std::string& array = b->arrays[0];

  auto all = leaves(p);
  std::vector<std::size_t> users;
  std::vector<NodePath> parents;
  for (std::size_t i = 0; i < all.size(); ++i) {
    bool uses = all[i].op->output.array == array;
    all[i].op->value.visit_accesses([&](const ArrayAccess& a) { uses = uses || a.array == array; });
    if (uses) {
      users.push_back(i);
      parents.emplace_back(all[i].path.begin(), all[i].path.end() - 1);
    }
  }
  if (users.empty()) return "buffer is never accessed";
  NodePath scope = common_prefix(parents);
  if (scope.empty()) return "dimension is used in more than one scope nest";
  int scope_depth = static_cast<int>(scope.size()) - 1;

  std::optional<AffineExpr> subscript;
  for (std::size_t u : users) {
    std::vector<const ArrayAccess*> acc{&all[u].op->output};
    all[u].op->value.visit_accesses([&](const ArrayAccess& a) { acc.push_back(&a); });
    for (const ArrayAccess* a : acc) {
      if (a->array != array) continue;
      if (dim >= a->indices.size()) return "index count mismatch";
      if (!subscript) subscript = a->indices[dim];
      if (a->indices[dim] != *subscript) return "dimension is indexed by different expressions";
    }
  }
  if (subscript->max_depth() > scope_depth) return "dimension varies inside the shared scope";

  const LeafRef& first = all[users.front()];
  if (first.op->output.array != array) return "first access in the scope is a read";
  if (!writes_full_slab(p, first, scope_depth, dim)) return "first write does not cover the buffer slab";
  NodePath top(first.path.begin(), first.path.begin() + static_cast<std::ptrdiff_t>(scope.size()) + 1);
  if (top != first.path)
    for (std::size_t k = 1; k < users.size(); ++k)
      if (is_prefix(top, all[users[k]].path)) return "buffer is read while its first write is still running";
  return std::nullopt;
}

/// Why the arrays sharing `buffer_name` could observe each other's data.
inline std::optional<std::string> share_violation(const Program& p, const std::string& buffer_name) {
  const BufferDecl* b = p.buffer_named(buffer_name);
  if (!b) return "unknown buffer";
  if (b->arrays.size() < 2) return std::nullopt;
  if (p.is_interface_buffer(*b)) return "interface arrays cannot share storage";
  auto all = leaves(p);
  struct Life {
    std::string array;
    std::size_t first_root = SIZE_MAX, last_root = 0;
    std::vector<std::size_t> users;
  };
  std::vector<Life> lives;
  for (const auto& a : b->arrays) {
    Life life;
    life.array = a;
    for (std::size_t i = 0; i < all.size(); ++i) {
      bool uses = all[i].op->output.array == a;
      all[i].op->value.visit_accesses([&](const ArrayAccess& x) { uses = uses || x.array == a; });
      if (!uses) continue;
      life.users.push_back(i);
      life.first_root = std::min(life.first_root, all[i].path[0]);
      life.last_root = std::max(life.last_root, all[i].path[0]);
    }
    if (!life.users.empty()) lives.push_back(std::move(life));
  }
  std::sort(lives.begin(), lives.end(), [](const Life& x, const Life& y) { return x.first_root < y.first_root; });
  for (std::size_t k = 1; k < lives.size(); ++k) {
    if (lives[k].first_root <= lives[k - 1].last_root) return "array lifetimes overlap";
    const LeafRef& w = all[lives[k].users.front()];
    if (w.op->output.array != lives[k].array) return "array '" + lives[k].array + "' is read before written";
    if (!writes_full_slab(p, w, -1, std::nullopt)) return "first write of '" + lives[k].array + "' is partial";
    NodePath top{w.path[0]};
    if (top != w.path)
      for (std::size_t u = 1; u < lives[k].users.size(); ++u)
        if (all[lives[k].users[u]].path[0] == w.path[0]) return "array is read while its first write is running";
  }
  return std::nullopt;
}

/// Why `:v` cannot be set on the scope at `path`.
inline std::optional<std::string> vector_violation(const Program& p, const NodePath& path, const EngineConfig& cfg) {
  const Node& s = node_at(p.root, path);
  auto ext = s.extent.try_value(p.dims);
  if (!ext || *ext != cfg.vector_width) return "extent differs from the vector width";
  if (s.children.size() != 1 || !s.children[0].is_leaf()) return "scope must wrap exactly one operation";
  int d = static_cast<int>(path.size()) - 1;
  const Operation& op = s.children[0].op;
  bool output_lane = false;
  auto check = [&](const ArrayAccess& a, bool is_output) -> bool {
    const BufferDecl* b = p.buffer_of(a.array);
    if (!b) return false;
    for (std::size_t j = 0; j < a.indices.size(); ++j) {
      std::int64_t c = concretize(a.indices[j], p.dims).coeff(d);
      if (c == 0) continue;
      if (j + 1 != a.indices.size() || c != 1 || !b->shape[j].materialized) return false;
      if (is_output) output_lane = true;
    }
    return true;
  };
  if (!check(op.output, true)) return "output is not contiguous along the vector lane";
  bool inputs_ok = true;
  op.value.visit_accesses([&](const ArrayAccess& a) { inputs_ok = inputs_ok && check(a, false); });
  if (!inputs_ok) return "input is not contiguous along the vector lane";
  if (!output_lane) return "output does not vary along the vector lane";
  return std::nullopt;
}

inline bool subtree_has_suffix(const Node& n, const std::function<bool(Suffix)>& pred) {
  for (const auto& c : n.children)
    if (c.is_scope() && (pred(c.suffix) || subtree_has_suffix(c, pred))) return true;
  return false;
}

inline bool ancestors_have_suffix(const Program& p, const NodePath& path, const std::function<bool(Suffix)>& pred) {
  NodePath pre;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    pre.push_back(path[i]);
    if (pred(node_at(p.root, pre).suffix)) return true;
  }
  return false;
}

/// Why `suffix` cannot annotate the scope at `path` (legality of the suffix
/// itself; the scope's current suffix is ignored).
inline std::optional<std::string> suffix_violation(const Program& p, const NodePath& path, Suffix suffix,
                                                   const EngineConfig& cfg) {
  const Node& s = node_at(p.root, path);
  auto is_par = [](Suffix x) { return x == Suffix::Parallel; };
  switch (suffix) {
    case Suffix::None: return std::nullopt;
    case Suffix::Vector: return vector_violation(p, path, cfg);
    case Suffix::Unroll: {
      auto ext = s.extent.try_value(p.dims);
      if (!ext || *ext > cfg.max_unroll) return "extent exceeds the unroll limit";
      if (subtree_has_suffix(s, [](Suffix x) { return x == Suffix::Parallel || is_gpu_suffix(x); }))
        return "unrolled scope contains a parallel scope";
      return std::nullopt;
    }
    case Suffix::Parallel:
      if (ancestors_have_suffix(p, path, [](Suffix x) { return x != Suffix::None && !is_gpu_suffix(x); }))
        return "parallel scope nested in an annotated scope";
      if (subtree_has_suffix(s, is_par)) return "parallel scopes cannot nest";
      if (!iterations_independent(p, path)) return "loop-carried dependence";
      return std::nullopt;
    case Suffix::Grid:
    case Suffix::Block:
    case Suffix::Warp:
      if (ancestors_have_suffix(p, path, [](Suffix x) { return x == Suffix::Unroll || x == Suffix::Vector; }))
        return "GPU mapping inside an unrolled scope";
      if (!iterations_independent(p, path)) return "loop-carried dependence";
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace perfdojo
