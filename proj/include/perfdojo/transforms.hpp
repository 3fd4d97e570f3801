#pragma once

// Registry of atomic transformations. Each entry proposes candidate moves
// with its own dependence test and rewrites the program; enumerate_moves
// keeps only candidates whose result still validates.

#include <cctype>
#include <memory>
#include <sstream>

#include "perfdojo/sites.hpp"
#include "perfdojo/validate.hpp"

namespace perfdojo {

struct TransformMove {
  std::string transform;
  SiteRef site;
  std::string param;  // empty when the transformation takes none

  std::string str() const {
    std::string s = transform + " " + format_site(site);
    if (!param.empty()) s += " " + param;
    return s;
  }
  bool operator==(const TransformMove&) const = default;
};

inline TransformMove parse_move(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::string id, site, param, extra;
  if (!(in >> id >> site)) throw Error(ErrorCode::Syntax, "move needs '<transform> <site> [param]'");
  in >> param;
  if (in >> extra) throw Error(ErrorCode::Syntax, "trailing text in move '" + std::string(line) + "'");
  return TransformMove{id, parse_site(site), param};
}

struct Transformation {
  std::string id;
  /// Candidate moves that pass this transformation's own legality test.
  std::function<std::vector<TransformMove>(const Program&, const EngineConfig&)> candidates;
  /// Rewrite for a candidate move; no legality checking.
  std::function<Program(const Program&, const TransformMove&, const EngineConfig&)> rewrite;
  /// Small program on which at least one move must be enumerated.
  std::string self_test;
};

namespace transforms_detail {

inline void rewrite_depths(Node& n, const std::function<AffineExpr(int)>& map) {
  std::vector<Node> tmp;
  tmp.swap(n.children);
  for_each_op(tmp, [&](Operation& op) { remap_depths(op, map); });
  tmp.swap(n.children);
}

inline void remap_buffer_accesses(Program& p, const BufferDecl& b, const std::function<void(ArrayAccess&)>& f) {
  for_each_op(p.root, [&](Operation& op) {
    if (b.holds(op.output.array)) f(op.output);
    op.value.mutate_accesses([&](ArrayAccess& a) {
      if (b.holds(a.array)) f(a);
    });
  });
}

template <typename F>
void for_each_node(const std::vector<Node>& nodes, NodePath& path, F&& f) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    path.push_back(i);
    f(nodes[i], path);
    if (nodes[i].is_scope()) for_each_node(nodes[i].children, path, f);
    path.pop_back();
  }
}

inline std::vector<NodePath> scope_paths(const Program& p) {
  std::vector<NodePath> out;
  for_each_scope(p, [&](const Node&, const NodePath& path) { out.push_back(path); });
  return out;
}

inline std::int64_t buffer_bytes(const Program& p, const BufferDecl& b) {
  return b.footprint_elements(p.dims) * static_cast<std::int64_t>(dtype_size(b.dtype));
}

inline std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool same_shape(const Program& p, const BufferDecl& a, const BufferDecl& b) {
  if (a.shape.size() != b.shape.size()) return false;
  for (std::size_t j = 0; j < a.shape.size(); ++j) {
    if (a.shape[j].materialized != b.shape[j].materialized || a.shape[j].pad != b.shape[j].pad) return false;
    if (a.shape[j].extent.try_value(p.dims) != b.shape[j].extent.try_value(p.dims)) return false;
  }
  return true;
}

// ---------------------------------------------------------------- loops

inline std::vector<TransformMove> join_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& path : scope_paths(p)) {
    const auto& sibs = sibling_list(p.root, path);
    std::size_t i = path.back();
    if (i + 1 >= sibs.size()) continue;
    const Node& a = sibs[i];
    const Node& b = sibs[i + 1];
    if (!b.is_scope() || a.suffix != Suffix::None || b.suffix != Suffix::None) continue;
    auto ea = a.extent.try_value(p.dims), eb = b.extent.try_value(p.dims);
    if (!ea || ea != eb) continue;
    NodePath next = path;
    next.back() = i + 1;
    int d = static_cast<int>(path.size()) - 1;
    bool ok = true;
    for_each_conflict(p, leaves_under(p, path), leaves_under(p, next), false,
                      [&](const AccessSite& x, const AccessSite& y) {
                        if (ok && !proves_same_iteration(p, *x.access, *y.access, d)) ok = false;
                      });
    if (ok) out.push_back({"join_scopes", site_of_node(p, path), ""});
  }
  return out;
}

inline Program join_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  NodePath path = resolve_node(q, m.site);
  auto& sibs = sibling_list(q.root, path);
  std::size_t i = path.back();
  Node next = std::move(sibs.at(i + 1));
  sibs.erase(sibs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  for (auto& c : next.children) sibs[i].children.push_back(std::move(c));
  return q;
}

inline std::vector<TransformMove> split_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& path : scope_paths(p)) {
    const Node& s = node_at(p.root, path);
    if (s.suffix != Suffix::None) continue;
    auto e = s.extent.try_value(p.dims);
    if (!e) continue;
    SiteRef site = site_of_node(p, path);
    for (std::int64_t f = 2; f < *e; ++f)
      if (*e % f == 0) out.push_back({"split_scope", site, std::to_string(f)});
  }
  return out;
}

inline Program split_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  NodePath path = resolve_node(q, m.site);
  Node& s = node_at(q.root, path);
  std::int64_t f = *parse_int(m.param);
  int d = static_cast<int>(path.size()) - 1;
  rewrite_depths(s, [&](int k) {
    if (k < d) return AffineExpr::index(k);
    if (k > d) return AffineExpr::index(k + 1);
    AffineExpr e{{AffineTerm{f, "", d}, AffineTerm{1, "", d + 1}}};
    e.normalize();
    return e;
  });
  Node inner = Node::scope(Extent::constant(f), std::move(s.children));
  s.extent = s.extent.divided(f);
  s.children.clear();
  s.children.push_back(std::move(inner));
  return q;
}

inline std::vector<TransformMove> reorder_scope_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& path : scope_paths(p)) {
    const Node& s = node_at(p.root, path);
    if (s.children.size() != 1 || !s.children[0].is_scope()) continue;
    if (s.suffix != Suffix::None || s.children[0].suffix != Suffix::None) continue;
    int d = static_cast<int>(path.size()) - 1;
    auto ls = leaves_under(p, path);
    bool ok = true;
    for_each_conflict(p, ls, ls, true, [&](const AccessSite& x, const AccessSite& y) {
      if (!ok) return;
      if (!proves_same_iteration(p, *x.access, *y.access, d) &&
          !proves_same_iteration(p, *x.access, *y.access, d + 1, d))
        ok = false;
    });
    if (ok) out.push_back({"reorder_scopes", site_of_node(p, path), ""});
  }
  return out;
}

inline Program reorder_scope_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  NodePath path = resolve_node(q, m.site);
  Node& s = node_at(q.root, path);
  Node& c = s.children.at(0);
  int d = static_cast<int>(path.size()) - 1;
  std::swap(s.extent, c.extent);
  rewrite_depths(c, [&](int k) {
    if (k == d) return AffineExpr::index(d + 1);
    if (k == d + 1) return AffineExpr::index(d);
    return AffineExpr::index(k);
  });
  return q;
}

inline std::vector<TransformMove> reorder_instr_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  NodePath path;
  for_each_node(p.root, path, [&](const Node&, const NodePath& at) {
    const auto& sibs = sibling_list(p.root, at);
    if (at.back() + 1 >= sibs.size()) return;
    NodePath next = at;
    next.back() += 1;
    int common = static_cast<int>(at.size()) - 1;
    bool ok = true;
    for_each_conflict(p, leaves_under(p, at), leaves_under(p, next), false,
                      [&](const AccessSite& x, const AccessSite& y) {
                        if (ok && !proves_disjoint(p, *x.access, *y.access, common)) ok = false;
                      });
    if (ok) out.push_back({"reorder_instructions", site_of_node(p, at), ""});
  });
  return out;
}

inline Program reorder_instr_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  NodePath path = resolve_node(q, m.site);
  auto& sibs = sibling_list(q.root, path);
  std::swap(sibs.at(path.back()), sibs.at(path.back() + 1));
  return q;
}

// ---------------------------------------------------------------- suffixes

inline std::vector<TransformMove> set_suffix_candidates(const Program& p, const EngineConfig& cfg) {
  std::vector<Suffix> kinds{Suffix::Unroll, Suffix::Parallel, Suffix::Vector};
  if (cfg.gpu_suffixes) kinds.insert(kinds.end(), {Suffix::Grid, Suffix::Block, Suffix::Warp});
  std::vector<TransformMove> out;
  for (const auto& path : scope_paths(p)) {
    if (node_at(p.root, path).suffix != Suffix::None) continue;
    SiteRef site = site_of_node(p, path);
    for (Suffix k : kinds)
      if (!suffix_violation(p, path, k, cfg)) out.push_back({"set_suffix", site, std::string(1, suffix_char(k))});
  }
  return out;
}

inline Program set_suffix_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  node_at(q.root, resolve_node(q, m.site)).suffix = *suffix_from_char(m.param.at(0));
  return q;
}

inline std::vector<TransformMove> clear_suffix_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& path : scope_paths(p))
    if (node_at(p.root, path).suffix != Suffix::None) out.push_back({"clear_suffix", site_of_node(p, path), ""});
  return out;
}

inline Program clear_suffix_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  node_at(q.root, resolve_node(q, m.site)).suffix = Suffix::None;
  return q;
}

// ---------------------------------------------------------------- buffers

inline std::vector<TransformMove> reuse_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& b : p.buffers)
    for (std::size_t j = 0; j < b.shape.size(); ++j)
      if (b.shape[j].materialized && !reuse_violation(p, b.name, j))
        out.push_back({"reuse_dims", BufferDimSite{b.name, j}, ""});
  return out;
}

inline Program reuse_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  const auto& site = std::get<BufferDimSite>(m.site);
  auto& dim = q.buffer_named(site.buffer)->shape.at(site.dim);
  dim.materialized = false;
  dim.pad = 0;
  return q;
}

inline std::vector<TransformMove> materialize_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& b : p.buffers)
    for (std::size_t j = 0; j < b.shape.size(); ++j)
      if (!b.shape[j].materialized) out.push_back({"materialize_dims", BufferDimSite{b.name, j}, ""});
  return out;
}

inline Program materialize_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  const auto& site = std::get<BufferDimSite>(m.site);
  q.buffer_named(site.buffer)->shape.at(site.dim).materialized = true;
  return q;
}

inline std::vector<TransformMove> reorder_dims_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& b : p.buffers) {
    if (p.is_interface_buffer(b)) continue;
    for (std::size_t j = 0; j + 1 < b.shape.size(); ++j) out.push_back({"reorder_buffer_dims", BufferDimSite{b.name, j}, ""});
  }
  return out;
}

inline Program reorder_dims_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  const auto& site = std::get<BufferDimSite>(m.site);
  BufferDecl& b = *q.buffer_named(site.buffer);
  std::size_t j = site.dim;
  std::swap(b.shape.at(j), b.shape.at(j + 1));
  remap_buffer_accesses(q, b, [&](ArrayAccess& a) { std::swap(a.indices.at(j), a.indices.at(j + 1)); });
  return q;
}

inline std::vector<TransformMove> pad_candidates(const Program& p, const EngineConfig& cfg) {
  std::vector<TransformMove> out;
  for (const auto& b : p.buffers) {
    if (p.is_interface_buffer(b)) continue;
    for (std::size_t j = 0; j < b.shape.size(); ++j) {
      const BufferDim& d = b.shape[j];
      if (!d.materialized || d.pad != 0) continue;
      auto e = d.extent.try_value(p.dims);
      if (!e) continue;
      for (std::int64_t mult : cfg.pad_multiples)
        if (mult > 1 && *e % mult != 0) out.push_back({"pad_dim", BufferDimSite{b.name, j}, std::to_string(mult)});
    }
  }
  return out;
}

inline Program pad_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  const auto& site = std::get<BufferDimSite>(m.site);
  q.buffer_named(site.buffer)->shape.at(site.dim).pad = *parse_int(m.param);
  return q;
}

inline std::vector<TransformMove> location_candidates(const Program& p, const EngineConfig& cfg) {
  std::vector<TransformMove> out;
  for (const auto& b : p.buffers) {
    if (p.is_interface_buffer(b)) continue;
    if (b.location == Location::Stack)
      out.push_back({"set_location", BufferSite{b.name}, "heap"});
    else if (buffer_bytes(p, b) <= cfg.stack_limit_bytes)
      out.push_back({"set_location", BufferSite{b.name}, "stack"});
  }
  return out;
}

inline Program location_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  q.buffer_named(std::get<BufferSite>(m.site).buffer)->location =
      m.param == "stack" ? Location::Stack : Location::Heap;
  return q;
}

inline std::vector<TransformMove> share_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (std::size_t i = 0; i < p.buffers.size(); ++i) {
    const BufferDecl& a = p.buffers[i];
    if (p.is_interface_buffer(a)) continue;
    for (std::size_t k = i + 1; k < p.buffers.size(); ++k) {
      const BufferDecl& b = p.buffers[k];
      if (p.is_interface_buffer(b) || a.dtype != b.dtype || a.location != b.location || !same_shape(p, a, b)) continue;
      out.push_back({"share_buffer", BufferSite{a.name}, b.name});
    }
  }
  return out;
}

inline Program share_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  BufferDecl& a = *q.buffer_named(std::get<BufferSite>(m.site).buffer);
  const BufferDecl* b = q.buffer_named(m.param);
  a.arrays.insert(a.arrays.end(), b->arrays.begin(), b->arrays.end());
  std::erase_if(q.buffers, [&](const BufferDecl& x) { return x.name == m.param; });
  return q;
}

inline std::vector<TransformMove> unshare_candidates(const Program& p, const EngineConfig&) {
  std::vector<TransformMove> out;
  for (const auto& b : p.buffers) {
    if (b.arrays.size() < 2) continue;
    for (const auto& a : b.arrays)
      if (a != b.name && !p.buffer_named(a)) out.push_back({"unshare_buffer", BufferSite{b.name}, a});
  }
  return out;
}

inline Program unshare_rewrite(const Program& p, const TransformMove& m, const EngineConfig&) {
  Program q = p;
  auto it = std::find_if(q.buffers.begin(), q.buffers.end(),
                         [&](const BufferDecl& x) { return x.name == std::get<BufferSite>(m.site).buffer; });
  BufferDecl split = *it;
  split.name = m.param;
  split.arrays = {m.param};
  std::erase(it->arrays, m.param);
  q.buffers.insert(it + 1, std::move(split));
  return q;
}

}  // namespace transforms_detail

inline const std::vector<Transformation>& registry() {
  using namespace transforms_detail;
  static const std::vector<Transformation> r{
      {"clear_suffix", clear_suffix_candidates, clear_suffix_rewrite,
       "4:u z[{0}]=x[{0}]\n\nx f32 [4] heap\nz f32 [4] heap\n"},
      {"join_scopes", join_candidates, join_rewrite,
       "4 t[{0}]=x[{0}]\n4 z[{0}]=t[{0}]\n\nx f32 [4] heap\nt f32 [4] heap\nz f32 [4] heap\n"},
      {"materialize_dims", materialize_candidates, materialize_rewrite,
       "4 t[{0}]=x[{0}]\n| z[{0}]=t[{0}]\n\nx f32 [4] heap\nt f32 [4:N] heap\nz f32 [4] heap\n"},
      {"pad_dim", pad_candidates, pad_rewrite,
       "3 t[{0}]=x[{0}]\n3 z[{0}]=t[{0}]\n\nx f32 [3] heap\nt f32 [3] heap\nz f32 [3] heap\n"},
      {"reorder_buffer_dims", reorder_dims_candidates, reorder_dims_rewrite,
       "2 3 t[{0},{1}]=x[{0},{1}]\n2 3 z[{0},{1}]=t[{0},{1}]\n\nx f32 [2,3] heap\nt f32 [2,3] heap\nz f32 [2,3] heap\n"},
      {"reorder_instructions", reorder_instr_candidates, reorder_instr_rewrite,
       "4 y[{0}]=x[{0}]\n4 z[{0}]=x[{0}]\n\nx f32 [4] heap\ny f32 [4] heap\nz f32 [4] heap\n"},
      {"reorder_scopes", reorder_scope_candidates, reorder_scope_rewrite,
       "2 3 z[{0},{1}]=x[{0},{1}]\n\nx f32 [2,3] heap\nz f32 [2,3] heap\n"},
      {"reuse_dims", reuse_candidates, reuse_rewrite,
       "4 t[{0}]=x[{0}]\n| z[{0}]=t[{0}]\n\nx f32 [4] heap\nt f32 [4] heap\nz f32 [4] heap\n"},
      {"set_location", location_candidates, location_rewrite,
       "4 t[{0}]=x[{0}]\n4 z[{0}]=t[{0}]\n\nx f32 [4] heap\nt f32 [4] heap\nz f32 [4] heap\n"},
      {"set_suffix", set_suffix_candidates, set_suffix_rewrite,
       "4 z[{0}]=x[{0}]\n\nx f32 [4] heap\nz f32 [4] heap\n"},
      {"share_buffer", share_candidates, share_rewrite,
       "4 t[{0}]=x[{0}]\n4 y[{0}]=t[{0}]\n4 u[{0}]=x[{0}]\n4 z[{0}]=u[{0}]\n\nx f32 [4] heap\nt f32 [4] heap\n"
       "u f32 [4] heap\ny f32 [4] heap\nz f32 [4] heap\n"},
      {"split_scope", split_candidates, split_rewrite,
       "8 z[{0}]=x[{0}]\n\nx f32 [8] heap\nz f32 [8] heap\n"},
      {"unshare_buffer", unshare_candidates, unshare_rewrite,
       "4 t[{0}]=x[{0}]\n4 y[{0}]=t[{0}]\n4 u[{0}]=x[{0}]\n4 z[{0}]=u[{0}]\n\nx f32 [4] heap\n"
       "t f32 [4] heap -> t, u\ny f32 [4] heap\nz f32 [4] heap\n"},
  };
  return r;
}

inline const Transformation* find_transformation(std::string_view id) {
  for (const auto& t : registry())
    if (t.id == id) return &t;
  return nullptr;
}

struct MoveResult {
  TransformMove move;
  std::shared_ptr<const Program> result;
};

inline void sort_moves(std::vector<MoveResult>& ms) {
  std::sort(ms.begin(), ms.end(), [](const MoveResult& a, const MoveResult& b) {
    auto ka = std::make_tuple(a.move.transform, format_site(a.move.site), a.move.param);
    auto kb = std::make_tuple(b.move.transform, format_site(b.move.site), b.move.param);
    return ka < kb;
  });
}

inline std::vector<MoveResult> enumerate_transformation(const Program& p, const Transformation& t,
                                                        const EngineConfig& cfg) {
  std::vector<MoveResult> out;
  for (auto& m : t.candidates(p, cfg)) {
    auto q = std::make_shared<const Program>(t.rewrite(p, m, cfg));
    if (is_valid(*q, cfg)) out.push_back({std::move(m), std::move(q)});
  }
  return out;
}

/// Every applicable move together with the program it produces.
inline std::vector<MoveResult> enumerate_with_results(const Program& p, const EngineConfig& cfg = {}) {
  std::vector<MoveResult> out;
  for (const auto& t : registry()) {
    auto part = enumerate_transformation(p, t, cfg);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  sort_moves(out);
  return out;
}

inline std::vector<TransformMove> enumerate_moves(const Program& p, const EngineConfig& cfg = {}) {
  std::vector<TransformMove> out;
  for (auto& r : enumerate_with_results(p, cfg)) out.push_back(std::move(r.move));
  return out;
}

/// Applies `m`; throws InapplicableMove or ParamOutOfDomain unless `m` is
/// currently enumerated.
inline Program apply_move(const Program& p, const TransformMove& m, const EngineConfig& cfg = {}) {
  const Transformation* t = find_transformation(m.transform);
  if (!t) throw Error(ErrorCode::InapplicableMove, "unknown transformation '" + m.transform + "'");
  SiteRef site = m.site;
  if (std::holds_alternative<ScopeSite>(site) || std::holds_alternative<LeafSite>(site))
    site = site_of_node(p, resolve_node(p, site));
  else
    resolve_buffer(p, site);
  bool site_seen = false;
  for (const auto& c : t->candidates(p, cfg)) {
    if (c.site != site) continue;
    site_seen = true;
    if (c.param != m.param) continue;
    Program q = t->rewrite(p, c, cfg);
    auto v = validate(q, cfg);
    if (!v.empty()) throw Error(ErrorCode::InapplicableMove, m.str() + ": " + v.front().message);
    return q;
  }
  if (site_seen) throw Error(ErrorCode::ParamOutOfDomain, "parameter '" + m.param + "' not allowed for " + m.str());
  throw Error(ErrorCode::InapplicableMove, "'" + m.str() + "' is not applicable");
}

inline Program apply_move(const Program& p, std::string_view line, const EngineConfig& cfg = {}) {
  return apply_move(p, parse_move(line), cfg);
}

}  // namespace perfdojo
