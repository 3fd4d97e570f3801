#pragma once

// One-shot optimization passes built from registry moves.

#include "perfdojo/history.hpp"

namespace perfdojo {

struct PassConfig {
  EngineConfig engine;
  /// Suffixes applied exhaustively, in this order, after the structural part.
  std::vector<Suffix> hardware{Suffix::Vector, Suffix::Parallel, Suffix::Unroll};
  std::int64_t tile = 4;
};

namespace passes_detail {

/// First enumerated move of `transform` (optionally with `param`), applied.
inline bool apply_first(History& h, const std::string& transform, const std::string& param = "") {
  const Transformation* t = find_transformation(transform);
  auto ms = enumerate_transformation(h.current(), *t, h.config());
  sort_moves(ms);
  for (auto& m : ms) {
    if (!param.empty() && m.move.param != param) continue;
    h.push(std::move(m.move), std::move(m.result));
    return true;
  }
  return false;
}

inline bool try_apply(History& h, const TransformMove& m) {
  try {
    h.apply(m);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace passes_detail

/// Fuses and reuses as much as possible.
inline History naive_pass(const Program& p, const PassConfig& cfg = {}) {
  History h(p, cfg.engine);
  while (passes_detail::apply_first(h, "join_scopes") || passes_detail::apply_first(h, "reuse_dims")) {
  }
  return h;
}

/// Applies every configured hardware suffix wherever it is legal.
inline void apply_hardware(History& h, const PassConfig& cfg) {
  for (Suffix s : cfg.hardware)
    while (passes_detail::apply_first(h, "set_suffix", std::string(1, suffix_char(s)))) {
    }
}

inline History greedy_pass(const Program& p, const PassConfig& cfg = {}) {
  History h = naive_pass(p, cfg);
  apply_hardware(h, cfg);
  return h;
}

/// Tiles each root nest's outermost scope by `cfg.tile`, sinks the tile
/// scope as deep as the nest allows, unrolls it, then runs the hardware
/// moves of the greedy pass.
inline void heuristic_tiling(History& h, const PassConfig& cfg) {
  for (std::size_t i = 0; i < h.current().root.size(); ++i) {
    const Node& nest = h.current().root[i];
    if (!nest.is_scope() || nest.suffix != Suffix::None) continue;
    auto e = nest.extent.try_value(h.current().dims);
    if (!e || *e <= cfg.tile || *e % cfg.tile != 0) continue;
    NodePath path{i};
    if (!passes_detail::try_apply(h, {"split_scope", site_of_node(h.current(), path), std::to_string(cfg.tile)}))
      continue;
    path.push_back(0);
    while (true) {
      const Node& s = node_at(h.current().root, path);
      if (s.children.size() != 1 || !s.children[0].is_scope()) break;
      if (!passes_detail::try_apply(h, {"reorder_scopes", site_of_node(h.current(), path), ""})) break;
      path.push_back(0);
    }
    passes_detail::try_apply(h, {"set_suffix", site_of_node(h.current(), path), "u"});
  }
}

inline History heuristic_pass(const Program& p, const PassConfig& cfg = {}) {
  History h = naive_pass(p, cfg);
  heuristic_tiling(h, cfg);
  apply_hardware(h, cfg);
  return h;
}

inline History run_pass(const std::string& name, const Program& p, const PassConfig& cfg = {}) {
  if (name == "naive") return naive_pass(p, cfg);
  if (name == "greedy") return greedy_pass(p, cfg);
  if (name == "heuristic") return heuristic_pass(p, cfg);
  throw Error(ErrorCode::InvalidArgument, "unknown pass '" + name + "'");
}

/// Scope extents along the leftmost chain of a nest, with suffix letters.
inline std::string nest_shape(const Program& p, const Node& n) {
  std::string out = "[";
  const Node* s = &n;
  bool first = true;
  while (s && s->is_scope()) {
    if (!first) out += ",";
    first = false;
    out += std::to_string(s->extent.value(p.dims));
    if (s->suffix != Suffix::None) out += std::string(":") + suffix_char(s->suffix);
    s = s->children.size() == 1 ? &s->children[0] : nullptr;
  }
  return out + "]";
}

}  // namespace perfdojo
