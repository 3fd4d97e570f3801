#pragma once

// Iterative search over move sequences: cost-weighted sampling of all
// encountered programs and simulated annealing, each over either the edges
// of the transformation graph or heuristic refinements of whole sequences.

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include <cstdio>
#include <numeric>
#include "perfdojo/cost.hpp"
#include "perfdojo/interpreter.hpp"
#include "perfdojo/passes.hpp"

namespace perfdojo {

enum class SpaceMode { Edges, Heuristic };

inline SpaceMode space_from_string(std::string_view s) {
  if (s == "edges") return SpaceMode::Edges;
  if (s == "heuristic") return SpaceMode::Heuristic;
  throw Error(ErrorCode::InvalidArgument, "unknown search space '" + std::string(s) + "'");
}

struct TraceRow {
  int evaluation;
  double cost;
  double best;
};

struct SearchConfig {
  int budget = 500;  // evaluations after the root
  std::uint64_t seed = 1;
  SpaceMode space = SpaceMode::Heuristic;
  double beta = 1.0;
  double t0_fraction = 0.1;
  double decay = 0.98;
  int mutation_retries = 8;
  PassConfig pass;
  // Sees every trace row as it is recorded; returning false ends the search.
  std::function<bool(const TraceRow&)> observer;
};

struct SearchNode {
  History history;
  double cost;
  double parent_cost;
};

struct SearchResult {
  History best;
  double best_cost;
  double root_cost;
  std::vector<TraceRow> trace;

  /// First evaluation index whose best cost is at most `target`, or -1.
  int evaluations_to_reach(double target) const {
    for (const auto& r : trace)
      if (r.best <= target) return r.evaluation;
    return -1;
  }
};

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "evaluation,cost,best\n";
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", r.evaluation, r.cost, r.best);
    out += buf;
  }
  return out;
}

namespace search_detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline std::vector<std::string> param_domain(const Program& p, const TransformMove& m, const EngineConfig& cfg) {
  std::vector<std::string> out;
  const Transformation* t = find_transformation(m.transform);
  if (!t) return out;
  for (const auto& c : t->candidates(p, cfg))
    if (c.site == m.site && c.param != m.param) out.push_back(c.param);
  return out;
}

inline bool is_hardware(const std::string& id) {
  return id == "set_suffix" || id == "split_scope" || id == "reorder_scopes";
}

/// Replays `moves`, dropping those that no longer apply.
inline History lenient_replay(const Program& root, const std::vector<TransformMove>& moves, const EngineConfig& cfg) {
  History h(root, cfg);
  for (const auto& m : moves) {
    try {
      h.apply(m);
    } catch (const Error&) {
    }
  }
  return h;
}

/// One in-place rewrite of a complete sequence. Empty when the chosen
/// mutation had nothing to act on.
inline std::optional<std::vector<TransformMove>> mutate(const History& h, std::mt19937_64& rng,
                                                       const EngineConfig& cfg) {
  std::vector<TransformMove> moves = h.moves();
  switch (rng() % 4) {
    case 0: {  // change one move's parameter
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < moves.size(); ++i)
        if (!moves[i].param.empty()) idx.push_back(i);
      if (idx.empty()) return std::nullopt;
      std::size_t i = idx[pick(rng, idx.size())];
      auto dom = param_domain(h.at(i), moves[i], cfg);
      if (dom.empty()) return std::nullopt;
      moves[i].param = dom[pick(rng, dom.size())];
      return moves;
    }
    case 1: {  // set or clear one scope's suffix, dropping the suffixes that would forbid it
      const Program& cur = h.current();
      std::vector<NodePath> scopes;
      for_each_scope(cur, [&](const Node&, const NodePath& path) { scopes.push_back(path); });
      if (scopes.empty()) return std::nullopt;
      const NodePath path = scopes[pick(rng, scopes.size())];
      std::vector<Suffix> options{Suffix::None, Suffix::Vector, Suffix::Parallel, Suffix::Unroll};
      if (cfg.gpu_suffixes) options.insert(options.end(), {Suffix::Grid, Suffix::Block, Suffix::Warp});
      Suffix x = options[pick(rng, options.size())];
      if (node_at(cur.root, path).suffix == x) return std::nullopt;
      std::set<std::string> related;
      for (const auto& q : scopes) {
        bool self = q == path;
        bool above = q.size() < path.size() && std::equal(q.begin(), q.end(), path.begin());
        bool below = q.size() > path.size() && std::equal(path.begin(), path.end(), q.begin());
        if (self || (x != Suffix::None && (above || below))) related.insert(format_site(site_of_node(cur, q)));
      }
      std::erase_if(moves, [&](const TransformMove& m) {
        return m.transform == "set_suffix" && related.count(format_site(m.site));
      });
      if (x != Suffix::None) moves.push_back({"set_suffix", site_of_node(cur, path), std::string(1, suffix_char(x))});
      return moves;
    }
    case 2: {  // insert a hardware move at a random position
      std::size_t k = pick(rng, moves.size() + 1);
      const Program& at = h.at(k);
      std::vector<TransformMove> cands;
      for (const auto& t : registry())
        if (is_hardware(t.id))
          for (auto& m : enumerate_transformation(at, t, cfg)) cands.push_back(std::move(m.move));
      if (cands.empty()) return std::nullopt;
      moves.insert(moves.begin() + static_cast<std::ptrdiff_t>(k), cands[pick(rng, cands.size())]);
      return moves;
    }
    default: {  // remove one move
      if (moves.empty()) return std::nullopt;
      moves.erase(moves.begin() + static_cast<std::ptrdiff_t>(pick(rng, moves.size())));
      return moves;
    }
  }
}

}  // namespace search_detail

/// Neighbor generator for one search space.
class SearchSpace {
 public:
  SearchSpace(SpaceMode mode, const SearchConfig& cfg) : mode_(mode), cfg_(cfg) {}

  /// Starting point besides the root: the heuristic pass for the heuristic
  /// space, nothing for the edges space.
  std::optional<History> initial(const Program& root) const {
    if (mode_ == SpaceMode::Edges) return std::nullopt;
    return heuristic_pass(root, cfg_.pass);
  }

  std::optional<History> neighbor(const History& h, std::mt19937_64& rng) const {
    const EngineConfig& ecfg = cfg_.pass.engine;
    if (mode_ == SpaceMode::Edges) {
      auto ms = enumerate_with_results(h.current(), ecfg);
      if (ms.empty()) return std::nullopt;
      auto& m = ms[search_detail::pick(rng, ms.size())];
      History next = h;
      next.push(m.move, m.result);
      return next;
    }
    std::optional<std::vector<TransformMove>> last;
    for (int attempt = 0; attempt <= cfg_.mutation_retries; ++attempt) {
      auto moves = search_detail::mutate(h, rng, ecfg);
      if (!moves) continue;
      last = moves;
      auto r = History::replay(h.root(), *moves, ecfg);
      if (auto* ok = std::get_if<History>(&r)) return complete(std::move(*ok), rng);
    }
    if (!last) return std::nullopt;
    return complete(search_detail::lenient_replay(h.root(), *last, ecfg), rng);
  }

 private:
  // Half of the candidates are completed with every hardware suffix that
  // became legal, so a refinement can unlock suffixes elsewhere in one step.
  History complete(History h, std::mt19937_64& rng) const {
    if (rng() % 2 == 0) apply_hardware(h, cfg_.pass);
    return h;
  }

  SpaceMode mode_;
  SearchConfig cfg_;
};

/// Global sampling over every encountered program; a program is expanded
/// with probability proportional to (1 / cost of its parent)^beta.
inline SearchResult sample_search(const Program& root, RuntimeProvider& rt, const SearchConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  SearchSpace space(cfg.space, cfg);
  double c0 = rt.runtime(root);
  std::vector<SearchNode> nodes{{History(root, cfg.pass.engine), c0, c0}};
  SearchResult r{nodes[0].history, c0, c0, {}};
  int evals = 0;
  bool stopped = false;
  auto record = [&](SearchNode n) {
    ++evals;
    if (n.cost < r.best_cost) {
      r.best_cost = n.cost;
      r.best = n.history;
    }
    r.trace.push_back({evals, n.cost, r.best_cost});
    if (cfg.observer && !cfg.observer(r.trace.back())) stopped = true;
    nodes.push_back(std::move(n));
  };
  if (auto init = space.initial(root); init && !stopped && evals < cfg.budget) record({*init, rt.runtime(init->current()), c0});
  int stalls = 0;
  while (!stopped && evals < cfg.budget && stalls < 100 * std::max(1, cfg.budget)) {
    std::vector<double> w;
    for (const auto& n : nodes) w.push_back(std::pow(1.0 / n.parent_cost, cfg.beta));
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = uniform(rng, 0, total);
    std::size_t k = 0;
    while (k + 1 < w.size() && u >= w[k]) u -= w[k++];
    auto next = space.neighbor(nodes[k].history, rng);
    if (!next) {
      ++stalls;
      continue;
    }
    double parent = nodes[k].cost;
    double c = rt.runtime(next->current());
    record({std::move(*next), c, parent});
  }
  return r;
}

/// Metropolis acceptance probability for a cost change at temperature `t`.
inline double acceptance_probability(double delta, double t) {
  if (delta < 0) return 1.0;
  if (t <= 0) return 0.0;
  return std::exp(-delta / t);
}

/// Simulated annealing with Metropolis acceptance and geometric cooling;
/// a program's cost is its own runtime.
inline SearchResult anneal_search(const Program& root, RuntimeProvider& rt, const SearchConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  SearchSpace space(cfg.space, cfg);
  double c0 = rt.runtime(root);
  SearchNode cur{History(root, cfg.pass.engine), c0, c0};
  SearchResult r{cur.history, c0, c0, {}};
  double temp = cfg.t0_fraction * c0;
  int evals = 0;
  bool stopped = false;
  auto observe = [&](const History& h, double c) {
    ++evals;
    if (c < r.best_cost) {
      r.best_cost = c;
      r.best = h;
    }
    r.trace.push_back({evals, c, r.best_cost});
    if (cfg.observer && !cfg.observer(r.trace.back())) stopped = true;
  };
  if (auto init = space.initial(root); init && !stopped && evals < cfg.budget) {
    double c = rt.runtime(init->current());
    observe(*init, c);
    cur = {*init, c, c0};
  }
  int stalls = 0;
  while (!stopped && evals < cfg.budget && stalls < 100 * std::max(1, cfg.budget)) {
    auto next = space.neighbor(cur.history, rng);
    if (!next) {
      ++stalls;
      cur = {History(root, cfg.pass.engine), c0, c0};
      continue;
    }
    double c = rt.runtime(next->current());
    observe(*next, c);
    double delta = c - cur.cost;
    bool accept = delta < 0 || uniform(rng, 0, 1) < acceptance_probability(delta, temp);
    if (accept) cur = {std::move(*next), c, cur.cost};
    temp *= cfg.decay;
  }
  return r;
}

inline SearchResult run_search(const std::string& method, const Program& root, RuntimeProvider& rt,
                               const SearchConfig& cfg) {
  if (method == "sample") return sample_search(root, rt, cfg);
  if (method == "anneal") return anneal_search(root, rt, cfg);
  throw Error(ErrorCode::InvalidArgument, "unknown search method '" + method + "'");
}

}  // namespace perfdojo
