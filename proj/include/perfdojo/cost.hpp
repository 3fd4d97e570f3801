#pragma once

// Abstract-machine cost: scalar operations, bytes of distinct storage
// touched, and loop-header executions, combined with fixed weights.

#include <mutex>
#include <unordered_map>

#include "perfdojo/text.hpp"

namespace perfdojo {

struct MachineConfig {
  int vector_width = 4;
  int cores = 4;
  double op_weight = 1.0;
  double byte_weight = 0.25;
  double overhead_weight = 2.0;
};

struct CostReport {
  double scalar_ops = 0;
  double memory_traffic = 0;
  double loop_overhead = 0;
  double modeled_cost = 0;
  std::optional<double> measured_seconds;
};

namespace cost_detail {

struct Totals {
  double ops = 0, overhead = 0;          // raw counts
  double ops_w = 0, overhead_w = 0;     // after parallel scaling
};

/// Costs of one execution of `n`.
inline Totals node_cost(const Node& n, const DimBindings& dims, const MachineConfig& m) {
  Totals t;
  if (n.is_leaf()) {
    t.ops = t.ops_w = n.op.arithmetic_ops();
    return t;
  }
  Totals body;
  for (const auto& c : n.children) {
    Totals x = node_cost(c, dims, m);
    body.ops += x.ops;
    body.overhead += x.overhead;
    body.ops_w += x.ops_w;
    body.overhead_w += x.overhead_w;
  }
  double e = static_cast<double>(n.extent.value(dims));
  double raw = e, scaled = e, headers = e;
  switch (n.suffix) {
    case Suffix::Vector:
      raw = scaled = std::ceil(e / m.vector_width);
      headers = 1;
      break;
    case Suffix::Unroll: headers = 0; break;
    case Suffix::Parallel: scaled = std::ceil(e / m.cores); break;
    default: break;
  }
  t.ops = raw * body.ops;
  t.overhead = e * body.overhead + headers;
  t.ops_w = scaled * body.ops_w;
  t.overhead_w = scaled * body.overhead_w + (n.suffix == Suffix::Parallel ? std::ceil(headers / m.cores) : headers);
  return t;
}

}  // namespace cost_detail

inline CostReport cost(const Program& p, const MachineConfig& m = {}) {
  CostReport r;
  cost_detail::Totals t;
  for (const auto& n : p.root) {
    auto x = cost_detail::node_cost(n, p.dims, m);
    t.ops += x.ops;
    t.overhead += x.overhead;
    t.ops_w += x.ops_w;
    t.overhead_w += x.overhead_w;
  }
  std::vector<std::string> touched;
  for (const auto& l : leaves(p)) {
    touched.push_back(l.op->output.array);
    l.op->value.visit_accesses([&](const ArrayAccess& a) { touched.push_back(a.array); });
  }
  for (const auto& b : p.buffers) {
    if (std::none_of(touched.begin(), touched.end(), [&](const std::string& a) { return b.holds(a); })) continue;
    double elems = 1;
    for (const auto& d : b.shape)
      if (d.materialized) elems *= static_cast<double>(d.logical(p.dims));
    r.memory_traffic += elems * static_cast<double>(dtype_size(b.dtype));
  }
  r.scalar_ops = t.ops;
  r.loop_overhead = t.overhead;
  r.modeled_cost = m.op_weight * t.ops_w + m.byte_weight * r.memory_traffic + m.overhead_weight * t.overhead_w;
  return r;
}

/// Source of the runtime signal T used by searches and the agent.
class RuntimeProvider {
 public:
  virtual ~RuntimeProvider() = default;
  virtual double runtime(const Program& p) = 0;
  virtual std::string name() const = 0;
};

class CostModelProvider : public RuntimeProvider {
 public:
  explicit CostModelProvider(MachineConfig m = {}) : m_(m) {}
  double runtime(const Program& p) override { return cost(p, m_).modeled_cost; }
  std::string name() const override { return "cost-model"; }
  const MachineConfig& machine() const { return m_; }

 private:
  MachineConfig m_;
};

/// Memoizes another provider by program text; counts distinct evaluations.
class CachingProvider : public RuntimeProvider {
 public:
  explicit CachingProvider(RuntimeProvider& inner) : inner_(inner) {}
  double runtime(const Program& p) override {
    std::string key = print_program(p);
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    double v = inner_.runtime(p);
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(std::move(key), v);
    return v;
  }
  std::string name() const override { return inner_.name(); }
  std::size_t distinct() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
  }

 private:
  RuntimeProvider& inner_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> cache_;
};

}  // namespace perfdojo
