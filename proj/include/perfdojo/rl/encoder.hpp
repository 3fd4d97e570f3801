#pragma once

// Program embeddings for the agent: a fixed-width vector of structural
// features, plus the before/after concatenation used as an action.

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "perfdojo/ir.hpp"

namespace perfdojo::rl {

using Vector = Eigen::VectorXd;

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int dimension() const = 0;
  virtual std::string id() const = 0;
  virtual Vector encode(const Program& p) const = 0;
};

/// Hand-written structural features, zero padded to 64 entries.
class FeatureEncoder : public Encoder {
 public:
  static constexpr int kDimension = 64;
  static constexpr int kDepths = 8;
  static constexpr int kBuffers = 8;

  int dimension() const override { return kDimension; }
  std::string id() const override { return "features-v1"; }

  Vector encode(const Program& p) const override {
    Vector v = Vector::Zero(kDimension);
    auto lg = [](double x) { return std::log2(1.0 + x) / 8.0; };

    int scopes = 0, leaves = 0, max_depth = 0;
    std::array<int, kDepths> depth_hist{};
    std::array<double, kDepths> depth_log_extent{};
    std::array<int, 7> suffixes{};
    std::array<int, 2> op_kinds{};
    std::array<int, 10> expr_kinds{};
    double iterations = 0;

    std::function<void(const Expr&)> walk_expr = [&](const Expr& e) {
      ++expr_kinds[static_cast<std::size_t>(e.kind)];
      for (const auto& a : e.args) walk_expr(a);
    };
    std::function<void(const std::vector<Node>&, int, double)> walk = [&](const std::vector<Node>& nodes, int depth,
                                                                          double trips) {
      for (const auto& n : nodes) {
        if (n.is_leaf()) {
          ++leaves;
          ++op_kinds[n.op.kind == OpKind::Accumulate ? 1 : 0];
          walk_expr(n.op.value);
          iterations += trips;
          continue;
        }
        ++scopes;
        max_depth = std::max(max_depth, depth + 1);
        double e = static_cast<double>(n.extent.value(p.dims));
        if (depth < kDepths) {
          ++depth_hist[static_cast<std::size_t>(depth)];
          depth_log_extent[static_cast<std::size_t>(depth)] += std::log2(e);
        }
        ++suffixes[static_cast<std::size_t>(n.suffix)];
        walk(n.children, depth + 1, trips * e);
      }
    };
    walk(p.root, 0, 1.0);

    int k = 0;
    v[k++] = lg(scopes);
    v[k++] = lg(leaves);
    v[k++] = max_depth / 8.0;
    for (int d = 0; d < kDepths; ++d) v[k++] = lg(depth_hist[static_cast<std::size_t>(d)]);
    for (int s : suffixes) v[k++] = lg(s);
    for (int o : op_kinds) v[k++] = lg(o);
    for (int e : expr_kinds) v[k++] = lg(e);

    double total_bytes = 0;
    int dims = 0, materialized = 0, stack = 0, shared = 0, padded = 0;
    for (std::size_t i = 0; i < p.buffers.size(); ++i) {
      const BufferDecl& b = p.buffers[i];
      double bytes = static_cast<double>(b.footprint_elements(p.dims)) * static_cast<double>(dtype_size(b.dtype));
      total_bytes += bytes;
      if (i < kBuffers) v[k + static_cast<int>(i)] = std::log2(1.0 + bytes) / 16.0;
      for (const auto& d : b.shape) {
        ++dims;
        materialized += d.materialized ? 1 : 0;
        padded += d.pad > 1 ? 1 : 0;
      }
      stack += b.location == Location::Stack ? 1 : 0;
      shared += b.arrays.size() > 1 ? 1 : 0;
    }
    k += kBuffers;
    v[k++] = std::log2(1.0 + total_bytes) / 16.0;
    v[k++] = dims ? static_cast<double>(materialized) / dims : 1.0;
    v[k++] = lg(stack);
    v[k++] = lg(static_cast<double>(p.buffers.size()));
    for (int d = 0; d < kDepths; ++d) {
      int n = depth_hist[static_cast<std::size_t>(d)];
      v[k++] = n ? depth_log_extent[static_cast<std::size_t>(d)] / n / 8.0 : 0.0;
    }
    v[k++] = std::log2(1.0 + iterations) / 16.0;
    v[k++] = lg(shared);
    v[k++] = lg(padded);
    return v;
  }
};

/// Action embedding [before ‖ after]; the stop action repeats `before`.
inline Vector action_embedding(const Vector& before, const Vector& after) {
  Vector a(before.size() + after.size());
  a << before, after;
  return a;
}

}  // namespace perfdojo::rl
