#pragma once

// Dueling Q-network over [state ‖ action] inputs and the scalar pieces of
// the learning rule: rewards, max-Bellman and Double DQN targets, the
// dueling combination and epsilon-greedy selection.

#include <fstream>
#include <optional>
#include <random>
#include <span>

#include "perfdojo/interpreter.hpp"
#include "perfdojo/rl/encoder.hpp"

namespace perfdojo::rl {

using Matrix = Eigen::MatrixXd;

inline double reward(double runtime, double c) {
  if (!(runtime > 0)) throw Error(ErrorCode::InvalidArgument, "runtime must be positive");
  return c / runtime;
}

/// max(r, gamma * max next), or r for a terminal transition.
inline double max_bellman_target(double r, double gamma, std::span<const double> next_q, bool terminal = false) {
  if (terminal || next_q.empty()) return r;
  return std::max(r, gamma * *std::max_element(next_q.begin(), next_q.end()));
}

/// r + gamma * max next: the cumulative backup, kept for comparison.
inline double cumulative_target(double r, double gamma, std::span<const double> next_q, bool terminal = false) {
  if (terminal || next_q.empty()) return r;
  return r + gamma * *std::max_element(next_q.begin(), next_q.end());
}

inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "argmax of an empty set");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Double DQN evaluation: the action the online values rank highest, valued
/// by the target network.
inline double double_dqn_value(std::span<const double> online_q, std::span<const double> target_q) {
  if (online_q.size() != target_q.size()) throw Error(ErrorCode::ShapeMismatch, "candidate sets differ");
  return target_q[argmax(online_q)];
}

inline std::vector<double> dueling_combine(double value, std::span<const double> advantages) {
  if (advantages.empty()) throw Error(ErrorCode::InvalidArgument, "no candidate actions");
  double mean = 0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  std::vector<double> q;
  q.reserve(advantages.size());
  for (double a : advantages) q.push_back(value + a - mean);
  return q;
}

/// Argmax (lowest index on ties) with probability 1 - epsilon, otherwise a
/// uniformly drawn index.
inline std::size_t epsilon_greedy(std::span<const double> q, double epsilon, std::mt19937_64& rng) {
  if (q.empty()) throw Error(ErrorCode::InvalidArgument, "no candidate actions");
  if (epsilon < 0 || epsilon > 1) throw Error(ErrorCode::InvalidArgument, "epsilon outside [0, 1]");
  if (uniform(rng, 0, 1) < epsilon) return static_cast<std::size_t>(rng() % q.size());
  return argmax(q);
}

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double decay = 0.995;  // per episode

  double at(int episode) const { return std::max(end, start * std::pow(decay, episode)); }
};

/// Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a'). Both heads share a two-layer
/// ReLU trunk over [s ‖ a]; V reads the trunk at [s ‖ 0] so it cannot see
/// the action. Actions are passed as their after-state rows: candidate i is
/// the embedding [s ‖ after.row(i)], and the stop action's row equals s.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(int state_dim, int hidden, std::uint64_t seed) : state_dim_(state_dim), hidden_(hidden) {
    int in = input_dim();
    W1 = Matrix(hidden, in);
    W2 = Matrix(hidden, hidden);
    b1 = Vector::Zero(hidden);
    b2 = Vector::Zero(hidden);
    wv = Vector(hidden);
    wa = Vector(hidden);
    std::mt19937_64 rng(seed);
    auto fill = [&](auto& m, int fan_in) {
      double limit = std::sqrt(6.0 / fan_in);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
    };
    fill(W1, in);
    fill(W2, hidden);
    fill(wv, hidden);
    fill(wa, hidden);
  }

  int state_dim() const { return state_dim_; }
  int hidden() const { return hidden_; }
  int input_dim() const { return 3 * state_dim_; }

  /// Q for every candidate action.
  std::vector<double> q_values(const Vector& s, const Matrix& after) const {
    Forward f = forward(s, after);
    return dueling_combine(f.value, f.advantages);
  }

  /// Squared error of Q(s, candidate `taken`) against `target`; adds
  /// `scale` times its gradient into `grad`.
  double accumulate_gradient(const Vector& s, const Matrix& after, std::size_t taken, double target,
                             QNetwork& grad, double scale = 1.0) const {
    Forward f = forward(s, after);
    auto q = dueling_combine(f.value, f.advantages);
    double err = q[taken] - target;
    double g = 2.0 * err * scale;
    auto n = static_cast<Eigen::Index>(f.advantages.size());

    Matrix dH2(n + 1, hidden_);
    dH2.row(0) = g * wv.transpose();
    grad.wv += g * f.H2.row(0).transpose();
    grad.bv += g;
    for (Eigen::Index j = 0; j < n; ++j) {
      double da = g * ((static_cast<std::size_t>(j) == taken ? 1.0 : 0.0) - 1.0 / static_cast<double>(n));
      dH2.row(j + 1) = da * wa.transpose();
      grad.wa += da * f.H2.row(j + 1).transpose();
      grad.ba += da;
    }
    Matrix dZ2 = dH2.cwiseProduct((f.Z2.array() > 0).cast<double>().matrix());
    grad.W2 += dZ2.transpose() * f.H1;
    grad.b2 += dZ2.colwise().sum().transpose();
    Matrix dZ1 = (dZ2 * W2).cwiseProduct((f.Z1.array() > 0).cast<double>().matrix());
    // The input rows are [s ‖ 0 ‖ 0] and [s ‖ s ‖ after_j]; fold the shared
    // blocks instead of materializing them.
    Vector all = dZ1.colwise().sum().transpose();
    Vector acts = dZ1.bottomRows(n).colwise().sum().transpose();
    grad.W1.leftCols(state_dim_) += all * s.transpose();
    grad.W1.middleCols(state_dim_, state_dim_) += acts * s.transpose();
    grad.W1.rightCols(state_dim_) += dZ1.bottomRows(n).transpose() * f.after;
    grad.b1 += all;
    return err * err;
  }

  QNetwork zeros_like() const {
    QNetwork z = *this;
    z.scale(0.0);
    return z;
  }

  void scale(double a) {
    W1 *= a;
    W2 *= a;
    b1 *= a;
    b2 *= a;
    wv *= a;
    wa *= a;
    bv *= a;
    ba *= a;
  }

  /// this += a * other
  void axpy(double a, const QNetwork& o) {
    W1 += a * o.W1;
    W2 += a * o.W2;
    b1 += a * o.b1;
    b2 += a * o.b2;
    wv += a * o.wv;
    wa += a * o.wa;
    bv += a * o.bv;
    ba += a * o.ba;
  }

  /// Every scalar parameter, in checkpoint order.
  std::vector<double*> parameters() {
    std::vector<double*> out;
    auto add = [&](auto& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
    };
    add(W1);
    add(b1);
    add(W2);
    add(b2);
    add(wv);
    out.push_back(&bv);
    add(wa);
    out.push_back(&ba);
    return out;
  }

  bool operator==(const QNetwork& o) const {
    return state_dim_ == o.state_dim_ && hidden_ == o.hidden_ && W1 == o.W1 && W2 == o.W2 && b1 == o.b1 &&
           b2 == o.b2 && wv == o.wv && wa == o.wa && bv == o.bv && ba == o.ba;
  }

  static constexpr const char* kCheckpointHeader = "perfdojo-qnet v1";

  void save(std::ostream& out) const {
    out << kCheckpointHeader << "\n" << state_dim_ << " " << hidden_ << "\n";
    out.precision(17);
    QNetwork copy = *this;
    for (double* p : copy.parameters()) out << *p << "\n";
  }

  static QNetwork load(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != kCheckpointHeader) throw Error(ErrorCode::InvalidArgument, "not a perfdojo-qnet v1 checkpoint");
    int d = 0, h = 0;
    if (!(in >> d >> h) || d <= 0 || h <= 0) throw Error(ErrorCode::InvalidArgument, "bad checkpoint dimensions");
    QNetwork net(d, h, 0);
    for (double* p : net.parameters())
      if (!(in >> *p)) throw Error(ErrorCode::InvalidArgument, "truncated checkpoint");
    return net;
  }

  Matrix W1, W2;
  Vector b1, b2, wv, wa;
  double bv = 0, ba = 0;

 private:
  struct Forward {
    Matrix after, Z1, H1, Z2, H2;
    double value;
    std::vector<double> advantages;
  };

  Forward forward(const Vector& s, const Matrix& after) const {
    if (s.size() != state_dim_ || after.cols() != state_dim_)
      throw Error(ErrorCode::ShapeMismatch, "embedding width does not match the network");
    if (after.rows() == 0) throw Error(ErrorCode::InvalidArgument, "no candidate actions");
    Forward f;
    Eigen::Index n = after.rows();
    f.after = after;
    Vector base = W1.leftCols(state_dim_) * s + b1;
    Vector shared = base + W1.middleCols(state_dim_, state_dim_) * s;
    f.Z1 = Matrix(n + 1, hidden_);
    f.Z1.row(0) = base.transpose();
    f.Z1.bottomRows(n) = (after * W1.rightCols(state_dim_).transpose()).rowwise() + shared.transpose();
    f.H1 = f.Z1.cwiseMax(0.0);
    f.Z2 = (f.H1 * W2.transpose()).rowwise() + b2.transpose();
    f.H2 = f.Z2.cwiseMax(0.0);
    f.value = f.H2.row(0).dot(wv) + bv;
    Vector a = (f.H2.bottomRows(n) * wa).array() + ba;
    f.advantages.assign(a.data(), a.data() + a.size());
    return f;
  }

  int state_dim_ = 0;
  int hidden_ = 0;
};

struct DoubleSelection {
  std::size_t index;  // argmax under the online network
  double value;       // its value under the target network
};

inline DoubleSelection double_dqn_selection(const Vector& s, const Matrix& after, const QNetwork& online,
                                            const QNetwork& target) {
  auto oq = online.q_values(s, after);
  std::size_t i = argmax(oq);
  return {i, target.q_values(s, after)[i]};
}

}  // namespace perfdojo::rl
