#pragma once

// Max-Q learning over the transformation game: environments, the replay
// buffer, the DQN training loop, and a tabular reference for small
// scripted MDPs.

#include <limits>
#include <memory>
#include <unordered_map>

#include "perfdojo/cost.hpp"
#include "perfdojo/history.hpp"
#include "perfdojo/rl/qnet.hpp"

namespace perfdojo::rl {

enum class Backup { MaxBellman, Cumulative };

inline double backup_target(Backup b, double r, double gamma, std::span<const double> next_q, bool terminal) {
  return b == Backup::MaxBellman ? max_bellman_target(r, gamma, next_q, terminal)
                                 : cumulative_target(r, gamma, next_q, terminal);
}

/// One state as the agent sees it. Row i of `after` is the embedding of the
/// program candidate i leads to; in program environments row 0 is the stop
/// action and repeats `state`.
struct Observation {
  Vector state;
  Matrix after;

  std::size_t candidates() const { return static_cast<std::size_t>(after.rows()); }
  Vector action(std::size_t i) const { return action_embedding(state, after.row(static_cast<Eigen::Index>(i)).transpose()); }
};
using ObservationPtr = std::shared_ptr<const Observation>;

struct Transition {
  ObservationPtr state;
  std::size_t action = 0;
  double reward = 0;
  ObservationPtr next;  // null for terminal transitions

  bool terminal() const { return !next; }
};

/// Fixed-capacity ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error(ErrorCode::InvalidArgument, "replay capacity must be positive");
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_.at(i); }

  std::size_t sample_index(std::mt19937_64& rng) const {
    if (data_.empty()) throw Error(ErrorCode::InvalidArgument, "sampling an empty replay buffer");
    return static_cast<std::size_t>(rng() % data_.size());
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

struct StepOutcome {
  double reward = 0;
  ObservationPtr next;  // null when the episode ended
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int state_dim() const = 0;
  virtual ObservationPtr reset() = 0;
  virtual StepOutcome step(std::size_t action) = 0;
};

// ---------------------------------------------------------------------------
// Tabular MDPs

struct TabularAction {
  std::string name;
  double reward;
  int next;  // -1 ends the episode
};

struct TabularMdp {
  std::vector<std::string> states;
  std::vector<std::vector<TabularAction>> actions;  // per state; empty means terminal
  int start = 0;

  /// Stopping at S0 pays 1.0; the alternative pays -0.5 and leads to S1,
  /// whose only move pays 1.2 and ends in terminal S2.
  static TabularMdp peak_reward_example() {
    TabularMdp m;
    m.states = {"S0", "S1", "S2"};
    m.actions = {{{"stop", 1.0, -1}, {"path", -0.5, 1}}, {{"go", 1.2, 2}}, {}};
    return m;
  }
};

using QTable = std::vector<std::vector<double>>;

namespace agent_detail {

inline std::vector<double> next_values(const QTable& q, int next) {
  if (next < 0) return {};
  return q[static_cast<std::size_t>(next)];
}

}  // namespace agent_detail

inline QTable value_iteration(const TabularMdp& m, double gamma, Backup backup, double tol = 1e-14,
                              int max_iterations = 100000) {
  QTable q(m.states.size());
  for (std::size_t s = 0; s < m.states.size(); ++s) q[s].assign(m.actions[s].size(), 0.0);
  for (int it = 0; it < max_iterations; ++it) {
    double delta = 0;
    QTable nq = q;
    for (std::size_t s = 0; s < m.states.size(); ++s)
      for (std::size_t a = 0; a < m.actions[s].size(); ++a) {
        const auto& act = m.actions[s][a];
        auto nv = agent_detail::next_values(q, act.next);
        nq[s][a] = backup_target(backup, act.reward, gamma, nv, nv.empty());
        delta = std::max(delta, std::abs(nq[s][a] - q[s][a]));
      }
    q = std::move(nq);
    if (delta < tol) break;
  }
  return q;
}

/// Epsilon-greedy tabular Q-learning with a constant step size.
inline QTable tabular_q_learning(const TabularMdp& m, double gamma, Backup backup, int episodes, double alpha,
                                 double epsilon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QTable q(m.states.size());
  for (std::size_t s = 0; s < m.states.size(); ++s) q[s].assign(m.actions[s].size(), 0.0);
  for (int ep = 0; ep < episodes; ++ep) {
    int s = m.start;
    for (int steps = 0; s >= 0 && !m.actions[static_cast<std::size_t>(s)].empty() && steps < 1000; ++steps) {
      auto& qs = q[static_cast<std::size_t>(s)];
      std::size_t a = epsilon_greedy(qs, epsilon, rng);
      const auto& act = m.actions[static_cast<std::size_t>(s)][a];
      auto nv = agent_detail::next_values(q, act.next);
      double y = backup_target(backup, act.reward, gamma, nv, nv.empty());
      qs[a] += alpha * (y - qs[a]);
      s = act.next;
    }
  }
  return q;
}

/// A tabular MDP presented through the agent's interface, with one-hot
/// state embeddings.
class ScriptedEnvironment : public Environment {
 public:
  explicit ScriptedEnvironment(TabularMdp m) : m_(std::move(m)) {
    int n = static_cast<int>(m_.states.size());
    for (int s = 0; s < n; ++s) {
      auto o = std::make_shared<Observation>();
      o->state = one_hot(s);
      const auto& acts = m_.actions[static_cast<std::size_t>(s)];
      o->after = Matrix(static_cast<Eigen::Index>(acts.size()), n);
      for (std::size_t a = 0; a < acts.size(); ++a)
        o->after.row(static_cast<Eigen::Index>(a)) = one_hot(acts[a].next < 0 ? s : acts[a].next).transpose();
      obs_.push_back(std::move(o));
    }
  }

  int state_dim() const override { return static_cast<int>(m_.states.size()); }

  ObservationPtr reset() override {
    cur_ = m_.start;
    return obs_[static_cast<std::size_t>(cur_)];
  }

  StepOutcome step(std::size_t action) override {
    const auto& act = m_.actions.at(static_cast<std::size_t>(cur_)).at(action);
    cur_ = act.next;
    bool end = cur_ < 0 || m_.actions[static_cast<std::size_t>(cur_)].empty();
    return {act.reward, end ? nullptr : obs_[static_cast<std::size_t>(cur_)]};
  }

  ObservationPtr observation(int s) const { return obs_.at(static_cast<std::size_t>(s)); }
  const TabularMdp& mdp() const { return m_; }

 private:
  Vector one_hot(int s) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(m_.states.size()));
    v[s] = 1.0;
    return v;
  }

  TabularMdp m_;
  std::vector<ObservationPtr> obs_;
  int cur_ = 0;
};

/// The optimization game on one program. Candidate 0 stops; candidate i > 0
/// applies the (i-1)-th enumerated move. Rewards are c / T with c the root's
/// runtime, so the root itself scores 1.
class ProgramEnvironment : public Environment {
 public:
  ProgramEnvironment(Program root, RuntimeProvider& rt, const Encoder& encoder, EngineConfig cfg = {})
      : root_(std::move(root)), rt_(rt), enc_(encoder), cfg_(cfg), history_(root_, cfg_), best_(history_) {
    c_ = rt_.runtime(root_);
    if (!(c_ > 0)) throw Error(ErrorCode::InvalidArgument, "root runtime must be positive");
    best_cost_ = c_;
    current_cost_ = c_;
  }

  int state_dim() const override { return enc_.dimension(); }

  ObservationPtr reset() override {
    history_ = History(root_, cfg_);
    current_cost_ = c_;
    return observe();
  }

  StepOutcome step(std::size_t action) override {
    if (action == 0) return {reward(current_cost_, c_), nullptr};
    const State& st = *state_;
    if (action > st.moves.size()) throw Error(ErrorCode::InvalidArgument, "action out of range");
    const MoveResult& m = st.moves[action - 1];
    history_.push(m.move, m.result);
    current_cost_ = rt_.runtime(history_.current());
    if (current_cost_ < best_cost_) {
      best_cost_ = current_cost_;
      best_ = history_;
    }
    return {reward(current_cost_, c_), observe()};
  }

  double scale() const { return c_; }
  double best_cost() const { return best_cost_; }
  const History& best() const { return best_; }
  const History& history() const { return history_; }

 private:
  struct State {
    ObservationPtr obs;
    std::vector<MoveResult> moves;
  };

  ObservationPtr observe() {
    const Program& p = history_.current();
    std::string key = print_program(p);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      auto s = std::make_shared<State>();
      s->moves = enumerate_with_results(p, cfg_);
      auto o = std::make_shared<Observation>();
      o->state = enc_.encode(p);
      o->after = Matrix(static_cast<Eigen::Index>(s->moves.size() + 1), enc_.dimension());
      o->after.row(0) = o->state.transpose();
      for (std::size_t i = 0; i < s->moves.size(); ++i)
        o->after.row(static_cast<Eigen::Index>(i + 1)) = enc_.encode(*s->moves[i].result).transpose();
      s->obs = std::move(o);
      it = cache_.emplace(std::move(key), std::move(s)).first;
    }
    state_ = it->second;
    return state_->obs;
  }

  Program root_;
  RuntimeProvider& rt_;
  const Encoder& enc_;
  EngineConfig cfg_;
  History history_;
  History best_;
  double c_ = 1, best_cost_ = 1, current_cost_ = 1;
  std::unordered_map<std::string, std::shared_ptr<const State>> cache_;
  std::shared_ptr<const State> state_;
};

// ---------------------------------------------------------------------------
// Deep Q-learning

struct AgentConfig {
  double gamma = 0.95;
  EpsilonSchedule epsilon;
  std::size_t capacity = 10000;
  std::size_t batch = 32;
  int sync_every = 100;  // updates between target refreshes
  int max_moves = 30;    // then stop is forced
  int hidden = 128;
  double learning_rate = 1e-3;
  Backup backup = Backup::MaxBellman;
  bool double_dqn = true;
  std::uint64_t seed = 1;
};

struct EpisodeRecord {
  int episode;
  double epsilon;
  int moves;
  double episode_best_reward;
  double best_reward;
  int failures = 0;  // steps aborted by an environment error
};

class Agent {
 public:
  Agent(int state_dim, AgentConfig cfg)
      : cfg_(cfg), online_(state_dim, cfg.hidden, cfg.seed), target_(online_), buffer_(cfg.capacity),
        rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {}

  /// Greedy Q values of every candidate at `o`.
  std::vector<double> q_values(const Observation& o) const { return online_.q_values(o.state, o.after); }

  /// Bootstrapped target for one stored transition.
  double target_for(const Transition& t) const {
    if (t.terminal()) return t.reward;
    const Observation& n = *t.next;
    double next;
    const std::vector<double>& tq = target_q(t.next);
    if (cfg_.double_dqn) {
      next = tq[argmax(online_.q_values(n.state, n.after))];
    } else {
      next = *std::max_element(tq.begin(), tq.end());
    }
    double one[1] = {next};
    return backup_target(cfg_.backup, t.reward, cfg_.gamma, one, false);
  }

  /// One SGD step on a uniformly drawn minibatch; returns its mean loss.
  double update() {
    std::size_t b = std::min(cfg_.batch, buffer_.size());
    if (b == 0) return 0;
    QNetwork grad = online_.zeros_like();
    double loss = 0;
    for (std::size_t i = 0; i < b; ++i) {
      const Transition& t = buffer_[buffer_.sample_index(rng_)];
      double y = target_for(t);
      loss += online_.accumulate_gradient(t.state->state, t.state->after, t.action, y, grad, 1.0 / b);
    }
    online_.axpy(-cfg_.learning_rate, grad);
    if (++updates_ % cfg_.sync_every == 0) {
      target_ = online_;
      target_cache_.clear();
    }
    return loss / b;
  }

  EpisodeRecord run_episode(Environment& env, int episode) {
    double eps = cfg_.epsilon.at(episode);
    ObservationPtr obs = env.reset();
    EpisodeRecord rec{episode, eps, 0, -std::numeric_limits<double>::infinity(), 0};
    while (obs) {
      std::size_t a = 0;
      if (rec.moves < cfg_.max_moves) a = epsilon_greedy(q_values(*obs), eps, rng_);
      StepOutcome out;
      try {
        out = env.step(a);
      } catch (const Error&) {
        ++rec.failures;
        break;
      }
      rec.episode_best_reward = std::max(rec.episode_best_reward, out.reward);
      buffer_.push({obs, a, out.reward, out.next});
      if (buffer_.size() >= cfg_.batch) update();
      obs = out.next;
      ++rec.moves;
    }
    best_reward_ = std::max(best_reward_, rec.episode_best_reward);
    rec.best_reward = best_reward_;
    return rec;
  }

  std::vector<EpisodeRecord> train(Environment& env, int episodes) {
    std::vector<EpisodeRecord> curve;
    for (int e = 0; e < episodes; ++e) curve.push_back(run_episode(env, e));
    return curve;
  }

  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& online() { return online_; }
  const ReplayBuffer& replay() const { return buffer_; }
  int updates() const { return updates_; }
  const AgentConfig& config() const { return cfg_; }

 private:
  // Target-network values only change at a sync, so they are memoized per
  // observation until the next one.
  const std::vector<double>& target_q(const ObservationPtr& o) const {
    auto it = target_cache_.find(o.get());
    if (it == target_cache_.end())
      it = target_cache_.emplace(o.get(), std::make_pair(o, target_.q_values(o->state, o->after))).first;
    return it->second.second;
  }

  AgentConfig cfg_;
  QNetwork online_, target_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  int updates_ = 0;
  double best_reward_ = -std::numeric_limits<double>::infinity();
  mutable std::unordered_map<const Observation*, std::pair<ObservationPtr, std::vector<double>>> target_cache_;
};

struct ProgramTraining {
  History best;
  double best_cost;
  double root_cost;
  std::vector<EpisodeRecord> curve;
  QNetwork network;
};

inline ProgramTraining train_on_program(const Program& p, RuntimeProvider& rt, int episodes, const AgentConfig& cfg,
                                        const Encoder& encoder, const EngineConfig& ecfg = {}) {
  ProgramEnvironment env(p, rt, encoder, ecfg);
  Agent agent(encoder.dimension(), cfg);
  auto curve = agent.train(env, episodes);
  return {env.best(), env.best_cost(), env.scale(), std::move(curve), agent.online()};
}

/// One row per episode; `scale` converts rewards back to costs (c / r).
inline std::string learning_curve_csv(const std::vector<EpisodeRecord>& curve, double scale) {
  std::string out = "episode,epsilon,moves,episode_best_reward,best_reward,best_cost\n";
  char buf[160];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.6g,%d,%.9g,%.9g,%.9g\n", r.episode, r.epsilon, r.moves,
                  r.episode_best_reward, r.best_reward, scale / r.best_reward);
    out += buf;
  }
  return out;
}

}  // namespace perfdojo::rl
