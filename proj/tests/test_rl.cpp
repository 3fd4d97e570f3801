#include <gtest/gtest.h>

#include <sstream>

#include "perfdojo/kernels.hpp"
#include "perfdojo/rl/agent.hpp"

using namespace perfdojo;
using namespace perfdojo::rl;

namespace {

const char* kTwoStage = R"(# kernel: twostage
# dims: N=8
N t[{0}]=x[{0}]*2
N y[{0}]=t[{0}]+1

x f32 [N] heap
t f32 [N] heap
y f32 [N] heap
)";

// Upper tail of the chi-square distribution with `k` degrees of freedom.
double chi2_sf(double x, int k) {
  double a = k / 2.0, h = x / 2.0;
  double term = std::exp(a * std::log(h) - h - std::lgamma(a + 1)), sum = term;
  for (int n = 1; n < 1000 && term > 1e-17 * sum; ++n) {
    term *= h / (a + n);
    sum += term;
  }
  return 1.0 - sum;
}

double chi2(const std::vector<int>& counts) {
  double n = 0;
  for (int c : counts) n += c;
  double e = n / static_cast<double>(counts.size()), x = 0;
  for (int c : counts) x += (c - e) * (c - e) / e;
  return x;
}

Matrix random_after(int n, int d, std::mt19937_64& rng) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1, 1);
  return m;
}

}  // namespace

TEST(Chi2, KnownQuantiles) {
  EXPECT_NEAR(chi2_sf(13.2767, 4), 0.01, 1e-5);
  EXPECT_NEAR(chi2_sf(21.666, 9), 0.01, 1e-4);
}

TEST(Reward, ScaleOverRuntime) {
  EXPECT_DOUBLE_EQ(reward(0.5, 1), 2.0);
  EXPECT_DOUBLE_EQ(reward(2, 2), 1.0);
  EXPECT_THROW(reward(0, 1), Error);
  EXPECT_THROW(reward(-1, 1), Error);
}

TEST(Reward, CheaperMoveEarnsMore) {
  Program fused = apply_move(parse_program(kTwoStage), "join_scopes t@0");
  CostModelProvider cm;
  double c = cm.runtime(parse_program(kTwoStage));
  double better = cm.runtime(apply_move(fused, "reuse_dims t[0]"));
  double worse = cm.runtime(apply_move(fused, "split_scope t@0 2"));
  ASSERT_LT(better, cm.runtime(fused));
  ASSERT_GT(worse, cm.runtime(fused));
  EXPECT_GT(reward(better, c), reward(worse, c));
}

TEST(Targets, MaxBellman) {
  double next[] = {2.0, -1.0};
  EXPECT_DOUBLE_EQ(max_bellman_target(1.0, 0.9, next), 1.8);
  EXPECT_DOUBLE_EQ(max_bellman_target(0.7, 0.9, next, true), 0.7);
  EXPECT_DOUBLE_EQ(max_bellman_target(0.7, 0.9, {}), 0.7);
  double low[] = {0.1};
  EXPECT_DOUBLE_EQ(max_bellman_target(0.5, 0.9, low), 0.5);
  EXPECT_DOUBLE_EQ(cumulative_target(1.0, 0.9, next), 2.8);
}

TEST(Targets, MaxBellmanBounds) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    double r = uniform(rng, -2, 2), g = uniform(rng, 0, 1);
    std::vector<double> q{uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
    double y = max_bellman_target(r, g, q);
    EXPECT_GE(y, r);
    EXPECT_GE(y, g * *std::max_element(q.begin(), q.end()));
  }
}

TEST(Targets, DoubleDqn) {
  std::vector<double> online{0.1, 0.2, 0.9}, target{5.0, 1.0, 0.7};
  double v = double_dqn_value(online, target);
  EXPECT_DOUBLE_EQ(v, 0.7);
  double one[] = {v};
  EXPECT_NEAR(max_bellman_target(0.1, 0.9, one), 0.63, 1e-15);
  // Same network: the ordinary max.
  EXPECT_DOUBLE_EQ(double_dqn_value(target, target), 5.0);
  // Positive rescaling of the online values keeps the selection.
  std::vector<double> scaled{0.3, 0.6, 2.7};
  EXPECT_DOUBLE_EQ(double_dqn_value(scaled, target), v);
}

TEST(Targets, DoubleDqnWithNetworks) {
  std::mt19937_64 rng(5);
  QNetwork a(6, 16, 1), b(6, 16, 2);
  Vector s = Vector::Random(6);
  Matrix after = random_after(5, 6, rng);
  DoubleSelection sel = double_dqn_selection(s, after, a, b);
  auto qa = a.q_values(s, after);
  EXPECT_EQ(sel.index, argmax(qa));
  EXPECT_DOUBLE_EQ(sel.value, b.q_values(s, after)[sel.index]);
  DoubleSelection same = double_dqn_selection(s, after, a, a);
  EXPECT_DOUBLE_EQ(same.value, *std::max_element(qa.begin(), qa.end()));
}

TEST(Dueling, Combine) {
  std::vector<double> a{0, 1, 2};
  EXPECT_EQ(dueling_combine(1, a), (std::vector<double>{0, 1, 2}));
  std::vector<double> one{3.5};
  EXPECT_EQ(dueling_combine(1.25, one), std::vector<double>{1.25});
  std::vector<double> shifted{10, 11, 12};
  EXPECT_EQ(dueling_combine(1, shifted), dueling_combine(1, a));
  EXPECT_THROW(dueling_combine(1, std::vector<double>{}), Error);
}

TEST(EpsilonGreedy, GreedyAndUniform) {
  std::mt19937_64 rng(17);
  std::vector<double> q{0.5, 2.0, 2.0, -1.0, 0.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy(q, 0.0, rng), 1u);
  std::vector<int> counts(q.size(), 0);
  for (int i = 0; i < 10000; ++i) ++counts[epsilon_greedy(q, 1.0, rng)];
  double p = chi2_sf(chi2(counts), static_cast<int>(q.size()) - 1);
  EXPECT_GT(p, 0.01) << "chi2 " << chi2(counts);
  EXPECT_THROW(epsilon_greedy(std::vector<double>{}, 0.5, rng), Error);
  EXPECT_THROW(epsilon_greedy(q, 1.5, rng), Error);
}

TEST(EpsilonGreedy, ScheduleNonIncreasing) {
  EpsilonSchedule s;
  EXPECT_EQ(s.at(0), 1.0);
  for (int e = 1; e < 2000; ++e) EXPECT_LE(s.at(e), s.at(e - 1));
  EXPECT_EQ(s.at(5000), 0.05);
}

TEST(QNetwork, GradientMatchesFiniteDifferences) {
  const int d = FeatureEncoder::kDimension;
  QNetwork net(d, 128, 11);
  std::mt19937_64 rng(23);
  Vector s(d);
  for (int i = 0; i < d; ++i) s[i] = uniform(rng, -1, 1);
  Matrix after = random_after(7, d, rng);
  const std::size_t taken = 3;
  const double y = 0.8;

  QNetwork grad = net.zeros_like();
  net.accumulate_gradient(s, after, taken, y, grad);
  auto loss = [&](const QNetwork& n) {
    double q = n.q_values(s, after)[taken];
    return (q - y) * (q - y);
  };

  auto params = net.parameters();
  auto gparams = grad.parameters();
  std::vector<std::size_t> pick;
  for (std::size_t i = 0; i < params.size(); i += 97) pick.push_back(i);
  for (std::size_t i = params.size() - 260; i < params.size(); ++i) pick.push_back(i);  // heads
  double worst = 0;
  for (std::size_t i : pick) {
    const double h = 1e-6, keep = *params[i];
    *params[i] = keep + h;
    double up = loss(net);
    *params[i] = keep - h;
    double down = loss(net);
    *params[i] = keep;
    double fd = (up - down) / (2 * h), an = *gparams[i];
    double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-4) << "parameter " << i << ": analytic " << an << " numeric " << fd;
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(QNetwork, CheckpointRoundTrip) {
  QNetwork net(8, 16, 4);
  std::stringstream ss;
  net.save(ss);
  EXPECT_EQ(ss.str().rfind("perfdojo-qnet v1\n8 16\n", 0), 0u);
  QNetwork back = QNetwork::load(ss);
  EXPECT_TRUE(back == net);
  std::stringstream bad("perfdojo-qnet v0\n8 16\n");
  EXPECT_THROW(QNetwork::load(bad), Error);
  std::stringstream truncated("perfdojo-qnet v1\n8 16\n0.5\n");
  EXPECT_THROW(QNetwork::load(truncated), Error);
}

TEST(QNetwork, RejectsMismatchedEmbeddings) {
  QNetwork net(8, 16, 4);
  EXPECT_THROW(net.q_values(Vector::Zero(7), Matrix::Zero(2, 8)), Error);
  EXPECT_THROW(net.q_values(Vector::Zero(8), Matrix::Zero(0, 8)), Error);
}

TEST(Replay, RingAndUniformSampling) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 25; ++i) buf.push({nullptr, static_cast<std::size_t>(i), 0.0, nullptr});
  EXPECT_EQ(buf.size(), 10u);
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < buf.size(); ++i) held.push_back(buf[i].action);
  std::sort(held.begin(), held.end());
  EXPECT_EQ(held, (std::vector<std::size_t>{15, 16, 17, 18, 19, 20, 21, 22, 23, 24}));

  std::mt19937_64 rng(29);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) ++counts[buf.sample_index(rng)];
  EXPECT_GT(chi2_sf(chi2(counts), 9), 0.01);
  EXPECT_THROW(ReplayBuffer(0), Error);
}

TEST(Encoder, DeterministicFixedWidth) {
  FeatureEncoder enc;
  Program p = parse_program(kTwoStage);
  Vector a = enc.encode(p);
  EXPECT_EQ(a.size(), 64);
  EXPECT_TRUE(a == enc.encode(parse_program(print_program(p))));
  Program q = apply_move(p, "join_scopes t@0");
  EXPECT_FALSE(a == enc.encode(q));
  EXPECT_FALSE(enc.encode(q) == enc.encode(apply_move(q, "reuse_dims t[0]")));
  EXPECT_TRUE(a.allFinite());
  for (const auto& name : Corpus().names()) EXPECT_TRUE(enc.encode(load_kernel(name, "desk").program).allFinite());
}

TEST(Encoder, StopActionRepeatsState) {
  Vector s = Vector::LinSpaced(4, 0, 3);
  Vector a = action_embedding(s, s);
  EXPECT_EQ(a.size(), 8);
  EXPECT_TRUE(a.head(4) == a.tail(4));
}

TEST(MaxQ, FlipOnPeakRewardExample) {
  TabularMdp m = TabularMdp::peak_reward_example();
  QTable max_q = value_iteration(m, 0.9, Backup::MaxBellman);
  QTable cum_q = value_iteration(m, 0.9, Backup::Cumulative);
  EXPECT_NEAR(max_q[0][0], 1.0, 1e-12);
  EXPECT_NEAR(max_q[0][1], 1.08, 1e-12);
  EXPECT_NEAR(cum_q[0][1], 0.58, 1e-12);
  EXPECT_EQ(argmax(max_q[0]), 1u);  // path
  EXPECT_EQ(argmax(cum_q[0]), 0u);  // stop

  QTable learned = tabular_q_learning(m, 0.9, Backup::MaxBellman, 2000, 0.5, 0.3, 7);
  for (std::size_t s = 0; s < m.states.size(); ++s)
    for (std::size_t a = 0; a < learned[s].size(); ++a) EXPECT_NEAR(learned[s][a], max_q[s][a], 1e-6);
  QTable learned_cum = tabular_q_learning(m, 0.9, Backup::Cumulative, 2000, 0.5, 0.3, 7);
  EXPECT_NEAR(learned_cum[0][1], 0.58, 1e-6);
}

TEST(Agent, ScriptedEnvironmentMatchesValueIteration) {
  TabularMdp m = TabularMdp::peak_reward_example();
  ScriptedEnvironment env(m);
  AgentConfig cfg;
  cfg.gamma = 0.9;
  cfg.hidden = 32;
  cfg.learning_rate = 0.01;
  cfg.epsilon.decay = 0.99;
  cfg.seed = 3;
  Agent agent(env.state_dim(), cfg);
  agent.train(env, 600);
  QTable vi = value_iteration(m, 0.9, Backup::MaxBellman);
  auto q0 = agent.q_values(*env.observation(0));
  EXPECT_EQ(argmax(q0), argmax(vi[0])) << q0[0] << " " << q0[1];
  EXPECT_NEAR(q0[0], vi[0][0], 0.05);
  EXPECT_NEAR(q0[1], vi[0][1], 0.05);
  EXPECT_NEAR(agent.q_values(*env.observation(1))[0], vi[1][0], 0.05);

  for (std::size_t i = 0; i < agent.replay().size(); ++i) {
    const Transition& t = agent.replay()[i];
    if (t.terminal()) EXPECT_EQ(t.next, nullptr);
    else EXPECT_GT(t.next->candidates(), 0u);
  }
}

TEST(Agent, TargetSyncIsBitwise) {
  ScriptedEnvironment env(TabularMdp::peak_reward_example());
  AgentConfig cfg;
  cfg.hidden = 8;
  cfg.batch = 4;
  cfg.sync_every = 10;
  Agent agent(env.state_dim(), cfg);
  while (agent.updates() < 10) agent.run_episode(env, 0);
  // The run may overshoot by a few updates; replay up to the next sync.
  while (agent.updates() % cfg.sync_every != 0) agent.update();
  EXPECT_TRUE(agent.target() == agent.online());
  agent.update();
  EXPECT_FALSE(agent.target() == agent.online());
}

TEST(Agent, ProgramEnvironmentRules) {
  CostModelProvider cm;
  FeatureEncoder enc;
  Program p = parse_program(kTwoStage);
  ProgramEnvironment env(p, cm, enc);
  ObservationPtr o = env.reset();
  ASSERT_EQ(o->candidates(), enumerate_moves(p).size() + 1);
  EXPECT_TRUE(o->after.row(0).transpose() == o->state);
  StepOutcome stop = env.step(0);
  EXPECT_DOUBLE_EQ(stop.reward, 1.0);
  EXPECT_EQ(stop.next, nullptr);

  env.reset();
  auto moves = enumerate_moves(p);
  std::size_t join = 0;
  for (std::size_t i = 0; i < moves.size(); ++i)
    if (moves[i].str() == "join_scopes t@0") join = i + 1;
  ASSERT_GT(join, 0u);
  StepOutcome s1 = env.step(join);
  EXPECT_DOUBLE_EQ(s1.reward, cm.runtime(p) / cm.runtime(apply_move(p, "join_scopes t@0")));
  ASSERT_NE(s1.next, nullptr);
  EXPECT_EQ(env.history().log(), "join_scopes t@0\n");
}

TEST(Agent, EpisodeCapForcesStop) {
  CostModelProvider cm;
  FeatureEncoder enc;
  KernelInstance k = load_kernel("softmax", "tiny");
  ProgramEnvironment env(k.program, cm, enc);
  AgentConfig cfg;
  cfg.max_moves = 5;
  cfg.hidden = 16;
  Agent agent(enc.dimension(), cfg);
  for (int e = 0; e < 4; ++e) {
    EpisodeRecord r = agent.run_episode(env, e);
    EXPECT_LE(r.moves, cfg.max_moves + 1);
    EXPECT_LE(static_cast<int>(env.history().size()), cfg.max_moves);
  }
}

TEST(Agent, TrainingIsDeterministicAndSound) {
  CostModelProvider cm;
  FeatureEncoder enc;
  KernelInstance k = load_kernel("layernorm", "tiny");
  AgentConfig cfg;
  cfg.hidden = 32;
  cfg.seed = 12;
  ProgramTraining a = train_on_program(k.program, cm, 4, cfg, enc);
  ProgramTraining b = train_on_program(k.program, cm, 4, cfg, enc);
  EXPECT_EQ(learning_curve_csv(a.curve, a.root_cost), learning_curve_csv(b.curve, b.root_cost));
  EXPECT_TRUE(a.network == b.network);
  EXPECT_EQ(a.best.log(), b.best.log());
  EXPECT_LE(a.best_cost, a.root_cost);
  auto replay = History::replay(k.program, a.best.moves());
  ASSERT_TRUE(std::holds_alternative<History>(replay));
  EXPECT_DOUBLE_EQ(cm.runtime(std::get<History>(replay).current()), a.best_cost);
  EXPECT_TRUE(equivalent(k.program, a.best.current(), 2, 5, k.ranges).equal);
  EXPECT_EQ(learning_curve_csv(a.curve, a.root_cost).rfind("episode,epsilon,moves,episode_best_reward,best_reward,best_cost\n", 0),
            0u);
}
