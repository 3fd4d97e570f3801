#include <gtest/gtest.h>

#include "perfdojo/kernels.hpp"
#include "perfdojo/search.hpp"

using namespace perfdojo;

namespace {

const char* kTwoStage = R"(# kernel: twostage
# dims: N=8
N t[{0}]=x[{0}]*2
N y[{0}]=t[{0}]+1

x f32 [N] heap
t f32 [N] heap
y f32 [N] heap
)";

const char* kNest = R"(# kernel: nest
# dims: A=8 B=3 C=5
A B C z[{0},{1},{2}]=x[{0},{1},{2}]*2

x f32 [A, B, C] heap
z f32 [A, B, C] heap
)";

std::vector<std::string> log_lines(const History& h) {
  std::vector<std::string> out;
  for (const auto& m : h.moves()) out.push_back(m.str());
  return out;
}

int structural_bound(const Program& p) {
  int n = 0;
  for_each_scope(p, [&](const Node&, const NodePath&) { ++n; });
  for (const auto& b : p.buffers) n += static_cast<int>(b.shape.size());
  return n;
}

}  // namespace

TEST(NaivePass, FusesThenReuses) {
  History h = naive_pass(parse_program(kTwoStage));
  EXPECT_EQ(log_lines(h), (std::vector<std::string>{"join_scopes t@0", "reuse_dims t[0]"}));
}

TEST(NaivePass, FixedPointIsEmpty) {
  Program p = parse_program("# dims: N=4\nN z[{0}]=x[{0}]+1\n\nx f32 [N] heap\nz f32 [N] heap\n");
  EXPECT_TRUE(naive_pass(p).moves().empty());
  Program s = parse_program("z[0]=x[0]+1\n\nx f32 [1] heap\nz f32 [1] heap\n");
  EXPECT_TRUE(naive_pass(s).moves().empty());
}

TEST(NaivePass, TerminatesWithinBoundOnCorpus) {
  Corpus c;
  for (const auto& name : c.names()) {
    Program p = c.load(name, "tiny").program;
    History h = naive_pass(p);
    EXPECT_LE(static_cast<int>(h.moves().size()), structural_bound(p)) << name;
  }
}

TEST(GreedyPass, VectorizesInnermostElementwise) {
  Program p = parse_program("# dims: N=4 M=4\nN M z[{0},{1}]=x[{0},{1}]+1\n\nx f32 [N, M] heap\nz f32 [N, M] heap\n");
  History h = greedy_pass(p);
  EXPECT_EQ(h.current().root[0].children[0].suffix, Suffix::Vector);
  for (const auto& m : enumerate_moves(h.current()))
    EXPECT_FALSE(m.transform == "set_suffix" && m.param == "v") << m.str();
}

TEST(GreedyPass, NoHardwareMovesEqualsNaive) {
  PassConfig cfg;
  cfg.hardware = {};
  Program p = parse_program(kTwoStage);
  EXPECT_EQ(greedy_pass(p, cfg).log(), naive_pass(p, cfg).log());
}

TEST(HeuristicPass, TilesOutermostAndSinksTile) {
  PassConfig cfg;
  cfg.hardware = {};
  Program p = parse_program(kNest);
  History h = heuristic_pass(p, cfg);
  ASSERT_EQ(h.current().root.size(), 1u);
  EXPECT_EQ(nest_shape(h.current(), h.current().root[0]), "[2,3,5,4:u]");
  EXPECT_TRUE(equivalent(p, h.current(), 3, 7).equal);
}

TEST(HeuristicPass, IndivisibleExtentUntouched) {
  PassConfig cfg;
  cfg.hardware = {};
  Program p = parse_program("# dims: A=7 B=3\nA B z[{0},{1}]=x[{0},{1}]\n\nx f32 [A, B] heap\nz f32 [A, B] heap\n");
  History h = heuristic_pass(p, cfg);
  EXPECT_TRUE(h.moves().empty());
  EXPECT_EQ(nest_shape(h.current(), h.current().root[0]), "[7,3]");
}

TEST(Passes, PreserveSemanticsOnCorpus) {
  Corpus c;
  for (const auto& name : c.names()) {
    Program p = c.load(name, "tiny").program;
    for (const char* pass : {"naive", "greedy", "heuristic"}) {
      History h = run_pass(pass, p);
      auto r = History::replay(p, h.moves());
      ASSERT_TRUE(std::holds_alternative<History>(r)) << name << " " << pass;
      auto eq = equivalent(p, h.current(), 2, 11, load_kernel(name, "tiny").ranges);
      EXPECT_TRUE(eq.equal) << name << " " << pass << ": " << eq.detail;
    }
  }
  EXPECT_THROW(run_pass("bogus", parse_program(kTwoStage)), Error);
}

TEST(Search, BudgetOne) {
  Program p = parse_program(kTwoStage);
  CostModelProvider cm;
  for (auto space : {SpaceMode::Edges, SpaceMode::Heuristic})
    for (const char* method : {"sample", "anneal"}) {
      SearchConfig cfg;
      cfg.budget = 1;
      cfg.space = space;
      SearchResult r = run_search(method, p, cm, cfg);
      ASSERT_EQ(r.trace.size(), 1u) << method;
      EXPECT_EQ(r.trace[0].evaluation, 1);
      EXPECT_LE(r.best_cost, r.root_cost);
      EXPECT_LE(r.best.moves().size(), space == SpaceMode::Edges ? 1u : 100u);
    }
}

TEST(Search, DeterministicForSeed) {
  Program p = load_kernel("softmax", "tiny").program;
  CostModelProvider cm;
  for (auto space : {SpaceMode::Edges, SpaceMode::Heuristic})
    for (const char* method : {"sample", "anneal"}) {
      SearchConfig cfg;
      cfg.budget = 60;
      cfg.seed = 42;
      cfg.space = space;
      SearchResult a = run_search(method, p, cm, cfg);
      SearchResult b = run_search(method, p, cm, cfg);
      EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace)) << method;
      EXPECT_EQ(a.best.log(), b.best.log());
    }
}

TEST(Search, BestIsMonotoneAndReplays) {
  KernelInstance k = load_kernel("layernorm", "tiny");
  CostModelProvider cm;
  for (auto space : {SpaceMode::Edges, SpaceMode::Heuristic})
    for (const char* method : {"sample", "anneal"}) {
      SearchConfig cfg;
      cfg.budget = 80;
      cfg.space = space;
      SearchResult r = run_search(method, k.program, cm, cfg);
      ASSERT_EQ(static_cast<int>(r.trace.size()), cfg.budget);
      for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].best, r.trace[i - 1].best);
      EXPECT_DOUBLE_EQ(r.trace.back().best, r.best_cost);
      auto replay = History::replay(k.program, r.best.moves());
      ASSERT_TRUE(std::holds_alternative<History>(replay));
      EXPECT_DOUBLE_EQ(cm.runtime(std::get<History>(replay).current()), r.best_cost);
      EXPECT_TRUE(equivalent(k.program, r.best.current(), 2, 3, k.ranges).equal);
    }
}

TEST(Search, HeuristicNeighborsReplay) {
  Program p = load_kernel("softmax", "tiny").program;
  SearchConfig cfg;
  SearchSpace space(SpaceMode::Heuristic, cfg);
  std::mt19937_64 rng(9);
  History h = *space.initial(p);
  for (int i = 0; i < 100; ++i) {
    auto n = space.neighbor(h, rng);
    if (!n) continue;
    EXPECT_TRUE(std::holds_alternative<History>(History::replay(p, n->moves())));
    h = *n;
  }
}

TEST(Annealing, Acceptance) {
  EXPECT_EQ(acceptance_probability(-5, 1), 1.0);
  EXPECT_EQ(acceptance_probability(-5, 0), 1.0);
  EXPECT_EQ(acceptance_probability(3, 0), 0.0);
  EXPECT_NEAR(acceptance_probability(1, 1), std::exp(-1.0), 1e-15);
  EXPECT_LT(acceptance_probability(1, 1e-6), 1e-300);
}

TEST(Search, TraceCsv) {
  EXPECT_EQ(trace_csv({{1, 10, 10}, {2, 12.5, 10}}), "evaluation,cost,best\n1,10,10\n2,12.5,10\n");
  EXPECT_THROW(space_from_string("graph"), Error);
}
