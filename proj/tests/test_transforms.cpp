#include <gtest/gtest.h>

#include <random>

#include "perfdojo/history.hpp"
#include "perfdojo/interpreter.hpp"

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

bool has_move(const Program& p, const std::string& text) {
  for (const auto& m : enumerate_moves(p))
    if (m.str() == text) return true;
  return false;
}

ErrorCode apply_error(const Program& p, const std::string& move) {
  try {
    apply_move(p, move);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "applied " << move;
  return ErrorCode::Internal;
}

Program prog(const std::string& body, const std::string& buffers, const std::string& dims = "") {
  return parse_program((dims.empty() ? "" : "# dims: " + dims + "\n") + body + "\n\n" + buffers);
}

}  // namespace

TEST(Registry, EveryTransformationPassesItsSelfTest) {
  for (const auto& t : registry()) {
    Program p = parse_program(t.self_test);
    ASSERT_TRUE(is_valid(p)) << t.id;
    EXPECT_FALSE(enumerate_transformation(p, t, {}).empty()) << t.id;
  }
}

TEST(Moves, TextRoundTrips) {
  for (const auto& s : {"join_scopes t@0", "split_scope x#1@2 4", "reuse_dims t[0]", "set_location t[] stack"})
    EXPECT_EQ(parse_move(s).str(), s);
  EXPECT_THROW(parse_move("join_scopes"), Error);
  EXPECT_THROW(parse_move("split_scope t@0 4 5"), Error);
}

TEST(FusionThenReuse, ReuseNeedsPriorFusion) {
  Program p = parse_program(kTwoStage);
  EXPECT_TRUE(has_move(p, "join_scopes t@0"));
  EXPECT_FALSE(has_move(p, "reuse_dims t[0]"));
  EXPECT_EQ(apply_error(p, "reuse_dims t[0]"), ErrorCode::InapplicableMove);

  Program fused = apply_move(p, "join_scopes t@0");
  ASSERT_EQ(fused.root.size(), 1u);
  EXPECT_EQ(fused.root[0].children.size(), 2u);
  EXPECT_TRUE(has_move(fused, "reuse_dims t[0]"));
  Program reused = apply_move(fused, "reuse_dims t[0]");
  EXPECT_FALSE(reused.buffer_named("t")->shape[0].materialized);
  EXPECT_TRUE(equivalent(p, reused, 3, 7).equal);

  Program forced = p;
  forced.buffer_named("t")->shape[0].materialized = false;
  EXPECT_FALSE(equivalent(p, forced, 3, 7).equal);
}

TEST(Split, ProducesNestOverSamePoints) {
  Program p = prog("8 z[{0}]=x[{0}]+{0}", "x f32 [8] heap\nz f32 [8] heap\n");
  Program q = apply_move(p, "split_scope z@0 4");
  EXPECT_EQ(print_body(q), "2\n| 4\n| | z[{0}*4+{1}]=x[{0}*4+{1}]+({0}*4+{1})\n");
  EXPECT_TRUE(equivalent(p, q, 2, 1).equal);
  EXPECT_EQ(apply_error(p, "split_scope z@0 3"), ErrorCode::ParamOutOfDomain);
  EXPECT_EQ(apply_error(p, "split_scope z@0 8"), ErrorCode::ParamOutOfDomain);
}

TEST(Split, ShiftsDeeperDepths) {
  Program p = prog("N M z[{0},{1}]=x[{0},{1}]", "x f32 [N, M] heap\nz f32 [N, M] heap\n", "N=4 M=6");
  Program q = apply_move(p, "split_scope z@0 2");
  EXPECT_EQ(print_body(q), "N/2\n| 2\n| | M\n| | | z[{0}*2+{1},{2}]=x[{0}*2+{1},{2}]\n");
  EXPECT_TRUE(equivalent(p, q, 2, 3).equal);
}

TEST(Suffix, VectorNeedsWidthAndSingleLeaf) {
  Program p4 = prog("4 z[{0}]=x[{0}]*y[{0}]", "x f32 [4] heap\ny f32 [4] heap\nz f32 [4] heap\n");
  Program v = apply_move(p4, "set_suffix z@0 v");
  EXPECT_EQ(v.root[0].suffix, Suffix::Vector);
  Program p5 = prog("5 z[{0}]=x[{0}]*y[{0}]", "x f32 [5] heap\ny f32 [5] heap\nz f32 [5] heap\n");
  EXPECT_EQ(apply_error(p5, "set_suffix z@0 v"), ErrorCode::ParamOutOfDomain);
  Program two = prog("4 z[{0}]=x[{0}]\n| y[{0}]=x[{0}]", "x f32 [4] heap\ny f32 [4] heap\nz f32 [4] heap\n");
  EXPECT_FALSE(has_move(two, "set_suffix z@0 v"));
}

TEST(Suffix, ClearRestoresText) {
  Program p = prog("4 z[{0}]=x[{0}]", "x f32 [4] heap\nz f32 [4] heap\n");
  for (const char* s : {"u", "p", "v"}) {
    Program q = apply_move(p, std::string("set_suffix z@0 ") + s);
    EXPECT_EQ(print_program(apply_move(q, "clear_suffix z@0")), print_program(p));
  }
}

TEST(Suffix, ParallelRejectsCarriedReduction) {
  Program p = prog("N M z[{0}]+=x[{0},{1}]", "x f32 [N, M] heap\nz f32 [N] heap\n", "N=4 M=5");
  EXPECT_TRUE(has_move(p, "set_suffix z@0 p"));
  EXPECT_FALSE(has_move(p, "set_suffix z@1 p"));
}

TEST(Suffix, GpuSuffixesOnlyWhenEnabled) {
  Program p = prog("4 z[{0}]=x[{0}]", "x f32 [4] heap\nz f32 [4] heap\n");
  auto ms = enumerate_moves(p);
  EXPECT_TRUE(std::none_of(ms.begin(), ms.end(), [](auto& m) { return m.param == "g"; }));
  EngineConfig cfg;
  cfg.gpu_suffixes = true;
  auto gs = enumerate_moves(p, cfg);
  EXPECT_TRUE(std::any_of(gs.begin(), gs.end(), [](auto& m) { return m.param == "g"; }));
}

TEST(Interchange, LegalForPointwiseIllegalForSkewedDependence) {
  Program p = prog("N M z[{0},{1}]=x[{0},{1}]", "x f32 [N, M] heap\nz f32 [N, M] heap\n", "N=3 M=4");
  Program q = apply_move(p, "reorder_scopes z@0");
  EXPECT_EQ(print_body(q), "M\n| N\n| | z[{1},{0}]=x[{1},{0}]\n");
  EXPECT_TRUE(equivalent(p, q, 2, 5).equal);

  Program red = prog("N M z[{0}]+=x[{0},{1}]", "x f32 [N, M] heap\nz f32 [N] heap\n", "N=3 M=4");
  EXPECT_TRUE(has_move(red, "reorder_scopes z@0"));

  // t is written at (i, j) and read at (i, j+1) one outer iteration later.
  Program skew = prog("3 4 t[{0}+{1}]+=x[{0},{1}]", "x f32 [3, 4] heap\nt f32 [6] heap\n");
  EXPECT_FALSE(has_move(skew, "reorder_scopes t@0"));
}

TEST(InstructionOrder, IndependentSiblingsSwap) {
  Program p = prog("4 y[{0}]=x[{0}]\n4 z[{0}]=x[{0}]", "x f32 [4] heap\ny f32 [4] heap\nz f32 [4] heap\n");
  EXPECT_TRUE(has_move(p, "reorder_instructions y@0"));
  Program dep = parse_program(kTwoStage);
  EXPECT_FALSE(has_move(dep, "reorder_instructions t@0"));
  Program inner = prog("4 t[{0}]=x[{0}]\n| y[{0}]=t[{0}]", "x f32 [4] heap\nt f32 [4] heap\ny f32 [4] heap\n");
  EXPECT_FALSE(has_move(inner, "reorder_instructions t"));
}

TEST(Join, RejectsBackwardDependence) {
  Program p = prog("4 t[{0}]=x[{0}]\n4 y[{0}]=t[3-{0}]", "x f32 [4] heap\nt f32 [4] heap\ny f32 [4] heap\n");
  EXPECT_FALSE(has_move(p, "join_scopes t@0"));
  Program unequal = prog("4 t[{0}]=x[{0}]\n2 y[{0}]=t[{0}]", "x f32 [4] heap\nt f32 [4] heap\ny f32 [2] heap\n");
  EXPECT_FALSE(has_move(unequal, "join_scopes t@0"));
}

TEST(Enumerate, ScalarProgramHasNoScopeMoves) {
  Program p = prog("z[0]=x[0]*2", "x f32 [1] heap\nz f32 [1] heap\n");
  for (const auto& m : enumerate_moves(p)) {
    EXPECT_NE(m.transform, "join_scopes");
    EXPECT_NE(m.transform, "split_scope");
  }
}

TEST(Enumerate, SortedAndDeterministic) {
  Program p = parse_program(kTwoStage);
  auto a = enumerate_moves(p);
  auto b = enumerate_moves(p);
  EXPECT_EQ(a, b);
  for (std::size_t i = 1; i < a.size(); ++i)
    EXPECT_LE(std::make_tuple(a[i - 1].transform, format_site(a[i - 1].site), a[i - 1].param),
              std::make_tuple(a[i].transform, format_site(a[i].site), a[i].param));
}

TEST(Buffers, PadLocationShareUnshare) {
  Program p = prog("3 t[{0}]=x[{0}]\n3 y[{0}]=t[{0}]\n3 u[{0}]=x[{0}]\n3 z[{0}]=u[{0}]",
                   "x f32 [3] heap\nt f32 [3] heap\nu f32 [3] heap\ny f32 [3] heap\nz f32 [3] heap\n");
  Program padded = apply_move(p, "pad_dim t[0] 4");
  EXPECT_EQ(padded.buffer_named("t")->footprint_elements(padded.dims), 4);
  EXPECT_TRUE(equivalent(p, padded, 2, 1).equal);
  EXPECT_FALSE(has_move(p, "pad_dim x[0] 4"));

  Program stack = apply_move(p, "set_location t[] stack");
  EXPECT_EQ(stack.buffer_named("t")->location, Location::Stack);

  Program shared = apply_move(p, "share_buffer t[] u");
  EXPECT_EQ(shared.buffers.size(), 4u);
  EXPECT_TRUE(equivalent(p, shared, 2, 1).equal);
  Program back = apply_move(shared, "unshare_buffer t[] u");
  EXPECT_TRUE(equivalent(p, back, 2, 1).equal);
  EXPECT_EQ(back.buffers.size(), 5u);

  Program overlap = prog("3 t[{0}]=x[{0}]\n3 u[{0}]=t[{0}]\n3 z[{0}]=u[{0}]",
                         "x f32 [3] heap\nt f32 [3] heap\nu f32 [3] heap\nz f32 [3] heap\n");
  EXPECT_FALSE(has_move(overlap, "share_buffer t[] u"));
}

TEST(Buffers, ReorderDimsRewritesAccesses) {
  Program p = prog("2 3 t[{0},{1}]=x[{0},{1}]\n2 3 z[{0},{1}]=t[{0},{1}]",
                   "x f32 [2, 3] heap\nt f32 [2, 3] heap\nz f32 [2, 3] heap\n");
  Program q = apply_move(p, "reorder_buffer_dims t[0]");
  EXPECT_EQ(q.buffer_named("t")->shape[0].extent.str(), "3");
  EXPECT_TRUE(equivalent(p, q, 2, 1).equal);
}

TEST(Sites, NonCanonicalSiteNamesSameScope) {
  Program p = prog("4 y[{0}]=x[{0}]\n| z[{0}]=x[{0}]", "x f32 [4] heap\ny f32 [4] heap\nz f32 [4] heap\n");
  EXPECT_EQ(apply_move(p, "split_scope z@0 2"), apply_move(p, "split_scope y@0 2"));
  EXPECT_EQ(apply_error(p, "split_scope q@0 2"), ErrorCode::NotFound);
}

TEST(History, UndoAndRemove) {
  Program p = parse_program(kTwoStage);
  History h(p);
  h.apply(parse_move("join_scopes t@0"));
  h.apply(parse_move("reuse_dims t[0]"));
  h.apply(parse_move("split_scope t@0 2"));
  EXPECT_EQ(undo(h, 0), h.current());
  EXPECT_EQ(undo(h, 3), p);
  EXPECT_EQ(undo(h, 1), h.at(2));

  auto removed = h.remove_move(0);
  ASSERT_TRUE(std::holds_alternative<ReplayConflict>(removed));
  EXPECT_EQ(std::get<ReplayConflict>(removed).index, 1u);

  auto ok = h.remove_move(2);
  ASSERT_TRUE(std::holds_alternative<History>(ok));
  EXPECT_EQ(std::get<History>(ok).current(), h.at(2));

  History single(p);
  single.apply(parse_move("join_scopes t@0"));
  EXPECT_EQ(std::get<History>(single.remove_move(0)).current(), p);

  auto replayed = History::replay(p, parse_log(h.log()));
  EXPECT_EQ(std::get<History>(replayed).current(), h.current());
}

TEST(History, RemovingSuffixMoveKeepsUnrelatedMoves) {
  Program p = prog("4 y[{0}]=x[{0}]\n8 z[{0}]=x[{0}]", "x f32 [8] heap\ny f32 [4] heap\nz f32 [8] heap\n");
  History h(p);
  h.apply(parse_move("set_suffix y@0 u"));
  h.apply(parse_move("split_scope z@0 4"));
  h.apply(parse_move("set_suffix z@1 v"));
  EXPECT_TRUE(std::holds_alternative<History>(h.remove_move(0)));
}
