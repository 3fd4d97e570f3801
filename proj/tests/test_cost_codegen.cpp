#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "perfdojo/kernels.hpp"
#include "perfdojo/native.hpp"
#include "perfdojo/passes.hpp"

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

Program mul(const std::string& nest) {
  return parse_program("# kernel: mul\n# dims: N=8\n" + nest + "\n\nx f32 [N] heap\ny f32 [N] heap\nz f32 [N] heap\n");
}

// (indent, extent) of every emitted loop header, in source order.
std::vector<std::pair<std::size_t, std::int64_t>> loop_headers(const std::string& src) {
  std::vector<std::pair<std::size_t, std::int64_t>> out;
  std::regex re(R"(^( *)for \(long i\d+ = 0; i\d+ < (\d+);)");
  std::istringstream in(src);
  for (std::string line; std::getline(in, line);) {
    std::smatch m;
    if (std::regex_search(line, m, re)) out.push_back({m[1].length() / 2, std::stoll(m[2])});
  }
  return out;
}

std::vector<std::pair<std::size_t, std::int64_t>> scope_outline(const Program& p) {
  std::vector<std::pair<std::size_t, std::int64_t>> out;
  for_each_scope(p, [&](const Node& n, const NodePath& path) { out.push_back({path.size(), n.extent.value(p.dims)}); });
  return out;
}

}  // namespace

TEST(Cost, ElementwiseMultiply) {
  Program p = mul("N z[{0}]=x[{0}]*y[{0}]");
  CostReport r = cost(p);
  EXPECT_EQ(r.scalar_ops, 8);
  EXPECT_EQ(r.memory_traffic, 3 * 8 * 4);
  EXPECT_EQ(r.loop_overhead, 8);
  EXPECT_EQ(r.modeled_cost, 8 + 0.25 * 96 + 2 * 8);

  Program v = apply_move(apply_move(p, "split_scope z@0 4"), "set_suffix z@1 v");
  EXPECT_EQ(print_program(v).find("N/4\n| 4:v\n") != std::string::npos, true) << print_program(v);
  // Two tile rows, each one vector op.
  EXPECT_EQ(cost(v).scalar_ops, 2);
  EXPECT_EQ(cost(v).loop_overhead, 2 + 2);
}

TEST(Cost, UnrollAndParallel) {
  Program p = mul("N z[{0}]=x[{0}]*y[{0}]");
  EXPECT_EQ(cost(apply_move(p, "set_suffix z@0 u")).loop_overhead, 0);
  CostReport par = cost(apply_move(p, "set_suffix z@0 p"));
  EXPECT_EQ(par.scalar_ops, 8);
  EXPECT_EQ(par.modeled_cost, 2 + 0.25 * 96 + 2 * 2);
}

TEST(Cost, FusedAndReusedHasLessTraffic) {
  Program p = parse_program(kTwoStage);
  Program q = apply_move(apply_move(p, "join_scopes t@0"), "reuse_dims t[0]");
  EXPECT_LT(cost(q).memory_traffic, cost(p).memory_traffic);
  EXPECT_EQ(cost(p).memory_traffic - cost(q).memory_traffic, 7 * 4);
}

TEST(Cost, InvariantUnderInstructionOrder) {
  Program p = parse_program(
      "# dims: N=4\nN\n| a[{0}]=x[{0}]+1\n| b[{0}]=x[{0}]*2\n\nx f32 [N] heap\na f32 [N] heap\nb f32 [N] heap\n");
  Program q = apply_move(p, "reorder_instructions a");
  ASSERT_NE(print_program(p), print_program(q));
  EXPECT_EQ(cost(p).modeled_cost, cost(q).modeled_cost);
}

TEST(Cost, MonotoneOnCorpus) {
  Corpus c;
  for (const auto& name : c.names()) {
    // Walk the naive prefix so that reuse candidates exist.
    History h = naive_pass(c.load(name, "tiny").program);
    for (std::size_t i = 0; i <= h.size(); ++i) {
      const Program& at = h.at(i);
      CostReport base = cost(at);
      EXPECT_GT(base.modeled_cost, 0) << name;
      for (const auto& m : enumerate_moves(at)) {
        CostReport next = cost(apply_move(at, m));
        if (m.transform == "reuse_dims") {
          EXPECT_LE(next.memory_traffic, base.memory_traffic) << name << " " << m.str();
        } else if (m.transform == "reorder_instructions") {
          EXPECT_EQ(next.modeled_cost, base.modeled_cost) << name << " " << m.str();
        } else if (m.transform == "set_suffix" && m.param == "v") {
          EXPECT_LE(next.scalar_ops, base.scalar_ops) << name << " " << m.str();
        }
      }
    }
  }
}

TEST(Cost, CachingProviderCountsDistinctPrograms) {
  CostModelProvider cm;
  CachingProvider cache(cm);
  Program p = parse_program(kTwoStage);
  Program q = apply_move(p, "join_scopes t@0");
  EXPECT_EQ(cache.runtime(p), cm.runtime(p));
  cache.runtime(p);
  cache.runtime(q);
  EXPECT_EQ(cache.distinct(), 2u);
}

TEST(Codegen, StableAndStraightLine) {
  Program s = parse_program("# kernel: one\nz[0]=x[0]*2\n\nx f32 [1] heap\nz f32 [1] heap\n");
  EmitResult a = emit(s);
  EXPECT_EQ(a.source, emit(s).source);
  EXPECT_EQ(a.entry, "pd_one");
  EXPECT_EQ(a.signature, "void pd_one(const float* restrict x, float* restrict z)");
  EXPECT_EQ(a.source.find("for ("), std::string::npos);
  EXPECT_NE(a.source.find("z[0] = (float)((double)x[0] * 2.0);"), std::string::npos) << a.source;
}

TEST(Codegen, ReusedTemporaryIsScalar) {
  Program p = parse_program(kTwoStage);
  Program q = apply_move(apply_move(p, "join_scopes t@0"), "reuse_dims t[0]");
  EmitResult r = emit(q);
  EXPECT_NE(r.source.find("float* t = (float*)calloc(1, sizeof(float));"), std::string::npos) << r.source;
  EXPECT_NE(r.source.find("t[0] = "), std::string::npos);
  EXPECT_EQ(allocated_bytes(q, *q.buffer_named("t")), 4);
  EXPECT_EQ(allocated_bytes(p, *p.buffer_named("t")), 32);
  EXPECT_EQ(loop_headers(r.source).size(), 1u);
}

TEST(Codegen, SuffixPragmasAndStack) {
  Program p = mul("N z[{0}]=x[{0}]*y[{0}]");
  Program v = apply_move(apply_move(p, "split_scope z@0 4"), "set_suffix z@1 v");
  EXPECT_NE(emit(v).source.find("#pragma omp simd\n"), std::string::npos);
  EXPECT_NE(emit(apply_move(p, "set_suffix z@0 u")).source.find("#pragma GCC unroll 8\n"), std::string::npos);
  EXPECT_NE(emit(apply_move(p, "set_suffix z@0 p")).source.find("#pragma omp parallel for\n"), std::string::npos);

  Program t = apply_move(parse_program(kTwoStage), "set_location t[] stack");
  EXPECT_NE(emit(t).source.find("  float t[8];\n  memset(t, 0, sizeof t);\n"), std::string::npos) << emit(t).source;
}

TEST(Codegen, GpuSuffixUnsupported) {
  EngineConfig cfg;
  cfg.gpu_suffixes = true;
  Program p = apply_move(mul("N z[{0}]=x[{0}]*y[{0}]"), TransformMove{"set_suffix", parse_site("z@0"), "g"}, cfg);
  try {
    emit(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedBackend);
  }
}

TEST(Codegen, UnboundDims) {
  Program p = mul("N z[{0}]=x[{0}]*y[{0}]");
  p.dims = {};
  EXPECT_THROW(emit(p), Error);
  EXPECT_NO_THROW(emit(p, {{"N", 4}}));
}

TEST(Codegen, LoopHeadersMatchScopeTree) {
  KernelInstance k = load_kernel("softmax", "desk");
  for (const char* pass : {"naive", "greedy", "heuristic"}) {
    Program q = run_pass(pass, k.program).current();
    EXPECT_EQ(loop_headers(emit(q).source), scope_outline(q)) << pass;
  }
}

class Native : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!native_available()) GTEST_SKIP() << "no C compiler";
  }
};

TEST_F(Native, SoftmaxMatchesInterpreter) {
  KernelInstance k = load_kernel("softmax", "tiny");
  Program p = bind_dims(k.program, {{"N", 64}, {"M", 64}});
  for (const char* pass : {"naive", "greedy", "heuristic"}) {
    Program q = run_pass(pass, p).current();
    TensorEnv env = random_inputs(q, 3, k.ranges);
    NativeRun run = compile_and_run(q, env);
    auto ref = interpret(p, env);
    auto eq = compare_outputs(run.outputs, ref);
    EXPECT_TRUE(eq.equal) << pass << ": " << eq.detail;
    EXPECT_GT(run.seconds, 0);
    EXPECT_EQ(run.samples.size(), 5u);
  }
}

TEST_F(Native, CompileFailureCarriesDiagnostics) {
  NativeOptions o;
  o.flags.push_back("-DSOMETHING=(");
  o.flags.push_back("-include");
  o.flags.push_back("/nonexistent/header.h");
  try {
    compile_and_run(parse_program(kTwoStage), random_inputs(parse_program(kTwoStage), 1), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CompileFailure);
    EXPECT_NE(std::string(e.what()).find("header.h"), std::string::npos);
  }
}

TEST(Process, TimeoutKillsChild) {
  auto t0 = std::chrono::steady_clock::now();
  ProcessResult r = run_process({"sleep", "5"}, 0.2);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(dt, 2.0);
  ProcessResult ok = run_process({"sh", "-c", "echo hi; exit 3"}, 5);
  EXPECT_FALSE(ok.timed_out);
  EXPECT_EQ(ok.exit_code, 3);
  EXPECT_EQ(ok.output, "hi\n");
}
