#include <gtest/gtest.h>

#include "perfdojo/kernels.hpp"
#include "perfdojo/transforms.hpp"

using namespace perfdojo;

namespace {

Tensor filled(std::vector<std::int64_t> shape, std::vector<double> data) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(data);
  return t;
}

}  // namespace

TEST(Interpret, SoftmaxMatchesClosedForm) {
  KernelInstance k = load_kernel("softmax", "desk");
  k.program.dims.set("N", 2);
  k.program.dims.set("M", 3);
  TensorEnv env;
  env.arrays["x"] = filled({2, 3}, {0.1, -0.5, 0.3, -2.0, 0.0, 1.5});
  auto z = interpret(k.program, env).at("z").data;
  std::vector<double> rows[2] = {{0.1, -0.5, 0.3}, {-2.0, 0.0, 1.5}};
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (double v : rows[i]) s += std::exp(v);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(z[i * 3 + j], std::exp(rows[i][j]) / s, 1e-6 * std::exp(rows[i][j]) / s);
  }
}

TEST(Interpret, MultiplyByZeros) {
  Program p = parse_program("# dims: N=2 M=3\nN M z[{0},{1}]=x[{0},{1}]*y[{0},{1}]\n\n"
                            "x f32 [N, M] heap\ny f32 [N, M] heap\nz f32 [N, M] heap\n");
  TensorEnv env = random_inputs(p, 3);
  env.arrays["y"].data.assign(6, 0.0);
  auto out = interpret(p, env);
  for (double v : out.at("z").data) EXPECT_EQ(v, 0.0);
}

TEST(Interpret, ReductionCountsOnes) {
  Program p = parse_program("# dims: N=2 M=5\nN M z[{0}]+=x[{0},{1}]\n\nx f32 [N, M] heap\nz f32 [N] heap\n");
  TensorEnv env;
  env.arrays["x"] = filled({2, 5}, std::vector<double>(10, 1.0));
  EXPECT_EQ(interpret(p, env).at("z").data, (std::vector<double>{5, 5}));
}

TEST(Interpret, DimensionOverridesAndErrors) {
  Program p = parse_program("# dims: N=4\nN z[{0}]=x[{0}]+{0}\n\nx f32 [N] heap\nz f32 [N] heap\n");
  TensorEnv env;
  env.dims.set("N", 2);
  env.arrays["x"] = filled({2}, {1, 1});
  EXPECT_EQ(interpret(p, env).at("z").data, (std::vector<double>{1, 2}));
  env.arrays["x"] = filled({3}, {1, 1, 1});
  EXPECT_THROW(interpret(p, env), Error);
  Program q = p;
  q.dims = {};
  try {
    interpret(q, random_inputs(p, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnboundSymbol);
  }
}

TEST(Interpret, StoresRoundToType) {
  Program p = parse_program("3 z[{0}]=x[{0}]/3\n3 w[{0}]=x[{0}]/3\n\nx f64 [3] heap\nz f32 [3] heap\nw i32 [3] heap\n");
  TensorEnv env;
  env.arrays["x"] = filled({3}, {1, 7, -7});
  auto out = interpret(p, env);
  EXPECT_EQ(out.at("z").data[0], static_cast<double>(static_cast<float>(1.0 / 3)));
  EXPECT_EQ(out.at("w").data, (std::vector<double>{0, 2, -2}));
}

TEST(Interpret, SuffixesDoNotChangeResults) {
  Program p = parse_program("# dims: N=4 M=4\nN M z[{0},{1}]=x[{0},{1}]*2\n\nx f32 [N, M] heap\nz f32 [N, M] heap\n");
  Program q = apply_move(apply_move(p, "set_suffix z@0 p"), "set_suffix z@1 v");
  TensorEnv env = random_inputs(p, 9);
  EXPECT_EQ(interpret(p, env).at("z").data, interpret(q, env).at("z").data);
}

TEST(Interpret, BitwiseDeterministic) {
  KernelInstance k = load_kernel("layernorm", "tiny");
  TensorEnv env = k.inputs(4);
  EXPECT_EQ(interpret(k.program, env).at("z").data, interpret(k.program, env).at("z").data);
}

TEST(Equivalent, SelfIsExact) {
  KernelInstance k = load_kernel("softmax", "tiny");
  auto r = equivalent(k.program, k.program, 3, 11, k.ranges);
  EXPECT_TRUE(r.equal);
  EXPECT_EQ(r.max_error, 0.0);
}

TEST(Equivalent, InterfaceMismatchIsAnError) {
  KernelInstance a = load_kernel("add", "tiny");
  KernelInstance b = load_kernel("mul", "tiny");
  try {
    equivalent(a.program, b.program, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InterfaceMismatch);
  }
}

TEST(RandomInputs, RangesFollowKernelKind) {
  KernelInstance sm = load_kernel("softmax", "tiny");
  TensorEnv se = sm.inputs(5);
  for (double v : se.arrays.at("x").data) {
    EXPECT_GE(v, -4.0);
    EXPECT_LE(v, 0.0);
  }
  KernelInstance add = load_kernel("add", "tiny");
  TensorEnv ae = add.inputs(5);
  for (double v : ae.arrays.at("x").data) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(add.inputs(5).arrays.at("x").data, add.inputs(5).arrays.at("x").data);
}
