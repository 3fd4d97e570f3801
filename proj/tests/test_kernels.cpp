#include <gtest/gtest.h>

#include "perfdojo/kernels.hpp"

using namespace perfdojo;

namespace {

bool close(const std::map<std::string, Tensor>& got, const std::map<std::string, Tensor>& want, double rtol) {
  for (const auto& [name, w] : want) {
    const auto& g = got.at(name).data;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::fabs(g[i] - w.data[i]) > 1e-5 + rtol * std::fabs(w.data[i])) return false;
  }
  return true;
}

}  // namespace

TEST(Corpus, ContainsTheOperatorTable) {
  Corpus c;
  std::vector<std::string> want{"add",  "batchnorm", "bmm",   "conv",    "layernorm", "matmul", "mul",
                                "reducemean", "relu", "relu_ffn", "rmsnorm", "softmax", "swiglu"};
  auto ops = c.operators();
  std::sort(ops.begin(), ops.end());
  EXPECT_EQ(ops, want);
  EXPECT_THROW(c.load("nonexistent"), Error);
  EXPECT_THROW(c.load("add", "huge"), Error);
}

class EachKernel : public ::testing::TestWithParam<std::string> {};

TEST_P(EachKernel, ValidatesRoundTripsAndMatchesOracle) {
  Corpus c;
  for (const std::string preset : {"tiny", "desk"}) {
    KernelInstance k = c.load(GetParam(), preset);
    EXPECT_TRUE(validate(k.program).empty()) << GetParam();
    EXPECT_EQ(parse_program(print_program(k.program)), k.program);
    for (std::uint64_t seed : {1u, 2u}) {
      TensorEnv env = k.inputs(seed);
      EXPECT_TRUE(close(interpret(k.program, env), k.oracle(k.program, env), 1e-4)) << GetParam() << " " << preset;
    }
  }
  Program raw = parse_program(c.source(GetParam()));
  EXPECT_EQ(print_program(parse_program(print_program(raw))), print_program(raw));
}

INSTANTIATE_TEST_SUITE_P(Corpus, EachKernel,
                         ::testing::Values("add", "mul", "relu", "softmax", "layernorm", "rmsnorm", "reducemean",
                                           "batchnorm", "bmm", "matmul", "swiglu", "relu_ffn", "conv", "twostage"));

TEST(Kernels, ReluOfNegativesIsZero) {
  KernelInstance k = load_kernel("relu", "tiny");
  TensorEnv env = k.inputs(1);
  for (auto& v : env.arrays["x"].data) v = -std::fabs(v) - 0.5;
  auto out = interpret(k.program, env);
  for (double v : out.at("z").data) EXPECT_EQ(v, 0.0);
}

TEST(Kernels, Matmul4x4x4MatchesTripleLoop) {
  KernelInstance k = load_kernel("matmul", "tiny");
  ASSERT_EQ(k.program.dims.at("N"), 4);
  TensorEnv env = k.inputs(8);
  const auto& x = env.arrays["x"].data;
  const auto& y = env.arrays["y"].data;
  auto z = interpret(k.program, env).at("z").data;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int l = 0; l < 4; ++l) s += x[i * 4 + l] * y[l * 4 + j];
      EXPECT_NEAR(z[i * 4 + j], s, 1e-5);
    }
}
