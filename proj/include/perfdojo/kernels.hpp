#pragma once

// Operator corpus: textual programs on disk, a manifest of shape presets,
// and closed-form reference implementations.

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "perfdojo/interpreter.hpp"

#ifndef PERFDOJO_CORPUS_DIR
#define PERFDOJO_CORPUS_DIR "kernels"
#endif

namespace perfdojo {

using Oracle = std::function<std::map<std::string, Tensor>(const Program&, const TensorEnv&)>;

struct KernelInstance {
  std::string name;
  std::string preset;
  Program program;  // dims bound to the preset
  std::map<std::string, InputRange> ranges;
  Oracle oracle;

  TensorEnv inputs(std::uint64_t seed) const { return random_inputs(program, seed, ranges); }
};

inline std::string corpus_dir() {
  if (const char* env = std::getenv("PERFDOJO_CORPUS")) return env;
  return PERFDOJO_CORPUS_DIR;
}

namespace kernels_detail {

struct View {
  const Program& p;
  const TensorEnv& env;
  std::int64_t d(const char* s) const { return p.dims.at(s); }
  double c(const char* s) const { return p.consts.at(s); }
  const std::vector<double>& in(const char* a) const { return env.arrays.at(a).data; }
};

inline Tensor make(const Program& p, const std::string& array) {
  const BufferDecl* b = p.buffer_of(array);
  Tensor t;
  t.dtype = b->dtype;
  t.shape = logical_shape(p, *b);
  t.data.assign(static_cast<std::size_t>(t.size()), 0.0);
  return t;
}

using Outputs = std::map<std::string, Tensor>;

inline Outputs elementwise(const Program& p, const TensorEnv& env, const std::function<double(std::size_t)>& f) {
  Tensor z = make(p, "z");
  for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] = f(i);
  (void)env;
  return {{"z", z}};
}

inline Outputs add(const Program& p, const TensorEnv& env) {
  View v{p, env};
  return elementwise(p, env, [&](std::size_t i) { return v.in("x")[i] + v.in("y")[i]; });
}
inline Outputs mul(const Program& p, const TensorEnv& env) {
  View v{p, env};
  return elementwise(p, env, [&](std::size_t i) { return v.in("x")[i] * v.in("y")[i]; });
}
inline Outputs relu(const Program& p, const TensorEnv& env) {
  View v{p, env};
  return elementwise(p, env, [&](std::size_t i) { return std::max(v.in("x")[i], 0.0); });
}

inline Outputs softmax(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto N = v.d("N"), M = v.d("M");
  const auto& x = v.in("x");
  Tensor z = make(p, "z");
  for (std::int64_t i = 0; i < N; ++i) {
    double mx = x[static_cast<std::size_t>(i * M)];
    for (std::int64_t j = 0; j < M; ++j) mx = std::max(mx, x[static_cast<std::size_t>(i * M + j)]);
    double s = 0;
    for (std::int64_t j = 0; j < M; ++j) s += std::exp(x[static_cast<std::size_t>(i * M + j)] - mx);
    for (std::int64_t j = 0; j < M; ++j)
      z.data[static_cast<std::size_t>(i * M + j)] = std::exp(x[static_cast<std::size_t>(i * M + j)] - mx) / s;
  }
  return {{"z", z}};
}

inline Outputs layernorm(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto N = v.d("N"), M = v.d("M");
  const auto& x = v.in("x");
  Tensor z = make(p, "z");
  for (std::int64_t i = 0; i < N; ++i) {
    double mean = 0, var = 0;
    for (std::int64_t j = 0; j < M; ++j) mean += x[static_cast<std::size_t>(i * M + j)];
    mean /= static_cast<double>(M);
    for (std::int64_t j = 0; j < M; ++j) var += std::pow(x[static_cast<std::size_t>(i * M + j)] - mean, 2);
    var /= static_cast<double>(M);
    for (std::int64_t j = 0; j < M; ++j)
      z.data[static_cast<std::size_t>(i * M + j)] = (x[static_cast<std::size_t>(i * M + j)] - mean) / std::sqrt(var + v.c("E"));
  }
  return {{"z", z}};
}

inline Outputs rmsnorm(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto N = v.d("N"), M = v.d("M");
  const auto& x = v.in("x");
  const auto& w = v.in("w");
  Tensor z = make(p, "z");
  for (std::int64_t i = 0; i < N; ++i) {
    double ms = 0;
    for (std::int64_t j = 0; j < M; ++j) ms += std::pow(x[static_cast<std::size_t>(i * M + j)], 2);
    double r = 1 / std::sqrt(ms / static_cast<double>(M) + v.c("E"));
    for (std::int64_t j = 0; j < M; ++j)
      z.data[static_cast<std::size_t>(i * M + j)] = x[static_cast<std::size_t>(i * M + j)] * r * w[static_cast<std::size_t>(j)];
  }
  return {{"z", z}};
}

inline Outputs reducemean(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto N = v.d("N"), M = v.d("M");
  const auto& x = v.in("x");
  Tensor z = make(p, "z");
  for (std::int64_t i = 0; i < N; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < M; ++j) s += x[static_cast<std::size_t>(i * M + j)];
    z.data[static_cast<std::size_t>(i)] = s / static_cast<double>(M);
  }
  return {{"z", z}};
}

inline Outputs batchnorm(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto B = v.d("B"), C = v.d("C"), H = v.d("H"), W = v.d("W");
  const auto& x = v.in("x");
  Tensor z = make(p, "z");
  auto at = [&](std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return static_cast<std::size_t>(((b * C + c) * H + h) * W + w);
  };
  double n = static_cast<double>(B * H * W);
  for (std::int64_t c = 0; c < C; ++c) {
    double mean = 0, var = 0;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) mean += x[at(b, c, h, w)];
    mean /= n;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) var += std::pow(x[at(b, c, h, w)] - mean, 2);
    var /= n;
    double inv = 1 / std::sqrt(var + v.c("E"));
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) z.data[at(b, c, h, w)] = (x[at(b, c, h, w)] - mean) * inv;
  }
  return {{"z", z}};
}

/// z[b] = x[b] (n x k) times y[b] (k x m) for every batch b.
inline void matmul_into(const double* x, const double* y, double* z, std::int64_t n, std::int64_t k, std::int64_t m) {
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::int64_t l = 0; l < k; ++l) s += x[i * k + l] * y[l * m + j];
      z[i * m + j] = s;
    }
}

inline Outputs matmul(const Program& p, const TensorEnv& env) {
  View v{p, env};
  Tensor z = make(p, "z");
  matmul_into(v.in("x").data(), v.in("y").data(), z.data.data(), v.d("N"), v.d("K"), v.d("M"));
  return {{"z", z}};
}

inline Outputs bmm(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto B = v.d("B"), N = v.d("N"), K = v.d("K"), M = v.d("M");
  Tensor z = make(p, "z");
  for (std::int64_t b = 0; b < B; ++b)
    matmul_into(v.in("x").data() + b * N * K, v.in("y").data() + b * K * M, z.data.data() + b * N * M, N, K, M);
  return {{"z", z}};
}

inline Outputs swiglu(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto rows = v.d("B") * v.d("N"), D = v.d("D"), H = v.d("H");
  std::vector<double> a(static_cast<std::size_t>(rows * H)), g(a.size());
  matmul_into(v.in("x").data(), v.in("w").data(), a.data(), rows, D, H);
  matmul_into(v.in("x").data(), v.in("v").data(), g.data(), rows, D, H);
  Tensor z = make(p, "z");
  for (std::size_t i = 0; i < a.size(); ++i) z.data[i] = a[i] / (1 + std::exp(-a[i])) * g[i];
  return {{"z", z}};
}

inline Outputs relu_ffn(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto rows = v.d("B") * v.d("S"), D = v.d("D"), H = v.d("H");
  std::vector<double> h(static_cast<std::size_t>(rows * H));
  matmul_into(v.in("x").data(), v.in("w1").data(), h.data(), rows, D, H);
  for (auto& e : h) e = std::max(e, 0.0);
  Tensor z = make(p, "z");
  matmul_into(h.data(), v.in("w2").data(), z.data.data(), rows, H, D);
  return {{"z", z}};
}

inline Outputs conv(const Program& p, const TensorEnv& env) {
  View v{p, env};
  auto B = v.d("B"), O = v.d("O"), C = v.d("C"), H = v.d("H"), W = v.d("W"), K = v.d("K"), X = v.d("X"),
       Y = v.d("Y");
  const auto& x = v.in("x");
  const auto& f = v.in("f");
  Tensor z = make(p, "z");
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          double s = 0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < K; ++i)
              for (std::int64_t j = 0; j < K; ++j)
                s += x[static_cast<std::size_t>(((b * C + c) * X + h + i) * Y + w + j)] *
                     f[static_cast<std::size_t>(((o * C + c) * K + i) * K + j)];
          z.data[static_cast<std::size_t>(((b * O + o) * H + h) * W + w)] = s;
        }
  return {{"z", z}};
}

inline Outputs twostage(const Program& p, const TensorEnv& env) {
  View v{p, env};
  Tensor y = make(p, "y");
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = v.in("x")[i] * 2 + 1;
  return {{"y", y}};
}

inline const std::map<std::string, Oracle>& oracles() {
  static const std::map<std::string, Oracle> m{
      {"add", add},         {"mul", mul},     {"relu", relu},           {"softmax", softmax},
      {"layernorm", layernorm}, {"rmsnorm", rmsnorm}, {"reducemean", reducemean}, {"batchnorm", batchnorm},
      {"bmm", bmm},         {"matmul", matmul}, {"swiglu", swiglu},     {"relu_ffn", relu_ffn},
      {"conv", conv},       {"twostage", twostage},
  };
  return m;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace kernels_detail

class Corpus {
 public:
  explicit Corpus(std::string dir = corpus_dir()) : dir_(std::move(dir)) {
    manifest_ = nlohmann::json::parse(kernels_detail::read_file(std::filesystem::path(dir_) / "manifest.json"));
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : manifest_.at("kernels").items()) out.push_back(k);
    return out;
  }

  /// The operators of the benchmark table (the corpus minus auxiliary kernels).
  std::vector<std::string> operators() const {
    auto all = names();
    std::erase(all, "twostage");
    return all;
  }

  std::vector<std::string> presets(const std::string& name) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entry(name).at("presets").items()) out.push_back(k);
    return out;
  }

  /// Program text exactly as stored on disk.
  std::string source(const std::string& name) const {
    return kernels_detail::read_file(std::filesystem::path(dir_) / entry(name).at("file").get<std::string>());
  }

  KernelInstance load(const std::string& name, const std::string& preset = "desk") const {
    const auto& e = entry(name);
    KernelInstance k;
    k.name = name;
    k.preset = preset;
    k.program = parse_program(source(name));
    if (!e.at("presets").contains(preset))
      throw Error(ErrorCode::UnknownKernel, "kernel '" + name + "' has no preset '" + preset + "'");
    for (const auto& [sym, val] : e.at("presets").at(preset).items()) k.program.dims.set(sym, val.get<std::int64_t>());
    if (e.contains("inputs"))
      for (const auto& [arr, r] : e.at("inputs").items()) k.ranges[arr] = InputRange{r.at(0), r.at(1)};
    auto it = kernels_detail::oracles().find(name);
    if (it != kernels_detail::oracles().end()) k.oracle = it->second;
    return k;
  }

 private:
  const nlohmann::json& entry(const std::string& name) const {
    const auto& ks = manifest_.at("kernels");
    if (!ks.contains(name)) throw Error(ErrorCode::UnknownKernel, "unknown kernel '" + name + "'");
    return ks.at(name);
  }

  std::string dir_;
  nlohmann::json manifest_;
};

inline KernelInstance load_kernel(const std::string& name, const std::string& preset = "desk") {
  return Corpus().load(name, preset);
}

}  // namespace perfdojo
