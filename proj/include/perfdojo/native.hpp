#pragma once

// Native measurement path: emit C, compile it with the system compiler into
// a small harness, run it in a child process with a deadline, and read back
// outputs and the median wall time.

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "perfdojo/codegen.hpp"
#include "perfdojo/cost.hpp"

namespace perfdojo {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string output;  // stdout and stderr combined
};

/// Runs `argv` with a wall-clock limit; the child is killed on expiry.
inline ProcessResult run_process(const std::vector<std::string>& argv, double timeout_seconds) {
  namespace fs = std::filesystem;
  static std::atomic<int> counter{0};
  fs::path log = fs::temp_directory_path() /
                 ("perfdojo-proc-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".log");
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::Internal, "fork failed");
  if (pid == 0) {
    int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd >= 0) {
      ::dup2(fd, 1);
      ::dup2(fd, 2);
      ::close(fd);
    }
    ::setpgid(0, 0);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ProcessResult r;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  int status = 0;
  while (true) {
    pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (std::chrono::steady_clock::now() > deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      r.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (!r.timed_out) r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  std::ifstream in(log);
  r.output.assign(std::istreambuf_iterator<char>(in), {});
  std::error_code ec;
  fs::remove(log, ec);
  return r;
}

struct NativeOptions {
  std::string compiler = std::getenv("CC") ? std::getenv("CC") : "cc";
  std::vector<std::string> flags{"-O2", "-std=c99", "-fopenmp"};
  int warmups = 1;
  int repetitions = 5;
  double compile_timeout = 60;
  double run_timeout = 30;
};

inline bool native_available(const NativeOptions& o = {}) {
  try {
    return run_process({o.compiler, "--version"}, 10).exit_code == 0;
  } catch (const Error&) {
    return false;
  }
}

struct NativeRun {
  std::map<std::string, Tensor> outputs;
  double seconds = 0;  // median over repetitions
  std::vector<double> samples;
};

namespace native_detail {

inline std::string harness(const Program& p, const EmitResult& k, const NativeOptions& o) {
  std::string s = "#define _POSIX_C_SOURCE 199309L\n" + k.source;
  s += "\n#include <stdio.h>\n#include <time.h>\n\n";
  s += "static double now(void) { struct timespec t; clock_gettime(CLOCK_MONOTONIC, &t); "
       "return t.tv_sec + 1e-9 * t.tv_nsec; }\n\n";
  s += "int main(int argc, char** argv) {\n  if (argc < 3) return 2;\n";
  s += "  FILE* in = fopen(argv[1], \"rb\");\n  if (!in) return 3;\n";
  std::vector<std::string> args;
  for (const auto& name : k.parameters) {
    const BufferDecl* b = p.buffer_named(name);
    std::string n = std::to_string(b->footprint_elements(p.dims));
    std::string t = c_type(b->dtype);
    s += "  " + t + "* " + name + " = (" + t + "*)calloc(" + n + ", sizeof(" + t + "));\n";
    if (std::find(p.inputs.begin(), p.inputs.end(), b->arrays[0]) != p.inputs.end()) {
      s += "  for (long k = 0; k < " + n + "; ++k) { double v; if (fread(&v, sizeof v, 1, in) != 1) return 4; " +
           name + "[k] = (" + t + ")v; }\n";
    }
    args.push_back(name);
  }
  std::string call = k.entry + "(";
  for (std::size_t i = 0; i < args.size(); ++i) call += (i ? ", " : "") + args[i];
  call += ");";
  s += "  fclose(in);\n";
  s += "  for (int w = 0; w < " + std::to_string(o.warmups) + "; ++w) { " + call + " }\n";
  int reps = std::max(1, o.repetitions);
  s += "  double ts[" + std::to_string(reps) + "];\n";
  s += "  for (int r = 0; r < " + std::to_string(reps) + "; ++r) { double t0 = now(); " + call +
       " ts[r] = now() - t0; }\n";
  s += "  FILE* out = fopen(argv[2], \"wb\");\n  if (!out) return 5;\n";
  for (const auto& name : k.parameters) {
    const BufferDecl* b = p.buffer_named(name);
    if (std::find(p.outputs.begin(), p.outputs.end(), b->arrays[0]) == p.outputs.end()) continue;
    std::string n = std::to_string(b->footprint_elements(p.dims));
    s += "  for (long k = 0; k < " + n + "; ++k) { double v = (double)" + name + "[k]; fwrite(&v, sizeof v, 1, out); }\n";
  }
  s += "  fclose(out);\n";
  s += "  for (int r = 0; r < " + std::to_string(reps) + "; ++r) printf(\"%.9e\\n\", ts[r]);\n";
  s += "  return 0;\n}\n";
  return s;
}

inline std::filesystem::path scratch_dir() {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("perfdojo-native-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace native_detail

/// Compiles and runs `program` natively on the inputs in `env`.
inline NativeRun compile_and_run(const Program& program, const TensorEnv& env, const NativeOptions& o = {}) {
  namespace fs = std::filesystem;
  Program p = bind_dims(program, env.dims);
  EmitResult k = emit(p);
  fs::path dir = native_detail::scratch_dir();
  struct Cleanup {
    fs::path d;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(d, ec);
    }
  } cleanup{dir};

  std::ofstream(dir / "kernel.c") << native_detail::harness(p, k, o);
  std::vector<std::string> cc{o.compiler};
  cc.insert(cc.end(), o.flags.begin(), o.flags.end());
  cc.insert(cc.end(), {(dir / "kernel.c").string(), "-o", (dir / "kernel").string(), "-lm"});
  ProcessResult c = run_process(cc, o.compile_timeout);
  if (c.timed_out) throw Error(ErrorCode::Timeout, "compilation exceeded " + std::to_string(o.compile_timeout) + " s");
  if (c.exit_code != 0) throw Error(ErrorCode::CompileFailure, c.output);

  {
    std::ofstream in(dir / "in.bin", std::ios::binary);
    for (const auto& name : k.parameters) {
      const BufferDecl* b = p.buffer_named(name);
      if (std::find(p.inputs.begin(), p.inputs.end(), b->arrays[0]) == p.inputs.end()) continue;
      auto it = env.arrays.find(b->arrays[0]);
      if (it == env.arrays.end()) throw Error(ErrorCode::ShapeMismatch, "input '" + name + "' is missing");
      if (it->second.shape != logical_shape(p, *b))
        throw Error(ErrorCode::ShapeMismatch, "input '" + name + "' has the wrong shape");
      in.write(reinterpret_cast<const char*>(it->second.data.data()),
               static_cast<std::streamsize>(it->second.data.size() * sizeof(double)));
    }
  }
  ProcessResult run = run_process({(dir / "kernel").string(), (dir / "in.bin").string(), (dir / "out.bin").string()},
                                  o.run_timeout);
  if (run.timed_out) throw Error(ErrorCode::Timeout, "kernel exceeded " + std::to_string(o.run_timeout) + " s");
  if (run.exit_code != 0) throw Error(ErrorCode::Internal, "kernel harness failed: " + run.output);

  NativeRun r;
  std::ifstream out(dir / "out.bin", std::ios::binary);
  for (const auto& name : k.parameters) {
    const BufferDecl* b = p.buffer_named(name);
    if (std::find(p.outputs.begin(), p.outputs.end(), b->arrays[0]) == p.outputs.end()) continue;
    Tensor t;
    t.dtype = b->dtype;
    t.shape = logical_shape(p, *b);
    t.data.resize(static_cast<std::size_t>(t.size()));
    out.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    r.outputs[b->arrays[0]] = std::move(t);
  }
  std::istringstream times(run.output);
  for (double v; times >> v;) r.samples.push_back(v);
  if (r.samples.empty()) throw Error(ErrorCode::Internal, "kernel harness printed no timings");
  auto sorted = r.samples;
  std::sort(sorted.begin(), sorted.end());
  r.seconds = sorted[sorted.size() / 2];
  return r;
}

/// Measured wall time as the runtime signal. Measurements are serialized.
class NativeProvider : public RuntimeProvider {
 public:
  explicit NativeProvider(NativeOptions o = {}, std::uint64_t seed = 1) : o_(std::move(o)), seed_(seed) {}
  double runtime(const Program& p) override {
    std::lock_guard<std::mutex> lock(mu_);
    return compile_and_run(p, random_inputs(p, seed_), o_).seconds;
  }
  std::string name() const override { return "native"; }

 private:
  NativeOptions o_;
  std::uint64_t seed_;
  std::mutex mu_;
};

}  // namespace perfdojo
