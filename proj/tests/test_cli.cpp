#include <gtest/gtest.h>

#include "perfdojo/dojo/service.hpp"
#include "perfdojo/rl/qnet.hpp"

using namespace perfdojo;
using nlohmann::json;

namespace {

ProcessResult cli(std::vector<std::string> args, double timeout = 120) {
  args.insert(args.begin(), PERFDOJO_CLI);
  return run_process(args, timeout);
}

const std::filesystem::path scratch_dir =
    std::filesystem::temp_directory_path() / ("perfdojo-cli-" + std::to_string(::getpid()));

struct RemoveScratch {
  ~RemoveScratch() {
    std::error_code ec;
    std::filesystem::remove_all(scratch_dir, ec);
  }
} remove_scratch;

std::filesystem::path scratch(const std::string& name) {
  std::filesystem::create_directories(scratch_dir);
  return scratch_dir / name;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, EverySubcommandPrintsItsSeed) {
  std::vector<std::vector<std::string>> runs{
      {"validate", "twostage", "--preset", "tiny"},
      {"fuzz", "--kernels", "mul", "--sequences", "3", "--max-len", "4"},
      {"optimize", "twostage", "--preset", "tiny", "--pass", "naive"},
      {"search", "twostage", "--preset", "tiny", "--budget", "5"},
      {"train", "twostage", "--preset", "tiny", "--episodes", "2"},
      {"emit", "twostage", "--preset", "tiny", "--out", scratch("seed.c").string()},
  };
  if (native_available()) runs.push_back({"bench", "twostage", "--preset", "tiny", "--passes", "naive"});
  for (auto args : runs) {
    args.insert(args.end(), {"--seed", "7"});
    ProcessResult r = cli(args);
    EXPECT_EQ(r.exit_code, 0) << args[0] << "\n" << r.output;
    EXPECT_NE(r.output.find("seed: 7\n"), std::string::npos) << args[0] << "\n" << r.output;
  }
  ProcessResult serve = cli({"serve", "--port", "0", "--seed", "7"}, 1.0);
  EXPECT_TRUE(serve.timed_out);
  EXPECT_NE(serve.output.find("seed: 7\n"), std::string::npos) << serve.output;
}

TEST(Cli, FuzzReportsZeroViolations) {
  ProcessResult r = cli({"fuzz", "--kernels", "add,twostage", "--sequences", "20", "--max-len", "20", "--format", "json"});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  json j = json::parse(r.output);
  EXPECT_EQ(j["violations"], 0);
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["sequences"], 20);
}

TEST(Cli, OptimizeReportsLogAndCostDelta) {
  ProcessResult r = cli({"optimize", "twostage", "--preset", "tiny", "--pass", "naive", "--format", "json"});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  json j = json::parse(r.output);
  EXPECT_EQ(j["log"], "join_scopes t@0\nreuse_dims t[0]\n");
  EXPECT_EQ(j["cost_delta"], j["final_cost"].get<double>() - j["root_cost"].get<double>());
  EXPECT_LT(j["cost_delta"].get<double>(), 0);
  EXPECT_EQ(j["equivalent"], true);
}

TEST(Cli, LogReplayMatchesTheService) {
  const std::string log = "join_scopes m#0@0\nsplit_scope z@1 4\nset_suffix z@0 p\n";
  auto log_file = scratch("moves.txt"), program_file = scratch("program.pd");
  write(log_file, log);
  ProcessResult r = cli({"optimize", "softmax", "--log", log_file.string(), "--program-out", program_file.string(),
                         "--format", "json"});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  json j = json::parse(r.output);

  dojo::Service svc({});
  std::string id = svc.create_session({{"kernel", "softmax"}, {"preset", "desk"}})["id"];
  std::istringstream in(log);
  for (std::string m; std::getline(in, m);) svc.apply_move(id, {{"move", m}});
  json st = svc.get_state(id);
  EXPECT_EQ(kernels_detail::read_file(program_file), st["program"].get<std::string>());
  ASSERT_EQ(j["rows"].size(), st["costs"].size());
  for (std::size_t i = 0; i < st["costs"].size(); ++i)
    for (const char* k : {"scalar_ops", "memory_traffic", "loop_overhead", "modeled_cost"})
      EXPECT_EQ(j["rows"][i][k], st["costs"][i][k]) << i << " " << k;
}

TEST(Cli, SearchIsReproducibleFromItsSeed) {
  std::vector<std::string> args{"search", "softmax", "--preset", "tiny", "--budget", "40", "--format", "csv"};
  auto with_seed = [&](const char* s) {
    auto a = args;
    a.insert(a.end(), {"--seed", s});
    return cli(a);
  };
  ProcessResult a = with_seed("11"), b = with_seed("11"), c = with_seed("12");
  ASSERT_EQ(a.exit_code, 0) << a.output;
  EXPECT_EQ(a.output, b.output);
  EXPECT_NE(a.output, c.output);
  EXPECT_EQ(a.output.rfind("# seed: 11\nevaluation,cost,best\n", 0), 0u) << a.output;
}

TEST(Cli, EmitIsDeterministic) {
  auto f = scratch("a.c"), g = scratch("b.c");
  ASSERT_EQ(cli({"emit", "softmax", "--out", f.string()}).exit_code, 0);
  ASSERT_EQ(cli({"emit", "softmax", "--out", g.string(), "--seed", "99"}).exit_code, 0);
  EXPECT_EQ(kernels_detail::read_file(f), kernels_detail::read_file(g));
  EXPECT_EQ(kernels_detail::read_file(f), emit(load_kernel("softmax").program).source);
}

TEST(Cli, TrainWritesCheckpointAndCurve) {
  auto ckpt = scratch("q.txt"), curve = scratch("curve.csv");
  ProcessResult r = cli({"train", "twostage", "--preset", "tiny", "--episodes", "3", "--checkpoint", ckpt.string(),
                         "--curve", curve.string(), "--format", "json", "--config", scratch("train.json").string()},
                        120);
  // The settings file does not exist yet.
  EXPECT_EQ(r.exit_code, 2);
  write(scratch("train.json"), R"({"training": {"hidden": 16}})");
  r = cli({"train", "twostage", "--preset", "tiny", "--episodes", "3", "--checkpoint", ckpt.string(), "--curve",
           curve.string(), "--format", "json", "--config", scratch("train.json").string()});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  json j = json::parse(r.output);
  EXPECT_LE(j["best_cost"].get<double>(), j["root_cost"].get<double>());
  EXPECT_EQ(j["rows"].size(), 3u);
  std::ifstream in(ckpt);
  rl::QNetwork net = rl::QNetwork::load(in);
  EXPECT_EQ(net.hidden(), 16);
  EXPECT_EQ(kernels_detail::read_file(curve).rfind("episode,epsilon,moves,", 0), 0u);
}

TEST(Cli, SettingsFromFileAndEnvironment) {
  auto cfg = scratch("machine.json");
  write(cfg, R"({"machine": {"overhead_weight": 0}})");
  auto cost_with = [&](std::vector<std::string> pre) {
    std::vector<std::string> args = pre;
    args.push_back(PERFDOJO_CLI);
    args.insert(args.end(), {"optimize", "twostage", "--preset", "tiny", "--pass", "naive", "--format", "json"});
    ProcessResult r = run_process(args, 60);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    return json::parse(r.output)["root_cost"].get<double>();
  };
  double base = cost_with({"env"});
  EXPECT_EQ(base, cost(load_kernel("twostage", "tiny").program).modeled_cost);
  double no_overhead = cost_with({"env", "PERFDOJO_CONFIG=" + cfg.string()});
  EXPECT_EQ(no_overhead, base - 2.0 * cost(load_kernel("twostage", "tiny").program).loop_overhead);

  write(cfg, R"({"machine": {"cores": 2, "typo": 1}})");
  ProcessResult bad = cli({"optimize", "twostage", "--pass", "naive", "--config", cfg.string()});
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_NE(bad.output.find("machine.typo"), std::string::npos) << bad.output;
}

TEST(Cli, FailuresExitNonzeroWithStructuredMessage) {
  ProcessResult r = cli({"optimize", "nope", "--pass", "naive", "--format", "json"});
  EXPECT_EQ(r.exit_code, 2);
  json j = json::parse(r.output);
  EXPECT_EQ(j["code"], "unknown-kernel");
  EXPECT_EQ(j["seed"], 1);

  auto log_file = scratch("bad.txt");
  write(log_file, "reuse_dims t[0]\n");
  r = cli({"optimize", "twostage", "--preset", "tiny", "--log", log_file.string()});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("move 0"), std::string::npos) << r.output;
  EXPECT_NE(cli({"search", "softmax", "--method", "bogus"}).exit_code, 0);
}
