// perfdojo: batch entry points over the corpus, the transformation engine,
// the passes, the searches, the RL agent, the code generator and the dojo.

#include <iostream>

#include "CLI11.hpp"
#include "perfdojo/fuzz.hpp"
#include "perfdojo/settings.hpp"
// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen's headers.
#include "perfdojo/dojo/http.hpp"

using namespace perfdojo;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string format = "text";
  std::string config;
  std::string corpus;
};

/// A report: scalar fields plus one table. Printed as aligned text, CSV
/// (table only, seed as a leading comment) or one JSON object.
struct Report {
  json fields = json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void row(std::vector<json> r) { rows.push_back(std::move(r)); }
};

std::string cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v.get<double>());
    return buf;
  }
  return v.dump();
}

std::string csv_cell(const json& v) {
  std::string s = cell(v);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

void print(const Report& r, const Common& c) {
  if (c.format == "json") {
    json out = r.fields;
    out["seed"] = c.seed;
    if (!r.columns.empty()) {
      json rows = json::array();
      for (const auto& row : r.rows) {
        json o = json::object();
        for (std::size_t i = 0; i < r.columns.size(); ++i) o[r.columns[i]] = row[i];
        rows.push_back(std::move(o));
      }
      out["rows"] = rows;
    }
    std::cout << out.dump(2) << "\n";
    return;
  }
  if (c.format == "csv") {
    std::cout << "# seed: " << c.seed << "\n";
    for (std::size_t i = 0; i < r.columns.size(); ++i) std::cout << (i ? "," : "") << r.columns[i];
    if (!r.columns.empty()) std::cout << "\n";
    for (const auto& row : r.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) std::cout << (i ? "," : "") << csv_cell(row[i]);
      std::cout << "\n";
    }
    return;
  }
  std::cout << "seed: " << c.seed << "\n";
  for (const auto& [k, v] : r.fields.items()) {
    std::string s = cell(v);
    if (s.find('\n') != std::string::npos) {
      std::cout << k << ":\n";
      std::istringstream in(s);
      for (std::string line; std::getline(in, line);) std::cout << "  " << line << "\n";
    } else {
      std::cout << k << ": " << s << "\n";
    }
  }
  if (r.columns.empty()) return;
  std::vector<std::size_t> width(r.columns.size());
  for (std::size_t i = 0; i < r.columns.size(); ++i) width[i] = r.columns[i].size();
  for (const auto& row : r.rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], cell(row[i]).size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += cells[i];
      if (i + 1 < cells.size()) out += std::string(width[i] - cells[i].size() + 2, ' ');
    }
    std::cout << out << "\n";
  };
  line(r.columns);
  for (const auto& row : r.rows) {
    std::vector<std::string> cells;
    for (const auto& v : row) cells.push_back(cell(v));
    line(cells);
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
}

Corpus corpus_of(const Common& c) { return c.corpus.empty() ? Corpus() : Corpus(c.corpus); }

std::vector<std::string> kernel_list(const Corpus& corpus, const std::vector<std::string>& names) {
  if (names.empty() || (names.size() == 1 && names[0] == "all")) return corpus.names();
  return names;
}

/// The history a subcommand acts on: a pass, a move log file, or nothing.
History prepare(const Program& p, const std::string& pass, const std::string& log_file, const Settings& s) {
  if (!pass.empty() && !log_file.empty()) throw Error(ErrorCode::InvalidArgument, "--pass and --log are exclusive");
  if (!pass.empty()) return run_pass(pass, p, s.pass);
  if (log_file.empty()) return History(p, s.pass.engine);
  auto replayed = History::replay(p, parse_log(kernels_detail::read_file(log_file)), s.pass.engine);
  if (auto* c = std::get_if<ReplayConflict>(&replayed))
    throw Error(ErrorCode::InapplicableMove,
                "move " + std::to_string(c->index) + " of '" + log_file + "' (" + c->move.str() + "): " + c->reason);
  return std::get<History>(replayed);
}

std::unique_ptr<RuntimeProvider> provider(const std::string& name, const Settings& s, std::uint64_t seed) {
  if (name == "cost-model") return std::make_unique<CostModelProvider>(s.machine);
  if (name == "native") {
    if (!native_available(s.native)) throw Error(ErrorCode::UnsupportedBackend, "no C compiler '" + s.native.compiler + "'");
    return std::make_unique<NativeProvider>(s.native, seed);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown runtime provider '" + name + "'");
}

int cmd_validate(const Common& c, const std::vector<std::string>& names, const std::string& preset) {
  Corpus corpus = corpus_of(c);
  Report r;
  r.columns = {"kernel", "preset", "check", "ok", "detail"};
  int violations = 0;
  auto check = [&](const std::string& k, const std::string& p, const char* what, const std::function<std::string()>& f) {
    std::string detail;
    try {
      detail = f();
    } catch (const std::exception& e) {
      detail = e.what();
    }
    r.row({k, p, what, detail.empty(), detail});
    if (!detail.empty()) ++violations;
  };
  for (const auto& name : kernel_list(corpus, names)) {
    check(name, "-", "round-trip", [&] {
      Program p = parse_program(corpus.source(name));
      return print_program(parse_program(print_program(p))) == print_program(p) ? "" : "print/parse is not stable";
    });
    for (const auto& ps : corpus.presets(name)) {
      check(name, ps, "validate", [&]() -> std::string {
        auto v = validate(corpus.load(name, ps).program);
        return v.empty() ? "" : v.front().message;
      });
    }
    check(name, preset, "oracle", [&]() -> std::string {
      KernelInstance k = corpus.load(name, preset);
      if (!k.oracle) return "";
      for (std::uint64_t t = 0; t < 3; ++t) {
        TensorEnv env = k.inputs(c.seed + t);
        auto eq = compare_outputs(interpret(k.program, env), k.oracle(k.program, env));
        if (!eq.equal) return eq.detail;
      }
      return "";
    });
  }
  r.fields["violations"] = violations;
  print(r, c);
  return violations == 0 ? 0 : 1;
}

int cmd_fuzz(const Common& c, const Settings& s, const std::vector<std::string>& names, const std::string& preset,
             FuzzConfig f) {
  Corpus corpus = corpus_of(c);
  f.seed = c.seed;
  f.engine = s.pass.engine;
  Report r;
  r.columns = {"kernel", "sequences", "moves", "dead_ends", "failures", "max_error"};
  int failures = 0;
  std::string detail;
  for (const auto& name : kernel_list(corpus, names)) {
    FuzzReport rep = fuzz_kernel(corpus.load(name, preset), f);
    r.row({name, rep.sequences, rep.moves, rep.dead_ends, rep.failures.size(), rep.max_error});
    failures += static_cast<int>(rep.failures.size());
    for (const auto& x : rep.failures)
      detail += name + " sequence " + std::to_string(x.sequence) + " (seed " +
                std::to_string(fuzz_sequence_seed(c.seed, name, x.sequence)) + "): " + x.detail + "\n" + x.log;
  }
  r.fields["violations"] = failures;
  if (!detail.empty()) r.fields["failures"] = detail;
  print(r, c);
  return failures == 0 ? 0 : 1;
}

int cmd_optimize(const Common& c, const Settings& s, const std::string& name, const std::string& preset,
                 const std::string& pass, const std::string& log_file, const std::string& log_out,
                 const std::string& program_out, bool check) {
  KernelInstance k = corpus_of(c).load(name, preset);
  if (pass.empty() && log_file.empty()) throw Error(ErrorCode::InvalidArgument, "give --pass or --log");
  History h = prepare(k.program, pass, log_file, s);
  Report r;
  r.columns = {"step", "move", "scalar_ops", "memory_traffic", "loop_overhead", "modeled_cost"};
  for (std::size_t i = 0; i <= h.size(); ++i) {
    CostReport cr = cost(h.at(i), s.machine);
    r.row({static_cast<int>(i), i ? h.moves()[i - 1].str() : "", cr.scalar_ops, cr.memory_traffic, cr.loop_overhead,
           cr.modeled_cost});
  }
  double before = cost(h.root(), s.machine).modeled_cost, after = cost(h.current(), s.machine).modeled_cost;
  r.fields["kernel"] = name;
  r.fields["preset"] = preset;
  r.fields["log"] = h.log();
  r.fields["root_cost"] = before;
  r.fields["final_cost"] = after;
  r.fields["cost_delta"] = after - before;
  int violations = 0;
  if (check) {
    auto eq = equivalent(k.program, h.current(), 2, c.seed, k.ranges);
    r.fields["equivalent"] = eq.equal;
    violations += !eq.equal;
  }
  r.fields["violations"] = violations;
  if (!log_out.empty()) write_file(log_out, h.log());
  if (!program_out.empty()) write_file(program_out, print_program(h.current()));
  print(r, c);
  return violations == 0 ? 0 : 1;
}

int cmd_search(const Common& c, Settings s, const std::string& name, const std::string& preset,
               const std::string& method, const std::string& space, int budget, const std::string& provider_name,
               const std::string& trace_out, const std::string& log_out, bool check) {
  KernelInstance k = corpus_of(c).load(name, preset);
  SearchConfig cfg = s.search;
  cfg.budget = budget;
  cfg.seed = c.seed;
  cfg.space = space_from_string(space);
  auto inner = provider(provider_name, s, c.seed);
  CachingProvider rt(*inner);
  SearchResult res = run_search(method, k.program, rt, cfg);
  Report r;
  r.columns = {"evaluation", "cost", "best"};
  for (const auto& t : res.trace) r.row({t.evaluation, t.cost, t.best});
  r.fields["kernel"] = name;
  r.fields["method"] = method;
  r.fields["space"] = space;
  r.fields["budget"] = budget;
  r.fields["root_cost"] = res.root_cost;
  r.fields["best_cost"] = res.best_cost;
  r.fields["distinct_programs"] = rt.distinct();
  r.fields["log"] = res.best.log();
  int violations = 0;
  if (check) {
    auto replayed = History::replay(k.program, res.best.moves(), s.pass.engine);
    bool ok = std::holds_alternative<History>(replayed) &&
              equivalent(k.program, std::get<History>(replayed).current(), 2, c.seed, k.ranges).equal;
    r.fields["equivalent"] = ok;
    violations += !ok;
  }
  r.fields["violations"] = violations;
  if (!trace_out.empty()) write_file(trace_out, trace_csv(res.trace));
  if (!log_out.empty()) write_file(log_out, res.best.log());
  print(r, c);
  return violations == 0 ? 0 : 1;
}

int cmd_train(const Common& c, const Settings& s, const std::string& name, const std::string& preset, int episodes,
              const std::string& provider_name, const std::string& checkpoint, const std::string& curve_out,
              const std::string& log_out, bool check) {
  KernelInstance k = corpus_of(c).load(name, preset);
  rl::AgentConfig cfg = s.agent;
  cfg.seed = c.seed;
  auto inner = provider(provider_name, s, c.seed);
  CachingProvider rt(*inner);
  rl::FeatureEncoder enc;
  auto t = rl::train_on_program(k.program, rt, episodes, cfg, enc, s.pass.engine);
  Report r;
  r.columns = {"episode", "epsilon", "moves", "episode_best_reward", "best_reward", "best_cost"};
  for (const auto& e : t.curve)
    r.row({e.episode, e.epsilon, e.moves, e.episode_best_reward, e.best_reward, t.root_cost / e.best_reward});
  r.fields["kernel"] = name;
  r.fields["episodes"] = episodes;
  r.fields["encoder"] = enc.id();
  r.fields["root_cost"] = t.root_cost;
  r.fields["best_cost"] = t.best_cost;
  r.fields["naive_cost"] = rt.runtime(naive_pass(k.program, s.pass).current());
  r.fields["log"] = t.best.log();
  int violations = 0;
  if (check) {
    auto replayed = History::replay(k.program, t.best.moves(), s.pass.engine);
    bool ok = std::holds_alternative<History>(replayed) &&
              equivalent(k.program, std::get<History>(replayed).current(), 2, c.seed, k.ranges).equal;
    r.fields["equivalent"] = ok;
    violations += !ok;
  }
  r.fields["violations"] = violations;
  if (!checkpoint.empty()) {
    std::ofstream out(checkpoint);
    t.network.save(out);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + checkpoint + "'");
  }
  if (!curve_out.empty()) write_file(curve_out, rl::learning_curve_csv(t.curve, t.root_cost));
  if (!log_out.empty()) write_file(log_out, t.best.log());
  print(r, c);
  return violations == 0 ? 0 : 1;
}

int cmd_emit(const Common& c, const Settings& s, const std::string& name, const std::string& preset,
             const std::string& pass, const std::string& log_file, const std::string& out) {
  KernelInstance k = corpus_of(c).load(name, preset);
  History h = prepare(k.program, pass, log_file, s);
  EmitResult e = emit(h.current());
  Report r;
  r.fields["kernel"] = name;
  r.fields["entry"] = e.entry;
  r.fields["signature"] = e.signature;
  r.fields["bytes"] = e.source.size();
  if (out.empty() || out == "-") {
    if (c.format == "text") {
      std::cout << e.source;
      return 0;
    }
    r.fields["source"] = e.source;
  } else {
    write_file(out, e.source);
    r.fields["out"] = out;
  }
  print(r, c);
  return 0;
}

int cmd_bench(const Common& c, const Settings& s, const std::string& name, const std::string& preset,
              std::vector<std::string> passes) {
  if (!native_available(s.native)) throw Error(ErrorCode::UnsupportedBackend, "no C compiler '" + s.native.compiler + "'");
  KernelInstance k = corpus_of(c).load(name, preset);
  Report r;
  r.columns = {"variant", "modeled_cost", "seconds", "min_seconds", "equivalent"};
  int violations = 0;
  TensorEnv env = k.inputs(c.seed);
  auto reference = interpret(k.program, env);
  passes.insert(passes.begin(), "root");
  for (const auto& p : passes) {
    Program q = p == "root" ? k.program : run_pass(p, k.program, s.pass).current();
    NativeRun run = compile_and_run(q, env, s.native);
    bool ok = compare_outputs(run.outputs, reference).equal;
    violations += !ok;
    r.row({p, cost(q, s.machine).modeled_cost, run.seconds, *std::min_element(run.samples.begin(), run.samples.end()),
           ok});
  }
  r.fields["kernel"] = name;
  r.fields["preset"] = preset;
  r.fields["violations"] = violations;
  print(r, c);
  return violations == 0 ? 0 : 1;
}

int cmd_serve(const Common& c, const Settings& s, dojo::ServiceConfig cfg) {
  if (!c.corpus.empty()) cfg.corpus_dir = c.corpus;
  if (const char* env = std::getenv("PERFDOJO_SESSIONS"); env && cfg.sessions_dir.empty()) cfg.sessions_dir = env;
  if (const char* env = std::getenv("PERFDOJO_UI"); env && cfg.ui_dir.empty()) cfg.ui_dir = env;
  cfg.machine = s.machine;
  cfg.pass = s.pass;
  dojo::Service svc(cfg);
  httplib::Server server;
  dojo::bind_routes(server, svc);
  if (c.format == "json")
    std::cout << json{{"seed", c.seed}, {"host", cfg.host}, {"port", cfg.port}}.dump() << std::endl;
  else
    std::cout << "seed: " << c.seed << "\nlistening on http://" << cfg.host << ":" << cfg.port << std::endl;
  if (!server.listen(cfg.host, cfg.port))
    throw Error(ErrorCode::InvalidArgument, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perfdojo: programs, moves, passes, searches and the dojo"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--seed", c.seed, "random seed (printed with every result)");
  app.add_option("--format", c.format, "output format")->check(CLI::IsMember({"text", "csv", "json"}));
  app.add_option("--config", c.config, "settings JSON (default: $PERFDOJO_CONFIG)");
  app.add_option("--corpus", c.corpus, "kernel corpus directory");

  std::string kernel, preset = "desk", pass, log_file, log_out, out, method = "anneal", space = "heuristic",
                      provider_name = "cost-model", trace_out, program_out, checkpoint, curve_out;
  std::vector<std::string> kernels;
  bool check = true;
  int budget = 500, episodes = 200;
  auto add_check = [&](CLI::App* s) { s->add_flag("--check,!--no-check", check, "verify the result against the root"); };

  auto* validate_cmd = app.add_subcommand("validate", "parse, validate and oracle-check corpus kernels");
  validate_cmd->add_option("kernels", kernels, "kernel names (default: all)");
  validate_cmd->add_option("--preset", preset, "preset for the oracle check");

  FuzzConfig fz;
  std::string fuzz_preset = "tiny";
  auto* fuzz_cmd = app.add_subcommand("fuzz", "random move sequences checked by the interpreter");
  fuzz_cmd->add_option("--kernels", kernels, "comma-separated kernels or 'all'")->delimiter(',');
  fuzz_cmd->add_option("--sequences", fz.sequences, "sequences per kernel")->check(CLI::PositiveNumber);
  fuzz_cmd->add_option("--max-len", fz.max_len, "longest sequence")->check(CLI::PositiveNumber);
  fuzz_cmd->add_option("--inputs", fz.inputs, "random input sets per sequence")->check(CLI::PositiveNumber);
  fuzz_cmd->add_option("--preset", fuzz_preset, "shape preset");

  auto* optimize_cmd = app.add_subcommand("optimize", "apply a pass or a move log and report costs");
  optimize_cmd->add_option("kernel", kernel)->required();
  optimize_cmd->add_option("--preset", preset);
  optimize_cmd->add_option("--pass", pass)->check(CLI::IsMember({"naive", "greedy", "heuristic"}));
  optimize_cmd->add_option("--log", log_file, "move log to apply");
  optimize_cmd->add_option("--log-out", log_out, "write the resulting move log");
  optimize_cmd->add_option("--program-out", program_out, "write the resulting program text");
  add_check(optimize_cmd);

  auto* search_cmd = app.add_subcommand("search", "sampling or annealing search");
  search_cmd->add_option("kernel", kernel)->required();
  search_cmd->add_option("--preset", preset);
  search_cmd->add_option("--method", method)->check(CLI::IsMember({"sample", "anneal"}));
  search_cmd->add_option("--space", space)->check(CLI::IsMember({"edges", "heuristic"}));
  search_cmd->add_option("--budget", budget, "runtime evaluations")->check(CLI::PositiveNumber);
  search_cmd->add_option("--provider", provider_name)->check(CLI::IsMember({"cost-model", "native"}));
  search_cmd->add_option("--trace-out", trace_out, "write the trace CSV");
  search_cmd->add_option("--log-out", log_out, "write the best move log");
  add_check(search_cmd);

  auto* train_cmd = app.add_subcommand("train", "train the Q-learning agent on one kernel");
  train_cmd->add_option("kernel", kernel)->required();
  train_cmd->add_option("--preset", preset);
  train_cmd->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  train_cmd->add_option("--provider", provider_name)->check(CLI::IsMember({"cost-model", "native"}));
  train_cmd->add_option("--checkpoint", checkpoint, "write the trained network");
  train_cmd->add_option("--curve", curve_out, "write the learning curve CSV");
  train_cmd->add_option("--log-out", log_out, "write the best move log");
  add_check(train_cmd);

  auto* emit_cmd = app.add_subcommand("emit", "generate C for a kernel");
  emit_cmd->add_option("kernel", kernel)->required();
  emit_cmd->add_option("--preset", preset);
  emit_cmd->add_option("--pass", pass)->check(CLI::IsMember({"naive", "greedy", "heuristic"}));
  emit_cmd->add_option("--log", log_file, "move log to apply first");
  emit_cmd->add_option("--out", out, "output file (default: stdout)");

  std::vector<std::string> bench_passes{"naive", "greedy", "heuristic"};
  auto* bench_cmd = app.add_subcommand("bench", "compile and time a kernel and its passes");
  bench_cmd->add_option("kernel", kernel)->required();
  bench_cmd->add_option("--preset", preset);
  bench_cmd->add_option("--passes", bench_passes)->delimiter(',');

  dojo::ServiceConfig scfg;
  auto* serve_cmd = app.add_subcommand("serve", "run the dojo HTTP service");
  serve_cmd->add_option("--host", scfg.host);
  serve_cmd->add_option("--port", scfg.port)->envname("PERFDOJO_PORT");
  serve_cmd->add_option("--sessions-dir", scfg.sessions_dir, "session logs (env PERFDOJO_SESSIONS)");
  serve_cmd->add_option("--ui-dir", scfg.ui_dir, "static UI bundle (env PERFDOJO_UI)");
  serve_cmd->add_option("--provider", scfg.provider)->check(CLI::IsMember({"cost-model", "native"}));

  CLI11_PARSE(app, argc, argv);

  try {
    Settings s = load_settings(c.config);
    if (*validate_cmd) return cmd_validate(c, kernels, preset);
    if (*fuzz_cmd) return cmd_fuzz(c, s, kernels, fuzz_preset, fz);
    if (*optimize_cmd) return cmd_optimize(c, s, kernel, preset, pass, log_file, log_out, program_out, check);
    if (*search_cmd)
      return cmd_search(c, s, kernel, preset, method, space, budget, provider_name, trace_out, log_out, check);
    if (*train_cmd) return cmd_train(c, s, kernel, preset, episodes, provider_name, checkpoint, curve_out, log_out, check);
    if (*emit_cmd) return cmd_emit(c, s, kernel, preset, pass, log_file, out);
    if (*bench_cmd) return cmd_bench(c, s, kernel, preset, bench_passes);
    if (*serve_cmd) return cmd_serve(c, s, scfg);
  } catch (const Error& e) {
    if (c.format == "json")
      std::cerr << json{{"error", e.what()}, {"code", to_string(e.code())}, {"seed", c.seed}}.dump() << "\n";
    else
      std::cerr << "error: " << e.what() << " (seed " << c.seed << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << " (seed " << c.seed << ")\n";
    return 2;
  }
  return 2;
}
