#pragma once

// Machine, engine, search, training and native-run settings read from one
// JSON document. Every key is optional; unknown keys are rejected.
//
//   {"machine":  {"vector_width", "cores", "op_weight", "byte_weight", "overhead_weight"},
//    "engine":   {"vector_width", "max_unroll", "gpu_suffixes", "pad_multiples", "stack_limit_bytes"},
//    "passes":   {"tile", "hardware": "vpu"},
//    "search":   {"beta", "t0_fraction", "decay", "mutation_retries"},
//    "training": {"gamma", "epsilon_start", "epsilon_end", "epsilon_decay", "capacity", "batch",
//                 "sync_every", "max_moves", "hidden", "learning_rate", "backup": "max"|"cumulative",
//                 "double_dqn"},
//    "native":   {"compiler", "flags", "warmups", "repetitions", "compile_timeout", "run_timeout"}}

#include <set>

#include "json.hpp"
#include "perfdojo/native.hpp"
#include "perfdojo/rl/agent.hpp"
#include "perfdojo/search.hpp"

namespace perfdojo {

struct Settings {
  MachineConfig machine;
  PassConfig pass;  // carries the engine config
  SearchConfig search;
  rl::AgentConfig agent;
  NativeOptions native;
};

namespace settings_detail {

using nlohmann::json;

class Section {
 public:
  Section(const json& doc, const char* name) : name_(name) {
    if (!doc.contains(name)) return;
    node_ = &doc.at(name);
    if (!node_->is_object()) throw Error(ErrorCode::InvalidArgument, std::string("settings: '") + name + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidArgument, "settings: " + name_ + "." + key + " has the wrong type");
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!seen_.count(k)) throw Error(ErrorCode::InvalidArgument, "settings: unknown key " + name_ + "." + k);
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace settings_detail

inline Settings parse_settings(const nlohmann::json& doc) {
  using settings_detail::Section;
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "settings must be a JSON object");
  for (const auto& [k, v] : doc.items())
    if (k != "machine" && k != "engine" && k != "passes" && k != "search" && k != "training" && k != "native")
      throw Error(ErrorCode::InvalidArgument, "settings: unknown section '" + k + "'");
  Settings s;

  Section m(doc, "machine");
  m.read("vector_width", s.machine.vector_width);
  m.read("cores", s.machine.cores);
  m.read("op_weight", s.machine.op_weight);
  m.read("byte_weight", s.machine.byte_weight);
  m.read("overhead_weight", s.machine.overhead_weight);
  m.finish();

  EngineConfig& e = s.pass.engine;
  Section en(doc, "engine");
  en.read("vector_width", e.vector_width);
  en.read("max_unroll", e.max_unroll);
  en.read("gpu_suffixes", e.gpu_suffixes);
  en.read("pad_multiples", e.pad_multiples);
  en.read("stack_limit_bytes", e.stack_limit_bytes);
  en.finish();

  Section ps(doc, "passes");
  ps.read("tile", s.pass.tile);
  std::string hw = "vpu";
  ps.read("hardware", hw);
  s.pass.hardware.clear();
  for (char c : hw) {
    auto x = suffix_from_char(c);
    if (!x) throw Error(ErrorCode::InvalidArgument, std::string("settings: passes.hardware has unknown suffix '") + c + "'");
    s.pass.hardware.push_back(*x);
  }
  ps.finish();

  Section se(doc, "search");
  se.read("beta", s.search.beta);
  se.read("t0_fraction", s.search.t0_fraction);
  se.read("decay", s.search.decay);
  se.read("mutation_retries", s.search.mutation_retries);
  se.finish();
  s.search.pass = s.pass;

  rl::AgentConfig& a = s.agent;
  Section tr(doc, "training");
  tr.read("gamma", a.gamma);
  tr.read("epsilon_start", a.epsilon.start);
  tr.read("epsilon_end", a.epsilon.end);
  tr.read("epsilon_decay", a.epsilon.decay);
  tr.read("capacity", a.capacity);
  tr.read("batch", a.batch);
  tr.read("sync_every", a.sync_every);
  tr.read("max_moves", a.max_moves);
  tr.read("hidden", a.hidden);
  tr.read("learning_rate", a.learning_rate);
  std::string backup = "max";
  tr.read("backup", backup);
  if (backup == "max") a.backup = rl::Backup::MaxBellman;
  else if (backup == "cumulative") a.backup = rl::Backup::Cumulative;
  else throw Error(ErrorCode::InvalidArgument, "settings: training.backup must be 'max' or 'cumulative'");
  tr.read("double_dqn", a.double_dqn);
  tr.finish();

  Section nv(doc, "native");
  nv.read("compiler", s.native.compiler);
  nv.read("flags", s.native.flags);
  nv.read("warmups", s.native.warmups);
  nv.read("repetitions", s.native.repetitions);
  nv.read("compile_timeout", s.native.compile_timeout);
  nv.read("run_timeout", s.native.run_timeout);
  nv.finish();
  return s;
}

/// Settings from `path`, or from $PERFDOJO_CONFIG when `path` is empty;
/// defaults when neither names a file.
inline Settings load_settings(std::string path = {}) {
  if (path.empty())
    if (const char* env = std::getenv("PERFDOJO_CONFIG")) path = env;
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read settings file '" + path + "'");
  try {
    return parse_settings(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, "settings file '" + path + "' is not JSON: " + e.what());
  }
}

}  // namespace perfdojo
