#pragma once

// Random move sequences checked against the interpreter: every walk must
// stay valid, replay to the same text and compute the same outputs as the
// program it started from.

#include <random>

#include "perfdojo/history.hpp"
#include "perfdojo/kernels.hpp"
#include "perfdojo/validate.hpp"

namespace perfdojo {

struct FuzzConfig {
  int sequences = 200;
  int max_len = 20;
  int inputs = 3;  // random input sets per sequence
  std::uint64_t seed = 1;
  EngineConfig engine;
};

struct FuzzFailure {
  int sequence;
  std::string log;
  std::string detail;
};

struct FuzzReport {
  std::string kernel;
  int sequences = 0;
  int moves = 0;
  int dead_ends = 0;  // walks that ran out of legal moves early
  double max_error = 0;
  std::vector<FuzzFailure> failures;
};

namespace fuzz_detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace fuzz_detail

/// Seed of one sequence, so that a failure can be rerun in isolation.
inline std::uint64_t fuzz_sequence_seed(std::uint64_t seed, const std::string& kernel, int sequence) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fuzz_detail::fnv1a(kernel)), static_cast<std::uint32_t>(sequence)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline FuzzReport fuzz_kernel(const KernelInstance& k, const FuzzConfig& cfg) {
  FuzzReport rep;
  rep.kernel = k.name;
  for (int s = 0; s < cfg.sequences; ++s) {
    std::uint64_t seed = fuzz_sequence_seed(cfg.seed, k.name, s);
    std::mt19937_64 rng(seed);
    int len = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, cfg.max_len)));
    History h(k.program, cfg.engine);
    for (int i = 0; i < len; ++i) {
      auto options = enumerate_with_results(h.current(), cfg.engine);
      if (options.empty()) {
        ++rep.dead_ends;
        break;
      }
      auto& pick = options[rng() % options.size()];
      h.push(std::move(pick.move), std::move(pick.result));
    }
    ++rep.sequences;
    rep.moves += static_cast<int>(h.size());
    auto fail = [&](std::string detail) { rep.failures.push_back({s, h.log(), std::move(detail)}); };

    if (auto v = validate(h.current(), cfg.engine); !v.empty()) {
      fail("invalid program: " + v.front().message);
      continue;
    }
    auto replayed = History::replay(k.program, h.moves(), cfg.engine);
    if (auto* c = std::get_if<ReplayConflict>(&replayed)) {
      fail("replay stops at move " + std::to_string(c->index) + ": " + c->reason);
      continue;
    }
    if (print_program(std::get<History>(replayed).current()) != print_program(h.current())) {
      fail("replay produces different text");
      continue;
    }
    try {
      auto eq = equivalent(k.program, h.current(), cfg.inputs, seed, k.ranges);
      rep.max_error = std::max(rep.max_error, eq.max_error);
      if (!eq.equal) fail(eq.detail);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  return rep;
}

}  // namespace perfdojo
