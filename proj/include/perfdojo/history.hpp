#pragma once

// Non-destructive move history: a root program plus the moves applied to it.
// Intermediate programs are cached; any prefix is available without replay.

#include "perfdojo/transforms.hpp"

namespace perfdojo {

struct ReplayConflict {
  std::size_t index;  // position of the first move that no longer applies
  TransformMove move;
  std::string reason;
};

class History {
 public:
  explicit History(Program root, EngineConfig cfg = {}) : cfg_(std::move(cfg)) {
    states_.push_back(std::make_shared<const Program>(std::move(root)));
  }

  const Program& root() const { return *states_.front(); }
  const Program& current() const { return *states_.back(); }
  const std::vector<TransformMove>& moves() const { return moves_; }
  std::size_t size() const { return moves_.size(); }
  const EngineConfig& config() const { return cfg_; }

  /// Program after the first `k` moves.
  const Program& at(std::size_t k) const { return *states_.at(k); }

  const Program& apply(const TransformMove& m) {
    states_.push_back(std::make_shared<const Program>(apply_move(current(), m, cfg_)));
    moves_.push_back(m);
    return current();
  }

  /// Records a move whose result is already known (e.g. from enumeration).
  const Program& push(TransformMove m, std::shared_ptr<const Program> result) {
    states_.push_back(std::move(result));
    moves_.push_back(std::move(m));
    return current();
  }

  /// Drops the last `k` moves.
  const Program& undo(std::size_t k) {
    if (k > moves_.size()) throw Error(ErrorCode::InvalidArgument, "cannot undo more moves than recorded");
    moves_.resize(moves_.size() - k);
    states_.resize(moves_.size() + 1);
    return current();
  }

  /// Replays `moves` from `root`; the conflict names the first move that
  /// fails to apply.
  static std::variant<History, ReplayConflict> replay(const Program& root, const std::vector<TransformMove>& moves,
                                                      const EngineConfig& cfg = {}) {
    History h(root, cfg);
    for (std::size_t i = 0; i < moves.size(); ++i) {
      try {
        h.apply(moves[i]);
      } catch (const Error& e) {
        return ReplayConflict{i, moves[i], e.what()};
      }
    }
    return h;
  }

  /// History without move `i`, or the first later move that stops applying.
  std::variant<History, ReplayConflict> remove_move(std::size_t i) const {
    if (i >= moves_.size()) throw Error(ErrorCode::InvalidArgument, "no move at index " + std::to_string(i));
    History h(root(), cfg_);
    for (std::size_t k = 0; k < i; ++k) h.push(moves_[k], states_[k + 1]);
    for (std::size_t k = i + 1; k < moves_.size(); ++k) {
      try {
        h.apply(moves_[k]);
      } catch (const Error& e) {
        return ReplayConflict{k, moves_[k], e.what()};
      }
    }
    return h;
  }

  /// One move per line, replayable with `parse_log`.
  std::string log() const {
    std::string out;
    for (const auto& m : moves_) out += m.str() + "\n";
    return out;
  }

 private:
  EngineConfig cfg_;
  std::vector<std::shared_ptr<const Program>> states_;
  std::vector<TransformMove> moves_;
};

/// Program after the first `len - k` moves of `h`.
inline const Program& undo(const History& h, std::size_t k) {
  if (k > h.size()) throw Error(ErrorCode::InvalidArgument, "cannot undo more moves than recorded");
  return h.at(h.size() - k);
}

inline std::vector<TransformMove> parse_log(std::string_view text) {
  std::vector<TransformMove> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_move(line));
  }
  return out;
}

}  // namespace perfdojo
