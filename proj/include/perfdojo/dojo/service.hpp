#pragma once

// Session store behind the dojo: one History per session, a cost report per
// step, move-log persistence and background search jobs. Transport-neutral;
// every request and response is JSON and failures carry an HTTP status.

#include <atomic>
#include <chrono>
#include <ctime>
#include <memory>
#include <shared_mutex>
#include <thread>

#include "json.hpp"
#include "perfdojo/kernels.hpp"
#include "perfdojo/native.hpp"
#include "perfdojo/search.hpp"

namespace perfdojo::dojo {

using nlohmann::json;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string corpus_dir = perfdojo::corpus_dir();
  std::string sessions_dir;  // empty: nothing is persisted
  std::string ui_dir;        // empty: no static files
  std::string provider = "cost-model";  // or "native"
  MachineConfig machine;
  PassConfig pass;
};

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, json body)
      : std::runtime_error(body.value("error", std::string("error"))), status_(status), body_(std::move(body)) {}
  int status() const { return status_; }
  const json& body() const { return body_; }

 private:
  int status_;
  json body_;
};

inline ServiceError not_found(const std::string& what) { return ServiceError(404, {{"error", what}}); }
inline ServiceError malformed(const std::string& what) { return ServiceError(422, {{"error", what}}); }

inline json to_json(const CostReport& r) {
  json j{{"scalar_ops", r.scalar_ops},
         {"memory_traffic", r.memory_traffic},
         {"loop_overhead", r.loop_overhead},
         {"modeled_cost", r.modeled_cost}};
  j["measured_seconds"] = r.measured_seconds ? json(*r.measured_seconds) : json(nullptr);
  return j;
}

inline json to_json(const TransformMove& m) {
  return {{"move", m.str()}, {"transform", m.transform}, {"site", format_site(m.site)}, {"param", m.param}};
}

inline json to_json(const TraceRow& r) { return {{"evaluation", r.evaluation}, {"cost", r.cost}, {"best", r.best}}; }

namespace service_detail {

inline json tree_of(const Program& p, const std::vector<Node>& nodes, NodePath& path) {
  json out = json::array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    path.push_back(i);
    const Node& n = nodes[i];
    json j{{"site", format_site(site_of_node(p, path))}};
    if (n.kind == Node::Kind::Scope) {
      j["kind"] = "scope";
      j["extent"] = n.extent.str();
      j["size"] = n.extent.value(p.dims);
      j["suffix"] = n.suffix == Suffix::None ? "" : std::string(1, suffix_char(n.suffix));
      j["children"] = tree_of(p, n.children, path);
    } else {
      j["kind"] = "op";
      j["text"] = print_operation(n.op);
    }
    out.push_back(std::move(j));
    path.pop_back();
  }
  return out;
}

inline std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t nl = s.find('\n', pos);
    if (nl == std::string::npos) nl = s.size();
    out.push_back(s.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

inline std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
  return true;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::Internal, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownKernel: return 422;
    default: return 409;
  }
}

}  // namespace service_detail

/// Line diff of two program texts: each line prefixed with "  ", "- " or "+ ".
inline std::string line_diff(const std::string& before, const std::string& after) {
  auto a = service_detail::lines(before), b = service_detail::lines(after);
  std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::uint32_t>> lcs(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  std::string out;
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && a[i] == b[j]) {
      out += "  " + a[i++] + "\n";
      ++j;
    } else if (j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j])) {
      out += "+ " + b[j++] + "\n";
    } else {
      out += "- " + a[i++] + "\n";
    }
  }
  return out;
}

inline json tree_json(const Program& p) {
  NodePath path;
  json buffers = json::array();
  for (const auto& b : p.buffers) buffers.push_back({{"name", b.name}, {"text", text_detail::format_buffer(b)}});
  return {{"nodes", service_detail::tree_of(p, p.root, path)}, {"buffers", buffers}};
}

struct SearchJob {
  std::string method;
  SearchConfig config;
  std::size_t base_moves = 0;  // session length when the job started
  std::string base_text;       // session program when the job started

  mutable std::mutex mu;
  std::string status = "running";  // running | done | failed | cancelled
  std::vector<TraceRow> rows;
  std::optional<SearchResult> result;
  std::string error;
  std::atomic<bool> cancel{false};
  std::thread worker;
};

struct Session {
  Session(std::string kernel, std::string preset, History h)
      : kernel(std::move(kernel)), preset(std::move(preset)), history(std::move(h)) {}

  std::string id;
  std::string kernel;
  std::string preset;
  History history;
  std::vector<CostReport> costs;  // one per program in the history
  std::string created;
  std::string updated;
  std::mutex mu;  // one writer at a time
  std::shared_ptr<SearchJob> job;
};

class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), corpus_(cfg_.corpus_dir) {
    if (cfg_.provider == "native") {
      native_ = std::make_unique<NativeProvider>();
    } else if (cfg_.provider != "cost-model") {
      throw Error(ErrorCode::InvalidArgument, "unknown runtime provider '" + cfg_.provider + "'");
    }
    if (!cfg_.sessions_dir.empty()) load_sessions();
  }

  ~Service() {
    std::vector<std::shared_ptr<SearchJob>> jobs;
    {
      std::unique_lock lock(map_mu_);
      for (auto& [id, s] : sessions_)
        if (s->job) jobs.push_back(s->job);
    }
    for (auto& j : jobs) {
      j->cancel = true;
      if (j->worker.joinable()) j->worker.join();
    }
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  json kernels() const {
    json out = json::array();
    for (const auto& name : corpus_.names()) out.push_back({{"name", name}, {"presets", corpus_.presets(name)}});
    return out;
  }

  json list_sessions() const {
    std::shared_lock lock(map_mu_);
    json out = json::array();
    for (const auto& [id, s] : sessions_) {
      std::lock_guard g(s->mu);
      out.push_back({{"id", id}, {"kernel", s->kernel}, {"preset", s->preset}, {"moves", s->history.size()},
                     {"created", s->created}, {"updated", s->updated}});
    }
    return out;
  }

  /// Request: {kernel, preset?, id?}.
  json create_session(const json& req) {
    std::string kernel = field<std::string>(req, "kernel");
    std::string preset = req.contains("preset") ? field<std::string>(req, "preset") : "desk";
    std::string id;
    if (req.contains("id")) {
      id = field<std::string>(req, "id");
      if (!service_detail::valid_id(id)) throw malformed("session id must be 1-64 characters of [A-Za-z0-9_-]");
    }
    auto s = make_session(kernel, preset);
    std::lock_guard g(s->mu);
    {
      std::unique_lock lock(map_mu_);
      if (id.empty()) id = next_id();
      if (sessions_.count(id)) throw ServiceError(409, {{"error", "session '" + id + "' already exists"}});
      s->id = id;
      s->created = s->updated = service_detail::iso_now();
      sessions_[id] = s;
    }
    persist(*s, true);
    return state_locked(*s);
  }

  json get_state(const std::string& id) {
    auto s = session(id);
    std::lock_guard g(s->mu);
    return state_locked(*s);
  }

  json list_moves(const std::string& id) {
    auto s = session(id);
    std::lock_guard g(s->mu);
    return moves_locked(*s);
  }

  /// Request: {move: "<transform> <site> [param]"}.
  json apply_move(const std::string& id, const json& req) {
    TransformMove m = parse_request_move(req);
    auto s = session(id);
    std::lock_guard g(s->mu);
    std::string before = print_program(s->history.current());
    try {
      s->history.apply(m);
    } catch (const Error& e) {
      int status = service_detail::status_for(e.code());
      json body{{"error", e.what()}, {"code", to_string(e.code())}};
      if (status == 409) {
        // Alternatives: the same transformation at the same site, or failing
        // that anywhere.
        json same_site = json::array(), same_transform = json::array(), moves = json::array();
        std::string site = format_site(m.site);
        for (const auto& c : enumerate_moves(s->history.current(), cfg_.pass.engine)) {
          if (c.transform == m.transform) {
            same_transform.push_back(c.str());
            if (format_site(c.site) == site) same_site.push_back(c.str());
          }
          moves.push_back(c.str());
        }
        json alternatives = same_site.empty() ? same_transform : same_site;
        body["alternatives"] = alternatives;
        body["moves"] = moves;
      }
      throw ServiceError(status, body);
    }
    s->costs.push_back(report(s->history.current()));
    touch(*s);
    append_log(*s, {m});
    std::string after = print_program(s->history.current());
    return {{"program", after},
            {"diff", line_diff(before, after)},
            {"cost", to_json(s->costs.back())},
            {"moves", moves_locked(*s)},
            {"state", state_locked(*s)}};
  }

  /// Request: {count?}; removes the last `count` moves (default one).
  json undo(const std::string& id, const json& req) {
    long count = req.contains("count") ? field<long>(req, "count") : 1;
    auto s = session(id);
    std::lock_guard g(s->mu);
    if (count < 0 || static_cast<std::size_t>(count) > s->history.size())
      throw ServiceError(409, {{"error", "cannot undo " + std::to_string(count) + " of " +
                                             std::to_string(s->history.size()) + " moves"}});
    std::string before = print_program(s->history.current());
    s->history.undo(static_cast<std::size_t>(count));
    s->costs.resize(s->history.size() + 1);
    touch(*s);
    rewrite_log(*s);
    std::string after = print_program(s->history.current());
    return {{"program", after}, {"diff", line_diff(before, after)}, {"state", state_locked(*s)}};
  }

  /// Request: {pass: naive|greedy|heuristic}; the pass runs on the current
  /// program and its moves are appended.
  json run_pass(const std::string& id, const json& req) {
    std::string name = field<std::string>(req, "pass");
    if (name != "naive" && name != "greedy" && name != "heuristic") throw malformed("unknown pass '" + name + "'");
    auto s = session(id);
    std::lock_guard g(s->mu);
    std::string before = print_program(s->history.current());
    History h = perfdojo::run_pass(name, s->history.current(), cfg_.pass);
    for (std::size_t i = 0; i < h.size(); ++i) {
      s->history.push(h.moves()[i], std::make_shared<const Program>(h.at(i + 1)));
      s->costs.push_back(report(s->history.current()));
    }
    touch(*s);
    append_log(*s, h.moves());
    json applied = json::array();
    for (const auto& m : h.moves()) applied.push_back(m.str());
    std::string after = print_program(s->history.current());
    return {{"applied", applied}, {"program", after}, {"diff", line_diff(before, after)}, {"state", state_locked(*s)}};
  }

  /// Request: {method?, space?, budget?, seed?, beta?}. Starts a background
  /// search from the current program.
  json run_search(const std::string& id, const json& req) {
    auto job = std::make_shared<SearchJob>();
    job->method = req.contains("method") ? field<std::string>(req, "method") : "anneal";
    if (job->method != "sample" && job->method != "anneal") throw malformed("unknown method '" + job->method + "'");
    SearchConfig& sc = job->config;
    sc.pass = cfg_.pass;
    try {
      if (req.contains("space")) sc.space = space_from_string(field<std::string>(req, "space"));
    } catch (const Error& e) {
      throw malformed(e.what());
    }
    if (req.contains("budget")) sc.budget = field<int>(req, "budget");
    if (req.contains("seed")) sc.seed = field<std::uint64_t>(req, "seed");
    if (req.contains("beta")) sc.beta = field<double>(req, "beta");
    if (sc.budget < 1 || sc.budget > 1000000) throw malformed("budget must be in [1, 1000000]");

    auto s = session(id);
    std::lock_guard g(s->mu);
    if (s->job) {
      std::lock_guard jg(s->job->mu);
      if (s->job->status == "running") throw ServiceError(409, {{"error", "a search is already running"}});
    }
    if (s->job && s->job->worker.joinable()) s->job->worker.join();
    Program root = s->history.current();
    job->base_moves = s->history.size();
    job->base_text = print_program(root);
    SearchJob* raw = job.get();
    sc.observer = [raw](const TraceRow& row) {
      std::lock_guard jg(raw->mu);
      raw->rows.push_back(row);
      return !raw->cancel.load();
    };
    job->worker = std::thread([this, raw, root = std::move(root)] {
      try {
        std::unique_ptr<RuntimeProvider> own;
        RuntimeProvider* inner = native_.get();
        if (!inner) {
          own = std::make_unique<CostModelProvider>(cfg_.machine);
          inner = own.get();
        }
        CachingProvider rt(*inner);
        SearchResult r = perfdojo::run_search(raw->method, root, rt, raw->config);
        std::lock_guard jg(raw->mu);
        raw->result = std::move(r);
        raw->status = raw->cancel ? "cancelled" : "done";
      } catch (const std::exception& e) {
        std::lock_guard jg(raw->mu);
        raw->status = "failed";
        raw->error = e.what();
      }
    });
    s->job = job;
    return {{"status", "running"}, {"method", job->method}, {"budget", sc.budget}, {"seed", sc.seed},
            {"space", sc.space == SpaceMode::Edges ? "edges" : "heuristic"}};
  }

  /// Trace rows from index `since` on, the job status and, once finished,
  /// the best history found.
  json get_trace(const std::string& id, std::size_t since = 0) {
    auto job = session_job(id);
    std::lock_guard jg(job->mu);
    json rows = json::array();
    for (std::size_t i = since; i < job->rows.size(); ++i) rows.push_back(to_json(job->rows[i]));
    json out{{"status", job->status}, {"method", job->method}, {"budget", job->config.budget},
             {"seed", job->config.seed}, {"total", job->rows.size()}, {"since", since}, {"rows", rows}};
    if (job->result) {
      out["best"] = {{"cost", job->result->best_cost}, {"root_cost", job->result->root_cost},
                     {"log", job->result->best.log()}};
    }
    if (!job->error.empty()) out["error"] = job->error;
    return out;
  }

  /// Asks a running search to stop after its current evaluation.
  json cancel_search(const std::string& id) {
    session_job(id)->cancel = true;
    return get_trace(id, 0);
  }

  /// Appends the best moves of a finished search to the session.
  json adopt_search(const std::string& id) {
    auto s = session(id);
    std::lock_guard g(s->mu);
    auto job = s->job;
    if (!job) throw not_found("session '" + id + "' has no search");
    std::optional<SearchResult> result;
    {
      std::lock_guard jg(job->mu);
      if (!job->result) throw ServiceError(409, {{"error", "search has not finished"}});
      result = job->result;
    }
    if (s->history.size() != job->base_moves || print_program(s->history.current()) != job->base_text)
      throw ServiceError(409, {{"error", "session changed since the search started"}});
    std::string before = print_program(s->history.current());
    const History& best = result->best;
    for (std::size_t i = 0; i < best.size(); ++i) {
      s->history.push(best.moves()[i], std::make_shared<const Program>(best.at(i + 1)));
      s->costs.push_back(report(s->history.current()));
    }
    touch(*s);
    append_log(*s, best.moves());
    std::string after = print_program(s->history.current());
    return {{"program", after}, {"diff", line_diff(before, after)}, {"state", state_locked(*s)}};
  }

  json emit_code(const std::string& id) {
    auto s = session(id);
    std::lock_guard g(s->mu);
    try {
      EmitResult r = emit(s->history.current());
      return {{"source", r.source}, {"entry", r.entry}, {"signature", r.signature}};
    } catch (const Error& e) {
      throw ServiceError(409, {{"error", e.what()}, {"code", to_string(e.code())}});
    }
  }

  json export_session(const std::string& id) {
    auto s = session(id);
    std::lock_guard g(s->mu);
    return {{"format", kExportFormat}, {"kernel", s->kernel},     {"preset", s->preset},
            {"log", s->history.log()},   {"created", s->created}, {"root", print_program(s->history.root())}};
  }

  /// Request: an exported session, optionally with a new `id`.
  json import_session(const json& req) {
    if (!req.is_object() || req.value("format", "") != kExportFormat) throw malformed("not a " + std::string(kExportFormat) + " document");
    json create{{"kernel", field<std::string>(req, "kernel")}, {"preset", field<std::string>(req, "preset")}};
    if (req.contains("id")) create["id"] = req["id"];
    std::vector<TransformMove> moves;
    try {
      moves = parse_log(field<std::string>(req, "log"));
    } catch (const Error& e) {
      throw malformed(e.what());
    }
    auto probe = make_session(create["kernel"], create["preset"]);
    if (req.contains("root") && field<std::string>(req, "root") != print_program(probe->history.root()))
      throw ServiceError(409, {{"error", "exported root program differs from this corpus"}});
    auto replayed = History::replay(probe->history.root(), moves, cfg_.pass.engine);
    if (auto* c = std::get_if<ReplayConflict>(&replayed))
      throw ServiceError(409, {{"error", "move " + std::to_string(c->index) + " (" + c->move.str() + ") failed: " + c->reason},
                               {"index", c->index}});
    json st = create_session(create);
    std::string id = st["id"];
    auto s = session(id);
    std::lock_guard g(s->mu);
    History& h = std::get<History>(replayed);
    for (std::size_t i = 0; i < h.size(); ++i) {
      s->history.push(h.moves()[i], std::make_shared<const Program>(h.at(i + 1)));
      s->costs.push_back(report(s->history.current()));
    }
    touch(*s);
    append_log(*s, h.moves());
    return state_locked(*s);
  }

  static constexpr const char* kExportFormat = "perfdojo-session v1";

 private:
  template <class T>
  static T field(const json& req, const char* key) {
    if (!req.is_object() || !req.contains(key)) throw malformed(std::string("missing field '") + key + "'");
    try {
      return req.at(key).get<T>();
    } catch (const json::exception&) {
      throw malformed(std::string("field '") + key + "' has the wrong type");
    }
  }

  static TransformMove parse_request_move(const json& req) {
    std::string text = field<std::string>(req, "move");
    TransformMove m;
    try {
      m = parse_move(text);
    } catch (const Error& e) {
      throw malformed(e.what());
    }
    if (!find_transformation(m.transform)) throw malformed("unknown transformation '" + m.transform + "'");
    return m;
  }

  CostReport report(const Program& p) const {
    CostReport r = cost(p, cfg_.machine);
    if (native_) r.measured_seconds = native_->runtime(p);
    return r;
  }

  std::shared_ptr<Session> make_session(const std::string& kernel, const std::string& preset) const {
    KernelInstance k;
    try {
      k = corpus_.load(kernel, preset);
    } catch (const Error& e) {
      throw malformed(e.what());
    }
    auto s = std::make_shared<Session>(kernel, preset, History(k.program, cfg_.pass.engine));
    s->costs.push_back(report(k.program));
    return s;
  }

  std::shared_ptr<Session> session(const std::string& id) const {
    std::shared_lock lock(map_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("unknown session '" + id + "'");
    return it->second;
  }

  std::shared_ptr<SearchJob> session_job(const std::string& id) const {
    auto s = session(id);
    std::lock_guard g(s->mu);
    if (!s->job) throw not_found("session '" + id + "' has no search");
    return s->job;
  }

  std::string next_id() {
    for (;;) {
      std::string id = "s" + std::to_string(++counter_);
      if (!sessions_.count(id)) return id;
    }
  }

  json moves_locked(const Session& s) const {
    json list = json::array();
    json groups = json::object();
    for (const auto& m : enumerate_moves(s.history.current(), cfg_.pass.engine)) {
      list.push_back(to_json(m));
      groups[m.transform].push_back(m.str());
    }
    return {{"moves", list}, {"groups", groups}};
  }

  json state_locked(const Session& s) const {
    json costs = json::array();
    for (const auto& c : s.costs) costs.push_back(to_json(c));
    json log = json::array();
    for (const auto& m : s.history.moves()) log.push_back(m.str());
    json st{{"id", s.id},
            {"kernel", s.kernel},
            {"preset", s.preset},
            {"program", print_program(s.history.current())},
            {"tree", tree_json(s.history.current())},
            {"log", log},
            {"costs", costs},
            {"created", s.created},
            {"updated", s.updated}};
    if (s.job) {
      std::lock_guard jg(s.job->mu);
      st["search"] = {{"status", s.job->status}, {"rows", s.job->rows.size()}};
    } else {
      st["search"] = nullptr;
    }
    return st;
  }

  void touch(Session& s) {
    s.updated = service_detail::iso_now();
    persist(s, false);
  }

  // Persistence: <dir>/manifest.json lists the sessions; <dir>/<id>.log is
  // the session's move log, appended on apply and rewritten on undo.

  std::filesystem::path log_path(const Session& s) const {
    return std::filesystem::path(cfg_.sessions_dir) / (s.id + ".log");
  }

  void persist(const Session& s, bool created) {
    if (cfg_.sessions_dir.empty()) return;
    std::lock_guard lock(disk_mu_);
    std::filesystem::create_directories(cfg_.sessions_dir);
    if (created) service_detail::write_atomic(log_path(s), "");
    manifest_[s.id] = {{"kernel", s.kernel}, {"preset", s.preset}, {"created", s.created}, {"updated", s.updated}};
    json doc{{"format", "perfdojo-sessions v1"}, {"sessions", manifest_}};
    service_detail::write_atomic(std::filesystem::path(cfg_.sessions_dir) / "manifest.json", doc.dump(2) + "\n");
  }

  void append_log(const Session& s, const std::vector<TransformMove>& moves) {
    if (cfg_.sessions_dir.empty() || moves.empty()) return;
    std::lock_guard lock(disk_mu_);
    std::ofstream out(log_path(s), std::ios::app);
    for (const auto& m : moves) out << m.str() << "\n";
    out.flush();
    if (!out) throw Error(ErrorCode::Internal, "cannot append to " + log_path(s).string());
  }

  void rewrite_log(const Session& s) {
    if (cfg_.sessions_dir.empty()) return;
    std::lock_guard lock(disk_mu_);
    service_detail::write_atomic(log_path(s), s.history.log());
  }

  void load_sessions() {
    auto path = std::filesystem::path(cfg_.sessions_dir) / "manifest.json";
    if (!std::filesystem::exists(path)) return;
    json doc = json::parse(kernels_detail::read_file(path));
    for (const auto& [id, e] : doc.at("sessions").items()) {
      auto s = make_session(e.at("kernel"), e.at("preset"));
      s->id = id;
      s->created = e.value("created", "");
      s->updated = e.value("updated", "");
      std::string text = std::filesystem::exists(log_path(*s)) ? kernels_detail::read_file(log_path(*s)) : "";
      auto replayed = History::replay(s->history.root(), parse_log(text), cfg_.pass.engine);
      if (auto* c = std::get_if<ReplayConflict>(&replayed))
        throw Error(ErrorCode::Internal, "session '" + id + "' does not replay at move " + std::to_string(c->index) +
                                             ": " + c->reason);
      History& h = std::get<History>(replayed);
      for (std::size_t i = 0; i < h.size(); ++i) {
        s->history.push(h.moves()[i], std::make_shared<const Program>(h.at(i + 1)));
        s->costs.push_back(report(s->history.current()));
      }
      manifest_[id] = e;
      if (id.size() > 1 && id[0] == 's' && std::all_of(id.begin() + 1, id.end(), ::isdigit))
        counter_ = std::max(counter_, std::stol(id.substr(1)));
      sessions_[id] = s;
    }
  }

  ServiceConfig cfg_;
  Corpus corpus_;
  std::unique_ptr<NativeProvider> native_;

  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  long counter_ = 0;

  std::mutex disk_mu_;
  json manifest_ = json::object();
};

}  // namespace perfdojo::dojo
