#include "datashield/session.hpp"

#include <sqlite3.h>

#include <chrono>
#include <random>

#include "datashield/error.hpp"
#include "datashield/serialization.hpp"

namespace datashield {

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::kUser: return "user";
    case NodeKind::kGateway: return "gateway";
    case NodeKind::kLlm: return "llm";
    case NodeKind::kExternalTool: return "external_tool";
  }
  return "user";
}

std::vector<const FlowEdge*> DataFlow::outbound() const {
  std::vector<const FlowEdge*> out;
  for (const auto& e : edges) {
    if (e.from == "gateway") out.push_back(&e);
  }
  return out;
}

bool payload_has_confidential(std::string_view payload, const std::vector<DetectionSpan>& spans) {
  for (const auto& s : spans) {
    if (s.whole_prompt || s.surface.empty()) continue;
    if (payload.find(s.surface) != std::string_view::npos) return true;
  }
  return false;
}

void apply_event(AnalysisSession& session, const SessionEvent& event) {
  const auto& p = event.payload;
  if (event.kind == "created") {
    session.id = p.at("id").get<std::string>();
    session.created_at_ms = p.at("created_at_ms").get<std::int64_t>();
    session.terms = p.at("terms").get<UserTermList>();
  } else if (event.kind == "analyzed") {
    session.history.push_back(p.get<AnalysisEntry>());
  } else if (event.kind == "feedback") {
    auto fb = p.get<FeedbackEvent>();
    if (fb.verdict == Verdict::kConfidential) {
      session.terms.add(fb.surface, fb.user);
    } else {
      session.terms.suppress(fb.surface, fb.category);
    }
    session.feedback.push_back(std::move(fb));
  } else if (event.kind == "terms") {
    const auto user = p.value("user", std::string("user"));
    for (const auto& t : p.at("add")) session.terms.add(t.get<std::string>(), user);
    for (const auto& t : p.at("remove")) session.terms.remove(t.get<std::string>());
  } else {
    throw StorageError("unknown event kind '" + event.kind + "'");
  }
}

// ---------------------------------------------------------------------------

struct SessionStore::Impl {
  sqlite3* db = nullptr;
  mutable std::mutex mutex;

  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw StorageError("sqlite: " + msg);
    }
  }

  struct Stmt {
    sqlite3_stmt* s = nullptr;
    Stmt(sqlite3* db, const char* sql) {
      if (sqlite3_prepare_v2(db, sql, -1, &s, nullptr) != SQLITE_OK) {
        throw StorageError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
      }
    }
    ~Stmt() { sqlite3_finalize(s); }
    void bind(int i, const std::string& v) {
      sqlite3_bind_text(s, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    }
    void bind(int i, std::int64_t v) { sqlite3_bind_int64(s, i, v); }
  };

  void fail(const char* what) const {
    throw StorageError(std::string(what) + ": " + sqlite3_errmsg(db));
  }

  std::int64_t insert(const std::string& id, std::int64_t seq, const std::string& kind,
                      const nlohmann::json& payload) {
    Stmt st(db, "INSERT INTO events(session_id, seq, kind, payload) VALUES (?, ?, ?, ?)");
    st.bind(1, id);
    st.bind(2, seq);
    st.bind(3, kind);
    st.bind(4, payload.dump());
    if (sqlite3_step(st.s) != SQLITE_DONE) fail("sqlite insert");
    return seq;
  }

  std::int64_t next_seq(const std::string& id) const {
    Stmt st(db, "SELECT MAX(seq) FROM events WHERE session_id = ?");
    st.bind(1, id);
    if (sqlite3_step(st.s) != SQLITE_ROW || sqlite3_column_type(st.s, 0) == SQLITE_NULL) return -1;
    return sqlite3_column_int64(st.s, 0) + 1;
  }
};

SessionStore::SessionStore(const std::string& path) : impl_(std::make_unique<Impl>()) {
  const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
  if (sqlite3_open_v2(path.c_str(), &impl_->db, flags, nullptr) != SQLITE_OK) {
    std::string msg = impl_->db ? sqlite3_errmsg(impl_->db) : "out of memory";
    sqlite3_close(impl_->db);
    impl_->db = nullptr;
    throw StorageError("cannot open session store '" + path + "': " + msg);
  }
  sqlite3_busy_timeout(impl_->db, 5000);
  if (path != ":memory:") impl_->exec("PRAGMA journal_mode=WAL");
  impl_->exec("PRAGMA synchronous=FULL");
  impl_->exec(
      "CREATE TABLE IF NOT EXISTS events ("
      " session_id TEXT NOT NULL,"
      " seq INTEGER NOT NULL,"
      " kind TEXT NOT NULL,"
      " payload TEXT NOT NULL,"
      " PRIMARY KEY (session_id, seq))");
}

SessionStore::~SessionStore() {
  if (impl_ && impl_->db) sqlite3_close(impl_->db);
}

void SessionStore::create(const std::string& session_id, const nlohmann::json& payload) {
  std::lock_guard lock(impl_->mutex);
  if (impl_->next_seq(session_id) >= 0) {
    throw StorageError("session '" + session_id + "' already exists");
  }
  impl_->insert(session_id, 0, "created", payload);
}

std::int64_t SessionStore::append(const std::string& session_id, const std::string& kind,
                                  const nlohmann::json& payload) {
  std::lock_guard lock(impl_->mutex);
  const auto seq = impl_->next_seq(session_id);
  if (seq < 0) throw NotFoundError("session '" + session_id + "' not found");
  return impl_->insert(session_id, seq, kind, payload);
}

bool SessionStore::exists(const std::string& session_id) const {
  std::lock_guard lock(impl_->mutex);
  return impl_->next_seq(session_id) >= 0;
}

std::vector<SessionEvent> SessionStore::events(const std::string& session_id) const {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(impl_->db,
                "SELECT seq, kind, payload FROM events WHERE session_id = ? ORDER BY seq");
  st.bind(1, session_id);
  std::vector<SessionEvent> out;
  int rc;
  while ((rc = sqlite3_step(st.s)) == SQLITE_ROW) {
    SessionEvent ev;
    ev.seq = sqlite3_column_int64(st.s, 0);
    ev.kind = reinterpret_cast<const char*>(sqlite3_column_text(st.s, 1));
    const auto* payload = reinterpret_cast<const char*>(sqlite3_column_text(st.s, 2));
    ev.payload = nlohmann::json::parse(payload, nullptr, false);
    if (ev.payload.is_discarded()) throw StorageError("corrupt event payload");
    out.push_back(std::move(ev));
  }
  if (rc != SQLITE_DONE) impl_->fail("sqlite read");
  return out;
}

std::vector<std::string> SessionStore::session_ids() const {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(impl_->db, "SELECT DISTINCT session_id FROM events ORDER BY session_id");
  std::vector<std::string> out;
  while (sqlite3_step(st.s) == SQLITE_ROW) {
    out.emplace_back(reinterpret_cast<const char*>(sqlite3_column_text(st.s, 0)));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string random_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[20];
  std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

constexpr std::string_view kRedactRecommendation =
    "Redact before sending: the prompt contains High-sensitivity data.";

}  // namespace

Gateway::Gateway(GatewayConfig config, GatewayResources resources,
                 std::shared_ptr<SessionStore> store, std::function<std::int64_t()> clock_ms)
    : config_(std::move(config)),
      resources_(std::move(resources)),
      store_(std::move(store)),
      clock_ms_(clock_ms ? std::move(clock_ms) : now_ms) {
  if (!store_) throw ArgumentError("gateway needs a session store");
  if (!resources_.gazetteer) resources_.gazetteer = std::make_shared<Gazetteer>();
  if (!resources_.tools) resources_.tools = std::make_shared<ToolBank>();
}

std::shared_ptr<std::mutex> Gateway::session_lock(const std::string& session_id) {
  std::lock_guard lock(locks_mutex_);
  auto& m = locks_[session_id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

AnalysisSession Gateway::load(const std::string& session_id) const {
  const auto events = store_->events(session_id);
  if (events.empty()) throw NotFoundError("session '" + session_id + "' not found");
  AnalysisSession session;
  for (const auto& ev : events) apply_event(session, ev);
  return session;
}

std::string Gateway::create_session() {
  std::string id;
  do {
    id = random_id();
  } while (store_->exists(id));
  nlohmann::json payload = {{"id", id}, {"created_at_ms", clock_ms_()}};
  payload["terms"] = resources_.initial_terms;
  store_->create(id, payload);
  return id;
}

AnalysisSession Gateway::get_session(const std::string& session_id) const {
  return load(session_id);
}

std::vector<ToolOutcome> Gateway::run_policies(const std::vector<std::string>& tool_ids,
                                               std::vector<std::string>& degradations) {
  std::vector<ToolOutcome> out;
  for (const auto& id : tool_ids) {
    ToolOutcome outcome;
    outcome.tool_id = id;
    if (!resources_.fetcher) {
      outcome.error = "policy fetcher not configured";
      out.push_back(std::move(outcome));
      continue;
    }
    PolicyDocument doc;
    try {
      doc = resources_.fetcher->fetch(id, *resources_.tools);
    } catch (const Error& e) {
      outcome.error = e.what();
      degradations.push_back("policy for " + id + ": " + e.what());
      out.push_back(std::move(outcome));
      continue;
    }
    {
      std::lock_guard lock(label_cache_mutex_);
      const auto it = label_cache_.find(doc.content_hash);
      if (it != label_cache_.end() && it->second.tool_id == id) {
        outcome = it->second;
        outcome.stale = doc.stale;
        out.push_back(std::move(outcome));
        continue;
      }
    }
    const auto graph = extract_graph(doc, resources_.client.get());
    outcome.label = make_label(graph, doc, resources_.client.get());
    outcome.degraded = graph.degraded || outcome.label->degraded;
    outcome.stale = doc.stale;
    if (outcome.degraded) degradations.push_back("policy summary for " + id + " degraded");
    {
      std::lock_guard lock(label_cache_mutex_);
      label_cache_[doc.content_hash] = outcome;
    }
    out.push_back(std::move(outcome));
  }
  return out;
}

AnalysisEntry Gateway::analyze(const std::string& session_id, std::string_view text,
                               std::optional<AnalysisOptions> options) {
  if (text::trim(text).empty()) throw ArgumentError("prompt is empty");
  const auto lock_ptr = session_lock(session_id);
  std::lock_guard lock(*lock_ptr);
  const auto session = load(session_id);

  AnalysisEntry entry;
  entry.options = options.value_or(
      AnalysisOptions{config_.redact_before_send_default, config_.forward_default});
  entry.prompt.id = session_id + "-" + std::to_string(session.history.size() + 1);
  entry.prompt.text = std::string(text);
  entry.prompt.received_at_ms = clock_ms_();

  auto* client = resources_.client.get();
  entry.detection =
      scan_full(entry.prompt, *resources_.gazetteer, session.terms, client, config_.detection);
  if (entry.detection.llm_degraded) {
    entry.degradations.push_back("indirect detection: " + entry.detection.degraded_reason);
  }
  entry.redacted = redact(entry.prompt, entry.detection.spans);

  std::vector<std::string> tool_ids;
  try {
    tool_ids = identify_tools(entry.prompt, *resources_.tools, client);
  } catch (const Error& e) {
    entry.degradations.push_back(std::string("tool identification: ") + e.what());
    tool_ids.clear();
    for (const auto& m : match_tool_tags(entry.prompt, *resources_.tools)) {
      tool_ids.push_back(m.tool_id);
    }
  }
  entry.tools = run_policies(tool_ids, entry.degradations);

  if (resources_.internal_summary) {
    std::vector<NutritionLabel> labels;
    for (const auto& t : entry.tools) {
      if (t.label) labels.push_back(*t.label);
    }
    entry.compliance = check_compliance(labels, *resources_.internal_summary, client);
    if (entry.compliance->degraded) entry.degradations.push_back("compliance adjudication degraded");
  }

  // Data flow: what the user typed, and what leaves the gateway.
  const auto& spans = entry.detection.spans;
  const std::string& outbound_payload =
      entry.options.redact_before_send ? entry.redacted.text : entry.prompt.text;
  entry.flow.nodes.push_back({"user", NodeKind::kUser, "user"});
  entry.flow.nodes.push_back({"gateway", NodeKind::kGateway, "datashield"});
  entry.flow.nodes.push_back({"llm", NodeKind::kLlm, config_.llm_node_name});
  entry.flow.edges.push_back({"user", "gateway", entry.prompt.text,
                              payload_has_confidential(entry.prompt.text, spans)});
  const bool outbound_confidential = payload_has_confidential(outbound_payload, spans);
  entry.flow.edges.push_back({"gateway", "llm", outbound_payload, outbound_confidential});
  for (const auto& t : entry.tools) {
    const auto* tool = resources_.tools->find(t.tool_id);
    entry.flow.nodes.push_back(
        {"tool:" + t.tool_id, NodeKind::kExternalTool, tool ? tool->name : t.tool_id});
    entry.flow.edges.push_back(
        {"gateway", "tool:" + t.tool_id, outbound_payload, outbound_confidential});
  }

  if (entry.detection.has_high()) entry.recommendations.emplace_back(kRedactRecommendation);
  if (entry.compliance) {
    for (const auto& v : entry.compliance->verdicts) {
      if (v.verdict == ComplianceVerdict::kViolation) {
        entry.recommendations.push_back("Avoid tool " + v.tool_id +
                                        ": its policy conflicts with internal policy.");
      }
    }
  }

  if (entry.options.forward) {
    if (client == nullptr) {
      entry.degradations.emplace_back("forwarding unavailable: no model backend");
    } else {
      try {
        entry.forwarded_response = client->complete("forward", {{"prompt", outbound_payload}});
      } catch (const Error& e) {
        entry.degradations.push_back(std::string("forwarding failed: ") + e.what());
      }
    }
  }

  store_->append(session_id, "analyzed", nlohmann::json(entry));
  return entry;
}

void Gateway::submit_feedback(const std::string& session_id, std::string_view span_id,
                              Verdict verdict, std::string_view user) {
  const auto lock_ptr = session_lock(session_id);
  std::lock_guard lock(*lock_ptr);
  auto session = load(session_id);

  for (auto it = session.history.rbegin(); it != session.history.rend(); ++it) {
    const auto* span = it->detection.find_span(span_id);
    if (span == nullptr) continue;
    // Validates and mirrors exactly what apply_event replays.
    record_feedback(it->detection, span_id, verdict, session.terms, user);
    FeedbackEvent fb;
    fb.span_id = std::string(span_id);
    fb.verdict = verdict;
    fb.surface = span->whole_prompt ? span->rationale : span->surface;
    fb.category = span->category;
    fb.user = std::string(user);
    fb.at_ms = clock_ms_();
    store_->append(session_id, "feedback", nlohmann::json(fb));
    return;
  }
  throw NotFoundError("span '" + std::string(span_id) + "' not found in session");
}

UserTermList Gateway::manage_terms(const std::string& session_id,
                                   const std::vector<std::string>& add,
                                   const std::vector<std::string>& remove,
                                   std::string_view user) {
  const auto lock_ptr = session_lock(session_id);
  std::lock_guard lock(*lock_ptr);
  auto session = load(session_id);
  for (const auto& t : add) {
    if (text::trim(t).empty()) throw ArgumentError("empty term");
    session.terms.add(t, user);
  }
  for (const auto& t : remove) session.terms.remove(t);
  if (!add.empty() || !remove.empty()) {
    store_->append(session_id, "terms", {{"add", add}, {"remove", remove}, {"user", user}});
  }
  return session.terms;
}

}  // namespace datashield
