#include "datashield/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "crypto.hpp"
#include "datashield/error.hpp"
#include "datashield/net.hpp"
#include "datashield/text.hpp"

namespace datashield::llm {

// ---------------------------------------------------------------------------
// Templates

Template::Template(std::string text) : text_(std::move(text)) {
  std::size_t pos = 0;
  while ((pos = text_.find("{{", pos)) != std::string::npos) {
    const auto close = text_.find("}}", pos + 2);
    if (close == std::string::npos) throw ConfigError("unterminated template slot");
    auto name = text::trim(std::string_view(text_).substr(pos + 2, close - pos - 2));
    if (name.empty()) throw ConfigError("empty template slot");
    if (std::find(slots_.begin(), slots_.end(), name) == slots_.end()) slots_.push_back(name);
    pos = close + 2;
  }
}

std::string Template::render(const Variables& vars) const {
  for (const auto& slot : slots_) {
    if (!vars.count(slot)) throw ConfigError("missing template slot '" + slot + "'");
  }
  std::string out;
  out.reserve(text_.size());
  std::size_t pos = 0;
  while (true) {
    const auto open = text_.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text_, pos, std::string::npos);
      break;
    }
    const auto close = text_.find("}}", open + 2);
    out.append(text_, pos, open - pos);
    out += vars.at(text::trim(std::string_view(text_).substr(open + 2, close - open - 2)));
    pos = close + 2;
  }
  return out;
}

TemplateRegistry TemplateRegistry::builtin() {
  TemplateRegistry r;
  r.add("indirect_scan",
        Template("You review prompts written by scientists before they reach an external model.\n"
                 "List confidential entities that the prompt does not name but that a capable "
                 "model could infer from its context (for example a specific gene implied by a "
                 "pathway, organism and domain description).\n"
                 "Answer with NONE, or a JSON array of objects with keys \"entity\", "
                 "\"rationale\" and \"confidence\" (0 to 1).\n\nPrompt:\n{{prompt}}\n"));
  r.add("tool_rank",
        Template("A user prompt may require external tools. From the candidate list keep only "
                 "tools that are needed to carry out the prompt.\nAnswer with a JSON array of "
                 "tool ids, most relevant first.\n\nPrompt:\n{{prompt}}\n\nCandidates:\n"
                 "{{candidates}}\n"));
  r.add("policy_extract",
        Template("Extract privacy practices from the policy sentences below. Answer with a JSON "
                 "array of objects with keys \"actor\", \"action\" (Collect, Use, Share, Retain "
                 "or Secure), \"data_type\", \"object\" (purpose, recipient, retention period or "
                 "security measure) and \"source_sentence\" (copied verbatim).\n\n"
                 "Sentences:\n{{sentences}}\n"));
  r.add("label_condense",
        Template("Rewrite each item of the privacy label section \"{{section}}\" as a short "
                 "phrase. Keep the order and the number of items. Answer with a JSON array of "
                 "strings.\n\nItems:\n{{items}}\n"));
  r.add("internal_summary",
        Template("Summarize the organization's code of conduct for the section \"{{section}}\" "
                 "({{query}}). Answer with a JSON array of objects with keys \"item\", "
                 "\"clause\" (copied verbatim from the code of conduct) and, for the "
                 "protected_vs_exposed section, \"status\" (Protected or Exposed).\n\n"
                 "Relevant clauses:\n{{context}}\n"));
  r.add("compliance_adjudicate",
        Template("Decide whether the external tool's privacy label complies with the internal "
                 "clause. Answer with a JSON object with keys \"verdict\" (Compliant, Violation "
                 "or Unclear), \"label_item\" (the label item relied on, verbatim) and "
                 "\"explanation\".\n\nInternal clause:\n{{clause}}\n\nPrivacy label:\n"
                 "{{label}}\n"));
  r.add("qa_answer",
        Template("Answer the question using only the text below. Reply with a short answer, or "
                 "\"not stated\" when the text does not say.\n\nQuestion: {{question}}\n\n"
                 "Text:\n{{context}}\n"));
  r.add("forward", Template("{{prompt}}"));
  return r;
}

void TemplateRegistry::add(std::string task, Template tmpl) {
  templates_[std::move(task)] = std::move(tmpl);
}

bool TemplateRegistry::contains(std::string_view task) const {
  return templates_.find(task) != templates_.end();
}

const Template& TemplateRegistry::get(std::string_view task) const {
  const auto it = templates_.find(task);
  if (it == templates_.end()) throw ConfigError("unknown task '" + std::string(task) + "'");
  return it->second;
}

std::string fingerprint(const Request& request) {
  // Length prefix keeps "ab"+"c" distinct from "a"+"bc".
  return crypto::sha256_hex(std::to_string(request.task.size()) + ":" + request.task + "\n" +
                            request.prompt);
}

std::string_view to_string(Backend::Kind kind) {
  switch (kind) {
    case Backend::Kind::kRemote: return "remote";
    case Backend::Kind::kStub: return "stub";
    case Backend::Kind::kCassette: return "cassette";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Stub

StubBackend::StubBackend(std::map<std::string, std::string> by_task, std::string default_response)
    : by_task_(std::move(by_task)), default_response_(std::move(default_response)) {}

std::string StubBackend::send(const Request& request) {
  if (failing_) throw LlmError("stub backend configured to fail");
  std::lock_guard lock(mutex_);
  if (auto it = by_fingerprint_.find(fingerprint(request)); it != by_fingerprint_.end()) {
    return it->second;
  }
  if (auto it = by_task_.find(request.task); it != by_task_.end()) return it->second;
  return default_response_;
}

void StubBackend::set_response(std::string task, std::string response) {
  std::lock_guard lock(mutex_);
  by_task_[std::move(task)] = std::move(response);
}

void StubBackend::set_response_for(const Request& request, std::string response) {
  std::lock_guard lock(mutex_);
  by_fingerprint_[fingerprint(request)] = std::move(response);
}

// ---------------------------------------------------------------------------
// Cassette

namespace {
constexpr std::string_view kCassetteHeader = "# datashield-cassette v1";

bool is_hex64(std::string_view s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}
}  // namespace

Cassette Cassette::parse(std::string_view content) {
  Cassette cassette;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    auto line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected fingerprint<TAB>base64");
    const auto fp = line.substr(0, tab);
    if (!is_hex64(fp)) throw ParseError(line_no, "fingerprint must be 64 lowercase hex digits");
    std::string response;
    try {
      response = crypto::base64_decode(line.substr(tab + 1));
    } catch (const ParseError& e) {
      throw ParseError(line_no, "bad response encoding");
    }
    cassette.entries_.push_back({std::string(fp), std::move(response)});
  }
  return cassette;
}

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cassette " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Cassette::serialize() const {
  std::string out(kCassetteHeader);
  out += "\n";
  for (const auto& e : entries_) {
    out += e.fingerprint;
    out += "\t";
    out += crypto::base64_encode(e.response);
    out += "\n";
  }
  return out;
}

void Cassette::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write cassette " + path.string());
  out << serialize();
}

CassetteBackend::CassetteBackend(Mode mode, Cassette cassette, bool strict,
                                 std::shared_ptr<Backend> inner)
    : mode_(mode), cassette_(std::move(cassette)), strict_(strict), inner_(std::move(inner)) {
  for (std::size_t i = 0; i < cassette_.entries().size(); ++i) {
    index_[cassette_.entries()[i].fingerprint].push_back(i);
  }
}

std::unique_ptr<CassetteBackend> CassetteBackend::replay(Cassette cassette, bool strict,
                                                         std::shared_ptr<Backend> fallback) {
  return std::unique_ptr<CassetteBackend>(
      new CassetteBackend(Mode::kReplay, std::move(cassette), strict, std::move(fallback)));
}

std::unique_ptr<CassetteBackend> CassetteBackend::record(std::shared_ptr<Backend> inner) {
  if (!inner) throw ConfigError("record mode needs a backend to record from");
  return std::unique_ptr<CassetteBackend>(
      new CassetteBackend(Mode::kRecord, Cassette{}, true, std::move(inner)));
}

std::string CassetteBackend::send(const Request& request) {
  const auto fp = fingerprint(request);
  if (mode_ == Mode::kRecord) {
    auto response = inner_->send(request);
    std::lock_guard lock(mutex_);
    cassette_.append({fp, response});
    return response;
  }
  {
    std::lock_guard lock(mutex_);
    if (auto it = index_.find(fp); it != index_.end()) {
      auto& cursor = cursor_[fp];
      const auto& positions = it->second;
      const std::size_t slot = positions[std::min(cursor, positions.size() - 1)];
      if (cursor < positions.size()) ++cursor;
      return cassette_.entries()[slot].response;
    }
  }
  if (!strict_ && inner_) return inner_->send(request);
  throw ReplayError("no recorded response for task '" + request.task + "' (fingerprint " + fp +
                    ")");
}

Cassette CassetteBackend::cassette() const {
  std::lock_guard lock(mutex_);
  return cassette_;
}

// ---------------------------------------------------------------------------
// Remote

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("remote backend needs an endpoint URL");
}

std::string RemoteBackend::send(const Request& request) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme");
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  const auto base = config_.endpoint.substr(0, path_start);
  const auto path = path_start == std::string::npos ? std::string("/")
                                                    : config_.endpoint.substr(path_start);

  net::note_outbound(base);
  httplib::Client cli(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  cli.set_connection_timeout(secs);
  cli.set_read_timeout(secs);
  cli.set_write_timeout(secs);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const nlohmann::json body{
      {"model", config_.model},
      {"temperature", 0},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw TimeoutError("remote model timed out: " + httplib::to_string(err));
    }
    throw LlmError("remote model request failed: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw LlmError("remote model returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw LlmError(std::string("unexpected remote response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Audit log

AuditLog::AuditLog(std::filesystem::path file) : file_(std::move(file)) {}

void AuditLog::append(AuditRecord record) {
  std::lock_guard lock(mutex_);
  record.sequence = static_cast<std::int64_t>(records_.size()) + 1;
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    if (out) {
      out << nlohmann::json{{"seq", record.sequence},
                            {"task", record.task},
                            {"fingerprint", record.fingerprint},
                            {"prompt", record.prompt},
                            {"response", record.response},
                            {"error", record.error}}
                 .dump()
          << "\n";
    }
  }
  records_.push_back(std::move(record));
}

std::vector<AuditRecord> AuditLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

// ---------------------------------------------------------------------------
// Client

Client::Client(std::shared_ptr<Backend> backend, TemplateRegistry registry, std::string model_name,
               std::shared_ptr<AuditLog> audit)
    : backend_(std::move(backend)),
      registry_(std::move(registry)),
      model_name_(std::move(model_name)),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()) {
  if (!backend_) throw ConfigError("client needs a backend");
}

std::string Client::render(std::string_view task, const Variables& vars) const {
  try {
    return registry_.get(task).render(vars);
  } catch (const ConfigError& e) {
    throw ConfigError("task '" + std::string(task) + "': " + e.what());
  }
}

std::string Client::complete(std::string_view task, const Variables& vars) {
  Request request{std::string(task), render(task, vars)};
  AuditRecord record;
  record.task = request.task;
  record.fingerprint = fingerprint(request);
  record.prompt = request.prompt;
  try {
    record.response = backend_->send(request);
  } catch (const std::exception& e) {
    record.error = e.what();
    audit_->append(std::move(record));
    throw;
  }
  auto response = record.response;
  audit_->append(std::move(record));
  return response;
}

// ---------------------------------------------------------------------------
// Retrieval

void RetrievalIndex::add(std::string doc_id, std::string text) {
  if (docs_.count(doc_id)) throw ArgumentError("duplicate document id '" + doc_id + "'");
  Doc doc;
  doc.text = std::move(text);
  for (const auto& w : text::words(doc.text)) ++doc.term_counts[w];
  for (const auto& [term, count] : doc.term_counts) ++doc_freq_[term];
  docs_.emplace(std::move(doc_id), std::move(doc));
}

const std::string& RetrievalIndex::text(std::string_view doc_id) const {
  const auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw NotFoundError("document '" + std::string(doc_id) + "' not found");
  return it->second.text;
}

std::vector<RetrievalIndex::Hit> RetrievalIndex::retrieve(std::string_view query, int k) const {
  if (k < 1) throw ArgumentError("k must be >= 1");
  std::map<std::string, int> query_counts;
  for (const auto& w : text::words(query)) ++query_counts[w];
  if (query_counts.empty() || docs_.empty()) return {};

  const double n_docs = static_cast<double>(docs_.size());
  std::vector<Hit> hits;
  for (const auto& [id, doc] : docs_) {
    double score = 0.0;
    for (const auto& [term, qcount] : query_counts) {
      const auto tf = doc.term_counts.find(term);
      if (tf == doc.term_counts.end()) continue;
      const double idf = std::log(1.0 + n_docs / static_cast<double>(doc_freq_.at(term)));
      score += static_cast<double>(qcount) * static_cast<double>(tf->second) * idf;
    }
    if (score > 0.0) hits.push_back({id, score});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
  return hits;
}

std::string build_context(const RetrievalIndex& index,
                          const std::vector<RetrievalIndex::Hit>& hits) {
  std::string out;
  for (const auto& h : hits) {
    out += "[" + h.doc_id + "] " + index.text(h.doc_id) + "\n";
  }
  return out;
}

namespace {
Variables augmented_vars(std::string_view query, const RetrievalIndex& index, int k,
                         Variables extra) {
  const auto hits = index.size() == 0 ? std::vector<RetrievalIndex::Hit>{}
                                      : index.retrieve(query, k);
  extra[std::string(kQuerySlot)] = std::string(query);
  extra[std::string(kContextSlot)] = build_context(index, hits);
  return extra;
}
}  // namespace

std::string augment(Client& client, std::string_view task, std::string_view query,
                    const RetrievalIndex& index, int k, Variables extra) {
  return client.complete(task, augmented_vars(query, index, k, std::move(extra)));
}

std::string render_augmented(const Client& client, std::string_view task, std::string_view query,
                             const RetrievalIndex& index, int k, Variables extra) {
  return client.render(task, augmented_vars(query, index, k, std::move(extra)));
}

}  // namespace datashield::llm
