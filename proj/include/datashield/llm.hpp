#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace datashield::llm {

using Variables = std::map<std::string, std::string>;

// Instruction template with {{slot}} placeholders. Every slot is required.
class Template {
 public:
  Template() = default;
  explicit Template(std::string text);

  const std::string& text() const { return text_; }
  const std::vector<std::string>& slots() const { return slots_; }
  // Throws ConfigError when a slot has no value.
  std::string render(const Variables& vars) const;

 private:
  std::string text_;
  std::vector<std::string> slots_;
};

class TemplateRegistry {
 public:
  // Registry preloaded with the library's built-in tasks.
  static TemplateRegistry builtin();

  void add(std::string task, Template tmpl);
  bool contains(std::string_view task) const;
  // Throws ConfigError for unknown tasks.
  const Template& get(std::string_view task) const;

 private:
  std::map<std::string, Template, std::less<>> templates_;
};

struct Request {
  std::string task;
  std::string prompt;  // fully rendered
};

// Stable SHA-256 (hex) over task name and rendered prompt.
std::string fingerprint(const Request& request);

class Backend {
 public:
  enum class Kind { kRemote, kStub, kCassette };
  virtual ~Backend() = default;
  virtual Kind kind() const = 0;
  // Throws LlmError, TimeoutError or ReplayError.
  virtual std::string send(const Request& request) = 0;
};

std::string_view to_string(Backend::Kind kind);

// Canned responses keyed by task, with an optional per-fingerprint
// override. Unknown tasks get the default response.
class StubBackend final : public Backend {
 public:
  explicit StubBackend(std::map<std::string, std::string> by_task = {},
                       std::string default_response = "NONE");

  Kind kind() const override { return Kind::kStub; }
  std::string send(const Request& request) override;

  void set_response(std::string task, std::string response);
  void set_response_for(const Request& request, std::string response);
  // While failing, every send throws LlmError.
  void set_failing(bool failing) { failing_ = failing; }

 private:
  std::mutex mutex_;
  std::map<std::string, std::string> by_task_;
  std::map<std::string, std::string> by_fingerprint_;
  std::string default_response_;
  std::atomic<bool> failing_{false};
};

struct CassetteEntry {
  std::string fingerprint;
  std::string response;
  friend bool operator==(const CassetteEntry&, const CassetteEntry&) = default;
};

// Ordered request-fingerprint -> response log.
//
// File format, one record per line, UTF-8:
//   # datashield-cassette v1
//   <64 hex fingerprint><TAB><base64 response>
class Cassette {
 public:
  Cassette() = default;
  explicit Cassette(std::vector<CassetteEntry> entries) : entries_(std::move(entries)) {}

  static Cassette parse(std::string_view content);
  static Cassette load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  const std::vector<CassetteEntry>& entries() const { return entries_; }
  void append(CassetteEntry entry) { entries_.push_back(std::move(entry)); }

  friend bool operator==(const Cassette&, const Cassette&) = default;

 private:
  std::vector<CassetteEntry> entries_;
};

// Record mode forwards to `inner` and appends every exchange; replay mode
// answers from the cassette. Repeated fingerprints replay in recorded order
// and the last response repeats once exhausted.
class CassetteBackend final : public Backend {
 public:
  enum class Mode { kRecord, kReplay };

  static std::unique_ptr<CassetteBackend> replay(Cassette cassette, bool strict = true,
                                                 std::shared_ptr<Backend> fallback = nullptr);
  static std::unique_ptr<CassetteBackend> record(std::shared_ptr<Backend> inner);

  Kind kind() const override { return Kind::kCassette; }
  std::string send(const Request& request) override;

  Mode mode() const { return mode_; }
  Cassette cassette() const;

 private:
  CassetteBackend(Mode mode, Cassette cassette, bool strict, std::shared_ptr<Backend> inner);

  mutable std::mutex mutex_;
  Mode mode_;
  Cassette cassette_;
  bool strict_;
  std::shared_ptr<Backend> inner_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
  std::unordered_map<std::string, std::size_t> cursor_;
};

struct RemoteConfig {
  std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
  std::string model;
  std::string api_key_env;  // name of the environment variable holding the key
  std::chrono::milliseconds timeout{30000};
};

// OpenAI-compatible chat-completions endpoint.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  Kind kind() const override { return Kind::kRemote; }
  std::string send(const Request& request) override;

 private:
  RemoteConfig config_;
};

struct AuditRecord {
  std::int64_t sequence = 0;
  std::string task;
  std::string fingerprint;
  std::string prompt;
  std::string response;
  std::string error;
};

// Append-only request/response log. Optionally mirrored to a JSON-lines file.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(std::filesystem::path file);

  void append(AuditRecord record);
  std::vector<AuditRecord> records() const;

 private:
  mutable std::mutex mutex_;
  std::vector<AuditRecord> records_;
  std::optional<std::filesystem::path> file_;
};

class Client {
 public:
  Client(std::shared_ptr<Backend> backend, TemplateRegistry registry = TemplateRegistry::builtin(),
         std::string model_name = "local", std::shared_ptr<AuditLog> audit = nullptr);

  // Throws ConfigError (unknown task / missing slot) and backend errors.
  std::string complete(std::string_view task, const Variables& vars);
  // The prompt complete() would send, without sending it.
  std::string render(std::string_view task, const Variables& vars) const;

  Backend& backend() { return *backend_; }
  const TemplateRegistry& templates() const { return registry_; }
  const std::string& model_name() const { return model_name_; }
  std::shared_ptr<AuditLog> audit_log() const { return audit_; }

 private:
  std::shared_ptr<Backend> backend_;
  TemplateRegistry registry_;
  std::string model_name_;
  std::shared_ptr<AuditLog> audit_;
};

// Lexical tf-idf retrieval with deterministic tie-breaking by doc id.
class RetrievalIndex {
 public:
  struct Hit {
    std::string doc_id;
    double score = 0.0;
    friend bool operator==(const Hit&, const Hit&) = default;
  };

  void add(std::string doc_id, std::string text);
  std::size_t size() const { return docs_.size(); }
  const std::string& text(std::string_view doc_id) const;

  // Throws ArgumentError when k < 1. Only documents sharing a term with the
  // query are returned.
  std::vector<Hit> retrieve(std::string_view query, int k) const;

 private:
  struct Doc {
    std::string text;
    std::map<std::string, int> term_counts;
  };
  std::map<std::string, Doc, std::less<>> docs_;
  std::map<std::string, int> doc_freq_;
};

// Template slot names used by augment().
inline constexpr std::string_view kQuerySlot = "query";
inline constexpr std::string_view kContextSlot = "context";

// Renders retrieved documents, in rank order, into the context slot.
std::string build_context(const RetrievalIndex& index, const std::vector<RetrievalIndex::Hit>& hits);

std::string augment(Client& client, std::string_view task, std::string_view query,
                    const RetrievalIndex& index, int k, Variables extra = {});
std::string render_augmented(const Client& client, std::string_view task, std::string_view query,
                             const RetrievalIndex& index, int k, Variables extra = {});

}  // namespace datashield::llm
