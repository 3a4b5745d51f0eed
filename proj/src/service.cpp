#include "datashield/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "datashield/error.hpp"
#include "datashield/serialization.hpp"
#include "schema_embed.hpp"

namespace datashield {
namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot read ") + what + " '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Record mode that persists the cassette after every exchange.
class RecordingBackend final : public llm::Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path path)
      : recorder_(llm::CassetteBackend::record(std::move(inner))), path_(std::move(path)) {}
  Kind kind() const override { return Kind::kCassette; }
  std::string send(const llm::Request& request) override {
    auto response = recorder_->send(request);
    std::lock_guard lock(mutex_);
    recorder_->cassette().save(path_);
    return response;
  }

 private:
  std::unique_ptr<llm::CassetteBackend> recorder_;
  std::filesystem::path path_;
  std::mutex mutex_;
};

}  // namespace

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig c;
  if (j.is_null()) return c;
  if (j.is_string()) {
    c.kind = j.get<std::string>();
    return c;
  }
  c.kind = j.value("kind", c.kind);
  c.cassette_path = j.value("cassette", std::string{});
  c.cassette_strict = j.value("strict", true);
  c.cassette_record = j.value("record", false);
  c.remote.endpoint = j.value("endpoint", std::string{});
  c.remote.model = j.value("model", std::string{});
  c.remote.api_key_env = j.value("api_key_env", std::string{});
  if (j.contains("timeout_ms")) c.remote.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<int>());
  if (j.contains("responses")) {
    c.stub_responses = j.at("responses").get<std::map<std::string, std::string>>();
  }
  return c;
}

std::shared_ptr<llm::Client> make_client(const BackendConfig& config,
                                         std::shared_ptr<llm::AuditLog> audit) {
  std::shared_ptr<llm::Backend> backend;
  std::string model = config.kind;
  if (config.kind == "none") return nullptr;
  if (config.kind == "stub") {
    backend = std::make_shared<llm::StubBackend>(config.stub_responses);
  } else if (config.kind == "remote" || (config.kind == "cassette" && config.cassette_record)) {
    if (config.remote.endpoint.empty()) throw ConfigError("remote backend needs an endpoint");
    backend = std::make_shared<llm::RemoteBackend>(config.remote);
    model = config.remote.model.empty() ? "remote" : config.remote.model;
    if (config.kind == "cassette") {
      if (config.cassette_path.empty()) throw ConfigError("cassette recording needs a path");
      backend = std::make_shared<RecordingBackend>(backend, config.cassette_path);
    }
  } else if (config.kind == "cassette") {
    if (config.cassette_path.empty()) throw ConfigError("cassette backend needs a cassette path");
    llm::Cassette cassette;
    try {
      cassette = llm::Cassette::load(config.cassette_path);
    } catch (const Error& e) {
      throw ConfigError(std::string("cannot load cassette: ") + e.what());
    }
    backend = llm::CassetteBackend::replay(std::move(cassette), config.cassette_strict);
  } else {
    throw ConfigError("unknown backend kind '" + config.kind + "'");
  }
  return std::make_shared<llm::Client>(backend, llm::TemplateRegistry::builtin(), model,
                                       std::move(audit));
}

ServiceConfig service_config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir) {
  ServiceConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("service configuration must be a JSON object");
  try {
    if (j.contains("listen")) {
      const auto listen = j.at("listen").get<std::string>();
      const auto colon = listen.rfind(':');
      c.listen_address = listen.substr(0, colon);
      if (colon != std::string::npos) c.port = std::stoi(listen.substr(colon + 1));
    }
    c.listen_address = j.value("listen_address", c.listen_address);
    c.port = j.value("port", c.port);
    if (j.contains("storage")) {
      const auto s = j.at("storage").get<std::string>();
      c.storage_path = s == ":memory:" ? s : resolve(base_dir, s).string();
    } else {
      c.storage_path = resolve(base_dir, c.storage_path).string();
    }
    c.gazetteer_path = resolve(base_dir, j.value("gazetteer", std::string{}));
    c.rules_path = resolve(base_dir, j.value("rules", std::string{}));
    c.terms_path = resolve(base_dir, j.value("terms", std::string{}));
    c.tool_bank_path = resolve(base_dir, j.value("tool_bank", std::string{}));
    c.policy_cache_dir =
        resolve(base_dir, j.value("policy_cache_dir", c.policy_cache_dir.string()));
    if (j.contains("policy_fixtures")) {
      for (const auto& [url, path] : j.at("policy_fixtures").items()) {
        c.policy_fixtures[url] = resolve(base_dir, path.get<std::string>());
      }
    }
    c.offline = j.value("offline", false);
    c.conduct_path = resolve(base_dir, j.value("conduct", std::string{}));
    c.internal_summary_path = resolve(base_dir, j.value("internal_summary", std::string{}));
    c.audit_log_path = resolve(base_dir, j.value("audit_log", std::string{}));
    c.static_dir = resolve(base_dir, j.value("static_dir", std::string{}));
    c.schema_path = resolve(base_dir, j.value("schema", std::string{}));
    if (j.contains("backend")) {
      c.backend = backend_config_from_json(j.at("backend"));
      c.backend.cassette_path = resolve(base_dir, c.backend.cassette_path.string());
    }
    auto& g = c.gateway;
    g.redact_before_send_default = j.value("redact_before_send", false);
    g.forward_default = j.value("forward", false);
    g.llm_node_name = j.value("llm_node_name", g.llm_node_name);
    g.detection.fuzzy_threshold = j.value("fuzzy_threshold", g.detection.fuzzy_threshold);
    g.detection.enable_indirect = j.value("indirect", g.detection.enable_indirect);
    g.detection.block_on_high = j.value("block_on_high", g.detection.block_on_high);
    if (j.contains("novelty_lexicon")) {
      g.detection.novelty_lexicon = j.at("novelty_lexicon").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid service configuration: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("invalid listen port");
  }
  return c;
}

void apply_env_overrides(ServiceConfig& config) {
  const auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("DATASHIELD_LISTEN")) {
    const auto colon = v->rfind(':');
    config.listen_address = v->substr(0, colon);
    if (colon != std::string::npos) {
      try {
        config.port = std::stoi(v->substr(colon + 1));
      } catch (const std::exception&) {
        throw ConfigError("DATASHIELD_LISTEN has an invalid port");
      }
    }
  }
  if (auto v = env("DATASHIELD_STORAGE")) config.storage_path = *v;
  if (auto v = env("DATASHIELD_GAZETTEER")) config.gazetteer_path = *v;
  if (auto v = env("DATASHIELD_TOOL_BANK")) config.tool_bank_path = *v;
  if (auto v = env("DATASHIELD_BACKEND")) config.backend.kind = *v;
  if (auto v = env("DATASHIELD_CASSETTE")) config.backend.cassette_path = *v;
  if (auto v = env("DATASHIELD_REDACT_BEFORE_SEND")) {
    config.gateway.redact_before_send_default = (*v == "1" || *v == "true" || *v == "yes");
  }
}

std::unique_ptr<Gateway> build_gateway(const ServiceConfig& config) {
  GatewayResources res;
  GatewayConfig gcfg = config.gateway;
  if (!config.gazetteer_path.empty()) {
    res.gazetteer = std::make_shared<Gazetteer>(Gazetteer::load(config.gazetteer_path));
  }
  if (!config.rules_path.empty()) gcfg.detection.rules = RuleConfig::load(config.rules_path);
  if (!config.terms_path.empty()) res.initial_terms = UserTermList::load(config.terms_path);
  if (!config.tool_bank_path.empty()) {
    res.tools = std::make_shared<ToolBank>(ToolBank::load(config.tool_bank_path));
  }
  FetcherConfig fc;
  fc.cache_dir = config.policy_cache_dir;
  fc.offline = config.offline;
  fc.fixtures = config.policy_fixtures;
  res.fetcher = std::make_shared<PolicyFetcher>(fc);

  std::shared_ptr<llm::AuditLog> audit;
  if (!config.audit_log_path.empty()) audit = std::make_shared<llm::AuditLog>(config.audit_log_path);
  res.client = make_client(config.backend, audit);

  if (!config.internal_summary_path.empty()) {
    const auto parsed =
        nlohmann::json::parse(read_file(config.internal_summary_path, "internal summary"), nullptr,
                              false);
    if (parsed.is_discarded()) throw ConfigError("internal summary is not valid JSON");
    try {
      res.internal_summary = parsed.get<InternalPolicySummary>();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid internal summary: ") + e.what());
    }
  } else if (!config.conduct_path.empty()) {
    if (!res.client) throw ConfigError("summarizing the code of conduct needs a model backend");
    const auto conduct = read_file(config.conduct_path, "code of conduct");
    try {
      res.internal_summary = summarize_internal(conduct, *res.client);
    } catch (const Error& e) {
      throw ConfigError(std::string("cannot summarize code of conduct: ") + e.what());
    }
  }

  auto store = std::make_shared<SessionStore>(config.storage_path);
  return std::make_unique<Gateway>(std::move(gcfg), std::move(res), std::move(store));
}

// ---------------------------------------------------------------------------

struct HttpService::Impl {
  std::shared_ptr<Gateway> gateway;
  ServiceConfig config;
  httplib::Server server;
  std::string schema;
  int port = -1;
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& msg,
                nlohmann::json details = nlohmann::json::object()) {
  send_json(res, status, {{"code", code}, {"message", msg}, {"details", std::move(details)}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ArgumentError("request body must be a JSON object");
  return j;
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "validation_error", e.what());
    } catch (const ArgumentError& e) {
      send_error(res, 400, "validation_error", e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "validation_error", e.what());
    } catch (const Error& e) {
      send_error(res, 500, error_code_name(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j.at(key).is_array()) throw ArgumentError(std::string(key) + " must be an array");
  return j.at(key).get<std::vector<std::string>>();
}

}  // namespace

HttpService::HttpService(std::shared_ptr<Gateway> gateway, ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
  impl_->gateway = std::move(gateway);
  impl_->config = std::move(config);
  impl_->schema = impl_->config.schema_path.empty()
                      ? std::string(kEmbeddedSchema)
                      : read_file(impl_->config.schema_path, "schema document");
  auto& srv = impl_->server;
  auto* gw = impl_->gateway.get();

  srv.Get("/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}, {"version", kVersion}});
          }));
  srv.Get("/v1/schema", guarded([this](const httplib::Request&, httplib::Response& res) {
            res.status = 200;
            res.set_content(impl_->schema, "application/schema+json");
          }));
  srv.Post("/v1/sessions", guarded([gw](const httplib::Request&, httplib::Response& res) {
             send_json(res, 201, {{"session_id", gw->create_session()}});
           }));
  srv.Get(R"(/v1/sessions/([^/]+))", guarded([gw](const httplib::Request& req,
                                                  httplib::Response& res) {
            send_json(res, 200, gw->get_session(req.matches[1]));
          }));
  srv.Post(R"(/v1/sessions/([^/]+)/analyze)",
           guarded([gw](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             if (!body.contains("prompt") || !body.at("prompt").is_string()) {
               throw ArgumentError("prompt must be a string");
             }
             std::optional<AnalysisOptions> options;
             if (body.contains("options")) options = body.at("options").get<AnalysisOptions>();
             const auto entry =
                 gw->analyze(req.matches[1], body.at("prompt").get<std::string>(), options);
             send_json(res, 200, entry);
           }));
  srv.Post(R"(/v1/sessions/([^/]+)/feedback)",
           guarded([gw](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto verdict = parse_verdict(body.value("verdict", std::string{}));
             if (!verdict) throw ArgumentError("verdict must be Confidential or NotConfidential");
             const auto span_id = body.value("span_id", std::string{});
             if (span_id.empty()) throw ArgumentError("span_id is required");
             const std::string session_id = req.matches[1];
             gw->submit_feedback(session_id, span_id, *verdict, body.value("user", "user"));
             send_json(res, 200,
                       {{"status", "recorded"}, {"terms", gw->get_session(session_id).terms}});
           }));
  srv.Put(R"(/v1/sessions/([^/]+)/terms)",
          guarded([gw](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto terms = gw->manage_terms(req.matches[1], string_list(body, "add"),
                                                string_list(body, "remove"),
                                                body.value("user", "user"));
            send_json(res, 200, {{"terms", terms}});
          }));

  if (!impl_->config.static_dir.empty() && std::filesystem::is_directory(impl_->config.static_dir)) {
    srv.set_mount_point("/", impl_->config.static_dir.string());
  }
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    send_error(res, res.status, res.status == 404 ? "not_found" : "http_error",
               "HTTP " + std::to_string(res.status));
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
  auto& c = impl_->config;
  if (c.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(c.listen_address);
  } else if (impl_->server.bind_to_port(c.listen_address, c.port)) {
    impl_->port = c.port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port < 0) {
    throw IoError("cannot bind " + c.listen_address + ":" + std::to_string(c.port));
  }
  return impl_->port;
}

void HttpService::listen() {
  if (impl_->port < 0) bind();
  impl_->server.listen_after_bind();
}

void HttpService::stop() {
  if (impl_) impl_->server.stop();
}

bool HttpService::running() const { return impl_->server.is_running(); }

}  // namespace datashield
