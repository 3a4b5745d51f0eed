#include "datashield/datashield.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "datashield/error.hpp"
#include "datashield/metrics.hpp"
#include "datashield/net.hpp"
#include "datashield/serialization.hpp"
#include "datashield/service.hpp"

using namespace datashield;
using nlohmann::json;

struct ds_engine {
  Gazetteer gazetteer;
  UserTermList terms;
  DetectionConfig config;
  std::shared_ptr<llm::Client> client;
};

struct ds_service {
  std::shared_ptr<Gateway> gateway;
  std::unique_ptr<HttpService> http;
};

namespace {

thread_local std::string g_last_error;

ds_status fail(ds_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
ds_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return DS_OK;
  } catch (const Error& e) {
    return fail(static_cast<ds_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(DS_ERR_PARSE, std::string("invalid JSON: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DS_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(DS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DS_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_config(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("configuration must be a JSON object");
  return j;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw ArgumentError(std::string(what) + " is null");
}

std::string path_value(const json& j, const char* key) {
  return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<std::string>() : std::string{};
}

std::string slurp(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot read ") + what + " '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

extern "C" {

const char* ds_version(void) { return kVersion; }

const char* ds_status_name(ds_status status) {
  return error_code_name(static_cast<ErrorCode>(status));
}

const char* ds_last_error(void) { return g_last_error.c_str(); }

void ds_string_free(char* str) { std::free(str); }

void ds_network_guard(int armed) {
  static std::mutex m;
  static std::optional<datashield::net::Guard> guard;
  std::lock_guard lock(m);
  if (armed && !guard) guard.emplace();
  if (!armed) guard.reset();
}

size_t ds_outbound_attempts(void) { return datashield::net::outbound_attempts(); }

ds_status ds_engine_create(const char* config_json, ds_engine** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    const auto j = parse_config(config_json);
    auto engine = std::make_unique<ds_engine>();
    if (const auto p = path_value(j, "gazetteer"); !p.empty()) engine->gazetteer = Gazetteer::load(p);
    if (const auto p = path_value(j, "rules"); !p.empty()) engine->config.rules = RuleConfig::load(p);
    if (const auto p = path_value(j, "terms"); !p.empty()) engine->terms = UserTermList::load(p);
    auto& c = engine->config;
    c.fuzzy_threshold = j.value("fuzzy_threshold", c.fuzzy_threshold);
    if (c.fuzzy_threshold <= 0.0 || c.fuzzy_threshold > 1.0) {
      throw ArgumentError("fuzzy_threshold must be in (0, 1]");
    }
    c.enable_indirect = j.value("indirect", c.enable_indirect);
    c.enable_rules = j.value("rule_scan", c.enable_rules);
    c.enable_gazetteer = j.value("gazetteer_scan", c.enable_gazetteer);
    c.enable_fuzzy = j.value("fuzzy_scan", c.enable_fuzzy);
    c.block_on_high = j.value("block_on_high", c.block_on_high);
    if (j.contains("novelty_lexicon")) {
      c.novelty_lexicon = j.at("novelty_lexicon").get<std::vector<std::string>>();
    }
    BackendConfig backend;
    backend.kind = "none";
    if (j.contains("backend")) backend = backend_config_from_json(j.at("backend"));
    engine->client = make_client(backend);
    *out = engine.release();
  });
}

void ds_engine_destroy(ds_engine* engine) { delete engine; }

ds_status ds_engine_scan(ds_engine* engine, const char* prompt_id, const char* text,
                         char** out_json, size_t* high_count) {
  return guard([&] {
    require(engine, "engine");
    require(text, "text");
    require(out_json, "out_json");
    const Prompt prompt{prompt_id ? prompt_id : "prompt", text, 0};
    const auto result =
        scan_full(prompt, engine->gazetteer, engine->terms, engine->client.get(), engine->config);
    if (high_count != nullptr) {
      *high_count = 0;
      for (const auto& s : result.spans) {
        if (s.sensitivity == Sensitivity::kHigh) ++*high_count;
      }
    }
    *out_json = dup(detection_report(result).dump());
  });
}

ds_status ds_engine_redact(ds_engine* engine, const char* prompt_id, const char* text,
                           char** out_json) {
  return guard([&] {
    require(engine, "engine");
    require(text, "text");
    require(out_json, "out_json");
    const Prompt prompt{prompt_id ? prompt_id : "prompt", text, 0};
    const auto result =
        scan_full(prompt, engine->gazetteer, engine->terms, engine->client.get(), engine->config);
    const json j = redact(prompt, result.spans);
    *out_json = dup(j.dump());
  });
}

ds_status ds_redact_spans(const char* text, const char* spans_json, char** out_json) {
  return guard([&] {
    require(text, "text");
    require(out_json, "out_json");
    std::vector<DetectionSpan> spans;
    if (spans_json != nullptr && *spans_json != '\0') {
      const auto j = json::parse(spans_json);
      const auto& arr = j.is_object() && j.contains("spans") ? j.at("spans") : j;
      if (!arr.is_array()) throw ArgumentError("spans must be a JSON array");
      spans = arr.get<std::vector<DetectionSpan>>();
    }
    const Prompt prompt{"input", text, 0};
    const json out = redact(prompt, spans);
    *out_json = dup(out.dump());
  });
}

ds_status ds_engine_evaluate(ds_engine* engine, const char* corpus_path, const char* corpus_format,
                             const char* mentions_path, const char* tool_name, char** out_json,
                             char** out_table) {
  return guard([&] {
    require(engine, "engine");
    require(corpus_path, "corpus_path");
    const std::string format = corpus_format ? corpus_format : "native";
    AnnotatedCorpus corpus;
    if (format == "native") {
      corpus = load_corpus(corpus_path);
    } else if (format == "bc2gm") {
      if (mentions_path == nullptr) throw ArgumentError("bc2gm format needs a mentions file");
      corpus = load_bc2gm_corpus(corpus_path, mentions_path);
    } else {
      throw ArgumentError("unknown corpus format '" + format + "'");
    }
    DetectorSetup setup;
    setup.tool_name = tool_name ? tool_name : "datashield";
    setup.gazetteer = &engine->gazetteer;
    setup.terms = &engine->terms;
    setup.client = engine->client.get();
    setup.config = engine->config;
    const auto report = evaluate_detection(corpus, setup);
    if (out_json != nullptr) *out_json = dup(json(report).dump());
    if (out_table != nullptr) *out_table = dup(render_metrics_table({report}));
  });
}

ds_status ds_policy_run(const char* config_json, char** out_json, char** out_text) {
  return guard([&] {
    const auto j = parse_config(config_json);
    ToolBank bank;
    if (const auto p = path_value(j, "tool_bank"); !p.empty()) bank = ToolBank::load(p);

    std::vector<std::string> ids;
    if (j.value("all", false)) {
      for (const auto& t : bank.tools()) ids.push_back(t.id);
    } else if (j.contains("tools")) {
      ids = j.at("tools").get<std::vector<std::string>>();
    }

    BackendConfig backend;
    backend.kind = "none";
    if (j.contains("backend")) backend = backend_config_from_json(j.at("backend"));
    const auto client = make_client(backend);

    FetcherConfig fc;
    fc.cache_dir = path_value(j, "cache_dir");
    if (fc.cache_dir.empty()) fc.cache_dir = "policy-cache";
    fc.offline = j.value("offline", false);
    if (j.contains("fixtures")) {
      fc.fixtures = j.at("fixtures").get<std::map<std::string, std::filesystem::path>>();
    }
    PolicyFetcher fetcher(fc);

    std::vector<QaItem> questions;
    if (const auto p = path_value(j, "questions"); !p.empty()) questions = load_questions(p);

    json tools = json::array();
    std::vector<NutritionLabel> labels;
    std::string text;
    for (const auto& id : ids) {
      json entry = {{"tool_id", id}, {"label", nullptr}, {"graph", nullptr}, {"error", ""},
                    {"stale", false}, {"qa", nullptr}};
      try {
        const auto doc = fetcher.fetch(id, bank);
        const auto graph = extract_graph(doc, client.get());
        const auto label = make_label(graph, doc, client.get());
        entry["graph"] = graph;
        entry["label"] = label;
        entry["stale"] = doc.stale;
        labels.push_back(label);
        text += render_label_text(label) + "\n";
        if (!questions.empty()) {
          const auto qa = evaluate_summaries(doc, label, questions, client.get());
          entry["qa"] = qa;
          char rate[32];
          std::snprintf(rate, sizeof rate, "%.4f", qa.agreement_rate);
          text += "QA agreement for " + id + ": " + rate + "\n\n";
        }
      } catch (const Error& e) {
        entry["error"] = e.what();
        text += "Error for " + id + ": " + e.what() + "\n\n";
      }
      tools.push_back(std::move(entry));
    }

    std::optional<InternalPolicySummary> internal;
    if (const auto p = path_value(j, "internal_summary"); !p.empty()) {
      internal = json::parse(slurp(p, "internal summary")).get<InternalPolicySummary>();
    } else if (const auto c = path_value(j, "conduct"); !c.empty()) {
      if (!client) throw ConfigError("summarizing the code of conduct needs a model backend");
      internal = summarize_internal(slurp(c, "code of conduct"), *client);
    }

    json out = {{"tools", tools}, {"internal_summary", nullptr}, {"compliance", nullptr}};
    if (labels.size() > 1) out["union_label"] = union_label(labels);
    if (internal) {
      out["internal_summary"] = *internal;
      const auto report = check_compliance(labels, *internal, client.get());
      out["compliance"] = report;
      text += render_compliance_text(report);
    }
    if (out_json != nullptr) *out_json = dup(out.dump());
    if (out_text != nullptr) *out_text = dup(text);
  });
}

ds_status ds_service_create(const char* config_json, const char* base_dir, ds_service** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    auto config = service_config_from_json(parse_config(config_json),
                                           base_dir ? std::filesystem::path(base_dir)
                                                    : std::filesystem::path{});
    apply_env_overrides(config);
    auto service = std::make_unique<ds_service>();
    service->gateway = build_gateway(config);
    service->http = std::make_unique<HttpService>(service->gateway, config);
    *out = service.release();
  });
}

ds_status ds_service_bind(ds_service* service, int* out_port) {
  return guard([&] {
    require(service, "service");
    const int port = service->http->bind();
    if (out_port != nullptr) *out_port = port;
  });
}

ds_status ds_service_run(ds_service* service) {
  return guard([&] {
    require(service, "service");
    service->http->listen();
  });
}

void ds_service_stop(ds_service* service) {
  if (service != nullptr) service->http->stop();
}

void ds_service_destroy(ds_service* service) { delete service; }

}  // extern "C"
