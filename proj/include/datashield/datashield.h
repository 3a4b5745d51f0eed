/* C interface to the datashield library. Structured results are returned as
 * UTF-8 JSON strings owned by the caller and released with ds_string_free(). */
#ifndef DATASHIELD_DATASHIELD_H_
#define DATASHIELD_DATASHIELD_H_

#include <stddef.h>

#if defined(_WIN32)
#define DS_API __declspec(dllexport)
#else
#define DS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ds_status {
  DS_OK = 0,
  DS_ERR_ARGUMENT = 1,
  DS_ERR_CONFIG = 2,
  DS_ERR_NOT_FOUND = 3,
  DS_ERR_IO = 4,
  DS_ERR_PARSE = 5,
  DS_ERR_LLM = 6,
  DS_ERR_TIMEOUT = 7,
  DS_ERR_REPLAY = 8,
  DS_ERR_FETCH = 9,
  DS_ERR_CONTENT = 10,
  DS_ERR_STORAGE = 11,
  DS_ERR_INTERNAL = 12
} ds_status;

typedef struct ds_engine ds_engine;
typedef struct ds_service ds_service;

DS_API const char* ds_version(void);
DS_API const char* ds_status_name(ds_status status);
/* Message for the last failed call on this thread; never NULL. */
DS_API const char* ds_last_error(void);
DS_API void ds_string_free(char* str);

/* Process-wide network guard. While armed, every outbound connection
 * attempt fails; attempts are counted either way. */
DS_API void ds_network_guard(int armed);
DS_API size_t ds_outbound_attempts(void);

/* Detection engine.
 * config_json keys (all optional): gazetteer, rules, terms (paths),
 * fuzzy_threshold, indirect (bool), rule_scan/gazetteer_scan/fuzzy_scan
 * (bools), novelty_lexicon (array), backend {kind, cassette, strict,
 * endpoint, model, api_key_env}. */
DS_API ds_status ds_engine_create(const char* config_json, ds_engine** out);
DS_API void ds_engine_destroy(ds_engine* engine);

/* Writes the detection report; *high_count receives the number of High
 * spans when non-NULL. */
DS_API ds_status ds_engine_scan(ds_engine* engine, const char* prompt_id, const char* text,
                                char** out_json, size_t* high_count);
/* Scans then redacts; the report holds "text" and "replacements". */
DS_API ds_status ds_engine_redact(ds_engine* engine, const char* prompt_id, const char* text,
                                  char** out_json);
/* Redacts with caller-supplied spans (JSON array of span objects). */
DS_API ds_status ds_redact_spans(const char* text, const char* spans_json, char** out_json);

/* corpus_format: "native" or "bc2gm" (mentions_path required for bc2gm). */
DS_API ds_status ds_engine_evaluate(ds_engine* engine, const char* corpus_path,
                                    const char* corpus_format, const char* mentions_path,
                                    const char* tool_name, char** out_json, char** out_table);

/* Policy batch: config_json keys tool_bank, tools (array) or all (bool),
 * conduct, internal_summary, cache_dir, offline, fixtures {url: path},
 * backend {...}. Per-tool failures are reported inside the result. */
DS_API ds_status ds_policy_run(const char* config_json, char** out_json, char** out_text);

/* Service. config_json follows the service configuration schema;
 * environment overrides are applied on top. */
DS_API ds_status ds_service_create(const char* config_json, const char* base_dir,
                                   ds_service** out);
/* Binds and returns the port (useful with port 0). */
DS_API ds_status ds_service_bind(ds_service* service, int* out_port);
/* Blocks until ds_service_stop is called from another thread. */
DS_API ds_status ds_service_run(ds_service* service);
DS_API void ds_service_stop(ds_service* service);
DS_API void ds_service_destroy(ds_service* service);

#ifdef __cplusplus
}
#endif

#endif /* DATASHIELD_DATASHIELD_H_ */
