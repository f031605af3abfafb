/* C interface to the cdv retrieval library.
 *
 * Every function returns a cdv_status. On failure the message of the most
 * recent error on the calling thread is available from cdv_last_error().
 * Strings returned through char** out-parameters are owned by the caller
 * and must be released with cdv_string_free(). Structured results are JSON
 * documents. */
#ifndef CDV_CDV_H
#define CDV_CDV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CDV_API __declspec(dllexport)
#else
#define CDV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cdv_status {
  CDV_OK = 0,
  CDV_ERR_INVALID_ARGUMENT = 1,
  CDV_ERR_SHAPE = 2,
  CDV_ERR_EMPTY_INPUT = 3,
  CDV_ERR_STATE = 4,
  CDV_ERR_PARSE = 5,
  CDV_ERR_INTEGRITY = 6,
  CDV_ERR_NOT_FOUND = 7,
  CDV_ERR_CONFIG = 8,
  CDV_ERR_UNRESOLVABLE = 9,
  CDV_ERR_DEGENERATE_LABELS = 10,
  CDV_ERR_IO = 11,
  CDV_ERR_INTERNAL = 99
} cdv_status;

typedef struct cdv_config cdv_config;
typedef struct cdv_service cdv_service;

/* Receives progress lines; may be NULL. */
typedef void (*cdv_log_fn)(const char* message, void* user);

CDV_API const char* cdv_version(void);
CDV_API const char* cdv_status_name(cdv_status status);
/* Message of the last failure on this thread; empty after a success. */
CDV_API const char* cdv_last_error(void);
CDV_API void cdv_string_free(char* s);

/* --- configuration ------------------------------------------------------ */

/* Loads a JSON config; relative paths resolve against its directory. */
CDV_API cdv_status cdv_config_load(const char* path, cdv_config** out);
/* Parses a JSON config held in memory; relative paths resolve against base_dir. */
CDV_API cdv_status cdv_config_parse(const char* json, const char* base_dir, cdv_config** out);
CDV_API void cdv_config_free(cdv_config* config);
/* Replaces the run seed and re-derives the per-stage seeds. */
CDV_API cdv_status cdv_config_set_seed(cdv_config* config, uint64_t seed);
CDV_API cdv_status cdv_config_set_artifacts(cdv_config* config, const char* dir);
CDV_API cdv_status cdv_config_to_json(const cdv_config* config, char** out);

/* --- pipeline stages ---------------------------------------------------- */

/* stage is one of "train-embeddings", "train-entity", "train-aspect",
 * "train-cdv", "index", "evaluate" or "all". out_json (may be NULL)
 * receives a stage summary; for "evaluate" and "all" it holds the
 * per-model results. */
CDV_API cdv_status cdv_run_stage(const cdv_config* config, const char* stage, cdv_log_fn log,
                                 void* user, char** out_json);

/* Writes a synthetic corpus, knowledge base, queries and config.json into
 * dir. overrides_json (may be NULL) is merged into the generated config. */
CDV_API cdv_status cdv_synthetic_write(const char* dir, uint64_t seed, const char* overrides_json);

/* --- query service ------------------------------------------------------ */

/* Loads artifacts and the corpus named by the config and checks that their
 * fingerprints agree. */
CDV_API cdv_status cdv_service_open(const cdv_config* config, cdv_service** out);
CDV_API void cdv_service_free(cdv_service* service);

CDV_API cdv_status cdv_service_entities(const cdv_service* service, const char* prefix, size_t limit,
                                        char** out_json);
CDV_API cdv_status cdv_service_aspects(const cdv_service* service, const char* prefix, size_t limit,
                                       char** out_json);
/* request_json: {"entity": {"id": ..., "mention": ...}, "aspect": ..., "top_k": n} */
CDV_API cdv_status cdv_service_query(const cdv_service* service, const char* request_json,
                                     char** out_json);
CDV_API cdv_status cdv_service_histogram(const cdv_service* service, const char* doc_id,
                                         const char* entity, const char* aspect, char** out_json);
CDV_API cdv_status cdv_service_health(const cdv_service* service, char** out_json);
CDV_API cdv_status cdv_service_index_fingerprint(const cdv_service* service, uint64_t* out);

/* Routes one request as the HTTP server would. params_json is an object of
 * string query parameters (may be NULL). Errors are reported through
 * http_status and the {code, message} body, not the return value. */
CDV_API cdv_status cdv_service_request(const cdv_service* service, const char* method, const char* path,
                                       const char* params_json, const char* body, int* http_status,
                                       char** out_json);

/* Serves HTTP until the process is interrupted. port 0 picks a free port;
 * the bound port is reported through log before serving starts. */
CDV_API cdv_status cdv_serve(const cdv_service* service, const char* host, int port, size_t threads,
                             cdv_log_fn log, void* user);

#ifdef __cplusplus
}
#endif

#endif /* CDV_CDV_H */
