#include "cdv/cdv.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "cdv/error.hpp"
#include "cdv/pipeline.hpp"
#include "cdv/service.hpp"
#include "cdv/synthetic.hpp"
#include "json.hpp"

using nlohmann::json;

struct cdv_config {
  cdv::pipeline::Config config;
};

struct cdv_service {
  std::unique_ptr<cdv::service::QueryService> service;
};

namespace {

thread_local std::string g_last_error;

cdv_status to_status(cdv::ErrorCode code) {
  return static_cast<cdv_status>(static_cast<int>(code));
}

cdv_status fail(cdv_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
cdv_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return CDV_OK;
  } catch (const cdv::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(CDV_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CDV_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CDV_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CDV_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& value) {
  if (out) *out = dup_string(value.dump());
}

void require(const void* p, const char* what) {
  if (!p) throw cdv::InvalidArgumentError(std::string(what) + " must not be null");
}

json report_json(const cdv::eval::EvalReport& r) {
  return {{"model", r.model},
          {"dataset", r.dataset},
          {"r1", r.recall_at_1},
          {"r10", r.recall_at_10},
          {"map", r.map},
          {"n_queries", r.n_queries},
          {"dropped_queries", r.dropped_queries},
          {"prefilter_coverage", r.prefilter_coverage},
          {"candidate_recall", r.candidate_recall},
          {"runtime_ms", r.runtime_ms}};
}

}  // namespace

extern "C" {

const char* cdv_version(void) { return "0.1.0"; }

const char* cdv_status_name(cdv_status status) {
  if (status == CDV_OK) return "ok";
  if (status == CDV_ERR_INTERNAL) return "internal";
  if (status >= CDV_ERR_INVALID_ARGUMENT && status <= CDV_ERR_IO) {
    return cdv::error_code_name(static_cast<cdv::ErrorCode>(static_cast<int>(status)));
  }
  return "unknown";
}

const char* cdv_last_error(void) { return g_last_error.c_str(); }

void cdv_string_free(char* s) { std::free(s); }

cdv_status cdv_config_load(const char* path, cdv_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<cdv_config>();
    c->config = cdv::pipeline::load_config(path);
    *out = c.release();
  });
}

cdv_status cdv_config_parse(const char* text, const char* base_dir, cdv_config** out) {
  return guard([&] {
    require(text, "json");
    require(out, "out");
    *out = nullptr;
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw cdv::ParseError(e.what());
    }
    auto c = std::make_unique<cdv_config>();
    c->config = cdv::pipeline::parse_config(doc, base_dir ? base_dir : ".");
    *out = c.release();
  });
}

void cdv_config_free(cdv_config* config) { delete config; }

cdv_status cdv_config_set_seed(cdv_config* config, uint64_t seed) {
  return guard([&] {
    require(config, "config");
    cdv::pipeline::set_seed(config->config, seed);
  });
}

cdv_status cdv_config_set_artifacts(cdv_config* config, const char* dir) {
  return guard([&] {
    require(config, "config");
    require(dir, "dir");
    if (!*dir) throw cdv::InvalidArgumentError("artifact directory must not be empty");
    config->config.paths.artifacts = dir;
  });
}

cdv_status cdv_config_to_json(const cdv_config* config, char** out) {
  return guard([&] {
    if (out) *out = nullptr;
    require(config, "config");
    require(out, "out");
    emit(out, cdv::pipeline::config_to_json(config->config));
  });
}

cdv_status cdv_run_stage(const cdv_config* config, const char* stage, cdv_log_fn log, void* user,
                         char** out_json) {
  return guard([&] {
    require(config, "config");
    require(stage, "stage");
    if (out_json) *out_json = nullptr;
    cdv::pipeline::Logger logger;
    if (log) logger = [log, user](const std::string& m) { log(m.c_str(), user); };
    cdv::pipeline::Pipeline p(config->config, logger);
    const std::string s = stage;
    json summary = {{"stage", s}, {"artifacts", p.files().dir.string()}};
    auto reports = [&](const std::vector<cdv::eval::EvalReport>& rs) {
      json arr = json::array();
      for (const auto& r : rs) arr.push_back(report_json(r));
      summary["results"] = arr;
      summary["report"] = p.files().report().string();
    };
    if (s == "train-embeddings") {
      p.train_embeddings();
    } else if (s == "train-entity") {
      p.train_entity();
    } else if (s == "train-aspect") {
      p.train_aspect();
    } else if (s == "train-cdv") {
      json epochs = json::array();
      for (const auto& e : p.train_cdv()) {
        epochs.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.learning_rate}});
      }
      summary["epochs"] = epochs;
    } else if (s == "index") {
      p.build_index();
    } else if (s == "evaluate") {
      reports(p.evaluate());
    } else if (s == "all") {
      reports(p.run_all());
    } else {
      throw cdv::InvalidArgumentError("unknown stage '" + s + "'");
    }
    emit(out_json, summary);
  });
}

cdv_status cdv_synthetic_write(const char* dir, uint64_t seed, const char* overrides_json) {
  return guard([&] {
    require(dir, "dir");
    json overrides = json::object();
    if (overrides_json && *overrides_json) {
      try {
        overrides = json::parse(overrides_json);
      } catch (const json::parse_error& e) {
        throw cdv::ParseError(e.what());
      }
    }
    cdv::synthetic::SyntheticConfig sc;
    sc.seed = seed;
    cdv::synthetic::write_files(cdv::synthetic::generate(sc), dir, overrides);
  });
}

cdv_status cdv_service_open(const cdv_config* config, cdv_service** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    auto s = std::make_unique<cdv_service>();
    s->service = cdv::service::QueryService::open(config->config);
    *out = s.release();
  });
}

void cdv_service_free(cdv_service* service) { delete service; }

cdv_status cdv_service_entities(const cdv_service* service, const char* prefix, size_t limit,
                                char** out_json) {
  return guard([&] {
    if (out_json) *out_json = nullptr;
    require(service, "service");
    require(out_json, "out_json");
    json arr = json::array();
    for (const auto& m : service->service->autocomplete_entities(prefix ? prefix : "", limit)) {
      arr.push_back({{"id", m.id}, {"name", m.name}});
    }
    emit(out_json, arr);
  });
}

cdv_status cdv_service_aspects(const cdv_service* service, const char* prefix, size_t limit,
                               char** out_json) {
  return guard([&] {
    if (out_json) *out_json = nullptr;
    require(service, "service");
    require(out_json, "out_json");
    emit(out_json, service->service->autocomplete_aspects(prefix ? prefix : "", limit));
  });
}

cdv_status cdv_service_query(const cdv_service* service, const char* request_json, char** out_json) {
  return guard([&] {
    if (out_json) *out_json = nullptr;
    require(service, "service");
    require(request_json, "request_json");
    require(out_json, "out_json");
    emit(out_json, service->service->query(cdv::service::parse_query_request(request_json)));
  });
}

cdv_status cdv_service_histogram(const cdv_service* service, const char* doc_id, const char* entity,
                                 const char* aspect, char** out_json) {
  return guard([&] {
    if (out_json) *out_json = nullptr;
    require(service, "service");
    require(doc_id, "doc_id");
    require(entity, "entity");
    require(aspect, "aspect");
    require(out_json, "out_json");
    emit(out_json, service->service->histogram(doc_id, entity, aspect));
  });
}

cdv_status cdv_service_health(const cdv_service* service, char** out_json) {
  return guard([&] {
    if (out_json) *out_json = nullptr;
    require(service, "service");
    require(out_json, "out_json");
    emit(out_json, service->service->health());
  });
}

cdv_status cdv_service_index_fingerprint(const cdv_service* service, uint64_t* out) {
  return guard([&] {
    require(service, "service");
    require(out, "out");
    *out = service->service->index().fingerprint();
  });
}

cdv_status cdv_service_request(const cdv_service* service, const char* method, const char* path,
                               const char* params_json, const char* body, int* http_status,
                               char** out_json) {
  return guard([&] {
    if (out_json) *out_json = nullptr;
    require(service, "service");
    require(method, "method");
    require(path, "path");
    require(http_status, "http_status");
    require(out_json, "out_json");
    std::map<std::string, std::string> params;
    if (params_json && *params_json) {
      json p;
      try {
        p = json::parse(params_json);
      } catch (const json::parse_error& e) {
        throw cdv::ParseError(e.what());
      }
      if (!p.is_object()) throw cdv::InvalidArgumentError("params must be a JSON object");
      for (const auto& [k, v] : p.items()) {
        if (!v.is_string()) throw cdv::InvalidArgumentError("parameter '" + k + "' must be a string");
        params.emplace(k, v.get<std::string>());
      }
    }
    const auto r = service->service->handle(method, path, params, body ? body : "");
    *http_status = r.status;
    emit(out_json, r.body);
  });
}

cdv_status cdv_serve(const cdv_service* service, const char* host, int port, size_t threads,
                     cdv_log_fn log, void* user) {
  return guard([&] {
    require(service, "service");
    if (port < 0 || port > 65535) throw cdv::InvalidArgumentError("port out of range");
    cdv::pipeline::Logger logger;
    if (log) logger = [log, user](const std::string& m) { log(m.c_str(), user); };
    cdv::service::HttpServer server(*service->service, logger);
    cdv::service::ServeOptions opts;
    if (host && *host) opts.host = host;
    opts.port = port;
    opts.threads = threads == 0 ? 4 : threads;
    const int bound = server.bind(opts);
    if (logger) logger("listening on http://" + opts.host + ":" + std::to_string(bound));
    server.listen();
  });
}

}  // extern "C"
