#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdv/corpus.hpp"
#include "cdv/error.hpp"
#include "cdv/pipeline.hpp"
#include "cdv/spaces.hpp"
#include "cdv/vector_index.hpp"
#include "json.hpp"

namespace cdv::service {

struct EntityMatch {
  std::string id;
  std::string name;
};

struct QueryRequest {
  spaces::EntityRef entity;
  std::string aspect;
  std::size_t top_k = 10;
};

/// Parses a POST /query body. Unknown fields are rejected.
QueryRequest parse_query_request(const std::string& body);

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Read-only view over trained artifacts and the indexed corpus. All
/// methods are const and safe to call from concurrent request handlers.
class QueryService {
 public:
  static constexpr std::size_t kMaxLimit = 1000;

  /// Checks that the model was trained against the given word table and
  /// spaces, the index was built from the model, and every indexed document
  /// is present in the corpus with the same sentence count. Throws
  /// IntegrityError otherwise.
  QueryService(std::shared_ptr<const text::WordEmbeddingTable> words, spaces::EntitySpace entities,
               spaces::AspectSpace aspects, const model::CdvModel& model, index::VectorIndex index,
               std::vector<corpus::Document> docs);

  /// Loads artifacts from config.paths.artifacts and documents from
  /// config.paths.corpus.
  static std::unique_ptr<QueryService> open(const pipeline::Config& config);

  std::vector<EntityMatch> autocomplete_entities(const std::string& prefix, std::size_t limit) const;
  std::vector<std::string> autocomplete_aspects(const std::string& prefix, std::size_t limit) const;

  nlohmann::json query(const QueryRequest& request) const;
  nlohmann::json histogram(const std::string& doc_id, const std::string& entity,
                           const std::string& aspect) const;
  nlohmann::json health() const;

  /// Routes one request. Errors become {code, message} bodies with a 4xx or
  /// 5xx status; nothing is thrown.
  Response handle(const std::string& method, const std::string& path,
                  const std::map<std::string, std::string>& params, const std::string& body) const;

  const index::VectorIndex& index() const noexcept { return index_; }
  const spaces::EntitySpace& entities() const noexcept { return entities_; }
  const spaces::AspectSpace& aspects() const noexcept { return aspects_; }
  std::uint64_t model_fingerprint() const noexcept { return model_fingerprint_; }

 private:
  spaces::EntityRef resolve_entity_param(const std::string& value) const;
  const corpus::Document& document(const std::string& doc_id) const;

  std::shared_ptr<const text::WordEmbeddingTable> words_;
  spaces::EntitySpace entities_;
  spaces::AspectSpace aspects_;
  index::VectorIndex index_;
  std::vector<corpus::Document> docs_;
  std::map<std::string, std::size_t> doc_lookup_;
  std::map<std::string, std::size_t> entity_frequency_;
  std::map<std::string, std::size_t> aspect_frequency_;
  std::uint64_t model_fingerprint_ = 0;
  std::uint64_t index_fingerprint_ = 0;
};

/// HTTP status for an error category.
int http_status(ErrorCode code) noexcept;
nlohmann::json error_body(const std::string& code, const std::string& message);

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4;
};

/// Blocks serving HTTP until stop() is called on the returned handle from
/// another thread, or the process exits.
class HttpServer {
 public:
  HttpServer(const QueryService& service, pipeline::Logger logger = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; returns the bound port (useful with port 0).
  int bind(const ServeOptions& options);
  /// Serves on the bound socket until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cdv::service
