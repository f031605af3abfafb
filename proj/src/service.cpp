#include "cdv/service.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <tuple>

#include "cdv/error.hpp"
#include "httplib.h"

namespace cdv::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Candidates matched by case-insensitive substring, ordered by match
// position then lowercase text then key. Empty prefix orders by frequency.
template <typename Item>
std::vector<Item> rank_matches(const std::vector<std::tuple<std::string, std::string, Item>>& items,
                               const std::string& prefix, std::size_t limit,
                               const std::map<std::string, std::size_t>& frequency) {
  struct Hit {
    std::size_t position;
    std::size_t frequency;
    const std::string* text;
    const std::string* key;
    const Item* item;
  };
  const std::string needle = lower(prefix);
  std::vector<Hit> hits;
  for (const auto& [key, text, item] : items) {
    const std::string hay = lower(text);
    std::size_t pos = hay.find(needle);
    const std::string key_l = lower(key);
    if (!needle.empty() && key_l.compare(0, needle.size(), needle) == 0) pos = 0;
    if (pos == std::string::npos) continue;
    auto f = frequency.find(key);
    hits.push_back({pos, f == frequency.end() ? 0 : f->second, &text, &key, &item});
  }
  if (needle.empty()) {
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      if (a.frequency != b.frequency) return a.frequency > b.frequency;
      const std::string la = lower(*a.text), lb = lower(*b.text);
      if (la != lb) return la < lb;
      return *a.key < *b.key;
    });
  } else {
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      if (a.position != b.position) return a.position < b.position;
      const std::string la = lower(*a.text), lb = lower(*b.text);
      if (la != lb) return la < lb;
      return *a.key < *b.key;
    });
  }
  std::vector<Item> out;
  for (std::size_t i = 0; i < hits.size() && i < limit; ++i) out.push_back(*hits[i].item);
  return out;
}

std::size_t parse_count(const std::string& raw, const char* name, std::size_t max) {
  if (raw.empty() || raw.size() > 9 ||
      !std::all_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw InvalidArgumentError(std::string(name) + " must be a non-negative integer");
  }
  const std::size_t v = std::stoul(raw);
  if (v > max) throw InvalidArgumentError(std::string(name) + " must be at most " + std::to_string(max));
  return v;
}

std::string param(const std::map<std::string, std::string>& params, const std::string& key,
                  const std::string& fallback = "") {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse:
    case ErrorCode::kEmptyInput:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kUnresolvable:
      return 422;
    default:
      return 500;
  }
}

json error_body(const std::string& code, const std::string& message) {
  return {{"code", code}, {"message", message}};
}

QueryService::QueryService(std::shared_ptr<const text::WordEmbeddingTable> words,
                           spaces::EntitySpace entities, spaces::AspectSpace aspects,
                           const model::CdvModel& model, index::VectorIndex index,
                           std::vector<corpus::Document> docs)
    : words_(std::move(words)),
      entities_(std::move(entities)),
      aspects_(std::move(aspects)),
      index_(std::move(index)),
      docs_(std::move(docs)) {
  if (!words_) throw InvalidArgumentError("word table is required");
  model_fingerprint_ = model.fingerprint();
  if (model.word_table_fingerprint != words_->fingerprint()) {
    throw IntegrityError("cdv model was trained with a different word table");
  }
  if (model.entity_space_fingerprint != entities_.fingerprint()) {
    throw IntegrityError("cdv model was trained against a different entity space");
  }
  if (model.aspect_space_fingerprint != aspects_.fingerprint()) {
    throw IntegrityError("cdv model was trained against a different aspect space");
  }
  if (index_.build_fingerprint != model_fingerprint_) {
    throw IntegrityError("index was not built from the loaded cdv model");
  }
  if (!index_.empty() && (index_.entity_dim() != entities_.dim() || index_.aspect_dim() != aspects_.dim())) {
    throw IntegrityError("index dimensions do not match the embedding spaces");
  }
  for (std::size_t i = 0; i < docs_.size(); ++i) doc_lookup_.emplace(docs_[i].doc_id, i);
  for (const auto& p : index_.passages()) {
    auto it = doc_lookup_.find(p.doc_id);
    if (it == doc_lookup_.end()) throw IntegrityError("indexed document '" + p.doc_id + "' is not in the corpus");
    const auto [first, count] = index_.document_range(p.doc_id);
    (void)first;
    if (docs_[it->second].sentence_count() != count) {
      throw IntegrityError("document '" + p.doc_id + "' changed since it was indexed");
    }
    for (const auto& h : corpus::heading_normalize(p.heading)) ++aspect_frequency_[h];
  }
  for (const auto& d : docs_) {
    if (!index_.has_document(d.doc_id)) continue;
    if (!d.title_entity_id.empty()) ++entity_frequency_[d.title_entity_id];
    for (const auto* s : d.sentences()) {
      for (const auto& e : s->entity_links) ++entity_frequency_[e];
    }
  }
  index_fingerprint_ = index_.fingerprint();
}

std::unique_ptr<QueryService> QueryService::open(const pipeline::Config& config) {
  const pipeline::ArtifactFiles files{config.paths.artifacts};
  for (const fs::path& p : {files.words(), files.entity_space(), files.aspect_space(), files.model(), files.index()}) {
    if (!fs::exists(p)) throw ConfigError("missing artifact " + p.string());
  }
  if (config.paths.corpus.empty()) throw ConfigError("paths.corpus is not set");
  auto words = std::make_shared<const text::WordEmbeddingTable>(text::WordEmbeddingTable::load(files.words()));
  auto entities = spaces::EmbeddingSpace::load(files.entity_space(), words);
  auto aspects = spaces::EmbeddingSpace::load(files.aspect_space(), words);
  const auto model = model::CdvModel::load(files.model());
  auto idx = index::VectorIndex::load(files.index());
  auto docs = corpus::load_corpus(config.paths.corpus);
  return std::make_unique<QueryService>(std::move(words), std::move(entities), std::move(aspects), model,
                                        std::move(idx), std::move(docs));
}

std::vector<EntityMatch> QueryService::autocomplete_entities(const std::string& prefix,
                                                             std::size_t limit) const {
  std::vector<std::tuple<std::string, std::string, EntityMatch>> items;
  for (const auto& [id, vec] : entities_.table()) {
    (void)vec;
    auto it = entities_.names().find(id);
    const std::string name = it == entities_.names().end() ? id : it->second;
    items.emplace_back(id, name, EntityMatch{id, name});
  }
  return rank_matches(items, prefix, limit, entity_frequency_);
}

std::vector<std::string> QueryService::autocomplete_aspects(const std::string& prefix, std::size_t limit) const {
  std::vector<std::tuple<std::string, std::string, std::string>> items;
  for (const auto& [name, vec] : aspects_.table()) {
    (void)vec;
    items.emplace_back(name, name, name);
  }
  return rank_matches(items, prefix, limit, aspect_frequency_);
}

const corpus::Document& QueryService::document(const std::string& doc_id) const {
  auto it = doc_lookup_.find(doc_id);
  if (it == doc_lookup_.end() || !index_.has_document(doc_id)) {
    throw NotFoundError("document '" + doc_id + "' is not indexed");
  }
  return docs_[it->second];
}

json QueryService::query(const QueryRequest& request) const {
  const auto t0 = std::chrono::steady_clock::now();
  if (request.top_k == 0 || request.top_k > kMaxLimit) {
    throw InvalidArgumentError("top_k must be between 1 and " + std::to_string(kMaxLimit));
  }
  if (request.entity.id.empty() && request.entity.mention.empty()) {
    throw InvalidArgumentError("entity needs an id or a mention");
  }
  const bool by_id = !request.entity.id.empty() && entities_.find(request.entity.id) != nullptr;
  const auto q = spaces::build_query(entities_, aspects_, request.entity, request.aspect);

  json out;
  out["entity"] = {{"id", request.entity.id},
                   {"mention", request.entity.mention},
                   {"resolved_by", by_id ? "id" : "mention"}};
  out["aspect"] = request.aspect;
  out["top_k"] = request.top_k;
  json results = json::array();
  if (index_.empty()) {
    out["warning"] = "the index is empty";
  } else {
    const auto ranked = index::search_all(q, index_, request.top_k);
    std::size_t rank = 0;
    for (const auto& r : ranked) {
      const auto& p = index_.passage(r.passage_id);
      const auto& doc = document(p.doc_id);
      const auto sentences = doc.sentences();
      json sents = json::array();
      std::string text;
      for (std::size_t i = p.start; i < p.end; ++i) {
        if (!text.empty()) text += ' ';
        text += sentences[i]->text;
        sents.push_back({{"index", i}, {"text", sentences[i]->text}, {"score", r.sentence_scores[i - p.start]}});
      }
      results.push_back({{"rank", ++rank},
                         {"passage_id", r.passage_id},
                         {"doc_id", p.doc_id},
                         {"title", doc.title},
                         {"heading", p.heading},
                         {"score", r.score},
                         {"text", text},
                         {"sentences", sents}});
    }
  }
  out["results"] = std::move(results);
  out["latency_ms"] = elapsed_ms(t0);
  return out;
}

spaces::EntityRef QueryService::resolve_entity_param(const std::string& value) const {
  if (entities_.find(value)) return {value, ""};
  return {"", value};
}

json QueryService::histogram(const std::string& doc_id, const std::string& entity,
                             const std::string& aspect) const {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& doc = document(doc_id);
  if (entity.empty()) throw InvalidArgumentError("entity is required");
  const auto q = spaces::build_query(entities_, aspects_, resolve_entity_param(entity), aspect);
  const auto h = index::sentence_histogram(q, index_, doc_id);
  json sentences = json::array();
  for (const auto* s : doc.sentences()) sentences.push_back(s->text);
  json passages = json::array();
  for (const auto& p : corpus::build_passages(doc)) {
    passages.push_back({{"passage_id", p.passage_id}, {"heading", p.heading}, {"start", p.start}, {"end", p.end}});
  }
  return {{"doc_id", doc_id},
          {"title", doc.title},
          {"entity", entity},
          {"aspect", aspect},
          {"sentences", sentences},
          {"passages", passages},
          {"combined", h.combined},
          {"entity_scores", h.entity},
          {"aspect_scores", h.aspect},
          {"latency_ms", elapsed_ms(t0)}};
}

json QueryService::health() const {
  return {{"status", "ok"},
          {"documents", doc_lookup_.size()},
          {"passages", index_.passage_count()},
          {"sentences", index_.size()},
          {"entities", entities_.table().size()},
          {"aspects", aspects_.table().size()},
          {"index_fingerprint", hex(index_fingerprint_)},
          {"model_fingerprint", hex(model_fingerprint_)},
          {"entity_space_fingerprint", hex(entities_.fingerprint())},
          {"aspect_space_fingerprint", hex(aspects_.fingerprint())}};
}

QueryRequest parse_query_request(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidArgumentError("request body must be an object");
  QueryRequest req;
  const auto it = doc.find("entity");
  if (it == doc.end()) throw InvalidArgumentError("missing field 'entity'");
  if (it->is_string()) {
    req.entity.id = it->get<std::string>();
    req.entity.mention = req.entity.id;
  } else if (it->is_object()) {
    for (const auto& [k, v] : it->items()) {
      if (k != "id" && k != "mention" && k != "name") throw InvalidArgumentError("unknown entity field '" + k + "'");
      if (!v.is_string()) throw InvalidArgumentError("entity." + k + " must be a string");
    }
    req.entity.id = it->value("id", "");
    req.entity.mention = it->value("mention", it->value("name", ""));
  } else {
    throw InvalidArgumentError("entity must be a string or an object");
  }
  const auto a = doc.find("aspect");
  if (a == doc.end() || !a->is_string()) throw InvalidArgumentError("missing string field 'aspect'");
  req.aspect = a->get<std::string>();
  if (const auto k = doc.find("top_k"); k != doc.end()) {
    if (!k->is_number_unsigned()) throw InvalidArgumentError("top_k must be a positive integer");
    req.top_k = k->get<std::size_t>();
  }
  for (const auto& [k, v] : doc.items()) {
    (void)v;
    if (k != "entity" && k != "aspect" && k != "top_k") throw InvalidArgumentError("unknown field '" + k + "'");
  }
  return req;
}

Response QueryService::handle(const std::string& method, const std::string& path,
                              const std::map<std::string, std::string>& params,
                              const std::string& body) const {
  try {
    auto limit = [&] { return parse_count(param(params, "limit", "10"), "limit", kMaxLimit); };
    const Response wrong_method{405, error_body("method_not_allowed", method + " is not allowed on " + path)};
    if (path == "/health") {
      if (method != "GET") return wrong_method;
      return {200, health()};
    }
    if (path == "/entities") {
      if (method != "GET") return wrong_method;
      json out = json::array();
      for (const auto& m : autocomplete_entities(param(params, "q"), limit())) {
        out.push_back({{"id", m.id}, {"name", m.name}});
      }
      return {200, {{"items", out}}};
    }
    if (path == "/aspects") {
      if (method != "GET") return wrong_method;
      return {200, {{"items", autocomplete_aspects(param(params, "q"), limit())}}};
    }
    if (path == "/query") {
      if (method != "POST") return wrong_method;
      return {200, query(parse_query_request(body))};
    }
    const std::string prefix = "/documents/", suffix = "/histogram";
    if (path.size() > prefix.size() + suffix.size() && path.compare(0, prefix.size(), prefix) == 0 &&
        path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0) {
      if (method != "GET") return wrong_method;
      const std::string doc_id = path.substr(prefix.size(), path.size() - prefix.size() - suffix.size());
      return {200, histogram(doc_id, param(params, "entity"),
                             param(params, "aspect"))};
    }
    return {404, error_body("not_found", "no route for " + method + " " + path)};
  } catch (const Error& e) {
    return {http_status(e.code()), error_body(error_code_name(e.code()), e.what())};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what())};
  }
}

// --- HTTP ------------------------------------------------------------------

struct HttpServer::Impl {
  const QueryService* service;
  pipeline::Logger logger;
  httplib::Server server;
};

HttpServer::HttpServer(const QueryService& service, pipeline::Logger logger)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = &service;
  impl_->logger = std::move(logger);
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> params;
    for (const auto& [k, v] : req.params) params.emplace(k, v);  // first value wins
    const Response r = impl_->service->handle(req.method, req.path, params, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
    if (impl_->logger) impl_->logger(req.method + " " + req.path + " " + std::to_string(r.status));
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const ServeOptions& options) {
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  if (options.port == 0) {
    const int port = impl_->server.bind_to_any_port(options.host);
    if (port < 0) throw IoError("cannot bind " + options.host);
    return port;
  }
  if (!impl_->server.bind_to_port(options.host, options.port)) {
    throw IoError("cannot bind " + options.host + ":" + std::to_string(options.port));
  }
  return options.port;
}

void HttpServer::listen() {
  if (!impl_->server.listen_after_bind()) throw IoError("server stopped with an error");
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace cdv::service
