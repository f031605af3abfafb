#include "cdv/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "cdv/error.hpp"
#include "cdv/rng.hpp"

namespace cdv::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    doc_ = &doc;
  }

  ~Section() = default;

  void finish() const {
    if (doc_ == nullptr) return;
    for (const auto& [key, value] : doc_->items()) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }

  const json* get(const std::string& key) {
    used_.insert(key);
    if (doc_ == nullptr) return nullptr;
    const auto it = doc_->find(key);
    return it == doc_->end() ? nullptr : &*it;
  }

  // Parsed literals are unsigned; values built in code may be signed.
  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  void size(const std::string& key, std::size_t& out, std::size_t min = 1) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!non_negative_integer(*v) || v->get<std::uint64_t>() < min) {
      throw ConfigError(where(key) + " must be an integer >= " + std::to_string(min));
    }
    out = v->get<std::size_t>();
  }

  void u64(const std::string& key, std::uint64_t& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!non_negative_integer(*v)) throw ConfigError(where(key) + " must be a non-negative integer");
    out = v->get<std::uint64_t>();
  }

  void real(const std::string& key, double& out, double lo, double hi, bool lo_open = false) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
    const double x = v->get<double>();
    if (x < lo || x > hi || (lo_open && x == lo)) {
      throw ConfigError(where(key) + " out of range");
    }
    out = x;
  }

  void flag(const std::string& key, bool& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
    out = v->get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
    out = v->get<std::string>();
  }

  void path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    string(key, s);
    if (s.empty()) return;
    const fs::path p(s);
    out = p.is_absolute() ? p : base / p;
  }

 private:
  std::string where(const std::string& key) const { return "config key '" + name_ + "." + key + "'"; }

  std::string name_;
  const json* doc_ = nullptr;
  std::set<std::string> used_;
};

void read_encoder(Section& s, spaces::EncoderConfig& c) {
  s.size("hidden", c.hidden);
  s.size("dim", c.dim);
  s.size("bloom_bits", c.bloom_bits);
  s.size("bloom_hashes", c.bloom_hashes);
  s.size("epochs", c.epochs, 0);
  s.size("batch", c.batch);
  s.real("learning_rate", c.learning_rate, 0.0, 10.0, true);
  s.real("epoch_decay", c.epoch_decay, 0.0, 1.0, true);
  s.real("weight_decay", c.weight_decay, 0.0, 1.0);
  s.real("dropout", c.dropout, 0.0, 0.99);
  s.real("init_scale", c.init_scale, 0.0, 1.0, true);
  s.u64("seed", c.seed);
  s.finish();
}

json encoder_json(const spaces::EncoderConfig& c) {
  return {{"hidden", c.hidden},         {"dim", c.dim},
          {"bloom_bits", c.bloom_bits}, {"bloom_hashes", c.bloom_hashes},
          {"epochs", c.epochs},         {"batch", c.batch},
          {"learning_rate", c.learning_rate}, {"epoch_decay", c.epoch_decay},
          {"weight_decay", c.weight_decay},   {"dropout", c.dropout},
          {"init_scale", c.init_scale}, {"seed", c.seed}};
}

std::vector<corpus::Document> read_docs(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("paths.") + what + " is not set");
  return corpus::load_corpus(path);
}

}  // namespace

void set_seed(Config& config, std::uint64_t seed) {
  config.seed = seed;
  config.embeddings.seed = derive_seed(seed, "embeddings");
  config.entity.seed = derive_seed(seed, "entity");
  config.aspect.seed = derive_seed(seed, "aspect");
  config.cdv.seed = derive_seed(seed, "cdv");
  config.eval.seed = derive_seed(seed, "eval");
}

Config parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  Config config;
  Section top(doc, "config");
  top.u64("seed", config.seed);
  set_seed(config, config.seed);
  top.string("dataset", config.dataset);

  const json paths_doc = top.get("paths") ? *top.get("paths") : json();
  Section paths(paths_doc, "paths");
  paths.path("corpus", config.paths.corpus, base_dir);
  paths.path("train_corpus", config.paths.train_corpus, base_dir);
  paths.path("knowledge_base", config.paths.knowledge_base, base_dir);
  paths.path("queries", config.paths.queries, base_dir);
  paths.path("word_vectors", config.paths.word_vectors, base_dir);
  config.paths.artifacts = base_dir / config.paths.artifacts;
  paths.path("artifacts", config.paths.artifacts, base_dir);
  paths.finish();
  if (config.paths.train_corpus.empty()) config.paths.train_corpus = config.paths.corpus;

  const json emb_doc = top.get("embeddings") ? *top.get("embeddings") : json();
  Section emb(emb_doc, "embeddings");
  auto& e = config.embeddings;
  emb.size("dim", e.dim);
  emb.size("window", e.window);
  emb.size("negatives", e.negatives);
  emb.size("epochs", e.epochs);
  emb.size("min_count", e.min_count);
  emb.real("learning_rate", e.learning_rate, 0.0, 10.0, true);
  emb.flag("subwords", e.use_subwords);
  emb.size("min_n", e.subwords.min_n);
  emb.size("max_n", e.subwords.max_n);
  std::size_t buckets = e.subwords.buckets;
  emb.size("buckets", buckets);
  e.subwords.buckets = static_cast<std::uint32_t>(buckets);
  emb.u64("seed", e.seed);
  emb.finish();
  if (e.subwords.min_n > e.subwords.max_n) throw ConfigError("embeddings.min_n exceeds embeddings.max_n");

  const json ent_doc = top.get("entity") ? *top.get("entity") : json();
  Section ent(ent_doc, "entity");
  read_encoder(ent, config.entity);
  const json asp_doc = top.get("aspect") ? *top.get("aspect") : json();
  Section asp(asp_doc, "aspect");
  read_encoder(asp, config.aspect);

  const json cdv_doc = top.get("cdv") ? *top.get("cdv") : json();
  Section cdv(cdv_doc, "cdv");
  auto& c = config.cdv;
  cdv.size("hidden", c.hidden);
  cdv.size("discourse", c.discourse);
  cdv.size("epochs", c.epochs);
  cdv.size("batch", c.batch);
  cdv.real("learning_rate", c.learning_rate, 0.0, 10.0, true);
  cdv.real("epoch_decay", c.epoch_decay, 0.0, 1.0, true);
  cdv.real("weight_decay", c.weight_decay, 0.0, 1.0);
  std::string loss = c.loss == nn::CdvLossKind::kRobust ? "robust" : "plain";
  cdv.string("loss", loss);
  if (loss == "robust") {
    c.loss = nn::CdvLossKind::kRobust;
  } else if (loss == "plain") {
    c.loss = nn::CdvLossKind::kPlain;
  } else {
    throw ConfigError("cdv.loss must be 'robust' or 'plain'");
  }
  cdv.size("max_sentences", c.max_sentences);
  cdv.size("max_tokens", c.max_tokens);
  cdv.real("init_scale", c.init_scale, 0.0, 1.0, true);
  cdv.u64("seed", c.seed);
  cdv.finish();

  const json ev_doc = top.get("eval") ? *top.get("eval") : json();
  Section ev(ev_doc, "eval");
  ev.size("candidates", config.eval.candidates);
  ev.u64("seed", config.eval.seed);
  if (const json* models = ev.get("models")) {
    if (!models->is_array()) throw ConfigError("eval.models must be a list");
    config.models.clear();
    for (const auto& m : *models) {
      if (!m.is_string()) throw ConfigError("eval.models entries must be strings");
      const std::string name = m.get<std::string>();
      if (name != "cdv" && name != "bm25" && name != "tfidf" && name != "random") {
        throw ConfigError("unknown model '" + name + "' in eval.models");
      }
      config.models.push_back(name);
    }
  }
  ev.finish();
  top.finish();
  return config;
}

Config load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path());
}

json config_to_json(const Config& config) {
  const auto& e = config.embeddings;
  const auto& c = config.cdv;
  return {
      {"seed", config.seed},
      {"dataset", config.dataset},
      {"paths",
       {{"corpus", config.paths.corpus.string()},
        {"train_corpus", config.paths.train_corpus.string()},
        {"knowledge_base", config.paths.knowledge_base.string()},
        {"queries", config.paths.queries.string()},
        {"word_vectors", config.paths.word_vectors.string()},
        {"artifacts", config.paths.artifacts.string()}}},
      {"embeddings",
       {{"dim", e.dim},
        {"window", e.window},
        {"negatives", e.negatives},
        {"epochs", e.epochs},
        {"min_count", e.min_count},
        {"learning_rate", e.learning_rate},
        {"subwords", e.use_subwords},
        {"min_n", e.subwords.min_n},
        {"max_n", e.subwords.max_n},
        {"buckets", e.subwords.buckets},
        {"seed", e.seed}}},
      {"entity", encoder_json(config.entity)},
      {"aspect", encoder_json(config.aspect)},
      {"cdv",
       {{"hidden", c.hidden},
        {"discourse", c.discourse},
        {"epochs", c.epochs},
        {"batch", c.batch},
        {"learning_rate", c.learning_rate},
        {"epoch_decay", c.epoch_decay},
        {"weight_decay", c.weight_decay},
        {"loss", c.loss == nn::CdvLossKind::kRobust ? "robust" : "plain"},
        {"max_sentences", c.max_sentences},
        {"max_tokens", c.max_tokens},
        {"init_scale", c.init_scale},
        {"seed", c.seed}}},
      {"eval", {{"candidates", config.eval.candidates}, {"seed", config.eval.seed}, {"models", config.models}}},
  };
}

eval::Ranker cdv_ranker(const spaces::EntitySpace& entities, const spaces::AspectSpace& aspects,
                        const index::VectorIndex& index) {
  return [&entities, &aspects, &index](const corpus::EvalQuery& q,
                                       const std::vector<std::string>& candidates) {
    const spaces::QueryVector qv =
        spaces::build_query(entities, aspects, {q.entity_id, q.mention}, q.aspect);
    std::vector<std::string> out;
    for (const auto& s : index::rank_candidates(qv, index, candidates)) out.push_back(s.passage_id);
    return out;
  };
}

index::VectorIndex index_corpus(const model::CdvModel& model, const text::WordEmbeddingTable& words,
                                const std::vector<corpus::Document>& docs) {
  std::vector<model::DiscourseMatrix> matrices;
  std::vector<corpus::Passage> passages;
  matrices.reserve(docs.size());
  for (const auto& doc : docs) {
    matrices.push_back(model.encode(model::sentence_vectors(doc, words), doc.doc_id));
    for (auto& p : corpus::build_passages(doc)) passages.push_back(std::move(p));
  }
  return index::build_index(matrices, passages, model.fingerprint());
}

Pipeline::Pipeline(Config config, Logger logger) : config_(std::move(config)), logger_(std::move(logger)) {}

void Pipeline::log(const std::string& message) const {
  if (logger_) logger_(message);
}

void Pipeline::record(const std::string& stage, const json& entry) const {
  const fs::path path = files().manifest();
  json manifest = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      manifest = json::parse(in);
    } catch (const json::parse_error&) {
      manifest = json::object();
    }
  }
  manifest["seed"] = config_.seed;
  manifest["dataset"] = config_.dataset;
  manifest["stages"][stage] = entry;
  std::ofstream out(path, std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

std::shared_ptr<const text::WordEmbeddingTable> Pipeline::load_words() const {
  const fs::path path = files().words();
  if (!fs::exists(path)) throw ConfigError("missing " + path.string() + "; run train-embeddings first");
  return std::make_shared<const text::WordEmbeddingTable>(text::WordEmbeddingTable::load(path));
}

const std::vector<corpus::Document>& Pipeline::train_docs() {
  if (!train_docs_) train_docs_ = read_docs(config_.paths.train_corpus, "train_corpus");
  return *train_docs_;
}

const std::vector<corpus::Document>& Pipeline::eval_docs() {
  if (!eval_docs_) eval_docs_ = read_docs(config_.paths.corpus, "corpus");
  return *eval_docs_;
}

void Pipeline::train_embeddings() {
  fs::create_directories(files().dir);
  text::WordEmbeddingTable table;
  if (!config_.paths.word_vectors.empty()) {
    log("loading word vectors from " + config_.paths.word_vectors.string());
    table = text::load_word_vectors(config_.paths.word_vectors);
  } else {
    std::vector<std::vector<std::string>> sentences;
    for (const auto& doc : train_docs()) {
      for (const corpus::Sentence* s : doc.sentences()) sentences.push_back(s->tokens);
    }
    if (!config_.paths.knowledge_base.empty()) {
      for (const auto& entry : corpus::load_knowledge_base(config_.paths.knowledge_base)) {
        sentences.push_back(corpus::tokenize(entry.name));
        for (const auto& d : entry.descriptions) sentences.push_back(corpus::tokenize(d));
      }
    }
    log("training skip-gram vectors on " + std::to_string(sentences.size()) + " sentences");
    table = text::train_skipgram(sentences, config_.embeddings);
  }
  table.save(files().words());
  log("wrote " + files().words().string() + " (" + std::to_string(table.vocabulary_size()) + " tokens)");
  record("embeddings", {{"file", files().words().filename().string()},
                        {"fingerprint", table.fingerprint()},
                        {"seed", config_.embeddings.seed}});
}

void Pipeline::train_entity() {
  auto words = load_words();
  if (config_.paths.knowledge_base.empty()) throw ConfigError("paths.knowledge_base is not set");
  const auto kb = corpus::load_knowledge_base(config_.paths.knowledge_base);
  const auto& c = config_.entity;
  const spaces::BloomEncoder bloom(c.bloom_bits, c.bloom_hashes, derive_seed(c.seed, "bloom"));
  spaces::EncoderTrainingStats stats;
  const spaces::EntityEncoder encoder = spaces::train_entity_encoder(kb, words, bloom, c, &stats);
  for (const auto& e : stats.epochs) {
    log("entity epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
  }
  const spaces::EntitySpace space = spaces::build_entity_space(encoder, bloom, kb);
  space.save(files().entity_space());
  log("wrote " + files().entity_space().string() + " (" + std::to_string(space.table().size()) + " entities)");
  record("entity", {{"file", files().entity_space().filename().string()},
                    {"fingerprint", space.fingerprint()},
                    {"examples", stats.examples},
                    {"seed", c.seed}});
}

void Pipeline::train_aspect() {
  auto words = load_words();
  const auto contexts = spaces::heading_contexts(train_docs());
  const auto& c = config_.aspect;
  const spaces::BloomEncoder bloom(c.bloom_bits, c.bloom_hashes, derive_seed(c.seed, "bloom"));
  spaces::EncoderTrainingStats stats;
  const spaces::EntityEncoder encoder = spaces::train_aspect_encoder(contexts, words, bloom, c, &stats);
  for (const auto& e : stats.epochs) {
    log("aspect epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
  }
  const spaces::AspectSpace space = spaces::build_aspect_space(encoder, bloom, contexts);
  space.save(files().aspect_space());
  log("wrote " + files().aspect_space().string() + " (" + std::to_string(space.table().size()) + " aspects)");
  record("aspect", {{"file", files().aspect_space().filename().string()},
                    {"fingerprint", space.fingerprint()},
                    {"examples", stats.examples},
                    {"seed", c.seed}});
}

std::vector<model::EpochLog> Pipeline::train_cdv() {
  auto words = load_words();
  for (const fs::path& p : {files().entity_space(), files().aspect_space()}) {
    if (!fs::exists(p)) throw ConfigError("missing " + p.string() + "; train the spaces first");
  }
  const auto entities = spaces::EmbeddingSpace::load(files().entity_space(), words);
  const auto aspects = spaces::EmbeddingSpace::load(files().aspect_space(), words);
  std::ofstream log_file(files().train_log(), std::ios::trunc);
  std::vector<model::EpochLog> history;
  const model::CdvModel model = model::train_cdv(
      train_docs(), words, entities, aspects, config_.cdv, &history, [&](const model::EpochLog& e) {
        log_file << json{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.learning_rate}}.dump()
                 << '\n';
        log_file.flush();
        log("cdv epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
      });
  model.save(files().model());
  log("wrote " + files().model().string());
  record("cdv", {{"file", files().model().filename().string()},
                 {"fingerprint", model.fingerprint()},
                 {"epochs", history.size()},
                 {"final_loss", history.empty() ? 0.0 : history.back().mean_loss},
                 {"seed", config_.cdv.seed}});
  return history;
}

void Pipeline::build_index() {
  auto words = load_words();
  if (!fs::exists(files().model())) throw ConfigError("missing " + files().model().string() + "; run train-cdv first");
  const model::CdvModel model = model::CdvModel::load(files().model());
  if (model.word_table_fingerprint != words->fingerprint()) {
    throw IntegrityError("cdv model was trained with different word vectors");
  }
  const index::VectorIndex idx = index_corpus(model, *words, eval_docs());
  idx.save(files().index());
  log("wrote " + files().index().string() + " (" + std::to_string(idx.size()) + " sentences, " +
      std::to_string(idx.passage_count()) + " passages)");
  record("index", {{"file", files().index().filename().string()},
                   {"fingerprint", idx.fingerprint()},
                   {"model_fingerprint", idx.build_fingerprint},
                   {"sentences", idx.size()},
                   {"passages", idx.passage_count()}});
}

std::vector<eval::EvalReport> Pipeline::evaluate() {
  if (config_.paths.queries.empty()) throw ConfigError("paths.queries is not set");
  const auto queries = corpus::load_queries(config_.paths.queries);
  const eval::InvertedIndex inv = eval::InvertedIndex::from_corpus(eval_docs());

  std::shared_ptr<const text::WordEmbeddingTable> words;
  std::optional<spaces::EmbeddingSpace> entities, aspects;
  std::optional<index::VectorIndex> idx;
  std::vector<eval::EvalReport> reports;
  for (const auto& name : config_.models) {
    eval::Ranker ranker;
    if (name == "cdv") {
      for (const fs::path& p : {files().words(), files().entity_space(), files().aspect_space(),
                                files().model(), files().index()}) {
        if (!fs::exists(p)) throw ConfigError("missing " + p.string() + "; the cdv model needs trained artifacts");
      }
      words = load_words();
      entities = spaces::EmbeddingSpace::load(files().entity_space(), words);
      aspects = spaces::EmbeddingSpace::load(files().aspect_space(), words);
      idx = index::VectorIndex::load(files().index());
      const model::CdvModel model = model::CdvModel::load(files().model());
      if (idx->build_fingerprint != model.fingerprint()) {
        throw IntegrityError("index.bin was not built from the current cdv.ckpt; rerun the index stage");
      }
      ranker = cdv_ranker(*entities, *aspects, *idx);
    } else if (name == "bm25") {
      ranker = eval::bm25_ranker(inv);
    } else if (name == "tfidf") {
      ranker = eval::tfidf_ranker(inv);
    } else if (name == "random") {
      ranker = eval::random_ranker(config_.eval.seed);
    } else {
      throw ConfigError("unknown model '" + name + "'");
    }
    reports.push_back(eval::run_experiment(name, config_.dataset, ranker, queries, inv, config_.eval));
    const auto& r = reports.back();
    log(name + ": R@1 " + std::to_string(r.recall_at_1) + " MAP " + std::to_string(r.map) + " over " +
        std::to_string(r.n_queries) + " queries (" + std::to_string(r.dropped_queries) + " dropped)");
  }
  fs::create_directories(files().dir);
  std::ofstream out(files().report(), std::ios::trunc);
  eval::write_report(out, reports);
  if (!out) throw IoError("cannot write " + files().report().string());
  json summary = json::array();
  for (const auto& r : reports) {
    summary.push_back({{"model", r.model}, {"r1", r.recall_at_1}, {"r10", r.recall_at_10}, {"map", r.map},
                       {"n_queries", r.n_queries}, {"coverage", r.prefilter_coverage}});
  }
  record("evaluate", {{"file", files().report().filename().string()}, {"results", summary}});
  return reports;
}

std::vector<eval::EvalReport> Pipeline::run_all() {
  train_embeddings();
  train_entity();
  train_aspect();
  train_cdv();
  build_index();
  return evaluate();
}

}  // namespace cdv::pipeline
