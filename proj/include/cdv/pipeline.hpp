#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cdv/cdv_model.hpp"
#include "cdv/evaluation.hpp"
#include "cdv/spaces.hpp"
#include "cdv/vector_index.hpp"
#include "cdv/word_vectors.hpp"
#include "json.hpp"

namespace cdv::pipeline {

struct Paths {
  std::filesystem::path corpus;          // documents to index and evaluate on
  std::filesystem::path train_corpus;    // documents to train on; defaults to corpus
  std::filesystem::path knowledge_base;
  std::filesystem::path queries;
  std::filesystem::path word_vectors;    // optional pretrained text vectors
  std::filesystem::path artifacts = "artifacts";
};

struct Config {
  std::uint64_t seed = 42;
  std::string dataset = "dataset";
  Paths paths;
  text::SkipGramConfig embeddings;
  spaces::EncoderConfig entity;
  spaces::EncoderConfig aspect;
  model::CdvTrainConfig cdv;
  eval::ExperimentConfig eval;
  std::vector<std::string> models = {"cdv", "bm25", "tfidf"};
};

/// Relative paths are resolved against base_dir. Unknown keys are rejected
/// with ConfigError so typos do not silently fall back to defaults.
Config parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Config load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const Config& config);
/// Replaces the run seed and re-derives the per-stage seeds.
void set_seed(Config& config, std::uint64_t seed);

struct ArtifactFiles {
  std::filesystem::path dir;

  std::filesystem::path words() const { return dir / "words.bin"; }
  std::filesystem::path entity_space() const { return dir / "entity.space"; }
  std::filesystem::path aspect_space() const { return dir / "aspect.space"; }
  std::filesystem::path model() const { return dir / "cdv.ckpt"; }
  std::filesystem::path index() const { return dir / "index.bin"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path report() const { return dir / "report.tsv"; }
  std::filesystem::path train_log() const { return dir / "cdv_train_log.jsonl"; }
};

using Logger = std::function<void(const std::string&)>;

/// Ranks candidates by passage score against the structured query.
eval::Ranker cdv_ranker(const spaces::EntitySpace& entities, const spaces::AspectSpace& aspects,
                        const index::VectorIndex& index);

/// Encodes every document and builds the passage index over the full text.
index::VectorIndex index_corpus(const model::CdvModel& model, const text::WordEmbeddingTable& words,
                                const std::vector<corpus::Document>& docs);

class Pipeline {
 public:
  explicit Pipeline(Config config, Logger logger = {});

  const Config& config() const noexcept { return config_; }
  ArtifactFiles files() const { return {config_.paths.artifacts}; }

  void train_embeddings();
  void train_entity();
  void train_aspect();
  std::vector<model::EpochLog> train_cdv();
  void build_index();
  std::vector<eval::EvalReport> evaluate();
  std::vector<eval::EvalReport> run_all();

 private:
  void log(const std::string& message) const;
  void record(const std::string& stage, const nlohmann::json& entry) const;
  std::shared_ptr<const text::WordEmbeddingTable> load_words() const;
  const std::vector<corpus::Document>& train_docs();
  const std::vector<corpus::Document>& eval_docs();

  Config config_;
  Logger logger_;
  std::optional<std::vector<corpus::Document>> train_docs_;
  std::optional<std::vector<corpus::Document>> eval_docs_;
};

}  // namespace cdv::pipeline
