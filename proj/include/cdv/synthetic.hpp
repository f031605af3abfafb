#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdv/corpus.hpp"
#include "json.hpp"

namespace cdv::synthetic {

/// Generated corpus where the aspect of a sentence is only visible through
/// section-local terms and the entity through terms scattered over the whole
/// document. Entity names and aspect headings never occur in passage text.
struct SyntheticConfig {
  std::size_t entities = 8;
  std::size_t aspects = 6;
  std::size_t docs_per_entity = 5;
  std::size_t sections_per_doc = 5;
  std::size_t heldout_per_entity = 1;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 5;
  std::size_t min_tokens = 8;
  std::size_t max_tokens = 12;
  std::size_t aspect_terms_per_sentence = 3;
  std::size_t entity_terms_per_sentence = 2;
  double entity_term_prob = 0.6;
  double filler_sentence_prob = 0.15;
  std::size_t unique_terms = 6;   // per entity and per aspect
  std::size_t shared_terms = 1;   // shared with the next entity / aspect
  std::size_t filler_words = 40;
  std::size_t kb_descriptions = 20;
  std::uint64_t seed = 2024;
};

struct SyntheticCorpus {
  std::vector<corpus::Document> train_docs;
  std::vector<corpus::Document> heldout_docs;
  std::vector<corpus::KnowledgeBaseEntry> knowledge_base;
  std::vector<corpus::EvalQuery> queries;  // one per held-out section
  std::vector<std::string> entity_ids;
  std::vector<std::string> entity_names;
  std::vector<std::string> aspect_names;
};

SyntheticCorpus generate(const SyntheticConfig& config = {});

/// Writes train.jsonl, corpus.jsonl (held-out documents), kb.jsonl,
/// queries.tsv and a pipeline config.json into dir.
void write_files(const SyntheticCorpus& data, const std::filesystem::path& dir,
                 const nlohmann::json& pipeline_overrides = nlohmann::json::object());

/// Desk-scale pipeline settings used for the synthetic corpus.
nlohmann::json default_pipeline_config();

}  // namespace cdv::synthetic
