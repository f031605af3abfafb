#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdv/corpus.hpp"
#include "cdv/tensor.hpp"

namespace cdv::text {

using nn::Vector;

struct SubwordConfig {
  std::size_t min_n = 3;
  std::size_t max_n = 6;
  std::uint32_t buckets = 200000;
};

/// Token -> vector lookup with optional hashed character n-gram buckets.
/// Lookups never fail: unknown tokens are composed from their n-gram buckets
/// when subword information is present, and are the zero vector otherwise.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  explicit WordEmbeddingTable(std::size_t dim) : dim_(dim) {}
  WordEmbeddingTable(std::size_t dim, SubwordConfig subwords)
      : dim_(dim), has_subwords_(true), subwords_(subwords) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t vocabulary_size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  bool has_subwords() const noexcept { return has_subwords_; }
  const SubwordConfig& subword_config() const noexcept { return subwords_; }
  const std::map<std::uint32_t, Vector>& buckets() const noexcept { return buckets_; }

  bool contains(std::string_view token) const;
  Vector lookup(std::string_view token) const;
  // Subword-only composition, ignoring the vocabulary entry.
  Vector compose_from_subwords(std::string_view token) const;
  std::vector<std::uint32_t> ngram_buckets(std::string_view token) const;

  // Throws ParseError on a duplicate token, ShapeError on a wrong dimension.
  void add(std::string token, Vector vec);
  void set_bucket(std::uint32_t bucket, Vector vec);

  void save(const std::filesystem::path& path) const;
  static WordEmbeddingTable load(const std::filesystem::path& path);
  std::string to_bytes() const;
  std::uint64_t fingerprint() const;

 private:
  std::size_t dim_ = 0;
  bool has_subwords_ = false;
  SubwordConfig subwords_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Vector> vectors_;
  std::map<std::uint32_t, Vector> buckets_;
};

struct SkipGramConfig {
  std::size_t dim = 32;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  std::size_t min_count = 1;
  double learning_rate = 0.05;
  bool use_subwords = true;
  SubwordConfig subwords;
  std::uint64_t seed = 1;
};

/// Skip-gram with negative sampling over tokens plus hashed character
/// n-grams. Single-threaded and deterministic under the seed.
WordEmbeddingTable train_skipgram(const std::vector<std::vector<std::string>>& sentences,
                                  const SkipGramConfig& config);

/// Text format "token v1 ... vd" per line. An optional leading "count dim"
/// header line is skipped.
WordEmbeddingTable load_word_vectors(const std::filesystem::path& path);
WordEmbeddingTable parse_word_vectors(std::istream& in);

/// Mean token vector followed by the five structural flags
/// (begin/end of document, begin/end of paragraph, list item).
Vector sigma_avg(const corpus::Sentence& sentence, const WordEmbeddingTable& table);
Vector average_tokens(const std::vector<std::string>& tokens, const WordEmbeddingTable& table);

inline std::size_t sentence_vector_dim(const WordEmbeddingTable& table) {
  return table.dim() + corpus::kFlagCount;
}

}  // namespace cdv::text
