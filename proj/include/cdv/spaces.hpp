#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cdv/corpus.hpp"
#include "cdv/layers.hpp"
#include "cdv/word_vectors.hpp"

namespace cdv::spaces {

using nn::Vector;

/// k seeded hash positions over m bits.
class BloomEncoder {
 public:
  BloomEncoder(std::size_t bits = 1024, std::size_t hashes = 5, std::uint64_t seed = 0xb10f);

  std::size_t bits() const noexcept { return bits_; }
  std::size_t hashes() const noexcept { return hashes_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint64_t>& hash_seeds() const noexcept { return hash_seeds_; }

  std::vector<std::size_t> positions(std::string_view id) const;
  std::vector<bool> encode(std::string_view id) const;
  // Union of the encodings of all ids.
  std::vector<bool> encode_all(const std::set<std::string>& ids) const;

 private:
  std::size_t bits_;
  std::size_t hashes_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> hash_seeds_;
};

struct EncoderConfig {
  std::size_t hidden = 32;
  std::size_t dim = 16;
  std::size_t bloom_bits = 1024;
  std::size_t bloom_hashes = 5;
  std::size_t epochs = 5;
  std::size_t batch = 128;
  double learning_rate = 1e-3;
  double epoch_decay = 0.975;
  double weight_decay = 0.0;
  double dropout = 0.5;
  double init_scale = 0.1;  // weights uniform in [-s, s]; LSTM forget bias 1
  std::uint64_t seed = 7;
};

struct EncoderExample {
  std::vector<std::string> tokens;
  std::vector<bool> target;  // bloom bits
};

struct EncoderTrace {
  std::vector<Vector> inputs;
  nn::BlstmTrace blstm;
  Vector summary;        // (g_fwd[T] + g_bwd[1]) / 2, after dropout
  Vector dropout_scale;  // per summary component, empty when no dropout
  nn::DenseTrace embed;
  nn::DenseTrace output;
  bool valid = false;
};

/// BLSTM over word vectors, a tanh embedding layer and a sigmoid output
/// layer over bloom bits. The embedding is the tanh layer's output.
class EntityEncoder {
 public:
  EntityEncoder() = default;
  EntityEncoder(std::shared_ptr<const text::WordEmbeddingTable> words, std::size_t hidden,
                std::size_t dim, std::size_t bloom_bits);

  std::size_t dim() const noexcept { return embed.output_dim(); }
  const text::WordEmbeddingTable& words() const { return *words_; }
  std::shared_ptr<const text::WordEmbeddingTable> words_ptr() const { return words_; }

  /// Sentence embedding; throws EmptyInputError for an empty token list.
  Vector embed_tokens(const std::vector<std::string>& tokens) const;
  /// Same as embed_tokens but from precomputed word vectors.
  Vector embed_vectors(const std::vector<Vector>& inputs) const;

  // Sigmoid scores over bloom bits; records a trace when requested.
  Vector forward(const std::vector<Vector>& inputs, EncoderTrace* trace,
                 const Vector* dropout_scale = nullptr) const;
  // Accumulates parameter gradients from d(loss)/d(scores).
  void backward(const EncoderTrace& trace, const Vector& d_scores);

  void init(Rng& rng, double scale = 0.1);
  nn::ParamList params();

  nn::BiLstm blstm;
  nn::Dense embed;
  nn::Dense output;

 private:
  std::shared_ptr<const text::WordEmbeddingTable> words_;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};

struct EncoderTrainingStats {
  std::size_t examples = 0;
  std::size_t skipped = 0;  // labels without any training sentence
  std::vector<EpochLoss> epochs;
};

/// BPMLL training against bloom targets.
EntityEncoder train_encoder(std::shared_ptr<const text::WordEmbeddingTable> words,
                            const std::vector<EncoderExample>& examples,
                            const EncoderConfig& config, EncoderTrainingStats* stats = nullptr);

EntityEncoder train_entity_encoder(const std::vector<corpus::KnowledgeBaseEntry>& kb,
                                   std::shared_ptr<const text::WordEmbeddingTable> words,
                                   const BloomEncoder& bloom, const EncoderConfig& config,
                                   EncoderTrainingStats* stats = nullptr);

/// A sentence with the normalized heading fragments that label it.
struct HeadingContext {
  std::vector<std::string> tokens;
  std::set<std::string> aspects;
};

std::vector<HeadingContext> heading_contexts(const std::vector<corpus::Document>& docs);

EntityEncoder train_aspect_encoder(const std::vector<HeadingContext>& pairs,
                                   std::shared_ptr<const text::WordEmbeddingTable> words,
                                   const BloomEncoder& bloom, const EncoderConfig& config,
                                   EncoderTrainingStats* stats = nullptr);

enum class SpaceKind { kEntity, kAspect };

/// Embedding table keyed by entity id or normalized aspect, plus the encoder
/// used for on-the-fly embeddings of unseen labels.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  EmbeddingSpace(SpaceKind kind, EntityEncoder encoder, BloomEncoder bloom);

  SpaceKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return encoder_.dim(); }
  const EntityEncoder& encoder() const noexcept { return encoder_; }
  const BloomEncoder& bloom() const noexcept { return bloom_; }

  const std::map<std::string, Vector>& table() const noexcept { return table_; }
  const Vector* find(const std::string& key) const;
  void set(const std::string& key, Vector vec);

  // Display names (entity names from the knowledge base).
  const std::map<std::string, std::string>& names() const noexcept { return names_; }
  void set_name(const std::string& key, std::string name) { names_[key] = std::move(name); }

  void save(const std::filesystem::path& path) const;
  static EmbeddingSpace load(const std::filesystem::path& path,
                             std::shared_ptr<const text::WordEmbeddingTable> words);
  std::string to_bytes() const;
  std::uint64_t fingerprint() const;

 private:
  SpaceKind kind_ = SpaceKind::kEntity;
  EntityEncoder encoder_;
  BloomEncoder bloom_;
  std::map<std::string, Vector> table_;
  std::map<std::string, std::string> names_;
};

using EntitySpace = EmbeddingSpace;
using AspectSpace = EmbeddingSpace;

/// Mean sentence embedding over each entity's descriptions. Entities without
/// descriptions are embedded from their name.
EntitySpace build_entity_space(const EntityEncoder& encoder, const BloomEncoder& bloom,
                               const std::vector<corpus::KnowledgeBaseEntry>& kb);

/// Mean sentence embedding over the heading contexts of each aspect.
AspectSpace build_aspect_space(const EntityEncoder& encoder, const BloomEncoder& bloom,
                               const std::vector<HeadingContext>& pairs);

struct EntityRef {
  std::string id;
  std::string mention;
};

/// Stored vector for a known id; otherwise the encoder applied to the
/// mention. Throws UnresolvableError when neither applies.
Vector embed_entity(const EntitySpace& space, const EntityRef& entity);

/// Stored vector for a known aspect (or the mean over its known heading
/// fragments); otherwise the encoder applied to the raw string.
Vector embed_aspect(const AspectSpace& space, std::string_view aspect);

struct QueryVector {
  Vector entity;
  Vector aspect;

  std::size_t dim() const noexcept { return entity.size() + aspect.size(); }
  Vector concatenated() const { return nn::concat(entity, aspect); }
};

QueryVector build_query(const EntitySpace& entities, const AspectSpace& aspects,
                        const EntityRef& entity, std::string_view aspect);

}  // namespace cdv::spaces
