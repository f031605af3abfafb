#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdv/corpus.hpp"
#include "cdv/layers.hpp"
#include "cdv/loss.hpp"
#include "cdv/spaces.hpp"
#include "cdv/word_vectors.hpp"
#include "json.hpp"

namespace cdv::model {

using nn::Vector;

struct CdvDims {
  std::size_t input_dim = 0;  // word dim + structural flags
  std::size_t hidden = 64;    // per direction
  std::size_t discourse = 32;
  std::size_t entity_dim = 16;
  std::size_t aspect_dim = 16;
};

/// Per-sentence discourse vectors of one document and their decoded views.
struct DiscourseMatrix {
  std::string doc_id;
  std::vector<Vector> discourse;  // unit L2 norm
  std::vector<Vector> entity;     // decoded, tanh range
  std::vector<Vector> aspect;

  std::size_t size() const noexcept { return discourse.size(); }
};

struct TrainingTargets {
  std::vector<Vector> entity;
  std::vector<Vector> aspect;
  std::vector<bool> include;  // false when a sentence's labels cannot be resolved

  std::size_t size() const noexcept { return entity.size(); }
};

struct CdvTrace {
  nn::BlstmTrace blstm;
  std::vector<Vector> pre_norm;  // tanh(W_he [h_fwd; h_bwd] + b_e)
  std::vector<nn::DenseTrace> discourse;
  std::vector<nn::DenseTrace> entity;
  std::vector<nn::DenseTrace> aspect;
  bool valid = false;
};

/// BLSTM document encoder over sentence vectors, a tanh discourse layer with
/// per-vector L2 normalisation and two tanh decoders into the entity and
/// aspect spaces.
class CdvModel {
 public:
  CdvModel() = default;
  explicit CdvModel(const CdvDims& dims);

  const CdvDims& dims() const noexcept { return dims_; }

  void init(Rng& rng, double scale = 0.1);

  /// Throws EmptyInputError for an empty document.
  DiscourseMatrix encode(const std::vector<Vector>& sentence_vectors, const std::string& doc_id = "",
                         CdvTrace* trace = nullptr) const;
  std::pair<Vector, Vector> decode(const Vector& discourse) const;

  /// Forward, loss and backward for one document; accumulates gradients
  /// scaled by grad_scale and returns the (unscaled) loss.
  double accumulate(const std::vector<Vector>& sentence_vectors, const TrainingTargets& targets,
                    nn::CdvLossKind loss, double grad_scale = 1.0);
  void backward(const CdvTrace& trace, const std::vector<Vector>& d_entity,
                const std::vector<Vector>& d_aspect);

  nn::ParamList params();

  nn::BiLstm blstm;
  nn::Dense discourse_layer;
  nn::Dense entity_decoder;
  nn::Dense aspect_decoder;

  // Provenance recorded in the checkpoint.
  std::uint64_t seed = 0;
  std::uint64_t word_table_fingerprint = 0;
  std::uint64_t entity_space_fingerprint = 0;
  std::uint64_t aspect_space_fingerprint = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();

  void save(const std::filesystem::path& path) const;
  static CdvModel load(const std::filesystem::path& path);
  std::string to_bytes() const;
  std::uint64_t fingerprint() const;

 private:
  CdvDims dims_;
};

/// sigma_avg for every sentence of the document, in order.
std::vector<Vector> sentence_vectors(const corpus::Document& doc,
                                     const text::WordEmbeddingTable& words);

/// Per-sentence mean of label embeddings.
TrainingTargets build_targets(const corpus::Document& doc,
                              const std::vector<corpus::SentenceLabels>& labels,
                              const spaces::EntitySpace& entities,
                              const spaces::AspectSpace& aspects);

DiscourseMatrix encode_document(const CdvModel& model, const std::vector<Vector>& sentence_vectors,
                                const std::string& doc_id = "");

struct CdvTrainConfig {
  std::size_t hidden = 64;
  std::size_t discourse = 32;
  std::size_t epochs = 50;
  std::size_t batch = 16;
  double learning_rate = 1e-3;
  double epoch_decay = 0.975;
  double weight_decay = 1e-4;
  nn::CdvLossKind loss = nn::CdvLossKind::kRobust;
  std::size_t max_sentences = 396;
  std::size_t max_tokens = 96;
  double init_scale = 0.1;
  std::uint64_t seed = 11;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};

/// A training document with its precomputed inputs and targets.
struct PreparedDocument {
  std::string doc_id;
  std::vector<Vector> inputs;
  TrainingTargets targets;
};

std::vector<PreparedDocument> prepare_training_set(const std::vector<corpus::Document>& docs,
                                                   const text::WordEmbeddingTable& words,
                                                   const spaces::EntitySpace& entities,
                                                   const spaces::AspectSpace& aspects,
                                                   const CdvTrainConfig& config);

/// Accumulates the mean gradient of a batch. Documents are processed in
/// doc_id order so the result does not depend on the batch order.
double accumulate_batch(CdvModel& model, std::vector<const PreparedDocument*> batch,
                        nn::CdvLossKind loss);

using EpochCallback = std::function<void(const EpochLog&)>;

CdvModel train_cdv(const std::vector<corpus::Document>& docs,
                   std::shared_ptr<const text::WordEmbeddingTable> words,
                   const spaces::EntitySpace& entities, const spaces::AspectSpace& aspects,
                   const CdvTrainConfig& config, std::vector<EpochLog>* log = nullptr,
                   const EpochCallback& on_epoch = {});

}  // namespace cdv::model
