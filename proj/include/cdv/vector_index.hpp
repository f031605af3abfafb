#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdv/cdv_model.hpp"
#include "cdv/corpus.hpp"
#include "cdv/spaces.hpp"

namespace cdv::index {

using nn::Vector;

/// Decoded sentence vector [entity ; aspect] stored as 32-bit floats.
struct IndexEntry {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::vector<float> vector;
};

struct PassageRecord {
  std::string passage_id;
  std::string doc_id;
  std::string heading;
  std::size_t start = 0;  // sentence range within the document, [start, end)
  std::size_t end = 0;
  std::size_t first_entry = 0;
};

struct ScoredPassage {
  std::string passage_id;
  double score = 0.0;
  std::vector<double> sentence_scores;
};

struct SentenceHistogram {
  std::vector<double> combined;
  std::vector<double> entity;
  std::vector<double> aspect;
};

class IvfBackend;

/// Immutable store of per-sentence decoded vectors and the passage registry.
class VectorIndex {
 public:
  VectorIndex() = default;

  std::size_t dim() const noexcept { return entity_dim_ + aspect_dim_; }
  std::size_t entity_dim() const noexcept { return entity_dim_; }
  std::size_t aspect_dim() const noexcept { return aspect_dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t passage_count() const noexcept { return passages_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  const std::vector<PassageRecord>& passages() const noexcept { return passages_; }
  const PassageRecord& passage(const std::string& passage_id) const;
  bool has_passage(const std::string& passage_id) const;
  bool has_document(const std::string& doc_id) const;
  /// Entry range [first, first + count) of a document.
  std::pair<std::size_t, std::size_t> document_range(const std::string& doc_id) const;

  /// Fingerprint of the model the index was built from.
  std::uint64_t build_fingerprint = 0;

  void write(std::ostream& out) const;
  static VectorIndex read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);
  std::string to_bytes() const;
  std::uint64_t fingerprint() const;

  friend VectorIndex build_index(const std::vector<model::DiscourseMatrix>& matrices,
                                 const std::vector<corpus::Passage>& passages,
                                 std::uint64_t build_fingerprint);

 private:
  void rebuild_lookup();

  std::size_t entity_dim_ = 0;
  std::size_t aspect_dim_ = 0;
  std::vector<IndexEntry> entries_;
  std::vector<PassageRecord> passages_;
  std::map<std::string, std::size_t> passage_lookup_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> doc_lookup_;
};

/// Throws IntegrityError when a passage refers to sentences that have no
/// vector, or ShapeError for inconsistent decoder widths.
VectorIndex build_index(const std::vector<model::DiscourseMatrix>& matrices,
                        const std::vector<corpus::Passage>& passages,
                        std::uint64_t build_fingerprint = 0);

double score_sentence(const spaces::QueryVector& q, const IndexEntry& entry);
ScoredPassage score_passage(const spaces::QueryVector& q, const VectorIndex& index,
                            const std::string& passage_id);
/// Descending by score; ties keep corpus (registration) order.
std::vector<ScoredPassage> rank_candidates(const spaces::QueryVector& q, const VectorIndex& index,
                                           const std::vector<std::string>& candidates);
/// Exhaustive top-k over every registered passage.
std::vector<ScoredPassage> search_all(const spaces::QueryVector& q, const VectorIndex& index,
                                      std::size_t top_k);
SentenceHistogram sentence_histogram(const spaces::QueryVector& q, const VectorIndex& index,
                                     const std::string& doc_id);

struct IvfConfig {
  std::size_t lists = 0;  // 0 picks round(sqrt(passages))
  std::size_t nprobe = 0;  // 0 probes 60% of the lists
  std::size_t iterations = 10;
  std::uint64_t seed = 17;
};

/// Optional approximate backend: inverted lists over per-passage mean unit
/// sentence vectors, clustered with k-means. Scores returned for candidates
/// are exact.
class IvfBackend {
 public:
  IvfBackend(const VectorIndex& index, const IvfConfig& config = {});

  std::vector<ScoredPassage> search(const spaces::QueryVector& q, std::size_t top_k) const;
  std::size_t list_count() const noexcept { return centroids_.size(); }
  std::size_t probe_count() const noexcept;

 private:
  const VectorIndex* index_;
  IvfConfig config_;
  std::vector<Vector> passage_means_;
  std::vector<Vector> centroids_;
  std::vector<std::vector<std::size_t>> lists_;
};

}  // namespace cdv::index
