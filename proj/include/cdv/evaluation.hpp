#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdv/corpus.hpp"

namespace cdv::eval {

struct Posting {
  std::uint32_t passage = 0;  // position in passage_id order
  std::uint32_t tf = 0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Term postings over passages. Passages are kept sorted by id so postings
/// are sorted by passage id as well.
class InvertedIndex {
 public:
  struct PassageText {
    std::string passage_id;
    std::vector<std::string> tokens;
  };

  InvertedIndex() = default;
  explicit InvertedIndex(std::vector<PassageText> passages);
  static InvertedIndex from_corpus(const std::vector<corpus::Document>& docs);

  std::size_t passage_count() const noexcept { return ids_.size(); }
  double average_length() const noexcept { return avg_length_; }
  const std::string& passage_id(std::size_t pos) const { return ids_.at(pos); }
  std::optional<std::size_t> find(const std::string& passage_id) const;
  std::size_t length(std::size_t pos) const { return lengths_.at(pos); }
  std::size_t document_frequency(const std::string& term) const;
  const std::vector<Posting>& postings(const std::string& term) const;

  double idf_bm25(const std::string& term) const;
  double idf_tfidf(const std::string& term) const;

  /// BM25 of every passage; duplicate query terms count once.
  std::vector<double> bm25_all(const std::vector<std::string>& terms, const Bm25Params& params = {}) const;
  double bm25_score(const std::vector<std::string>& terms, const std::string& passage_id,
                    const Bm25Params& params = {}) const;
  /// Cosine of (1 + ln tf) * idf weight vectors.
  std::vector<double> tfidf_all(const std::vector<std::string>& terms) const;
  double tfidf_score(const std::vector<std::string>& terms, const std::string& passage_id) const;

 private:
  std::vector<std::string> ids_;
  std::map<std::string, std::size_t> id_lookup_;
  std::vector<std::size_t> lengths_;
  std::vector<double> tfidf_norms_;
  std::map<std::string, std::vector<Posting>> postings_;
  double avg_length_ = 0.0;
};

struct PrefilterResult {
  std::vector<std::string> candidates;  // shuffled
  std::size_t injected = 0;             // relevant ids that were missing before injection
  std::size_t relevant_before = 0;      // relevant ids already among the term-ranked top n
};

/// Top-n passages by BM25 on the query text (equal scores in seeded random
/// order), missing relevant passages
/// written over the lowest-ranked non-relevant ones, then shuffled with a
/// per-query seed derived from (seed, query id).
PrefilterResult prefilter_candidates(const corpus::EvalQuery& query, const InvertedIndex& inv,
                                     std::size_t n, std::uint64_t seed);

/// Both return nullopt for an empty relevant set.
std::optional<double> recall_at_k(const std::vector<std::string>& ranked,
                                  const std::vector<std::string>& relevant, std::size_t k);
std::optional<double> average_precision(const std::vector<std::string>& ranked,
                                        const std::vector<std::string>& relevant);

/// Orders a candidate list for a query.
using Ranker = std::function<std::vector<std::string>(const corpus::EvalQuery&,
                                                      const std::vector<std::string>&)>;

Ranker bm25_ranker(const InvertedIndex& inv, Bm25Params params = {});
Ranker tfidf_ranker(const InvertedIndex& inv);
Ranker random_ranker(std::uint64_t seed);

struct QueryResult {
  std::string query_id;
  std::size_t first_relevant_rank = 0;  // 1-based
  double recall_at_1 = 0.0;
  double recall_at_10 = 0.0;
  double average_precision = 0.0;
};

struct EvalReport {
  std::string model;
  std::string dataset;
  double recall_at_1 = 0.0;  // percent
  double recall_at_10 = 0.0;
  double map = 0.0;
  std::size_t n_queries = 0;
  std::size_t dropped_queries = 0;
  double prefilter_coverage = 0.0;  // percent of relevant ids found before injection
  double candidate_recall = 0.0;    // percent after injection
  double runtime_ms = 0.0;
  std::vector<QueryResult> queries;
};

struct ExperimentConfig {
  std::size_t candidates = 64;
  std::uint64_t seed = 42;
};

/// Runs the re-ranking protocol: prefilter, inject, shuffle, rank, score.
/// Queries whose relevant passages are all absent from the index are
/// dropped and counted.
EvalReport run_experiment(const std::string& model, const std::string& dataset, const Ranker& ranker,
                          const std::vector<corpus::EvalQuery>& queries, const InvertedIndex& inv,
                          const ExperimentConfig& config);

void write_report(std::ostream& out, const std::vector<EvalReport>& reports, bool per_query = true);
std::string format_table(const std::vector<EvalReport>& reports);

}  // namespace cdv::eval
