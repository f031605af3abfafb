#include "cdv/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "cdv/error.hpp"
#include "cdv/rng.hpp"

namespace cdv::eval {

namespace {

const std::vector<Posting> kNoPostings;

std::vector<std::string> distinct(const std::vector<std::string>& terms) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : terms) {
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

// Sorts candidates by descending score; equal scores keep their input order.
std::vector<std::string> order_by_scores(const InvertedIndex& inv, const std::vector<double>& scores,
                                         const std::vector<std::string>& candidates) {
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(candidates.size());
  for (const auto& id : candidates) {
    const auto pos = inv.find(id);
    scored.emplace_back(pos ? scores[*pos] : 0.0, id);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (auto& s : scored) out.push_back(std::move(s.second));
  return out;
}

}  // namespace

InvertedIndex::InvertedIndex(std::vector<PassageText> passages) {
  std::sort(passages.begin(), passages.end(),
            [](const PassageText& a, const PassageText& b) { return a.passage_id < b.passage_id; });
  std::size_t total = 0;
  for (std::size_t pos = 0; pos < passages.size(); ++pos) {
    const PassageText& p = passages[pos];
    if (p.tokens.empty()) throw InvalidArgumentError("passage '" + p.passage_id + "' has no tokens");
    if (!id_lookup_.emplace(p.passage_id, pos).second) {
      throw IntegrityError("duplicate passage id '" + p.passage_id + "'");
    }
    ids_.push_back(p.passage_id);
    lengths_.push_back(p.tokens.size());
    total += p.tokens.size();
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : p.tokens) ++tf[t];
    for (const auto& [term, count] : tf) {
      postings_[term].push_back({static_cast<std::uint32_t>(pos), count});
    }
  }
  avg_length_ = ids_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(ids_.size());
  tfidf_norms_.assign(ids_.size(), 0.0);
  for (const auto& [term, list] : postings_) {
    const double idf = idf_tfidf(term);
    for (const Posting& p : list) {
      const double w = (1.0 + std::log(static_cast<double>(p.tf))) * idf;
      tfidf_norms_[p.passage] += w * w;
    }
  }
  for (double& n : tfidf_norms_) n = std::sqrt(n);
}

InvertedIndex InvertedIndex::from_corpus(const std::vector<corpus::Document>& docs) {
  std::vector<PassageText> passages;
  for (const auto& doc : docs) {
    const auto sentences = doc.sentences();
    for (const auto& p : corpus::build_passages(doc)) {
      PassageText text{p.passage_id, {}};
      for (std::size_t i = p.start; i < p.end; ++i) {
        const auto& toks = sentences[i]->tokens;
        text.tokens.insert(text.tokens.end(), toks.begin(), toks.end());
      }
      passages.push_back(std::move(text));
    }
  }
  return InvertedIndex(std::move(passages));
}

std::optional<std::size_t> InvertedIndex::find(const std::string& passage_id) const {
  const auto it = id_lookup_.find(passage_id);
  if (it == id_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t InvertedIndex::document_frequency(const std::string& term) const {
  return postings(term).size();
}

const std::vector<Posting>& InvertedIndex::postings(const std::string& term) const {
  const auto it = postings_.find(term);
  return it == postings_.end() ? kNoPostings : it->second;
}

double InvertedIndex::idf_bm25(const std::string& term) const {
  const double n = static_cast<double>(passage_count());
  const double df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double InvertedIndex::idf_tfidf(const std::string& term) const {
  const double df = static_cast<double>(document_frequency(term));
  if (df == 0.0) return 0.0;
  return std::log(1.0 + static_cast<double>(passage_count()) / df);
}

std::vector<double> InvertedIndex::bm25_all(const std::vector<std::string>& terms,
                                            const Bm25Params& params) const {
  std::vector<double> scores(passage_count(), 0.0);
  for (const auto& term : distinct(terms)) {
    const auto& list = postings(term);
    if (list.empty()) continue;
    const double idf = idf_bm25(term);
    for (const Posting& p : list) {
      const double tf = p.tf;
      const double norm =
          params.k1 * (1.0 - params.b + params.b * static_cast<double>(lengths_[p.passage]) / avg_length_);
      scores[p.passage] += idf * tf * (params.k1 + 1.0) / (tf + norm);
    }
  }
  return scores;
}

double InvertedIndex::bm25_score(const std::vector<std::string>& terms, const std::string& passage_id,
                                 const Bm25Params& params) const {
  const auto pos = find(passage_id);
  if (!pos) throw NotFoundError("unknown passage '" + passage_id + "'");
  return bm25_all(terms, params)[*pos];
}

std::vector<double> InvertedIndex::tfidf_all(const std::vector<std::string>& terms) const {
  std::map<std::string, std::uint32_t> qtf;
  for (const auto& t : terms) ++qtf[t];
  std::vector<double> dots(passage_count(), 0.0);
  double qnorm = 0.0;
  for (const auto& [term, count] : qtf) {
    const double idf = idf_tfidf(term);
    const double wq = (1.0 + std::log(static_cast<double>(count))) * idf;
    qnorm += wq * wq;
    if (wq == 0.0) continue;
    for (const Posting& p : postings(term)) {
      dots[p.passage] += wq * (1.0 + std::log(static_cast<double>(p.tf))) * idf;
    }
  }
  qnorm = std::sqrt(qnorm);
  for (std::size_t i = 0; i < dots.size(); ++i) {
    const double denom = qnorm * tfidf_norms_[i];
    dots[i] = denom > 0.0 ? dots[i] / denom : 0.0;
  }
  return dots;
}

double InvertedIndex::tfidf_score(const std::vector<std::string>& terms,
                                  const std::string& passage_id) const {
  const auto pos = find(passage_id);
  if (!pos) throw NotFoundError("unknown passage '" + passage_id + "'");
  return tfidf_all(terms)[*pos];
}

PrefilterResult prefilter_candidates(const corpus::EvalQuery& query, const InvertedIndex& inv,
                                     std::size_t n, std::uint64_t seed) {
  if (n < query.relevant.size()) {
    throw InvalidArgumentError("candidate count " + std::to_string(n) + " is smaller than the " +
                               std::to_string(query.relevant.size()) + " relevant passages of " +
                               query.query_id);
  }
  const std::vector<double> scores = inv.bm25_all(corpus::tokenize(query.text()));
  std::vector<std::size_t> order(inv.passage_count());
  std::iota(order.begin(), order.end(), 0);
  // Equal BM25 scores (typically zero) are ordered by a seeded shuffle rather
  // than by id, so the filler candidates are not all drawn from the same documents.
  Rng ties(derive_seed(seed, "ties:" + query.query_id));
  ties.shuffle(std::span<std::size_t>(order));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > n) order.resize(n);

  PrefilterResult result;
  std::vector<std::string> list;
  list.reserve(order.size());
  for (std::size_t pos : order) list.push_back(inv.passage_id(pos));

  const std::set<std::string> relevant(query.relevant.begin(), query.relevant.end());
  std::set<std::string> present;
  for (const auto& id : list) {
    if (relevant.count(id)) present.insert(id);
  }
  result.relevant_before = present.size();

  // Overwrite from the bottom of the ranked list, skipping relevant entries.
  std::size_t slot = list.size();
  for (const auto& id : relevant) {
    if (present.count(id)) continue;
    if (!inv.find(id)) throw NotFoundError("relevant passage '" + id + "' is not indexed");
    while (slot > 0 && relevant.count(list[slot - 1])) --slot;
    if (slot == 0) {
      list.push_back(id);  // only when the corpus holds fewer than n passages
    } else {
      list[--slot] = id;
    }
    ++result.injected;
  }

  Rng rng(derive_seed(seed, "prefilter:" + query.query_id));
  rng.shuffle(std::span<std::string>(list));
  result.candidates = std::move(list);
  return result;
}

std::optional<double> recall_at_k(const std::vector<std::string>& ranked,
                                  const std::vector<std::string>& relevant, std::size_t k) {
  if (relevant.empty()) return std::nullopt;
  const std::set<std::string> rel(relevant.begin(), relevant.end());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hits += rel.count(ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

std::optional<double> average_precision(const std::vector<std::string>& ranked,
                                        const std::vector<std::string>& relevant) {
  if (relevant.empty()) return std::nullopt;
  const std::set<std::string> rel(relevant.begin(), relevant.end());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (rel.count(ranked[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(rel.size());
}

Ranker bm25_ranker(const InvertedIndex& inv, Bm25Params params) {
  return [&inv, params](const corpus::EvalQuery& q, const std::vector<std::string>& candidates) {
    return order_by_scores(inv, inv.bm25_all(corpus::tokenize(q.text()), params), candidates);
  };
}

Ranker tfidf_ranker(const InvertedIndex& inv) {
  return [&inv](const corpus::EvalQuery& q, const std::vector<std::string>& candidates) {
    return order_by_scores(inv, inv.tfidf_all(corpus::tokenize(q.text())), candidates);
  };
}

Ranker random_ranker(std::uint64_t seed) {
  return [seed](const corpus::EvalQuery& q, const std::vector<std::string>& candidates) {
    std::vector<std::string> out = candidates;
    Rng rng(derive_seed(seed, "random:" + q.query_id));
    rng.shuffle(std::span<std::string>(out));
    return out;
  };
}

EvalReport run_experiment(const std::string& model, const std::string& dataset, const Ranker& ranker,
                          const std::vector<corpus::EvalQuery>& queries, const InvertedIndex& inv,
                          const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  EvalReport report;
  report.model = model;
  report.dataset = dataset;
  std::size_t relevant_total = 0, relevant_before = 0, relevant_after = 0;
  double r1 = 0.0, r10 = 0.0, ap = 0.0;
  for (const auto& original : queries) {
    corpus::EvalQuery q = original;
    std::erase_if(q.relevant, [&](const std::string& id) { return !inv.find(id); });
    if (q.relevant.empty()) {
      ++report.dropped_queries;
      continue;
    }
    const PrefilterResult pre = prefilter_candidates(q, inv, config.candidates, config.seed);
    const std::set<std::string> cand(pre.candidates.begin(), pre.candidates.end());
    relevant_total += q.relevant.size();
    relevant_before += pre.relevant_before;
    for (const auto& id : q.relevant) relevant_after += cand.count(id);

    const std::vector<std::string> ranked = ranker(q, pre.candidates);
    QueryResult r;
    r.query_id = q.query_id;
    r.recall_at_1 = *recall_at_k(ranked, q.relevant, 1);
    r.recall_at_10 = *recall_at_k(ranked, q.relevant, 10);
    r.average_precision = *average_precision(ranked, q.relevant);
    const std::set<std::string> rel(q.relevant.begin(), q.relevant.end());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (rel.count(ranked[i])) {
        r.first_relevant_rank = i + 1;
        break;
      }
    }
    r1 += r.recall_at_1;
    r10 += r.recall_at_10;
    ap += r.average_precision;
    report.queries.push_back(std::move(r));
  }
  report.n_queries = report.queries.size();
  if (report.n_queries > 0) {
    const double n = static_cast<double>(report.n_queries);
    report.recall_at_1 = 100.0 * r1 / n;
    report.recall_at_10 = 100.0 * r10 / n;
    report.map = 100.0 * ap / n;
  }
  if (relevant_total > 0) {
    report.prefilter_coverage = 100.0 * static_cast<double>(relevant_before) / static_cast<double>(relevant_total);
    report.candidate_recall = 100.0 * static_cast<double>(relevant_after) / static_cast<double>(relevant_total);
  }
  report.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void write_report(std::ostream& out, const std::vector<EvalReport>& reports, bool per_query) {
  out << "model\tdataset\tR@1\tR@10\tMAP\tn_queries\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : reports) {
    out << r.model << '\t' << r.dataset << '\t' << r.recall_at_1 << '\t' << r.recall_at_10 << '\t'
        << r.map << '\t' << r.n_queries << '\n';
  }
  if (!per_query) return;
  out << std::setprecision(4);
  for (const auto& r : reports) {
    for (const auto& q : r.queries) {
      out << "#query\t" << r.model << '\t' << r.dataset << '\t' << q.query_id << '\t'
          << q.first_relevant_rank << '\t' << q.average_precision << '\n';
    }
  }
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "model" << std::setw(14) << "dataset" << std::right
      << std::setw(8) << "R@1" << std::setw(8) << "R@10" << std::setw(8) << "MAP" << std::setw(10)
      << "queries" << std::setw(10) << "coverage" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& r : reports) {
    out << std::left << std::setw(10) << r.model << std::setw(14) << r.dataset << std::right
        << std::setw(8) << r.recall_at_1 << std::setw(8) << r.recall_at_10 << std::setw(8) << r.map
        << std::setw(10) << r.n_queries << std::setw(9) << r.prefilter_coverage << "%\n";
  }
  return out.str();
}

}  // namespace cdv::eval
