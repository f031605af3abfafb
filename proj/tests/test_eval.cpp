#include <cmath>
#include <set>
#include <sstream>

#include "cdv/error.hpp"
#include "cdv/evaluation.hpp"
#include "cdv/rng.hpp"
#include "doctest.h"

using namespace cdv;
using eval::InvertedIndex;

namespace {

std::string pid(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%04zu", i);
  return buf;
}

InvertedIndex toy_index() {
  return InvertedIndex({{"a", {"kidney", "stone", "pain"}}, {"b", {"kidney", "treatment", "water", "water"}}});
}

corpus::EvalQuery query(const std::string& id, const std::string& mention, const std::string& aspect,
                        std::vector<std::string> relevant) {
  corpus::EvalQuery q;
  q.query_id = id;
  q.mention = mention;
  q.aspect = aspect;
  q.relevant = std::move(relevant);
  return q;
}

// Passage i holds i copies of "alpha", padded to equal length, so BM25 on
// "alpha" ranks them strictly by i. "zzz" never matches.
InvertedIndex graded_index() {
  std::vector<InvertedIndex::PassageText> ps;
  for (std::size_t i = 1; i <= 10; ++i) {
    std::vector<std::string> toks(i, "alpha");
    toks.resize(10, "pad");
    ps.push_back({pid(i), toks});
  }
  ps.push_back({"rel", {"zzz"}});
  return InvertedIndex(ps);
}

// n passages of random filler, each with one unique token.
InvertedIndex random_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<InvertedIndex::PassageText> ps;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> toks{"uniq" + std::to_string(i)};
    for (int k = 0; k < 8; ++k) toks.push_back("w" + std::to_string(rng.below(30)));
    ps.push_back({pid(i), toks});
  }
  return InvertedIndex(ps);
}

}  // namespace

TEST_CASE("bm25 matches a hand computation") {
  const auto inv = toy_index();
  const double k1 = 1.2, b = 0.75, avg = 3.5;
  const double idf_water = std::log(1.0 + (2 - 1 + 0.5) / (1 + 0.5));
  const double idf_kidney = std::log(1.0 + (2 - 2 + 0.5) / (2 + 0.5));
  const auto term = [&](double idf, double tf, double len) {
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg));
  };
  const double expect_a = term(idf_kidney, 1, 3);
  const double expect_b = term(idf_kidney, 1, 4) + term(idf_water, 2, 4);
  CHECK(std::abs(inv.bm25_score({"water", "kidney"}, "a") - expect_a) < 1e-9);
  CHECK(std::abs(inv.bm25_score({"water", "kidney"}, "b") - expect_b) < 1e-9);
  CHECK(inv.bm25_score({"water", "kidney", "water"}, "b") == inv.bm25_score({"water", "kidney"}, "b"));
  CHECK(inv.average_length() == 3.5);
  CHECK(inv.document_frequency("kidney") == 2);

  // A term that occurs nowhere adds nothing.
  CHECK(inv.bm25_score({"zebra"}, "a") == 0.0);
  CHECK(inv.bm25_score({"water", "zebra"}, "b") == inv.bm25_score({"water"}, "b"));
  CHECK_THROWS_AS(inv.bm25_score({"water"}, "c"), NotFoundError);
}

TEST_CASE("tf-idf self-similarity") {
  const auto inv = random_corpus(30, 1);
  for (std::size_t i = 0; i < 30; ++i) {
    std::vector<std::string> toks{"uniq" + std::to_string(i)};
    const auto scores = inv.tfidf_all(toks);
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    CHECK(inv.passage_id(static_cast<std::size_t>(best)) == pid(i));
  }
  const auto toy = toy_index();
  const double self = toy.tfidf_score({"kidney", "stone", "pain"}, "a");
  CHECK(self == doctest::Approx(1.0));
  CHECK(toy.tfidf_score({"kidney", "stone", "pain"}, "b") < self);
  CHECK(toy.tfidf_score({"zebra"}, "a") == 0.0);
}

TEST_CASE("inverted index from a corpus uses passage ids") {
  std::istringstream in(
      R"({"id":"d1","title":"T","entity_id":"Q1","sections":[)"
      R"({"heading":"A","paragraphs":[["Stones hurt."]]},{"heading":"B","paragraphs":[["Drink water."]]}]})");
  const auto docs = corpus::parse_corpus(in, "t");
  const auto inv = InvertedIndex::from_corpus(docs);
  const auto ps = corpus::build_passages(docs[0]);
  CHECK(inv.passage_count() == 2);
  for (const auto& p : ps) CHECK(inv.find(p.passage_id).has_value());
  CHECK(inv.bm25_score({"water"}, ps[1].passage_id) > inv.bm25_score({"water"}, ps[0].passage_id));
}

TEST_CASE("prefilter injection") {
  const auto inv = graded_index();
  // Relevant passage already in the top 5: nothing is injected.
  const auto kept = eval::prefilter_candidates(query("q", "alpha", "", {pid(9)}), inv, 5, 1);
  CHECK(kept.injected == 0);
  CHECK(kept.relevant_before == 1);
  CHECK(std::set<std::string>(kept.candidates.begin(), kept.candidates.end()) ==
        std::set<std::string>{pid(10), pid(9), pid(8), pid(7), pid(6)});

  // Missing: exactly the lowest-ranked non-relevant candidate makes room.
  const auto inj = eval::prefilter_candidates(query("q", "alpha", "", {"rel"}), inv, 5, 1);
  CHECK(inj.injected == 1);
  CHECK(inj.relevant_before == 0);
  CHECK(std::set<std::string>(inj.candidates.begin(), inj.candidates.end()) ==
        std::set<std::string>{pid(10), pid(9), pid(8), pid(7), "rel"});

  // Two missing relevant passages displace the two lowest.
  const auto two = eval::prefilter_candidates(query("q", "alpha", "", {"rel", pid(1)}), inv, 5, 1);
  CHECK(std::set<std::string>(two.candidates.begin(), two.candidates.end()) ==
        std::set<std::string>{pid(10), pid(9), pid(8), "rel", pid(1)});

  // Deterministic per seed and query, and shuffled out of ranked order.
  CHECK(eval::prefilter_candidates(query("q", "alpha", "", {"rel"}), inv, 5, 1).candidates == inj.candidates);
  std::set<std::size_t> positions;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = eval::prefilter_candidates(query("q", "alpha", "", {"rel"}), inv, 5, seed).candidates;
    positions.insert(static_cast<std::size_t>(std::find(c.begin(), c.end(), "rel") - c.begin()));
  }
  CHECK(positions.size() > 1);

  CHECK_THROWS_AS(eval::prefilter_candidates(query("q", "alpha", "", {"rel", pid(1)}), inv, 1, 1),
                  InvalidArgumentError);
  CHECK_THROWS_AS(eval::prefilter_candidates(query("q", "alpha", "", {"ghost"}), inv, 5, 1), NotFoundError);
  // A corpus smaller than n keeps everything.
  CHECK(eval::prefilter_candidates(query("q", "alpha", "", {"rel"}), inv, 50, 1).candidates.size() == 11);
}

TEST_CASE("ranking metrics") {
  const std::vector<std::string> ranked{"a", "x", "b", "y"};
  CHECK(*eval::average_precision(ranked, {"a", "b"}) == doctest::Approx(0.8333).epsilon(1e-4));
  CHECK(*eval::average_precision(ranked, {"a", "b"}) == doctest::Approx(5.0 / 6.0));
  CHECK(*eval::recall_at_k(ranked, {"a", "b"}, 1) == 0.5);
  CHECK(*eval::recall_at_k(ranked, {"a", "b"}, 3) == 1.0);
  CHECK(*eval::recall_at_k(ranked, {"b"}, 1) == 0.0);
  CHECK(*eval::average_precision(ranked, {"z"}) == 0.0);
  CHECK_FALSE(eval::average_precision(ranked, {}).has_value());
  CHECK_FALSE(eval::recall_at_k(ranked, {}, 1).has_value());
  CHECK(*eval::average_precision({"a"}, {"a"}) == 1.0);
}

TEST_CASE("perfect, random and term rankers") {
  const std::size_t n_passages = 200;
  const auto inv = random_corpus(n_passages, 2);
  Rng rng(3);
  std::vector<corpus::EvalQuery> queries;
  for (std::size_t i = 0; i < 10000; ++i) {
    const std::size_t target = rng.below(n_passages);
    queries.push_back(query("q" + std::to_string(i), "w" + std::to_string(rng.below(30)), "", {pid(target)}));
  }
  eval::ExperimentConfig cfg;
  cfg.candidates = 64;
  cfg.seed = 5;

  const eval::Ranker perfect = [](const corpus::EvalQuery& q, const std::vector<std::string>& cands) {
    std::vector<std::string> out = q.relevant;
    for (const auto& c : cands) {
      if (std::find(q.relevant.begin(), q.relevant.end(), c) == q.relevant.end()) out.push_back(c);
    }
    return out;
  };
  const auto best = eval::run_experiment("perfect", "toy", perfect, queries, inv, cfg);
  CHECK(best.recall_at_1 == 100.0);
  CHECK(best.map == 100.0);
  CHECK(best.candidate_recall == 100.0);
  CHECK(best.n_queries == 10000);

  const auto rnd = eval::run_experiment("random", "toy", eval::random_ranker(9), queries, inv, cfg);
  CHECK(std::abs(rnd.recall_at_1 - 100.0 / 64.0) <= 0.5);
  CHECK(rnd.candidate_recall == 100.0);
  for (const auto& q : rnd.queries) {
    CHECK(q.first_relevant_rank >= 1);
    CHECK(q.first_relevant_rank <= 64);
  }

  // Queries naming each passage's unique token: BM25 retrieves it first.
  std::vector<corpus::EvalQuery> self;
  for (std::size_t i = 0; i < n_passages; ++i) {
    self.push_back(query("s" + std::to_string(i), "uniq" + std::to_string(i), "", {pid(i)}));
  }
  const auto bm25 = eval::run_experiment("bm25", "toy", eval::bm25_ranker(inv), self, inv, cfg);
  CHECK(bm25.recall_at_1 == 100.0);
  CHECK(bm25.prefilter_coverage == 100.0);
  const auto tfidf = eval::run_experiment("tfidf", "toy", eval::tfidf_ranker(inv), self, inv, cfg);
  CHECK(tfidf.recall_at_1 == 100.0);
}

TEST_CASE("experiment bookkeeping and reports") {
  const auto inv = graded_index();
  std::vector<corpus::EvalQuery> qs{query("q0", "alpha", "", {"rel"}), query("q1", "alpha", "", {"gone"}),
                                    query("q2", "alpha", "", {"gone", pid(3)})};
  eval::ExperimentConfig cfg;
  cfg.candidates = 4;
  const auto r = eval::run_experiment("bm25", "graded", eval::bm25_ranker(inv), qs, inv, cfg);
  CHECK(r.dropped_queries == 1);
  CHECK(r.n_queries == 2);
  CHECK(r.prefilter_coverage == 0.0);
  CHECK(r.candidate_recall == 100.0);
  const auto again = eval::run_experiment("bm25", "graded", eval::bm25_ranker(inv), qs, inv, cfg);
  CHECK(again.map == r.map);

  std::ostringstream out;
  eval::write_report(out, {r});
  const std::string text = out.str();
  CHECK(text.rfind("model\tdataset\tR@1\tR@10\tMAP\tn_queries\n", 0) == 0);
  CHECK(text.find("bm25\tgraded\t") != std::string::npos);
  CHECK(text.find("#query\tbm25\tgraded\tq0\t") != std::string::npos);
  std::ostringstream summary;
  eval::write_report(summary, {r}, false);
  CHECK(summary.str().find("#query") == std::string::npos);
  CHECK(eval::format_table({r}).find("bm25") != std::string::npos);
}
