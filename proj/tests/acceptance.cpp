// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "cdv/evaluation.hpp"
#include "cdv/loss.hpp"
#include "cdv/pipeline.hpp"
#include "cdv/spaces.hpp"
#include "cdv/synthetic.hpp"
#include "cdv/vector_index.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "json.hpp"

using namespace cdv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

nn::Vector random_unit(Rng& rng, std::size_t dim) {
  nn::Vector v(dim);
  for (double& x : v) {
    const double u = 1.0 - rng.uniform();
    x = std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * rng.uniform());
  }
  return nn::l2_normalize(v);
}

void gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto layers = testing::gradient_suite(20, 2024);
  const double secs = seconds_since(t0);
  bool ok = secs <= 60.0;
  double worst = 0.0;
  std::string worst_layer;
  for (const auto& l : layers) {
    ok = ok && l.instances >= 20 && l.result.checked > 0 && l.result.worst <= 1e-4;
    if (l.result.worst >= worst) {
      worst = l.result.worst;
      worst_layer = l.layer + " " + l.result.where;
    }
  }
  report("gradient-integrity", ok,
         fmt("%zu layers x 20 instances, worst relative error %.2e (%s), %.2f s", layers.size(), worst,
             worst_layer.c_str(), secs));
}

void oracles() {
  const double robust = nn::robust_penalty(4.0);
  const bool robust_ok = std::abs(robust - (std::sqrt(2.0) - 1.0)) < 1e-12;

  const double ap = *eval::average_precision({"r1", "x", "r2", "y"}, {"r1", "r2"});
  const bool ap_ok = std::abs(ap - 0.8333) < 5e-5;

  const eval::InvertedIndex inv({{"a", {"kidney", "stone", "pain"}}, {"b", {"kidney", "treatment", "water", "water"}}});
  const double k1 = 1.2, b = 0.75, avg = 3.5;
  auto term = [&](double df, double tf, double len) {
    const double idf = std::log(1.0 + (2.0 - df + 0.5) / (df + 0.5));
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg));
  };
  const double err_a = std::abs(inv.bm25_score({"water", "kidney"}, "a") - term(2, 1, 3));
  const double err_b = std::abs(inv.bm25_score({"water", "kidney"}, "b") - (term(2, 1, 4) + term(1, 2, 4)));
  const bool bm25_ok = err_a < 1e-9 && err_b < 1e-9;
  report("oracles", robust_ok && ap_ok && bm25_ok,
         fmt("robust(d=4)=%.12f, AP{1,3}=%.4f, BM25 max error %.1e", robust, ap, std::max(err_a, err_b)));
}

struct EndToEnd {
  testing::TempDir dir{"acceptance"};
  pipeline::Config config;
  std::vector<eval::EvalReport> reports;
  double seconds = 0.0;
};

void synthetic_end_to_end(EndToEnd& run) {
  const auto t0 = std::chrono::steady_clock::now();
  synthetic::write_files(synthetic::generate(), run.dir.path());
  run.config = pipeline::load_config(run.dir / "config.json");
  run.reports = pipeline::Pipeline(run.config).run_all();
  run.seconds = seconds_since(t0);
  const eval::EvalReport* cdv = nullptr;
  double best_baseline = -1.0;
  for (const auto& r : run.reports) {
    if (r.model == "cdv") cdv = &r;
    if (r.model == "bm25" || r.model == "tfidf") best_baseline = std::max(best_baseline, r.map);
  }
  const bool ok = cdv != nullptr && run.config.eval.candidates == 16 && cdv->recall_at_1 >= 80.0 &&
                  cdv->map >= 85.0 && best_baseline >= 0.0 && best_baseline < cdv->map && run.seconds <= 600.0;
  std::string detail;
  for (const auto& r : run.reports) detail += fmt("%s R@1 %.2f MAP %.2f; ", r.model.c_str(), r.recall_at_1, r.map);
  detail += fmt("%zu held-out queries, %zu candidates, %.1f s", cdv ? cdv->n_queries : 0,
                run.config.eval.candidates, run.seconds);
  report("synthetic-end-to-end", ok, detail);
}

void training_stability(const EndToEnd& run) {
  std::ifstream in(pipeline::ArtifactFiles{run.config.paths.artifacts}.train_log());
  std::vector<double> losses;
  std::string line;
  bool finite = true;
  while (std::getline(in, line)) {
    const double l = json::parse(line)["mean_loss"].get<double>();
    finite = finite && std::isfinite(l);
    losses.push_back(l);
  }
  const bool ok = finite && losses.size() >= 50 && losses[49] <= 0.5 * losses[0];
  report("training-stability", ok,
         fmt("robust loss epoch 1 %.4f, epoch 50 %.4f (%.1f%% drop), %s", losses.empty() ? 0.0 : losses[0],
             losses.size() >= 50 ? losses[49] : 0.0,
             losses.size() >= 50 ? 100.0 * (1.0 - losses[49] / losses[0]) : 0.0, finite ? "no NaN" : "NaN seen"));
}

void protocol_fidelity(const EndToEnd& run) {
  double min_recall = 100.0;
  for (const auto& r : run.reports) min_recall = std::min(min_recall, r.candidate_recall);

  // Random ranker over 64 candidates.
  Rng rng(7);
  std::vector<eval::InvertedIndex::PassageText> ps;
  for (std::size_t i = 0; i < 256; ++i) {
    std::vector<std::string> toks{"uniq" + std::to_string(i)};
    for (int k = 0; k < 8; ++k) toks.push_back("w" + std::to_string(rng.below(40)));
    ps.push_back({"p" + std::to_string(1000 + i), toks});
  }
  const eval::InvertedIndex inv(ps);
  std::vector<corpus::EvalQuery> queries;
  for (std::size_t i = 0; i < 20000; ++i) {
    corpus::EvalQuery q;
    q.query_id = "q" + std::to_string(i);
    q.mention = "w" + std::to_string(rng.below(40));
    q.relevant = {"p" + std::to_string(1000 + rng.below(256))};
    queries.push_back(q);
  }
  eval::ExperimentConfig cfg;
  cfg.candidates = 64;
  cfg.seed = 11;
  const auto rnd = eval::run_experiment("random", "uniform", eval::random_ranker(13), queries, inv, cfg);
  const bool ok = min_recall == 100.0 && rnd.candidate_recall == 100.0 && rnd.n_queries >= 10000 &&
                  std::abs(rnd.recall_at_1 - 100.0 / 64.0) <= 0.5;
  report("protocol-fidelity", ok,
         fmt("post-injection recall %.1f%% (synthetic) / %.1f%% (random); random R@1 %.4f%% over %zu queries "
             "(expected 1.5625%%)",
             min_recall, rnd.candidate_recall, rnd.recall_at_1, rnd.n_queries));
}

void bloom_filter() {
  const spaces::BloomEncoder bloom(1024, 5, 3);
  Rng rng(5);
  std::size_t false_negatives = 0;
  for (std::size_t i = 0; i < 100000; ++i) {
    std::set<std::string> ids;
    const std::size_t n = 1 + rng.below(5);
    for (std::size_t k = 0; k < n; ++k) ids.insert("Q" + std::to_string(rng.below(1000000)));
    const auto bits = bloom.encode_all(ids);
    for (const auto& id : ids) {
      for (std::size_t p : bloom.positions(id)) false_negatives += !bits[p];
    }
  }
  std::set<std::string> many;
  while (many.size() < 1000) many.insert("E" + std::to_string(rng.next()));
  const auto bits = bloom.encode_all(many);
  const double observed = static_cast<double>(std::count(bits.begin(), bits.end(), true)) / 1024.0;
  const double expected = 1.0 - std::pow(1.0 - 1.0 / 1024.0, 5.0 * 1000.0);
  const bool ok = false_negatives == 0 && std::abs(observed - expected) <= 0.02;
  report("bloom", ok,
         fmt("%zu false negatives over 1e5 encodings; saturation %.4f vs %.4f expected (m=1024, k=5, n=1000)",
             false_negatives, observed, expected));
}

void serialization(const EndToEnd& run) {
  const pipeline::ArtifactFiles files{run.config.paths.artifacts};
  testing::TempDir out("roundtrip");
  auto words = std::make_shared<const text::WordEmbeddingTable>(text::WordEmbeddingTable::load(files.words()));
  words->save(out / "words.bin");
  const auto entities = spaces::EmbeddingSpace::load(files.entity_space(), words);
  entities.save(out / "entity.space");
  const auto aspects = spaces::EmbeddingSpace::load(files.aspect_space(), words);
  aspects.save(out / "aspect.space");
  model::CdvModel::load(files.model()).save(out / "cdv.ckpt");
  index::VectorIndex::load(files.index()).save(out / "index.bin");
  std::string mismatched;
  for (const char* name : {"words.bin", "entity.space", "aspect.space", "cdv.ckpt", "index.bin"}) {
    const std::string original = slurp(files.dir / name);
    if (original.empty() || original != slurp(out / name)) mismatched += std::string(" ") + name;
  }
  report("serialization", mismatched.empty(),
         mismatched.empty() ? "words, entity space, aspect space, cdv checkpoint and index re-saved byte-identical"
                            : "differs:" + mismatched);
}

void index_exactness(const EndToEnd& run) {
  const auto idx = index::VectorIndex::load(pipeline::ArtifactFiles{run.config.paths.artifacts}.index());
  Rng rng(17);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const spaces::QueryVector q{random_unit(rng, idx.entity_dim()), random_unit(rng, idx.aspect_dim())};
    std::vector<std::pair<double, std::size_t>> brute;
    for (std::size_t p = 0; p < idx.passage_count(); ++p) {
      brute.emplace_back(index::score_passage(q, idx, idx.passages()[p].passage_id).score, p);
    }
    std::stable_sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto all = index::search_all(q, idx, idx.passage_count());
    bool same = all.size() == brute.size();
    for (std::size_t i = 0; same && i < all.size(); ++i) {
      same = all[i].passage_id == idx.passages()[brute[i].second].passage_id && all[i].score == brute[i].first;
    }
    mismatches += !same;
  }
  report("index-exactness", mismatches == 0 && idx.passage_count() > 0,
         fmt("%zu of 1000 random queries differ from a brute-force re-sort over %zu passages", mismatches,
             idx.passage_count()));
}

}  // namespace

int main() {
  gradient_integrity();
  oracles();
  EndToEnd run;
  synthetic_end_to_end(run);
  training_stability(run);
  protocol_fidelity(run);
  bloom_filter();
  serialization(run);
  index_exactness(run);
  std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
