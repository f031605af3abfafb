#include "cdv/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cdv/error.hpp"
#include "cdv/rng.hpp"

namespace cdv::synthetic {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kAspectNames[] = {"symptoms",  "treatment", "diagnosis", "causes",
                                        "prognosis", "prevention", "epidemiology", "history"};
constexpr const char* kNameSuffixes[] = {"syndrome", "disease", "disorder", "fever"};
constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                   "s", "t", "v", "z", "br", "kr", "st", "tr", "pl", "gl"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
constexpr const char* kCodas[] = {"", "n", "r", "l", "s", "m", "x", "th"};

class WordFactory {
 public:
  explicit WordFactory(Rng& rng) : rng_(rng) {
    for (const char* w : kAspectNames) used_.insert(w);
    for (const char* w : kNameSuffixes) used_.insert(w);
  }

  std::string make(std::size_t syllables) {
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += pick(kOnsets);
        w += pick(kVowels);
      }
      w += pick(kCodas);
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> make_many(std::size_t n, std::size_t syllables) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make(syllables));
    return out;
  }

 private:
  template <std::size_t N>
  const char* pick(const char* const (&pool)[N]) {
    return pool[rng_.below(N)];
  }

  Rng& rng_;
  std::set<std::string> used_;
};

std::string sentence_text(std::vector<std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out + ".";
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

}  // namespace

SyntheticCorpus generate(const SyntheticConfig& c) {
  if (c.aspects == 0 || c.aspects > std::size(kAspectNames)) {
    throw InvalidArgumentError("aspect count must be in [1, " + std::to_string(std::size(kAspectNames)) + "]");
  }
  if (c.entities == 0 || c.docs_per_entity == 0 || c.sections_per_doc == 0 ||
      c.sections_per_doc > c.aspects || c.heldout_per_entity > c.docs_per_entity ||
      c.min_sentences == 0 || c.min_sentences > c.max_sentences || c.min_tokens > c.max_tokens ||
      c.aspect_terms_per_sentence + c.entity_terms_per_sentence > c.min_tokens) {
    throw InvalidArgumentError("inconsistent synthetic corpus configuration");
  }
  Rng rng(c.seed);
  WordFactory words(rng);
  SyntheticCorpus out;

  std::vector<std::vector<std::string>> entity_terms(c.entities), aspect_terms(c.aspects);
  for (std::size_t e = 0; e < c.entities; ++e) entity_terms[e] = words.make_many(c.unique_terms, 3);
  for (std::size_t a = 0; a < c.aspects; ++a) aspect_terms[a] = words.make_many(c.unique_terms, 2);
  // Neighbouring labels share a few terms so single words are ambiguous.
  for (std::size_t e = 0; e < c.entities && c.entities > 1; ++e) {
    for (std::size_t k = 0; k < c.shared_terms; ++k) {
      entity_terms[e].push_back(entity_terms[(e + 1) % c.entities][k]);
    }
  }
  for (std::size_t a = 0; a < c.aspects && c.aspects > 1; ++a) {
    for (std::size_t k = 0; k < c.shared_terms; ++k) {
      aspect_terms[a].push_back(aspect_terms[(a + 1) % c.aspects][k]);
    }
  }
  const std::vector<std::string> filler = words.make_many(c.filler_words, 2);

  for (std::size_t a = 0; a < c.aspects; ++a) out.aspect_names.emplace_back(kAspectNames[a]);
  for (std::size_t e = 0; e < c.entities; ++e) {
    std::string name = words.make(2);
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    name += std::string(" ") + kNameSuffixes[rng.below(std::size(kNameSuffixes))];
    out.entity_names.push_back(name);
    out.entity_ids.push_back("E" + std::to_string(e + 1));
  }

  auto pick = [&](const std::vector<std::string>& pool) { return pool[rng.below(pool.size())]; };

  for (std::size_t e = 0; e < c.entities; ++e) {
    corpus::KnowledgeBaseEntry entry;
    entry.entity_id = out.entity_ids[e];
    entry.name = out.entity_names[e];
    for (std::size_t d = 0; d < c.kb_descriptions; ++d) {
      const std::size_t len = between(rng, c.min_tokens, c.max_tokens);
      std::vector<std::string> toks;
      const std::size_t n_entity = between(rng, 3, 4);
      for (std::size_t k = 0; k < n_entity; ++k) toks.push_back(pick(entity_terms[e]));
      if (rng.bernoulli(0.5)) toks.push_back(pick(aspect_terms[rng.below(c.aspects)]));
      while (toks.size() < len) toks.push_back(pick(filler));
      rng.shuffle(std::span<std::string>(toks));
      entry.descriptions.push_back(sentence_text(toks));
    }
    out.knowledge_base.push_back(std::move(entry));
  }

  std::ostringstream train_jsonl, heldout_jsonl;
  std::size_t query_counter = 0;
  for (std::size_t e = 0; e < c.entities; ++e) {
    for (std::size_t d = 0; d < c.docs_per_entity; ++d) {
      const bool heldout = d >= c.docs_per_entity - c.heldout_per_entity;
      const std::string doc_id = "syn-" + out.entity_ids[e] + "-d" + std::to_string(d);
      std::vector<std::size_t> aspects(c.aspects);
      for (std::size_t a = 0; a < c.aspects; ++a) aspects[a] = a;
      rng.shuffle(std::span<std::size_t>(aspects));
      aspects.resize(c.sections_per_doc);

      json rec = {{"id", doc_id}, {"title", out.entity_names[e]}, {"entity_id", out.entity_ids[e]},
                  {"source", "synthetic"}};
      json sections = json::array();
      for (std::size_t s = 0; s < aspects.size(); ++s) {
        const std::size_t a = aspects[s];
        const std::size_t n_sent = between(rng, c.min_sentences, c.max_sentences);
        json paragraphs = json::array({json::array()});
        for (std::size_t i = 0; i < n_sent; ++i) {
          const std::size_t len = between(rng, c.min_tokens, c.max_tokens);
          std::vector<std::string> toks;
          if (!rng.bernoulli(c.filler_sentence_prob)) {
            for (std::size_t k = 0; k < c.aspect_terms_per_sentence; ++k) toks.push_back(pick(aspect_terms[a]));
            if (rng.bernoulli(c.entity_term_prob)) {
              for (std::size_t k = 0; k < c.entity_terms_per_sentence; ++k) toks.push_back(pick(entity_terms[e]));
            }
          }
          while (toks.size() < len) toks.push_back(pick(filler));
          rng.shuffle(std::span<std::string>(toks));
          if (i > 0 && rng.bernoulli(0.3)) paragraphs.push_back(json::array());
          paragraphs.back().push_back(sentence_text(toks));
        }
        sections.push_back({{"heading", out.aspect_names[a]}, {"paragraphs", paragraphs}});
        if (heldout) {
          corpus::EvalQuery q;
          q.query_id = "q" + std::to_string(++query_counter);
          q.entity_id = out.entity_ids[e];
          q.mention = out.entity_names[e];
          q.aspect = out.aspect_names[a];
          q.relevant = {corpus::make_passage_id(doc_id, s)};
          out.queries.push_back(std::move(q));
        }
      }
      rec["sections"] = sections;
      (heldout ? heldout_jsonl : train_jsonl) << rec.dump() << '\n';
    }
  }
  std::istringstream train_in(train_jsonl.str()), heldout_in(heldout_jsonl.str());
  out.train_docs = corpus::parse_corpus(train_in, "synthetic-train");
  out.heldout_docs = corpus::parse_corpus(heldout_in, "synthetic-heldout");
  return out;
}

json default_pipeline_config() {
  return {
      {"seed", 42},
      {"dataset", "synthetic"},
      {"paths",
       {{"corpus", "corpus.jsonl"},
        {"train_corpus", "train.jsonl"},
        {"knowledge_base", "kb.jsonl"},
        {"queries", "queries.tsv"},
        {"artifacts", "artifacts"}}},
      {"embeddings",
       {{"dim", 24}, {"window", 4}, {"negatives", 5}, {"epochs", 50}, {"buckets", 20000}, {"subwords", false}}},
      {"entity",
       {{"hidden", 24}, {"dim", 16}, {"bloom_bits", 16}, {"bloom_hashes", 4}, {"epochs", 40}, {"batch", 8},
        {"learning_rate", 0.003}, {"weight_decay", 0.02}, {"dropout", 0.0}, {"init_scale", 0.3}}},
      {"aspect",
       {{"hidden", 24}, {"dim", 16}, {"bloom_bits", 16}, {"bloom_hashes", 4}, {"epochs", 20}, {"batch", 16},
        {"learning_rate", 0.003}, {"weight_decay", 0.02}, {"dropout", 0.0}, {"init_scale", 0.3}}},
      {"cdv",
       {{"hidden", 32}, {"discourse", 32}, {"epochs", 50}, {"batch", 4}, {"learning_rate", 0.01},
        {"init_scale", 0.3}}},
      {"eval", {{"candidates", 16}, {"models", {"cdv", "bm25", "tfidf"}}}},
  };
}

void write_files(const SyntheticCorpus& data, const fs::path& dir, const json& pipeline_overrides) {
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("train.jsonl");
    corpus::write_corpus(f, data.train_docs);
  }
  {
    auto f = open("corpus.jsonl");
    corpus::write_corpus(f, data.heldout_docs);
  }
  {
    auto f = open("kb.jsonl");
    corpus::write_knowledge_base(f, data.knowledge_base);
  }
  {
    auto f = open("queries.tsv");
    corpus::write_queries(f, data.queries);
  }
  json config = default_pipeline_config();
  config.merge_patch(pipeline_overrides);
  auto f = open("config.json");
  f << config.dump(2) << '\n';
}

}  // namespace cdv::synthetic
