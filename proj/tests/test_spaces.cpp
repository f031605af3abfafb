#include <cmath>
#include <memory>
#include <set>

#include "cdv/error.hpp"
#include "cdv/spaces.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cdv;
using nn::Vector;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::pair<Vector, Vector> lstm_ref(const nn::LstmCellParams& p, const Vector& h_prev, const Vector& c_prev,
                                   const Vector& x) {
  const std::size_t H = p.hidden_dim, I = p.input_dim;
  Vector h(H), c(H);
  for (std::size_t j = 0; j < H; ++j) {
    double z[4];
    for (std::size_t g = 0; g < 4; ++g) {
      double s = p.bias(g * H + j, 0);
      for (std::size_t k = 0; k < I; ++k) s += p.weight(g * H + j, k) * x[k];
      for (std::size_t k = 0; k < H; ++k) s += p.weight(g * H + j, I + k) * h_prev[k];
      z[g] = s;
    }
    c[j] = sigmoid(z[1]) * c_prev[j] + sigmoid(z[0]) * std::tanh(z[3]);
    h[j] = sigmoid(z[2]) * std::tanh(c[j]);
  }
  return {h, c};
}

// Three entities with disjoint five-word vocabularies and random vectors.
struct ToyKb {
  std::shared_ptr<text::WordEmbeddingTable> words;
  std::vector<corpus::KnowledgeBaseEntry> kb;
  std::vector<std::vector<std::string>> vocab;
};

ToyKb make_toy_kb(std::uint64_t seed) {
  ToyKb t;
  Rng rng(seed);
  t.words = std::make_shared<text::WordEmbeddingTable>(8);
  for (int e = 0; e < 3; ++e) {
    std::vector<std::string> v;
    for (int k = 0; k < 5; ++k) {
      const std::string w = "e" + std::to_string(e) + "w" + std::to_string(k);
      Vector vec(8);
      for (auto& x : vec) x = rng.uniform(-1, 1);
      t.words->add(w, vec);
      v.push_back(w);
    }
    t.vocab.push_back(v);
  }
  for (int e = 0; e < 3; ++e) {
    corpus::KnowledgeBaseEntry entry;
    entry.entity_id = "E" + std::to_string(e);
    entry.name = t.vocab[e][0] + " " + t.vocab[e][1];
    for (int d = 0; d < 20; ++d) {
      std::string s;
      for (int k = 0; k < 4; ++k) s += t.vocab[e][rng.below(5)] + " ";
      entry.descriptions.push_back(s);
    }
    t.kb.push_back(entry);
  }
  return t;
}

spaces::EncoderConfig toy_config() {
  spaces::EncoderConfig c;
  c.hidden = 16;
  c.dim = 16;
  c.bloom_bits = 16;
  c.bloom_hashes = 4;
  c.epochs = 60;
  c.batch = 4;
  c.learning_rate = 0.003;
  c.dropout = 0.0;
  c.weight_decay = 0.02;
  c.init_scale = 0.3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("bloom encoding basics") {
  spaces::BloomEncoder bloom(1024, 5, 99);
  CHECK(bloom.encode("Q42") == bloom.encode("Q42"));
  Rng rng(1);
  std::set<std::vector<bool>> distinct;
  std::size_t collisions = 0;
  std::vector<std::vector<bool>> codes;
  for (int i = 0; i < 1000; ++i) {
    const auto bits = bloom.encode("id-" + std::to_string(rng.next()));
    const auto pop = std::count(bits.begin(), bits.end(), true);
    CHECK(pop >= 1);
    CHECK(pop <= 5);
    codes.push_back(bits);
  }
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = i + 1; j < codes.size(); ++j) collisions += codes[i] == codes[j];
  }
  CHECK(static_cast<double>(collisions) / (1000.0 * 999 / 2) < 0.01);
  // A union contains every member's bits.
  const auto u = bloom.encode_all({"a", "b"});
  for (std::size_t p : bloom.positions("a")) CHECK(u[p]);
  for (std::size_t p : bloom.positions("b")) CHECK(u[p]);
  CHECK_THROWS(spaces::BloomEncoder(0, 5));
  CHECK_THROWS(spaces::BloomEncoder(16, 0));
}

TEST_CASE("encoder embedding matches a scalar loop") {
  auto words = std::make_shared<text::WordEmbeddingTable>(3);
  words->add("p", {0.2, -0.5, 0.9});
  words->add("q", {-0.7, 0.1, 0.4});
  spaces::EntityEncoder enc(words, 2, 3, 8);
  Rng rng(4);
  enc.init(rng, 0.7);
  const Vector got = enc.embed_tokens({"p", "q"});

  const auto& fw = enc.blstm.fwd.params;
  const auto& bw = enc.blstm.bwd.params;
  auto [h1, c1] = lstm_ref(fw, {0, 0}, {0, 0}, words->lookup("p"));
  auto [h2, c2] = lstm_ref(fw, h1, c1, words->lookup("q"));
  auto [b2, d2] = lstm_ref(bw, {0, 0}, {0, 0}, words->lookup("q"));
  auto [b1, d1] = lstm_ref(bw, b2, d2, words->lookup("p"));
  (void)c2;
  (void)d1;
  const Vector summary{(h2[0] + b1[0]) / 2, (h2[1] + b1[1]) / 2};
  for (std::size_t r = 0; r < 3; ++r) {
    double z = enc.embed.bias(r, 0);
    for (std::size_t k = 0; k < 2; ++k) z += enc.embed.weight(r, k) * summary[k];
    CHECK(got[r] == doctest::Approx(std::tanh(z)).epsilon(1e-13));
  }
}

TEST_CASE("encoder special cases") {
  auto words = std::make_shared<text::WordEmbeddingTable>(2);
  words->add("x", {1, -1});
  spaces::EntityEncoder enc(words, 2, 2, 8);
  Rng rng(1);
  enc.init(rng, 0.5);
  // T = 1: both directions see one step.
  const Vector x = words->lookup("x");
  const Vector zeros(2, 0.0);
  const auto f = nn::lstm_step(enc.blstm.fwd.params, zeros, zeros, x).h;
  const auto b = nn::lstm_step(enc.blstm.bwd.params, zeros, zeros, x).h;
  const Vector mean{(f[0] + b[0]) / 2, (f[1] + b[1]) / 2};
  const Vector expected = enc.embed.forward(mean);
  CHECK(enc.embed_tokens({"x"}) == expected);

  // Zero recurrent weights and biases: the summary is zero, so the
  // embedding is tanh of the dense bias.
  spaces::EntityEncoder zero(words, 2, 2, 8);
  zero.embed.bias(0, 0) = 0.3;
  zero.embed.bias(1, 0) = -0.2;
  const Vector z = zero.embed_tokens({"x", "x"});
  CHECK(z[0] == doctest::Approx(std::tanh(0.3)));
  CHECK(z[1] == doctest::Approx(std::tanh(-0.2)));
  CHECK_THROWS_AS(enc.embed_tokens({}), EmptyInputError);
}

TEST_CASE("entity encoder learns a toy knowledge base") {
  const ToyKb toy = make_toy_kb(21);
  const auto cfg = toy_config();
  spaces::BloomEncoder bloom(cfg.bloom_bits, cfg.bloom_hashes, 3);
  spaces::EncoderTrainingStats stats;
  const auto enc = spaces::train_entity_encoder(toy.kb, toy.words, bloom, cfg, &stats);
  REQUIRE(stats.epochs.size() == cfg.epochs);
  CHECK(stats.epochs[4].mean_loss < stats.epochs[0].mean_loss);
  const auto space = spaces::build_entity_space(enc, bloom, toy.kb);
  REQUIRE(space.table().size() == 3);

  // Held-out sentences drawn from each entity's vocabulary.
  Rng rng(77);
  int correct = 0, total = 0;
  for (int e = 0; e < 3; ++e) {
    for (int n = 0; n < 20; ++n) {
      std::vector<std::string> toks;
      for (int k = 0; k < 4; ++k) toks.push_back(toy.vocab[e][rng.below(5)]);
      const Vector v = enc.embed_tokens(toks);
      std::string best;
      double best_cos = -2;
      for (const auto& [id, vec] : space.table()) {
        const double c = nn::cosine(v, vec);
        if (c > best_cos) {
          best_cos = c;
          best = id;
        }
      }
      correct += best == "E" + std::to_string(e);
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.9);

  // Unknown id with a mention equal to a known name lands nearest that entity.
  const Vector m = spaces::embed_entity(space, {"unknown", toy.kb[1].name});
  CHECK(nn::cosine(m, *space.find("E1")) > nn::cosine(m, *space.find("E0")));
  CHECK(nn::cosine(m, *space.find("E1")) > nn::cosine(m, *space.find("E2")));
  CHECK(spaces::embed_entity(space, {"E2", "whatever"}) == *space.find("E2"));
  CHECK_THROWS_AS(spaces::embed_entity(space, {"unknown", ""}), UnresolvableError);

  // Same seed, same parameters.
  const auto again = spaces::train_entity_encoder(toy.kb, toy.words, bloom, cfg);
  CHECK(spaces::build_entity_space(again, bloom, toy.kb).to_bytes() == space.to_bytes());
}

TEST_CASE("entity space means") {
  const ToyKb toy = make_toy_kb(5);
  auto cfg = toy_config();
  cfg.epochs = 1;
  spaces::BloomEncoder bloom(16, 4, 3);
  const auto enc = spaces::train_entity_encoder(toy.kb, toy.words, bloom, cfg);
  std::vector<corpus::KnowledgeBaseEntry> kb = {{"A", "a", {"e0w1 e0w2"}},
                                                {"B", "b", {"e0w1 e0w2", "e0w1 e0w2"}},
                                                {"C", "c", {"e1w1 e1w2", "e2w3"}}};
  const auto space = spaces::build_entity_space(enc, bloom, kb);
  const Vector one = enc.embed_tokens({"e0w1", "e0w2"});
  CHECK(*space.find("A") == one);
  for (std::size_t k = 0; k < one.size(); ++k) CHECK((*space.find("B"))[k] == doctest::Approx(one[k]));
  const Vector c1 = enc.embed_tokens({"e1w1", "e1w2"}), c2 = enc.embed_tokens({"e2w3"});
  for (std::size_t k = 0; k < one.size(); ++k) {
    CHECK((*space.find("C"))[k] == doctest::Approx((c1[k] + c2[k]) / 2).epsilon(1e-14));
  }
}

TEST_CASE("aspect synonyms share a region of the space") {
  // "signs" and "symptoms" label the same sentence distribution.
  Rng rng(8);
  auto words = std::make_shared<text::WordEmbeddingTable>(8);
  std::vector<std::string> sym_words, treat_words;
  for (int k = 0; k < 6; ++k) {
    Vector a(8), b(8);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    sym_words.push_back("s" + std::to_string(k));
    treat_words.push_back("t" + std::to_string(k));
    words->add(sym_words.back(), a);
    words->add(treat_words.back(), b);
  }
  std::vector<spaces::HeadingContext> pairs;
  for (int i = 0; i < 150; ++i) {
    const int which = i % 3;
    const auto& pool = which == 2 ? treat_words : sym_words;
    std::vector<std::string> toks;
    for (int k = 0; k < 4; ++k) toks.push_back(pool[rng.below(pool.size())]);
    pairs.push_back({toks, {which == 0 ? "signs" : which == 1 ? "symptoms" : "treatment"}});
  }
  auto cfg = toy_config();
  cfg.epochs = 20;
  spaces::BloomEncoder bloom(16, 4, 11);
  const auto enc = spaces::train_aspect_encoder(pairs, words, bloom, cfg);
  const auto space = spaces::build_aspect_space(enc, bloom, pairs);
  const Vector& signs = *space.find("signs");
  CHECK(nn::cosine(signs, *space.find("symptoms")) > nn::cosine(signs, *space.find("treatment")));

  // Known aspect, composite heading, unseen string.
  CHECK(spaces::embed_aspect(space, "treatment") == *space.find("treatment"));
  const Vector both = spaces::embed_aspect(space, "Signs and Symptoms");
  for (std::size_t k = 0; k < both.size(); ++k) {
    CHECK(both[k] == doctest::Approx((signs[k] + (*space.find("symptoms"))[k]) / 2));
  }
  const Vector unseen = spaces::embed_aspect(space, "s1 s2 therapy");
  CHECK(unseen == spaces::embed_aspect(space, "s1 s2 therapy"));
  CHECK(unseen.size() == space.dim());
  CHECK_THROWS_AS(spaces::embed_aspect(space, "!!"), UnresolvableError);
}

TEST_CASE("query vectors") {
  const ToyKb toy = make_toy_kb(2);
  auto cfg = toy_config();
  cfg.epochs = 2;
  spaces::BloomEncoder bloom(16, 4, 3);
  const auto enc = spaces::train_entity_encoder(toy.kb, toy.words, bloom, cfg);
  const auto es = spaces::build_entity_space(enc, bloom, toy.kb);
  std::vector<spaces::HeadingContext> pairs = {{{"e0w0", "e1w1"}, {"treatment"}},
                                               {{"e2w2", "e2w3"}, {"symptoms"}}};
  const auto as = spaces::build_aspect_space(enc, bloom, pairs);
  const auto q1 = spaces::build_query(es, as, {"E0", ""}, "treatment");
  const auto q2 = spaces::build_query(es, as, {"E0", ""}, "symptoms");
  CHECK(q1.dim() == es.dim() + as.dim());
  CHECK(q1.entity == spaces::embed_entity(es, {"E0", ""}));
  CHECK(q1.entity == q2.entity);
  CHECK(q1.aspect != q2.aspect);
  CHECK(q1.concatenated().size() == q1.dim());
}

TEST_CASE("embedding space round trip") {
  const ToyKb toy = make_toy_kb(3);
  auto cfg = toy_config();
  cfg.epochs = 2;
  spaces::BloomEncoder bloom(16, 4, 3);
  const auto enc = spaces::train_entity_encoder(toy.kb, toy.words, bloom, cfg);
  const auto es = spaces::build_entity_space(enc, bloom, toy.kb);
  testing::TempDir dir("space");
  es.save(dir / "e.space");
  const auto back = spaces::EmbeddingSpace::load(dir / "e.space", toy.words);
  CHECK(back.to_bytes() == es.to_bytes());
  CHECK(back.names() == es.names());
  back.save(dir / "again.space");
  CHECK(spaces::EmbeddingSpace::load(dir / "again.space", toy.words).to_bytes() == es.to_bytes());
}
