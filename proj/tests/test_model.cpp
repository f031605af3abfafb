#include <cmath>
#include <fstream>
#include <sstream>

#include "cdv/cdv_model.hpp"
#include "cdv/error.hpp"
#include "cdv/synthetic.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cdv;
using nn::Vector;

namespace {

std::shared_ptr<text::WordEmbeddingTable> random_words(const std::vector<std::string>& tokens,
                                                       std::size_t dim, std::uint64_t seed) {
  auto t = std::make_shared<text::WordEmbeddingTable>(dim);
  Rng rng(seed);
  for (const auto& tok : tokens) {
    if (t->contains(tok)) continue;
    Vector v(dim);
    for (double& x : v) x = rng.uniform(-1, 1);
    t->add(tok, v);
  }
  return t;
}

spaces::EmbeddingSpace hand_space(spaces::SpaceKind kind, std::size_t dim,
                                  const std::map<std::string, Vector>& rows) {
  auto words = random_words({"x"}, 3, 1);
  spaces::EntityEncoder enc(words, 4, dim, 16);
  Rng rng(2);
  enc.init(rng, 0.1);
  spaces::EmbeddingSpace space(kind, enc, spaces::BloomEncoder(16, 4));
  for (const auto& [k, v] : rows) space.set(k, v);
  return space;
}

std::vector<Vector> random_inputs(std::size_t steps, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> xs(steps, Vector(dim));
  for (auto& x : xs) {
    for (double& v : x) v = rng.uniform(-1, 1);
  }
  return xs;
}

model::CdvModel small_model(std::uint64_t seed) {
  model::CdvDims d;
  d.input_dim = 5;
  d.hidden = 4;
  d.discourse = 3;
  d.entity_dim = 2;
  d.aspect_dim = 2;
  model::CdvModel m(d);
  Rng rng(seed);
  m.init(rng, 0.5);
  return m;
}

std::vector<corpus::Document> parse(const std::string& text) {
  std::istringstream in(text);
  return corpus::parse_corpus(in, "test");
}

const char* kDoc =
    R"({"id":"d1","title":"Kidney stone","entity_id":"Q1","sections":[)"
    R"({"heading":"Signs and Symptoms","paragraphs":[["Pain is severe.","Blood may appear."]]},)"
    R"({"heading":"Treatment","paragraphs":[["Drink water."],["Surgery is rare."]],)"
    R"("links":[{"sentence_index":0,"entity_id":"Q9"},{"sentence_index":1,"entity_id":"Q7"}]}]})";

}  // namespace

TEST_CASE("training targets average label embeddings") {
  const auto docs = parse(kDoc);
  const auto es = hand_space(spaces::SpaceKind::kEntity, 2, {{"Q1", {1, 0}}, {"Q7", {0, 1}}});
  const auto as = hand_space(spaces::SpaceKind::kAspect, 2,
                             {{"signs", {1, 1}}, {"symptoms", {-1, 1}}, {"treatment", {0, -1}}});
  const auto targets = model::build_targets(docs[0], corpus::derive_labels(docs[0]), es, as);
  REQUIRE(targets.size() == 4);
  CHECK(targets.entity[0] == Vector{1, 0});
  CHECK(targets.aspect[0] == Vector{0, 1});
  CHECK(targets.aspect[2] == Vector{0, -1});
  // Q9 is not in the knowledge base and has no mention: left out of the mean.
  CHECK(targets.entity[2] == Vector{1, 0});
  CHECK(targets.entity[3] == Vector{0.5, 0.5});
  CHECK(std::all_of(targets.include.begin(), targets.include.end(), [](bool b) { return b; }));

  // Unseen aspects fall back to the encoder; an empty label set cannot.
  const auto bare = hand_space(spaces::SpaceKind::kAspect, 2, {{"treatment", {0, -1}}});
  const auto partial = model::build_targets(docs[0], corpus::derive_labels(docs[0]), es, bare);
  CHECK(partial.include[0]);
  CHECK(partial.aspect[0].size() == 2);
  auto labels = corpus::derive_labels(docs[0]);
  labels[1].aspects.clear();
  CHECK_FALSE(model::build_targets(docs[0], labels, es, as).include[1]);
}

TEST_CASE("discourse vectors have unit norm") {
  const auto m = small_model(3);
  const auto xs = random_inputs(6, 5, 4);
  const auto out = m.encode(xs, "doc");
  REQUIRE(out.size() == 6);
  CHECK(out.doc_id == "doc");
  for (const auto& d : out.discourse) CHECK(nn::l2_norm(d) == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& e : out.entity) {
    for (double x : e) CHECK(std::abs(x) < 1.0);
  }
  const auto one = m.encode({xs[0]});
  CHECK(one.size() == 1);
  CHECK(nn::l2_norm(one.discourse[0]) == doctest::Approx(1.0));
  CHECK_THROWS_AS(m.encode({}), EmptyInputError);
}

TEST_CASE("decoded views match the discourse vectors") {
  const auto m = small_model(5);
  const auto out = m.encode(random_inputs(4, 5, 6));
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto [e, a] = m.decode(out.discourse[t]);
    CHECK(e == out.entity[t]);
    CHECK(a == out.aspect[t]);
  }
  CHECK_THROWS_AS(m.decode(Vector(7, 0.0)), ShapeError);

  auto z = small_model(5);
  z.entity_decoder.weight.fill(0.0);
  z.entity_decoder.bias(0, 0) = 0.4;
  z.entity_decoder.bias(1, 0) = -1.5;
  const auto zo = z.encode(random_inputs(3, 5, 8));
  for (const auto& e : zo.entity) {
    CHECK(e[0] == doctest::Approx(std::tanh(0.4)));
    CHECK(e[1] == doctest::Approx(std::tanh(-1.5)));
  }
}

TEST_CASE("documents are encoded independently") {
  const auto m = small_model(9);
  const auto a = random_inputs(5, 5, 10);
  const auto b = random_inputs(3, 5, 11);
  const auto a1 = m.encode(a);
  (void)m.encode(b);
  CHECK(m.encode(a).discourse == a1.discourse);

  // The backward direction means a later sentence changes earlier vectors,
  // and the forward direction the reverse.
  auto a2 = a;
  a2[4][0] += 0.5;
  const auto changed = m.encode(a2);
  CHECK(changed.discourse[0] != a1.discourse[0]);
  a2 = a;
  a2[0][0] += 0.5;
  CHECK(m.encode(a2).discourse[4] != a1.discourse[4]);
}

TEST_CASE("batch gradient does not depend on batch order") {
  std::vector<model::PreparedDocument> docs(3);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].doc_id = "d" + std::to_string(i);
    docs[i].inputs = random_inputs(3 + i, 5, 20 + i);
    const auto t = random_inputs(3 + i, 2, 30 + i);
    docs[i].targets.entity = t;
    docs[i].targets.aspect = random_inputs(3 + i, 2, 40 + i);
    docs[i].targets.include.assign(3 + i, true);
  }
  auto m1 = small_model(12), m2 = small_model(12);
  auto p1 = m1.params(), p2 = m2.params();
  nn::zero_grads(p1);
  nn::zero_grads(p2);
  const double l1 = model::accumulate_batch(m1, {&docs[0], &docs[1], &docs[2]}, nn::CdvLossKind::kRobust);
  const double l2 = model::accumulate_batch(m2, {&docs[2], &docs[0], &docs[1]}, nn::CdvLossKind::kRobust);
  CHECK(l1 == l2);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(*p1[i].grad == *p2[i].grad);
}

TEST_CASE("training reduces the loss and is reproducible") {
  synthetic::SyntheticConfig sc;
  sc.entities = 3;
  sc.aspects = 3;
  sc.docs_per_entity = 2;
  sc.sections_per_doc = 3;
  const auto data = synthetic::generate(sc);
  std::vector<std::string> vocab;
  for (const auto& d : data.train_docs) {
    for (const auto* s : d.sentences()) vocab.insert(vocab.end(), s->tokens.begin(), s->tokens.end());
  }
  auto words = random_words(vocab, 6, 13);
  std::map<std::string, Vector> ents, asps;
  Rng rng(14);
  for (const auto& id : data.entity_ids) ents[id] = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
  for (const auto& d : data.train_docs) {
    for (const auto& l : corpus::derive_labels(d)) {
      for (const auto& a : l.aspects) {
        if (!asps.count(a)) asps[a] = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
      }
    }
  }
  const auto es = hand_space(spaces::SpaceKind::kEntity, 2, ents);
  const auto as = hand_space(spaces::SpaceKind::kAspect, 2, asps);

  model::CdvTrainConfig cfg;
  cfg.hidden = 8;
  cfg.discourse = 6;
  cfg.epochs = 30;
  cfg.batch = 2;
  cfg.learning_rate = 0.01;
  cfg.init_scale = 0.3;
  std::vector<model::EpochLog> log;
  std::size_t callbacks = 0;
  const auto m = model::train_cdv(data.train_docs, words, es, as, cfg, &log,
                                  [&](const model::EpochLog&) { ++callbacks; });
  REQUIRE(log.size() == 30);
  CHECK(callbacks == 30);
  CHECK(log.back().mean_loss < 0.5 * log.front().mean_loss);
  for (const auto& e : log) CHECK(std::isfinite(e.mean_loss));
  CHECK(log[1].learning_rate == doctest::Approx(log[0].learning_rate * 0.975));
  CHECK(m.word_table_fingerprint == words->fingerprint());
  CHECK(m.entity_space_fingerprint == es.fingerprint());

  const auto again = model::train_cdv(data.train_docs, words, es, as, cfg);
  CHECK(again.to_bytes() == m.to_bytes());
  CHECK_THROWS_AS(model::train_cdv({}, words, es, as, cfg), EmptyInputError);
}

TEST_CASE("model checkpoint round trip") {
  auto m = small_model(15);
  m.seed = 15;
  m.word_table_fingerprint = 0x1234;
  m.hyperparameters = {{"loss", "robust"}};
  testing::TempDir dir("model");
  m.save(dir / "cdv.ckpt");
  const auto back = model::CdvModel::load(dir / "cdv.ckpt");
  CHECK(back.to_bytes() == m.to_bytes());
  CHECK(back.fingerprint() == m.fingerprint());
  CHECK(back.word_table_fingerprint == 0x1234);
  back.save(dir / "again.ckpt");
  std::ifstream f1(dir / "cdv.ckpt", std::ios::binary), f2(dir / "again.ckpt", std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  std::ofstream(dir / "bad.ckpt", std::ios::binary) << b1.substr(0, b1.size() / 2);
  CHECK_THROWS(model::CdvModel::load(dir / "bad.ckpt"));
  CHECK_THROWS_AS(model::CdvModel::load(dir / "missing.ckpt"), IoError);
}
