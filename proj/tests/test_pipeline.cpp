#include <fstream>
#include <sstream>

#include "cdv/error.hpp"
#include "cdv/pipeline.hpp"
#include "cdv/synthetic.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cdv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("config parsing") {
  const json doc = {{"seed", 7},
                    {"dataset", "toy"},
                    {"paths", {{"corpus", "c.jsonl"}, {"queries", "/abs/q.tsv"}}},
                    {"cdv", {{"loss", "plain"}, {"epochs", 3}}},
                    {"eval", {{"candidates", 16}, {"models", {"cdv", "random"}}}}};
  const auto c = pipeline::parse_config(doc, "/base");
  CHECK(c.seed == 7);
  CHECK(c.dataset == "toy");
  CHECK(c.paths.corpus == fs::path("/base/c.jsonl"));
  CHECK(c.paths.train_corpus == c.paths.corpus);
  CHECK(c.paths.queries == fs::path("/abs/q.tsv"));
  CHECK(c.paths.artifacts == fs::path("/base/artifacts"));
  CHECK(c.cdv.loss == nn::CdvLossKind::kPlain);
  CHECK(c.cdv.epochs == 3);
  CHECK(c.eval.candidates == 16);
  CHECK(c.models == std::vector<std::string>{"cdv", "random"});
  CHECK(c.cdv.seed != c.entity.seed);

  // Serialized form parses back to the same settings.
  const auto again = pipeline::parse_config(pipeline::config_to_json(c), "/elsewhere");
  CHECK(pipeline::config_to_json(again) == pipeline::config_to_json(c));

  CHECK_THROWS_AS(pipeline::parse_config({{"sed", 1}}, "."), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_config({{"cdv", {{"epoch", 1}}}}, "."), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_config({{"cdv", {{"loss", "huber"}}}}, "."), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_config({{"cdv", {{"learning_rate", -1}}}}, "."), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_config({{"entity", {{"epochs", "five"}}}}, "."), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_config({{"eval", {{"models", {"bert"}}}}}, "."), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_config(json::array(), "."), ConfigError);
  CHECK_THROWS_AS(pipeline::load_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("seed derivation") {
  pipeline::Config a, b;
  pipeline::set_seed(a, 1);
  pipeline::set_seed(b, 2);
  CHECK(a.seed == 1);
  CHECK(a.cdv.seed != b.cdv.seed);
  CHECK(a.entity.seed != a.aspect.seed);
  pipeline::Config c;
  pipeline::set_seed(c, 1);
  CHECK(c.cdv.seed == a.cdv.seed);
  CHECK(c.eval.seed == a.eval.seed);
}

TEST_CASE("stages need their inputs") {
  testing::TempDir dir("stages");
  synthetic::write_files(synthetic::generate(), dir.path(), testing::quick_overrides());
  pipeline::Pipeline p(pipeline::load_config(dir / "config.json"));
  CHECK_THROWS_AS(p.train_cdv(), ConfigError);
  CHECK_THROWS_AS(p.build_index(), ConfigError);
  auto cfg = p.config();
  cfg.models = {"bm25"};
  pipeline::Pipeline terms(cfg);
  CHECK(terms.evaluate().size() == 1);
  auto missing = p.config();
  missing.paths.knowledge_base.clear();
  CHECK_THROWS_AS(pipeline::Pipeline(missing).train_entity(), ConfigError);
}

TEST_CASE("end to end run writes consistent artifacts") {
  testing::TempDir dir("run");
  std::vector<std::string> messages;
  synthetic::write_files(synthetic::generate(), dir.path(), testing::quick_overrides());
  const auto config = pipeline::load_config(dir / "config.json");
  pipeline::Pipeline p(config, [&](const std::string& m) { messages.push_back(m); });
  const auto reports = p.run_all();
  const auto files = p.files();
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].model == "cdv");
  CHECK(reports[0].n_queries == 40);
  CHECK(reports[0].candidate_recall == 100.0);
  CHECK_FALSE(messages.empty());
  for (const auto& f : {files.words(), files.entity_space(), files.aspect_space(), files.model(), files.index(),
                        files.manifest(), files.report(), files.train_log()}) {
    CHECK(fs::exists(f));
  }

  std::ifstream log_in(files.train_log());
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(log_in, line)) {
    const json e = json::parse(line);
    CHECK(e.contains("mean_loss"));
    ++epochs;
  }
  CHECK(epochs == config.cdv.epochs);

  const json manifest = json::parse(slurp(files.manifest()));
  for (const char* stage : {"embeddings", "entity", "aspect", "cdv", "index", "evaluate"}) {
    CHECK(manifest["stages"].contains(stage));
  }
  const auto model = model::CdvModel::load(files.model());
  const auto idx = index::VectorIndex::load(files.index());
  CHECK(idx.build_fingerprint == model.fingerprint());
  CHECK(manifest["stages"]["index"]["model_fingerprint"].get<std::uint64_t>() == model.fingerprint());

  // A second run with the same seed reproduces every artifact byte for byte.
  testing::TempDir dir2("run2");
  synthetic::write_files(synthetic::generate(), dir2.path(), testing::quick_overrides());
  pipeline::Pipeline(pipeline::load_config(dir2 / "config.json")).run_all();
  const pipeline::ArtifactFiles files2{pipeline::load_config(dir2 / "config.json").paths.artifacts};
  CHECK(slurp(files.words()) == slurp(files2.words()));
  CHECK(slurp(files.entity_space()) == slurp(files2.entity_space()));
  CHECK(slurp(files.aspect_space()) == slurp(files2.aspect_space()));
  CHECK(slurp(files.model()) == slurp(files2.model()));
  CHECK(slurp(files.index()) == slurp(files2.index()));

  // Swapping in another run's index without its model is detected.
  auto other = config;
  pipeline::set_seed(other, 99);
  pipeline::Pipeline reseeded(other);
  reseeded.train_cdv();
  CHECK_THROWS_AS(reseeded.evaluate(), IntegrityError);
  reseeded.train_embeddings();
  CHECK_THROWS_AS(reseeded.build_index(), IntegrityError);
}
