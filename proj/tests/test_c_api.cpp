#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cdv/cdv.h"
#include "doctest.h"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kQuick = R"({"embeddings":{"epochs":10},"entity":{"epochs":10},"aspect":{"epochs":5},"cdv":{"epochs":10}})";

// Takes ownership of a string returned by the library.
std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  cdv_string_free(s);
  return out;
}

struct Workspace {
  fs::path dir;
  cdv_config* config = nullptr;
  cdv_service* service = nullptr;
  std::vector<std::string> log;

  Workspace() {
    dir = fs::temp_directory_path() / ("cdv-capi-" + std::to_string(std::rand()) + "-" +
                                       std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(dir);
    REQUIRE(cdv_synthetic_write(dir.c_str(), 2024, kQuick) == CDV_OK);
    REQUIRE(cdv_config_load((dir / "config.json").c_str(), &config) == CDV_OK);
    char* out = nullptr;
    const auto st = cdv_run_stage(
        config, "all", [](const char* m, void* user) { static_cast<Workspace*>(user)->log.emplace_back(m); },
        this, &out);
    REQUIRE(st == CDV_OK);
    summary = json::parse(take(out));
    REQUIRE(cdv_service_open(config, &service) == CDV_OK);
  }
  ~Workspace() {
    cdv_service_free(service);
    cdv_config_free(config);
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  json summary;
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("library metadata") {
  CHECK(std::string(cdv_version()).size() > 0);
  CHECK(std::string(cdv_status_name(CDV_OK)) == "ok");
  CHECK(std::string(cdv_status_name(CDV_ERR_UNRESOLVABLE)) == "unresolvable_entity");
  cdv_string_free(nullptr);
}

TEST_CASE("config handles") {
  cdv_config* c = nullptr;
  REQUIRE(cdv_config_parse(R"({"seed":3,"paths":{"corpus":"c.jsonl"}})", "/tmp/base", &c) == CDV_OK);
  char* out = nullptr;
  REQUIRE(cdv_config_to_json(c, &out) == CDV_OK);
  json j = json::parse(take(out));
  CHECK(j["seed"] == 3);
  CHECK(j["paths"]["corpus"] == "/tmp/base/c.jsonl");
  CHECK(cdv_config_set_seed(c, 9) == CDV_OK);
  CHECK(cdv_config_set_artifacts(c, "/tmp/elsewhere") == CDV_OK);
  REQUIRE(cdv_config_to_json(c, &out) == CDV_OK);
  j = json::parse(take(out));
  CHECK(j["seed"] == 9);
  CHECK(j["paths"]["artifacts"] == "/tmp/elsewhere");
  cdv_config_free(c);

  cdv_config* bad = nullptr;
  CHECK(cdv_config_parse(R"({"bogus":1})", ".", &bad) == CDV_ERR_CONFIG);
  CHECK(bad == nullptr);
  CHECK(std::string(cdv_last_error()).find("bogus") != std::string::npos);
  CHECK(cdv_config_parse("{nope", ".", &bad) == CDV_ERR_PARSE);
  CHECK(cdv_config_load("/nonexistent/config.json", &bad) == CDV_ERR_IO);
  CHECK(cdv_config_parse(nullptr, ".", &bad) == CDV_ERR_INVALID_ARGUMENT);
  REQUIRE(cdv_config_parse("{}", ".", &c) == CDV_OK);
  CHECK(std::string(cdv_last_error()).empty());
  CHECK(cdv_run_stage(c, "dance", nullptr, nullptr, nullptr) == CDV_ERR_INVALID_ARGUMENT);
  cdv_config_free(c);
}

TEST_CASE("pipeline through the C API") {
  auto& w = workspace();
  CHECK(w.summary["stage"] == "all");
  REQUIRE(w.summary["results"].size() == 3);
  CHECK(w.summary["results"][0]["model"] == "cdv");
  CHECK(w.summary["results"][0]["n_queries"] == 40);
  CHECK(w.summary["results"][0]["candidate_recall"] == 100.0);
  CHECK_FALSE(w.log.empty());

  char* out = nullptr;
  REQUIRE(cdv_run_stage(w.config, "evaluate", nullptr, nullptr, &out) == CDV_OK);
  const json again = json::parse(take(out));
  CHECK(again["results"][0]["map"] == w.summary["results"][0]["map"]);
}

TEST_CASE("service through the C API") {
  auto& w = workspace();
  std::uint64_t fp = 0;
  REQUIRE(cdv_service_index_fingerprint(w.service, &fp) == CDV_OK);
  CHECK(fp != 0);

  char* out = nullptr;
  REQUIRE(cdv_service_aspects(w.service, "trea", 5, &out) == CDV_OK);
  CHECK(json::parse(take(out)) == json::array({"treatment"}));
  REQUIRE(cdv_service_entities(w.service, "", 1, &out) == CDV_OK);
  CHECK(json::parse(take(out)).size() == 1);

  REQUIRE(cdv_service_query(w.service, R"({"entity":{"id":"E1"},"aspect":"treatment","top_k":4})", &out) == CDV_OK);
  const json q = json::parse(take(out));
  CHECK(q["results"].size() == 4);
  const std::string doc = q["results"][0]["doc_id"];

  REQUIRE(cdv_service_histogram(w.service, doc.c_str(), "E1", "treatment", &out) == CDV_OK);
  const json h = json::parse(take(out));
  CHECK(h["combined"].size() == h["sentences"].size());

  REQUIRE(cdv_service_health(w.service, &out) == CDV_OK);
  CHECK(json::parse(take(out))["status"] == "ok");

  CHECK(cdv_service_query(w.service, R"({"entity":{"id":"E77"},"aspect":"treatment"})", &out) ==
        CDV_ERR_UNRESOLVABLE);
  CHECK(out == nullptr);
  CHECK(cdv_service_histogram(w.service, "no-such-doc", "E1", "x", &out) == CDV_ERR_NOT_FOUND);
  CHECK(cdv_service_query(w.service, "[", &out) == CDV_ERR_PARSE);
  CHECK(cdv_service_query(nullptr, "{}", &out) == CDV_ERR_INVALID_ARGUMENT);

  int status = 0;
  REQUIRE(cdv_service_request(w.service, "GET", "/aspects", R"({"q":"trea","limit":"1"})", nullptr, &status,
                              &out) == CDV_OK);
  CHECK(status == 200);
  CHECK(json::parse(take(out))["items"] == json::array({"treatment"}));
  REQUIRE(cdv_service_request(w.service, "POST", "/query", nullptr, R"({"entity":{"id":"E404"},"aspect":"x"})", &status,
                              &out) == CDV_OK);
  CHECK(status == 422);
  CHECK(json::parse(take(out))["code"] == "unresolvable_entity");
  REQUIRE(cdv_service_request(w.service, "DELETE", "/health", nullptr, nullptr, &status, &out) == CDV_OK);
  CHECK(status == 405);
  take(out);

  std::uint64_t fp_after = 0;
  REQUIRE(cdv_service_index_fingerprint(w.service, &fp_after) == CDV_OK);
  CHECK(fp_after == fp);
}

TEST_CASE("service refuses a missing artifact directory") {
  cdv_config* c = nullptr;
  REQUIRE(cdv_config_parse(R"({"paths":{"corpus":"c.jsonl","artifacts":"/nonexistent/artifacts"}})", "/tmp", &c) ==
          CDV_OK);
  cdv_service* s = nullptr;
  CHECK(cdv_service_open(c, &s) == CDV_ERR_CONFIG);
  CHECK(s == nullptr);
  cdv_config_free(c);
}
