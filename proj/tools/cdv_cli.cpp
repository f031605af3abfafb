// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cdv/cdv.h"
#include "json.hpp"

using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "run seed; re-derives all stage seeds");
  cmd->add_option("--out", c.out, "artifact directory (overrides paths.artifacts)");
  cmd->add_flag("-q,--quiet", c.quiet, "suppress progress output");
}

void log_line(const char* message, void* user) {
  if (user && *static_cast<bool*>(user)) return;
  std::cerr << "[cdv] " << message << '\n';
}

struct Failure {
  cdv_status status;
};

void check(cdv_status s) {
  if (s != CDV_OK) throw Failure{s};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  cdv_string_free(s);
  return out;
}

class Config {
 public:
  explicit Config(const Common& c) {
    check(cdv_config_load(c.config.c_str(), &handle_));
    if (c.seed) check(cdv_config_set_seed(handle_, *c.seed));
    if (!c.out.empty()) check(cdv_config_set_artifacts(handle_, c.out.c_str()));
  }
  ~Config() { cdv_config_free(handle_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
  cdv_config* get() const { return handle_; }

 private:
  cdv_config* handle_ = nullptr;
};

class Service {
 public:
  explicit Service(const Config& config) { check(cdv_service_open(config.get(), &handle_)); }
  ~Service() { cdv_service_free(handle_); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;
  const cdv_service* get() const { return handle_; }

 private:
  cdv_service* handle_ = nullptr;
};

void print_results(const json& summary) {
  if (!summary.contains("results")) return;
  std::printf("%-8s %-12s %8s %8s %8s %8s\n", "model", "dataset", "R@1", "R@10", "MAP", "queries");
  for (const auto& r : summary["results"]) {
    std::printf("%-8s %-12s %8.2f %8.2f %8.2f %8d\n", r["model"].get<std::string>().c_str(),
                r["dataset"].get<std::string>().c_str(), r["r1"].get<double>(), r["r10"].get<double>(),
                r["map"].get<double>(), r["n_queries"].get<int>());
  }
  std::printf("report: %s\n", summary["report"].get<std::string>().c_str());
}

int run_stage(const Common& c, const char* stage) {
  Config config(c);
  char* out = nullptr;
  bool quiet = c.quiet;
  check(cdv_run_stage(config.get(), stage, log_line, &quiet, &out));
  print_results(json::parse(take(out)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured entity/aspect passage retrieval with contextual discourse vectors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cdv_version()));

  Common common;
  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {
      {"train-embeddings", "train skip-gram word vectors (or load pretrained ones)"},
      {"train-entity", "train the entity encoder and build the entity space"},
      {"train-aspect", "train the aspect encoder and build the aspect space"},
      {"train-cdv", "train the discourse model"},
      {"index", "encode the corpus and write the sentence index"},
      {"evaluate", "run the re-ranking evaluation and write report.tsv"},
      {"run", "all stages in order"},
  };
  std::string selected_stage;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    cmd->callback([&selected_stage, name = s.name] { selected_stage = name; });
  }

  std::string entity_id, mention, aspect, doc_id;
  std::size_t top_k = 10;
  auto* query = app.add_subcommand("query", "answer one structured query against the index");
  add_common(query, common);
  query->add_option("--entity", entity_id, "entity id");
  query->add_option("--mention", mention, "entity mention, used when the id is unknown");
  query->add_option("--aspect", aspect, "aspect, e.g. treatment")->required();
  query->add_option("--top-k", top_k, "number of passages")->check(CLI::Range(1, 1000));

  auto* histogram = app.add_subcommand("histogram", "per-sentence scores of one document");
  add_common(histogram, common);
  histogram->add_option("--doc", doc_id, "document id")->required();
  histogram->add_option("--entity", entity_id, "entity id or mention")->required();
  histogram->add_option("--aspect", aspect, "aspect")->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4;
  auto* serve = app.add_subcommand("serve", "serve the HTTP query API");
  add_common(serve, common);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));

  std::string synthetic_dir;
  std::uint64_t synthetic_seed = 2024;
  auto* make = app.add_subcommand("make-synthetic", "write a synthetic corpus, knowledge base and config");
  make->add_option("--out", synthetic_dir, "target directory")->required();
  make->add_option("--seed", synthetic_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!selected_stage.empty()) {
      return run_stage(common, selected_stage == "run" ? "all" : selected_stage.c_str());
    }
    if (query->parsed()) {
      if (entity_id.empty() && mention.empty()) {
        std::cerr << "error: --entity or --mention is required\n";
        return 2;
      }
      Config config(common);
      Service service(config);
      json request = {{"entity", json::object()}, {"aspect", aspect}, {"top_k", top_k}};
      if (!entity_id.empty()) request["entity"]["id"] = entity_id;
      if (!mention.empty()) request["entity"]["mention"] = mention;
      char* out = nullptr;
      check(cdv_service_query(service.get(), request.dump().c_str(), &out));
      std::cout << json::parse(take(out)).dump(2) << '\n';
      return 0;
    }
    if (histogram->parsed()) {
      Config config(common);
      Service service(config);
      char* out = nullptr;
      check(cdv_service_histogram(service.get(), doc_id.c_str(), entity_id.c_str(), aspect.c_str(), &out));
      std::cout << json::parse(take(out)).dump(2) << '\n';
      return 0;
    }
    if (serve->parsed()) {
      Config config(common);
      Service service(config);
      bool quiet = common.quiet;
      check(cdv_serve(service.get(), host.c_str(), port, threads, log_line, &quiet));
      return 0;
    }
    if (make->parsed()) {
      check(cdv_synthetic_write(synthetic_dir.c_str(), synthetic_seed, nullptr));
      std::cout << "wrote synthetic data to " << synthetic_dir << "\n";
      return 0;
    }
  } catch (const Failure& f) {
    std::cerr << "error (" << cdv_status_name(f.status) << "): " << cdv_last_error() << '\n';
    return 1;
  }
  return 0;
}
