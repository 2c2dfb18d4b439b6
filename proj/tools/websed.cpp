// websed: command-line driver for the crawl / hear / feedback pipeline.
//
//   websed fixture --out DIR               synthetic tone corpus + config.json
//   websed split|featurize|train|crawl|predict|rank|evaluate|serve --config FILE
//   websed run --out DIR                   fixture end to end
//
// Failures print one JSON line on stderr and exit with a code per error kind.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "websed/pipeline.hpp"

namespace {

using namespace websed;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadConfig:
    case ErrorKind::InvalidConfig: return 2;
    case ErrorKind::MissingInput:
    case ErrorKind::MissingFile: return 3;
    default: return 10 + static_cast<int>(kind);
  }
}

int report_failure(const std::string& kind, int code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << std::endl;
  return code;
}

struct Flags {
  std::string config;
  std::string dataset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> kmax;
  std::string gt = "query";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string out = "websed-fixture";
  bool corpus_only = false;
  bool datasets_only = false;
};

/// defaults < config file < WEBSED_* environment < flags
PipelineConfig resolve_config(const Flags& f) {
  std::string file = f.config;
  if (file.empty())
    if (const char* env = std::getenv("WEBSED_CONFIG")) file = env;
  auto cfg = load_config(file, environment_overrides());
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.kmax) cfg.eval.kmax = *f.kmax;
  validate(cfg);
  return cfg;
}

std::optional<DatasetId> dataset_flag(const Flags& f) {
  if (f.dataset.empty()) return std::nullopt;
  const auto ds = parse_dataset_id(f.dataset);
  if (!ds) throw Error(ErrorKind::BadConfig, "unknown dataset '" + f.dataset + "' (esc50, us8k, tut, custom)");
  return ds;
}

GtMode gt_flag(const Flags& f) {
  const auto gt = parse_gt_mode(f.gt);
  if (!gt) throw Error(ErrorKind::BadConfig, "--gt must be query or human");
  return *gt;
}

std::atomic<FeedbackServer*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int serve(const PipelineConfig& cfg, const std::vector<DatasetId>& datasets, const Flags& f) {
  const Workspace ws{cfg.work_dir};
  const auto assignments = prepare_assignments(cfg, datasets, std::cout);
  FeedbackStore store(assignments, cfg.eval.min_votes, ws.votes());
  auto corpus = load_corpus(ws);
  FeedbackServer server(store, load_precision_context(cfg, datasets),
                        corpus_audio_source(ws.corpus_dir(), std::move(corpus.videos), std::move(corpus.segments)));
  if (!server.bind(f.host, f.port))
    throw Error(ErrorKind::BadConfig, "cannot listen on " + f.host + ":" + std::to_string(f.port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving " << assignments.size() << " assignments on http://" << f.host << ":" << f.port << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

int run_fixture_pipeline(const Flags& f) {
  const std::filesystem::path out = f.out;
  const auto paths = fixture::write_tone_fixture(out / "fixture");
  auto cfg = toy_pipeline_config(paths, out / "work");
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.kmax) cfg.eval.kmax = *f.kmax;
  write_config(out / "config.json", cfg);
  const auto datasets = datasets_in_scope(cfg);
  for (auto ds : datasets) {
    run_split(cfg, ds, std::cout);
    run_featurize_dataset(cfg, ds, std::cout);
    run_train(cfg, ds, std::cout);
  }
  run_crawl(cfg, datasets, std::cout);
  run_featurize_corpus(cfg, std::cout);
  for (auto ds : datasets) {
    run_predict(cfg, ds, std::cout);
    run_rank(cfg, ds, std::cout);
  }
  run_evaluate(cfg, datasets, GtMode::Query, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"websed: sound event recognition on crawled web audio"};
  app.require_subcommand(1);
  Flags f;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "pipeline config (JSON); also WEBSED_CONFIG");
    sub->add_option("--dataset", f.dataset, "restrict to one dataset: esc50, us8k, tut or custom");
    sub->add_option("--seed", f.seed, "seed for split, training and assignment");
    sub->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    sub->add_option("--kmax", f.kmax, "largest K for rankings and Precision@K");
  };

  auto* split = app.add_subcommand("split", "stratified 60/20/20 split of each manifest");
  auto* featurize = app.add_subcommand("featurize", "log-mel + delta patches for splits and corpus");
  featurize->add_flag("--corpus-only", f.corpus_only, "only the crawled corpus");
  featurize->add_flag("--datasets-only", f.datasets_only, "only the labeled datasets");
  auto* train = app.add_subcommand("train", "train one CNN per dataset");
  auto* crawl = app.add_subcommand("crawl", "collect '<label> sound' results from corpus_root");
  auto* predict = app.add_subcommand("predict", "classify corpus segments");
  auto* rank = app.add_subcommand("rank", "top-K segments per class");
  auto* evaluate = app.add_subcommand("evaluate", "Precision@K curves");
  evaluate->add_option("--gt", f.gt, "ground truth: query or human")->check(CLI::IsMember({"query", "human"}));
  auto* serve_cmd = app.add_subcommand("serve", "feedback HTTP service");
  serve_cmd->add_option("--port", f.port, "listen port");
  serve_cmd->add_option("--host", f.host, "listen address");
  auto* fixture_cmd = app.add_subcommand("fixture", "write the synthetic tone fixture and its config");
  fixture_cmd->add_option("--out", f.out, "output directory");
  auto* run = app.add_subcommand("run", "fixture -> split -> train -> crawl -> predict -> evaluate");
  run->add_option("--out", f.out, "output directory");
  for (auto* sub : {split, featurize, train, crawl, predict, rank, evaluate, serve_cmd, run}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return report_failure("Usage", 64, e.what());
  }

  try {
    if (fixture_cmd->parsed()) {
      const std::filesystem::path out = f.out;
      const auto paths = fixture::write_tone_fixture(out / "fixture");
      write_config(out / "config.json", toy_pipeline_config(paths, out / "work"));
      std::cout << "fixture written to " << out.string() << "; config " << (out / "config.json").string() << '\n';
      return 0;
    }
    if (run->parsed()) return run_fixture_pipeline(f);

    const auto cfg = resolve_config(f);
    const auto only = dataset_flag(f);
    const auto datasets = datasets_in_scope(cfg, only);
    std::cout << "config_hash " << config_hash(cfg) << '\n';
    if (split->parsed()) {
      for (auto ds : datasets) run_split(cfg, ds, std::cout);
    } else if (featurize->parsed()) {
      if (!f.corpus_only)
        for (auto ds : datasets) run_featurize_dataset(cfg, ds, std::cout);
      if (!f.datasets_only && (f.corpus_only || std::filesystem::exists(Workspace{cfg.work_dir}.inventory())))
        run_featurize_corpus(cfg, std::cout);
    } else if (train->parsed()) {
      for (auto ds : datasets) run_train(cfg, ds, std::cout);
    } else if (crawl->parsed()) {
      run_crawl(cfg, datasets, std::cout);
    } else if (predict->parsed()) {
      for (auto ds : datasets) run_predict(cfg, ds, std::cout);
    } else if (rank->parsed()) {
      for (auto ds : datasets) run_rank(cfg, ds, std::cout);
    } else if (evaluate->parsed()) {
      run_evaluate(cfg, datasets, gt_flag(f), std::cout);
    } else if (serve_cmd->parsed()) {
      return serve(cfg, datasets, f);
    }
    return 0;
  } catch (const Error& e) {
    return report_failure(std::string(to_string(e.kind())), exit_code_for(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_failure("Internal", 1, e.what());
  }
}
