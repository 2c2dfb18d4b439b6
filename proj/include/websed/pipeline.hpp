#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/audio.hpp"
#include "websed/config.hpp"
#include "websed/crawler.hpp"
#include "websed/evaluator.hpp"
#include "websed/features.hpp"
#include "websed/feedback.hpp"
#include "websed/feedback_server.hpp"
#include "websed/fixture.hpp"
#include "websed/manifest.hpp"
#include "websed/model.hpp"
#include "websed/parallel.hpp"
#include "websed/prediction.hpp"
#include "websed/training.hpp"
#include "websed/vocabulary.hpp"

namespace websed {

/// File layout under the work directory.
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path dataset_dir(DatasetId ds) const { return root / std::string(to_string(ds)); }
  std::filesystem::path splits(DatasetId ds) const { return dataset_dir(ds) / "splits.csv"; }
  std::filesystem::path patches(DatasetId ds, Split s) const {
    return dataset_dir(ds) / ("patches_" + std::string(to_string(s)));
  }
  std::filesystem::path model(DatasetId ds) const { return dataset_dir(ds) / "model.bin"; }
  std::filesystem::path training_log(DatasetId ds) const { return dataset_dir(ds) / "training_log.csv"; }
  std::filesystem::path test_report(DatasetId ds) const { return dataset_dir(ds) / "test_accuracy.json"; }

  std::filesystem::path corpus_dir() const { return root / "corpus"; }
  std::filesystem::path inventory() const { return corpus_dir() / "inventory.csv"; }
  std::filesystem::path segments() const { return corpus_dir() / "segments.csv"; }
  std::filesystem::path corpus_patches() const { return corpus_dir() / "patches"; }

  std::filesystem::path predictions(DatasetId ds) const {
    return root / "predictions" / (std::string(to_string(ds)) + ".csv");
  }
  std::filesystem::path rankings(DatasetId ds) const {
    return root / "rankings" / (std::string(to_string(ds)) + ".csv");
  }
  std::filesystem::path curves(GtMode gt) const {
    return root / "eval" / ("curves_" + std::string(to_string(gt)) + ".csv");
  }
  std::filesystem::path class_curves(GtMode gt, DatasetId ds) const {
    return root / "eval" / ("class_curves_" + std::string(to_string(gt)) + "_" + std::string(to_string(ds)) + ".csv");
  }
  std::filesystem::path corpus_precision() const { return root / "eval" / "corpus_precision.csv"; }
  std::filesystem::path assignments() const { return root / "feedback" / "assignments.csv"; }
  std::filesystem::path votes() const { return root / "feedback" / "votes.jsonl"; }
};

inline void require_input(const std::filesystem::path& path, std::string_view what) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::MissingInput, std::string(what) + " not found: " + path.string());
}

/// Built-in vocabularies plus label files from the config (which replace a
/// built-in of the same dataset).
inline VocabularySet pipeline_vocabularies(const PipelineConfig& cfg) {
  auto set = VocabularySet::builtin();
  for (const auto& [name, file] : cfg.vocabularies) {
    const auto ds = parse_dataset_id(name);
    if (!ds) throw Error(ErrorKind::BadConfig, "unknown dataset in vocabularies: " + name);
    require_input(file, "vocabulary file");
    set.put(load_vocabulary_file(file, *ds));
  }
  return set;
}

/// Datasets the run covers: `only` if given, otherwise every dataset with a
/// manifest in the config.
inline std::vector<DatasetId> datasets_in_scope(const PipelineConfig& cfg, std::optional<DatasetId> only = {}) {
  if (only) return {*only};
  std::set<DatasetId> out;
  for (const auto& [name, file] : cfg.manifests) {
    const auto ds = parse_dataset_id(name);
    if (!ds) throw Error(ErrorKind::BadConfig, "unknown dataset in manifests: " + name);
    out.insert(*ds);
  }
  if (out.empty()) throw Error(ErrorKind::BadConfig, "no datasets configured (manifests is empty)");
  return {out.begin(), out.end()};
}

inline std::filesystem::path manifest_path(const PipelineConfig& cfg, DatasetId ds) {
  const auto it = cfg.manifests.find(std::string(to_string(ds)));
  if (it == cfg.manifests.end())
    throw Error(ErrorKind::BadConfig, "no manifest configured for dataset " + std::string(to_string(ds)));
  require_input(it->second, "manifest");
  return it->second;
}

inline std::size_t effective_threads(const PipelineConfig& cfg) {
  return cfg.threads == 0 ? default_thread_count() : cfg.threads;
}

/// Patches of a whole recording, named by segment id: patch p covers the
/// same samples as segment p of the recording.
inline std::vector<FeaturePatch> featurize_recording(std::span<const float> samples, const FeatureConfig& cfg,
                                                     const MelFilterbank& fb, std::string_view source_id) {
  auto patches = extract_patches(samples, cfg, fb, source_id);
  for (std::size_t p = 0; p < patches.size(); ++p) patches[p].segment_id = make_segment_id(source_id, p);
  return patches;
}

// ---------------------------------------------------------------------------
// split

inline std::vector<SplitAssignment> run_split(const PipelineConfig& cfg, DatasetId ds, std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  auto entries = load_manifest(manifest_path(cfg, ds), pipeline_vocabularies(cfg));
  std::erase_if(entries, [&](const ClipManifestEntry& e) { return e.dataset != ds; });
  const auto splits = split_dataset(entries, cfg.seed);
  write_splits(ws.splits(ds), splits, config_hash(cfg));
  std::size_t counts[3] = {};
  for (const auto& s : splits) ++counts[static_cast<int>(s.split)];
  log << "split " << to_string(ds) << ": train " << counts[0] << ", val " << counts[1] << ", test " << counts[2]
      << " -> " << ws.splits(ds).string() << '\n';
  return splits;
}

// ---------------------------------------------------------------------------
// featurize

/// Featurizes the labeled clips of one dataset into one patch cache per
/// split. Clips shorter than one segment are zero-padded to one segment.
inline void run_featurize_dataset(const PipelineConfig& cfg, DatasetId ds, std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  require_input(ws.splits(ds), "splits (run split first)");
  auto entries = load_manifest(manifest_path(cfg, ds), pipeline_vocabularies(cfg));
  std::map<std::string, const ClipManifestEntry*> by_id;
  for (const auto& e : entries) by_id[e.clip_id] = &e;
  const auto splits = read_splits(ws.splits(ds));
  const auto fb = build_mel_filterbank(cfg.features);
  const std::size_t window = cfg.features.patch_samples();

  std::vector<std::vector<FeaturePatch>> per_clip(splits.size());
  parallel_for(splits.size(), effective_threads(cfg), [&](std::size_t i) {
    const auto it = by_id.find(splits[i].clip_id);
    if (it == by_id.end()) throw Error(ErrorKind::MissingInput, "clip " + splits[i].clip_id + " not in manifest");
    auto clip = decode_and_canonicalize(it->second->file_path, cfg.features.sample_rate);
    if (clip.samples.size() < window) clip.samples.resize(window, 0.0f);
    per_clip[i] = featurize_recording(clip.samples, cfg.features, fb, splits[i].clip_id);
  });

  const auto hash = config_hash(cfg);
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    PatchCache cache;
    cache.config_hash = hash;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i].split != s) continue;
      for (auto& p : per_clip[i]) {
        cache.entries.push_back({p.segment_id, by_id.at(splits[i].clip_id)->label, splits[i].clip_id});
        cache.patches.push_back(std::move(p));
      }
    }
    write_patch_cache(ws.patches(ds, s), cache);
    log << "featurize " << to_string(ds) << " " << to_string(s) << ": " << cache.patches.size() << " patches\n";
  }
}

/// Featurizes every crawled video; one patch per corpus segment.
inline void run_featurize_corpus(const PipelineConfig& cfg, std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  require_input(ws.inventory(), "corpus inventory (run crawl first)");
  const auto videos = read_corpus_inventory(ws.inventory());
  const auto fb = build_mel_filterbank(cfg.features);
  std::vector<std::vector<FeaturePatch>> per_video(videos.size());
  parallel_for(videos.size(), effective_threads(cfg), [&](std::size_t i) {
    const auto clip = decode_and_canonicalize(ws.corpus_dir() / videos[i].audio_path, cfg.features.sample_rate);
    per_video[i] = featurize_recording(clip.samples, cfg.features, fb, videos[i].entry_id());
  });
  PatchCache cache;
  cache.config_hash = config_hash(cfg);
  for (std::size_t i = 0; i < videos.size(); ++i)
    for (auto& p : per_video[i]) {
      cache.entries.push_back({p.segment_id, videos[i].query.label, videos[i].entry_id()});
      cache.patches.push_back(std::move(p));
    }
  write_patch_cache(ws.corpus_patches(), cache);
  log << "featurize corpus: " << videos.size() << " videos, " << cache.patches.size() << " segments\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  AccuracyReport test;
  double seconds = 0.0;
};

inline std::vector<LabeledPatch> labeled_patches(PatchCache cache, const LabelVocabulary& vocab,
                                                 const NormStats& norm) {
  normalize(cache.patches, norm);
  std::vector<LabeledPatch> out;
  out.reserve(cache.patches.size());
  for (std::size_t i = 0; i < cache.patches.size(); ++i) {
    const auto idx = vocab.index_of(cache.entries[i].label);
    if (!idx) throw Error(ErrorKind::UnknownLabel, cache.entries[i].label);
    out.push_back({std::move(cache.patches[i]), *idx, cache.entries[i].clip_id});
  }
  return out;
}

inline CnnConfig cnn_config_for(const PipelineConfig& cfg, const LabelVocabulary& vocab) {
  CnnConfig c = cfg.cnn;
  c.num_classes = static_cast<int>(vocab.class_count());
  return c;
}

inline TrainSummary run_train(const PipelineConfig& cfg, DatasetId ds, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const Workspace ws{cfg.work_dir};
  for (Split s : {Split::Train, Split::Val, Split::Test})
    require_input(ws.patches(ds, s).string() + ".bin", "patch cache (run featurize first)");
  const auto vocab = pipeline_vocabularies(cfg).at(ds);
  auto train_cache = read_patch_cache(ws.patches(ds, Split::Train));
  if (train_cache.patches.empty()) throw Error(ErrorKind::EmptyTrainingSet, std::string(to_string(ds)));
  const auto norm = compute_norm_stats(train_cache.patches);
  const auto train_set = labeled_patches(std::move(train_cache), vocab, norm);
  const auto val_set = labeled_patches(read_patch_cache(ws.patches(ds, Split::Val)), vocab, norm);
  const auto test_set = labeled_patches(read_patch_cache(ws.patches(ds, Split::Test)), vocab, norm);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.threads = effective_threads(cfg);
  const auto result = train(train_set, val_set, tc, cnn_config_for(cfg, vocab), vocab, norm, [&](const EpochLog& e) {
    log << "train " << to_string(ds) << " epoch " << e.epoch << ": loss " << e.train_loss << ", val_acc "
        << e.val_acc << '\n';
  });
  const auto hash = config_hash(cfg);
  save_model(ws.model(ds), result.model);
  write_training_log(ws.training_log(ds), result.log, hash);

  TrainSummary summary;
  summary.best_epoch = result.best_epoch;
  summary.epochs_run = result.log.size();
  summary.test = test_accuracy(result.model, test_set, cfg.eval.predict_batch, tc.threads);
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(ws.test_report(ds)) << nlohmann::json{{"config_hash", hash},
                                                      {"dataset", to_string(ds)},
                                                      {"best_epoch", summary.best_epoch},
                                                      {"patch_accuracy", summary.test.patch_accuracy},
                                                      {"clip_accuracy", summary.test.clip_accuracy},
                                                      {"test_patches", summary.test.patches},
                                                      {"test_clips", summary.test.clips}}
                                                         .dump(2)
                                                << '\n';
  log << "train " << to_string(ds) << ": best epoch " << summary.best_epoch << ", test patch acc "
      << summary.test.patch_accuracy << ", clip acc " << summary.test.clip_accuracy << '\n';
  return summary;
}

// ---------------------------------------------------------------------------
// crawl

inline CrawlReport run_crawl(const PipelineConfig& cfg, const std::vector<DatasetId>& datasets, Fetcher& fetcher,
                             std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  const auto vocabularies = pipeline_vocabularies(cfg);
  std::vector<QueryRecord> queries;
  for (auto ds : datasets) {
    auto q = build_queries(vocabularies.at(ds));
    queries.insert(queries.end(), q.begin(), q.end());
  }
  CrawlOptions opts;
  opts.corpus_dir = ws.corpus_dir();
  opts.limit_per_query = cfg.crawl_limit;
  opts.sample_rate = cfg.features.sample_rate;
  auto report = crawl(queries, fetcher, opts);
  const auto hash = config_hash(cfg);
  write_corpus_inventory(ws.inventory(), report.videos, hash);
  const auto segments = segment_corpus(report.videos, ws.corpus_dir(), cfg.features.patch_samples(),
                                       cfg.features.patch_stride_frames * cfg.features.hop);
  std::vector<Segment> flat;
  for (const auto& s : segments) flat.push_back(s.segment);
  write_segment_inventory(ws.segments(), flat, hash);
  for (const auto& [query, st] : report.per_query)
    log << "crawl '" << query << "': fetched " << st.fetched << ", accepted " << st.accepted << ", rejected "
        << st.rejected_duration << ", failed " << st.failed << '\n';
  for (const auto& e : report.errors) log << "crawl error: " << e << '\n';
  log << "crawl: " << report.videos.size() << " videos, " << flat.size() << " segments\n";
  return report;
}

inline CrawlReport run_crawl(const PipelineConfig& cfg, const std::vector<DatasetId>& datasets, std::ostream& log) {
  if (cfg.corpus_root.empty()) throw Error(ErrorKind::BadConfig, "corpus_root is not set");
  require_input(cfg.corpus_root, "corpus root");
  LocalDirectoryFetcher fetcher(cfg.corpus_root);
  return run_crawl(cfg, datasets, fetcher, log);
}

// ---------------------------------------------------------------------------
// predict / rank

/// Scores the corpus segments that were crawled with this dataset's queries.
inline std::vector<Prediction> run_predict(const PipelineConfig& cfg, DatasetId ds, std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  require_input(ws.model(ds), "model (run train first)");
  require_input(ws.corpus_patches().string() + ".bin", "corpus patches (run featurize first)");
  const auto model = load_model(ws.model(ds));
  const auto videos = read_corpus_inventory(ws.inventory());
  std::set<std::string> own;
  for (const auto& v : videos)
    if (v.query.dataset == ds) own.insert(v.entry_id());
  auto cache = read_patch_cache(ws.corpus_patches());
  std::vector<FeaturePatch> patches;
  for (std::size_t i = 0; i < cache.patches.size(); ++i)
    if (own.contains(cache.entries[i].clip_id)) patches.push_back(std::move(cache.patches[i]));
  normalize(patches, model.norm);
  const auto preds = predict_segments(model, patches, cfg.eval.predict_batch, effective_threads(cfg));
  write_predictions_csv(ws.predictions(ds), preds, config_hash(cfg));
  log << "predict " << to_string(ds) << ": " << preds.size() << " segments -> " << ws.predictions(ds).string()
      << '\n';
  return preds;
}

inline void run_rank(const PipelineConfig& cfg, DatasetId ds, std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  require_input(ws.predictions(ds), "predictions (run predict first)");
  const auto preds = read_predictions_csv(ws.predictions(ds));
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) by_id[p.segment_id] = &p;
  const auto path = ws.rankings(ds);
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << "# config_hash=" << config_hash(cfg) << '\n' << "classifier,class_label,rank,segment_id,confidence\n";
  std::size_t rows = 0;
  const auto vocab = pipeline_vocabularies(cfg).at(ds);
  for (const auto& label : vocab.labels()) {
    const auto ranked = rank_segments(preds, label, cfg.eval.kmax);
    for (std::size_t r = 0; r < ranked.size(); ++r, ++rows)
      out << csv::join({std::string(to_string(ds)), label, std::to_string(r + 1), ranked[r],
                        format_double(by_id.at(ranked[r])->confidence)})
          << '\n';
  }
  log << "rank " << to_string(ds) << ": " << rows << " rows -> " << path.string() << '\n';
}

// ---------------------------------------------------------------------------
// evaluate

inline GroundTruthMap load_query_ground_truth(const Workspace& ws) {
  require_input(ws.inventory(), "corpus inventory");
  require_input(ws.segments(), "segment inventory");
  const auto videos = read_corpus_inventory(ws.inventory());
  std::map<std::string, std::string> label_of;
  for (const auto& v : videos) label_of[v.entry_id()] = query_ground_truth(v);
  GroundTruthMap gt;
  for (const auto& s : read_segment_inventory(ws.segments())) {
    const auto it = label_of.find(s.source_id);
    if (it == label_of.end()) throw Error(ErrorKind::MissingGroundTruth, s.segment_id);
    gt[s.segment_id] = {it->second, Verdict::Pending};
  }
  return gt;
}

/// Creates the assignment table on first use; afterwards it is read back so
/// that votes stay valid across restarts.
inline std::vector<Assignment> prepare_assignments(const PipelineConfig& cfg, const std::vector<DatasetId>& datasets,
                                                   std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  if (std::filesystem::exists(ws.assignments())) return read_assignments_csv(ws.assignments());
  std::vector<Prediction> preds;
  for (auto ds : datasets) {
    require_input(ws.predictions(ds), "predictions (run predict first)");
    auto p = read_predictions_csv(ws.predictions(ds));
    preds.insert(preds.end(), p.begin(), p.end());
  }
  const auto items = select_evaluation_set(preds, cfg.eval.k_per_class);
  const auto assignments = assign(items, cfg.eval.evaluators, cfg.eval.min_votes, cfg.seed);
  write_assignments_csv(ws.assignments(), assignments, config_hash(cfg));
  log << "feedback: " << items.size() << " segments, " << assignments.size() << " assignments\n";
  return assignments;
}

struct EvaluationSummary {
  std::vector<PrecisionCurve> curves;  // per classifier, then "weighted"
  std::map<std::string, CorpusPrecision> corpus;
};

inline EvaluationSummary run_evaluate(const PipelineConfig& cfg, const std::vector<DatasetId>& datasets, GtMode gt_mode,
                                      std::ostream& log) {
  const Workspace ws{cfg.work_dir};
  const auto vocabularies = pipeline_vocabularies(cfg);
  const auto hash = config_hash(cfg);
  GroundTruthMap query_gt;
  std::optional<FeedbackStore> store;
  if (gt_mode == GtMode::Query) {
    query_gt = load_query_ground_truth(ws);
  } else {
    std::optional<std::filesystem::path> log_path;
    if (std::filesystem::exists(ws.votes())) log_path = ws.votes();
    store.emplace(prepare_assignments(cfg, datasets, log), cfg.eval.min_votes, log_path);
  }

  EvaluationSummary summary;
  std::vector<std::size_t> class_counts;
  std::vector<Prediction> all_preds;
  for (auto ds : datasets) {
    require_input(ws.predictions(ds), "predictions (run predict first)");
    const auto preds = read_predictions_csv(ws.predictions(ds));
    const auto name = std::string(to_string(ds));
    const auto& labels = vocabularies.at(ds).labels();
    const auto gt = gt_mode == GtMode::Query ? query_gt : store->human_ground_truth(name);
    const auto ev = evaluate_classifier(preds, labels, gt, gt_mode, cfg.eval.kmax, name);
    write_class_curves_csv(ws.class_curves(gt_mode, ds), name, ev, hash);
    summary.curves.push_back(ev.curve);
    class_counts.push_back(labels.size());
    all_preds.insert(all_preds.end(), preds.begin(), preds.end());
    log << "evaluate " << name << " (" << to_string(gt_mode) << "): P@1 " << ev.curve.points.front().precision
        << ", P@" << cfg.eval.kmax << " " << ev.curve.points.back().precision << '\n';
  }
  const auto weights = class_count_weights(class_counts);
  summary.curves.push_back(weighted_average_curve(std::span(summary.curves), weights));
  write_curves_csv(ws.curves(gt_mode), summary.curves, hash);

  if (gt_mode == GtMode::Query) {
    summary.corpus = corpus_precision(all_preds, query_gt);
    std::ofstream out(ws.corpus_precision(), std::ios::binary);
    out << "# config_hash=" << hash << '\n' << "classifier,segments,matches,precision\n";
    for (const auto& [name, cp] : summary.corpus) {
      out << csv::escape(name) << ',' << cp.segments << ',' << cp.matches << ',' << format_double(cp.precision())
          << '\n';
      log << "corpus precision " << name << ": " << cp.precision() << " (" << cp.matches << "/" << cp.segments
          << ")\n";
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// serve

struct LoadedCorpus {
  std::vector<CrawledVideo> videos;
  std::vector<CorpusSegment> segments;
};

inline LoadedCorpus load_corpus(const Workspace& ws) {
  require_input(ws.inventory(), "corpus inventory (run crawl first)");
  require_input(ws.segments(), "segment inventory (run crawl first)");
  LoadedCorpus c;
  c.videos = read_corpus_inventory(ws.inventory());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c.videos.size(); ++i) index[c.videos[i].entry_id()] = i;
  for (auto& s : read_segment_inventory(ws.segments())) {
    const auto it = index.find(s.source_id);
    if (it == index.end()) throw Error(ErrorKind::CorruptFile, "segment " + s.segment_id + " has no video");
    c.segments.push_back({std::move(s), it->second});
  }
  return c;
}

inline PrecisionContext load_precision_context(const PipelineConfig& cfg, const std::vector<DatasetId>& datasets) {
  const Workspace ws{cfg.work_dir};
  const auto vocabularies = pipeline_vocabularies(cfg);
  PrecisionContext ctx;
  ctx.default_kmax = cfg.eval.kmax;
  ctx.query_gt = load_query_ground_truth(ws);
  for (auto ds : datasets) {
    require_input(ws.predictions(ds), "predictions (run predict first)");
    auto p = read_predictions_csv(ws.predictions(ds));
    ctx.predictions.insert(ctx.predictions.end(), p.begin(), p.end());
    ctx.class_labels[std::string(to_string(ds))] = vocabularies.at(ds).labels();
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// bundled fixture

/// Config for the synthetic tone fixture: the default feature pipeline and
/// convolutional stack, with a narrow fully connected part and small batches
/// so that 108 training clips converge within 30 epochs on one core.
inline PipelineConfig toy_pipeline_config(const fixture::FixturePaths& paths, const std::filesystem::path& work_dir) {
  PipelineConfig cfg;
  cfg.work_dir = work_dir.string();
  cfg.manifests["custom"] = paths.manifest.string();
  cfg.vocabularies["custom"] = paths.vocabulary.string();
  cfg.corpus_root = paths.crawl_root.string();
  cfg.cnn.fc_width = 64;
  cfg.train.batch_size = 12;
  cfg.train.learning_rate = 0.002;
  cfg.train.epochs = 30;
  cfg.train.early_stop_patience = 0;
  cfg.eval.kmax = 10;
  cfg.eval.k_per_class = 10;
  return cfg;
}

inline void write_config(const std::filesystem::path& path, const PipelineConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << nlohmann::json(cfg).dump(2) << '\n';
}

}  // namespace websed
