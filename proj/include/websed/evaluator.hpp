#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/csv.hpp"
#include "websed/error.hpp"
#include "websed/model.hpp"
#include "websed/prediction.hpp"

namespace websed {

enum class GtMode { Query, Human };

constexpr std::string_view to_string(GtMode m) { return m == GtMode::Query ? "query" : "human"; }

inline std::optional<GtMode> parse_gt_mode(std::string_view text) {
  if (text == "query") return GtMode::Query;
  if (text == "human") return GtMode::Human;
  return std::nullopt;
}

enum class Verdict { Correct, Incorrect, Pending };

constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "Correct";
    case Verdict::Incorrect: return "Incorrect";
    case Verdict::Pending: return "Pending";
  }
  return "Pending";
}

/// Ground truth for one segment. Query mode compares `label` with the class
/// under evaluation; Human mode counts `verdict == Correct`.
struct GroundTruth {
  std::string label;
  Verdict verdict = Verdict::Pending;
};

using GroundTruthMap = std::unordered_map<std::string, GroundTruth>;

struct PrecisionPoint {
  std::size_t k = 0;
  double precision = 0.0;
  friend bool operator==(const PrecisionPoint&, const PrecisionPoint&) = default;
};

struct PrecisionCurve {
  GtMode gt_mode = GtMode::Query;
  std::string classifier;  // "weighted" for combined curves
  std::vector<PrecisionPoint> points;
};

inline void to_json(nlohmann::json& j, const PrecisionCurve& c) {
  j = {{"gt_mode", to_string(c.gt_mode)}, {"classifier", c.classifier}, {"points", nlohmann::json::array()}};
  for (const auto& p : c.points) j["points"].push_back({{"k", p.k}, {"precision", p.precision}});
}

/// Segments the model assigned to `class_label`, highest confidence first,
/// ties by ascending segment_id, truncated to k.
inline std::vector<std::string> rank_segments(std::span<const Prediction> predictions, std::string_view class_label,
                                              std::size_t k) {
  std::vector<const Prediction*> hits;
  for (const auto& p : predictions)
    if (p.predicted_class == class_label) hits.push_back(&p);
  const auto before = [](const Prediction* a, const Prediction* b) {
    if (a->confidence != b->confidence) return a->confidence > b->confidence;
    return a->segment_id < b->segment_id;
  };
  const std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), before);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(hits[i]->segment_id);
  return out;
}

inline bool is_match(const GroundTruth& gt, std::string_view class_label, GtMode mode) {
  return mode == GtMode::Query ? gt.label == class_label : gt.verdict == Verdict::Correct;
}

/// Fraction of `ranked` whose ground truth matches; 0 for an empty ranking.
inline double precision_at_k(std::span<const std::string> ranked, const GroundTruthMap& gt,
                             std::string_view class_label, GtMode mode) {
  if (ranked.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& id : ranked) {
    const auto it = gt.find(id);
    if (it == gt.end()) throw Error(ErrorKind::MissingGroundTruth, id);
    if (is_match(it->second, class_label, mode)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

/// P@k for k = 1..kmax over one class's ranking. Past the end of a scarce
/// ranking the whole ranking is used.
inline std::vector<double> class_precision_series(std::span<const std::string> ranked, const GroundTruthMap& gt,
                                                  std::string_view class_label, GtMode mode, std::size_t kmax) {
  std::vector<double> out(kmax, 0.0);
  std::size_t hits = 0;
  for (std::size_t k = 1; k <= kmax; ++k) {
    if (k <= ranked.size()) {
      const auto it = gt.find(ranked[k - 1]);
      if (it == gt.end()) throw Error(ErrorKind::MissingGroundTruth, ranked[k - 1]);
      if (is_match(it->second, class_label, mode)) ++hits;
    }
    const std::size_t denom = std::min(k, ranked.size());
    out[k - 1] = denom == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(denom);
  }
  return out;
}

struct ClassCurve {
  std::string class_label;
  std::size_t ranked = 0;
  std::vector<double> precision;  // index k-1
};

struct ClassifierEvaluation {
  std::vector<ClassCurve> per_class;
  PrecisionCurve curve;  // mean over classes with at least one ranked segment
};

/// Per-class and per-classifier Precision@K curves for k = 1..kmax. Only
/// predictions with a ground-truth entry are ranked, so Human mode ranks
/// within the judged evaluation set.
inline ClassifierEvaluation evaluate_classifier(std::span<const Prediction> predictions,
                                                const std::vector<std::string>& class_labels,
                                                const GroundTruthMap& gt, GtMode mode, std::size_t kmax,
                                                std::string classifier) {
  std::vector<Prediction> judged;
  for (const auto& p : predictions) {
    const auto it = gt.find(p.segment_id);
    if (it == gt.end()) continue;
    if (mode == GtMode::Human && it->second.verdict == Verdict::Pending) continue;
    judged.push_back(p);
  }
  ClassifierEvaluation ev;
  ev.curve.gt_mode = mode;
  ev.curve.classifier = std::move(classifier);
  std::vector<double> sum(kmax, 0.0);
  std::size_t contributing = 0;
  for (const auto& label : class_labels) {
    const auto ranked = rank_segments(judged, label, kmax);
    ClassCurve cc{label, ranked.size(), class_precision_series(ranked, gt, label, mode, kmax)};
    if (!ranked.empty()) {
      ++contributing;
      for (std::size_t i = 0; i < kmax; ++i) sum[i] += cc.precision[i];
    }
    ev.per_class.push_back(std::move(cc));
  }
  for (std::size_t k = 1; k <= kmax; ++k)
    ev.curve.points.push_back({k, contributing ? sum[k - 1] / static_cast<double>(contributing) : 0.0});
  return ev;
}

/// Pointwise weighted mean; weights are normalized by their sum.
inline PrecisionCurve weighted_average_curve(std::span<const PrecisionCurve> curves, std::span<const double> weights) {
  if (curves.empty() || curves.size() != weights.size())
    throw Error(ErrorKind::GridMismatch, "need one weight per curve");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw Error(ErrorKind::GridMismatch, "negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::GridMismatch, "weights sum to zero");
  PrecisionCurve out;
  out.gt_mode = curves.front().gt_mode;
  out.classifier = "weighted";
  const auto& grid = curves.front().points;
  for (const auto& c : curves) {
    if (c.points.size() != grid.size()) throw Error(ErrorKind::GridMismatch, c.classifier + ": different k grid");
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (c.points[i].k != grid[i].k) throw Error(ErrorKind::GridMismatch, c.classifier + ": different k grid");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < curves.size(); ++c) acc += weights[c] * curves[c].points[i].precision;
    out.points.push_back({grid[i].k, acc / total});
  }
  return out;
}

/// Class-count weights (50/78, 10/78, 18/78 for the built-in datasets).
inline std::vector<double> class_count_weights(std::span<const std::size_t> class_counts) {
  double total = 0.0;
  for (auto c : class_counts) total += static_cast<double>(c);
  std::vector<double> out;
  for (auto c : class_counts) out.push_back(static_cast<double>(c) / total);
  return out;
}

struct CorpusPrecision {
  std::size_t segments = 0;
  std::size_t matches = 0;
  double precision() const { return segments ? static_cast<double>(matches) / static_cast<double>(segments) : 0.0; }
};

/// Per classifier: share of all its predicted segments (those with a query
/// label) whose predicted class equals the query label.
inline std::map<std::string, CorpusPrecision> corpus_precision(std::span<const Prediction> predictions,
                                                               const GroundTruthMap& query_gt) {
  std::map<std::string, CorpusPrecision> out;
  for (const auto& p : predictions) {
    const auto it = query_gt.find(p.segment_id);
    if (it == query_gt.end()) continue;
    auto& cp = out[p.classifier];
    ++cp.segments;
    if (it->second.label == p.predicted_class) ++cp.matches;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset accuracy

struct AccuracyReport {
  double patch_accuracy = 0.0;
  double clip_accuracy = 0.0;
  std::size_t patches = 0;
  std::size_t clips = 0;
};

/// Patch-level accuracy and clip-level accuracy (argmax of the clip's mean
/// patch probabilities). Rows of `probabilities` align with `labels` and
/// `clip_ids`.
inline AccuracyReport accuracy_from_probabilities(std::span<const std::vector<double>> probabilities,
                                                  std::span<const std::size_t> labels,
                                                  std::span<const std::string> clip_ids) {
  if (probabilities.empty()) throw Error(ErrorKind::EmptyTestSet, "no test patches");
  if (labels.size() != probabilities.size() || clip_ids.size() != probabilities.size())
    throw Error(ErrorKind::ShapeMismatch, "labels and clip ids must align with probabilities");
  AccuracyReport r;
  r.patches = probabilities.size();
  std::size_t correct = 0;
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> clips;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (argmax(probabilities[i]) == labels[i]) ++correct;
    auto& [sum, label] = clips[clip_ids[i]];
    if (sum.empty()) {
      sum.assign(probabilities[i].size(), 0.0);
      label = labels[i];
    }
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += probabilities[i][k];
  }
  r.patch_accuracy = static_cast<double>(correct) / static_cast<double>(r.patches);
  std::size_t clip_correct = 0;
  for (const auto& [id, entry] : clips)
    if (argmax(entry.first) == entry.second) ++clip_correct;
  r.clips = clips.size();
  r.clip_accuracy = static_cast<double>(clip_correct) / static_cast<double>(r.clips);
  return r;
}

/// A normalized patch with its class index and source clip.
struct LabeledPatch {
  FeaturePatch patch;
  std::size_t label = 0;
  std::string clip_id;
};

inline AccuracyReport test_accuracy(const CnnModel& model, std::span<const LabeledPatch> test,
                                    std::size_t batch_size = 128, std::size_t threads = 1) {
  if (test.empty()) throw Error(ErrorKind::EmptyTestSet, "no test patches");
  std::vector<FeaturePatch> patches;
  std::vector<std::size_t> labels;
  std::vector<std::string> clips;
  patches.reserve(test.size());
  for (const auto& t : test) {
    patches.push_back(t.patch);
    labels.push_back(t.label);
    clips.push_back(t.clip_id);
  }
  const auto probs = predict_probabilities(model, patches, batch_size, threads);
  return accuracy_from_probabilities(probs, labels, clips);
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_curves_csv(const std::filesystem::path& path, std::span<const PrecisionCurve> curves,
                             std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "k,precision,gt_mode,classifier\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << p.k << ',' << format_double(p.precision) << ',' << to_string(c.gt_mode) << ','
          << csv::escape(c.classifier) << '\n';
}

inline void write_class_curves_csv(const std::filesystem::path& path, std::string_view classifier,
                                   const ClassifierEvaluation& ev, std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "k,precision,gt_mode,classifier,class_label,ranked\n";
  for (const auto& cc : ev.per_class)
    for (std::size_t i = 0; i < cc.precision.size(); ++i)
      out << (i + 1) << ',' << format_double(cc.precision[i]) << ',' << to_string(ev.curve.gt_mode) << ','
          << csv::escape(classifier) << ',' << csv::escape(cc.class_label) << ',' << cc.ranked << '\n';
}

}  // namespace websed
