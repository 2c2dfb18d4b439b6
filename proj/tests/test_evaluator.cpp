#include <algorithm>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "websed/evaluator.hpp"
#include "websed/vocabulary.hpp"

using namespace websed;

namespace {

struct Fixture {
  std::vector<std::string> labels;
  std::vector<Prediction> predictions;
  GroundTruthMap gt;
};

/// Random predictions over a few classes; confidences come from a small set
/// so ties are common, and some segments have no ground truth.
Fixture random_fixture(SplitMix64& rng) {
  Fixture f;
  const std::size_t classes = 1 + rng.below(4);
  for (std::size_t c = 0; c < classes; ++c) f.labels.push_back("class" + std::to_string(c));
  const std::size_t n = rng.below(40);
  for (std::size_t i = 0; i < n; ++i) {
    Prediction p;
    p.segment_id = "seg" + std::to_string(rng.below(1000)) + "_" + std::to_string(i);
    p.classifier = "clf";
    p.predicted_class = f.labels[rng.below(classes)];
    p.confidence = static_cast<double>(1 + rng.below(5)) / 5.0;
    f.predictions.push_back(p);
    if (rng.below(10) == 0) continue;
    GroundTruth g;
    g.label = f.labels[rng.below(classes)];
    const auto v = rng.below(3);
    g.verdict = v == 0 ? Verdict::Correct : v == 1 ? Verdict::Incorrect : Verdict::Pending;
    f.gt[p.segment_id] = g;
  }
  return f;
}

bool oracle_match(const GroundTruth& g, const std::string& label, GtMode mode) {
  return mode == GtMode::Query ? g.label == label : g.verdict == Verdict::Correct;
}

/// Full sort, then cut: the ranking for one class among judged segments.
std::vector<const Prediction*> oracle_ranking(const Fixture& f, const std::string& label, GtMode mode) {
  std::vector<const Prediction*> all;
  for (const auto& p : f.predictions) {
    const auto it = f.gt.find(p.segment_id);
    if (it == f.gt.end() || p.predicted_class != label) continue;
    if (mode == GtMode::Human && it->second.verdict == Verdict::Pending) continue;
    all.push_back(&p);
  }
  std::sort(all.begin(), all.end(), [](const Prediction* a, const Prediction* b) {
    return std::tie(b->confidence, a->segment_id) < std::tie(a->confidence, b->segment_id);
  });
  return all;
}

}  // namespace

TEST(Ranking, SortsByConfidenceThenSegmentId) {
  std::vector<Prediction> preds = {{"b", "x", {}, "dog", 0, 0.9}, {"a", "x", {}, "dog", 0, 0.9},
                                   {"c", "x", {}, "dog", 0, 0.95}, {"d", "x", {}, "cat", 0, 0.99},
                                   {"e", "x", {}, "dog", 0, 0.1}};
  EXPECT_EQ(rank_segments(preds, "dog", 10), (std::vector<std::string>{"c", "a", "b", "e"}));
  EXPECT_EQ(rank_segments(preds, "dog", 2), (std::vector<std::string>{"c", "a"}));
  EXPECT_TRUE(rank_segments(preds, "bird", 5).empty());
}

TEST(Precision, ScarceRankingUsesItsOwnLength) {
  const GroundTruthMap gt = {{"a", {"dog", Verdict::Pending}}, {"b", {"cat", Verdict::Pending}}};
  const std::vector<std::string> ranked = {"a", "b"};
  const auto s = class_precision_series(ranked, gt, "dog", GtMode::Query, 5);
  EXPECT_EQ(s, (std::vector<double>{1.0, 0.5, 0.5, 0.5, 0.5}));
  EXPECT_EQ(class_precision_series({}, gt, "dog", GtMode::Query, 3), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(precision_at_k(ranked, gt, "dog", GtMode::Query), 0.5);
  const std::vector<std::string> stray = {"zzz"};
  try {
    precision_at_k(stray, gt, "dog", GtMode::Query);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingGroundTruth);
  }
}

TEST(Precision, AgreesWithBruteForceOnRandomFixtures) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = random_fixture(rng);
    const std::size_t kmax = 1 + rng.below(12);
    for (auto mode : {GtMode::Query, GtMode::Human}) {
      const auto ev = evaluate_classifier(f.predictions, f.labels, f.gt, mode, kmax, "clf");
      ASSERT_EQ(ev.per_class.size(), f.labels.size());
      ASSERT_EQ(ev.curve.points.size(), kmax);
      std::vector<double> sum(kmax, 0.0);
      std::size_t contributing = 0;
      for (std::size_t c = 0; c < f.labels.size(); ++c) {
        const auto ranking = oracle_ranking(f, f.labels[c], mode);
        const auto& got = ev.per_class[c];
        ASSERT_EQ(got.ranked, std::min(kmax, ranking.size()));
        for (std::size_t k = 1; k <= kmax; ++k) {
          const std::size_t len = std::min(k, ranking.size());
          std::size_t hits = 0;
          for (std::size_t i = 0; i < len; ++i) hits += oracle_match(f.gt.at(ranking[i]->segment_id), f.labels[c], mode);
          const double want = len ? static_cast<double>(hits) / len : 0.0;
          ASSERT_DOUBLE_EQ(got.precision[k - 1], want) << "trial " << trial << " class " << c << " k " << k;
          sum[k - 1] += want;
        }
        contributing += !ranking.empty();
      }
      for (std::size_t k = 1; k <= kmax; ++k) {
        ASSERT_EQ(ev.curve.points[k - 1].k, k);
        ASSERT_NEAR(ev.curve.points[k - 1].precision, contributing ? sum[k - 1] / contributing : 0.0, 1e-12);
      }
    }
  }
}

TEST(Weighting, ClassCountWeights) {
  const auto set = VocabularySet::builtin();
  std::vector<std::size_t> counts;
  for (auto id : {DatasetId::Esc50, DatasetId::Us8k, DatasetId::Tut}) counts.push_back(set.at(id).class_count());
  EXPECT_EQ(counts, (std::vector<std::size_t>{50, 10, 18}));
  const auto w = class_count_weights(counts);
  EXPECT_NEAR(w[0], 50.0 / 78.0, 1e-12);
  EXPECT_NEAR(w[1], 10.0 / 78.0, 1e-12);
  EXPECT_NEAR(w[2], 18.0 / 78.0, 1e-12);
}

TEST(Weighting, AverageCurveIsPointwise) {
  PrecisionCurve a{GtMode::Query, "esc50", {{1, 1.0}, {2, 0.5}}};
  PrecisionCurve b{GtMode::Query, "us8k", {{1, 0.0}, {2, 0.25}}};
  const std::vector<PrecisionCurve> curves = {a, b};
  const std::vector<double> w = {3.0, 1.0};
  const auto avg = weighted_average_curve(curves, w);
  EXPECT_EQ(avg.classifier, "weighted");
  ASSERT_EQ(avg.points.size(), 2u);
  EXPECT_DOUBLE_EQ(avg.points[0].precision, 0.75);
  EXPECT_DOUBLE_EQ(avg.points[1].precision, (3 * 0.5 + 0.25) / 4.0);
  const std::vector<PrecisionCurve> uneven = {a, {GtMode::Query, "tut", {{1, 0.2}}}};
  EXPECT_THROW(weighted_average_curve(uneven, w), Error);
  const std::vector<double> zeros = {0.0, 0.0};
  EXPECT_THROW(weighted_average_curve(curves, zeros), Error);
}

TEST(CorpusPrecision, OracleAndRandomPredictors) {
  SplitMix64 rng(5);
  const std::vector<std::string> labels = {"a", "b", "c", "d"};
  GroundTruthMap gt;
  std::vector<Prediction> oracle, random;
  std::size_t random_hits = 0;
  for (int i = 0; i < 4000; ++i) {
    const auto id = "s" + std::to_string(i);
    const auto& truth = labels[rng.below(4)];
    gt[id] = {truth, Verdict::Pending};
    oracle.push_back({id, "oracle", {}, truth, 0, 1.0});
    const auto& guess = labels[rng.below(4)];
    random_hits += guess == truth;
    random.push_back({id, "random", {}, guess, 0, 0.25});
  }
  random.push_back({"unlabeled", "random", {}, "a", 0, 0.9});
  std::vector<Prediction> both = oracle;
  both.insert(both.end(), random.begin(), random.end());
  const auto cp = corpus_precision(both, gt);
  EXPECT_EQ(cp.at("oracle").segments, 4000u);
  EXPECT_DOUBLE_EQ(cp.at("oracle").precision(), 1.0);
  EXPECT_EQ(cp.at("random").segments, 4000u);
  EXPECT_EQ(cp.at("random").matches, random_hits);
  EXPECT_NEAR(cp.at("random").precision(), 0.25, 0.03);
}

TEST(CurvesCsv, WritesOneRowPerPoint) {
  websed::testing::TempDir dir("curves");
  const std::vector<PrecisionCurve> curves = {{GtMode::Human, "esc50", {{1, 0.5}, {2, 0.25}}}};
  write_curves_csv(dir / "c.csv", curves, "abcdabcdabcdabcd");
  std::ifstream in(dir / "c.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "# config_hash=abcdabcdabcdabcd\nk,precision,gt_mode,classifier\n1,0.5,human,esc50\n2,0.25,human,esc50\n");
}
