#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "websed/audio.hpp"
#include "websed/crawler.hpp"
#include "websed/evaluator.hpp"
#include "websed/feedback.hpp"

namespace websed {

/// Returns the canonical samples of a segment, or nullopt if unknown.
using SegmentAudioSource = std::function<std::optional<std::vector<float>>(const std::string& segment_id)>;

/// Audio source over a crawled corpus. Keeps the most recently read video in
/// memory since tasks for one video tend to arrive together.
inline SegmentAudioSource corpus_audio_source(std::filesystem::path corpus_dir, std::vector<CrawledVideo> videos,
                                              std::vector<CorpusSegment> segments) {
  struct State {
    std::filesystem::path dir;
    std::vector<CrawledVideo> videos;
    std::map<std::string, CorpusSegment> segments;
    std::mutex mutex;
    std::size_t cached = SIZE_MAX;
    AudioClip clip;
  };
  auto state = std::make_shared<State>();
  state->dir = std::move(corpus_dir);
  state->videos = std::move(videos);
  for (auto& s : segments) state->segments.emplace(s.segment.segment_id, std::move(s));
  return [state](const std::string& id) -> std::optional<std::vector<float>> {
    const auto it = state->segments.find(id);
    if (it == state->segments.end()) return std::nullopt;
    std::lock_guard lock(state->mutex);
    if (state->cached != it->second.video) {
      state->clip = decode_and_canonicalize(state->dir / state->videos.at(it->second.video).audio_path);
      state->cached = it->second.video;
    }
    const auto span = segment_samples(state->clip, it->second.segment);
    return std::vector<float>(span.begin(), span.end());
  };
}

/// What the precision endpoint evaluates: every classifier's corpus
/// predictions, its class list, and the search-query ground truth.
struct PrecisionContext {
  std::vector<Prediction> predictions;
  std::map<std::string, std::vector<std::string>> class_labels;  // classifier -> labels
  GroundTruthMap query_gt;
  std::size_t default_kmax = 40;
};

/// Precision@K curve for one classifier, or the class-count weighted average
/// over all classifiers when `classifier` is empty.
inline PrecisionCurve precision_curve(const PrecisionContext& ctx, const FeedbackStore& store, GtMode mode,
                                      const std::string& classifier, std::size_t kmax) {
  const auto one = [&](const std::string& name) {
    std::vector<Prediction> own;
    for (const auto& p : ctx.predictions)
      if (p.classifier == name) own.push_back(p);
    const auto gt = mode == GtMode::Query ? ctx.query_gt : store.human_ground_truth(name);
    return evaluate_classifier(own, ctx.class_labels.at(name), gt, mode, kmax, name).curve;
  };
  if (!classifier.empty()) return one(classifier);
  std::vector<PrecisionCurve> curves;
  std::vector<std::size_t> counts;
  for (const auto& [name, labels] : ctx.class_labels) {
    curves.push_back(one(name));
    counts.push_back(labels.size());
  }
  const auto weights = class_count_weights(counts);
  return weighted_average_curve(curves, weights);
}

/// JSON/HTTP front end of the feedback service.
///
///   GET  /api/assignments?evaluator=ID
///   GET  /api/segments/{id}/audio
///   POST /api/votes
///   GET  /api/results/precision?gt=query|human&classifier=NAME&kmax=N
///   GET  /api/progress
class FeedbackServer {
 public:
  FeedbackServer(FeedbackStore& store, PrecisionContext precision, SegmentAudioSource audio)
      : store_(store), precision_(std::move(precision)), audio_(std::move(audio)) {
    mount(server_);
  }

  FeedbackServer(const FeedbackServer&) = delete;
  FeedbackServer& operator=(const FeedbackServer&) = delete;

  httplib::Server& http() { return server_; }

  /// Binds to an ephemeral port and returns it (or -1).
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, status, {{"error", kind}, {"message", message}});
  }

  void mount(httplib::Server& svr) {
    svr.Get("/api/assignments", [this](const httplib::Request& req, httplib::Response& res) {
      const auto evaluator = req.get_param_value("evaluator");
      if (evaluator.empty()) return send_error(res, 400, "BadRequest", "missing evaluator parameter");
      const auto task = store_.next_task(evaluator);
      if (!task) return send_json(res, 200, {{"evaluator_id", evaluator}, {"task", nullptr}});
      send_json(res, 200,
                {{"evaluator_id", evaluator},
                 {"task",
                  {{"segment_id", task->segment_id},
                   {"classifier", task->classifier},
                   {"predicted_class", task->predicted_class},
                   {"audio_url", "/api/segments/" + httplib::detail::encode_url(task->segment_id) + "/audio"}}}});
    });

    svr.Get(R"(/api/segments/([^/]+)/audio)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::optional<std::vector<float>> samples;
      if (store_.has_segment(id)) {
        try {
          samples = audio_(id);
        } catch (const Error& e) {
          return send_error(res, 500, std::string(to_string(e.kind())), e.what());
        }
      }
      if (!samples) return send_error(res, 404, "UnknownSegment", id);
      res.status = 200;
      res.set_content(encode_wav_pcm16(*samples, kCanonicalSampleRate), "audio/wav");
    });

    svr.Post("/api/votes", [this](const httplib::Request& req, httplib::Response& res) {
      VoteRecord vote;
      try {
        vote = vote_from_json(nlohmann::json::parse(req.body));
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, "MalformedBody", e.what());
      } catch (const Error& e) {
        return send_error(res, 400, "MalformedBody", e.what());
      }
      try {
        vote = store_.record_vote(vote);
      } catch (const Error& e) {
        switch (e.kind()) {
          case ErrorKind::DuplicateVote: return send_error(res, 409, "DuplicateVote", e.what());
          case ErrorKind::UnknownAssignment: return send_error(res, 404, "UnknownAssignment", e.what());
          case ErrorKind::MalformedRow: return send_error(res, 400, "MalformedBody", e.what());
          default: return send_error(res, 500, std::string(to_string(e.kind())), e.what());
        }
      }
      const auto agg = store_.aggregate(vote.classifier, vote.segment_id);
      send_json(res, 200,
                {{"accepted", true},
                 {"vote", vote_to_json(vote)},
                 {"aggregate",
                  {{"correct_votes", agg.correct_votes},
                   {"incorrect_votes", agg.incorrect_votes},
                   {"verdict", to_string(agg.verdict)}}}});
    });

    svr.Get("/api/results/precision", [this](const httplib::Request& req, httplib::Response& res) {
      const auto mode = parse_gt_mode(req.has_param("gt") ? req.get_param_value("gt") : "query");
      if (!mode) return send_error(res, 400, "BadRequest", "gt must be query or human");
      std::size_t kmax = precision_.default_kmax;
      if (req.has_param("kmax")) {
        try {
          std::size_t used = 0;
          const auto text = req.get_param_value("kmax");
          const long v = std::stol(text, &used);
          if (used != text.size() || v < 1 || v > 100000) throw std::invalid_argument("range");
          kmax = static_cast<std::size_t>(v);
        } catch (const std::logic_error&) {
          return send_error(res, 400, "BadRequest", "kmax must be a positive integer");
        }
      }
      const auto classifier = req.get_param_value("classifier");
      if (!classifier.empty() && !precision_.class_labels.contains(classifier))
        return send_error(res, 404, "UnknownClassifier", classifier);
      if (precision_.class_labels.empty()) return send_error(res, 404, "UnknownClassifier", "no classifiers loaded");
      try {
        send_json(res, 200, precision_curve(precision_, store_, *mode, classifier, kmax));
      } catch (const Error& e) {
        send_error(res, 500, std::string(to_string(e.kind())), e.what());
      }
    });

    svr.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      const auto p = store_.progress();
      nlohmann::json evaluators = nlohmann::json::object();
      for (const auto& [id, e] : p.evaluators) evaluators[id] = {{"assigned", e.assigned}, {"done", e.done}};
      send_json(res, 200,
                {{"assignments", p.assignments},
                 {"votes", p.votes},
                 {"items", p.items},
                 {"decided", p.decided},
                 {"completion", p.assignments ? static_cast<double>(p.votes) / static_cast<double>(p.assignments) : 0.0},
                 {"evaluators", evaluators}});
    });
  }

  FeedbackStore& store_;
  PrecisionContext precision_;
  SegmentAudioSource audio_;
  httplib::Server server_;
};

}  // namespace websed
