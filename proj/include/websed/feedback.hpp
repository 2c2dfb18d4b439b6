#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/csv.hpp"
#include "websed/error.hpp"
#include "websed/evaluator.hpp"
#include "websed/prediction.hpp"
#include "websed/random.hpp"

namespace websed {

/// A (classifier, segment) pair put in front of human evaluators. The same
/// segment can appear once per classifier since each asks about a different
/// predicted class.
struct EvaluationItem {
  std::string segment_id;
  std::string classifier;
  std::string predicted_class;

  auto key() const { return std::pair{classifier, segment_id}; }
  friend bool operator==(const EvaluationItem&, const EvaluationItem&) = default;
};

/// Top `k_per_class` segments of every predicted class, per classifier.
/// Output order: classifier (ascending), class (ascending), rank.
inline std::vector<EvaluationItem> select_evaluation_set(std::span<const Prediction> predictions,
                                                         std::size_t k_per_class = 40) {
  std::map<std::string, std::vector<Prediction>> by_classifier;
  for (const auto& p : predictions) by_classifier[p.classifier].push_back(p);
  std::vector<EvaluationItem> out;
  for (const auto& [classifier, preds] : by_classifier) {
    std::set<std::string> classes;
    for (const auto& p : preds) classes.insert(p.predicted_class);
    for (const auto& label : classes) {
      std::set<std::string> seen;
      for (auto& id : rank_segments(preds, label, preds.size())) {
        if (seen.size() == k_per_class) break;
        if (seen.insert(id).second) out.push_back({id, classifier, label});
      }
    }
  }
  return out;
}

struct Assignment {
  EvaluationItem item;
  std::string evaluator_id;
};

inline constexpr std::size_t kDefaultMinVotes = 3;

/// Gives every item to exactly `min_votes` distinct evaluators. Evaluators
/// and items are shuffled with `seed`, then the k-th item in shuffled order
/// takes evaluators (k*m .. k*m+m-1) mod E, so loads differ by at most one.
inline std::vector<Assignment> assign(std::span<const EvaluationItem> items, std::vector<std::string> evaluators,
                                      std::size_t min_votes, std::uint64_t seed) {
  std::sort(evaluators.begin(), evaluators.end());
  if (std::adjacent_find(evaluators.begin(), evaluators.end()) != evaluators.end())
    throw Error(ErrorKind::InvalidConfig, "duplicate evaluator id");
  if (min_votes == 0) throw Error(ErrorKind::InvalidConfig, "min_votes must be >= 1");
  if (evaluators.size() < min_votes)
    throw Error(ErrorKind::NotEnoughEvaluators, std::to_string(evaluators.size()) + " evaluators for " +
                                                    std::to_string(min_votes) + " votes per segment");
  SplitMix64 rng(seed);
  rng.shuffle(evaluators.begin(), evaluators.end());
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  const std::size_t E = evaluators.size();
  std::vector<Assignment> out;
  out.reserve(items.size() * min_votes);
  for (std::size_t k = 0; k < order.size(); ++k)
    for (std::size_t v = 0; v < min_votes; ++v)
      out.push_back({items[order[k]], evaluators[(k * min_votes + v) % E]});
  return out;
}

// Assignment table: segment_id,classifier,predicted_class,evaluator_id

inline void write_assignments_csv(const std::filesystem::path& path, std::span<const Assignment> assignments,
                                  std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "segment_id,classifier,predicted_class,evaluator_id\n";
  for (const auto& a : assignments)
    out << csv::join({a.item.segment_id, a.item.classifier, a.item.predicted_class, a.evaluator_id}) << '\n';
}

inline std::vector<Assignment> read_assignments_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  csv::require_header(table, {"segment_id", "classifier", "predicted_class", "evaluator_id"}, path);
  std::vector<Assignment> out;
  for (const auto& row : table.rows) {
    if (row.fields.size() < 4)
      throw Error(ErrorKind::MalformedRow, path.string() + ": line " + std::to_string(row.line_no));
    out.push_back({{row.fields[0], row.fields[1], row.fields[2]}, row.fields[3]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Votes

struct VoteRecord {
  std::string segment_id;
  std::string classifier;
  std::string evaluator_id;
  bool correct = false;
  std::int64_t ts = 0;  // UTC seconds
};

inline std::int64_t utc_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

inline nlohmann::json vote_to_json(const VoteRecord& v) {
  return {{"segment_id", v.segment_id},
          {"classifier", v.classifier},
          {"evaluator_id", v.evaluator_id},
          {"verdict", v.correct ? "Correct" : "Incorrect"},
          {"ts", v.ts}};
}

/// Parses a vote; throws MalformedRow on missing or ill-typed fields.
/// `classifier` may be omitted when the segment is assigned under only one
/// classifier (resolved by the store); `ts` defaults to now.
inline VoteRecord vote_from_json(const nlohmann::json& j) {
  const auto bad = [](const std::string& why) { return Error(ErrorKind::MalformedRow, "vote: " + why); };
  if (!j.is_object()) throw bad("not an object");
  VoteRecord v;
  for (const char* field : {"segment_id", "evaluator_id", "verdict"})
    if (!j.contains(field) || !j[field].is_string()) throw bad(std::string("missing string field ") + field);
  v.segment_id = j["segment_id"].get<std::string>();
  v.evaluator_id = j["evaluator_id"].get<std::string>();
  if (v.segment_id.empty() || v.evaluator_id.empty()) throw bad("empty id");
  const auto verdict = j["verdict"].get<std::string>();
  if (verdict == "Correct")
    v.correct = true;
  else if (verdict != "Incorrect")
    throw bad("verdict must be Correct or Incorrect");
  if (j.contains("classifier")) {
    if (!j["classifier"].is_string()) throw bad("classifier must be a string");
    v.classifier = j["classifier"].get<std::string>();
  }
  if (j.contains("ts")) {
    if (!j["ts"].is_number_integer()) throw bad("ts must be an integer");
    v.ts = j["ts"].get<std::int64_t>();
  } else {
    v.ts = utc_now();
  }
  return v;
}

struct AggregatedJudgment {
  std::string segment_id;
  std::string classifier;
  std::size_t correct_votes = 0;
  std::size_t incorrect_votes = 0;
  Verdict verdict = Verdict::Pending;
};

/// Majority verdict once at least `min_votes` votes are in.
inline Verdict majority_verdict(std::size_t correct, std::size_t incorrect, std::size_t min_votes) {
  if (correct + incorrect < min_votes || correct == incorrect) return Verdict::Pending;
  return correct > incorrect ? Verdict::Correct : Verdict::Incorrect;
}

struct EvaluatorProgress {
  std::size_t assigned = 0;
  std::size_t done = 0;
};

struct Progress {
  std::map<std::string, EvaluatorProgress> evaluators;
  std::size_t assignments = 0;
  std::size_t votes = 0;
  std::size_t items = 0;
  std::size_t decided = 0;  // items with a non-Pending verdict
};

/// Assignment state plus the vote log. Every mutation goes through one
/// exclusive lock and is appended (and flushed) to the JSON-Lines log before
/// it becomes visible; readers take a shared lock.
class FeedbackStore {
 public:
  FeedbackStore(std::vector<Assignment> assignments, std::size_t min_votes = kDefaultMinVotes,
                std::optional<std::filesystem::path> log_path = std::nullopt)
      : min_votes_(min_votes), log_path_(std::move(log_path)) {
    for (auto& a : assignments) {
      const auto key = std::tuple{a.item.classifier, a.item.segment_id, a.evaluator_id};
      if (!slots_.emplace(key, Slot{}).second)
        throw Error(ErrorKind::InvalidConfig, "duplicate assignment " + a.item.segment_id + " / " + a.evaluator_id);
      if (!items_.contains(a.item.key())) {
        items_[a.item.key()] = a.item;
        item_order_.push_back(a.item.key());
      }
      by_segment_[a.item.segment_id].insert(a.item.classifier);
      queue_[a.evaluator_id].push_back(a.item.key());
    }
    assignments_ = std::move(assignments);
    if (log_path_) {
      if (std::filesystem::exists(*log_path_)) replay_file(*log_path_);
      if (log_path_->has_parent_path()) std::filesystem::create_directories(log_path_->parent_path());
      log_.open(*log_path_, std::ios::binary | std::ios::app);
      if (!log_) throw Error(ErrorKind::UnreadableFile, "cannot open vote log " + log_path_->string());
    }
  }

  std::size_t min_votes() const { return min_votes_; }

  /// Validates, logs and applies a vote. Fills in `classifier` when the
  /// segment is assigned under exactly one classifier.
  VoteRecord record_vote(VoteRecord vote) {
    std::unique_lock lock(mutex_);
    apply(vote);
    if (log_.is_open()) {
      log_ << vote_to_json(vote).dump() << '\n';
      log_.flush();
    }
    return vote;
  }

  AggregatedJudgment aggregate(const std::string& classifier, const std::string& segment_id) const {
    std::shared_lock lock(mutex_);
    return aggregate_locked({classifier, segment_id});
  }

  std::vector<AggregatedJudgment> aggregates() const {
    std::shared_lock lock(mutex_);
    std::vector<AggregatedJudgment> out;
    for (const auto& key : item_order_) out.push_back(aggregate_locked(key));
    return out;
  }

  /// First item assigned to `evaluator` that they have not voted on.
  std::optional<EvaluationItem> next_task(const std::string& evaluator) const {
    std::shared_lock lock(mutex_);
    const auto it = queue_.find(evaluator);
    if (it == queue_.end()) return std::nullopt;
    for (const auto& key : it->second)
      if (!slots_.at({key.first, key.second, evaluator}).done) return items_.at(key);
    return std::nullopt;
  }

  Progress progress() const {
    std::shared_lock lock(mutex_);
    Progress p;
    for (const auto& [key, slot] : slots_) {
      auto& e = p.evaluators[std::get<2>(key)];
      ++e.assigned;
      ++p.assignments;
      if (slot.done) {
        ++e.done;
        ++p.votes;
      }
    }
    p.items = item_order_.size();
    for (const auto& key : item_order_)
      if (aggregate_locked(key).verdict != Verdict::Pending) ++p.decided;
    return p;
  }

  /// Human ground truth for one classifier's items: label = predicted class,
  /// verdict = current majority.
  GroundTruthMap human_ground_truth(const std::string& classifier) const {
    std::shared_lock lock(mutex_);
    GroundTruthMap gt;
    for (const auto& key : item_order_)
      if (key.first == classifier) gt[key.second] = {items_.at(key).predicted_class, aggregate_locked(key).verdict};
    return gt;
  }

  std::vector<std::string> classifiers() const {
    std::shared_lock lock(mutex_);
    std::set<std::string> out;
    for (const auto& key : item_order_) out.insert(key.first);
    return {out.begin(), out.end()};
  }

  std::vector<VoteRecord> votes() const {
    std::shared_lock lock(mutex_);
    return votes_;
  }

  const std::vector<Assignment>& assignments() const { return assignments_; }

  bool has_segment(const std::string& segment_id) const { return by_segment_.contains(segment_id); }

 private:
  struct Slot {
    bool done = false;
    bool correct = false;
  };

  void apply(VoteRecord& vote) {
    if (vote.classifier.empty()) {
      const auto it = by_segment_.find(vote.segment_id);
      if (it == by_segment_.end()) throw Error(ErrorKind::UnknownAssignment, vote.segment_id);
      if (it->second.size() != 1)
        throw Error(ErrorKind::MalformedRow, vote.segment_id + " is assigned under several classifiers");
      vote.classifier = *it->second.begin();
    }
    const auto slot = slots_.find({vote.classifier, vote.segment_id, vote.evaluator_id});
    if (slot == slots_.end())
      throw Error(ErrorKind::UnknownAssignment,
                  vote.classifier + " / " + vote.segment_id + " not assigned to " + vote.evaluator_id);
    if (slot->second.done)
      throw Error(ErrorKind::DuplicateVote, vote.segment_id + " already judged by " + vote.evaluator_id);
    slot->second = {true, vote.correct};
    votes_.push_back(vote);
  }

  void replay_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        auto vote = vote_from_json(nlohmann::json::parse(line));
        apply(vote);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptFile, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(ErrorKind::CorruptFile, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  AggregatedJudgment aggregate_locked(const std::pair<std::string, std::string>& key) const {
    AggregatedJudgment j{key.second, key.first, 0, 0, Verdict::Pending};
    for (auto it = slots_.lower_bound({key.first, key.second, std::string()});
         it != slots_.end() && std::get<0>(it->first) == key.first && std::get<1>(it->first) == key.second; ++it) {
      if (!it->second.done) continue;
      ++(it->second.correct ? j.correct_votes : j.incorrect_votes);
    }
    j.verdict = majority_verdict(j.correct_votes, j.incorrect_votes, min_votes_);
    return j;
  }

  std::size_t min_votes_;
  std::optional<std::filesystem::path> log_path_;
  std::ofstream log_;
  mutable std::shared_mutex mutex_;
  std::vector<Assignment> assignments_;
  std::map<std::tuple<std::string, std::string, std::string>, Slot> slots_;
  std::map<std::pair<std::string, std::string>, EvaluationItem> items_;
  std::vector<std::pair<std::string, std::string>> item_order_;
  std::map<std::string, std::set<std::string>> by_segment_;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> queue_;
  std::vector<VoteRecord> votes_;
};

}  // namespace websed
