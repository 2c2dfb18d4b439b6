#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "websed/audio.hpp"
#include "websed/csv.hpp"
#include "websed/error.hpp"
#include "websed/evaluator.hpp"
#include "websed/prediction.hpp"
#include "websed/random.hpp"
#include "websed/vocabulary.hpp"

namespace websed {

struct QueryRecord {
  std::string label;
  std::string query_string;
  DatasetId dataset = DatasetId::Custom;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

inline std::string query_for_label(std::string_view label) { return std::string(label) + " sound"; }

inline std::vector<QueryRecord> build_queries(const LabelVocabulary& vocab) {
  std::vector<QueryRecord> out;
  out.reserve(vocab.class_count());
  for (const auto& label : vocab.labels()) out.push_back({label, query_for_label(label), vocab.dataset()});
  return out;
}

/// Queries for every vocabulary in the set, dataset by dataset.
inline std::vector<QueryRecord> build_queries(const VocabularySet& vocabularies) {
  std::vector<QueryRecord> out;
  for (const auto& [id, vocab] : vocabularies.all()) {
    auto q = build_queries(vocab);
    out.insert(out.end(), q.begin(), q.end());
  }
  return out;
}

/// A candidate returned by a fetcher: either a path to audio it already has
/// locally or the audio bytes themselves.
struct FetchedItem {
  std::string video_id;
  double duration_s = 0.0;
  std::filesystem::path audio_path;
  std::string audio_bytes;
};

/// Source of candidate videos for a query. Implementations must not write to
/// the corpus store; `crawl` owns every write.
class Fetcher {
 public:
  virtual ~Fetcher() = default;
  virtual std::vector<FetchedItem> fetch(const QueryRecord& query, std::size_t limit) = 0;
};

/// Serves `root/<query label>/*.wav`, sorted by file name. The reported
/// duration comes from each file's header.
class LocalDirectoryFetcher : public Fetcher {
 public:
  explicit LocalDirectoryFetcher(std::filesystem::path root) : root_(std::move(root)) {}

  std::vector<FetchedItem> fetch(const QueryRecord& query, std::size_t limit) override {
    if (!std::filesystem::is_directory(root_))
      throw Error(ErrorKind::FetcherUnavailable, "corpus root " + root_.string() + " is not a directory");
    const auto dir = root_ / query.label;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir))
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
      }
    std::sort(files.begin(), files.end());
    if (files.size() > limit) files.resize(limit);
    std::vector<FetchedItem> out;
    for (const auto& f : files) {
      FetchedItem item;
      item.video_id = f.stem().string();
      item.audio_path = f;
      try {
        item.duration_s = read_wav_info(f).duration_s();
      } catch (const Error&) {
        item.duration_s = -1.0;  // unreadable; rejected downstream
      }
      out.push_back(std::move(item));
    }
    return out;
  }

 private:
  std::filesystem::path root_;
};

struct CrawledVideo {
  std::string video_id;
  QueryRecord query;
  double duration_s = 0.0;
  std::string audio_path;

  /// Corpus key: one entry per (dataset, query, video). Opaque so segment ids
  /// shown to evaluators do not reveal the search query.
  std::string entry_id() const {
    const auto h = fnv1a64(std::string(to_string(query.dataset)) + '\x1f' + query.label + '\x1f' + video_id);
    char buf[14];
    std::snprintf(buf, sizeof buf, "v%012llx", static_cast<unsigned long long>(h >> 16));
    return buf;
  }
};

inline std::string query_ground_truth(const CrawledVideo& video) { return video.query.label; }

struct DurationBounds {
  double min_s = 3.0;
  double max_s = 600.0;
  bool accepts(double d) const { return d >= min_s && d <= max_s; }
};

struct CrawlOptions {
  std::filesystem::path corpus_dir;  // canonical audio is written under corpus_dir/audio
  std::size_t limit_per_query = 100;
  DurationBounds bounds;
  int sample_rate = kCanonicalSampleRate;
};

struct QueryStats {
  std::size_t fetched = 0;
  std::size_t accepted = 0;
  std::size_t rejected_duration = 0;
  std::size_t failed = 0;
};

struct CrawlReport {
  std::vector<CrawledVideo> videos;
  std::map<std::string, QueryStats> per_query;
  std::vector<std::string> errors;
};

/// Fetches every query, keeps videos whose duration lies in the closed range
/// [3 s, 600 s], and stores each accepted one as canonical 16-bit mono WAV
/// under corpus_dir/audio/<query slug>/<video slug>.wav. A failing fetch or
/// decode is recorded in `errors` and the crawl moves on.
inline CrawlReport crawl(const std::vector<QueryRecord>& queries, Fetcher& fetcher, const CrawlOptions& opts) {
  CrawlReport report;
  for (const auto& q : queries) {
    auto& stats = report.per_query[q.query_string];
    std::vector<FetchedItem> items;
    try {
      items = fetcher.fetch(q, opts.limit_per_query);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::FetcherUnavailable) throw;
      report.errors.push_back(q.query_string + ": " + e.what());
      ++stats.failed;
      continue;
    }
    stats.fetched += items.size();
    for (auto& item : items) {
      if (!opts.bounds.accepts(item.duration_s)) {
        ++stats.rejected_duration;
        continue;
      }
      CrawledVideo video{item.video_id, q, item.duration_s, {}};
      try {
        const WavData wav = item.audio_bytes.empty()
                                ? read_wav(item.audio_path)
                                : decode_wav(std::span(reinterpret_cast<const unsigned char*>(item.audio_bytes.data()),
                                                       item.audio_bytes.size()),
                                             item.video_id);
        const auto clip = canonicalize(wav, video.entry_id(), opts.sample_rate);
        const auto rel = std::filesystem::path("audio") / slugify(q.label) / (slugify(item.video_id) + ".wav");
        write_wav_pcm16(opts.corpus_dir / rel, clip.samples, clip.sample_rate);
        video.audio_path = rel.generic_string();
      } catch (const Error& e) {
        report.errors.push_back(q.query_string + " / " + item.video_id + ": " + e.what());
        ++stats.failed;
        continue;
      }
      ++stats.accepted;
      report.videos.push_back(std::move(video));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Corpus inventory: video_id,query_label,dataset_id,duration_s,audio_path
// (audio_path relative to the inventory's directory).

inline void write_corpus_inventory(const std::filesystem::path& path, const std::vector<CrawledVideo>& videos,
                                   std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "video_id,query_label,dataset_id,duration_s,audio_path\n";
  for (const auto& v : videos)
    out << csv::join({v.video_id, v.query.label, std::string(to_string(v.query.dataset)), format_double(v.duration_s),
                      v.audio_path})
        << '\n';
}

inline std::vector<CrawledVideo> read_corpus_inventory(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  csv::require_header(table, {"video_id", "query_label", "dataset_id", "duration_s", "audio_path"}, path);
  std::vector<CrawledVideo> out;
  for (const auto& row : table.rows) {
    const auto where = path.string() + ": line " + std::to_string(row.line_no);
    if (row.fields.size() < 5) throw Error(ErrorKind::MalformedRow, where);
    const auto dataset = parse_dataset_id(row.fields[2]);
    if (!dataset) throw Error(ErrorKind::MalformedRow, where + ": unknown dataset");
    CrawledVideo v;
    v.video_id = row.fields[0];
    v.query = {row.fields[1], query_for_label(row.fields[1]), *dataset};
    try {
      v.duration_s = std::stod(row.fields[3]);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::MalformedRow, where + ": bad duration");
    }
    v.audio_path = row.fields[4];
    out.push_back(std::move(v));
  }
  return out;
}

/// A corpus segment together with the crawled video it came from.
struct CorpusSegment {
  Segment segment;
  std::size_t video = 0;  // index into the video list
};

/// Segments every stored video (source_id = the video's entry id).
inline std::vector<CorpusSegment> segment_corpus(const std::vector<CrawledVideo>& videos,
                                                 const std::filesystem::path& corpus_dir,
                                                 std::size_t window = kSegmentWindowSamples,
                                                 std::size_t stride = kSegmentStrideSamples) {
  std::vector<CorpusSegment> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto info = read_wav_info(corpus_dir / videos[i].audio_path);
    AudioClip shape;
    shape.source_id = videos[i].entry_id();
    shape.samples.resize(info.frames);
    for (auto& s : segment_clip(shape, window, stride)) out.push_back({std::move(s), i});
  }
  return out;
}

/// Search-query ground truth: every segment carries its video's query label.
inline GroundTruthMap query_ground_truth_map(const std::vector<CrawledVideo>& videos,
                                             const std::vector<CorpusSegment>& segments) {
  GroundTruthMap gt;
  for (const auto& s : segments) gt[s.segment.segment_id] = {query_ground_truth(videos.at(s.video)), Verdict::Pending};
  return gt;
}

}  // namespace websed
