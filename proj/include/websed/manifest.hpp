#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "websed/csv.hpp"
#include "websed/error.hpp"
#include "websed/random.hpp"
#include "websed/vocabulary.hpp"

namespace websed {

struct ClipManifestEntry {
  std::string clip_id;
  std::string file_path;
  DatasetId dataset = DatasetId::Custom;
  std::string label;
  std::optional<double> duration_s;

  friend bool operator==(const ClipManifestEntry&, const ClipManifestEntry&) = default;
};

/// Parses a clip manifest (header clip_id,file_path,dataset_id,label).
/// Relative file paths are resolved against the manifest's directory.
inline std::vector<ClipManifestEntry> load_manifest(const std::filesystem::path& path,
                                                    const VocabularySet& vocabularies) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  const auto table = csv::read(path);
  csv::require_header(table, {"clip_id", "file_path", "dataset_id", "label"}, path);

  const auto base = path.parent_path();
  std::vector<ClipManifestEntry> entries;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    const auto where = path.string() + ": line " + std::to_string(row.line_no);
    if (row.fields.size() != table.header.size())
      throw Error(ErrorKind::MalformedRow, where + ": expected " + std::to_string(table.header.size()) +
                                               " fields, got " + std::to_string(row.fields.size()));
    ClipManifestEntry e;
    e.clip_id = row.fields[0];
    if (e.clip_id.empty() || row.fields[1].empty())
      throw Error(ErrorKind::MalformedRow, where + ": empty clip_id or file_path");
    const auto dataset = parse_dataset_id(row.fields[2]);
    if (!dataset) throw Error(ErrorKind::MalformedRow, where + ": unknown dataset_id '" + row.fields[2] + "'");
    e.dataset = *dataset;
    e.label = row.fields[3];
    const auto* vocab = vocabularies.find(e.dataset);
    if (!vocab || !vocab->contains(e.label))
      throw Error(ErrorKind::UnknownLabel, "'" + e.label + "' is not a " + std::string(to_string(e.dataset)) +
                                               " label (" + where + ")");
    if (!seen.insert(e.clip_id).second)
      throw Error(ErrorKind::MalformedRow, where + ": duplicate clip_id '" + e.clip_id + "'");
    std::filesystem::path file(row.fields[1]);
    e.file_path = (file.is_absolute() ? file : base / file).lexically_normal().string();
    entries.push_back(std::move(e));
  }
  return entries;
}

enum class Split { Train, Val, Test };

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  return std::nullopt;
}

struct SplitAssignment {
  std::string clip_id;
  Split split = Split::Train;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

inline constexpr std::size_t kMinClipsPerClass = 5;

/// Stratified per-class split. Within each label (visited in sorted order) the
/// clips are ordered by clip_id, shuffled with one SplitMix64 stream seeded by
/// `seed`, and cut into round(0.6n) train, round(0.2n) validation and the
/// remainder as test. Output order follows the input order.
inline std::vector<SplitAssignment> split_dataset(const std::vector<ClipManifestEntry>& entries,
                                                  std::uint64_t seed, SplitFractions fractions = {}) {
  if (entries.empty()) throw Error(ErrorKind::EmptyTrainingSet, "manifest has no clips");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < entries.size(); ++i) by_label[entries[i].label].push_back(i);

  std::vector<Split> split_of(entries.size(), Split::Train);
  SplitMix64 rng(seed);
  for (auto& [label, members] : by_label) {
    if (members.size() < kMinClipsPerClass)
      throw Error(ErrorKind::ClassTooSmall, "'" + label + "' has " + std::to_string(members.size()) +
                                                " clips, need at least " + std::to_string(kMinClipsPerClass));
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) { return entries[a].clip_id < entries[b].clip_id; });
    rng.shuffle(members.begin(), members.end());
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::lround(fractions.train * n));
    const auto n_val = static_cast<std::size_t>(std::lround(fractions.val * n));
    for (std::size_t k = 0; k < members.size(); ++k)
      split_of[members[k]] = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
  }

  std::vector<SplitAssignment> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out.push_back({entries[i].clip_id, split_of[i]});
  return out;
}

inline void write_splits(const std::filesystem::path& path, const std::vector<SplitAssignment>& splits,
                         std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "clip_id,split\n";
  for (const auto& s : splits) out << csv::escape(s.clip_id) << ',' << to_string(s.split) << '\n';
}

inline std::vector<SplitAssignment> read_splits(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  csv::require_header(table, {"clip_id", "split"}, path);
  std::vector<SplitAssignment> out;
  for (const auto& row : table.rows) {
    const auto split = row.fields.size() >= 2 ? parse_split(row.fields[1]) : std::nullopt;
    if (!split) throw Error(ErrorKind::MalformedRow, path.string() + ": line " + std::to_string(row.line_no));
    out.push_back({row.fields[0], *split});
  }
  return out;
}

}  // namespace websed
