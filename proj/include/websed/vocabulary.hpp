#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "websed/error.hpp"

namespace websed {

/// Which labeled dataset a clip, vocabulary or classifier belongs to.
/// `Custom` covers user-declared vocabularies such as the synthetic tone fixture.
enum class DatasetId { Esc50, Us8k, Tut, Custom };

constexpr std::string_view to_string(DatasetId id) {
  switch (id) {
    case DatasetId::Esc50: return "esc50";
    case DatasetId::Us8k: return "us8k";
    case DatasetId::Tut: return "tut";
    case DatasetId::Custom: return "custom";
  }
  return "custom";
}

inline std::optional<DatasetId> parse_dataset_id(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::erase(lower, '-');
  if (lower == "esc50") return DatasetId::Esc50;
  if (lower == "us8k" || lower == "urbansound8k") return DatasetId::Us8k;
  if (lower == "tut" || lower == "tut2016") return DatasetId::Tut;
  if (lower == "custom") return DatasetId::Custom;
  return std::nullopt;
}

class LabelVocabulary {
 public:
  LabelVocabulary() = default;

  LabelVocabulary(DatasetId dataset, std::vector<std::string> labels)
      : dataset_(dataset), labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].empty())
        throw Error(ErrorKind::InvalidConfig, "empty label in vocabulary " + std::string(to_string(dataset)));
      for (std::size_t j = 0; j < i; ++j)
        if (labels_[j] == labels_[i])
          throw Error(ErrorKind::InvalidConfig, "duplicate label '" + labels_[i] + "'");
    }
  }

  DatasetId dataset() const noexcept { return dataset_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t class_count() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t index) const { return labels_.at(index); }

  std::optional<std::size_t> index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return i;
    return std::nullopt;
  }

  bool contains(std::string_view label) const { return index_of(label).has_value(); }

  friend bool operator==(const LabelVocabulary&, const LabelVocabulary&) = default;

 private:
  DatasetId dataset_ = DatasetId::Custom;
  std::vector<std::string> labels_;
};

namespace detail {

inline const std::vector<std::string>& esc50_labels() {
  static const std::vector<std::string> labels = {
      // animals
      "dog", "rooster", "pig", "cow", "frog", "cat", "hen", "insects", "sheep", "crow",
      // natural soundscapes and water sounds
      "rain", "sea waves", "crackling fire", "crickets", "chirping birds", "water drops", "wind",
      "pouring water", "toilet flush", "thunderstorm",
      // human non-speech sounds
      "crying baby", "sneezing", "clapping", "breathing", "coughing", "footsteps", "laughing",
      "brushing teeth", "snoring", "drinking sipping",
      // interior/domestic sounds
      "door wood knock", "mouse click", "keyboard typing", "door wood creaks", "can opening",
      "washing machine", "vacuum cleaner", "clock alarm", "clock tick", "glass breaking",
      // exterior/urban noises
      "helicopter", "chainsaw", "siren", "car horn", "engine", "train", "church bells", "airplane",
      "fireworks", "hand saw"};
  return labels;
}

inline const std::vector<std::string>& us8k_labels() {
  static const std::vector<std::string> labels = {
      "air conditioner", "car horn",      "children playing", "dog bark", "drilling",
      "engine idling",   "gun shot",      "jackhammer",       "siren",    "street music"};
  return labels;
}

// Home context (11) followed by residential area (7). Both contexts annotate
// walking; the residential one is renamed so labels stay unique.
inline const std::vector<std::string>& tut_labels() {
  static const std::vector<std::string> labels = {
      "object rustling", "object snapping", "cupboard", "cutlery", "dishes", "drawer",
      "glass jingling", "object impact", "people walking", "washing dishes", "water tap running",
      "object banging", "bird singing", "car passing by", "children shouting", "people speaking",
      "people walking outdoors", "wind blowing"};
  return labels;
}

}  // namespace detail

/// Built-in vocabularies: 50 + 10 + 18 = 78 classes.
inline LabelVocabulary builtin_vocabulary(DatasetId id) {
  switch (id) {
    case DatasetId::Esc50: return {id, detail::esc50_labels()};
    case DatasetId::Us8k: return {id, detail::us8k_labels()};
    case DatasetId::Tut: return {id, detail::tut_labels()};
    case DatasetId::Custom: break;
  }
  throw Error(ErrorKind::InvalidConfig, "the custom dataset has no built-in vocabulary");
}

/// One label per line; blank lines and '#' comments ignored.
inline LabelVocabulary load_vocabulary_file(const std::filesystem::path& path, DatasetId dataset) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    labels.push_back(line);
  }
  return {dataset, std::move(labels)};
}

/// Lowercase alphanumerics with every other run of characters collapsed to
/// one '-'; used for file names and URL-safe ids.
inline std::string slugify(std::string_view text) {
  std::string out;
  bool dash = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (dash && !out.empty()) out.push_back('-');
      out.push_back(static_cast<char>(std::tolower(c)));
      dash = false;
    } else {
      dash = true;
    }
  }
  return out.empty() ? "x" : out;
}

/// Vocabularies known to a pipeline run, keyed by dataset.
class VocabularySet {
 public:
  /// Starts with the three built-in vocabularies.
  static VocabularySet builtin() {
    VocabularySet set;
    for (auto id : {DatasetId::Esc50, DatasetId::Us8k, DatasetId::Tut}) set.put(builtin_vocabulary(id));
    return set;
  }

  void put(LabelVocabulary vocab) { vocabularies_[vocab.dataset()] = std::move(vocab); }

  const LabelVocabulary* find(DatasetId id) const {
    auto it = vocabularies_.find(id);
    return it == vocabularies_.end() ? nullptr : &it->second;
  }

  const LabelVocabulary& at(DatasetId id) const {
    if (const auto* v = find(id)) return *v;
    throw Error(ErrorKind::InvalidConfig, "no vocabulary declared for dataset " + std::string(to_string(id)));
  }

  const std::map<DatasetId, LabelVocabulary>& all() const noexcept { return vocabularies_; }

 private:
  std::map<DatasetId, LabelVocabulary> vocabularies_;
};

}  // namespace websed
