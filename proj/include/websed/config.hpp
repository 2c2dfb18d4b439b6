#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/cnn.hpp"
#include "websed/error.hpp"
#include "websed/features.hpp"
#include "websed/feedback.hpp"
#include "websed/random.hpp"
#include "websed/training.hpp"

extern char** environ;

namespace websed {

struct EvalConfig {
  std::size_t kmax = 40;
  std::size_t k_per_class = 40;
  std::size_t min_votes = kDefaultMinVotes;
  std::vector<std::string> evaluators = {"e1", "e2", "e3", "e4", "e5"};
  std::size_t predict_batch = 128;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, kmax, k_per_class, min_votes, evaluators, predict_batch)

/// Everything a pipeline run depends on. `seed` drives the split, weight
/// init, shuffling, dropout and evaluator assignment; `threads` never changes
/// results and is left out of the config hash.
struct PipelineConfig {
  std::string work_dir = "websed-work";
  std::map<std::string, std::string> manifests;     // dataset id -> clip manifest CSV
  std::map<std::string, std::string> vocabularies;  // dataset id -> label file (custom datasets)
  std::string corpus_root;                          // crawl source: <label>/*.wav
  std::size_t crawl_limit = 100;
  FeatureConfig features;
  CnnConfig cnn;  // num_classes is taken from each dataset's vocabulary
  TrainConfig train;
  EvalConfig eval;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = all cores

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PipelineConfig, work_dir, manifests, vocabularies, corpus_root,
                                                crawl_limit, features, cnn, train, eval, seed, threads)

namespace config_detail {

/// Rejects keys the defaults do not have, so a typo is an error rather than
/// a silently ignored setting. Free-form maps are skipped.
inline void check_known_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object() || !known.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const auto path = where + "/" + key;
    if (!known.contains(key)) throw Error(ErrorKind::BadConfig, "unknown config key " + path);
    if (path == "/manifests" || path == "/vocabularies") continue;
    check_known_keys(value, known[key], path);
  }
}

inline nlohmann::json parse_scalar(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

/// Enum settings and their spellings; the JSON mapping would otherwise fall
/// back to the first value for anything unknown.
inline const std::vector<std::pair<std::string, std::vector<std::string>>>& enum_fields() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> fields = {
      {"/features/spectrum", {"power", "magnitude"}}, {"/features/log_base", {"e", "10"}}};
  return fields;
}

}  // namespace config_detail

inline constexpr std::string_view kEnvPrefix = "WEBSED_";

/// WEBSED_* variables other than WEBSED_CONFIG, as (name, value) pairs.
inline std::vector<std::pair<std::string, std::string>> environment_overrides() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const auto name = entry.substr(0, eq);
    if (!name.starts_with(kEnvPrefix) || name == "WEBSED_CONFIG") continue;
    out.emplace_back(std::string(name), std::string(entry.substr(eq + 1)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Applies overrides named like WEBSED_TRAIN__EPOCHS=5: the prefix is
/// dropped, the rest lowercased and split on "__" into a key path. Values
/// for string settings are taken verbatim; others are parsed as JSON when
/// possible and taken as strings otherwise.
/// `types` (the document being overridden) decides which keys are strings.
inline void apply_env_overrides(nlohmann::json& doc, const std::vector<std::pair<std::string, std::string>>& vars,
                                const nlohmann::json& types = nlohmann::json::object()) {
  for (const auto& [name, value] : vars) {
    std::string rest = name.substr(kEnvPrefix.size());
    for (auto& c : rest) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::string pointer;
    std::size_t pos = 0;
    while (true) {
      const auto next = rest.find("__", pos);
      pointer += "/" + rest.substr(pos, next - pos);
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    const nlohmann::json::json_pointer ptr(pointer);
    // A string setting stays a string even when the text looks like JSON.
    const bool keep_text = types.contains(ptr) && types[ptr].is_string();
    doc[ptr] = keep_text ? nlohmann::json(value) : config_detail::parse_scalar(value);
  }
}

/// Defaults, then the config file (if any), then environment overrides;
/// command-line flags are applied by the caller on the returned value.
inline PipelineConfig load_config(const std::filesystem::path& file,
                                  const std::vector<std::pair<std::string, std::string>>& env = {}) {
  const nlohmann::json defaults = PipelineConfig{};
  nlohmann::json doc = defaults;
  try {
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw Error(ErrorKind::MissingInput, "config file " + file.string());
      const auto given = nlohmann::json::parse(in, nullptr, true, true);
      if (!given.is_object()) throw Error(ErrorKind::BadConfig, file.string() + ": top level must be an object");
      config_detail::check_known_keys(given, defaults, "");
      doc.merge_patch(given);
      // Relative paths in a config file are relative to the file itself.
      const auto base = file.parent_path();
      const auto rebase = [&](nlohmann::json& v) {
        if (v.is_string() && !v.get<std::string>().empty() && std::filesystem::path(v.get<std::string>()).is_relative())
          v = (base / v.get<std::string>()).lexically_normal().string();
      };
      if (given.contains("work_dir")) rebase(doc["work_dir"]);
      if (given.contains("corpus_root")) rebase(doc["corpus_root"]);
      for (auto& [k, v] : doc["manifests"].items()) rebase(v);
      for (auto& [k, v] : doc["vocabularies"].items()) rebase(v);
    }
    nlohmann::json env_doc = nlohmann::json::object();
    apply_env_overrides(env_doc, env, doc);
    config_detail::check_known_keys(env_doc, defaults, "");
    doc.merge_patch(env_doc);
    for (const auto& [ptr, allowed] : config_detail::enum_fields()) {
      const auto& v = doc[nlohmann::json::json_pointer(ptr)];
      if (!v.is_string() || std::find(allowed.begin(), allowed.end(), v.get<std::string>()) == allowed.end())
        throw Error(ErrorKind::BadConfig, ptr + " must be one of " + nlohmann::json(allowed).dump());
    }
    auto cfg = doc.get<PipelineConfig>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
}

/// Checks the values, not the paths (commands check the inputs they read).
inline void validate(const PipelineConfig& cfg) {
  try {
    cfg.features.validate();
    cfg.train.validate();
    CnnConfig cnn = cfg.cnn;
    cnn.num_classes = std::max(cnn.num_classes, 2);
    cnn.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  if (cfg.cnn.input_height != static_cast<int>(cfg.features.mel_bands) ||
      cfg.cnn.input_width != static_cast<int>(cfg.features.frames_per_patch) ||
      cfg.cnn.input_channels != static_cast<int>(kPatchChannels))
    throw Error(ErrorKind::BadConfig, "cnn input shape must match features (mel_bands x frames_per_patch x 2)");
  if (cfg.eval.kmax < 1 || cfg.eval.k_per_class < 1) throw Error(ErrorKind::BadConfig, "kmax and k_per_class must be >= 1");
  if (cfg.eval.min_votes < 1) throw Error(ErrorKind::BadConfig, "min_votes must be >= 1");
}

/// 16 hex digits of FNV-1a over the canonical JSON of everything but
/// `threads`.
inline std::string config_hash(const PipelineConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("threads");
  j["train"].erase("threads");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace websed
