#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/cnn.hpp"
#include "websed/error.hpp"
#include "websed/features.hpp"
#include "websed/prediction.hpp"
#include "websed/vocabulary.hpp"

namespace websed {

/// A trained classifier for one dataset: network, the training-set feature
/// statistics its inputs must be normalized with, and its label vocabulary.
struct CnnModel {
  Network<float> net;
  NormStats norm;
  LabelVocabulary vocabulary;

  const CnnConfig& config() const { return net.config; }
};

inline CnnModel make_model(const CnnConfig& cfg, LabelVocabulary vocabulary, NormStats norm, std::uint64_t seed) {
  if (static_cast<std::size_t>(cfg.num_classes) != vocabulary.class_count())
    throw Error(ErrorKind::InvalidConfig, "num_classes " + std::to_string(cfg.num_classes) + " != vocabulary size " +
                                              std::to_string(vocabulary.class_count()));
  return {make_network<float>(cfg, seed), norm, std::move(vocabulary)};
}

// ---------------------------------------------------------------------------
// Model file
//
//   offset 0   8 bytes   magic "WSEDCNN\0"
//          8   uint32    format version (little-endian)
//         12   uint32    header JSON length N
//         16   N bytes   header JSON: config, vocabulary, norm_stats, block list
//       16+N   float32   parameter blocks, little-endian, in Block order

inline constexpr char kModelMagic[8] = {'W', 'S', 'E', 'D', 'C', 'N', 'N', '\0'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace model_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

}  // namespace model_detail

inline std::string serialize_model(const CnnModel& model) {
  nlohmann::json header;
  header["format_version"] = kModelFormatVersion;
  header["config"] = model.net.config;
  header["vocabulary"] = {{"dataset", std::string(to_string(model.vocabulary.dataset()))},
                          {"labels", model.vocabulary.labels()}};
  header["norm_stats"] = model.norm;
  auto& blocks = header["blocks"] = nlohmann::json::array();
  for (std::size_t b = 0; b < kBlockCount; ++b)
    blocks.push_back({{"name", kBlockNames[b]}, {"count", model.net.params[b].size()}});
  const std::string json = header.dump();

  std::string out(kModelMagic, sizeof kModelMagic);
  model_detail::put_u32(out, kModelFormatVersion);
  model_detail::put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (const auto& block : model.net.params.blocks)
    for (float v : block) model_detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline CnnModel deserialize_model(std::span<const unsigned char> bytes, const std::string& name = "<memory>") {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kModelMagic, sizeof kModelMagic) != 0)
    throw Error(ErrorKind::CorruptFile, name + ": not a model file");
  const std::uint32_t version = model_detail::get_u32(bytes.data() + 8);
  if (version != kModelFormatVersion)
    throw Error(ErrorKind::IncompatibleVersion, name + ": format version " + std::to_string(version) +
                                                    ", this build reads " + std::to_string(kModelFormatVersion));
  const std::uint32_t json_len = model_detail::get_u32(bytes.data() + 12);
  if (bytes.size() < 16ull + json_len) throw Error(ErrorKind::CorruptFile, name + ": truncated header");

  CnnModel model;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + json_len);
    const auto cfg = header.at("config").get<CnnConfig>();
    cfg.validate();
    const auto dataset = parse_dataset_id(header.at("vocabulary").at("dataset").get<std::string>());
    if (!dataset) throw Error(ErrorKind::CorruptFile, name + ": unknown dataset");
    model.vocabulary = LabelVocabulary(*dataset, header.at("vocabulary").at("labels").get<std::vector<std::string>>());
    model.norm = header.at("norm_stats").get<NormStats>();
    model.net = Network<float>{cfg, cfg.stages(), {}};
    if (model.vocabulary.class_count() != static_cast<std::size_t>(cfg.num_classes))
      throw Error(ErrorKind::CorruptFile, name + ": vocabulary size disagrees with config");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, name + ": bad header: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptFile) throw;
    throw Error(ErrorKind::CorruptFile, name + ": " + e.what());
  }

  const auto sizes = block_sizes(model.net.config);
  std::size_t total = 0;
  for (auto n : sizes) total += n;
  const std::size_t offset = 16ull + json_len;
  if (bytes.size() != offset + total * 4)
    throw Error(ErrorKind::CorruptFile, name + ": expected " + std::to_string(total) + " parameters, file holds " +
                                            std::to_string((bytes.size() - offset) / 4));
  const unsigned char* p = bytes.data() + offset;
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    auto& block = model.net.params[b];
    block.resize(sizes[b]);
    for (auto& v : block) {
      v = std::bit_cast<float>(model_detail::get_u32(p));
      p += 4;
      if (!std::isfinite(v)) throw Error(ErrorKind::CorruptFile, name + ": non-finite parameter");
    }
  }
  return model;
}

inline void save_model(const std::filesystem::path& path, const CnnModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  const auto bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline CnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(bytes, path.string());
}

// ---------------------------------------------------------------------------
// Inference

/// Concatenates patches into a [B][H][W][C] batch, checking each shape.
inline std::vector<float> stack_patches(const CnnConfig& cfg, std::span<const FeaturePatch* const> patches) {
  std::vector<float> batch;
  batch.reserve(patches.size() * cfg.input_size());
  for (const auto* p : patches) {
    if (p->mel_bands != static_cast<std::size_t>(cfg.input_height) ||
        p->frames != static_cast<std::size_t>(cfg.input_width) || p->values.size() != cfg.input_size())
      throw Error(ErrorKind::ShapeMismatch, "patch " + p->segment_id + " is " + std::to_string(p->mel_bands) + "x" +
                                                std::to_string(p->frames) + ", model expects " +
                                                std::to_string(cfg.input_height) + "x" +
                                                std::to_string(cfg.input_width));
    batch.insert(batch.end(), p->values.begin(), p->values.end());
  }
  return batch;
}

/// Softmax rows for normalized patches, in input order; batches are
/// independent so the result does not depend on `batch_size`.
inline std::vector<std::vector<double>> predict_probabilities(const CnnModel& model,
                                                               std::span<const FeaturePatch> patches,
                                                               std::size_t batch_size = 128,
                                                               std::size_t threads = 1) {
  const auto K = static_cast<std::size_t>(model.config().num_classes);
  std::vector<std::vector<double>> out;
  out.reserve(patches.size());
  Activations<float> act;
  std::vector<const FeaturePatch*> ptrs;
  for (std::size_t start = 0; start < patches.size(); start += std::max<std::size_t>(batch_size, 1)) {
    const std::size_t n = std::min(std::max<std::size_t>(batch_size, 1), patches.size() - start);
    ptrs.clear();
    for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&patches[start + i]);
    const auto batch = stack_patches(model.config(), ptrs);
    const auto probs = forward<float>(model.net, batch, n, Mode::Infer, nullptr, act, threads);
    for (std::size_t b = 0; b < n; ++b) {
      std::vector<double> row(probs.begin() + static_cast<std::ptrdiff_t>(b * K),
                              probs.begin() + static_cast<std::ptrdiff_t>((b + 1) * K));
      double sum = 0.0;
      for (double v : row) sum += v;
      for (double& v : row) v /= sum;
      out.push_back(std::move(row));
    }
  }
  return out;
}

/// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

inline Prediction make_prediction(const CnnModel& model, std::string segment_id, std::vector<double> probabilities) {
  Prediction p;
  p.segment_id = std::move(segment_id);
  p.classifier = std::string(to_string(model.vocabulary.dataset()));
  p.predicted_index = argmax(probabilities);
  p.predicted_class = model.vocabulary.label(p.predicted_index);
  p.confidence = probabilities[p.predicted_index];
  p.probabilities = std::move(probabilities);
  return p;
}

/// One Prediction per (already normalized) patch, in input order.
inline std::vector<Prediction> predict_segments(const CnnModel& model, std::span<const FeaturePatch> patches,
                                                std::size_t batch_size = 128, std::size_t threads = 1) {
  auto probs = predict_probabilities(model, patches, batch_size, threads);
  std::vector<Prediction> out;
  out.reserve(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i)
    out.push_back(make_prediction(model, patches[i].segment_id, std::move(probs[i])));
  return out;
}

}  // namespace websed
