#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "websed/cnn.hpp"
#include "websed/error.hpp"
#include "websed/evaluator.hpp"
#include "websed/model.hpp"
#include "websed/random.hpp"

namespace websed {

struct TrainConfig {
  std::size_t batch_size = 1000;
  double learning_rate = 0.002;
  double momentum = 0.9;
  double l2 = 0.001;
  std::size_t epochs = 30;
  std::size_t early_stop_patience = 5;  // 0 disables early stopping
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const {
    if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidConfig, "momentum must be in [0, 1)");
    if (!(l2 >= 0.0)) throw Error(ErrorKind::InvalidConfig, "l2 must be >= 0");
    if (epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be >= 1");
  }

  SgdConfig sgd() const { return {learning_rate, momentum, l2}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, batch_size, learning_rate, momentum, l2, epochs,
                                                early_stop_patience, seed, threads)

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  CnnModel model;  // best validation accuracy (earliest epoch on ties)
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch training with Nesterov SGD, per-epoch reshuffling and early
/// stopping on patch-level validation accuracy. Inputs must already be
/// normalized with `norm`. Weight init, shuffles and dropout masks come from
/// three SplitMix64 streams derived from `cfg.seed`, so a seed fixes the run.
inline TrainResult train(std::span<const LabeledPatch> train_set, std::span<const LabeledPatch> val_set,
                         const TrainConfig& cfg, const CnnConfig& cnn_cfg, const LabelVocabulary& vocabulary,
                         const NormStats& norm, const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no training patches");
  if (val_set.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no validation patches");
  cfg.validate();
  for (const auto& ex : train_set)
    if (ex.label >= vocabulary.class_count()) throw Error(ErrorKind::ShapeMismatch, "training label out of range");

  TrainResult result{make_model(cnn_cfg, vocabulary, norm, cfg.seed), {}, 0};
  CnnModel current = result.model;
  auto velocity = Parameters<float>::zeros_like(current.net.params);

  SplitMix64 shuffle_rng(cfg.seed ^ 0x53485546464c45ULL);
  SplitMix64 dropout_rng(cfg.seed ^ 0x44524f504f5554ULL);

  std::vector<FeaturePatch> val_patches;
  std::vector<std::size_t> val_labels;
  std::vector<std::string> val_clips;
  for (const auto& ex : val_set) {
    val_patches.push_back(ex.patch);
    val_labels.push_back(ex.label);
    val_clips.push_back(ex.clip_id);
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Activations<float> act;
  std::vector<const FeaturePatch*> ptrs;
  std::vector<std::size_t> labels;
  double best_acc = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      ptrs.clear();
      labels.clear();
      for (std::size_t i = 0; i < n; ++i) {
        ptrs.push_back(&train_set[order[start + i]].patch);
        labels.push_back(train_set[order[start + i]].label);
      }
      const auto batch = stack_patches(current.config(), ptrs);
      forward<float>(current.net, batch, n, Mode::Train, &dropout_rng, act, cfg.threads);
      const auto grads = backward<float>(current.net, act, labels, cfg.l2, cfg.threads);
      loss_sum += grads.loss * static_cast<double>(n);
      sgd_step(current.net.params, grads.grads, velocity, cfg.sgd());
    }

    const auto probs = predict_probabilities(current, val_patches, 256, cfg.threads);
    const auto acc = accuracy_from_probabilities(probs, val_labels, val_clips);
    EpochLog entry{epoch, loss_sum / static_cast<double>(order.size()), acc.patch_accuracy};
    if (!std::isfinite(entry.train_loss)) {
      // Diverged; the best earlier model is kept.
      result.log.push_back(entry);
      if (on_epoch) on_epoch(entry);
      break;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (entry.val_acc > best_acc) {
      best_acc = entry.val_acc;
      result.best_epoch = epoch;
      result.model = current;
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

inline void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log,
                               std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "epoch,train_loss,val_acc\n";
  for (const auto& e : log)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_acc) << '\n';
}

}  // namespace websed
