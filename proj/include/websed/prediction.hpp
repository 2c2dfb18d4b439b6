#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "websed/csv.hpp"
#include "websed/error.hpp"

namespace websed {

/// A classifier's verdict on one segment. `probabilities` is empty when the
/// prediction was loaded from a predictions CSV (which keeps only the argmax).
struct Prediction {
  std::string segment_id;
  std::string classifier;
  std::vector<double> probabilities;
  std::string predicted_class;
  std::size_t predicted_index = 0;
  double confidence = 0.0;
};

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_predictions_csv(const std::filesystem::path& path, const std::vector<Prediction>& predictions,
                                  std::string_view config_hash = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "segment_id,classifier,predicted_class,confidence\n";
  for (const auto& p : predictions)
    out << csv::join({p.segment_id, p.classifier, p.predicted_class, format_double(p.confidence)}) << '\n';
}

inline std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  csv::require_header(table, {"segment_id", "classifier", "predicted_class", "confidence"}, path);
  std::vector<Prediction> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    if (row.fields.size() < 4)
      throw Error(ErrorKind::MalformedRow, path.string() + ": line " + std::to_string(row.line_no));
    Prediction p;
    p.segment_id = row.fields[0];
    p.classifier = row.fields[1];
    p.predicted_class = row.fields[2];
    const auto& c = row.fields[3];
    const auto res = std::from_chars(c.data(), c.data() + c.size(), p.confidence);
    if (res.ec != std::errc{} || res.ptr != c.data() + c.size())
      throw Error(ErrorKind::MalformedRow, path.string() + ": line " + std::to_string(row.line_no) + ": bad confidence");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace websed
