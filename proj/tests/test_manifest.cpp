#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "websed/csv.hpp"
#include "websed/manifest.hpp"
#include "websed/random.hpp"
#include "websed/vocabulary.hpp"

using namespace websed;
using websed::testing::TempDir;

namespace {

std::vector<ClipManifestEntry> synthetic_entries(const std::vector<std::size_t>& per_class) {
  std::vector<ClipManifestEntry> out;
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (std::size_t i = 0; i < per_class[c]; ++i)
      out.push_back({"c" + std::to_string(c) + "_" + std::to_string(i), "x.wav", DatasetId::Custom,
                     "class" + std::to_string(c), std::nullopt});
  return out;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST(Random, SplitMix64MatchesReferenceSequence) {
  // Reference outputs of splitmix64.c for seed 0.
  SplitMix64 rng(0);
  EXPECT_EQ(rng(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng(), 0x06c45d188009454fULL);
}

TEST(Random, BelowStaysInRangeAndCoversIt) {
  SplitMix64 rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Csv, QuotedFieldsRoundTrip) {
  const std::vector<std::string> fields = {"plain", "with,comma", "with \"quote\"", ""};
  EXPECT_EQ(csv::split_line(csv::join(fields)), fields);
  EXPECT_EQ(csv::split_line("a,\"b,c\",d"), (std::vector<std::string>{"a", "b,c", "d"}));
}

TEST(Vocabulary, BuiltinSizes) {
  EXPECT_EQ(builtin_vocabulary(DatasetId::Esc50).class_count(), 50u);
  EXPECT_EQ(builtin_vocabulary(DatasetId::Us8k).class_count(), 10u);
  EXPECT_EQ(builtin_vocabulary(DatasetId::Tut).class_count(), 18u);
  EXPECT_TRUE(builtin_vocabulary(DatasetId::Us8k).contains("dog bark"));
  EXPECT_TRUE(builtin_vocabulary(DatasetId::Tut).contains("people walking outdoors"));
}

TEST(Vocabulary, RejectsDuplicatesAndParsesIds) {
  EXPECT_THROW(LabelVocabulary(DatasetId::Custom, {"a", "a"}), Error);
  EXPECT_EQ(parse_dataset_id("ESC-50"), DatasetId::Esc50);
  EXPECT_EQ(parse_dataset_id("urbansound8k"), DatasetId::Us8k);
  EXPECT_FALSE(parse_dataset_id("imagenet").has_value());
}

TEST(Manifest, LoadsAndResolvesRelativePaths) {
  TempDir dir("manifest");
  write_file(dir / "m.csv",
             "clip_id,file_path,dataset_id,label\n"
             "# comment\n"
             "a,clips/a.wav,us8k,siren\n"
             "b,/abs/b.wav,us8k,\"dog bark\"\n");
  const auto entries = load_manifest(dir / "m.csv", VocabularySet::builtin());
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].file_path, (dir.path() / "clips/a.wav").lexically_normal().string());
  EXPECT_EQ(entries[1].file_path, "/abs/b.wav");
  EXPECT_EQ(entries[1].label, "dog bark");
}

TEST(Manifest, ErrorKinds) {
  TempDir dir("manifest-err");
  const auto kind_of = [&](const std::string& body) {
    write_file(dir / "m.csv", "clip_id,file_path,dataset_id,label\n" + body);
    try {
      load_manifest(dir / "m.csv", VocabularySet::builtin());
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::BadConfig;  // no error
  };
  EXPECT_EQ(kind_of("a,a.wav,us8k\n"), ErrorKind::MalformedRow);
  EXPECT_EQ(kind_of("a,a.wav,us8k,unicorn\n"), ErrorKind::UnknownLabel);
  EXPECT_EQ(kind_of("a,a.wav,us8k,siren\na,b.wav,us8k,siren\n"), ErrorKind::MalformedRow);
  try {
    load_manifest(dir / "missing.csv", VocabularySet::builtin());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingFile);
  }
}

TEST(Split, Esc50SizedManifestGives24_8_8PerClass) {
  std::vector<ClipManifestEntry> entries;
  const auto vocab = builtin_vocabulary(DatasetId::Esc50);
  for (std::size_t c = 0; c < 50; ++c)
    for (std::size_t i = 0; i < 40; ++i)
      entries.push_back({"e" + std::to_string(c * 40 + i), "x.wav", DatasetId::Esc50, vocab.label(c), std::nullopt});
  ASSERT_EQ(entries.size(), 2000u);
  const auto splits = split_dataset(entries, 42);
  std::map<std::string, std::array<int, 3>> counts;
  for (std::size_t i = 0; i < entries.size(); ++i) ++counts[entries[i].label][static_cast<int>(splits[i].split)];
  ASSERT_EQ(counts.size(), 50u);
  for (const auto& [label, c] : counts) {
    EXPECT_EQ(c[0], 24) << label;
    EXPECT_EQ(c[1], 8) << label;
    EXPECT_EQ(c[2], 8) << label;
  }
}

TEST(Split, PropertiesOverRandomClassSizes) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> sizes(1 + rng.below(6));
    for (auto& s : sizes) s = 5 + rng.below(60);
    auto entries = synthetic_entries(sizes);
    rng.shuffle(entries.begin(), entries.end());
    const auto seed = rng();
    const auto a = split_dataset(entries, seed);
    ASSERT_EQ(a, split_dataset(entries, seed));
    ASSERT_EQ(a.size(), entries.size());
    std::map<std::string, std::array<std::size_t, 3>> counts;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      ASSERT_EQ(a[i].clip_id, entries[i].clip_id);
      ++counts[entries[i].label][static_cast<int>(a[i].split)];
    }
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      const auto& got = counts["class" + std::to_string(c)];
      const double n = static_cast<double>(sizes[c]);
      EXPECT_EQ(got[0], static_cast<std::size_t>(std::lround(0.6 * n)));
      EXPECT_EQ(got[1], static_cast<std::size_t>(std::lround(0.2 * n)));
      EXPECT_EQ(got[0] + got[1] + got[2], sizes[c]);
      EXPECT_GE(got[2], 1u);
    }
  }
}

TEST(Split, IndependentOfInputOrderAndSeedSensitive) {
  auto entries = synthetic_entries({30, 30});
  const auto a = split_dataset(entries, 5);
  std::map<std::string, Split> by_id;
  for (const auto& s : a) by_id[s.clip_id] = s.split;
  std::reverse(entries.begin(), entries.end());
  for (const auto& s : split_dataset(entries, 5)) EXPECT_EQ(by_id.at(s.clip_id), s.split);
  std::reverse(entries.begin(), entries.end());
  EXPECT_NE(a, split_dataset(entries, 6));
}

TEST(Split, ClassTooSmall) {
  try {
    split_dataset(synthetic_entries({10, 4}), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ClassTooSmall);
  }
  EXPECT_NO_THROW(split_dataset(synthetic_entries({5}), 1));
}

TEST(Split, FileRoundTrip) {
  TempDir dir("splits");
  const auto a = split_dataset(synthetic_entries({7, 9}), 3);
  write_splits(dir / "s.csv", a, "abc");
  EXPECT_EQ(read_splits(dir / "s.csv"), a);
}
