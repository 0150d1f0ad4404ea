#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "kmmd/pipeline.hpp"
#include "support.hpp"

using namespace kmmd;
using namespace kmmd::testing;

namespace {

struct Sample {
  Corpus corpus;
  EmbeddingMatrix embeddings;
  [[nodiscard]] EmbeddedCorpus view() const { return {corpus, embeddings}; }
};

/// Documents with the given categories and Gaussian embeddings; ids "<prefix><i>", seq = i.
Sample make_sample(const std::string& prefix, const std::vector<std::optional<std::string>>& categories,
                   std::size_t dim, std::mt19937_64& rng, double shift = 0.0) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    docs.push_back({prefix + std::to_string(i), "title " + std::to_string(i), categories[i], i});
  }
  auto rows = gaussian_rows(categories.size(), dim, rng, std::vector<double>(dim, shift));
  return {Corpus(prefix, docs), make_matrix(rows, false, prefix)};
}

std::vector<std::optional<std::string>> repeat(const std::vector<std::pair<std::string, std::size_t>>& spec) {
  std::vector<std::optional<std::string>> out;
  for (const auto& [cat, count] : spec) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(cat.empty() ? std::nullopt : std::optional(cat));
  }
  return out;
}

AnalysisSettings quick_settings() {
  AnalysisSettings s;
  s.permutations = 30;
  s.alpha = 0.05;
  s.seed = 99;
  return s;
}

std::string csv_of(const GroupReport& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

}  // namespace

TEST(CategoryMmd, RowsForLargeCategoriesAndMergedOther) {
  std::mt19937_64 rng(1);
  const auto field = make_sample("f", repeat({{"Games", 6}, {"Art", 5}, {"Music", 2}, {"", 1}, {"Other", 1}}), 4, rng);
  const auto gen = make_sample("g", repeat({{"", 8}}), 4, rng);
  const auto report = category_mmd(field.view(), gen.view(), quick_settings(), 5);

  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].label, "Art");
  EXPECT_EQ(report.rows[1].label, "Games");
  EXPECT_EQ(report.rows[2].label, "Other");
  EXPECT_EQ(report.rows[0].result.m, 5u);
  EXPECT_EQ(report.rows[1].result.m, 6u);
  EXPECT_EQ(report.rows[2].result.m, 4u);  // Music (2) + uncategorized (1) + literal "Other" (1)
  ASSERT_TRUE(report.overall.has_value());
  EXPECT_EQ(report.overall->m, 15u);
  for (const auto& row : report.rows) EXPECT_EQ(row.result.n, 8u);
  EXPECT_EQ(report.omitted_documents, 0u);
}

TEST(CategoryMmd, PartitionCoversFieldExactlyOnce) {
  std::mt19937_64 rng(2);
  const auto field = make_sample("f", repeat({{"A", 9}, {"B", 3}, {"C", 12}, {"D", 1}, {"", 4}}), 3, rng);
  const auto gen = make_sample("g", repeat({{"", 6}}), 3, rng);
  for (std::size_t min_group : {1u, 2u, 4u, 10u, 50u}) {
    const auto report = category_mmd(field.view(), gen.view(), quick_settings(), min_group);
    std::size_t covered = report.omitted_documents;
    std::set<std::string> labels;
    for (const auto& row : report.rows) {
      covered += row.result.m;
      EXPECT_TRUE(labels.insert(row.label).second) << row.label;
    }
    EXPECT_EQ(covered, field.corpus.size()) << "min_group=" << min_group;
  }
}

TEST(CategoryMmd, AllBelowThresholdGivesOtherAndOverall) {
  std::mt19937_64 rng(3);
  const auto field = make_sample("f", repeat({{"A", 3}, {"B", 4}}), 3, rng);
  const auto gen = make_sample("g", repeat({{"", 5}}), 3, rng);
  const auto report = category_mmd(field.view(), gen.view(), quick_settings());
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].label, "Other");
  EXPECT_EQ(report.rows[0].result.m, 7u);
  EXPECT_TRUE(report.overall.has_value());
}

TEST(CategoryMmd, SingletonOtherIsOmitted) {
  std::mt19937_64 rng(4);
  const auto field = make_sample("f", repeat({{"A", 5}, {"B", 1}}), 3, rng);
  const auto gen = make_sample("g", repeat({{"", 5}}), 3, rng);
  const auto report = category_mmd(field.view(), gen.view(), quick_settings(), 2);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].label, "A");
  EXPECT_EQ(report.omitted_documents, 1u);
}

TEST(CategoryMmd, RowSeedsDependOnlyOnLabel) {
  std::mt19937_64 rng(5);
  const auto gen = make_sample("g", repeat({{"", 6}}), 3, rng);
  const auto two = make_sample("f", repeat({{"A", 4}, {"B", 4}}), 3, rng);
  const auto report = category_mmd(two.view(), gen.view(), quick_settings(), 2);
  EXPECT_EQ(report.rows[0].result.seed, row_seed(99, "A"));
  EXPECT_EQ(report.rows[1].result.seed, row_seed(99, "B"));
  EXPECT_EQ(report.overall->seed, row_seed(99, "Overall"));
  EXPECT_NE(row_seed(99, "A"), row_seed(99, "B"));
}

TEST(CategoryMmd, MisalignedEmbeddingsRejected) {
  std::mt19937_64 rng(6);
  const auto field = make_sample("f", repeat({{"A", 4}}), 3, rng);
  const auto gen = make_sample("g", repeat({{"", 4}}), 3, rng);
  const EmbeddedCorpus wrong{field.corpus, gen.embeddings};
  EXPECT_THROW(category_mmd(wrong, gen.view(), quick_settings()), DataError);
}

TEST(WindowMmd, LabelsAndPartition) {
  std::mt19937_64 rng(7);
  const auto gen = make_sample("g", repeat({{"", 23}}), 3, rng);
  const auto field = make_sample("f", repeat({{"", 6}}), 3, rng);
  const auto report = window_mmd(gen.view(), field.view(), quick_settings(), 5);
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[0].label, "1-5");
  EXPECT_EQ(report.rows[1].label, "6-10");
  EXPECT_EQ(report.rows[3].label, "16-20");
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.result.m, 5u);
    EXPECT_EQ(row.result.n, 6u);
  }
  EXPECT_FALSE(report.overall.has_value());
}

TEST(WindowMmd, WindowsFollowSeqOrder) {
  // Reverse the seq order: the first window must hold the rows with seq 0..2.
  std::mt19937_64 rng(8);
  std::vector<Document> docs;
  Rows rows;
  for (std::size_t i = 0; i < 6; ++i) {
    docs.push_back({"g" + std::to_string(i), "t", {}, 5 - i});
    rows.push_back({static_cast<double>(5 - i), 1.0});
  }
  const Corpus corpus("g", docs);
  const auto emb = make_matrix(rows, false, "g");
  const auto field = make_sample("f", repeat({{"", 4}}), 2, rng);
  const auto report = window_mmd({corpus, emb}, field.view(), quick_settings(), 3);
  ASSERT_EQ(report.rows.size(), 2u);

  std::vector<std::size_t> first{5, 4, 3};
  const auto expected = mmd_test(emb.select(first), field.embeddings, quick_settings().spec, 30, 0.05,
                                 row_seed(99, "1-3"));
  EXPECT_EQ(report.rows[0].result.estimate, expected.estimate);
}

TEST(WindowMmd, ExactlyOneWindowAndTooFew) {
  std::mt19937_64 rng(9);
  const auto gen = make_sample("g", repeat({{"", 5}}), 3, rng);
  const auto field = make_sample("f", repeat({{"", 5}}), 3, rng);
  EXPECT_EQ(window_mmd(gen.view(), field.view(), quick_settings(), 5).rows.size(), 1u);
  EXPECT_THROW(window_mmd(gen.view(), field.view(), quick_settings(), 6), DataError);
  EXPECT_THROW(window_mmd(gen.view(), field.view(), quick_settings(), 1), DataError);
}

TEST(Sweep, MinimumSizeAndValidation) {
  std::mt19937_64 rng(10);
  const auto x = make_matrix(gaussian_rows(6, 3, rng));
  const auto y = make_matrix(gaussian_rows(7, 3, rng));
  const auto report = sample_size_sweep(x, y, {2}, 3, quick_settings());
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].sample_size, 2u);
  EXPECT_EQ(report.rows[0].trials, 3u);
  EXPECT_GE(report.rows[0].rejection_rate, 0.0);
  EXPECT_LE(report.rows[0].rejection_rate, 1.0);
  EXPECT_THROW(sample_size_sweep(x, y, {7}, 1, quick_settings()), DataError);
  EXPECT_THROW(sample_size_sweep(x, y, {1}, 1, quick_settings()), DataError);
  EXPECT_THROW(sample_size_sweep(x, y, {2}, 0, quick_settings()), DataError);
}

TEST(Sweep, SizesSortedAndDeterministic) {
  std::mt19937_64 rng(11);
  const auto x = make_matrix(gaussian_rows(20, 3, rng));
  const auto y = make_matrix(gaussian_rows(20, 3, rng, {2.0, 2.0, 2.0}));
  const auto a = sample_size_sweep(x, y, {10, 3, 5, 10}, 4, quick_settings());
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_EQ(a.rows[0].sample_size, 3u);
  EXPECT_EQ(a.rows[2].sample_size, 10u);
  const auto b = sample_size_sweep(x, y, {3, 5, 10}, 4, quick_settings());
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.rows[2].rejection_rate, 1.0);
}

TEST(WordFrequency, RankingAndTies) {
  TokenizerConfig keep;
  keep.remove_stopwords = false;
  const Corpus abc("c", {{"1", "a a b", {}, {}}});
  EXPECT_EQ(word_frequency_report(abc, keep, 10),
            (std::vector<std::pair<std::string, std::size_t>>{{"a", 2}, {"b", 1}}));
  const Corpus ties("c", {{"1", "y x y x y x z", {}, {}}});
  const auto ranked = word_frequency_report(ties, keep, 2);
  EXPECT_EQ(ranked, (std::vector<std::pair<std::string, std::size_t>>{{"x", 3}, {"y", 3}}));
  const Corpus none("c", {{"1", "the of", {}, {}}});
  EXPECT_THROW(word_frequency_report(none, {}, 5), DataError);
}

TEST(Reports, DeterministicAndCarryDigest) {
  std::mt19937_64 rng(12);
  const auto field = make_sample("f", repeat({{"A", 5}, {"B", 5}}), 3, rng);
  const auto gen = make_sample("g", repeat({{"", 6}}), 3, rng);
  const auto a = category_mmd(field.view(), gen.view(), quick_settings(), 3);
  const auto b = category_mmd(field.view(), gen.view(), quick_settings(), 3);
  EXPECT_EQ(csv_of(a), csv_of(b));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(a.config_digest.size(), 16u);

  const std::string text = csv_of(a);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "label,estimate,lower,upper,p_value,significant,m,n,kernel,permutations,alpha,seed,config_digest");
  std::size_t data_rows = 0;
  while (std::getline(lines, line)) {
    ++data_rows;
    EXPECT_NE(line.find(a.config_digest), std::string::npos) << line;
  }
  EXPECT_EQ(data_rows, a.rows.size() + 1);

  auto other = quick_settings();
  other.seed = 100;
  EXPECT_NE(category_mmd(field.view(), gen.view(), other, 3).config_digest, a.config_digest);
  EXPECT_NE(category_mmd(field.view(), gen.view(), quick_settings(), 4).config_digest, a.config_digest);
}

TEST(Reports, ConfigDigestIsStableAndSensitive) {
  AnalysisSettings s;
  const auto d = config_digest("x", s);
  EXPECT_EQ(d, config_digest("x", s));
  EXPECT_NE(d, config_digest("y", s));
  s.spec = KernelSpec::linear();
  EXPECT_NE(d, config_digest("x", s));
}
