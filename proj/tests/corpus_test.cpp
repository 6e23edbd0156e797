#include <gtest/gtest.h>

#include <random>
#include <set>

#include "q2d/corpus.hpp"
#include "support/test_support.hpp"

using namespace q2d;
using namespace q2d::corpus;

namespace {

FileRecord rec(std::string repo, std::string path, std::string lang, std::string content) {
  return make_record(std::move(repo), std::move(path), std::move(lang), std::move(content));
}

std::string tokens(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) s += w + " ";
  return s;
}

std::vector<FileRecord> synthetic_corpus(std::size_t n, std::mt19937_64& rng) {
  static const std::vector<std::string> langs = {"python", "java", "typescript", "go", "rust", "c++"};
  std::vector<FileRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto lang = langs[i % langs.size()];
    std::string body;
    for (int t = 0; t < 30; ++t) body += "tok" + std::to_string(rng() % 400) + " ";
    out.push_back(rec("repo" + std::to_string(i % 7), "file" + std::to_string(i) + ".src", lang, body));
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("q2d_corpus_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  void write(const std::string& rel, const std::string& text) const {
    auto p = path / rel;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
  }
};

}  // namespace

TEST(Records, DigestAndCharCount) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(count_chars("h\xC3\xA9llo"), 5u);
  EXPECT_FALSE(is_ascii("h\xC3\xA9llo"));
  EXPECT_EQ(language_for_extension(".py"), std::optional<std::string>("Python"));
  EXPECT_FALSE(language_for_extension(".txt"));
}

TEST(Filter, ClosedIntervalAndAscii) {
  std::vector<FileRecord> records = {
      rec("r", "a", "python", std::string(2999, 'x')), rec("r", "b", "python", std::string(3000, 'x')),
      rec("r", "c", "python", std::string(15000, 'x')), rec("r", "d", "python", std::string(15001, 'x')),
      rec("r", "e", "python", std::string(3999, 'x') + "\xC3\xA9")};
  FilterParams p;
  auto kept = filter_files(records, p);
  std::vector<std::string> paths;
  for (const auto& r : kept) paths.push_back(r.path);
  EXPECT_EQ(paths, (std::vector<std::string>{"b", "c"}));
  p.ascii_only = false;
  EXPECT_EQ(filter_files(records, p).size(), 3u);
}

TEST(Jaccard, HandCases) {
  EXPECT_EQ(jaccard_unigram("x y z", "x y z"), 1.0);
  EXPECT_EQ(jaccard_unigram("a b c", "d e f"), 0.0);
  EXPECT_EQ(jaccard_unigram("a b c", "a b d"), 0.5);
  EXPECT_EQ(jaccard_unigram("", "  \n"), 1.0);
  EXPECT_EQ(jaccard_unigram("a a a b", "a b"), 1.0);
}

TEST(Jaccard, SymmetricAndReflexive) {
  std::mt19937_64 rng(1);
  auto corpus = synthetic_corpus(60, rng);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(jaccard_unigram(corpus[i].content, corpus[i].content), 1.0);
    for (std::size_t j = i + 1; j < corpus.size(); ++j)
      ASSERT_EQ(jaccard_unigram(corpus[i].content, corpus[j].content),
                jaccard_unigram(corpus[j].content, corpus[i].content));
  }
}

TEST(Dedup, IdenticalFilesKeepOne) {
  auto r = dedup({rec("r", "b.py", "python", "same text"), rec("r", "a.py", "python", "same text")}, 0.8);
  ASSERT_EQ(r.survivors.size(), 1u);
  EXPECT_EQ(r.survivors[0].path, "a.py");
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0].kept, "r/a.py");
}

TEST(Dedup, ThresholdOneKeepsNearDuplicates) {
  auto r = dedup({rec("r", "a", "python", "a b c d"), rec("r", "b", "python", "a b c e")}, 1.0);
  EXPECT_EQ(r.survivors.size(), 2u);
}

TEST(Dedup, ChainIsResolvedByCanonicalOrder) {
  std::vector<std::string> t;
  for (int i = 1; i <= 10; ++i) t.push_back("t" + std::to_string(i));
  auto a = tokens(t);
  auto b = tokens({t.begin(), t.begin() + 9}) + "u1";
  auto c = tokens({t.begin(), t.begin() + 8}) + "u1 u2";
  ASSERT_NEAR(jaccard_unigram(a, b), 9.0 / 11.0, 1e-12);
  ASSERT_NEAR(jaccard_unigram(b, c), 9.0 / 11.0, 1e-12);
  ASSERT_NEAR(jaccard_unigram(a, c), 8.0 / 12.0, 1e-12);
  auto r = dedup({rec("r", "c", "go", c), rec("r", "a", "go", a), rec("r", "b", "go", b)}, 0.8);
  ASSERT_EQ(r.survivors.size(), 2u);
  EXPECT_EQ(r.survivors[0].path, "a");
  EXPECT_EQ(r.survivors[1].path, "c");
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0].dropped, "r/b");
}

TEST(Dedup, IdempotentOnGeneratedCorpora) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<FileRecord> corpus;
    std::size_t n = 2 + rng() % 25;
    std::size_t vocab = 5 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      std::string body;
      std::size_t len = 1 + rng() % 12;
      for (std::size_t k = 0; k < len; ++k) body += "w" + std::to_string(rng() % vocab) + " ";
      corpus.push_back(rec("r" + std::to_string(rng() % 3), "f" + std::to_string(i), "python", body));
    }
    double threshold = 0.3 + 0.7 * static_cast<double>(rng() % 1000) / 999.0;
    auto once = dedup(corpus, threshold);
    auto twice = dedup(once.survivors, threshold);
    ASSERT_EQ(twice.survivors, once.survivors);
    ASSERT_TRUE(twice.dropped.empty());
    ASSERT_EQ(dedup(corpus, threshold, 4).survivors, once.survivors);
  }
}

TEST(Split, DefaultSizesOnSyntheticManifest) {
  std::mt19937_64 rng(9);
  auto corpus = synthetic_corpus(124, rng);
  auto m = stratified_split(corpus, {88, 12, 24}, 42);
  ASSERT_TRUE(m) << m.error();
  EXPECT_EQ(m->count("train"), 88u);
  EXPECT_EQ(m->count("val"), 12u);
  EXPECT_EQ(m->count("test"), 24u);
  EXPECT_TRUE(m->warnings.empty());

  std::set<std::string> seen;
  for (const auto& e : m->entries) EXPECT_TRUE(seen.insert(record_key(e.record)).second);
  std::set<std::string> all;
  for (const auto& r : corpus) all.insert(record_key(r));
  EXPECT_EQ(seen, all);

  std::map<std::string, std::set<std::string>> splits_by_lang;
  for (const auto& e : m->entries) splits_by_lang[e.record.language].insert(e.split);
  for (const auto& [lang, splits] : splits_by_lang) EXPECT_EQ(splits.size(), 3u) << lang;

  auto again = stratified_split(corpus, {88, 12, 24}, 42);
  EXPECT_EQ(to_json(*again).dump(), to_json(*m).dump());
  auto other = stratified_split(corpus, {88, 12, 24}, 43);
  EXPECT_NE(to_json(*other).dump(), to_json(*m).dump());
}

TEST(Split, SubsetSelectionAndProportions) {
  std::mt19937_64 rng(13);
  auto corpus = synthetic_corpus(300, rng);
  auto m = stratified_split(corpus, {88, 12, 24}, 1);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->entries.size(), 124u);
  std::map<std::string, std::size_t> per_lang;
  for (const auto& e : m->entries) ++per_lang[e.record.language];
  for (const auto& [lang, n] : per_lang) {
    EXPECT_GE(n, 20u) << lang;
    EXPECT_LE(n, 21u) << lang;
  }
}

TEST(Split, SingleLanguage) {
  std::mt19937_64 rng(17);
  std::vector<FileRecord> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(rec("r", "f" + std::to_string(i), "python", "x"));
  auto m = stratified_split(corpus, {30, 4, 6}, 7);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->count("train"), 30u);
  EXPECT_EQ(m->count("val"), 4u);
  EXPECT_EQ(m->count("test"), 6u);
}

TEST(Split, InfeasibleStratificationWarns) {
  std::mt19937_64 rng(19);
  auto corpus = synthetic_corpus(60, rng);
  auto m = stratified_split(corpus, {40, 1, 1}, 7);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->count("train"), 40u);
  EXPECT_EQ(m->count("val"), 1u);
  ASSERT_EQ(m->warnings.size(), 1u);
  EXPECT_EQ(m->warnings[0].rfind("InfeasibleStratification", 0), 0u);
}

TEST(Split, Errors) {
  std::mt19937_64 rng(23);
  auto corpus = synthetic_corpus(10, rng);
  EXPECT_FALSE(stratified_split(corpus, {8, 2, 1}, 0));
  EXPECT_FALSE(stratified_split(corpus, {5, 5}, 0));
}

TEST(Split, RatiosUseLargestRemainder) {
  std::vector<double> r = {0.7, 0.1, 0.2};
  EXPECT_EQ(sizes_from_ratios(r, 124), (std::vector<std::size_t>{87, 12, 25}));
  std::vector<double> thirds = {1, 1, 1};
  EXPECT_EQ(sizes_from_ratios(thirds, 10), (std::vector<std::size_t>{4, 3, 3}));
}

TEST(Manifest, JsonRoundTrip) {
  std::mt19937_64 rng(29);
  auto m = stratified_split(synthetic_corpus(30, rng), {20, 5, 5}, 3);
  ASSERT_TRUE(m);
  m->dropped.push_back({"r/x", "r/y", 0.9});
  auto back = manifest_from_json(to_json(*m));
  ASSERT_TRUE(back) << back.error();
  EXPECT_EQ(to_json(*back).dump(), to_json(*m).dump());
}

TEST(Repositories, LicenseAndStars) {
  std::vector<RepositoryMeta> repos = {
      {"a", 10, "MIT"}, {"b", 50, "GPL-3.0"}, {"c", 30, "Apache-2.0"}, {"d", 30, "MIT-0"}, {"e", 5, "MIT"}};
  auto top = select_repositories(repos, default_licenses(), 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].name, "c");
  EXPECT_EQ(top[1].name, "d");
  EXPECT_EQ(top[2].name, "a");
}

TEST(Ingest, DirectoryAndMetadata) {
  TempDir dir;
  dir.write("src/alpha/main.py", "print('a')\n");
  dir.write("src/alpha/notes.txt", "ignored");
  dir.write("src/beta/App.java", "class App {}\n");
  dir.write("src/gamma/lib.rs", "fn main() {}\n");
  auto records = ingest_directory(dir.path / "src");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].repo, "alpha");
  EXPECT_EQ(records[0].path, "main.py");
  EXPECT_EQ(records[0].language, "Python");

  dir.write("meta.json", R"({"root": "src",
    "repositories": [{"name": "alpha", "stars": 5, "license": "MIT"},
                     {"name": "beta", "stars": 9, "license": "GPL-3.0"},
                     {"name": "gamma", "stars": 7, "license": "Apache-2.0"}],
    "files": [{"repo": "alpha", "path": "main.py"}, {"repo": "beta", "path": "App.java"},
              {"repo": "gamma", "path": "lib.rs"}]})");
  auto meta = ingest_metadata(dir.path / "meta.json", default_licenses(), 1);
  ASSERT_TRUE(meta) << meta.error();
  ASSERT_EQ(meta->size(), 1u);
  EXPECT_EQ((*meta)[0].repo, "gamma");
  EXPECT_EQ((*meta)[0].language, "Rust");
  EXPECT_FALSE(ingest_metadata(dir.path / "missing.json", default_licenses(), 1));
}
