#pragma once

// Corpus curation: repository selection from a metadata dump, size/ASCII
// filtering, unigram-Jaccard near-duplicate removal and a seeded
// language-stratified train/val/test split.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "q2d/expected.hpp"
#include "q2d/graph.hpp"
#include "q2d/parallel.hpp"

namespace q2d::corpus {

struct FileRecord {
  std::string repo;
  std::string path;
  std::string language;
  std::size_t char_count = 0;
  std::string digest;  // sha256 hex of content
  std::string content;

  bool operator==(const FileRecord&) const = default;
};

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

/// Characters are UTF-8 code points.
inline std::size_t count_chars(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

inline bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

inline FileRecord make_record(std::string repo, std::string path, std::string language, std::string content) {
  FileRecord r{std::move(repo), std::move(path), std::move(language), count_chars(content), sha256_hex(content),
               std::move(content)};
  return r;
}

inline std::optional<std::string> language_for_extension(std::string_view ext) {
  static const std::map<std::string_view, std::string_view> table = {
      {".c", "C"},          {".h", "C"},         {".cpp", "C++"},      {".cc", "C++"},   {".cxx", "C++"},
      {".hpp", "C++"},      {".hh", "C++"},      {".hxx", "C++"},      {".java", "Java"}, {".py", "Python"},
      {".js", "JavaScript"}, {".mjs", "JavaScript"}, {".jsx", "JavaScript"}, {".ts", "TypeScript"},
      {".tsx", "TypeScript"}, {".rs", "Rust"},   {".php", "PHP"},      {".cs", "C#"},    {".scala", "Scala"},
      {".kt", "Kotlin"},    {".kts", "Kotlin"},  {".go", "Go"}};
  auto it = table.find(ext);
  if (it == table.end()) return std::nullopt;
  return std::string(it->second);
}

// ---------------------------------------------------------------------------
// Ingestion

struct RepositoryMeta {
  std::string name;
  std::size_t stars = 0;
  std::string license;
};

inline const std::vector<std::string>& default_licenses() {
  static const std::vector<std::string> v = {"MIT", "MIT-0", "Apache-2.0"};
  return v;
}

/// The `top_n` most-starred repositories with an allowed license; ties break by name.
inline std::vector<RepositoryMeta> select_repositories(std::vector<RepositoryMeta> repos,
                                                       const std::vector<std::string>& licenses, std::size_t top_n) {
  std::erase_if(repos, [&](const RepositoryMeta& r) {
    return std::find(licenses.begin(), licenses.end(), r.license) == licenses.end();
  });
  std::sort(repos.begin(), repos.end(), [](const RepositoryMeta& a, const RepositoryMeta& b) {
    return a.stars != b.stars ? a.stars > b.stars : a.name < b.name;
  });
  if (repos.size() > top_n) repos.resize(top_n);
  return repos;
}

inline std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Walks `root/<repo>/...`; the first path component is the repository.
/// Files with an unrecognized extension are skipped.
inline std::vector<FileRecord> ingest_directory(const std::filesystem::path& root) {
  std::vector<FileRecord> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto lang = language_for_extension(entry.path().extension().string());
    if (!lang) continue;
    auto rel = std::filesystem::relative(entry.path(), root);
    auto it = rel.begin();
    std::string repo = it->string();
    auto rest = std::filesystem::path();
    for (++it; it != rel.end(); ++it) rest /= *it;
    if (rest.empty()) {
      rest = rel;
      repo = ".";
    }
    auto content = read_file(entry.path());
    if (!content) continue;
    out.push_back(make_record(repo, rest.generic_string(), *lang, std::move(*content)));
  }
  std::sort(out.begin(), out.end(),
            [](const FileRecord& a, const FileRecord& b) { return std::tie(a.repo, a.path) < std::tie(b.repo, b.path); });
  return out;
}

/// Reads a metadata dump: {"root": dir?, "repositories": [{name, stars, license}],
/// "files": [{repo, path, language?}]}. Only files of selected repositories are loaded.
inline Expected<std::vector<FileRecord>, std::string> ingest_metadata(const std::filesystem::path& manifest,
                                                                      const std::vector<std::string>& licenses,
                                                                      std::size_t top_n) {
  auto text = read_file(manifest);
  if (!text) return unexpected("cannot read " + manifest.string());
  Json j = Json::parse(*text, nullptr, false);
  if (j.is_discarded()) return unexpected(manifest.string() + ": malformed JSON");
  try {
    auto root = manifest.parent_path() / j.value("root", std::string("."));
    std::vector<RepositoryMeta> repos;
    for (const auto& r : j.at("repositories"))
      repos.push_back({r.at("name").get<std::string>(), r.value("stars", std::size_t{0}), r.value("license", "")});
    auto chosen = select_repositories(std::move(repos), licenses, top_n);
    std::vector<FileRecord> out;
    for (const auto& f : j.at("files")) {
      auto repo = f.at("repo").get<std::string>();
      if (std::none_of(chosen.begin(), chosen.end(), [&](const RepositoryMeta& r) { return r.name == repo; }))
        continue;
      auto path = f.at("path").get<std::string>();
      std::string lang = f.value("language", "");
      if (lang.empty()) lang = language_for_extension(std::filesystem::path(path).extension().string()).value_or("");
      auto content = read_file(root / repo / path);
      if (!content) return unexpected("missing file " + (root / repo / path).string());
      out.push_back(make_record(repo, path, lang, std::move(*content)));
    }
    std::sort(out.begin(), out.end(), [](const FileRecord& a, const FileRecord& b) {
      return std::tie(a.repo, a.path) < std::tie(b.repo, b.path);
    });
    return out;
  } catch (const Json::exception& e) {
    return unexpected(manifest.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Filtering and deduplication

struct FilterParams {
  std::size_t min_chars = 3000;
  std::size_t max_chars = 15000;
  bool ascii_only = true;
};

/// Keeps records inside the closed interval [min_chars, max_chars].
inline std::vector<FileRecord> filter_files(std::vector<FileRecord> records, const FilterParams& p) {
  std::erase_if(records, [&](const FileRecord& r) {
    if (r.char_count < p.min_chars || r.char_count > p.max_chars) return true;
    return p.ascii_only && !is_ascii(r.content);
  });
  return records;
}

/// Sorted, unique whitespace-delimited tokens.
inline std::vector<std::string_view> unigram_set(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

inline double jaccard_sets(std::span<const std::string_view> a, std::span<const std::string_view> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) ++ia;
    else if (*ib < *ia) ++ib;
    else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  auto uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Jaccard similarity of the two texts' unigram sets; two empty texts count as identical.
inline double jaccard_unigram(std::string_view a, std::string_view b) {
  auto sa = unigram_set(a);
  auto sb = unigram_set(b);
  return jaccard_sets(sa, sb);
}

struct DroppedPair {
  std::string dropped;  // repo/path
  std::string kept;
  double similarity = 0;
};

struct DedupResult {
  std::vector<FileRecord> survivors;
  std::vector<DroppedPair> dropped;
};

inline std::string record_key(const FileRecord& r) { return r.repo + "/" + r.path; }

/// Greedy scan in (repo, path) order: a record is dropped when it is at least
/// `threshold`-similar to any earlier survivor.
inline DedupResult dedup(std::vector<FileRecord> records, double threshold, std::size_t jobs = 1) {
  std::sort(records.begin(), records.end(), [](const FileRecord& a, const FileRecord& b) {
    return std::tie(a.repo, a.path) < std::tie(b.repo, b.path);
  });
  auto sets = parallel_map(records.size(), jobs, [&](std::size_t i) { return unigram_set(records[i].content); });
  DedupResult out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::optional<std::pair<std::size_t, double>> hit;
    for (auto k : kept) {
      double s = jaccard_sets(sets[i], sets[k]);
      if (s >= threshold) {
        hit = {k, s};
        break;
      }
    }
    if (hit) out.dropped.push_back({record_key(records[i]), record_key(records[hit->first]), hit->second});
    else kept.push_back(i);
  }
  for (auto k : kept) out.survivors.push_back(records[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Stratified split

inline const std::vector<std::string>& default_split_names() {
  static const std::vector<std::string> v = {"train", "val", "test"};
  return v;
}

struct SplitEntry {
  FileRecord record;
  std::string split;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  FilterParams filter;
  double jaccard_threshold = 0.8;
  std::vector<std::string> split_names;
  std::vector<std::size_t> sizes;
  std::vector<SplitEntry> entries;  // ordered by split, then repo, then path
  std::vector<DroppedPair> dropped;
  std::vector<std::string> warnings;

  std::size_t count(std::string_view split) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const SplitEntry& e) { return e.split == split; }));
  }
};

/// Largest-remainder apportionment of `total` proportionally to `weights`;
/// ties go to the earlier index.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> out(weights.size(), 0);
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || wsum <= 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double ideal = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<std::size_t>(std::floor(ideal));
    assigned += out[i];
    rem.push_back({ideal - std::floor(ideal), i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < rem.size(); ++k, ++assigned) ++out[rem[k].second];
  return out;
}

inline std::vector<std::size_t> sizes_from_ratios(std::span<const double> ratios, std::size_t n) {
  return apportion(n, ratios);
}

namespace detail {

// Fisher-Yates with rejection sampling; the permutation depends only on the
// generator state, not on the standard library.
template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    std::swap(v[i - 1], v[static_cast<std::size_t>(r % bound)]);
  }
}

}  // namespace detail

/// Seeded split with per-language proportional allocation. Every language
/// with at least as many files as there are splits gets one file in each
/// split when the requested sizes allow it; otherwise a warning is recorded
/// and the split proceeds without that guarantee.
inline Expected<CorpusManifest, std::string> stratified_split(std::vector<FileRecord> records,
                                                             std::vector<std::size_t> sizes, std::uint64_t seed,
                                                             std::vector<std::string> names = default_split_names()) {
  if (names.size() != sizes.size())
    return unexpected("got " + std::to_string(sizes.size()) + " sizes for " + std::to_string(names.size()) + " splits");
  const std::size_t want = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (want > records.size())
    return unexpected("requested " + std::to_string(want) + " files but only " + std::to_string(records.size()) +
                      " are available");
  CorpusManifest m;
  m.seed = seed;
  m.split_names = names;
  m.sizes = sizes;
  if (want == 0) return m;

  std::sort(records.begin(), records.end(), [](const FileRecord& a, const FileRecord& b) {
    return std::tie(a.repo, a.path) < std::tie(b.repo, b.path);
  });
  std::map<std::string, std::vector<FileRecord>> by_lang;
  for (auto& r : records) by_lang[r.language].push_back(std::move(r));
  std::mt19937_64 rng(seed);
  for (auto& [_, group] : by_lang) detail::shuffle(group, rng);

  const std::size_t nl = by_lang.size(), ns = sizes.size();
  std::vector<std::string> langs;
  std::vector<double> avail;
  for (const auto& [lang, group] : by_lang) {
    langs.push_back(lang);
    avail.push_back(static_cast<double>(group.size()));
  }

  // Minimum presence per split.
  std::vector<std::size_t> min(nl, 0);
  std::size_t eligible = 0;
  for (std::size_t l = 0; l < nl; ++l)
    if (avail[l] >= static_cast<double>(ns)) min[l] = ns, ++eligible;
  bool feasible = eligible * ns <= want &&
                  std::all_of(sizes.begin(), sizes.end(), [&](std::size_t s) { return s >= eligible; });
  if (!feasible && eligible > 0) {
    m.warnings.push_back("InfeasibleStratification: split sizes cannot hold every language in every split; "
                         "falling back to proportional allocation");
    std::fill(min.begin(), min.end(), 0);
  }

  // Files taken per language.
  auto take = apportion(want, avail);
  for (std::size_t l = 0; l < nl; ++l) {
    while (take[l] < min[l]) {
      std::size_t donor = nl;
      for (std::size_t d = 0; d < nl; ++d) {
        if (take[d] <= min[d]) continue;
        if (donor == nl || take[d] - min[d] > take[donor] - min[donor]) donor = d;
      }
      if (donor == nl) break;
      --take[donor];
      ++take[l];
    }
  }

  // Language x split matrix with row sums `take` and column sums `sizes`.
  std::vector<std::vector<std::size_t>> x(nl, std::vector<std::size_t>(ns, 0));
  std::vector<std::size_t> row_left(nl), col_left(sizes);
  for (std::size_t l = 0; l < nl; ++l) {
    row_left[l] = take[l];
    if (min[l]) {
      for (std::size_t s = 0; s < ns; ++s) x[l][s] = 1, --col_left[s];
      row_left[l] -= ns;
    }
  }
  const double col_total = static_cast<double>(std::accumulate(col_left.begin(), col_left.end(), std::size_t{0}));
  struct Cell {
    double remainder;
    std::size_t l, s;
  };
  std::vector<Cell> cells;
  std::vector<std::size_t> col_base(col_left);
  for (std::size_t l = 0; l < nl; ++l) {
    std::size_t row_base = row_left[l];
    for (std::size_t s = 0; s < ns; ++s) {
      double ideal = col_total > 0 ? static_cast<double>(row_base) * static_cast<double>(col_base[s]) / col_total : 0;
      auto fl = static_cast<std::size_t>(std::floor(ideal));
      fl = std::min({fl, row_left[l], col_left[s]});
      x[l][s] += fl;
      row_left[l] -= fl;
      col_left[s] -= fl;
      cells.push_back({ideal - std::floor(ideal), l, s});
    }
  }
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.remainder > b.remainder; });
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& c : cells) {
      if (row_left[c.l] > 0 && col_left[c.s] > 0) {
        ++x[c.l][c.s];
        --row_left[c.l];
        --col_left[c.s];
        progress = true;
      }
    }
  }

  std::size_t li = 0;
  for (auto& [lang, group] : by_lang) {
    std::size_t next = 0;
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t k = 0; k < x[li][s]; ++k) m.entries.push_back({std::move(group[next++]), names[s]});
    ++li;
  }
  std::stable_sort(m.entries.begin(), m.entries.end(), [&](const SplitEntry& a, const SplitEntry& b) {
    auto ia = std::find(names.begin(), names.end(), a.split) - names.begin();
    auto ib = std::find(names.begin(), names.end(), b.split) - names.begin();
    return std::tie(ia, a.record.repo, a.record.path) < std::tie(ib, b.record.repo, b.record.path);
  });
  return m;
}

// ---------------------------------------------------------------------------
// Manifest JSON

inline Json to_json(const CorpusManifest& m) {
  Json sizes = Json::object();
  for (std::size_t i = 0; i < m.split_names.size(); ++i) sizes[m.split_names[i]] = m.sizes[i];
  Json records = Json::array();
  for (const auto& e : m.entries)
    records.push_back(Json{{"repo", e.record.repo},
                           {"path", e.record.path},
                           {"language", e.record.language},
                           {"char_count", e.record.char_count},
                           {"sha256", e.record.digest},
                           {"split", e.split}});
  Json dropped = Json::array();
  for (const auto& d : m.dropped)
    dropped.push_back(Json{{"dropped", d.dropped}, {"kept", d.kept}, {"similarity", d.similarity}});
  return Json{{"seed", m.seed},
              {"filter",
               {{"min_chars", m.filter.min_chars},
                {"max_chars", m.filter.max_chars},
                {"ascii_only", m.filter.ascii_only},
                {"jaccard", m.jaccard_threshold}}},
              {"sizes", std::move(sizes)},
              {"records", std::move(records)},
              {"dropped_duplicates", std::move(dropped)},
              {"warnings", m.warnings}};
}

/// Reads a manifest back; record contents are not stored, so `content` stays empty.
inline Expected<CorpusManifest, std::string> manifest_from_json(const Json& j) {
  try {
    CorpusManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& f = j.at("filter");
    m.filter = {f.at("min_chars").get<std::size_t>(), f.at("max_chars").get<std::size_t>(),
                f.at("ascii_only").get<bool>()};
    m.jaccard_threshold = f.at("jaccard").get<double>();
    for (const auto& [name, size] : j.at("sizes").items()) {
      m.split_names.push_back(name);
      m.sizes.push_back(size.get<std::size_t>());
    }
    for (const auto& r : j.at("records")) {
      FileRecord rec;
      rec.repo = r.at("repo").get<std::string>();
      rec.path = r.at("path").get<std::string>();
      rec.language = r.at("language").get<std::string>();
      rec.char_count = r.at("char_count").get<std::size_t>();
      rec.digest = r.at("sha256").get<std::string>();
      m.entries.push_back({std::move(rec), r.at("split").get<std::string>()});
    }
    for (const auto& d : j.at("dropped_duplicates"))
      m.dropped.push_back({d.at("dropped").get<std::string>(), d.at("kept").get<std::string>(),
                           d.at("similarity").get<double>()});
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    return m;
  } catch (const Json::exception& e) {
    return unexpected(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace q2d::corpus
