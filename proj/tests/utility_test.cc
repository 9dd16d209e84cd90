// Copyright 2026 The mbrdiag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mbrdiag/utility.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mbrdiag/error.h"
#include "oracles.h"
#include "test_support.h"

using namespace mbrdiag;
using testing_support::TempDir;

namespace {

std::string random_text(std::mt19937_64& rng, int max_len) {
  static const char* alphabet[] = {"a", "b", "c", " ", "\xc3\xa9", "d"};
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<int> pick(0, 5);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s += alphabet[pick(rng)];
  return s;
}

std::string random_words(std::mt19937_64& rng, int max_words) {
  static const char* words[] = {"the", "cat", "sat", "on", "mat", "a"};
  std::uniform_int_distribution<int> len(0, max_words);
  std::uniform_int_distribution<int> pick(0, 5);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += words[pick(rng)];
  }
  return s;
}

}  // namespace

TEST_CASE("chrf hand cases") {
  CHECK(chrf("abc", "abc") == 100.0);
  CHECK(chrf("abc", "xyz") == 0.0);
  CHECK(chrf("", "") == 100.0);
  CHECK(chrf("abc", "") == 0.0);
  CHECK(chrf("", "abc") == 0.0);
  // 1-grams match fully; 2-grams {ab, ba, ab} vs {ab, bb, ba} share 2 of 3.
  CHECK(chrf("abab", "abba", 2, 2.0) == doctest::Approx(250.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(chrf("a", "a", 0), ValidationError);
  CHECK_THROWS_AS(chrf("a", "a", 6, 0.0), ValidationError);
}

TEST_CASE("chrf skips orders with no n-grams on either side") {
  // "ab" vs "ab" at order 6: only orders 1 and 2 exist.
  CHECK(chrf("ab", "ab") == 100.0);
  // "a" vs "ab": order 1 P=1 R=1/2, order 2 has n-grams only in the reference.
  const double f1 = 5.0 * 1.0 * 0.5 / (4.0 * 1.0 + 0.5);
  CHECK(chrf("a", "ab", 6, 2.0) == doctest::Approx(100.0 * f1 / 2.0).epsilon(1e-15));
}

TEST_CASE("chrf counts code points, not bytes") {
  CHECK(chrf("\xc3\xa9", "\xc3\xa9") == 100.0);
  CHECK(chrf("\xc3\xa9", "\xc3\xa8") == 0.0);
  CHECK(chrf("a\xc3\xa9", "a\xc3\xa8", 1) == doctest::Approx(50.0));
}

TEST_CASE("chrf agrees with a brute-force n-gram oracle") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 3000; ++i) {
    const auto h = random_text(rng, 9);
    const auto r = random_text(rng, 9);
    const int order = 1 + static_cast<int>(rng() % 6);
    const double beta = 0.5 + static_cast<double>(rng() % 4);
    CHECK(chrf(h, r, order, beta) ==
          doctest::Approx(oracle::chrf(h, r, order, beta)).epsilon(1e-12));
  }
}

TEST_CASE("unigram F1 hand cases") {
  CHECK(unigram_f1("a b", "a b") == 1.0);
  CHECK(unigram_f1("a b", "c d") == 0.0);
  CHECK(unigram_f1("a a b", "a b b") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(unigram_f1("", "") == 1.0);
  CHECK(unigram_f1("a", "") == 0.0);
  CHECK(unigram_f1("  ", "") == 1.0);
}

TEST_CASE("unigram F1 agrees with a multiset oracle and is symmetric") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto h = random_words(rng, 6);
    const auto r = random_words(rng, 6);
    CHECK(unigram_f1(h, r) == doctest::Approx(oracle::unigram_f1(h, r)).epsilon(1e-15));
    CHECK(unigram_f1(h, r) == unigram_f1(r, h));
  }
}

TEST_CASE("self-utility is the scale maximum") {
  std::mt19937_64 rng(9);
  const UtilityFunction c(MetricSpec::chrf_metric());
  const UtilityFunction f(MetricSpec::unigram_f1_metric());
  for (int i = 0; i < 500; ++i) {
    auto s = random_text(rng, 12);
    if (s.empty()) s = "x";
    CHECK(c(s, s) == c.scale().hi);
    auto w = random_words(rng, 5);
    if (w.empty()) w = "x";
    CHECK(f(w, w) == f.scale().hi);
  }
}

TEST_CASE("metric spec parsing and ids") {
  CHECK(UtilityFunction(MetricSpec::parse("chrf")).metric_id() == "chrf(order=6,beta=2)");
  CHECK(UtilityFunction(MetricSpec::parse("chrf:4:1.5")).metric_id() == "chrf(order=4,beta=1.5)");
  CHECK(UtilityFunction(MetricSpec::parse("unigram-f1")).metric_id() == "unigram_f1");
  CHECK(UtilityFunction(MetricSpec::parse("chrf")).scale() == Scale{0.0, 100.0});
  CHECK(UtilityFunction(MetricSpec::parse("unigram-f1")).scale() == Scale{0.0, 1.0});
  CHECK(MetricSpec::parse("external:/x/y.jsonl").path == "/x/y.jsonl");
  CHECK_THROWS_AS(MetricSpec::parse("bleu"), ValidationError);
  CHECK_THROWS_AS(MetricSpec::parse("chrf:0"), ValidationError);
  CHECK_THROWS_AS(MetricSpec::parse("chrf:x"), ValidationError);
  CHECK_THROWS_AS(MetricSpec::parse("external:"), ValidationError);
}

TEST_CASE("build_matrix hand cases") {
  const UtilityFunction f(MetricSpec::unigram_f1_metric());
  const auto one = build_matrix({"x"}, {"x"}, f);
  CHECK(one.rows() == 1);
  CHECK(one.values(0, 0) == 1.0);

  const auto m = build_matrix({"a", "b"}, {"a"}, f);
  CHECK(m.values(0, 0) == 1.0);
  CHECK(m.values(1, 0) == 0.0);
  CHECK(m.metric_id == "unigram_f1");
  CHECK_THROWS_AS(build_matrix({}, {"a"}, f), ValidationError);
}

TEST_CASE("build_matrix matches per-pair calls and ignores the thread count") {
  std::mt19937_64 rng(13);
  const UtilityFunction c(MetricSpec::chrf_metric());
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  for (int i = 0; i < 12; ++i) rows.push_back(random_text(rng, 10));
  for (int i = 0; i < 9; ++i) cols.push_back(random_text(rng, 10));
  const auto m1 = build_matrix(4, rows, cols, c, 1);
  const auto m3 = build_matrix(4, rows, cols, c, 3);
  CHECK(m1.segment_id == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      CHECK(m1.values(ii, jj) == c(rows[i], cols[j]));
      CHECK(m1.values(ii, jj) == m3.values(ii, jj));
    }
  }
}

TEST_CASE("build_matrix is permutation-equivariant") {
  std::mt19937_64 rng(17);
  const UtilityFunction c(MetricSpec::chrf_metric());
  std::vector<std::string> rows;
  for (int i = 0; i < 8; ++i) rows.push_back(random_text(rng, 8));
  const std::vector<std::string> cols = {"abc", "b a", "\xc3\xa9"};
  auto perm = rows;
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto m = build_matrix(rows, cols, c);
  const auto p = build_matrix(perm, cols, c);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto src =
        static_cast<Eigen::Index>(std::find(rows.begin(), rows.end(), perm[i]) - rows.begin());
    CHECK(p.values.row(static_cast<Eigen::Index>(i)) == m.values.row(src));
  }
}

TEST_CASE("unigram F1 matrices are symmetric when rows equal cols") {
  std::mt19937_64 rng(19);
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back(random_words(rng, 5));
  const auto m = build_matrix(texts, texts, UtilityFunction(MetricSpec::unigram_f1_metric()));
  CHECK(m.values == m.values.transpose());
}

TEST_CASE("matrix JSONL round-trips bit-exactly") {
  TempDir dir;
  std::mt19937_64 rng(23);
  const UtilityFunction c(MetricSpec::chrf_metric());
  std::vector<std::string> rows;
  for (int i = 0; i < 5; ++i) rows.push_back(random_text(rng, 8));
  const std::vector<std::string> cols = {"x\"y", "tab\there", "\xc3\xa9t\xc3\xa9"};
  const auto a = build_matrix(0, rows, cols, c);
  const auto b = build_matrix(1, cols, rows, c);
  save_matrices(dir / "m.jsonl", {a, b});
  const auto back = load_matrices(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].values == a.values);
  CHECK(back[1].values == b.values);
  CHECK(back[1].row_texts == cols);
  CHECK(back[0].metric_id == a.metric_id);
  CHECK(back[0].scale == a.scale);
}

TEST_CASE("load_external_matrix checks shape and texts") {
  TempDir dir;
  const UtilityFunction f(MetricSpec::unigram_f1_metric());
  const std::vector<std::string> rows = {"a", "b"};
  const std::vector<std::string> cols = {"a", "b", "c"};
  save_matrices(dir / "m.jsonl", {build_matrix(rows, cols, f)});

  const auto m = load_external_matrix(dir / "m.jsonl", rows, cols);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);

  auto message = [&](const std::vector<std::string>& r, const std::vector<std::string>& c) {
    try {
      load_external_matrix(dir / "m.jsonl", r, c);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({"a", "x"}, cols).find("row text mismatch at row 1") != std::string::npos);
  CHECK(message(rows, {"a", "b", "z"}).find("column text mismatch at column 2") !=
        std::string::npos);
  CHECK(message({"a"}, cols).find("shape mismatch") != std::string::npos);
}

TEST_CASE("malformed matrix files are rejected") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return read_matrices(in, "m.jsonl");
  };
  const std::string header =
      "{\"segment_id\": 0, \"metric_id\": \"m\", \"scale\": [0, 1], \"rows\": [\"a\", \"b\"], "
      "\"cols\": [\"x\"]}\n";
  CHECK(read(header + "{\"i\": 0, \"values\": [0.5]}\n{\"i\": 1, \"values\": [1]}\n").size() == 1);
  CHECK_THROWS_AS(read(header + "{\"i\": 0, \"values\": [0.5]}\n"), ValidationError);
  CHECK_THROWS_AS(read(header + "{\"i\": 0, \"values\": [0.5, 1]}\n"), ValidationError);
  CHECK_THROWS_AS(read(header + "{\"i\": 0, \"values\": [0.5]}\n{\"i\": 0, \"values\": [1]}\n"),
                  ValidationError);
  CHECK_THROWS_AS(read(header + "{\"i\": 0, \"values\": [0.5]}\n{\"i\": 1, \"values\": [2]}\n"),
                  ValidationError);
  CHECK_THROWS_AS(read("{\"i\": 0, \"values\": [0.5]}\n"), ValidationError);
  CHECK(read("").empty());
}

TEST_CASE("external metric looks scores up by segment and text") {
  TempDir dir;
  UtilityMatrix m0;
  m0.segment_id = 0;
  m0.row_texts = {"h"};
  m0.col_texts = {"r"};
  m0.values = Eigen::MatrixXd::Constant(1, 1, 0.25);
  m0.metric_id = "comet22";
  m0.scale = {0.0, 1.0};
  UtilityMatrix m1 = m0;
  m1.segment_id = 1;
  m1.values(0, 0) = 0.75;
  save_matrices(dir / "ext.jsonl", {m0, m1});

  const UtilityFunction u(MetricSpec::external(dir / "ext.jsonl"));
  CHECK(u.metric_id() == "comet22");
  CHECK(u("h", "r", 0) == 0.25);
  CHECK(u("h", "r", 1) == 0.75);
  CHECK(u("h", "r") == 0.25);
  CHECK_THROWS_AS(u("h", "missing", 0), ValidationError);
  CHECK_THROWS_AS(u("h", "r", 5), ValidationError);
  CHECK_THROWS_AS(build_matrix(0, {"h"}, {"r", "q"}, u), ValidationError);
}

TEST_CASE("matrix cache stores and reuses matrices") {
  TempDir dir;
  const UtilityFunction c(MetricSpec::chrf_metric());
  const std::vector<std::string> rows = {"ab", "cd"};
  const std::vector<std::string> cols = {"abc"};
  const MatrixProvider cached(c, dir.path());
  const MatrixProvider direct(c);

  const auto first = cached.get(0, rows, cols);
  const auto cache_file = dir / (cached.cache_key(rows, cols) + ".jsonl");
  CHECK(std::filesystem::exists(cache_file));
  const auto bytes = testing_support::read_text(cache_file);
  const auto second = cached.get(0, rows, cols);
  CHECK(second.values == first.values);
  CHECK(second.values == direct.get(0, rows, cols).values);
  CHECK(testing_support::read_text(cache_file) == bytes);

  CHECK(cached.cache_key(rows, cols) != cached.cache_key(cols, rows));
  CHECK(cached.cache_key({"a", "b"}, cols) != cached.cache_key({"ab"}, cols));
  const UtilityFunction c4(MetricSpec::chrf_metric(4));
  CHECK(MatrixProvider(c4, dir.path()).cache_key(rows, cols) != cached.cache_key(rows, cols));
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}
