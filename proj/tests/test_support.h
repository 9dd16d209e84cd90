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

#ifndef MBRDIAG_TESTS_TEST_SUPPORT_H_
#define MBRDIAG_TESTS_TEST_SUPPORT_H_

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mbrdiag/core.h"
#include "mbrdiag/synth.h"

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("mbrdiag-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  f << content;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

// One sample with a single token carrying the given log-probability.
inline mbrdiag::Sample make_sample(std::string text, std::vector<double> logprobs = {-1.0}) {
  return {std::move(text), std::move(logprobs)};
}

inline mbrdiag::SampleSet make_set(
    mbrdiag::SegmentId segment, const std::vector<std::string>& texts,
    mbrdiag::SamplingMethod method = mbrdiag::SamplingMethod::ancestral(), std::int64_t seed = 0) {
  mbrdiag::SampleSet set;
  set.segment_id = segment;
  set.method = method;
  set.seed = seed;
  for (const auto& t : texts) set.samples.push_back(make_sample(t));
  return set;
}

// Random LM over tokens t0..t{v-1} plus "</s>" with an explicit row for every
// prefix shorter than max_len. Rows are drawn from Gamma(alpha) weights.
inline mbrdiag::ToyLM random_lm(std::uint64_t seed, int vocab, int max_len, double alpha = 1.0) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<std::string> tokens;
  for (int i = 0; i < vocab; ++i) tokens.push_back("t" + std::to_string(i));
  tokens.push_back("</s>");

  std::map<std::string, std::vector<double>> table;
  std::vector<std::string> frontier = {""};
  for (int depth = 0; depth < max_len; ++depth) {
    std::vector<std::string> next;
    for (const auto& prefix : frontier) {
      std::vector<double> row(tokens.size());
      double sum = 0.0;
      for (auto& p : row) {
        p = gamma(rng) + 1e-3;
        sum += p;
      }
      for (auto& p : row) p /= sum;
      table[prefix] = row;
      for (int t = 0; t < vocab; ++t) {
        next.push_back(prefix.empty() ? tokens[static_cast<std::size_t>(t)]
                                      : prefix + " " + tokens[static_cast<std::size_t>(t)]);
      }
    }
    frontier = std::move(next);
  }
  return mbrdiag::ToyLM(tokens, "</s>", max_len, table);
}

// Word-level toy LM over four words that chrF keeps apart.
inline mbrdiag::ToyLM word_lm(const std::vector<double>& first, const std::vector<double>& rest) {
  std::vector<std::string> vocab = {"river", "bank", "money", "water", "</s>"};
  return mbrdiag::ToyLM(vocab, "</s>", 3, {{"", first}, {"*", rest}});
}

}  // namespace testing_support

#endif  // MBRDIAG_TESTS_TEST_SUPPORT_H_
