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

#ifndef MBRDIAG_SYNTH_H_
#define MBRDIAG_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mbrdiag/core.h"

namespace mbrdiag {

// A fully enumerable autoregressive model. Conditionals are looked up by
// the space-joined token prefix ("" for the empty prefix), falling back to
// the "*" row. Once a prefix holds max_len tokens the end-of-sequence token
// is forced with probability 1.
class ToyLM {
 public:
  ToyLM(std::vector<std::string> vocab, std::string eos, int max_len,
        std::map<std::string, std::vector<double>> table);

  // {"vocab": [...], "eos": "</s>", "max_len": int, "table": {prefix: [probs]}}.
  // "eos" is optional and defaults to "</s>".
  static ToyLM from_json(std::string_view text);
  static ToyLM load(const std::filesystem::path& path);
  std::string to_json() const;

  const std::vector<std::string>& vocab() const { return vocab_; }
  std::size_t eos() const { return eos_; }
  int max_len() const { return max_len_; }

  std::span<const double> next_probs(std::span<const std::size_t> prefix) const;
  // Tokens joined by single spaces, end-of-sequence excluded.
  std::string render(std::span<const std::size_t> tokens) const;

 private:
  std::string prefix_key(std::span<const std::size_t> prefix) const;

  std::vector<std::string> vocab_;
  std::size_t eos_ = 0;
  int max_len_ = 0;
  std::map<std::string, std::vector<double>> table_;
  std::vector<double> forced_eos_;
};

struct EnumeratedSequence {
  std::string text;
  std::vector<std::size_t> tokens;  // end-of-sequence excluded
  std::vector<double> token_logprobs;
  double probability = 0.0;  // product of conditionals
};

struct EnumeratedDist {
  std::vector<EnumeratedSequence> entries;  // depth-first, vocab order
  double coverage = 0.0;

  // Descending probability; equal probabilities keep depth-first order.
  std::vector<EnumeratedSequence> by_probability() const;
  std::vector<std::string> texts() const;
  std::vector<double> probabilities() const;
};

inline constexpr std::size_t kEnumerationLimit = 1'000'000;

EnumeratedDist enumerate(const ToyLM& lm, std::size_t limit = kEnumerationLimit);

// Portable stream generator: std::mt19937_64 (fully specified by the C++
// standard) seeded with stream_seed(); uniform() = (next() >> 11) * 2^-53.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// Per-(seed, segment, stream) sub-seed, a splitmix64 finalizer over
// seed + (segment + 1) * 0x9E3779B97F4A7C15 + stream * 0xD1B54A32D192ED03.
// Stream 0 is used for samples, stream 1 for reference draws.
std::uint64_t stream_seed(std::int64_t seed, SegmentId segment, std::uint64_t stream = 0);

// Next-token weights after truncation: untouched probabilities for kept
// tokens, zero for dropped ones.
std::vector<double> truncate_distribution(std::span<const double> probs,
                                          const SamplingMethod& method);

// Index of the token picked by u in [0, 1) from unnormalized weights.
std::size_t draw_token(std::span<const double> weights, double u);

// n samples for one segment. Stochastic methods draw from the stream
// stream_seed(seed, segment); beam search is deterministic and needs
// n <= width. Recorded log-probabilities are always the untruncated ones.
SampleSet sample(const ToyLM& lm, const SamplingMethod& method, int n, std::int64_t seed,
                 SegmentId segment = 0);

// Finished hypotheses of a width-limited beam search, best first.
std::vector<EnumeratedSequence> beam_search(const ToyLM& lm, int width);

// Ancestral draws used as references.
std::vector<std::string> make_reference_draws(const ToyLM& lm, int n, std::int64_t seed,
                                              SegmentId segment = 0);

// Corpus helpers: segments 0..segments-1.
std::vector<SampleSet> synth_sample_sets(const ToyLM& lm, const SamplingMethod& method, int n,
                                         std::int64_t seed, int segments, int threads = 1);
std::vector<Reference> synth_references(const ToyLM& lm, std::int64_t seed, int segments);

}  // namespace mbrdiag

#endif  // MBRDIAG_SYNTH_H_
