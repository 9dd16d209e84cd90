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

#ifndef MBRDIAG_CORE_H_
#define MBRDIAG_CORE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mbrdiag {

using SegmentId = std::int64_t;

enum class MethodKind { kAncestral, kNucleus, kEpsilon, kBeam };

// A sampling method together with its single hyperparameter:
// nucleus p in (0, 1], epsilon eps in [0, 1), beam width >= 1.
struct SamplingMethod {
  MethodKind kind = MethodKind::kAncestral;
  double param = 0.0;

  static SamplingMethod ancestral() { return {MethodKind::kAncestral, 0.0}; }
  static SamplingMethod nucleus(double p);
  static SamplingMethod epsilon(double eps);
  static SamplingMethod beam(int width);

  // "ancestral", "nucleus", "epsilon" or "beam".
  std::string name() const;
  int beam_width() const { return static_cast<int>(param); }

  // Builds a method from its file representation; throws ValidationError.
  static SamplingMethod from_name(std::string_view name, std::optional<double> param);

  friend bool operator==(const SamplingMethod&, const SamplingMethod&) = default;
};

struct Sample {
  std::string text;
  // Natural-log probability of every generated token, end-of-sequence included.
  std::vector<double> token_logprobs;

  double total_logprob() const;
  double mean_token_logprob() const;

  bool operator==(const Sample&) const = default;
};

struct SampleSet {
  SegmentId segment_id = 0;
  SamplingMethod method;
  std::int64_t seed = 0;
  std::vector<Sample> samples;

  std::vector<std::string> texts() const;
};

struct Reference {
  SegmentId segment_id = 0;
  std::string text;
  std::optional<std::string> source;
};

struct AlignedSegment {
  SegmentId segment_id = 0;
  std::optional<std::string> source;
  std::string reference;
  SampleSet candidates;
  SampleSet pseudo_refs;
};

struct AlignedCorpus {
  std::vector<AlignedSegment> segments;

  bool empty() const { return segments.empty(); }
  std::size_t size() const { return segments.size(); }
};

// Checks the Sample invariants; `where` prefixes the error message.
void validate_sample(const Sample& sample, std::string_view where);

// Sample JSONL. One record per line:
//   {"segment_id", "sample_index", "text", "token_logprobs", "method", "param", "seed"}
// Samples are ordered by sample_index, never by line order. Non-fatal
// oddities (gaps in sample_index) are appended to `warnings` when given.
std::vector<SampleSet> read_sample_sets(std::istream& in, std::string_view source_name,
                                        std::vector<std::string>* warnings = nullptr);
std::vector<SampleSet> load_sample_file(const std::filesystem::path& path,
                                        std::vector<std::string>* warnings = nullptr);
void write_sample_sets(std::ostream& out, const std::vector<SampleSet>& sets);
void save_sample_file(const std::filesystem::path& path, const std::vector<SampleSet>& sets);

// Reference JSONL: {"segment_id", "text", "source"}. Returned sorted by segment_id.
std::vector<Reference> read_references(std::istream& in, std::string_view source_name);
std::vector<Reference> load_reference_file(const std::filesystem::path& path);
void write_references(std::ostream& out, const std::vector<Reference>& refs);
void save_reference_file(const std::filesystem::path& path, const std::vector<Reference>& refs);

// Matches the three inputs by segment_id. Every segment must be present in
// all three; candidates and pseudo_refs may be the same list.
AlignedCorpus align(const std::vector<SampleSet>& candidates,
                    const std::vector<SampleSet>& pseudo_refs,
                    const std::vector<Reference>& references);

// Candidate/pseudo-reference pairing without references.
std::vector<std::pair<SampleSet, SampleSet>> pair_by_segment(
    const std::vector<SampleSet>& candidates, const std::vector<SampleSet>& pseudo_refs);

// Decimal with 17 significant digits; parses back to the identical double.
std::string format_double(double value);

}  // namespace mbrdiag

#endif  // MBRDIAG_CORE_H_
