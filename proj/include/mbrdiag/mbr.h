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

#ifndef MBRDIAG_MBR_H_
#define MBRDIAG_MBR_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbrdiag/core.h"
#include "mbrdiag/utility.h"

namespace mbrdiag {

struct Selection {
  SegmentId segment_id = 0;
  std::size_t chosen_index = 0;
  std::vector<double> expected_utilities;
  std::string chosen_text;

  double expected_utility() const { return expected_utilities.at(chosen_index); }
  friend bool operator==(const Selection&, const Selection&) = default;
};

// Picks the row (candidate) with the highest mean over columns
// (pseudo-references). Ties go to the lowest index.
Selection mbr_select(const UtilityMatrix& matrix);

// Same with an explicit distribution over columns. Weights must be
// non-negative and sum to 1 within 1e-9.
Selection weighted_mbr_select(const UtilityMatrix& matrix, std::span<const double> weights);

struct OracleResult {
  double score = 0.0;
  std::size_t index = 0;
};

// max_i u(candidates[i], reference), lowest index on ties.
OracleResult oracle_score(std::span<const std::string> candidates, std::string_view reference,
                          const UtilityFunction& utility, SegmentId segment = kAnySegment);

enum class PerformanceMode { kMbr, kOracle };

// Per-segment MBR decisions, candidates as rows and pseudo-references as columns.
std::vector<Selection> decode_corpus(const std::vector<std::pair<SampleSet, SampleSet>>& pairs,
                                     const MatrixProvider& provider, int threads = 1);

struct SegmentScore {
  SegmentId segment_id = 0;
  std::size_t chosen_index = 0;
  double score = 0.0;
};

// Score of the selected (MBR) or best (oracle) candidate against the
// reference, per segment in segment_id order.
std::vector<SegmentScore> segment_performance(const AlignedCorpus& corpus,
                                              const MatrixProvider& provider, PerformanceMode mode,
                                              int threads = 1);

// Unweighted mean of segment_performance.
double corpus_performance(const AlignedCorpus& corpus, const MatrixProvider& provider,
                          PerformanceMode mode, int threads = 1);
double corpus_performance(const AlignedCorpus& corpus, const UtilityFunction& utility,
                          PerformanceMode mode, int threads = 1);

// Selections JSONL: {"segment_id", "chosen_index", "chosen_text", "expected_utility"}.
void write_selections(std::ostream& out, const std::vector<Selection>& selections);

}  // namespace mbrdiag

#endif  // MBRDIAG_MBR_H_
