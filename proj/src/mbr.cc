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

#include "mbrdiag/mbr.h"

#include <cmath>
#include <ostream>

#include "json.hpp"
#include "mbrdiag/error.h"
#include "mbrdiag/parallel.h"

namespace mbrdiag {
namespace {

Selection select_max(const UtilityMatrix& matrix, std::vector<double> expected) {
  Selection sel;
  sel.segment_id = matrix.segment_id;
  std::size_t best = 0;
  for (std::size_t i = 1; i < expected.size(); ++i) {
    if (expected[i] > expected[best]) best = i;
  }
  sel.chosen_index = best;
  sel.chosen_text = matrix.row_texts.at(best);
  sel.expected_utilities = std::move(expected);
  return sel;
}

}  // namespace

Selection mbr_select(const UtilityMatrix& matrix) {
  if (matrix.rows() == 0 || matrix.cols() == 0) throw ValidationError("mbr_select: empty matrix");
  const auto n = static_cast<double>(matrix.cols());
  std::vector<double> expected(static_cast<std::size_t>(matrix.rows()));
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) sum += matrix.values(i, j);
    expected[static_cast<std::size_t>(i)] = sum / n;
  }
  return select_max(matrix, std::move(expected));
}

Selection weighted_mbr_select(const UtilityMatrix& matrix, std::span<const double> weights) {
  if (matrix.rows() == 0 || matrix.cols() == 0) {
    throw ValidationError("weighted_mbr_select: empty matrix");
  }
  if (weights.size() != static_cast<std::size_t>(matrix.cols())) {
    throw ValidationError("weighted_mbr_select: " + std::to_string(weights.size()) +
                          " weights for " + std::to_string(matrix.cols()) + " columns");
  }
  double total = 0.0;
  bool uniform = true;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("weighted_mbr_select: negative weight");
    total += w;
    uniform = uniform && w == weights[0];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("weighted_mbr_select: weights sum to " + format_double(total));
  }
  // Equal weights reduce to the column mean.
  if (uniform) return mbr_select(matrix);

  std::vector<double> expected(static_cast<std::size_t>(matrix.rows()));
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      sum += weights[static_cast<std::size_t>(j)] * matrix.values(i, j);
    }
    expected[static_cast<std::size_t>(i)] = sum;
  }
  return select_max(matrix, std::move(expected));
}

OracleResult oracle_score(std::span<const std::string> candidates, std::string_view reference,
                          const UtilityFunction& utility, SegmentId segment) {
  if (candidates.empty()) throw ValidationError("oracle_score: no candidates");
  OracleResult best{utility(candidates[0], reference, segment), 0};
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double u = utility(candidates[i], reference, segment);
    if (u > best.score) best = {u, i};
  }
  return best;
}

std::vector<Selection> decode_corpus(const std::vector<std::pair<SampleSet, SampleSet>>& pairs,
                                     const MatrixProvider& provider, int threads) {
  std::vector<Selection> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t s) {
    const auto& [cands, prefs] = pairs[s];
    out[s] = mbr_select(provider.get(cands.segment_id, cands.texts(), prefs.texts()));
  });
  return out;
}

std::vector<SegmentScore> segment_performance(const AlignedCorpus& corpus,
                                              const MatrixProvider& provider, PerformanceMode mode,
                                              int threads) {
  const UtilityFunction& utility = provider.utility();
  std::vector<SegmentScore> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t s) {
    const AlignedSegment& seg = corpus.segments[s];
    const auto texts = seg.candidates.texts();
    SegmentScore score;
    score.segment_id = seg.segment_id;
    if (mode == PerformanceMode::kOracle) {
      const auto oracle = oracle_score(texts, seg.reference, utility, seg.segment_id);
      score.chosen_index = oracle.index;
      score.score = oracle.score;
    } else {
      const auto sel = mbr_select(provider.get(seg.segment_id, texts, seg.pseudo_refs.texts()));
      score.chosen_index = sel.chosen_index;
      score.score = utility(sel.chosen_text, seg.reference, seg.segment_id);
    }
    out[s] = score;
  });
  return out;
}

double corpus_performance(const AlignedCorpus& corpus, const MatrixProvider& provider,
                          PerformanceMode mode, int threads) {
  if (corpus.empty()) throw ValidationError("corpus_performance: empty corpus");
  const auto scores = segment_performance(corpus, provider, mode, threads);
  double sum = 0.0;
  for (const auto& s : scores) sum += s.score;
  return sum / static_cast<double>(scores.size());
}

double corpus_performance(const AlignedCorpus& corpus, const UtilityFunction& utility,
                          PerformanceMode mode, int threads) {
  return corpus_performance(corpus, MatrixProvider(utility), mode, threads);
}

void write_selections(std::ostream& out, const std::vector<Selection>& selections) {
  for (const auto& s : selections) {
    out << "{\"segment_id\": " << s.segment_id << ", \"chosen_index\": " << s.chosen_index
        << ", \"chosen_text\": " << nlohmann::json(s.chosen_text).dump()
        << ", \"expected_utility\": " << format_double(s.expected_utility()) << "}\n";
  }
}

}  // namespace mbrdiag
