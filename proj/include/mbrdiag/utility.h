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

#ifndef MBRDIAG_UTILITY_H_
#define MBRDIAG_UTILITY_H_

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mbrdiag/core.h"

namespace mbrdiag {

// Segment id used when a utility call is not tied to a segment. External
// score tables are then searched across all segments.
inline constexpr SegmentId kAnySegment = -1;

struct Scale {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const Scale&, const Scale&) = default;
};

enum class MetricKind { kChrf, kUnigramF1, kExternal };

struct MetricSpec {
  MetricKind kind = MetricKind::kChrf;
  int order = 6;
  double beta = 2.0;
  std::filesystem::path path;  // external only

  static MetricSpec chrf_metric(int order = 6, double beta = 2.0);
  static MetricSpec unigram_f1_metric();
  static MetricSpec external(std::filesystem::path path);

  // "chrf", "chrf:6:2" (order, beta), "unigram-f1" or "external:<path>".
  static MetricSpec parse(std::string_view text);

  void validate() const;
};

// Character n-gram F-score in [0, 100]. Whitespace counts as a character.
// Orders with no n-grams on either side are left out of the average.
double chrf(std::string_view hypothesis, std::string_view reference, int order = 6,
            double beta = 2.0);

// F1 over whitespace-token multisets, in [0, 1].
double unigram_f1(std::string_view hypothesis, std::string_view reference);

class ExternalScores;

// u(hypothesis, reference) for one MetricSpec. Immutable after construction
// and safe to call from several threads.
class UtilityFunction {
 public:
  explicit UtilityFunction(MetricSpec spec);
  ~UtilityFunction();
  UtilityFunction(UtilityFunction&&) noexcept;
  UtilityFunction& operator=(UtilityFunction&&) noexcept;

  double operator()(std::string_view hypothesis, std::string_view reference,
                    SegmentId segment = kAnySegment) const;

  const MetricSpec& spec() const { return spec_; }
  // Identifier that includes every parameter, e.g. "chrf(order=6,beta=2)".
  std::string metric_id() const;
  Scale scale() const;
  // True when u(a, b) == u(b, a) for all inputs.
  bool symmetric() const { return spec_.kind == MetricKind::kUnigramF1; }

 private:
  MetricSpec spec_;
  std::unique_ptr<ExternalScores> external_;
};

// values(i, j) = u(row_texts[i], col_texts[j]).
struct UtilityMatrix {
  SegmentId segment_id = 0;
  std::vector<std::string> row_texts;
  std::vector<std::string> col_texts;
  Eigen::MatrixXd values;
  std::string metric_id;
  Scale scale;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  // Finite entries inside the declared scale (1e-9 slack). Throws ValidationError.
  void validate() const;
};

UtilityMatrix build_matrix(SegmentId segment_id, const std::vector<std::string>& rows,
                           const std::vector<std::string>& cols, const UtilityFunction& utility,
                           int threads = 1);
inline UtilityMatrix build_matrix(const std::vector<std::string>& rows,
                                  const std::vector<std::string>& cols,
                                  const UtilityFunction& utility) {
  return build_matrix(0, rows, cols, utility);
}

// Matrix JSONL: a header line
//   {"segment_id", "metric_id", "scale": [lo, hi], "rows": [...], "cols": [...]}
// followed by one {"i", "values"} line per row. Several blocks may follow
// each other in one file.
void write_matrix(std::ostream& out, const UtilityMatrix& matrix);
std::vector<UtilityMatrix> read_matrices(std::istream& in, std::string_view source_name);
void save_matrices(const std::filesystem::path& path, const std::vector<UtilityMatrix>& matrices);
std::vector<UtilityMatrix> load_matrices(const std::filesystem::path& path);

// Reads a single-block matrix file and checks its texts against the
// expected row and column lists.
UtilityMatrix load_external_matrix(const std::filesystem::path& path,
                                   const std::vector<std::string>& expected_rows,
                                   const std::vector<std::string>& expected_cols);

// Builds matrices through an optional on-disk cache keyed by metric id and
// a content hash of the row/column texts.
class MatrixProvider {
 public:
  explicit MatrixProvider(const UtilityFunction& utility,
                          std::optional<std::filesystem::path> cache_dir = std::nullopt);

  UtilityMatrix get(SegmentId segment_id, const std::vector<std::string>& rows,
                    const std::vector<std::string>& cols) const;

  const UtilityFunction& utility() const { return *utility_; }

  // Cache file name for a request; exposed for tests.
  std::string cache_key(const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols) const;

 private:
  const UtilityFunction* utility_;
  std::optional<std::filesystem::path> cache_dir_;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace mbrdiag

#endif  // MBRDIAG_UTILITY_H_
