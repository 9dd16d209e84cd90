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

#ifndef MBRDIAG_ANOMALY_H_
#define MBRDIAG_ANOMALY_H_

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mbrdiag/core.h"
#include "mbrdiag/utility.h"

namespace mbrdiag {

inline constexpr double kDefaultCovarianceReg = 1e-5;
inline constexpr double kLrdFloor = 1e-12;

inline const std::vector<int>& default_ks() {
  static const std::vector<int> ks = {5, 25, 50, 75, 100};
  return ks;
}

// A text placed in utility space: coords[j] = u(owner_text, candidates[j]).
struct UtilityVector {
  std::string owner_text;
  Eigen::VectorXd coords;
};

UtilityVector embed(const std::string& text, const std::vector<std::string>& candidates,
                    const UtilityFunction& utility, SegmentId segment = kAnySegment);

// Index of the first occurrence of every distinct candidate text.
std::vector<std::size_t> unique_columns(const std::vector<std::string>& candidates);

// Mahalanobis distance of `ref` from the pseudo-reference cloud, using the
// population covariance plus reg * I. `columns` restricts the coordinates
// (empty = all), which is how duplicate candidates are collapsed.
double mahalanobis(const UtilityVector& ref, std::span<const UtilityVector> pseudo,
                   double reg = kDefaultCovarianceReg, std::span<const std::size_t> columns = {});

struct NeighborScore {
  double value = 0.0;
  int requested_k = 0;
  int effective_k = 0;
  bool clamped() const { return effective_k != requested_k; }
};

// Mean distance to the k nearest pseudo-references. k is clamped to the
// number of pseudo-references.
NeighborScore knn_score(const UtilityVector& ref, std::span<const UtilityVector> pseudo, int k);

// Local outlier factor of `ref` against the pseudo-references, which form
// the fitted set (ref is never part of it). Neighborhoods include every
// point tied at the k-distance. k is clamped to |pseudo| - 1.
NeighborScore lof_score(const UtilityVector& ref, std::span<const UtilityVector> pseudo, int k);

// Pairwise distances among the fitted points and to one query, computed
// once and reused for several k.
class NeighborIndex {
 public:
  NeighborIndex(const UtilityVector& query, std::span<const UtilityVector> points);

  std::size_t size() const { return query_dist_.size(); }
  NeighborScore knn(int k) const;
  NeighborScore lof(int k) const;

 private:
  // Distances from the query (or fitted point `self`) sorted by (distance, index).
  std::vector<std::pair<double, std::size_t>> sorted_from_query() const;
  std::vector<std::pair<double, std::size_t>> sorted_from_point(std::size_t self) const;

  std::vector<double> query_dist_;
  Eigen::MatrixXd point_dist_;
};

struct AnomalyEntry {
  SegmentId segment_id = 0;
  double d_m = 0.0;
  std::map<int, double> knn;
  std::map<int, double> lof;
  std::vector<std::string> warnings;
};

struct AnomalyAggregate {
  double d_m = 0.0;
  std::map<int, double> knn;
  std::map<int, double> lof;
};

struct AnomalyReport {
  std::vector<AnomalyEntry> per_segment;
  AnomalyAggregate aggregate;
  double reg = kDefaultCovarianceReg;
  std::vector<int> ks;
  std::string metric_id;
};

// Embeds the reference and every pseudo-reference against the segment's
// candidates and scores the reference.
AnomalyEntry segment_anomaly(const AlignedSegment& segment, const MatrixProvider& provider,
                             std::span<const int> ks, double reg = kDefaultCovarianceReg);

// kNN by mean over segments; d_M and LOF by median.
AnomalyAggregate aggregate_anomaly(std::span<const AnomalyEntry> entries);

AnomalyReport diagnose_anomaly(const AlignedCorpus& corpus, const MatrixProvider& provider,
                               std::span<const int> ks, double reg = kDefaultCovarianceReg,
                               int threads = 1);

std::string anomaly_report_json(const AnomalyReport& report);

// Median with the mean of the two middle values for even counts.
double median(std::vector<double> values);

}  // namespace mbrdiag

#endif  // MBRDIAG_ANOMALY_H_
