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

#include "mbrdiag/anomaly.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "json.hpp"
#include "mbrdiag/error.h"
#include "mbrdiag/parallel.h"

namespace mbrdiag {
namespace {

double euclidean(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

void check_dims(const UtilityVector& ref, std::span<const UtilityVector> pseudo) {
  for (const auto& p : pseudo) {
    if (p.coords.size() != ref.coords.size()) {
      throw ValidationError("utility vectors differ in length");
    }
  }
}

}  // namespace

UtilityVector embed(const std::string& text, const std::vector<std::string>& candidates,
                    const UtilityFunction& utility, SegmentId segment) {
  if (candidates.empty()) throw ValidationError("embed: no candidates");
  UtilityVector v;
  v.owner_text = text;
  v.coords.resize(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    v.coords[static_cast<Eigen::Index>(j)] = utility(text, candidates[j], segment);
  }
  return v;
}

std::vector<std::size_t> unique_columns(const std::vector<std::string>& candidates) {
  std::vector<std::size_t> keep;
  std::unordered_set<std::string_view> seen;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (seen.insert(candidates[j]).second) keep.push_back(j);
  }
  return keep;
}

double mahalanobis(const UtilityVector& ref, std::span<const UtilityVector> pseudo, double reg,
                   std::span<const std::size_t> columns) {
  if (pseudo.size() < 2) throw ValidationError("mahalanobis: needs at least 2 pseudo-references");
  if (reg < 0.0) throw ValidationError("mahalanobis: negative regularization");
  check_dims(ref, pseudo);

  std::vector<std::size_t> cols(columns.begin(), columns.end());
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(ref.coords.size()));
    std::iota(cols.begin(), cols.end(), std::size_t{0});
  }
  const auto d = static_cast<Eigen::Index>(cols.size());
  const auto n = static_cast<Eigen::Index>(pseudo.size());

  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd r(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const auto src = static_cast<Eigen::Index>(cols[static_cast<std::size_t>(c)]);
    if (src >= ref.coords.size()) throw ValidationError("mahalanobis: column out of range");
    r[c] = ref.coords[src];
    for (Eigen::Index i = 0; i < n; ++i) x(i, c) = pseudo[static_cast<std::size_t>(i)].coords[src];
  }

  Eigen::VectorXd mu(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum += x(i, c);
    mu[c] = sum / static_cast<double>(n);
  }
  const Eigen::VectorXd diff = r - mu;
  if (diff.isZero(0.0)) return 0.0;

  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  cov.diagonal().array() += reg;

  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ComputationError("mahalanobis: covariance is not positive definite");
  }
  const Eigen::VectorXd z = llt.matrixL().solve(diff);
  const double dist = std::sqrt(z.squaredNorm());
  if (!std::isfinite(dist)) throw ComputationError("mahalanobis: non-finite distance");
  return dist;
}

// -- neighbors ----------------------------------------------------------------

NeighborIndex::NeighborIndex(const UtilityVector& query, std::span<const UtilityVector> points) {
  check_dims(query, points);
  const std::size_t n = points.size();
  query_dist_.resize(n);
  point_dist_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    query_dist_[i] = euclidean(query.coords, points[i].coords);
    point_dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      const double d = euclidean(points[i].coords, points[j].coords);
      point_dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
      point_dist_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
  }
}

std::vector<std::pair<double, std::size_t>> NeighborIndex::sorted_from_query() const {
  std::vector<std::pair<double, std::size_t>> out;
  out.reserve(query_dist_.size());
  for (std::size_t j = 0; j < query_dist_.size(); ++j) out.emplace_back(query_dist_[j], j);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<double, std::size_t>> NeighborIndex::sorted_from_point(
    std::size_t self) const {
  std::vector<std::pair<double, std::size_t>> out;
  out.reserve(query_dist_.size());
  for (std::size_t j = 0; j < query_dist_.size(); ++j) {
    if (j == self) continue;
    out.emplace_back(point_dist_(static_cast<Eigen::Index>(self), static_cast<Eigen::Index>(j)), j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

NeighborScore NeighborIndex::knn(int k) const {
  if (k < 1) throw ValidationError("knn: k must be >= 1");
  if (query_dist_.empty()) throw ValidationError("knn: no pseudo-references");
  NeighborScore score;
  score.requested_k = k;
  score.effective_k = static_cast<int>(std::min<std::size_t>(k, query_dist_.size()));
  const auto sorted = sorted_from_query();
  std::vector<std::size_t> nearest;
  for (int i = 0; i < score.effective_k; ++i) {
    nearest.push_back(sorted[static_cast<std::size_t>(i)].second);
  }
  std::sort(nearest.begin(), nearest.end());
  double sum = 0.0;
  for (std::size_t j : nearest) sum += query_dist_[j];
  score.value = sum / score.effective_k;
  return score;
}

NeighborScore NeighborIndex::lof(int k) const {
  if (k < 1) throw ValidationError("lof: k must be >= 1");
  const std::size_t n = query_dist_.size();
  if (n < 2) throw ValidationError("lof: needs at least 2 pseudo-references");
  NeighborScore score;
  score.requested_k = k;
  score.effective_k = static_cast<int>(std::min<std::size_t>(k, n - 1));
  const auto kk = static_cast<std::size_t>(score.effective_k);

  // Neighborhood: every point within the k-distance, in index order.
  auto neighborhood = [kk](const std::vector<std::pair<double, std::size_t>>& sorted,
                           double* k_distance) {
    *k_distance = sorted[kk - 1].first;
    std::vector<std::size_t> members;
    for (const auto& [d, j] : sorted) {
      if (d > *k_distance) break;
      members.push_back(j);
    }
    std::sort(members.begin(), members.end());
    return members;
  };

  std::vector<double> k_dist(n);
  std::vector<std::vector<std::size_t>> hoods(n);
  for (std::size_t i = 0; i < n; ++i) hoods[i] = neighborhood(sorted_from_point(i), &k_dist[i]);

  auto lrd_from = [&](const std::vector<std::size_t>& hood, auto dist_to) {
    double sum = 0.0;
    for (std::size_t o : hood) sum += std::max(k_dist[o], dist_to(o));
    const double mean_reach = sum / static_cast<double>(hood.size());
    return 1.0 / std::max(mean_reach, kLrdFloor);
  };

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    lrd[i] = lrd_from(hoods[i], [&](std::size_t o) {
      return point_dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
    });
  }

  double query_k_dist = 0.0;
  const auto query_hood = neighborhood(sorted_from_query(), &query_k_dist);
  const double query_lrd = lrd_from(query_hood, [&](std::size_t o) { return query_dist_[o]; });

  double sum = 0.0;
  for (std::size_t o : query_hood) sum += lrd[o] / query_lrd;
  score.value = sum / static_cast<double>(query_hood.size());
  return score;
}

NeighborScore knn_score(const UtilityVector& ref, std::span<const UtilityVector> pseudo, int k) {
  if (k < 1) throw ValidationError("knn: k must be >= 1");
  return NeighborIndex(ref, pseudo).knn(k);
}

NeighborScore lof_score(const UtilityVector& ref, std::span<const UtilityVector> pseudo, int k) {
  if (k < 1) throw ValidationError("lof: k must be >= 1");
  if (pseudo.size() < 2) throw ValidationError("lof: needs at least 2 pseudo-references");
  return NeighborIndex(ref, pseudo).lof(k);
}

// -- corpus level ---------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  if (values.size() % 2 == 1) return values[m];
  return (values[m - 1] + values[m]) / 2.0;
}

AnomalyEntry segment_anomaly(const AlignedSegment& segment, const MatrixProvider& provider,
                             std::span<const int> ks, double reg) {
  const auto candidates = segment.candidates.texts();
  auto rows = segment.pseudo_refs.texts();
  rows.push_back(segment.reference);
  const UtilityMatrix m = provider.get(segment.segment_id, rows, candidates);

  const std::size_t n = rows.size() - 1;
  std::vector<UtilityVector> pseudo(n);
  for (std::size_t i = 0; i < n; ++i) {
    pseudo[i] = {rows[i], m.values.row(static_cast<Eigen::Index>(i)).transpose()};
  }
  const UtilityVector ref{segment.reference,
                          m.values.row(static_cast<Eigen::Index>(n)).transpose()};

  AnomalyEntry entry;
  entry.segment_id = segment.segment_id;
  const auto keep = unique_columns(candidates);
  entry.d_m = mahalanobis(ref, pseudo, reg, keep);

  const NeighborIndex index(ref, pseudo);
  for (int k : ks) {
    const NeighborScore knn = index.knn(k);
    const NeighborScore lof = index.lof(k);
    entry.knn[k] = knn.value;
    entry.lof[k] = lof.value;
    if (knn.clamped() || lof.clamped()) {
      entry.warnings.push_back("segment " + std::to_string(segment.segment_id) +
                               ": k=" + std::to_string(k) + " clamped to " +
                               std::to_string(knn.effective_k) + " (kNN) and " +
                               std::to_string(lof.effective_k) + " (LOF) with " +
                               std::to_string(n) + " pseudo-references");
    }
  }
  return entry;
}

AnomalyAggregate aggregate_anomaly(std::span<const AnomalyEntry> entries) {
  if (entries.empty()) throw ValidationError("aggregate_anomaly: no segments");
  AnomalyAggregate agg;
  std::vector<double> dm;
  std::map<int, std::vector<double>> knn;
  std::map<int, std::vector<double>> lof;
  for (const auto& e : entries) {
    dm.push_back(e.d_m);
    for (const auto& [k, v] : e.knn) knn[k].push_back(v);
    for (const auto& [k, v] : e.lof) lof[k].push_back(v);
  }
  agg.d_m = median(dm);
  for (auto& [k, values] : knn) {
    double sum = 0.0;
    for (double v : values) sum += v;
    agg.knn[k] = sum / static_cast<double>(values.size());
  }
  for (auto& [k, values] : lof) agg.lof[k] = median(std::move(values));
  return agg;
}

AnomalyReport diagnose_anomaly(const AlignedCorpus& corpus, const MatrixProvider& provider,
                               std::span<const int> ks, double reg, int threads) {
  AnomalyReport report;
  report.reg = reg;
  report.ks.assign(ks.begin(), ks.end());
  report.metric_id = provider.utility().metric_id();
  report.per_segment.resize(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t s) {
    report.per_segment[s] = segment_anomaly(corpus.segments[s], provider, ks, reg);
  });
  report.aggregate = aggregate_anomaly(report.per_segment);
  return report;
}

std::string anomaly_report_json(const AnomalyReport& report) {
  using nlohmann::ordered_json;
  auto by_k = [](const std::map<int, double>& m) {
    ordered_json out = ordered_json::object();
    for (const auto& [k, v] : m) out[std::to_string(k)] = v;
    return out;
  };
  ordered_json doc;
  ordered_json per = ordered_json::array();
  for (const auto& e : report.per_segment) {
    ordered_json row;
    row["segment_id"] = e.segment_id;
    row["d_m"] = e.d_m;
    row["knn"] = by_k(e.knn);
    row["lof"] = by_k(e.lof);
    if (!e.warnings.empty()) row["warnings"] = e.warnings;
    per.push_back(std::move(row));
  }
  doc["per_segment"] = std::move(per);
  doc["aggregate"] = {{"d_m", report.aggregate.d_m},
                      {"knn", by_k(report.aggregate.knn)},
                      {"lof", by_k(report.aggregate.lof)}};
  doc["config"] = {{"reg", report.reg}, {"ks", report.ks}, {"metric_id", report.metric_id}};
  return doc.dump(2) + "\n";
}

}  // namespace mbrdiag
