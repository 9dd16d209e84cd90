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

#include "mbrdiag/properties.h"

#include <cmath>
#include <unordered_set>

#include "json.hpp"
#include "mbrdiag/error.h"
#include "mbrdiag/parallel.h"

namespace mbrdiag {

double avg_log_prob(std::span<const SampleSet> sets) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& set : sets) {
    for (const auto& s : set.samples) {
      if (s.token_logprobs.empty()) throw ValidationError("avg_log_prob: sample without tokens");
      sum += s.mean_token_logprob();
      ++count;
    }
  }
  if (count == 0) throw ValidationError("avg_log_prob: no samples");
  return sum / static_cast<double>(count);
}

double cum_prob_mass(std::span<const SampleSet> sets) {
  if (sets.empty()) throw ValidationError("cum_prob_mass: no segments");
  double total = 0.0;
  for (const auto& set : sets) {
    std::unordered_set<std::string_view> seen;
    double mass = 0.0;
    for (const auto& s : set.samples) {
      if (seen.insert(s.text).second) mass += std::exp(s.total_logprob());
    }
    total += mass;
  }
  return 100.0 * total / static_cast<double>(sets.size());
}

double cand_sim(const SampleSet& pseudo, const SampleSet& candidates,
                const MatrixProvider& provider) {
  if (pseudo.samples.empty() || candidates.samples.empty()) {
    throw ValidationError("cand_sim: empty sample set");
  }
  const auto m = provider.get(pseudo.segment_id, pseudo.texts(), candidates.texts());
  return m.values.sum() / static_cast<double>(m.values.size());
}

double ref_sim(const SampleSet& pseudo, const std::string& reference,
               const UtilityFunction& utility) {
  if (pseudo.samples.empty()) throw ValidationError("ref_sim: empty sample set");
  double sum = 0.0;
  for (const auto& s : pseudo.samples) sum += utility(s.text, reference, pseudo.segment_id);
  return sum / static_cast<double>(pseudo.samples.size());
}

PropertyReport compute_properties(const AlignedCorpus& corpus, const MatrixProvider& provider,
                                  int threads) {
  if (corpus.empty()) throw ValidationError("compute_properties: empty corpus");
  std::vector<SampleSet> pseudo;
  pseudo.reserve(corpus.size());
  for (const auto& seg : corpus.segments) pseudo.push_back(seg.pseudo_refs);

  PropertyReport report;
  report.metric_id = provider.utility().metric_id();
  report.avg_log_prob = avg_log_prob(pseudo);
  report.cum_prob_mass = cum_prob_mass(pseudo);

  std::vector<double> cand(corpus.size());
  std::vector<double> ref(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t s) {
    const auto& seg = corpus.segments[s];
    cand[s] = cand_sim(seg.pseudo_refs, seg.candidates, provider);
    ref[s] = ref_sim(seg.pseudo_refs, seg.reference, provider.utility());
  });
  double cand_sum = 0.0;
  double ref_sum = 0.0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    cand_sum += cand[s];
    ref_sum += ref[s];
  }
  report.cand_sim = cand_sum / static_cast<double>(corpus.size());
  report.ref_sim = ref_sum / static_cast<double>(corpus.size());
  return report;
}

std::string property_report_json(const PropertyReport& report) {
  nlohmann::ordered_json doc;
  doc["avg_log_prob"] = report.avg_log_prob;
  doc["cum_prob_mass"] = report.cum_prob_mass;
  doc["cand_sim"] = report.cand_sim;
  doc["ref_sim"] = report.ref_sim;
  doc["config"] = {{"metric_id", report.metric_id},
                   {"interpretation", "avg_log_prob: per-token mean; cum_prob_mass: percent"}};
  return doc.dump(2) + "\n";
}

}  // namespace mbrdiag
