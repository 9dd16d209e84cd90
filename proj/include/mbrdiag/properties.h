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

#ifndef MBRDIAG_PROPERTIES_H_
#define MBRDIAG_PROPERTIES_H_

#include <span>
#include <string>
#include <vector>

#include "mbrdiag/core.h"
#include "mbrdiag/utility.h"

namespace mbrdiag {

// Summary properties of a pseudo-reference corpus.
struct PropertyReport {
  double avg_log_prob = 0.0;   // mean per-token log-probability
  double cum_prob_mass = 0.0;  // percent
  double cand_sim = 0.0;
  double ref_sim = 0.0;
  std::string metric_id;
};

// Per-token mean log-probability of each sample, averaged over all samples.
double avg_log_prob(std::span<const SampleSet> sets);

// Summed sequence probability of the distinct texts of each segment,
// averaged over segments, in percent.
double cum_prob_mass(std::span<const SampleSet> sets);

// Mean u(pseudo, candidate) over all pairs of one segment.
double cand_sim(const SampleSet& pseudo, const SampleSet& candidates,
                const MatrixProvider& provider);

// Mean u(pseudo, reference) over the pseudo-references of one segment.
double ref_sim(const SampleSet& pseudo, const std::string& reference,
               const UtilityFunction& utility);

// All four properties of the corpus's pseudo-references; the similarity
// terms are averaged over segments.
PropertyReport compute_properties(const AlignedCorpus& corpus, const MatrixProvider& provider,
                                  int threads = 1);

std::string property_report_json(const PropertyReport& report);

}  // namespace mbrdiag

#endif  // MBRDIAG_PROPERTIES_H_
