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

#include "mbrdiag/synth.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mbrdiag/error.h"
#include "mbrdiag/parallel.h"

namespace mbrdiag {

// -- ToyLM --------------------------------------------------------------------

ToyLM::ToyLM(std::vector<std::string> vocab, std::string eos, int max_len,
             std::map<std::string, std::vector<double>> table)
    : vocab_(std::move(vocab)), max_len_(max_len), table_(std::move(table)) {
  if (vocab_.empty()) throw ValidationError("toy LM: empty vocabulary");
  if (max_len_ < 0) throw ValidationError("toy LM: negative max_len");
  std::set<std::string> seen;
  for (const auto& tok : vocab_) {
    if (tok.empty() || tok.find_first_of(" \t\n\r\f\v") != std::string::npos) {
      throw ValidationError("toy LM: tokens must be non-empty and free of whitespace");
    }
    if (!seen.insert(tok).second) throw ValidationError("toy LM: duplicate token \"" + tok + "\"");
  }
  auto it = std::find(vocab_.begin(), vocab_.end(), eos);
  if (it == vocab_.end()) throw ValidationError("toy LM: end-of-sequence token not in vocabulary");
  eos_ = static_cast<std::size_t>(it - vocab_.begin());

  for (const auto& [prefix, probs] : table_) {
    if (probs.size() != vocab_.size()) {
      throw ValidationError("toy LM: row \"" + prefix + "\" has " + std::to_string(probs.size()) +
                            " entries for a vocabulary of " + std::to_string(vocab_.size()));
    }
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw ValidationError("toy LM: row \"" + prefix + "\" has an invalid probability");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw ValidationError("toy LM: row \"" + prefix + "\" sums to " + format_double(sum));
    }
  }
  forced_eos_.assign(vocab_.size(), 0.0);
  forced_eos_[eos_] = 1.0;
}

ToyLM ToyLM::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    return ToyLM(doc.at("vocab").get<std::vector<std::string>>(), doc.value("eos", "</s>"),
                 doc.at("max_len").get<int>(),
                 doc.at("table").get<std::map<std::string, std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("toy LM: malformed JSON: ") + e.what());
  }
}

ToyLM ToyLM::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return from_json(buf.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string ToyLM::to_json() const {
  nlohmann::ordered_json doc;
  doc["vocab"] = vocab_;
  doc["eos"] = vocab_[eos_];
  doc["max_len"] = max_len_;
  doc["table"] = table_;
  return doc.dump(2) + "\n";
}

std::string ToyLM::prefix_key(std::span<const std::size_t> prefix) const {
  std::string key;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i) key += ' ';
    key += vocab_.at(prefix[i]);
  }
  return key;
}

std::span<const double> ToyLM::next_probs(std::span<const std::size_t> prefix) const {
  if (prefix.size() >= static_cast<std::size_t>(max_len_)) return forced_eos_;
  if (auto it = table_.find(prefix_key(prefix)); it != table_.end()) return it->second;
  if (auto it = table_.find("*"); it != table_.end()) return it->second;
  throw ValidationError("toy LM: no distribution for prefix \"" + prefix_key(prefix) + "\"");
}

std::string ToyLM::render(std::span<const std::size_t> tokens) const { return prefix_key(tokens); }

// -- enumeration --------------------------------------------------------------

std::vector<EnumeratedSequence> EnumeratedDist::by_probability() const {
  auto out = entries;
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.probability > b.probability; });
  return out;
}

std::vector<std::string> EnumeratedDist::texts() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.text);
  return out;
}

std::vector<double> EnumeratedDist::probabilities() const {
  std::vector<double> out;
  for (const auto& e : entries) out.push_back(e.probability);
  return out;
}

EnumeratedDist enumerate(const ToyLM& lm, std::size_t limit) {
  EnumeratedDist dist;
  std::vector<std::size_t> prefix;
  std::vector<double> logprobs;

  auto visit = [&](auto&& self, double prob) -> void {
    const auto probs = lm.next_probs(prefix);
    for (std::size_t t = 0; t < probs.size(); ++t) {
      if (probs[t] <= 0.0) continue;
      logprobs.push_back(std::log(probs[t]));
      if (t == lm.eos()) {
        if (dist.entries.size() >= limit) {
          throw ValidationError("enumerate: more than " + std::to_string(limit) + " sequences");
        }
        dist.entries.push_back({lm.render(prefix), prefix, logprobs, prob * probs[t]});
      } else {
        prefix.push_back(t);
        self(self, prob * probs[t]);
        prefix.pop_back();
      }
      logprobs.pop_back();
    }
  };
  visit(visit, 1.0);

  for (const auto& e : dist.entries) dist.coverage += e.probability;
  return dist;
}

// -- sampling -----------------------------------------------------------------

std::uint64_t stream_seed(std::int64_t seed, SegmentId segment, std::uint64_t stream) {
  std::uint64_t z = static_cast<std::uint64_t>(seed) +
                    (static_cast<std::uint64_t>(segment) + 1) * 0x9E3779B97F4A7C15ULL +
                    stream * 0xD1B54A32D192ED03ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> truncate_distribution(std::span<const double> probs,
                                          const SamplingMethod& method) {
  std::vector<double> w(probs.begin(), probs.end());
  switch (method.kind) {
    case MethodKind::kAncestral:
    case MethodKind::kBeam:
      break;
    case MethodKind::kEpsilon: {
      std::size_t argmax = 0;
      bool any = false;
      for (std::size_t t = 0; t < w.size(); ++t) {
        if (probs[t] > probs[argmax]) argmax = t;
        if (probs[t] < method.param) {
          w[t] = 0.0;
        } else if (probs[t] > 0.0) {
          any = true;
        }
      }
      if (!any) w[argmax] = probs[argmax];
      break;
    }
    case MethodKind::kNucleus: {
      if (method.param >= 1.0) break;
      std::vector<std::size_t> order(probs.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
      double mass = 0.0;
      std::size_t kept = 0;
      while (kept < order.size() && mass < method.param) mass += probs[order[kept++]];
      for (std::size_t r = kept; r < order.size(); ++r) w[order[r]] = 0.0;
      break;
    }
  }
  return w;
}

std::size_t draw_token(std::span<const double> weights, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ComputationError("draw_token: no mass to sample from");
  const double target = u * total;
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t t = 0; t < weights.size(); ++t) {
    if (weights[t] <= 0.0) continue;
    cum += weights[t];
    last = t;
    if (target < cum) return t;
  }
  return last;
}

std::vector<EnumeratedSequence> beam_search(const ToyLM& lm, int width) {
  if (width < 1) throw ValidationError("beam_search: width must be positive");
  struct Hyp {
    std::vector<std::size_t> tokens;
    std::vector<double> logprobs;
    double score = 0.0;
    bool finished = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  };
  const auto w = static_cast<std::size_t>(width);

  std::vector<Hyp> live(1);
  std::vector<Hyp> finished;
  while (!live.empty()) {
    std::vector<Hyp> expansions;
    for (const auto& h : live) {
      const auto probs = lm.next_probs(h.tokens);
      for (std::size_t t = 0; t < probs.size(); ++t) {
        if (probs[t] <= 0.0) continue;
        Hyp e = h;
        const double lp = std::log(probs[t]);
        e.logprobs.push_back(lp);
        e.score += lp;
        if (t == lm.eos()) {
          e.finished = true;
        } else {
          e.tokens.push_back(t);
        }
        expansions.push_back(std::move(e));
      }
    }
    std::sort(expansions.begin(), expansions.end(), better);

    live.clear();
    for (std::size_t r = 0; r < expansions.size(); ++r) {
      if (expansions[r].finished) {
        if (r < w) finished.push_back(std::move(expansions[r]));
      } else if (live.size() < w) {
        live.push_back(std::move(expansions[r]));
      }
    }

    if (finished.size() >= w && !live.empty()) {
      std::sort(finished.begin(), finished.end(), better);
      if (live.front().score <= finished[w - 1].score) break;
    }
  }
  std::sort(finished.begin(), finished.end(), better);

  std::vector<EnumeratedSequence> out;
  for (auto& h : finished) {
    EnumeratedSequence seq;
    seq.text = lm.render(h.tokens);
    seq.probability = std::exp(h.score);
    seq.tokens = std::move(h.tokens);
    seq.token_logprobs = std::move(h.logprobs);
    out.push_back(std::move(seq));
  }
  return out;
}

SampleSet sample(const ToyLM& lm, const SamplingMethod& method, int n, std::int64_t seed,
                 SegmentId segment) {
  if (n < 1) throw ValidationError("sample: n must be >= 1");
  SampleSet set;
  set.segment_id = segment;
  set.method = method;
  set.seed = seed;

  if (method.kind == MethodKind::kBeam) {
    if (n > method.beam_width()) throw ValidationError("sample: beam needs n <= width");
    auto hyps = beam_search(lm, method.beam_width());
    if (hyps.size() > static_cast<std::size_t>(n)) hyps.resize(static_cast<std::size_t>(n));
    for (auto& h : hyps) set.samples.push_back({std::move(h.text), std::move(h.token_logprobs)});
    return set;
  }

  Rng rng(stream_seed(seed, segment));
  std::vector<std::size_t> prefix;
  for (int i = 0; i < n; ++i) {
    prefix.clear();
    Sample s;
    while (true) {
      const auto probs = lm.next_probs(prefix);
      const auto weights = truncate_distribution(probs, method);
      const std::size_t t = draw_token(weights, rng.uniform());
      s.token_logprobs.push_back(std::log(probs[t]));
      if (t == lm.eos()) break;
      prefix.push_back(t);
    }
    s.text = lm.render(prefix);
    set.samples.push_back(std::move(s));
  }
  return set;
}

std::vector<std::string> make_reference_draws(const ToyLM& lm, int n, std::int64_t seed,
                                              SegmentId segment) {
  if (n < 1) throw ValidationError("make_reference_draws: n must be >= 1");
  Rng rng(stream_seed(seed, segment, 1));
  std::vector<std::string> out;
  std::vector<std::size_t> prefix;
  for (int i = 0; i < n; ++i) {
    prefix.clear();
    while (true) {
      const std::size_t t = draw_token(lm.next_probs(prefix), rng.uniform());
      if (t == lm.eos()) break;
      prefix.push_back(t);
    }
    out.push_back(lm.render(prefix));
  }
  return out;
}

std::vector<SampleSet> synth_sample_sets(const ToyLM& lm, const SamplingMethod& method, int n,
                                         std::int64_t seed, int segments, int threads) {
  if (segments < 1) throw ValidationError("synth: segments must be >= 1");
  std::vector<SampleSet> out(static_cast<std::size_t>(segments));
  parallel_for(out.size(), threads, [&](std::size_t s) {
    out[s] = sample(lm, method, n, seed, static_cast<SegmentId>(s));
  });
  return out;
}

std::vector<Reference> synth_references(const ToyLM& lm, std::int64_t seed, int segments) {
  if (segments < 1) throw ValidationError("synth: segments must be >= 1");
  std::vector<Reference> out;
  for (int s = 0; s < segments; ++s) {
    out.push_back({s, make_reference_draws(lm, 1, seed, s).front(), std::nullopt});
  }
  return out;
}

}  // namespace mbrdiag
