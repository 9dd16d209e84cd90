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

#include "mbrdiag/core.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mbrdiag/error.h"

namespace mbrdiag {
namespace {

using nlohmann::json;

std::string at_line(std::string_view source, std::size_t line) {
  std::ostringstream os;
  os << source << ":" << line << ": ";
  return os.str();
}

const json& require(const json& record, const char* key, const std::string& where) {
  auto it = record.find(key);
  if (it == record.end()) throw ValidationError(where + "missing field \"" + key + "\"");
  return *it;
}

std::int64_t require_int(const json& record, const char* key, const std::string& where) {
  const json& v = require(record, key, where);
  if (!v.is_number_integer()) {
    throw ValidationError(where + "field \"" + key + "\" must be an integer");
  }
  return v.get<std::int64_t>();
}

std::string require_string(const json& record, const char* key, const std::string& where) {
  const json& v = require(record, key, where);
  if (!v.is_string()) throw ValidationError(where + "field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

json parse_line(const std::string& line, const std::string& where) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(where + "malformed JSON: " + e.what());
  }
  if (!record.is_object()) throw ValidationError(where + "record must be a JSON object");
  return record;
}

std::string quoted(const std::string& s) { return json(s).dump(); }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

SamplingMethod SamplingMethod::nucleus(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("nucleus p must lie in (0, 1]");
  return {MethodKind::kNucleus, p};
}

SamplingMethod SamplingMethod::epsilon(double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ValidationError("epsilon must lie in [0, 1)");
  return {MethodKind::kEpsilon, eps};
}

SamplingMethod SamplingMethod::beam(int width) {
  if (width < 1) throw ValidationError("beam width must be positive");
  return {MethodKind::kBeam, static_cast<double>(width)};
}

std::string SamplingMethod::name() const {
  switch (kind) {
    case MethodKind::kAncestral:
      return "ancestral";
    case MethodKind::kNucleus:
      return "nucleus";
    case MethodKind::kEpsilon:
      return "epsilon";
    case MethodKind::kBeam:
      return "beam";
  }
  return "unknown";
}

SamplingMethod SamplingMethod::from_name(std::string_view name, std::optional<double> param) {
  auto need = [&]() {
    if (!param) throw ValidationError("method \"" + std::string(name) + "\" requires a param");
    return *param;
  };
  if (name == "ancestral") return ancestral();
  if (name == "nucleus") return nucleus(need());
  if (name == "epsilon") return epsilon(need());
  if (name == "beam") {
    const double w = need();
    if (w != std::floor(w)) throw ValidationError("beam width must be an integer");
    return beam(static_cast<int>(w));
  }
  throw ValidationError("unknown sampling method \"" + std::string(name) + "\"");
}

double Sample::total_logprob() const {
  return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
}

double Sample::mean_token_logprob() const {
  return total_logprob() / static_cast<double>(token_logprobs.size());
}

std::vector<std::string> SampleSet::texts() const {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.text);
  return out;
}

void validate_sample(const Sample& sample, std::string_view where) {
  const std::string prefix(where);
  if (sample.token_logprobs.empty()) throw ValidationError(prefix + "empty token_logprobs");
  for (double lp : sample.token_logprobs) {
    if (std::isnan(lp)) throw ValidationError(prefix + "NaN log-probability");
    if (lp > 0.0) throw ValidationError(prefix + "positive log-probability");
  }
  if (sample.text.empty() && sample.token_logprobs.size() != 1) {
    throw ValidationError(prefix +
                          "empty text must carry exactly one (end-of-sequence) log-probability");
  }
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::vector<SampleSet> read_sample_sets(std::istream& in, std::string_view source_name,
                                        std::vector<std::string>* warnings) {
  struct Pending {
    SampleSet set;
    std::map<std::int64_t, Sample> by_index;
  };
  std::map<SegmentId, Pending> segments;
  std::optional<SamplingMethod> file_method;
  std::optional<std::int64_t> file_seed;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = at_line(source_name, lineno);
    const json record = parse_line(line, where);

    const SegmentId segment_id = require_int(record, "segment_id", where);
    const std::int64_t sample_index = require_int(record, "sample_index", where);
    if (segment_id < 0) throw ValidationError(where + "negative segment_id");
    if (sample_index < 0) throw ValidationError(where + "negative sample_index");

    Sample sample;
    sample.text = require_string(record, "text", where);
    const json& lps = require(record, "token_logprobs", where);
    if (!lps.is_array()) throw ValidationError(where + "token_logprobs must be an array");
    for (const auto& v : lps) {
      if (!v.is_number()) throw ValidationError(where + "token_logprobs must hold numbers");
      sample.token_logprobs.push_back(v.get<double>());
    }
    validate_sample(sample, where);

    const std::string method_name = require_string(record, "method", where);
    std::optional<double> param;
    if (auto it = record.find("param"); it != record.end() && !it->is_null()) {
      if (!it->is_number()) throw ValidationError(where + "param must be a number or null");
      param = it->get<double>();
    }
    SamplingMethod method;
    try {
      method = SamplingMethod::from_name(method_name, param);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    const std::int64_t seed = require_int(record, "seed", where);

    if (!file_method) {
      file_method = method;
      file_seed = seed;
    } else if (!(method == *file_method) || seed != *file_seed) {
      throw ValidationError(where + "mixed method/seed within one file");
    }

    Pending& pending = segments[segment_id];
    pending.set.segment_id = segment_id;
    pending.set.method = method;
    pending.set.seed = seed;
    if (!pending.by_index.emplace(sample_index, std::move(sample)).second) {
      throw ValidationError(where + "duplicate (segment_id, sample_index) = (" +
                            std::to_string(segment_id) + ", " + std::to_string(sample_index) + ")");
    }
  }

  std::vector<SampleSet> out;
  out.reserve(segments.size());
  for (auto& [segment_id, pending] : segments) {
    std::int64_t expected = 0;
    for (auto& [index, sample] : pending.by_index) {
      if (index != expected && warnings) {
        warnings->push_back(std::string(source_name) + ": segment " + std::to_string(segment_id) +
                            ": sample_index jumps from " + std::to_string(expected) + " to " +
                            std::to_string(index));
      }
      expected = index + 1;
      pending.set.samples.push_back(std::move(sample));
    }
    out.push_back(std::move(pending.set));
  }
  return out;
}

std::vector<SampleSet> load_sample_file(const std::filesystem::path& path,
                                        std::vector<std::string>* warnings) {
  auto in = open_input(path);
  return read_sample_sets(in, path.string(), warnings);
}

void write_sample_sets(std::ostream& out, const std::vector<SampleSet>& sets) {
  for (const auto& set : sets) {
    std::string param = "null";
    if (set.method.kind == MethodKind::kBeam) {
      param = std::to_string(set.method.beam_width());
    } else if (set.method.kind != MethodKind::kAncestral) {
      param = format_double(set.method.param);
    }
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
      const Sample& s = set.samples[i];
      out << "{\"segment_id\": " << set.segment_id << ", \"sample_index\": " << i
          << ", \"text\": " << quoted(s.text) << ", \"token_logprobs\": [";
      for (std::size_t t = 0; t < s.token_logprobs.size(); ++t) {
        if (t) out << ", ";
        out << format_double(s.token_logprobs[t]);
      }
      out << "], \"method\": " << quoted(set.method.name()) << ", \"param\": " << param
          << ", \"seed\": " << set.seed << "}\n";
    }
  }
}

void save_sample_file(const std::filesystem::path& path, const std::vector<SampleSet>& sets) {
  auto out = open_output(path);
  write_sample_sets(out, sets);
}

std::vector<Reference> read_references(std::istream& in, std::string_view source_name) {
  std::map<SegmentId, Reference> by_segment;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = at_line(source_name, lineno);
    const json record = parse_line(line, where);
    Reference ref;
    ref.segment_id = require_int(record, "segment_id", where);
    if (ref.segment_id < 0) throw ValidationError(where + "negative segment_id");
    ref.text = require_string(record, "text", where);
    if (auto it = record.find("source"); it != record.end() && !it->is_null()) {
      if (!it->is_string()) throw ValidationError(where + "source must be a string or null");
      ref.source = it->get<std::string>();
    }
    const SegmentId id = ref.segment_id;
    if (!by_segment.emplace(id, std::move(ref)).second) {
      throw ValidationError(where + "duplicate reference for segment " + std::to_string(id));
    }
  }
  std::vector<Reference> out;
  out.reserve(by_segment.size());
  for (auto& [id, ref] : by_segment) out.push_back(std::move(ref));
  return out;
}

std::vector<Reference> load_reference_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_references(in, path.string());
}

void write_references(std::ostream& out, const std::vector<Reference>& refs) {
  for (const auto& ref : refs) {
    out << "{\"segment_id\": " << ref.segment_id << ", \"text\": " << quoted(ref.text)
        << ", \"source\": " << (ref.source ? quoted(*ref.source) : std::string("null")) << "}\n";
  }
}

void save_reference_file(const std::filesystem::path& path, const std::vector<Reference>& refs) {
  auto out = open_output(path);
  write_references(out, refs);
}

namespace {

template <typename T, typename Key>
std::map<SegmentId, const T*> index_by_segment(const std::vector<T>& items, Key key,
                                               const char* what) {
  std::map<SegmentId, const T*> out;
  for (const auto& item : items) {
    if (!out.emplace(key(item), &item).second) {
      throw ValidationError(std::string("duplicate ") + what + " for segment " +
                            std::to_string(key(item)));
    }
  }
  return out;
}

void require_same_segments(const std::map<SegmentId, const SampleSet*>& base,
                           const std::set<SegmentId>& all, const char* what) {
  for (SegmentId id : all) {
    if (!base.count(id)) {
      throw ValidationError(std::string("alignment: ") + what + " missing segment " +
                            std::to_string(id));
    }
  }
}

}  // namespace

AlignedCorpus align(const std::vector<SampleSet>& candidates,
                    const std::vector<SampleSet>& pseudo_refs,
                    const std::vector<Reference>& references) {
  auto set_key = [](const SampleSet& s) { return s.segment_id; };
  const auto cands = index_by_segment(candidates, set_key, "candidate set");
  const auto prefs = index_by_segment(pseudo_refs, set_key, "pseudo-reference set");
  const auto refs =
      index_by_segment(references, [](const Reference& r) { return r.segment_id; }, "reference");

  std::set<SegmentId> all;
  for (const auto& [id, _] : cands) all.insert(id);
  for (const auto& [id, _] : prefs) all.insert(id);
  for (const auto& [id, _] : refs) all.insert(id);

  require_same_segments(cands, all, "candidates");
  require_same_segments(prefs, all, "pseudo-references");
  for (SegmentId id : all) {
    if (!refs.count(id)) {
      throw ValidationError("alignment: references missing segment " + std::to_string(id));
    }
  }

  AlignedCorpus corpus;
  corpus.segments.reserve(all.size());
  for (SegmentId id : all) {
    AlignedSegment seg;
    seg.segment_id = id;
    seg.reference = refs.at(id)->text;
    seg.source = refs.at(id)->source;
    seg.candidates = *cands.at(id);
    seg.pseudo_refs = *prefs.at(id);
    corpus.segments.push_back(std::move(seg));
  }
  return corpus;
}

std::vector<std::pair<SampleSet, SampleSet>> pair_by_segment(
    const std::vector<SampleSet>& candidates, const std::vector<SampleSet>& pseudo_refs) {
  auto set_key = [](const SampleSet& s) { return s.segment_id; };
  const auto cands = index_by_segment(candidates, set_key, "candidate set");
  const auto prefs = index_by_segment(pseudo_refs, set_key, "pseudo-reference set");
  std::set<SegmentId> all;
  for (const auto& [id, _] : cands) all.insert(id);
  for (const auto& [id, _] : prefs) all.insert(id);
  require_same_segments(cands, all, "candidates");
  require_same_segments(prefs, all, "pseudo-references");

  std::vector<std::pair<SampleSet, SampleSet>> out;
  for (SegmentId id : all) out.emplace_back(*cands.at(id), *prefs.at(id));
  return out;
}

}  // namespace mbrdiag
