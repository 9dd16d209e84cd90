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

#include "mbrdiag/utility.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "mbrdiag/error.h"
#include "mbrdiag/parallel.h"

namespace mbrdiag {
namespace {

using nlohmann::json;

// Lenient UTF-8 decoding: a malformed byte becomes its own code point.
std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra = -1;
    char32_t cp = b0;
    if (b0 < 0x80) {
      extra = 0;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      cp = b0 & 0x07;
    }
    bool ok = extra >= 0 && i + extra < s.size();
    for (int k = 1; ok && k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (ok) {
      out.push_back(cp);
      i += extra + 1;
    } else {
      out.push_back(b0);
      ++i;
    }
  }
  return out;
}

struct ChrfStats {
  std::vector<std::unordered_map<std::u32string, int>> grams;
  std::vector<int> totals;
};

ChrfStats chrf_stats(std::string_view text, int order) {
  const std::u32string chars = decode_utf8(text);
  ChrfStats stats;
  stats.grams.resize(order);
  stats.totals.assign(order, 0);
  for (int n = 1; n <= order; ++n) {
    if (chars.size() < static_cast<std::size_t>(n)) break;
    auto& grams = stats.grams[n - 1];
    for (std::size_t i = 0; i + n <= chars.size(); ++i) ++grams[chars.substr(i, n)];
    stats.totals[n - 1] = static_cast<int>(chars.size() - n + 1);
  }
  return stats;
}

double chrf_from_stats(const ChrfStats& hyp, const ChrfStats& ref, double beta) {
  const double b2 = beta * beta;
  double sum = 0.0;
  int counted = 0;
  for (std::size_t n = 0; n < hyp.totals.size(); ++n) {
    const int th = hyp.totals[n];
    const int tr = ref.totals[n];
    if (th == 0 && tr == 0) continue;
    ++counted;
    if (th == 0 || tr == 0) continue;
    const auto& small = hyp.grams[n].size() <= ref.grams[n].size() ? hyp.grams[n] : ref.grams[n];
    const auto& large = &small == &hyp.grams[n] ? ref.grams[n] : hyp.grams[n];
    int matches = 0;
    for (const auto& [gram, count] : small) {
      if (auto it = large.find(gram); it != large.end()) matches += std::min(count, it->second);
    }
    if (matches == 0) continue;
    const double precision = static_cast<double>(matches) / th;
    const double recall = static_cast<double>(matches) / tr;
    sum += (1.0 + b2) * precision * recall / (b2 * precision + recall);
  }
  if (counted == 0) return 100.0;
  return 100.0 * sum / counted;
}

std::map<std::string, int> token_counts(std::string_view s, int* total) {
  std::map<std::string, int> counts;
  *total = 0;
  std::size_t i = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) {
      ++counts[std::string(s.substr(i, j - i))];
      ++*total;
    }
    i = j;
  }
  return counts;
}

std::string format_scale_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

// -- metrics ------------------------------------------------------------------

double chrf(std::string_view hypothesis, std::string_view reference, int order, double beta) {
  if (order < 1) throw ValidationError("chrf order must be >= 1");
  if (!(beta > 0.0)) throw ValidationError("chrf beta must be > 0");
  return chrf_from_stats(chrf_stats(hypothesis, order), chrf_stats(reference, order), beta);
}

double unigram_f1(std::string_view hypothesis, std::string_view reference) {
  int nh = 0;
  int nr = 0;
  const auto h = token_counts(hypothesis, &nh);
  const auto r = token_counts(reference, &nr);
  if (nh == 0 && nr == 0) return 1.0;
  if (nh == 0 || nr == 0) return 0.0;
  int overlap = 0;
  for (const auto& [tok, c] : h) {
    if (auto it = r.find(tok); it != r.end()) overlap += std::min(c, it->second);
  }
  return 2.0 * overlap / (nh + nr);
}

MetricSpec MetricSpec::chrf_metric(int order, double beta) {
  MetricSpec spec;
  spec.kind = MetricKind::kChrf;
  spec.order = order;
  spec.beta = beta;
  spec.validate();
  return spec;
}

MetricSpec MetricSpec::unigram_f1_metric() {
  MetricSpec spec;
  spec.kind = MetricKind::kUnigramF1;
  return spec;
}

MetricSpec MetricSpec::external(std::filesystem::path path) {
  MetricSpec spec;
  spec.kind = MetricKind::kExternal;
  spec.path = std::move(path);
  return spec;
}

MetricSpec MetricSpec::parse(std::string_view text) {
  if (text == "unigram-f1" || text == "unigram_f1") return unigram_f1_metric();
  if (text.rfind("external:", 0) == 0) {
    if (text.size() == 9) throw ValidationError("external metric needs a path");
    return external(std::string(text.substr(9)));
  }
  if (text == "chrf") return chrf_metric();
  if (text.rfind("chrf:", 0) == 0) {
    const std::string rest(text.substr(5));
    const auto colon = rest.find(':');
    try {
      const int order = std::stoi(rest.substr(0, colon));
      const double beta = colon == std::string::npos ? 2.0 : std::stod(rest.substr(colon + 1));
      return chrf_metric(order, beta);
    } catch (const std::logic_error&) {
      throw ValidationError("bad chrf parameters \"" + rest + "\"");
    }
  }
  throw ValidationError("unknown metric \"" + std::string(text) + "\"");
}

void MetricSpec::validate() const {
  if (kind == MetricKind::kChrf) {
    if (order < 1) throw ValidationError("chrf order must be >= 1");
    if (!(beta > 0.0)) throw ValidationError("chrf beta must be > 0");
  }
  if (kind == MetricKind::kExternal && path.empty()) {
    throw ValidationError("external metric needs a path");
  }
}

// -- external score tables --------------------------------------------------

class ExternalScores {
 public:
  explicit ExternalScores(const std::filesystem::path& path) {
    auto matrices = load_matrices(path);
    for (auto& m : matrices) {
      if (metric_id_.empty()) {
        metric_id_ = m.metric_id;
        scale_ = m.scale;
      } else if (m.metric_id != metric_id_ || !(m.scale == scale_)) {
        throw ValidationError(path.string() + ": blocks disagree on metric_id or scale");
      }
      Block block;
      for (std::size_t i = 0; i < m.row_texts.size(); ++i) block.rows.emplace(m.row_texts[i], i);
      for (std::size_t j = 0; j < m.col_texts.size(); ++j) block.cols.emplace(m.col_texts[j], j);
      block.matrix = std::move(m);
      const SegmentId seg = block.matrix.segment_id;
      blocks_[seg].push_back(std::move(block));
    }
    if (metric_id_.empty()) metric_id_ = "external";
  }

  double lookup(std::string_view hyp, std::string_view ref, SegmentId segment) const {
    auto search = [&](const std::vector<Block>& blocks) -> std::optional<double> {
      for (const auto& b : blocks) {
        auto r = b.rows.find(std::string(hyp));
        auto c = b.cols.find(std::string(ref));
        if (r != b.rows.end() && c != b.cols.end()) {
          return b.matrix.values(static_cast<Eigen::Index>(r->second),
                                 static_cast<Eigen::Index>(c->second));
        }
      }
      return std::nullopt;
    };
    if (segment != kAnySegment) {
      if (auto it = blocks_.find(segment); it != blocks_.end()) {
        if (auto v = search(it->second)) return *v;
      }
    } else {
      for (const auto& [seg, blocks] : blocks_) {
        if (auto v = search(blocks)) return *v;
      }
    }
    throw ValidationError("external metric has no score for segment " + std::to_string(segment) +
                          ", pair (" + json(std::string(hyp)).dump() + ", " +
                          json(std::string(ref)).dump() + ")");
  }

  const std::string& metric_id() const { return metric_id_; }
  Scale scale() const { return scale_; }

 private:
  struct Block {
    UtilityMatrix matrix;
    std::unordered_map<std::string, std::size_t> rows;
    std::unordered_map<std::string, std::size_t> cols;
  };
  std::map<SegmentId, std::vector<Block>> blocks_;
  std::string metric_id_;
  Scale scale_;
};

// -- UtilityFunction --------------------------------------------------------

UtilityFunction::UtilityFunction(MetricSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == MetricKind::kExternal) {
    external_ = std::make_unique<ExternalScores>(spec_.path);
  }
}

UtilityFunction::~UtilityFunction() = default;
UtilityFunction::UtilityFunction(UtilityFunction&&) noexcept = default;
UtilityFunction& UtilityFunction::operator=(UtilityFunction&&) noexcept = default;

double UtilityFunction::operator()(std::string_view hypothesis, std::string_view reference,
                                   SegmentId segment) const {
  switch (spec_.kind) {
    case MetricKind::kChrf:
      return chrf(hypothesis, reference, spec_.order, spec_.beta);
    case MetricKind::kUnigramF1:
      return unigram_f1(hypothesis, reference);
    case MetricKind::kExternal:
      return external_->lookup(hypothesis, reference, segment);
  }
  return 0.0;
}

std::string UtilityFunction::metric_id() const {
  switch (spec_.kind) {
    case MetricKind::kChrf:
      return "chrf(order=" + std::to_string(spec_.order) +
             ",beta=" + format_scale_value(spec_.beta) + ")";
    case MetricKind::kUnigramF1:
      return "unigram_f1";
    case MetricKind::kExternal:
      return external_->metric_id();
  }
  return "";
}

Scale UtilityFunction::scale() const {
  switch (spec_.kind) {
    case MetricKind::kChrf:
      return {0.0, 100.0};
    case MetricKind::kUnigramF1:
      return {0.0, 1.0};
    case MetricKind::kExternal:
      return external_->scale();
  }
  return {};
}

// -- UtilityMatrix ----------------------------------------------------------

void UtilityMatrix::validate() const {
  if (static_cast<std::size_t>(values.rows()) != row_texts.size() ||
      static_cast<std::size_t>(values.cols()) != col_texts.size()) {
    throw ValidationError("matrix shape does not match its text lists");
  }
  constexpr double kSlack = 1e-9;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const double v = values(i, j);
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite matrix entry at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      if (v < scale.lo - kSlack || v > scale.hi + kSlack) {
        throw ValidationError("matrix entry at (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") outside declared scale");
      }
    }
  }
}

UtilityMatrix build_matrix(SegmentId segment_id, const std::vector<std::string>& rows,
                           const std::vector<std::string>& cols, const UtilityFunction& utility,
                           int threads) {
  if (rows.empty() || cols.empty())
    throw ValidationError("build_matrix needs non-empty rows and cols");
  UtilityMatrix m;
  m.segment_id = segment_id;
  m.row_texts = rows;
  m.col_texts = cols;
  m.metric_id = utility.metric_id();
  m.scale = utility.scale();
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));

  const MetricSpec& spec = utility.spec();
  if (spec.kind == MetricKind::kChrf) {
    // n-gram tables are computed once per text instead of once per cell.
    std::vector<ChrfStats> row_stats(rows.size());
    std::vector<ChrfStats> col_stats(cols.size());
    parallel_for(rows.size(), threads,
                 [&](std::size_t i) { row_stats[i] = chrf_stats(rows[i], spec.order); });
    parallel_for(cols.size(), threads,
                 [&](std::size_t j) { col_stats[j] = chrf_stats(cols[j], spec.order); });
    parallel_for(rows.size(), threads, [&](std::size_t i) {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            chrf_from_stats(row_stats[i], col_stats[j], spec.beta);
      }
    });
  } else {
    parallel_for(rows.size(), threads, [&](std::size_t i) {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            utility(rows[i], cols[j], segment_id);
      }
    });
  }
  return m;
}

// -- matrix files -----------------------------------------------------------

void write_matrix(std::ostream& out, const UtilityMatrix& matrix) {
  out << "{\"segment_id\": " << matrix.segment_id
      << ", \"metric_id\": " << json(matrix.metric_id).dump() << ", \"scale\": ["
      << format_double(matrix.scale.lo) << ", " << format_double(matrix.scale.hi)
      << "], \"rows\": " << json(matrix.row_texts).dump()
      << ", \"cols\": " << json(matrix.col_texts).dump() << "}\n";
  for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
    out << "{\"i\": " << i << ", \"values\": [";
    for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) {
      if (j) out << ", ";
      out << format_double(matrix.values(i, j));
    }
    out << "]}\n";
  }
}

std::vector<UtilityMatrix> read_matrices(std::istream& in, std::string_view source_name) {
  std::vector<UtilityMatrix> out;
  std::optional<UtilityMatrix> current;
  std::vector<bool> seen;
  std::size_t seen_count = 0;

  auto where = [&](std::size_t lineno) {
    return std::string(source_name) + ":" + std::to_string(lineno) + ": ";
  };
  auto finish = [&](std::size_t lineno) {
    if (!current) return;
    if (seen_count != current->row_texts.size()) {
      throw ValidationError(where(lineno) + "matrix block for segment " +
                            std::to_string(current->segment_id) + " has " +
                            std::to_string(seen_count) + " of " +
                            std::to_string(current->row_texts.size()) + " rows");
    }
    try {
      current->validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where(lineno) + e.what());
    }
    out.push_back(std::move(*current));
    current.reset();
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where(lineno) + "malformed JSON: " + e.what());
    }
    if (!record.is_object()) throw ValidationError(where(lineno) + "record must be an object");

    if (record.contains("metric_id")) {
      finish(lineno);
      UtilityMatrix m;
      try {
        m.segment_id = record.at("segment_id").get<SegmentId>();
        m.metric_id = record.at("metric_id").get<std::string>();
        const auto& scale = record.at("scale");
        if (!scale.is_array() || scale.size() != 2) {
          throw ValidationError(where(lineno) + "scale must be [lo, hi]");
        }
        m.scale = {scale[0].get<double>(), scale[1].get<double>()};
        m.row_texts = record.at("rows").get<std::vector<std::string>>();
        m.col_texts = record.at("cols").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ValidationError(where(lineno) + "bad matrix header: " + e.what());
      }
      m.values.resize(static_cast<Eigen::Index>(m.row_texts.size()),
                      static_cast<Eigen::Index>(m.col_texts.size()));
      seen.assign(m.row_texts.size(), false);
      seen_count = 0;
      current = std::move(m);
      continue;
    }

    if (!current) throw ValidationError(where(lineno) + "row record before any matrix header");
    std::int64_t i = 0;
    std::vector<double> values;
    try {
      i = record.at("i").get<std::int64_t>();
      values = record.at("values").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ValidationError(where(lineno) + "bad matrix row: " + e.what());
    }
    if (i < 0 || static_cast<std::size_t>(i) >= current->row_texts.size()) {
      throw ValidationError(where(lineno) + "row index " + std::to_string(i) + " out of range");
    }
    if (seen[i]) throw ValidationError(where(lineno) + "duplicate row index " + std::to_string(i));
    if (values.size() != current->col_texts.size()) {
      throw ValidationError(where(lineno) + "shape mismatch: row " + std::to_string(i) + " has " +
                            std::to_string(values.size()) + " values, expected " +
                            std::to_string(current->col_texts.size()));
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      current->values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[j];
    }
    seen[i] = true;
    ++seen_count;
  }
  finish(lineno + 1);
  return out;
}

void save_matrices(const std::filesystem::path& path, const std::vector<UtilityMatrix>& matrices) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& m : matrices) write_matrix(out, m);
}

std::vector<UtilityMatrix> load_matrices(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_matrices(in, path.string());
}

UtilityMatrix load_external_matrix(const std::filesystem::path& path,
                                   const std::vector<std::string>& expected_rows,
                                   const std::vector<std::string>& expected_cols) {
  auto matrices = load_matrices(path);
  if (matrices.size() != 1) {
    throw ValidationError(path.string() + ": expected exactly one matrix block, found " +
                          std::to_string(matrices.size()));
  }
  UtilityMatrix m = std::move(matrices.front());
  if (m.row_texts.size() != expected_rows.size() || m.col_texts.size() != expected_cols.size()) {
    throw ValidationError(
        path.string() + ": shape mismatch: expected " + std::to_string(expected_rows.size()) + "x" +
        std::to_string(expected_cols.size()) + ", got " + std::to_string(m.row_texts.size()) + "x" +
        std::to_string(m.col_texts.size()));
  }
  for (std::size_t i = 0; i < expected_rows.size(); ++i) {
    if (m.row_texts[i] != expected_rows[i]) {
      throw ValidationError(path.string() + ": row text mismatch at row " + std::to_string(i));
    }
  }
  for (std::size_t j = 0; j < expected_cols.size(); ++j) {
    if (m.col_texts[j] != expected_cols[j]) {
      throw ValidationError(path.string() + ": column text mismatch at column " +
                            std::to_string(j));
    }
  }
  return m;
}

// -- cache ------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MatrixProvider::MatrixProvider(const UtilityFunction& utility,
                               std::optional<std::filesystem::path> cache_dir)
    : utility_(&utility), cache_dir_(std::move(cache_dir)) {}

std::string MatrixProvider::cache_key(const std::vector<std::string>& rows,
                                      const std::vector<std::string>& cols) const {
  std::uint64_t h = fnv1a64(utility_->metric_id());
  for (const auto& r : rows) {
    h = fnv1a64(std::string_view("\x1e", 1), h);
    h = fnv1a64(r, h);
  }
  h = fnv1a64(std::string_view("\x1d", 1), h);
  for (const auto& c : cols) {
    h = fnv1a64(std::string_view("\x1e", 1), h);
    h = fnv1a64(c, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

UtilityMatrix MatrixProvider::get(SegmentId segment_id, const std::vector<std::string>& rows,
                                  const std::vector<std::string>& cols) const {
  if (!cache_dir_) return build_matrix(segment_id, rows, cols, *utility_);

  std::string key = cache_key(rows, cols);
  // External keys carry the segment id.
  if (utility_->spec().kind == MetricKind::kExternal) key += "-s" + std::to_string(segment_id);
  const auto path = *cache_dir_ / (key + ".jsonl");
  if (std::filesystem::exists(path)) {
    auto cached = load_matrices(path);
    if (cached.size() == 1 && cached[0].row_texts == rows && cached[0].col_texts == cols &&
        cached[0].metric_id == utility_->metric_id()) {
      cached[0].segment_id = segment_id;
      return std::move(cached[0]);
    }
  }
  UtilityMatrix m = build_matrix(segment_id, rows, cols, *utility_);
  std::filesystem::create_directories(*cache_dir_);
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  const auto tmp = *cache_dir_ / (key + ".tmp" + std::to_string(fnv1a64(tid.str())));
  save_matrices(tmp, {m});
  std::filesystem::rename(tmp, path);
  return m;
}

}  // namespace mbrdiag
