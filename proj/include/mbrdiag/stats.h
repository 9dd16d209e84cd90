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

#ifndef MBRDIAG_STATS_H_
#define MBRDIAG_STATS_H_

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mbrdiag {

enum class Sign { kPlus, kMinus };

char sign_char(Sign s);
Sign parse_sign(std::string_view text);

// Ranks 1..n; tied values share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> x);

// Pearson correlation of fractional ranks. Throws ComputationError when
// either input is constant.
double spearman(std::span<const double> x, std::span<const double> y);

// config name -> value.
using ConfigValues = std::map<std::string, double>;

struct CorrelationRow {
  std::string quantity_id;
  Sign expected_sign = Sign::kMinus;
  std::optional<double> rho;  // empty when undefined (constant quantity)
  bool sign_match = false;

  double abs_rho() const;
};

struct CorrelationTable {
  std::vector<std::string> configs;  // canonical (sorted) order
  std::vector<CorrelationRow> rows;

  const CorrelationRow& row(std::string_view quantity_id) const;
};

// "+" for cum_prob, cand_sim and ref_sim; "-" for everything else.
Sign default_expected_sign(std::string_view quantity_id);

// One row per quantity, in the order given. A quantity whose values are all
// equal gets an undefined rho and counts as a sign mismatch.
CorrelationTable correlation_study(
    const ConfigValues& performance,
    const std::vector<std::pair<std::string, ConfigValues>>& quantities,
    const std::map<std::string, Sign>& expected_signs);

// Per-config mean over runs (seeds).
ConfigValues seed_average(std::span<const ConfigValues> runs);

// TSV with columns quantity_id, expected_sign, rho, abs_rho, sign_match.
std::string correlation_tsv(const CorrelationTable& table);
std::string correlation_json(const CorrelationTable& table);
CorrelationTable parse_correlation_json(std::string_view text);

// Summary table (TSV): a "config" column, optional "seed" column, a
// "performance" column and one column per quantity. A quantity header may
// carry its expected sign as "name(+)" or "name(-)". Rows sharing a config
// are separate runs and get averaged.
struct SummaryTable {
  std::vector<std::string> quantity_ids;
  std::map<std::string, Sign> expected_signs;
  std::vector<std::string> configs;             // one per data row
  std::vector<double> performance;              // one per data row
  std::vector<std::vector<double>> quantities;  // [row][quantity]
};

SummaryTable read_summary_table(std::istream& in, std::string_view source_name);
void append_summary_table(SummaryTable& into, const SummaryTable& more);
std::string summary_table_tsv(const SummaryTable& table);

// Seed-averages the summary and runs correlation_study on it.
CorrelationTable correlate_summary(const SummaryTable& table);

}  // namespace mbrdiag

#endif  // MBRDIAG_STATS_H_
