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

#include "mbrdiag/stats.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mbrdiag/core.h"
#include "mbrdiag/error.h"

namespace mbrdiag {

char sign_char(Sign s) { return s == Sign::kPlus ? '+' : '-'; }

Sign parse_sign(std::string_view text) {
  if (text == "+") return Sign::kPlus;
  if (text == "-") return Sign::kMinus;
  throw ValidationError("expected sign must be '+' or '-', got \"" + std::string(text) + "\"");
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  if (x.empty()) throw ValidationError("fractional_ranks: empty input");
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("fractional_ranks: non-finite input");
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank ((i+1) + j) / 2.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
  if (x.size() < 3) throw ValidationError("spearman: needs at least 3 points");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double n = static_cast<double>(rx.size());
  // Fractional ranks always average (n + 1) / 2.
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ComputationError("spearman: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double CorrelationRow::abs_rho() const { return rho ? std::abs(*rho) : std::nan(""); }

const CorrelationRow& CorrelationTable::row(std::string_view quantity_id) const {
  for (const auto& r : rows) {
    if (r.quantity_id == quantity_id) return r;
  }
  throw ValidationError("no correlation row \"" + std::string(quantity_id) + "\"");
}

Sign default_expected_sign(std::string_view id) {
  if (id == "cum_prob" || id == "cand_sim" || id == "ref_sim") return Sign::kPlus;
  return Sign::kMinus;
}

namespace {

std::vector<std::string> config_keys(const ConfigValues& m) {
  std::vector<std::string> keys;
  for (const auto& [k, _] : m) keys.push_back(k);
  return keys;
}

}  // namespace

CorrelationTable correlation_study(
    const ConfigValues& performance,
    const std::vector<std::pair<std::string, ConfigValues>>& quantities,
    const std::map<std::string, Sign>& expected_signs) {
  CorrelationTable table;
  table.configs = config_keys(performance);
  if (table.configs.size() < 3) {
    throw ValidationError("correlation_study: needs at least 3 configurations");
  }
  std::vector<double> perf;
  for (const auto& c : table.configs) perf.push_back(performance.at(c));

  for (const auto& [id, values] : quantities) {
    if (config_keys(values) != table.configs) {
      throw ValidationError("correlation_study: quantity \"" + id +
                            "\" does not cover the same configurations as performance");
    }
    std::vector<double> q;
    for (const auto& c : table.configs) q.push_back(values.at(c));

    CorrelationRow row;
    row.quantity_id = id;
    auto sign = expected_signs.find(id);
    row.expected_sign = sign != expected_signs.end() ? sign->second : default_expected_sign(id);
    try {
      row.rho = spearman(perf, q);
    } catch (const ComputationError&) {
      row.rho.reset();
    }
    if (row.rho && *row.rho != 0.0) {
      row.sign_match = (*row.rho > 0.0) == (row.expected_sign == Sign::kPlus);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ConfigValues seed_average(std::span<const ConfigValues> runs) {
  if (runs.empty()) throw ValidationError("seed_average: no runs");
  const auto keys = config_keys(runs.front());
  for (const auto& run : runs) {
    if (config_keys(run) != keys) throw ValidationError("seed_average: runs disagree on configs");
  }
  ConfigValues out;
  for (const auto& k : keys) {
    double sum = 0.0;
    for (const auto& run : runs) sum += run.at(k);
    out[k] = sum / static_cast<double>(runs.size());
  }
  return out;
}

std::string correlation_tsv(const CorrelationTable& table) {
  std::ostringstream os;
  os << "quantity_id\texpected_sign\trho\tabs_rho\tsign_match\n";
  for (const auto& r : table.rows) {
    os << r.quantity_id << '\t' << sign_char(r.expected_sign) << '\t'
       << (r.rho ? format_double(*r.rho) : "nan") << '\t'
       << (r.rho ? format_double(r.abs_rho()) : "nan") << '\t' << (r.sign_match ? "true" : "false")
       << '\n';
  }
  return os.str();
}

std::string correlation_json(const CorrelationTable& table) {
  nlohmann::ordered_json doc;
  doc["configs"] = table.configs;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    row["quantity_id"] = r.quantity_id;
    row["expected_sign"] = std::string(1, sign_char(r.expected_sign));
    row["rho"] = r.rho ? nlohmann::ordered_json(*r.rho) : nlohmann::ordered_json(nullptr);
    row["abs_rho"] = r.rho ? nlohmann::ordered_json(r.abs_rho()) : nlohmann::ordered_json(nullptr);
    row["sign_match"] = r.sign_match;
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

CorrelationTable parse_correlation_json(std::string_view text) {
  CorrelationTable table;
  try {
    const auto doc = nlohmann::json::parse(text);
    table.configs = doc.at("configs").get<std::vector<std::string>>();
    for (const auto& r : doc.at("rows")) {
      CorrelationRow row;
      row.quantity_id = r.at("quantity_id").get<std::string>();
      row.expected_sign = parse_sign(r.at("expected_sign").get<std::string>());
      if (!r.at("rho").is_null()) row.rho = r.at("rho").get<double>();
      row.sign_match = r.at("sign_match").get<bool>();
      table.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed correlation JSON: ") + e.what());
  }
  return table;
}

// -- summary tables -----------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_number(const std::string& cell, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != cell.size() || !std::isfinite(v)) {
    throw ValidationError(where + "not a finite number: \"" + cell + "\"");
  }
  return v;
}

}  // namespace

SummaryTable read_summary_table(std::istream& in, std::string_view source_name) {
  SummaryTable table;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  int config_col = -1;
  int perf_col = -1;
  std::vector<int> quantity_cols;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = std::string(source_name) + ":" + std::to_string(lineno) + ": ";
    const auto cells = split_tabs(line);
    if (header.empty()) {
      header = cells;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        std::string name = cells[c];
        if (name == "config") {
          config_col = static_cast<int>(c);
        } else if (name == "performance") {
          perf_col = static_cast<int>(c);
        } else if (name == "seed") {
          continue;
        } else {
          if (name.size() > 3 && name.back() == ')' && name[name.size() - 3] == '(') {
            table.expected_signs[name.substr(0, name.size() - 3)] =
                parse_sign(name.substr(name.size() - 2, 1));
            name = name.substr(0, name.size() - 3);
          }
          if (std::find(table.quantity_ids.begin(), table.quantity_ids.end(), name) !=
              table.quantity_ids.end()) {
            throw ValidationError(where + "duplicate column \"" + name + "\"");
          }
          table.quantity_ids.push_back(name);
          quantity_cols.push_back(static_cast<int>(c));
        }
      }
      if (config_col < 0 || perf_col < 0) {
        throw ValidationError(where + "header needs \"config\" and \"performance\" columns");
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw ValidationError(where + "expected " + std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    }
    table.configs.push_back(cells[static_cast<std::size_t>(config_col)]);
    table.performance.push_back(parse_number(cells[static_cast<std::size_t>(perf_col)], where));
    std::vector<double> row;
    for (int c : quantity_cols)
      row.push_back(parse_number(cells[static_cast<std::size_t>(c)], where));
    table.quantities.push_back(std::move(row));
  }
  if (header.empty()) throw ValidationError(std::string(source_name) + ": empty summary table");
  return table;
}

void append_summary_table(SummaryTable& into, const SummaryTable& more) {
  if (into.quantity_ids.empty() && into.configs.empty()) {
    into = more;
    return;
  }
  if (into.quantity_ids != more.quantity_ids) {
    throw ValidationError("summary tables have different quantity columns");
  }
  for (const auto& [id, s] : more.expected_signs) into.expected_signs[id] = s;
  into.configs.insert(into.configs.end(), more.configs.begin(), more.configs.end());
  into.performance.insert(into.performance.end(), more.performance.begin(), more.performance.end());
  into.quantities.insert(into.quantities.end(), more.quantities.begin(), more.quantities.end());
}

std::string summary_table_tsv(const SummaryTable& table) {
  std::ostringstream os;
  os << "config\tperformance";
  for (const auto& id : table.quantity_ids) {
    os << '\t' << id;
    if (auto it = table.expected_signs.find(id); it != table.expected_signs.end()) {
      os << '(' << sign_char(it->second) << ')';
    }
  }
  os << '\n';
  for (std::size_t r = 0; r < table.configs.size(); ++r) {
    os << table.configs[r] << '\t' << format_double(table.performance[r]);
    for (double v : table.quantities[r]) os << '\t' << format_double(v);
    os << '\n';
  }
  return os.str();
}

CorrelationTable correlate_summary(const SummaryTable& table) {
  // The i-th row of a config belongs to run i.
  std::map<std::string, std::size_t> occurrences;
  std::vector<std::size_t> run_of(table.configs.size());
  std::size_t n_runs = 0;
  for (std::size_t r = 0; r < table.configs.size(); ++r) {
    run_of[r] = occurrences[table.configs[r]]++;
    n_runs = std::max(n_runs, run_of[r] + 1);
  }

  auto averaged = [&](auto value_of) {
    std::vector<ConfigValues> runs(n_runs);
    for (std::size_t r = 0; r < table.configs.size(); ++r) {
      runs[run_of[r]][table.configs[r]] = value_of(r);
    }
    return seed_average(runs);
  };

  const ConfigValues perf = averaged([&](std::size_t r) { return table.performance[r]; });
  std::vector<std::pair<std::string, ConfigValues>> quantities;
  for (std::size_t q = 0; q < table.quantity_ids.size(); ++q) {
    quantities.emplace_back(table.quantity_ids[q],
                            averaged([&](std::size_t r) { return table.quantities[r][q]; }));
  }
  return correlation_study(perf, quantities, table.expected_signs);
}

}  // namespace mbrdiag
