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

#include "mbrdiag/cli.h"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mbrdiag/anomaly.h"
#include "mbrdiag/core.h"
#include "mbrdiag/error.h"
#include "mbrdiag/mbr.h"
#include "mbrdiag/parallel.h"
#include "mbrdiag/properties.h"
#include "mbrdiag/stats.h"
#include "mbrdiag/synth.h"
#include "mbrdiag/utility.h"

namespace fs = std::filesystem;

namespace mbrdiag {
namespace {

constexpr std::string_view kSeedToken = "{seed}";

struct Options {
  std::string candidates;
  std::string pseudo_refs;
  std::string references;
  std::string metric = "chrf";
  std::vector<int> ks = default_ks();
  double reg = kDefaultCovarianceReg;
  std::int64_t seed = 0;
  std::vector<std::int64_t> seeds;  // diagnose: one run per seed
  std::string out_dir;
  int threads = 1;
  bool no_cache = false;
  std::string label;
  std::vector<std::string> tables;
  std::string correlation;
  std::string lm;
  std::string method = "ancestral";
  std::optional<double> param;
  int n = 100;
  int segments = 1;
  std::string role = "samples";
  std::string out;
};

std::string expand_seed(const std::string& path, std::int64_t seed) {
  std::string out = path;
  for (auto pos = out.find(kSeedToken); pos != std::string::npos; pos = out.find(kSeedToken, pos)) {
    const std::string s = std::to_string(seed);
    out.replace(pos, kSeedToken.size(), s);
    pos += s.size();
  }
  return out;
}

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw ValidationError(flag + " is required");
  if (!fs::is_regular_file(path)) throw ValidationError(flag + ": no such file: " + path);
}

void require_out_dir(const Options& o) {
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
}

void check_common(const Options& o) {
  if (o.threads < 1) throw ValidationError("--threads must be >= 1");
  const auto spec = MetricSpec::parse(o.metric);
  if (spec.kind == MetricKind::kExternal) require_file("--metric", spec.path.string());
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << content;
  if (!f.flush()) throw ValidationError("cannot write " + path.string());
}

std::optional<fs::path> cache_dir(const Options& o) {
  if (o.no_cache) return std::nullopt;
  return fs::path(o.out_dir) / "cache";
}

std::string method_label(const SamplingMethod& m) {
  if (m.kind == MethodKind::kAncestral) return m.name();
  if (m.kind == MethodKind::kBeam) return m.name() + "_" + std::to_string(m.beam_width());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%g", m.name().c_str(), m.param);
  return buf;
}

// -- matrix / decode / oracle -------------------------------------------------

int cmd_matrix(const Options& o) {
  require_file("--candidates", o.candidates);
  require_file("--pseudo-refs", o.pseudo_refs);
  require_out_dir(o);
  check_common(o);

  const auto pairs =
      pair_by_segment(load_sample_file(o.candidates), load_sample_file(o.pseudo_refs));
  const UtilityFunction utility(MetricSpec::parse(o.metric));
  const MatrixProvider provider(utility, cache_dir(o));
  std::vector<UtilityMatrix> matrices(pairs.size());
  parallel_for(pairs.size(), o.threads, [&](std::size_t i) {
    matrices[i] =
        provider.get(pairs[i].first.segment_id, pairs[i].first.texts(), pairs[i].second.texts());
  });
  save_matrices(fs::path(o.out_dir) / "matrices.jsonl", matrices);
  return kExitOk;
}

int cmd_decode(const Options& o) {
  require_file("--candidates", o.candidates);
  require_file("--pseudo-refs", o.pseudo_refs);
  require_out_dir(o);
  check_common(o);

  const auto pairs =
      pair_by_segment(load_sample_file(o.candidates), load_sample_file(o.pseudo_refs));
  const UtilityFunction utility(MetricSpec::parse(o.metric));
  const MatrixProvider provider(utility, cache_dir(o));
  std::ostringstream os;
  write_selections(os, decode_corpus(pairs, provider, o.threads));
  write_file(fs::path(o.out_dir) / "selections.jsonl", os.str());
  return kExitOk;
}

int cmd_oracle(const Options& o) {
  require_file("--candidates", o.candidates);
  require_file("--references", o.references);
  require_out_dir(o);
  check_common(o);

  const auto cands = load_sample_file(o.candidates);
  const auto corpus = align(cands, cands, load_reference_file(o.references));
  const UtilityFunction utility(MetricSpec::parse(o.metric));
  const MatrixProvider provider(utility, cache_dir(o));
  const auto scores = segment_performance(corpus, provider, PerformanceMode::kOracle, o.threads);

  nlohmann::ordered_json doc;
  doc["metric_id"] = utility.metric_id();
  double sum = 0.0;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& s : scores) {
    sum += s.score;
    per.push_back({{"segment_id", s.segment_id}, {"index", s.chosen_index}, {"score", s.score}});
  }
  doc["score"] = sum / static_cast<double>(scores.size());
  doc["per_segment"] = std::move(per);
  write_file(fs::path(o.out_dir) / "oracle.json", doc.dump(2) + "\n");
  return kExitOk;
}

// -- diagnose -----------------------------------------------------------------

struct RunPaths {
  std::optional<std::int64_t> seed;
  std::string candidates;
  std::string pseudo_refs;
  std::string references;
  fs::path dir;
};

std::vector<RunPaths> diagnose_runs(const Options& o) {
  std::vector<RunPaths> runs;
  if (o.seeds.empty()) {
    runs.push_back({std::nullopt, o.candidates, o.pseudo_refs, o.references, o.out_dir});
    return runs;
  }
  const bool templated = o.candidates.find(kSeedToken) != std::string::npos ||
                         o.pseudo_refs.find(kSeedToken) != std::string::npos ||
                         o.references.find(kSeedToken) != std::string::npos;
  if (!templated) throw ValidationError("--seeds needs a {seed} placeholder in an input path");
  std::set<std::int64_t> seen;
  for (std::int64_t s : o.seeds) {
    if (!seen.insert(s).second)
      throw ValidationError("--seeds lists " + std::to_string(s) + " twice");
    runs.push_back({s, expand_seed(o.candidates, s), expand_seed(o.pseudo_refs, s),
                    expand_seed(o.references, s),
                    fs::path(o.out_dir) / ("seed-" + std::to_string(s))});
  }
  return runs;
}

std::vector<std::string> summary_columns(const std::vector<int>& ks) {
  std::vector<std::string> cols = {"avg_prob", "cum_prob", "cand_sim", "ref_sim", "d_m"};
  for (int k : ks) cols.push_back("knn_" + std::to_string(k));
  for (int k : ks) cols.push_back("lof_" + std::to_string(k));
  return cols;
}

int cmd_diagnose(const Options& o) {
  require_out_dir(o);
  check_common(o);
  if (o.ks.empty()) throw ValidationError("--ks must list at least one k");
  for (int k : o.ks) {
    if (k < 1) throw ValidationError("--ks values must be >= 1");
  }
  if (std::set<int>(o.ks.begin(), o.ks.end()).size() != o.ks.size()) {
    throw ValidationError("--ks has duplicates");
  }
  if (!(o.reg >= 0.0)) throw ValidationError("--reg must be >= 0");

  const auto runs = diagnose_runs(o);
  for (const auto& r : runs) {
    require_file("--candidates", r.candidates);
    require_file("--pseudo-refs", r.pseudo_refs);
    require_file("--references", r.references);
  }

  const UtilityFunction utility(MetricSpec::parse(o.metric));
  const MatrixProvider provider(utility, cache_dir(o));

  std::ostringstream summary;
  summary << "config\tseed\tperformance";
  for (const auto& c : summary_columns(o.ks)) summary << '\t' << c;
  summary << '\n';

  for (const auto& run : runs) {
    const auto pseudo = load_sample_file(run.pseudo_refs);
    const auto corpus =
        align(load_sample_file(run.candidates), pseudo, load_reference_file(run.references));
    const std::string label = o.label.empty() ? method_label(pseudo.front().method) : o.label;

    const auto props = compute_properties(corpus, provider, o.threads);
    const auto anomaly = diagnose_anomaly(corpus, provider, o.ks, o.reg, o.threads);
    const auto mbr = segment_performance(corpus, provider, PerformanceMode::kMbr, o.threads);
    const auto oracle = segment_performance(corpus, provider, PerformanceMode::kOracle, o.threads);

    nlohmann::ordered_json perf;
    perf["metric_id"] = utility.metric_id();
    double mbr_sum = 0.0;
    double oracle_sum = 0.0;
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < mbr.size(); ++i) {
      mbr_sum += mbr[i].score;
      oracle_sum += oracle[i].score;
      per.push_back({{"segment_id", mbr[i].segment_id},
                     {"mbr_index", mbr[i].chosen_index},
                     {"mbr", mbr[i].score},
                     {"oracle_index", oracle[i].chosen_index},
                     {"oracle", oracle[i].score}});
    }
    const double n = static_cast<double>(mbr.size());
    perf["mbr"] = mbr_sum / n;
    perf["oracle"] = oracle_sum / n;
    perf["per_segment"] = std::move(per);

    write_file(run.dir / "properties.json", property_report_json(props));
    write_file(run.dir / "anomaly.json", anomaly_report_json(anomaly));
    write_file(run.dir / "performance.json", perf.dump(2) + "\n");

    summary << label << '\t' << run.seed.value_or(pseudo.front().seed) << '\t'
            << format_double(mbr_sum / n) << '\t' << format_double(props.avg_log_prob) << '\t'
            << format_double(props.cum_prob_mass) << '\t' << format_double(props.cand_sim) << '\t'
            << format_double(props.ref_sim) << '\t' << format_double(anomaly.aggregate.d_m);
    for (int k : o.ks) summary << '\t' << format_double(anomaly.aggregate.knn.at(k));
    for (int k : o.ks) summary << '\t' << format_double(anomaly.aggregate.lof.at(k));
    summary << '\n';
  }
  write_file(fs::path(o.out_dir) / "summary.tsv", summary.str());
  return kExitOk;
}

// -- correlate / report -------------------------------------------------------

CorrelationTable correlate_tables(const std::vector<std::string>& paths) {
  SummaryTable merged;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw ValidationError("cannot open " + p);
    append_summary_table(merged, read_summary_table(in, p));
  }
  return correlate_summary(merged);
}

int cmd_correlate(const Options& o) {
  if (o.tables.empty()) throw ValidationError("--table is required");
  for (const auto& t : o.tables) require_file("--table", t);
  require_out_dir(o);

  const auto table = correlate_tables(o.tables);
  write_file(fs::path(o.out_dir) / "correlation.tsv", correlation_tsv(table));
  write_file(fs::path(o.out_dir) / "correlation.json", correlation_json(table));
  return kExitOk;
}

std::string render_report(const CorrelationTable& table) {
  std::size_t width = std::string_view("quantity").size();
  for (const auto& r : table.rows) width = std::max(width, r.quantity_id.size());

  std::ostringstream os;
  char buf[128];
  os << "configs: ";
  for (std::size_t i = 0; i < table.configs.size(); ++i) {
    os << (i ? ", " : "") << table.configs[i];
  }
  os << "\n\n";
  std::snprintf(buf, sizeof buf, "%-*s  %4s  %7s  %5s\n", static_cast<int>(width), "quantity",
                "sign", "|rho|", "match");
  os << buf;
  for (const auto& r : table.rows) {
    const std::string rho = r.rho ? [&] {
      char v[32];
      std::snprintf(v, sizeof v, "%.3f", r.abs_rho());
      return std::string(v);
    }()
                                  : std::string("n/a");
    std::snprintf(buf, sizeof buf, "%-*s  %4c  %7s  ", static_cast<int>(width),
                  r.quantity_id.c_str(), sign_char(r.expected_sign), rho.c_str());
    os << buf << (r.sign_match ? "✓" : "×") << '\n';
  }
  return os.str();
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.correlation.empty() == o.tables.empty()) {
    throw ValidationError("report needs exactly one of --correlation or --table");
  }
  CorrelationTable table;
  if (!o.correlation.empty()) {
    require_file("--correlation", o.correlation);
    std::ifstream in(o.correlation);
    std::stringstream buf;
    buf << in.rdbuf();
    table = parse_correlation_json(buf.str());
  } else {
    for (const auto& t : o.tables) require_file("--table", t);
    table = correlate_tables(o.tables);
  }
  out << render_report(table);
  return kExitOk;
}

// -- synth --------------------------------------------------------------------

int cmd_synth(const Options& o) {
  require_file("--lm", o.lm);
  if (o.out.empty()) require_out_dir(o);
  if (o.threads < 1) throw ValidationError("--threads must be >= 1");
  if (o.role != "samples" && o.role != "references") {
    throw ValidationError("--role must be samples or references");
  }

  const auto lm = ToyLM::load(o.lm);
  const fs::path path = o.out.empty() ? fs::path(o.out_dir) / (o.role + ".jsonl") : fs::path(o.out);
  std::ostringstream os;
  if (o.role == "references") {
    write_references(os, synth_references(lm, o.seed, o.segments));
  } else {
    const auto method = SamplingMethod::from_name(o.method, o.param);
    write_sample_sets(os, synth_sample_sets(lm, method, o.n, o.seed, o.segments, o.threads));
  }
  write_file(path, os.str());
  return kExitOk;
}

// -- wiring -------------------------------------------------------------------

void add_inputs(CLI::App* cmd, Options& o, bool pseudo, bool refs) {
  cmd->add_option("--candidates", o.candidates, "Candidate samples (JSONL)");
  if (pseudo) cmd->add_option("--pseudo-refs", o.pseudo_refs, "Pseudo-reference samples (JSONL)");
  if (refs) cmd->add_option("--references", o.references, "References (JSONL)");
  cmd->add_option("--metric", o.metric,
                  "chrf | chrf:<order>:<beta> | unigram-f1 | external:<path>");
  cmd->add_option("--out-dir", o.out_dir, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads");
  cmd->add_flag("--no-cache", o.no_cache, "Do not read or write the matrix cache");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"MBR decoding diagnostics"};
  app.name("mbrdiag");
  app.require_subcommand(1);

  auto* matrix = app.add_subcommand("matrix", "Build utility matrices");
  add_inputs(matrix, o, true, false);

  auto* decode = app.add_subcommand("decode", "MBR selection per segment");
  add_inputs(decode, o, true, false);

  auto* oracle = app.add_subcommand("oracle", "Oracle score against references");
  add_inputs(oracle, o, false, true);

  auto* diagnose = app.add_subcommand("diagnose", "Sample properties and anomaly scores");
  add_inputs(diagnose, o, true, true);
  diagnose->add_option("--ks", o.ks, "Neighbourhood sizes")->delimiter(',');
  diagnose->add_option("--reg", o.reg, "Covariance ridge");
  diagnose->add_option("--seeds", o.seeds, "Runs; input paths expand {seed}")->delimiter(',');
  diagnose->add_option("--label", o.label, "Config label for summary.tsv");

  auto* correlate = app.add_subcommand("correlate", "Spearman study over summary tables");
  correlate->add_option("--table", o.tables, "Summary TSV (repeatable)");
  correlate->add_option("--out-dir", o.out_dir, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate samples from a toy LM");
  synth->add_option("--lm", o.lm, "Toy LM JSON");
  synth->add_option("--method", o.method, "ancestral | nucleus | epsilon | beam");
  synth->add_option("--param", o.param, "Method parameter");
  synth->add_option("--n", o.n, "Samples per segment");
  synth->add_option("--segments", o.segments, "Number of segments");
  synth->add_option("--seed", o.seed, "Master seed");
  synth->add_option("--role", o.role, "samples | references");
  synth->add_option("--out-dir", o.out_dir, "Output directory");
  synth->add_option("--out", o.out, "Output file (overrides --out-dir)");
  synth->add_option("--threads", o.threads, "Worker threads");

  auto* report = app.add_subcommand("report", "Print a correlation table");
  report->add_option("--correlation", o.correlation, "correlation.json");
  report->add_option("--table", o.tables, "Summary TSV (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e, out, err);
    }
    err << "mbrdiag: validation error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*matrix) return cmd_matrix(o);
    if (*decode) return cmd_decode(o);
    if (*oracle) return cmd_oracle(o);
    if (*diagnose) return cmd_diagnose(o);
    if (*correlate) return cmd_correlate(o);
    if (*synth) return cmd_synth(o);
    if (*report) return cmd_report(o, out);
  } catch (const ValidationError& e) {
    err << "mbrdiag: validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ComputationError& e) {
    err << "mbrdiag: computation error: " << e.what() << '\n';
    return kExitComputation;
  } catch (const std::exception& e) {
    err << "mbrdiag: computation error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitValidation;
}

}  // namespace mbrdiag
