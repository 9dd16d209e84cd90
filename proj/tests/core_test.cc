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

#include <functional>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mbrdiag/error.h"
#include "test_support.h"

using namespace mbrdiag;
using testing_support::make_set;

namespace {

std::string record(int segment, int index, const std::string& text,
                   const std::string& logprobs = "[-0.5]",
                   const std::string& method = "\"epsilon\"", const std::string& param = "0.02",
                   int seed = 7) {
  return "{\"segment_id\": " + std::to_string(segment) +
         ", \"sample_index\": " + std::to_string(index) + ", \"text\": \"" + text +
         "\", \"token_logprobs\": " + logprobs + ", \"method\": " + method +
         ", \"param\": " + param + ", \"seed\": " + std::to_string(seed) + "}\n";
}

std::vector<SampleSet> parse(const std::string& text,
                             std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return read_sample_sets(in, "samples.jsonl", warnings);
}

std::string serialize(const std::vector<SampleSet>& sets) {
  std::ostringstream out;
  write_sample_sets(out, sets);
  return out.str();
}

std::vector<Reference> parse_refs(const std::string& text) {
  std::istringstream in(text);
  return read_references(in, "refs.jsonl");
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("sample file groups records by segment") {
  const auto sets = parse(record(0, 0, "a") + record(0, 1, "b") + record(1, 0, "c"));
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].samples.size() == 2);
  CHECK(sets[1].samples.size() == 1);
  CHECK(sets[0].method == SamplingMethod::epsilon(0.02));
  CHECK(sets[0].seed == 7);
  CHECK(sets[1].samples[0].text == "c");
}

TEST_CASE("empty sample file yields no sets") {
  CHECK(parse("").empty());
  CHECK(parse("\n\n").empty());
}

TEST_CASE("positive log-probability is rejected") {
  const auto msg = error_of([] { parse(record(0, 0, "a", "[-0.1, 0.2]")); });
  CHECK(msg.find("positive log-probability") != std::string::npos);
}

TEST_CASE("malformed line reports its line number") {
  const auto msg = error_of([] { parse(record(0, 0, "a") + "{not json\n"); });
  CHECK(msg.find("samples.jsonl:2:") != std::string::npos);
}

TEST_CASE("missing field and wrong types are rejected") {
  CHECK(error_of([] { parse("{\"segment_id\": 0}\n"); }).find("missing field") !=
        std::string::npos);
  CHECK_THROWS_AS(parse(record(0, 0, "a", "\"x\"")), ValidationError);
  CHECK_THROWS_AS(parse(record(0, 0, "a", "[]")), ValidationError);
  CHECK_THROWS_AS(parse("[1, 2]\n"), ValidationError);
}

TEST_CASE("mixed method or seed within a file is rejected") {
  CHECK(error_of([] {
          parse(record(0, 0, "a") + record(0, 1, "b", "[-1]", "\"ancestral\"", "null"));
        }).find("mixed method/seed") != std::string::npos);
  CHECK_THROWS_AS(parse(record(0, 0, "a") + record(0, 1, "b", "[-1]", "\"epsilon\"", "0.02", 8)),
                  ValidationError);
}

TEST_CASE("duplicate (segment_id, sample_index) is rejected") {
  CHECK(error_of([] { parse(record(0, 0, "a") + record(0, 0, "b")); }).find("duplicate") !=
        std::string::npos);
}

TEST_CASE("samples are ordered by sample_index, not by line order") {
  const auto forward = parse(record(0, 0, "a") + record(0, 1, "b") + record(0, 2, "c"));
  const auto shuffled = parse(record(0, 2, "c") + record(0, 0, "a") + record(0, 1, "b"));
  CHECK(serialize(forward) == serialize(shuffled));
  CHECK(shuffled[0].texts() == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("gaps in sample_index produce a warning") {
  std::vector<std::string> warnings;
  parse(record(0, 0, "a") + record(0, 5, "b"), &warnings);
  CHECK(warnings.size() == 1);
}

TEST_CASE("empty text needs exactly one end-of-sequence log-probability") {
  CHECK_NOTHROW(parse(record(0, 0, "", "[-0.3]")));
  CHECK_THROWS_AS(parse(record(0, 0, "", "[-0.3, -0.1]")), ValidationError);
}

TEST_CASE("sample serialization is canonical after one round") {
  const std::string original = record(3, 4, "x y") + record(3, 9, "\\u00e9t\\u00e9", "[-0.1, -2]") +
                               record(1, 0, "z", "[-0.30000000000000004]");
  const auto once = serialize(parse(original));
  const auto twice = serialize(parse(once));
  CHECK(once == twice);
  const auto back = parse(once);
  CHECK(back[0].segment_id == 1);
  CHECK(back[0].samples[0].token_logprobs[0] == -0.30000000000000004);
  CHECK(back[1].samples[1].text == "\xc3\xa9t\xc3\xa9");
}

TEST_CASE("beam width serializes as an integer param") {
  auto set = make_set(0, {"a"}, SamplingMethod::beam(4));
  const auto text = serialize({set});
  CHECK(text.find("\"param\": 4,") != std::string::npos);
  CHECK(parse(text)[0].method == SamplingMethod::beam(4));
  const auto anc = serialize({make_set(0, {"a"})});
  CHECK(anc.find("\"param\": null") != std::string::npos);
}

TEST_CASE("sampling method parameters are validated") {
  CHECK_THROWS_AS(SamplingMethod::nucleus(0.0), ValidationError);
  CHECK_THROWS_AS(SamplingMethod::nucleus(1.5), ValidationError);
  CHECK_NOTHROW(SamplingMethod::nucleus(1.0));
  CHECK_THROWS_AS(SamplingMethod::epsilon(1.0), ValidationError);
  CHECK_THROWS_AS(SamplingMethod::epsilon(-0.1), ValidationError);
  CHECK_NOTHROW(SamplingMethod::epsilon(0.0));
  CHECK_THROWS_AS(SamplingMethod::beam(0), ValidationError);
  CHECK_THROWS_AS(SamplingMethod::from_name("beam", 2.5), ValidationError);
  CHECK_THROWS_AS(SamplingMethod::from_name("topk", 5.0), ValidationError);
  CHECK_THROWS_AS(SamplingMethod::from_name("nucleus", std::nullopt), ValidationError);
  CHECK(SamplingMethod::from_name("ancestral", std::nullopt) == SamplingMethod::ancestral());
}

TEST_CASE("sample helpers") {
  const Sample s{"a b", {-1.0, -2.0, -3.0}};
  CHECK(s.total_logprob() == -6.0);
  CHECK(s.mean_token_logprob() == -2.0);
}

TEST_CASE("references load sorted and reject duplicates") {
  const auto refs = parse_refs(
      "{\"segment_id\": 1, \"text\": \"b\", \"source\": null}\n"
      "{\"segment_id\": 0, \"text\": \"a\", \"source\": \"src\"}\n");
  REQUIRE(refs.size() == 2);
  CHECK(refs[0].segment_id == 0);
  CHECK(refs[0].source == std::optional<std::string>("src"));
  CHECK_FALSE(refs[1].source.has_value());

  const auto msg = error_of([] {
    parse_refs(
        "{\"segment_id\": 0, \"text\": \"a\", \"source\": null}\n"
        "{\"segment_id\": 0, \"text\": \"b\", \"source\": null}\n");
  });
  CHECK(msg.find("duplicate reference for segment 0") != std::string::npos);

  std::ostringstream out;
  write_references(out, refs);
  CHECK(parse_refs(out.str())[1].text == "b");
}

TEST_CASE("align matches the three inputs by segment") {
  const std::vector<SampleSet> cands = {make_set(0, {"a"}), make_set(1, {"b"})};
  const std::vector<SampleSet> prefs = {make_set(0, {"c"}), make_set(1, {"d"})};
  const std::vector<Reference> refs = {{0, "r0", std::nullopt}, {1, "r1", std::nullopt}};
  const auto corpus = align(cands, prefs, refs);
  REQUIRE(corpus.size() == 2);
  CHECK(corpus.segments[1].reference == "r1");
  CHECK(corpus.segments[1].pseudo_refs.texts()[0] == "d");

  const auto msg = error_of([&] { align(cands, prefs, {refs[0]}); });
  CHECK(msg.find("segment 1") != std::string::npos);
  CHECK_THROWS_AS(align(cands, {prefs[0]}, refs), ValidationError);
  CHECK_THROWS_AS(align({cands[1]}, prefs, refs), ValidationError);
}

TEST_CASE("candidates may double as pseudo-references") {
  const std::vector<SampleSet> cands = {make_set(0, {"a", "b"})};
  const auto corpus = align(cands, cands, {{0, "r", std::nullopt}});
  CHECK(corpus.segments[0].candidates.texts() == corpus.segments[0].pseudo_refs.texts());
}

TEST_CASE("pair_by_segment requires matching segments") {
  const auto pairs = pair_by_segment({make_set(0, {"a"}), make_set(2, {"b"})},
                                     {make_set(0, {"c"}), make_set(2, {"d"})});
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[1].first.segment_id == 2);
  CHECK_THROWS_AS(pair_by_segment({make_set(0, {"a"})}, {make_set(1, {"a"})}), ValidationError);
}

TEST_CASE("format_double round-trips every double") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("sample files round-trip through disk") {
  testing_support::TempDir dir;
  const std::vector<SampleSet> sets = {make_set(0, {"a", "b"}), make_set(1, {"c"})};
  save_sample_file(dir / "s.jsonl", sets);
  CHECK(serialize(load_sample_file(dir / "s.jsonl")) == serialize(sets));
  CHECK_THROWS_AS(load_sample_file(dir / "missing.jsonl"), ValidationError);
}
