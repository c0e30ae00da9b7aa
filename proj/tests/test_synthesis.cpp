#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include "support.hpp"

using namespace sescore;
using namespace sescore::testing;

namespace {

std::string corpus_text(std::size_t n, std::uint32_t seed) {
  std::string out;
  for (const auto& s : random_sentences(n, seed)) out += s + "\n";
  return out;
}

std::pair<std::string, CorpusStats> synth(const std::string& input, SynthesisOptions opt, const Provider& p) {
  std::istringstream in(input);
  std::ostringstream out;
  auto stats = run_synthesis(in, out, opt, p);
  return {out.str(), stats};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Synthesis, OneTriplePerSentenceWithExactKeys) {
  MockProvider mock;
  SynthesisOptions opt;
  opt.global_seed = 5;
  const auto [text, stats] = synth(corpus_text(1000, 1), opt, mock);
  const auto lines = lines_of(text);
  ASSERT_EQ(lines.size(), 1000u);
  EXPECT_EQ(stats.n_triples, 1000u);
  EXPECT_EQ(stats.n_sentences, 1000u);
  for (const auto& l : lines) {
    const auto j = nlohmann::json::parse(l);
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    ASSERT_EQ(keys, triple_keys());
  }
  const auto first = triple_from_json(nlohmann::json::parse(lines.front()));
  EXPECT_EQ(first.seed, sentence_seed(5, 0));
  EXPECT_EQ(first.params_fingerprint, params_fingerprint(SynthesisParams{}));
}

TEST(Synthesis, EmptyInput) {
  MockProvider mock;
  const auto [text, stats] = synth("", SynthesisOptions{}, mock);
  EXPECT_TRUE(text.empty());
  EXPECT_EQ(stats.n_sentences, 0u);
  EXPECT_EQ(stats.n_triples, 0u);
  EXPECT_TRUE(stats.score_histogram.empty());
}

TEST(Synthesis, OutputIndependentOfWorkersAndChunking) {
  MockProvider mock(2);
  const std::string input = corpus_text(1500, 2);
  SynthesisOptions base;
  base.global_seed = 9;
  const auto reference = synth(input, base, mock).first;
  for (std::size_t workers : {2u, 5u, 16u}) {
    for (std::size_t chunk : {1u, 7u, 512u}) {
      SynthesisOptions opt = base;
      opt.workers = workers;
      opt.chunk_size = chunk;
      EXPECT_EQ(synth(input, opt, mock).first, reference) << workers << " workers, chunk " << chunk;
    }
  }
  SynthesisOptions other = base;
  other.global_seed = 10;
  EXPECT_NE(synth(input, other, mock).first, reference);
}

TEST(Synthesis, FiltersShortAndMalformedLines) {
  MockProvider mock;
  std::ostringstream warnings;
  SynthesisOptions opt;
  opt.warnings = &warnings;
  const std::string input = "one two three four five\nshort line\n\nbad \xff\xfe bytes here now\nsix seven eight nine\n";
  const auto [text, stats] = synth(input, opt, mock);
  EXPECT_EQ(lines_of(text).size(), 2u);
  EXPECT_EQ(stats.n_sentences, 5u);
  EXPECT_EQ(stats.n_filtered, 3u);
  const auto w = lines_of(warnings.str());
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(nlohmann::json::parse(w[0])["line"], 2);
  EXPECT_EQ(nlohmann::json::parse(w[2])["line"], 4);
}

TEST(Synthesis, CandidateDiffersFromReferenceUnlessZeroStep) {
  MockProvider mock;
  const auto text = synth(corpus_text(2000, 3), SynthesisOptions{}, mock).first;
  for (const auto& l : lines_of(text)) {
    const auto t = triple_from_json(nlohmann::json::parse(l));
    ASSERT_EQ(t.chain.empty(), t.candidate == t.reference) << l;
  }
}

TEST(Synthesis, MinorOnlyHistogramSupport) {
  MockProvider mock;
  SynthesisOptions opt;
  opt.severity.mode = SeverityMode::MinorOnly;
  const auto stats = synth(corpus_text(2000, 4), opt, mock).second;
  for (const auto& [score, n] : stats.score_histogram) {
    EXPECT_GE(score, -5);
    EXPECT_LE(score, 0);
  }
}

TEST(Synthesis, StatsAreConsistent) {
  MockProvider mock;
  const auto [text, stats] = synth(corpus_text(800, 5), SynthesisOptions{}, mock);
  std::size_t hist_total = 0;
  for (const auto& [score, n] : stats.score_histogram) hist_total += n;
  EXPECT_EQ(hist_total, stats.n_triples);
  std::size_t accepted = 0;
  for (EditKind k : kAllEditKinds) accepted += stats.kinds.accepted[kind_index(k)];
  EXPECT_EQ(accepted, stats.total_edits);
  const auto j = to_json(stats);
  for (EditKind k : kAllEditKinds) {
    const auto& e = j["kinds"][std::string(to_string(k))];
    EXPECT_EQ(e["accepted"].get<std::size_t>() + e["skipped"].get<std::size_t>(), e["attempts"].get<std::size_t>());
  }
}

TEST(Synthesis, BackendFailureIsResumable) {
  const std::string input = corpus_text(300, 6);
  MockProvider mock;
  SynthesisOptions opt;
  opt.global_seed = 3;
  opt.chunk_size = 50;
  const auto full = synth(input, opt, mock).first;

  FlakyProvider flaky(400);
  std::istringstream in(input);
  std::ostringstream partial;
  std::size_t next = 0;
  try {
    run_synthesis(in, partial, opt, flaky);
    FAIL() << "expected SynthesisInterrupted";
  } catch (const SynthesisInterrupted& e) {
    next = e.next_index();
  }
  ASSERT_GT(next, 0u);
  ASSERT_LT(next, 300u);
  EXPECT_EQ(lines_of(partial.str()).size(), next);

  SynthesisOptions resume = opt;
  resume.start_index = next;
  const auto rest = synth(input, resume, mock).first;
  EXPECT_EQ(partial.str() + rest, full);
}

TEST(Validate, GeneratedCorpusIsClean) {
  MockProvider mock;
  const auto text = synth(corpus_text(1000, 7), SynthesisOptions{}, mock).first;
  std::istringstream in(text);
  const auto rep = validate_corpus(in);
  EXPECT_FALSE(rep.violation) << rep.violation->message;
  EXPECT_EQ(rep.stats.n_triples, 1000u);
}

TEST(Validate, DetectsCorruption) {
  MockProvider mock;
  auto lines = lines_of(synth(corpus_text(50, 8), SynthesisOptions{}, mock).first);
  auto check = [&](std::size_t idx, const std::function<void(nlohmann::json&)>& corrupt, const std::string& expect) {
    auto copy = lines;
    auto j = nlohmann::json::parse(copy[idx]);
    corrupt(j);
    copy[idx] = j.dump();
    std::string text;
    for (const auto& l : copy) text += l + "\n";
    std::istringstream in(text);
    const auto rep = validate_corpus(in);
    ASSERT_TRUE(rep.violation) << expect;
    EXPECT_EQ(rep.violation->record_index, idx);
    EXPECT_NE(rep.violation->message.find(expect), std::string::npos) << rep.violation->message;
  };
  std::size_t idx = 0;
  while (nlohmann::json::parse(lines[idx])["chain"].size() < 2) ++idx;
  check(idx, [](auto& j) { j["score"] = j["score"].template get<int>() - 1; }, "sum of step severities");
  check(idx, [](auto& j) { j["cand"] = j["cand"].template get<std::string>() + " extra"; }, "reproduce cand");
  check(idx, [](auto& j) { j.erase("seed"); }, "keys");
  check(idx, [](auto& j) { j["extra"] = 1; }, "keys");
  check(idx, [](auto& j) { j["chain"][0]["severity"] = -7; }, "severity out of range");
  check(idx, [](auto& j) { j["chain"][1] = j["chain"][0]; }, "");
}

TEST(Validate, TenThousandRecordsUnderOneSecond) {
  MockProvider mock;
  SynthesisOptions opt;
  opt.workers = 4;
  const auto text = synth(corpus_text(10000, 9), opt, mock).first;
  std::istringstream in(text);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = validate_corpus(in);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_FALSE(rep.violation);
  EXPECT_EQ(rep.stats.n_triples, 10000u);
  EXPECT_LT(secs, 1.0);
}

TEST(Validate, RejectsInvalidJson) {
  std::istringstream in("{\"ref\": \n");
  const auto rep = validate_corpus(in);
  ASSERT_TRUE(rep.violation);
  EXPECT_EQ(rep.violation->record_index, 0u);
}

TEST(Utf8, Validation) {
  EXPECT_TRUE(valid_utf8("plain"));
  EXPECT_TRUE(valid_utf8("caf\xc3\xa9 \xe2\x82\xac \xf0\x9f\x98\x80"));
  EXPECT_FALSE(valid_utf8("\xc3"));
  EXPECT_FALSE(valid_utf8("\xc0\xaf"));
  EXPECT_FALSE(valid_utf8("\xed\xa0\x80"));
  EXPECT_FALSE(valid_utf8("\xf4\x90\x80\x80"));
}

TEST(TrainingExamples, LoadFromTriples) {
  MockProvider mock;
  const auto text = synth(corpus_text(20, 10), SynthesisOptions{}, mock).first;
  std::istringstream in(text);
  const auto ex = load_training_examples(in);
  ASSERT_EQ(ex.size(), 20u);
  std::istringstream bad("not json\n");
  EXPECT_THROW(load_training_examples(bad), DataError);
}
