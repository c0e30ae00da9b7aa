#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sescore/config.hpp"
#include "sescore/error.hpp"
#include "sescore/perturbers.hpp"
#include "sescore/quality_model.hpp"
#include "sescore/severity.hpp"

namespace sescore {

/// One training example <reference, candidate, score> with its provenance.
struct Triple {
  std::string reference;
  std::string candidate;
  int score = 0;
  std::vector<EditRecord> chain;
  std::uint64_t seed = 0;
  std::string params_fingerprint;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string params_fingerprint(const SynthesisParams& p) { return hex64(fnv1a(to_json(p).dump())); }

/// Per-sentence seed; depends only on the global seed and the line index, so
/// output does not depend on the worker count.
inline std::uint64_t sentence_seed(std::uint64_t global_seed, std::size_t line_index) {
  return mix_seed(global_seed, static_cast<std::uint64_t>(line_index));
}

// ---------------------------------------------------------------------------
// JSONL record: {"ref","cand","score","chain","seed","params"}.

inline nlohmann::ordered_json to_json(const Triple& t) {
  nlohmann::ordered_json chain = nlohmann::ordered_json::array();
  for (const auto& r : t.chain) {
    chain.push_back(nlohmann::ordered_json{{"kind", std::string(to_string(r.kind))},
                                           {"start", r.span_before.start},
                                           {"len", r.span_before.len},
                                           {"tokens", r.inserted_tokens},
                                           {"backend", r.backend_used},
                                           {"severity", r.severity}});
  }
  return nlohmann::ordered_json{{"ref", t.reference},  {"cand", t.candidate}, {"score", t.score},
                                {"chain", std::move(chain)}, {"seed", t.seed},     {"params", t.params_fingerprint}};
}

inline std::string to_jsonl(const Triple& t) { return to_json(t).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace); }

inline const std::set<std::string>& triple_keys() {
  static const std::set<std::string> keys{"ref", "cand", "score", "chain", "seed", "params"};
  return keys;
}

/// Parses one JSONL record; throws DataError describing the first problem.
inline Triple triple_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  if (keys != triple_keys()) throw DataError("record keys must be exactly ref, cand, score, chain, seed, params");
  Triple t;
  try {
    t.reference = j.at("ref").get<std::string>();
    t.candidate = j.at("cand").get<std::string>();
    t.score = j.at("score").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.params_fingerprint = j.at("params").get<std::string>();
    for (const auto& e : j.at("chain")) {
      EditRecord r;
      if (!parse_edit_kind(e.at("kind").get<std::string>(), r.kind)) throw DataError("unknown edit kind");
      r.span_before = Span{e.at("start").get<std::size_t>(), e.at("len").get<std::size_t>()};
      r.inserted_tokens = e.value("tokens", std::vector<std::string>{});
      r.backend_used = e.value("backend", std::string{});
      r.severity = e.at("severity").get<int>();
      t.chain.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Statistics.

struct CorpusStats {
  std::size_t n_sentences = 0;  // input lines read
  std::size_t n_triples = 0;
  std::size_t n_filtered = 0;   // malformed or too short, no triple emitted
  std::size_t n_zero_step = 0;
  std::map<int, std::size_t> score_histogram;
  KindTally kinds;
  std::size_t total_edits = 0;

  double mean_edits() const { return n_triples ? static_cast<double>(total_edits) / n_triples : 0.0; }

  std::size_t attempts(EditKind k) const { return kinds.accepted[kind_index(k)] + kinds.skipped[kind_index(k)]; }

  void add(const Triple& t, const KindTally& tally) {
    ++n_triples;
    ++score_histogram[t.score];
    total_edits += t.chain.size();
    if (t.chain.empty()) ++n_zero_step;
    for (std::size_t i = 0; i < 4; ++i) {
      kinds.accepted[i] += tally.accepted[i];
      kinds.skipped[i] += tally.skipped[i];
    }
  }
};

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [score, n] : s.score_histogram) hist[std::to_string(score)] = n;
  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (EditKind k : kAllEditKinds)
    kinds[std::string(to_string(k))] = {{"accepted", s.kinds.accepted[kind_index(k)]},
                                        {"skipped", s.kinds.skipped[kind_index(k)]},
                                        {"attempts", s.attempts(k)}};
  return nlohmann::ordered_json{{"n_sentences", s.n_sentences}, {"n_triples", s.n_triples},
                                {"n_filtered", s.n_filtered},   {"n_zero_step", s.n_zero_step},
                                {"mean_edits", s.mean_edits()}, {"score_histogram", std::move(hist)},
                                {"kinds", std::move(kinds)}};
}

// ---------------------------------------------------------------------------
// Pipeline.

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    unsigned char lo = 0x80, hi = 0xbf;  // allowed range of the second byte
    if (c < 0x80) n = 0;
    else if (c >= 0xc2 && c <= 0xdf) n = 1;
    else if (c >= 0xe0 && c <= 0xef) {
      n = 2;
      if (c == 0xe0) lo = 0xa0;
      if (c == 0xed) hi = 0x9f;
    } else if (c >= 0xf0 && c <= 0xf4) {
      n = 3;
      if (c == 0xf0) lo = 0x90;
      if (c == 0xf4) hi = 0x8f;
    } else {
      return false;
    }
    if (i + n >= s.size()) return false;
    for (std::size_t k = 1; k <= n; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if (k == 1 ? (b < lo || b > hi) : (b >> 6) != 0x2) return false;
    }
    i += n + 1;
  }
  return true;
}

struct SynthesisOptions {
  SynthesisParams params;
  SeverityParams severity;
  std::uint64_t global_seed = 0;
  std::size_t workers = 1;
  std::size_t start_index = 0;  // lines before this index are skipped (resume)
  std::size_t chunk_size = 512;
  std::ostream* warnings = nullptr;  // one JSON line per filtered input line
  std::ostream* progress = nullptr;  // one line per 10k input lines
};

/// Raised when a backend fails mid-run. Every line before next_index has been
/// written; rerunning with start_index = next_index resumes the corpus.
class SynthesisInterrupted : public BackendError {
 public:
  SynthesisInterrupted(const std::string& what, std::size_t next_index)
      : BackendError(what), next_index_(next_index) {}
  std::size_t next_index() const { return next_index_; }

 private:
  std::size_t next_index_;
};

/// Builds the triple for one input sentence, or nullopt if the line is filtered.
inline std::optional<std::pair<Triple, KindTally>> synthesize_triple(const std::string& line, std::size_t index,
                                                                    const SynthesisOptions& opt,
                                                                    const Provider& provider, EntailmentCache* cache) {
  if (!valid_utf8(line)) return std::nullopt;
  Sentence x = tokenize(line);
  if (x.size() < std::max<std::size_t>(1, opt.params.min_tokens)) return std::nullopt;
  x.source_id = std::to_string(index);
  const std::uint64_t seed = sentence_seed(opt.global_seed, index);
  PerturbationChain chain = synthesize_chain(x, opt.params, provider, seed);
  Triple t;
  t.score = chain_score(chain, opt.severity, provider, cache);
  t.reference = detokenize(chain.reference);
  t.candidate = detokenize(chain.candidate());
  t.seed = seed;
  t.params_fingerprint = params_fingerprint(opt.params);
  for (auto& step : chain.steps) t.chain.push_back(std::move(step.record));
  return std::make_pair(std::move(t), chain.tally);
}

/// Streams raw sentences (one per line) to JSONL triples, preserving input
/// order whatever the worker count.
inline CorpusStats run_synthesis(std::istream& input, std::ostream& output, const SynthesisOptions& opt,
                                 const Provider& provider, EntailmentCache* cache = nullptr) {
  opt.params.validate();
  opt.severity.validate();
  EntailmentCache local_cache;
  if (!cache) cache = &local_cache;
  const std::size_t workers = std::max<std::size_t>(1, opt.workers);
  CorpusStats stats;
  std::size_t index = 0;
  std::string line;
  bool eof = false;

  while (!eof) {
    std::vector<std::string> chunk;
    while (chunk.size() < std::max<std::size_t>(1, opt.chunk_size)) {
      if (!std::getline(input, line)) {
        eof = true;
        break;
      }
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (index++ < opt.start_index) continue;
      chunk.push_back(line);
    }
    if (chunk.empty()) continue;
    const std::size_t first = index - chunk.size();

    std::vector<std::optional<std::pair<Triple, KindTally>>> results(chunk.size());
    std::vector<std::exception_ptr> errors(chunk.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < chunk.size();) {
        try {
          results[i] = synthesize_triple(chunk[i], first + i, opt, provider, cache);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 1; w < std::min(workers, chunk.size()); ++w) pool.emplace_back(work);
      work();
    }

    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const std::size_t line_index = first + i;
      if (errors[i]) {
        output.flush();
        try {
          std::rethrow_exception(errors[i]);
        } catch (const BackendError& e) {
          throw SynthesisInterrupted(e.what(), line_index);
        }
      }
      ++stats.n_sentences;
      if (!results[i]) {
        ++stats.n_filtered;
        if (opt.warnings)
          *opt.warnings << nlohmann::json{{"warning", "filtered input line"}, {"line", line_index + 1}}.dump() << '\n';
      } else {
        output << to_jsonl(results[i]->first) << '\n';
        stats.add(results[i]->first, results[i]->second);
      }
      if (opt.progress && (line_index + 1) % 10000 == 0) *opt.progress << "synth: " << line_index + 1 << " lines\n";
    }
  }
  output.flush();
  return stats;
}

// ---------------------------------------------------------------------------
// Validation.

struct CorpusViolation {
  std::size_t record_index = 0;  // 0-based line index
  std::string message;
};

struct ValidationReport {
  CorpusStats stats;
  std::optional<CorpusViolation> violation;
};

/// Re-checks every record: schema, s' = sum of severities, score bounds,
/// chain length, and that replaying the chain on ref reproduces cand.
/// Stops at the first violation.
inline ValidationReport validate_corpus(std::istream& in, std::size_t m_max = 5, int severe_penalty = -5) {
  ValidationReport rep;
  std::string line;
  for (std::size_t idx = 0; std::getline(in, line); ++idx) {
    auto fail = [&](const std::string& msg) {
      rep.violation = CorpusViolation{idx, msg};
      return rep;
    };
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) return fail("invalid JSON");
    Triple t;
    try {
      t = triple_from_json(j);
    } catch (const DataError& e) {
      return fail(e.what());
    }
    int sum = 0;
    for (const auto& r : t.chain) {
      if (r.severity > 0 || r.severity < severe_penalty) return fail("step severity out of range");
      sum += r.severity;
    }
    if (sum != t.score)
      return fail("score " + std::to_string(t.score) + " != sum of step severities " + std::to_string(sum));
    if (t.chain.size() > m_max) return fail("chain longer than m_max");
    const int floor = severe_penalty * static_cast<int>(m_max);
    if (t.score > 0 || t.score < floor)
      return fail("score " + std::to_string(t.score) + " outside [" + std::to_string(floor) + ", 0]");
    if (t.chain.empty() && t.candidate != t.reference) return fail("zero-step chain with cand != ref");
    if (!t.chain.empty() && t.candidate == t.reference) return fail("cand equals ref after edits");
    Sentence z = tokenize(t.reference);
    Ledger ledger(z.size());
    try {
      for (const auto& r : t.chain) {
        auto next = try_apply(z, ledger, r);
        if (!next) return fail("chain step overlaps an earlier edit or is a no-op");
        z = std::move(next->sentence);
        ledger = std::move(next->ledger);
      }
    } catch (const DataError& e) {
      return fail(std::string("chain does not replay: ") + e.what());
    }
    if (detokenize(z) != t.candidate) return fail("replaying the chain does not reproduce cand");
    KindTally tally;
    for (const auto& r : t.chain) ++tally.accepted[kind_index(r.kind)];
    ++rep.stats.n_sentences;
    rep.stats.add(t, tally);
  }
  return rep;
}

inline std::vector<TrainingExample> load_training_examples(std::istream& in) {
  std::vector<TrainingExample> out;
  std::string line;
  for (std::size_t idx = 0; std::getline(in, line); ++idx) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("triples line " + std::to_string(idx + 1) + ": invalid JSON");
    try {
      Triple t = triple_from_json(j);
      out.push_back({t.reference, t.candidate, static_cast<double>(t.score)});
    } catch (const DataError& e) {
      throw DataError("triples line " + std::to_string(idx + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sescore
