#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sescore/error.hpp"
#include "sescore/gateway.hpp"
#include "sescore/random.hpp"
#include "sescore/span_ledger.hpp"
#include "sescore/text.hpp"

namespace sescore {

struct SynthesisParams {
  double lambda_e = 5.0;       // Poisson rate of the edit count
  std::size_t m_max = 5;       // hard cap on edits per chain
  double lambda_d = 1.5;       // Poisson rate of delete span length
  double lambda_r = 1.5;       // Poisson rate of phrase-replace span length
  std::size_t lambda_s = 4;    // max swap distance
  std::size_t top_k = 4;       // fill-mask sampling breadth
  std::size_t max_retries = 32;
  double phrase_prob = 0.5;    // P(seq2seq phrase mode) for Insert/Replace
  bool strict_q = false;       // accept only if q(start) > len
  std::size_t min_tokens = 4;  // shorter input lines are filtered by the pipeline

  void validate() const {
    if (!(lambda_e > 0) || !(lambda_d > 0) || !(lambda_r > 0) || lambda_s == 0)
      throw UsageError("synthesis params: all rates must be positive");
    if (m_max < 1) throw UsageError("synthesis params: m_max must be >= 1");
    if (top_k < 1) throw UsageError("synthesis params: top_k must be >= 1");
    if (max_retries < 1) throw UsageError("synthesis params: max_retries must be >= 1");
    if (phrase_prob < 0 || phrase_prob > 1) throw UsageError("synthesis params: phrase_prob must be in [0,1]");
  }
};

/// One accepted perturbation. For Swap, span_before.start and span_before.end()
/// are the exchanged positions; for Delete inserted_tokens is empty.
struct EditRecord {
  EditKind kind = EditKind::Insert;
  Span span_before;
  std::vector<std::string> inserted_tokens;
  std::string backend_used;
  int severity = 0;
};

struct Perturbation {
  Sentence sentence;
  EditRecord record;
  Ledger ledger;
};

struct ChainStep {
  EditRecord record;
  Sentence sentence;
};

struct KindTally {
  std::array<std::size_t, 4> accepted{};
  std::array<std::size_t, 4> skipped{};
};

/// z0 = reference, z_i = steps[i-1].sentence; the candidate is the last one.
struct PerturbationChain {
  Sentence reference;
  std::vector<ChainStep> steps;
  std::uint64_t rng_seed = 0;
  KindTally tally;

  const Sentence& candidate() const { return steps.empty() ? reference : steps.back().sentence; }
  const Sentence& before(std::size_t i) const { return i == 0 ? reference : steps[i - 1].sentence; }
};

inline std::size_t kind_index(EditKind k) { return static_cast<std::size_t>(k); }

/// Replays a record on its pre-edit sentence. Throws DataError if the record
/// does not fit the sentence.
inline Sentence apply_edit(const Sentence& z, const EditRecord& r) {
  Sentence out = z;
  auto& t = out.tokens;
  const Span sp = r.span_before;
  switch (r.kind) {
    case EditKind::Insert:
      if (sp.start > t.size()) throw DataError("insert position out of range");
      t.insert(t.begin() + static_cast<std::ptrdiff_t>(sp.start), r.inserted_tokens.begin(), r.inserted_tokens.end());
      break;
    case EditKind::Delete:
      if (sp.end() > t.size()) throw DataError("delete span out of range");
      t.erase(t.begin() + static_cast<std::ptrdiff_t>(sp.start), t.begin() + static_cast<std::ptrdiff_t>(sp.end()));
      break;
    case EditKind::Replace: {
      if (sp.end() > t.size()) throw DataError("replace span out of range");
      auto first = t.erase(t.begin() + static_cast<std::ptrdiff_t>(sp.start),
                           t.begin() + static_cast<std::ptrdiff_t>(sp.end()));
      t.insert(first, r.inserted_tokens.begin(), r.inserted_tokens.end());
      break;
    }
    case EditKind::Swap:
      if (sp.end() >= t.size()) throw DataError("swap position out of range");
      std::swap(t[sp.start], t[sp.end()]);
      break;
  }
  return out;
}

/// Checks a concrete edit against the ledger and applies it. Returns nullopt
/// when the edit overlaps protected spans or would leave the sentence
/// unchanged.
inline std::optional<Perturbation> try_apply(const Sentence& z, const Ledger& ledger, EditRecord record) {
  if (!ledger.accepts(record.kind, record.span_before)) return std::nullopt;
  if (record.kind == EditKind::Delete || record.kind == EditKind::Swap) record.inserted_tokens.clear();
  if ((record.kind == EditKind::Insert || record.kind == EditKind::Replace) && record.inserted_tokens.empty())
    return std::nullopt;
  Sentence next = apply_edit(z, record);
  if (next == z || next.empty()) return std::nullopt;
  Ledger updated = ledger.apply(record.kind, record.span_before, record.inserted_tokens.size());
  return Perturbation{std::move(next), std::move(record), std::move(updated)};
}

/// k = min(max(1, Poisson(lambda_e)), m_max).
inline std::size_t sample_edit_count(const SynthesisParams& params, Rng& rng) {
  const std::uint64_t draw = rng.poisson(params.lambda_e);
  return static_cast<std::size_t>(std::clamp<std::uint64_t>(draw, 1, params.m_max));
}

namespace detail {

inline std::size_t span_length(double lambda, Rng& rng) {
  return static_cast<std::size_t>(std::max<std::uint64_t>(1, rng.poisson(lambda)));
}

// Backends may return multi-word strings; normalize to whitespace tokens.
inline std::vector<std::string> retokenize(const std::vector<std::string>& tokens) {
  return tokenize(join_tokens(tokens)).tokens;
}

inline std::optional<std::string> sample_candidate(const std::vector<FillCandidate>& cands, Rng& rng) {
  double total = 0.0;
  for (const auto& c : cands) total += c.probability;
  if (cands.empty() || !(total > 0)) return std::nullopt;
  double x = rng.uniform01() * total;
  for (const auto& c : cands) {
    x -= c.probability;
    if (x < 0) return c.token;
  }
  return cands.back().token;
}

inline std::vector<std::string> with_mask(const std::vector<std::string>& tokens, Span replaced) {
  std::vector<std::string> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(replaced.start));
  out.emplace_back(kMaskToken);
  out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(replaced.end()), tokens.end());
  return out;
}

}  // namespace detail

inline std::optional<Perturbation> perturb_insert(const Sentence& z, const Ledger& ledger, const SynthesisParams& params,
                                                  const Provider& filler, Rng& rng) {
  if (z.empty()) return std::nullopt;
  std::optional<std::size_t> point;
  for (std::size_t attempt = 0; attempt < params.max_retries && !point; ++attempt) {
    const auto h = static_cast<std::size_t>(rng.below(z.size() + 1));
    if (ledger.can_insert_at(h)) point = h;
  }
  if (!point) return std::nullopt;

  EditRecord record{EditKind::Insert, Span{*point, 0}, {}, {}, 0};
  const auto context = detail::with_mask(z.tokens, Span{*point, 0});
  if (rng.bernoulli(params.phrase_prob)) {
    const std::size_t hint = detail::span_length(params.lambda_r, rng);
    record.inserted_tokens = detail::retokenize(filler.infill({context, *point, hint}));
    record.backend_used = filler.backend_id() + "/infill";
  } else {
    const auto resp = filler.fill_mask({context, *point, params.top_k});
    if (auto tok = detail::sample_candidate(resp.candidates, rng)) record.inserted_tokens = detail::retokenize({*tok});
    record.backend_used = filler.backend_id() + "/fill_mask";
  }
  return try_apply(z, ledger, std::move(record));
}

inline std::optional<Perturbation> perturb_delete(const Sentence& z, const Ledger& ledger, const SynthesisParams& params,
                                                  Rng& rng) {
  const std::size_t n = z.size();
  if (n <= 1) return std::nullopt;
  for (std::size_t attempt = 0; attempt < params.max_retries; ++attempt) {
    const auto h = static_cast<std::size_t>(rng.below(n));
    const std::size_t len = std::min(detail::span_length(params.lambda_d, rng), n - h);
    if (len >= n) continue;
    if (!ledger.accepts(EditKind::Delete, Span{h, len})) continue;
    return try_apply(z, ledger, EditRecord{EditKind::Delete, Span{h, len}, {}, "builtin", 0});
  }
  return std::nullopt;
}

inline std::optional<Perturbation> perturb_replace(const Sentence& z, const Ledger& ledger,
                                                   const SynthesisParams& params, const Provider& filler, Rng& rng) {
  const std::size_t n = z.size();
  if (n == 0) return std::nullopt;
  const bool phrase = rng.bernoulli(params.phrase_prob);
  std::optional<Span> span;
  for (std::size_t attempt = 0; attempt < params.max_retries && !span; ++attempt) {
    const auto h = static_cast<std::size_t>(rng.below(n));
    const std::size_t len = phrase ? std::min(detail::span_length(params.lambda_r, rng), n - h) : 1;
    if (ledger.accepts(EditKind::Replace, Span{h, len})) span = Span{h, len};
  }
  if (!span) return std::nullopt;

  EditRecord record{EditKind::Replace, *span, {}, {}, 0};
  const auto context = detail::with_mask(z.tokens, *span);
  if (phrase) {
    record.inserted_tokens = detail::retokenize(filler.infill({context, span->start, span->len}));
    record.backend_used = filler.backend_id() + "/infill";
  } else {
    auto resp = filler.fill_mask({context, span->start, params.top_k});
    const std::string& original = z.tokens[span->start];
    std::erase_if(resp.candidates, [&](const FillCandidate& c) { return c.token == original; });
    auto tok = detail::sample_candidate(resp.candidates, rng);
    if (!tok) return std::nullopt;
    record.inserted_tokens = detail::retokenize({*tok});
    record.backend_used = filler.backend_id() + "/fill_mask";
  }
  return try_apply(z, ledger, std::move(record));
}

inline std::optional<Perturbation> perturb_swap(const Sentence& z, const Ledger& ledger, const SynthesisParams& params,
                                                Rng& rng) {
  const std::size_t n = z.size();
  if (n < 2) return std::nullopt;
  for (std::size_t attempt = 0; attempt < params.max_retries; ++attempt) {
    const auto h = static_cast<std::size_t>(rng.below(n));
    const auto dist = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(params.lambda_s)));
    const Span span{h, dist};
    if (!ledger.accepts(EditKind::Swap, span)) continue;
    if (z.tokens[span.start] == z.tokens[span.end()]) return std::nullopt;
    return try_apply(z, ledger, EditRecord{EditKind::Swap, span, {}, "builtin", 0});
  }
  return std::nullopt;
}

inline std::optional<Perturbation> perturb(EditKind kind, const Sentence& z, const Ledger& ledger,
                                           const SynthesisParams& params, const Provider& filler, Rng& rng) {
  switch (kind) {
    case EditKind::Insert: return perturb_insert(z, ledger, params, filler, rng);
    case EditKind::Delete: return perturb_delete(z, ledger, params, rng);
    case EditKind::Replace: return perturb_replace(z, ledger, params, filler, rng);
    case EditKind::Swap: return perturb_swap(z, ledger, params, rng);
  }
  return std::nullopt;
}

/// Draws k edits, then repeatedly picks a kind uniformly and tries it. Skipped
/// attempts do not count toward k; the loop gives up after 4 * k * max_retries
/// attempts, leaving a shorter (possibly empty) chain.
inline PerturbationChain synthesize_chain(const Sentence& x, const SynthesisParams& params, const Provider& filler,
                                          std::uint64_t seed) {
  PerturbationChain chain;
  chain.reference = x;
  chain.rng_seed = seed;
  if (x.empty()) return chain;

  Rng rng(seed);
  const std::size_t k = sample_edit_count(params, rng);
  const std::size_t budget = 4 * k * params.max_retries;
  Ledger ledger(x.size(), params.strict_q);
  Sentence current = x;
  for (std::size_t attempts = 0; chain.steps.size() < k && attempts < budget; ++attempts) {
    const EditKind kind = kAllEditKinds[rng.below(4)];
    auto result = perturb(kind, current, ledger, params, filler, rng);
    // An edit that restores the reference would make the candidate error-free.
    if (result && result->sentence == x) result.reset();
    if (!result) {
      ++chain.tally.skipped[kind_index(kind)];
      continue;
    }
    ++chain.tally.accepted[kind_index(kind)];
    result->sentence.source_id = x.source_id;
    result->sentence.language_tag = x.language_tag;
    current = result->sentence;
    ledger = std::move(result->ledger);
    chain.steps.push_back({std::move(result->record), std::move(result->sentence)});
  }
  return chain;
}

}  // namespace sescore
