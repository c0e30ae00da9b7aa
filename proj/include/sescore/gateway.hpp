#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sescore/error.hpp"
#include "sescore/random.hpp"
#include "sescore/text.hpp"

namespace sescore {

inline constexpr std::string_view kMaskToken = "<mask>";
inline constexpr int kProtocolVersion = 1;

enum class Capability { FillMask, Infill, Entail, Embed };

inline constexpr Capability kAllCapabilities[] = {Capability::FillMask, Capability::Infill, Capability::Entail,
                                                  Capability::Embed};

inline std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::FillMask: return "fill_mask";
    case Capability::Infill: return "infill";
    case Capability::Entail: return "entail";
    case Capability::Embed: return "embed";
  }
  return "unknown";
}

inline bool parse_capability(std::string_view name, Capability& out) {
  for (Capability c : kAllCapabilities) {
    if (to_string(c) == name) {
      out = c;
      return true;
    }
  }
  return false;
}

/// `tokens` holds the context with kMaskToken at mask_index.
struct FillRequest {
  std::vector<std::string> tokens;
  std::size_t mask_index = 0;
  std::size_t top_k = 4;
};

struct FillCandidate {
  std::string token;
  double probability = 0.0;
};

struct FillResponse {
  std::vector<FillCandidate> candidates;  // probabilities descending
};

/// Seq2seq-style infilling: one kMaskToken stands for a span of roughly
/// span_hint tokens; the response may be any nonzero length.
struct InfillRequest {
  std::vector<std::string> tokens;
  std::size_t mask_index = 0;
  std::size_t span_hint = 1;
};

using Embedding = std::vector<double>;

struct HealthReport {
  bool ok = false;
  std::vector<Capability> capabilities;
  std::string detail;
};

/// Every model-backed operation of the pipeline goes through a Provider.
/// Implementations must be safe to call concurrently.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string backend_id() const = 0;
  virtual bool deterministic() const = 0;

  virtual FillResponse fill_mask(const FillRequest& req) const = 0;
  virtual std::vector<std::string> infill(const InfillRequest& req) const = 0;
  /// Probability that `premise` entails `hypothesis`, in [0, 1].
  virtual double entail(std::string_view premise, std::string_view hypothesis) const = 0;
  virtual Embedding embed(std::string_view sentence) const = 0;

  virtual HealthReport health_check(std::span<const Capability> required) const = 0;
};

// ---------------------------------------------------------------------------
// Response validation shared by every provider.

inline void validate_probability(double p, std::string_view what) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0)
    throw SchemaError(std::string(what) + ": probability out of [0,1]: " + std::to_string(p));
}

inline void validate_fill_response(const FillResponse& resp, std::size_t top_k) {
  if (resp.candidates.size() != top_k)
    throw SchemaError("fill_mask: expected " + std::to_string(top_k) + " candidates, got " +
                      std::to_string(resp.candidates.size()));
  for (std::size_t i = 0; i < resp.candidates.size(); ++i) {
    const auto& c = resp.candidates[i];
    if (c.token.empty()) throw SchemaError("fill_mask: empty candidate token");
    if (!std::isfinite(c.probability) || c.probability <= 0.0 || c.probability > 1.0)
      throw SchemaError("fill_mask: candidate probability out of (0,1]");
    if (i > 0 && c.probability > resp.candidates[i - 1].probability)
      throw SchemaError("fill_mask: candidates not sorted by descending probability");
  }
}

inline void validate_tokens(const std::vector<std::string>& tokens, std::string_view what) {
  for (const auto& t : tokens) {
    if (t.empty() || std::any_of(t.begin(), t.end(), is_space))
      throw SchemaError(std::string(what) + ": token is empty or contains whitespace");
  }
}

// ---------------------------------------------------------------------------
// Mock lexicon.

struct LexiconEntry {
  std::string word;
  double weight = 1.0;
};

inline std::vector<LexiconEntry> default_lexicon() {
  // Rough relative frequencies of common English words.
  static const std::pair<const char*, double> kWords[] = {
      {"the", 100}, {"of", 60},     {"and", 55},    {"to", 50},     {"a", 45},      {"in", 40},
      {"is", 30},   {"that", 28},   {"for", 25},    {"it", 24},     {"was", 22},    {"on", 20},
      {"with", 19}, {"as", 18},     {"by", 16},     {"at", 15},     {"from", 14},   {"this", 14},
      {"be", 13},   {"have", 13},   {"are", 12},    {"not", 12},    {"or", 11},     {"an", 11},
      {"but", 10},  {"they", 10},   {"which", 9},   {"one", 9},     {"you", 9},     {"were", 8},
      {"all", 8},   {"we", 8},      {"there", 7},   {"been", 7},    {"their", 7},   {"has", 7},
      {"new", 6},   {"more", 6},    {"also", 6},    {"after", 5},   {"first", 5},   {"other", 5},
      {"time", 5},  {"people", 5},  {"year", 5},    {"only", 4},    {"over", 4},    {"some", 4},
      {"city", 4},  {"world", 4},   {"company", 4}, {"state", 4},   {"very", 3},    {"large", 3},
      {"small", 3}, {"good", 3},    {"still", 3},   {"most", 3},    {"part", 3},    {"day", 3},
      {"house", 2}, {"water", 2},   {"market", 2},  {"school", 2},  {"report", 2},  {"music", 2},
      {"game", 2},  {"early", 2},   {"local", 2},   {"public", 2},  {"national", 2}, {"recent", 2},
      {"old", 2},   {"major", 2},   {"several", 2}, {"however", 2}, {"often", 2},   {"never", 2},
      {"said", 2},  {"made", 2},    {"found", 2},   {"became", 2},  {"built", 1},   {"bright", 1},
      {"quiet", 1}, {"river", 1},   {"mountain", 1}, {"energy", 1}, {"student", 1}, {"doctor", 1},
      {"village", 1}, {"dog", 1},   {"cat", 1},     {"car", 1},     {"book", 1},    {"song", 1},
  };
  std::vector<LexiconEntry> out;
  for (const auto& [w, f] : kWords) out.push_back({w, f});
  return out;
}

/// Two tab-separated columns per line: word, weight. Blank lines and lines
/// starting with '#' are ignored.
inline std::vector<LexiconEntry> load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon file: " + path);
  std::vector<LexiconEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path + ":" + std::to_string(lineno) + ": expected word<TAB>weight");
    LexiconEntry e{line.substr(0, tab), 0.0};
    try {
      e.weight = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad weight");
    }
    if (e.word.empty() || !(e.weight > 0.0))
      throw DataError(path + ":" + std::to_string(lineno) + ": empty word or non-positive weight");
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError("lexicon is empty: " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic offline provider.

/// Multiset Jaccard similarity |A ∩ B| / |A ∪ B| of the token bags; 1.0 when
/// both are empty.
inline double multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::string_view, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& t : a) ++counts[t].first;
  for (const auto& t : b) ++counts[t].second;
  std::size_t inter = 0, uni = 0;
  for (const auto& [tok, c] : counts) {
    inter += std::min(c.first, c.second);
    uni += std::max(c.first, c.second);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Every response is a pure function of (request, seed):
///   fill_mask - k distinct lexicon words, sampled by weight, probabilities
///               renormalized over the k picks
///   infill    - 1..span_hint+1 (max 4) weighted lexicon words
///   entail    - multiset Jaccard of the two token bags
///   embed     - mean of per-token hash-seeded vectors in [-1, 1]^d
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::uint64_t seed = 0, std::size_t embed_dim = 64,
                        std::vector<LexiconEntry> lexicon = default_lexicon())
      : seed_(seed), embed_dim_(embed_dim), lexicon_(std::move(lexicon)) {
    if (lexicon_.empty()) throw UsageError("mock provider: empty lexicon");
    if (embed_dim_ == 0) throw UsageError("mock provider: embed_dim must be positive");
    double acc = 0.0;
    for (const auto& e : lexicon_) {
      acc += e.weight;
      cumulative_.push_back(acc);
    }
  }

  std::string backend_id() const override { return "mock:" + std::to_string(seed_); }
  bool deterministic() const override { return true; }
  std::size_t embed_dim() const { return embed_dim_; }

  FillResponse fill_mask(const FillRequest& req) const override {
    if (req.mask_index >= req.tokens.size() || req.tokens[req.mask_index] != kMaskToken)
      throw UsageError("fill_mask: mask_index does not point at " + std::string(kMaskToken));
    if (req.top_k == 0 || req.top_k > lexicon_.size())
      throw UsageError("fill_mask: top_k must be in [1, lexicon size]");
    Rng rng(request_hash("fill", req.tokens, req.mask_index, req.top_k));
    std::vector<std::size_t> picked;
    while (picked.size() < req.top_k) {
      const std::size_t idx = sample_index(rng);
      if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    double total = 0.0;
    for (std::size_t i : picked) total += lexicon_[i].weight;
    FillResponse resp;
    for (std::size_t i : picked) resp.candidates.push_back({lexicon_[i].word, lexicon_[i].weight / total});
    std::stable_sort(resp.candidates.begin(), resp.candidates.end(),
                     [](const FillCandidate& a, const FillCandidate& b) { return a.probability > b.probability; });
    return resp;
  }

  std::vector<std::string> infill(const InfillRequest& req) const override {
    if (req.mask_index >= req.tokens.size() || req.tokens[req.mask_index] != kMaskToken)
      throw UsageError("infill: mask_index does not point at " + std::string(kMaskToken));
    Rng rng(request_hash("infill", req.tokens, req.mask_index, req.span_hint));
    const std::size_t max_len = std::min<std::size_t>(4, req.span_hint + 1);
    const std::size_t len = 1 + rng.below(max_len);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < len; ++i) out.push_back(lexicon_[sample_index(rng)].word);
    return out;
  }

  double entail(std::string_view premise, std::string_view hypothesis) const override {
    return std::clamp(multiset_jaccard(tokenize(premise).tokens, tokenize(hypothesis).tokens), 0.0, 1.0);
  }

  Embedding embed(std::string_view sentence) const override {
    const Sentence s = tokenize(sentence);
    Embedding out(embed_dim_, 0.0);
    if (s.empty()) return out;
    for (const auto& tok : s.tokens) {
      Rng rng(mix_seed(seed_, fnv1a(tok)));
      for (double& v : out) v += 2.0 * rng.uniform01() - 1.0;
    }
    for (double& v : out) v /= static_cast<double>(s.size());
    return out;
  }

  HealthReport health_check(std::span<const Capability>) const override {
    return {true, {std::begin(kAllCapabilities), std::end(kAllCapabilities)}, "mock provider"};
  }

 private:
  std::size_t sample_index(Rng& rng) const {
    const double x = rng.uniform01() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), lexicon_.size() - 1);
  }

  std::uint64_t request_hash(std::string_view op, const std::vector<std::string>& tokens, std::size_t a,
                             std::size_t b) const {
    std::uint64_t h = fnv1a(op);
    for (const auto& t : tokens) {
      h = fnv1a(t, h);
      h = fnv1a("\x1f", h);
    }
    h = fnv1a(std::to_string(a) + ":" + std::to_string(b), h);
    return mix_seed(seed_, h);
  }

  std::uint64_t seed_;
  std::size_t embed_dim_;
  std::vector<LexiconEntry> lexicon_;
  std::vector<double> cumulative_;
};

}  // namespace sescore
