#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the code they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sescore/sescore.hpp"

namespace sescore::testing {

/// Sentences of 4..max_len words drawn from the default lexicon with a
/// local std::mt19937 so they do not depend on the library's Rng.
inline std::vector<std::string> random_sentences(std::size_t n, std::uint32_t seed, std::size_t min_len = 4,
                                                 std::size_t max_len = 18) {
  const auto lex = default_lexicon();
  std::mt19937 gen(seed);
  std::uniform_int_distribution<std::size_t> len_d(min_len, max_len), word_d(0, lex.size() - 1);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const std::size_t len = len_d(gen);
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s += ' ';
      s += lex[word_d(gen)].word;
    }
    out.push_back(s);
  }
  return out;
}

/// Replays a chain on cells that remember which edit last touched them, and
/// reports the first pair of edits whose footprints in the original sentence
/// overlap. Deletions leave a gap on the boundary they collapsed; inserting
/// into that gap, or deleting across it, is an overlap.
struct OverlapOracle {
  struct Cell {
    std::string token;
    int edit = 0;  // 0 = untouched original token, else the edit that wrote it
    bool gap_before = false;
  };

  std::vector<Cell> cells;
  bool trailing_gap = false;
  std::string error;

  explicit OverlapOracle(const Sentence& x) {
    for (const auto& t : x.tokens) cells.push_back({t, 0, false});
  }

  std::vector<std::string> tokens() const {
    std::vector<std::string> out;
    for (const auto& c : cells) out.push_back(c.token);
    return out;
  }

  bool gap_at(std::size_t p) const { return p == cells.size() ? trailing_gap : cells[p].gap_before; }

  void set_gap(std::size_t p) {
    if (p == cells.size()) trailing_gap = true;
    else cells[p].gap_before = true;
  }

  bool step(const EditRecord& r, int id) {
    const std::size_t s = r.span_before.start;
    const std::size_t n = cells.size();
    auto fail = [&](const std::string& why) {
      error = "edit " + std::to_string(id) + ": " + why;
      return false;
    };
    switch (r.kind) {
      case EditKind::Insert: {
        if (s > n) return fail("insert out of range");
        if (gap_at(s)) return fail("insert into a deletion gap");
        if (s > 0 && s < n && cells[s - 1].edit != 0 && cells[s - 1].edit == cells[s].edit)
          return fail("insert inside edit " + std::to_string(cells[s].edit));
        std::vector<Cell> ins;
        for (const auto& t : r.inserted_tokens) ins.push_back({t, id, false});
        cells.insert(cells.begin() + static_cast<std::ptrdiff_t>(s), ins.begin(), ins.end());
        return true;
      }
      case EditKind::Delete:
      case EditKind::Replace: {
        const std::size_t e = s + r.span_before.len;
        if (e > n || r.span_before.len == 0) return fail("span out of range");
        for (std::size_t i = s; i < e; ++i) {
          if (cells[i].edit != 0) return fail("touches edit " + std::to_string(cells[i].edit));
          if (i > s && cells[i].gap_before) return fail("spans a deletion gap");
        }
        const bool gap_s = cells[s].gap_before;
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(s), cells.begin() + static_cast<std::ptrdiff_t>(e));
        if (r.kind == EditKind::Delete) {
          set_gap(s);
          if (gap_s && s < cells.size()) cells[s].gap_before = true;
        } else {
          std::vector<Cell> ins;
          for (const auto& t : r.inserted_tokens) ins.push_back({t, id, false});
          if (!ins.empty()) ins.front().gap_before = gap_s;
          cells.insert(cells.begin() + static_cast<std::ptrdiff_t>(s), ins.begin(), ins.end());
        }
        return true;
      }
      case EditKind::Swap: {
        const std::size_t e = s + r.span_before.len;
        if (e >= n || r.span_before.len == 0) return fail("swap out of range");
        if (cells[s].edit != 0 || cells[e].edit != 0) return fail("swap touches an edited token");
        std::swap(cells[s].token, cells[e].token);
        // Two separate unit footprints: the boundary between adjacent swapped
        // tokens stays open.
        cells[s].edit = id;
        cells[e].edit = -id;
        return true;
      }
    }
    return fail("unknown kind");
  }
};

/// Checks that every step of the chain reproduces its stored sentence and that
/// no two edits overlap in original coordinates.
inline std::optional<std::string> check_chain(const PerturbationChain& chain) {
  OverlapOracle oracle(chain.reference);
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    if (!oracle.step(chain.steps[i].record, static_cast<int>(i + 1))) return oracle.error;
    if (oracle.tokens() != chain.steps[i].sentence.tokens) return "step " + std::to_string(i + 1) + " replay mismatch";
  }
  return std::nullopt;
}

/// Brute-force Kendall tau-like: every ordered pair of systems in a segment,
/// counted once from the human-preferred side.
struct BruteKendall {
  long concordant = 0, discordant = 0;
  std::optional<double> tau;
};

inline BruteKendall brute_kendall(const std::vector<eval::SegmentRecord>& recs, double threshold, bool ties_discordant) {
  BruteKendall out;
  for (const auto& a : recs) {
    for (const auto& b : recs) {
      if (a.segment_id != b.segment_id || a.system_id == b.system_id) continue;
      if (!(a.human - b.human > threshold) || a.human == b.human) continue;
      if (a.metric > b.metric) ++out.concordant;
      else if (a.metric < b.metric || ties_discordant) ++out.discordant;
    }
  }
  if (out.concordant + out.discordant > 0)
    out.tau = double(out.concordant - out.discordant) / double(out.concordant + out.discordant);
  return out;
}

/// Pearson from raw sums, a different formula from the library's centered one.
inline double pearson_sums(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  const long double num = n * sxy - sx * sy;
  const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return static_cast<double>(num / den);
}

inline std::vector<eval::SystemRecord> systems_of(const std::vector<double>& h, const std::vector<double>& m) {
  std::vector<eval::SystemRecord> out;
  for (std::size_t i = 0; i < h.size(); ++i) out.push_back({"s" + std::to_string(i), h[i], m[i]});
  return out;
}

/// Provider whose entailment answers come from a fixed script, for golden
/// chains; the other capabilities delegate to a mock.
class ScriptedEntailer final : public Provider {
 public:
  explicit ScriptedEntailer(std::map<std::pair<std::string, std::string>, double> table) : table_(std::move(table)) {}
  std::string backend_id() const override { return "scripted"; }
  bool deterministic() const override { return true; }
  FillResponse fill_mask(const FillRequest& r) const override { return mock_.fill_mask(r); }
  std::vector<std::string> infill(const InfillRequest& r) const override { return mock_.infill(r); }
  double entail(std::string_view p, std::string_view h) const override {
    auto it = table_.find({std::string(p), std::string(h)});
    if (it == table_.end()) throw BackendError("scripted entailer: no entry for '" + std::string(p) + "'");
    return it->second;
  }
  Embedding embed(std::string_view s) const override { return mock_.embed(s); }
  HealthReport health_check(std::span<const Capability>) const override { return {true, {}, {}}; }

 private:
  std::map<std::pair<std::string, std::string>, double> table_;
  MockProvider mock_;
};

/// Provider that fails every call after the first `budget` entail calls.
class FlakyProvider final : public Provider {
 public:
  explicit FlakyProvider(std::size_t budget) : budget_(budget) {}
  std::string backend_id() const override { return mock_.backend_id(); }
  bool deterministic() const override { return true; }
  FillResponse fill_mask(const FillRequest& r) const override { return mock_.fill_mask(r); }
  std::vector<std::string> infill(const InfillRequest& r) const override { return mock_.infill(r); }
  double entail(std::string_view p, std::string_view h) const override {
    if (calls_.fetch_add(1) >= budget_) throw TransportError("flaky backend: connection refused");
    return mock_.entail(p, h);
  }
  Embedding embed(std::string_view s) const override { return mock_.embed(s); }
  HealthReport health_check(std::span<const Capability>) const override { return {true, {}, {}}; }

 private:
  std::size_t budget_;
  mutable std::atomic<std::size_t> calls_{0};
  MockProvider mock_;
};

/// Central-difference gradient check of the regressor's MSE on one batch.
/// Returns ||analytic - numeric|| / (||analytic|| + ||numeric||) over all
/// parameters.
inline double grad_rel_error(Regressor net, const std::vector<FeatureVector>& batch, const std::vector<double>& targets,
                             double h = 1e-5) {
  auto grad = net.zero_like();
  net.mse_loss(batch, targets, nullptr, &grad);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  auto& layers = net.layers();
  auto probe = [&](double& theta, double analytic) {
    const double saved = theta;
    theta = saved + h;
    const double lp = net.mse_loss(batch, targets, nullptr, nullptr);
    theta = saved - h;
    const double lm = net.mse_loss(batch, targets, nullptr, nullptr);
    theta = saved;
    const double numeric = (lp - lm) / (2 * h);
    diff2 += (numeric - analytic) * (numeric - analytic);
    a2 += analytic * analytic;
    n2 += numeric * numeric;
  };
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t k = 0; k < layers[li].weights.size(); ++k) probe(layers[li].weights[k], grad[li].weights[k]);
    for (std::size_t k = 0; k < layers[li].bias.size(); ++k) probe(layers[li].bias[k], grad[li].bias[k]);
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  return denom > 0 ? std::sqrt(diff2) / denom : 0.0;
}

}  // namespace sescore::testing
