#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sescore/error.hpp"
#include "sescore/random.hpp"

namespace sescore::eval {

struct SegmentRecord {
  std::string segment_id;
  std::string system_id;
  double human = 0.0;
  double metric = 0.0;
};

/// A pair of outputs for one segment, oriented by human preference.
struct RankedPair {
  std::string segment_id;
  std::string better;
  std::string worse;
  double human_gap = 0.0;
};

struct SystemRecord {
  std::string system_id;
  double human = 0.0;
  double metric = 0.0;
};

enum class TiePolicy { Discordant, Drop };

inline TiePolicy parse_tie_policy(std::string_view s) {
  if (s == "discordant") return TiePolicy::Discordant;
  if (s == "drop") return TiePolicy::Drop;
  throw UsageError("unknown tie policy '" + std::string(s) + "' (expected discordant or drop)");
}

using ScoreKey = std::pair<std::string, std::string>;  // (segment_id, system_id)
using MetricScores = std::map<ScoreKey, double>;

namespace detail {

// Segments in first-appearance order, each holding indices into the records.
inline std::vector<std::vector<std::size_t>> group_by_segment(std::span<const SegmentRecord> records) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  std::map<ScoreKey, bool> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!seen.emplace(ScoreKey{r.segment_id, r.system_id}, true).second)
      throw DataError("duplicate (segment_id, system_id): (" + r.segment_id + ", " + r.system_id + ")");
    auto [it, fresh] = slot.emplace(r.segment_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

}  // namespace detail

/// Every within-segment pair of systems whose human scores differ by more than
/// `threshold`. Exact ties never qualify, whatever the threshold.
inline std::vector<RankedPair> prepare_pairs(std::span<const SegmentRecord> records, double threshold = 0.0) {
  std::vector<RankedPair> out;
  for (const auto& group : detail::group_by_segment(records)) {
    for (std::size_t a = 0; a < group.size(); ++a) {
      for (std::size_t b = a + 1; b < group.size(); ++b) {
        const auto& ra = records[group[a]];
        const auto& rb = records[group[b]];
        const double gap = std::abs(ra.human - rb.human);
        if (ra.human == rb.human || !(gap > threshold)) continue;
        const bool a_better = ra.human > rb.human;
        out.push_back({ra.segment_id, a_better ? ra.system_id : rb.system_id,
                       a_better ? rb.system_id : ra.system_id, gap});
      }
    }
  }
  return out;
}

inline MetricScores metric_scores(std::span<const SegmentRecord> records) {
  MetricScores m;
  for (const auto& r : records) m[{r.segment_id, r.system_id}] = r.metric;
  return m;
}

struct KendallResult {
  double tau = 0.0;
  std::size_t concordant = 0;
  std::size_t discordant = 0;
  std::size_t metric_ties = 0;  // included in discordant under TiePolicy::Discordant
};

/// tau = (C - D) / (C + D). A pair is concordant iff the metric scores the
/// human-preferred output strictly higher.
inline KendallResult kendall_tau_like(std::span<const RankedPair> pairs, const MetricScores& metric,
                                      TiePolicy ties = TiePolicy::Discordant) {
  if (pairs.empty()) throw DataError("kendall: no ranked pairs");
  KendallResult res;
  auto lookup = [&](const std::string& seg, const std::string& sys) {
    auto it = metric.find({seg, sys});
    if (it == metric.end()) throw DataError("kendall: no metric score for (" + seg + ", " + sys + ")");
    return it->second;
  };
  for (const auto& p : pairs) {
    const double mb = lookup(p.segment_id, p.better);
    const double mw = lookup(p.segment_id, p.worse);
    if (mb > mw) {
      ++res.concordant;
    } else if (mb == mw) {
      ++res.metric_ties;
      if (ties == TiePolicy::Discordant) ++res.discordant;
    } else {
      ++res.discordant;
    }
  }
  const std::size_t n = res.concordant + res.discordant;
  if (n == 0) throw DataError("kendall: every pair is a metric tie and ties are dropped");
  res.tau = (static_cast<double>(res.concordant) - static_cast<double>(res.discordant)) / static_cast<double>(n);
  return res;
}

inline KendallResult kendall_tau_like(std::span<const SegmentRecord> records, double threshold,
                                      TiePolicy ties = TiePolicy::Discordant) {
  const auto pairs = prepare_pairs(records, threshold);
  return kendall_tau_like(pairs, metric_scores(records), ties);
}

namespace detail {

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0) || !(syy > 0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace detail

/// |rho| between system-level human and metric scores.
inline double pearson_system(std::span<const SystemRecord> systems) {
  if (systems.size() < 3) throw DataError("pearson: need at least 3 systems, got " + std::to_string(systems.size()));
  std::vector<double> h, m;
  for (const auto& s : systems) {
    h.push_back(s.human);
    m.push_back(s.metric);
  }
  const auto rho = detail::pearson(h, m);
  if (!rho) throw DataError("pearson: zero variance in human or metric scores");
  return std::abs(*rho);
}

/// System scores as the arithmetic mean of each system's segment scores
/// (both human and metric), in first-appearance order.
inline std::vector<SystemRecord> aggregate_systems(std::span<const SegmentRecord> records) {
  std::vector<SystemRecord> out;
  std::vector<std::size_t> counts;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, fresh] = slot.emplace(r.system_id, out.size());
    if (fresh) {
      out.push_back({r.system_id, 0.0, 0.0});
      counts.push_back(0);
    }
    out[it->second].human += r.human;
    out[it->second].metric += r.metric;
    ++counts[it->second];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].human /= static_cast<double>(counts[i]);
    out[i].metric /= static_cast<double>(counts[i]);
  }
  return out;
}

/// Unweighted mean over `aspects` (all entries of the map when empty).
inline double average_aspects(const std::map<std::string, double>& scores,
                              std::span<const std::string> aspects = {}) {
  if (aspects.empty()) {
    if (scores.empty()) throw DataError("average_aspects: no aspects");
    double sum = 0;
    for (const auto& [name, v] : scores) sum += v;
    return sum / static_cast<double>(scores.size());
  }
  double sum = 0;
  for (const auto& a : aspects) {
    auto it = scores.find(a);
    if (it == scores.end()) throw DataError("average_aspects: missing aspect '" + a + "'");
    sum += it->second;
  }
  return sum / static_cast<double>(aspects.size());
}

// ---------------------------------------------------------------------------
// Paired bootstrap.

struct PairedSegmentRecord {
  std::string segment_id;
  std::string system_id;
  double human = 0.0;
  double metric_a = 0.0;
  double metric_b = 0.0;
};

struct BootstrapResult {
  double p_value = 0.0;  // P(stat_B >= stat_A), ties counted as one half
  double stat_a = 0.0;
  double stat_b = 0.0;
  std::size_t n_resamples = 0;
};

inline constexpr std::size_t kMinResamples = 100;

namespace detail {

inline void check_resamples(std::size_t n) {
  if (n < kMinResamples)
    throw UsageError("bootstrap: n_resamples must be >= " + std::to_string(kMinResamples));
}

inline double half_credit(double a, double b) { return b > a ? 1.0 : (b == a ? 0.5 : 0.0); }

struct SegmentCounts {
  double ca = 0, da = 0, cb = 0, db = 0;
};

inline double tau_of(double c, double d) { return c + d > 0 ? (c - d) / (c + d) : 0.0; }

}  // namespace detail

/// Segment-level comparison: resample segments with replacement and compare
/// Kendall tau-like of metric B against metric A on the same pairs.
inline BootstrapResult bootstrap_significance(std::span<const PairedSegmentRecord> records, std::size_t n_resamples,
                                              std::uint64_t seed, double threshold = 0.0,
                                              TiePolicy ties = TiePolicy::Discordant) {
  detail::check_resamples(n_resamples);
  std::vector<SegmentRecord> as, bs;
  for (const auto& r : records) {
    as.push_back({r.segment_id, r.system_id, r.human, r.metric_a});
    bs.push_back({r.segment_id, r.system_id, r.human, r.metric_b});
  }
  const auto pairs = prepare_pairs(as, threshold);
  if (pairs.empty()) throw DataError("bootstrap: no ranked pairs");
  const auto score_a = metric_scores(as), score_b = metric_scores(bs);

  std::unordered_map<std::string, std::size_t> seg_index;
  std::vector<detail::SegmentCounts> counts;
  auto tally = [&](double better, double worse, double& c, double& d) {
    if (better > worse) c += 1;
    else if (better < worse || ties == TiePolicy::Discordant) d += 1;
  };
  for (const auto& p : pairs) {
    auto [it, fresh] = seg_index.emplace(p.segment_id, counts.size());
    if (fresh) counts.emplace_back();
    auto& sc = counts[it->second];
    tally(score_a.at({p.segment_id, p.better}), score_a.at({p.segment_id, p.worse}), sc.ca, sc.da);
    tally(score_b.at({p.segment_id, p.better}), score_b.at({p.segment_id, p.worse}), sc.cb, sc.db);
  }

  BootstrapResult res;
  res.n_resamples = n_resamples;
  detail::SegmentCounts total;
  for (const auto& c : counts) {
    total.ca += c.ca, total.da += c.da, total.cb += c.cb, total.db += c.db;
  }
  res.stat_a = detail::tau_of(total.ca, total.da);
  res.stat_b = detail::tau_of(total.cb, total.db);

  double wins = 0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    Rng rng(mix_seed(seed, r));
    detail::SegmentCounts s;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const auto& c = counts[rng.below(counts.size())];
      s.ca += c.ca, s.da += c.da, s.cb += c.cb, s.db += c.db;
    }
    wins += detail::half_credit(detail::tau_of(s.ca, s.da), detail::tau_of(s.cb, s.db));
  }
  res.p_value = wins / static_cast<double>(n_resamples);
  return res;
}

struct PairedSystemRecord {
  std::string system_id;
  double human = 0.0;
  double metric_a = 0.0;
  double metric_b = 0.0;
};

/// System-level comparison: resample systems and compare |rho|. Degenerate
/// resamples (zero variance) count as ties.
inline BootstrapResult bootstrap_significance(std::span<const PairedSystemRecord> systems, std::size_t n_resamples,
                                              std::uint64_t seed) {
  detail::check_resamples(n_resamples);
  std::vector<SystemRecord> a, b;
  for (const auto& s : systems) {
    a.push_back({s.system_id, s.human, s.metric_a});
    b.push_back({s.system_id, s.human, s.metric_b});
  }
  BootstrapResult res;
  res.n_resamples = n_resamples;
  res.stat_a = pearson_system(a);
  res.stat_b = pearson_system(b);
  double wins = 0;
  std::vector<double> h(systems.size()), ma(systems.size()), mb(systems.size());
  for (std::size_t r = 0; r < n_resamples; ++r) {
    Rng rng(mix_seed(seed, r));
    for (std::size_t i = 0; i < systems.size(); ++i) {
      const auto& s = systems[rng.below(systems.size())];
      h[i] = s.human, ma[i] = s.metric_a, mb[i] = s.metric_b;
    }
    const auto ra = detail::pearson(h, ma), rb = detail::pearson(h, mb);
    if (!ra || !rb) {
      wins += 0.5;
      continue;
    }
    wins += detail::half_credit(std::abs(*ra), std::abs(*rb));
  }
  res.p_value = wins / static_cast<double>(n_resamples);
  return res;
}

// ---------------------------------------------------------------------------
// TSV input.

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
  std::size_t require(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw DataError("TSV: missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_tabs(const std::string& line) {
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

inline Table parse_tsv(std::istream& in, const std::string& name = "<input>") {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " columns, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw DataError(name + ": empty TSV (header required)");
  return t;
}

inline Table read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_tsv(in, path);
}

inline double parse_number(const std::string& s, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("TSV: bad number '" + s + "' in column " + std::string(what));
  }
}

/// Human score from the `human` column, or the mean of the aspect columns
/// when aspects are given (WebNLG style).
inline double human_score(const Table& t, const std::vector<std::string>& row, std::span<const std::string> aspects) {
  if (aspects.empty()) return parse_number(row[t.require("human")], "human");
  std::map<std::string, double> per_aspect;
  for (const auto& a : aspects) per_aspect[a] = parse_number(row[t.require(a)], a);
  return average_aspects(per_aspect, aspects);
}

inline std::vector<SegmentRecord> segment_records(const Table& t, std::string_view metric_col = "metric",
                                                  std::span<const std::string> aspects = {}) {
  const auto seg = t.require("segment_id"), sys = t.require("system_id"), met = t.require(metric_col);
  std::vector<SegmentRecord> out;
  for (const auto& row : t.rows)
    out.push_back({row[seg], row[sys], human_score(t, row, aspects), parse_number(row[met], metric_col)});
  return out;
}

inline std::vector<SystemRecord> system_records(const Table& t, std::string_view metric_col = "metric",
                                                std::span<const std::string> aspects = {}) {
  const auto sys = t.require("system_id"), met = t.require(metric_col);
  std::vector<SystemRecord> out;
  for (const auto& row : t.rows)
    out.push_back({row[sys], human_score(t, row, aspects), parse_number(row[met], metric_col)});
  return out;
}

}  // namespace sescore::eval
