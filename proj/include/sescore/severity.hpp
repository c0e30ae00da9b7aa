#pragma once

#include <atomic>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "sescore/error.hpp"
#include "sescore/gateway.hpp"
#include "sescore/perturbers.hpp"

namespace sescore {

enum class SeverityMode { Full, MinorOnly, Off };

inline std::string_view to_string(SeverityMode m) {
  switch (m) {
    case SeverityMode::Full: return "full";
    case SeverityMode::MinorOnly: return "minor-only";
    case SeverityMode::Off: return "off";
  }
  return "unknown";
}

inline SeverityMode parse_severity_mode(std::string_view s) {
  if (s == "full") return SeverityMode::Full;
  if (s == "minor-only") return SeverityMode::MinorOnly;
  if (s == "off") return SeverityMode::Off;
  throw UsageError("unknown severity mode '" + std::string(s) + "' (expected full, minor-only or off)");
}

struct SeverityParams {
  double gamma = 0.9;
  int minor_penalty = -1;
  int severe_penalty = -5;
  SeverityMode mode = SeverityMode::Full;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("severity: gamma must be in (0, 1)");
    if (!(minor_penalty > severe_penalty)) throw UsageError("severity: minor_penalty must exceed severe_penalty");
  }
};

/// rho_fwd = P(prev entails cur), rho_bwd = P(cur entails prev). Both are
/// empty when the mode does not consult the entailment backend.
struct SeverityVerdict {
  std::optional<double> rho_fwd;
  std::optional<double> rho_bwd;
  int score = 0;
};

/// Thread-safe memo of entailment probabilities keyed by backend and the
/// exact (premise, hypothesis) pair.
class EntailmentCache {
 public:
  double get_or_compute(const Provider& entailer, const std::string& premise, const std::string& hypothesis) {
    std::string key = entailer.backend_id();
    key += '\x1e';
    key += premise;
    key += '\x1f';
    key += hypothesis;
    {
      std::shared_lock lock(mutex_);
      if (auto it = map_.find(key); it != map_.end()) {
        hits_.fetch_add(1, std::memory_order_relaxed);
        return it->second;
      }
    }
    const double p = entailer.entail(premise, hypothesis);
    validate_probability(p, "entail");
    misses_.fetch_add(1, std::memory_order_relaxed);
    std::unique_lock lock(mutex_);
    map_.emplace(std::move(key), p);
    return p;
  }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return map_.size();
  }

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, double> map_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Minor iff both entailment directions reach gamma (inclusive), else severe.
inline int classify_severity(double rho_fwd, double rho_bwd, const SeverityParams& params) {
  return (rho_fwd >= params.gamma && rho_bwd >= params.gamma) ? params.minor_penalty : params.severe_penalty;
}

inline SeverityVerdict severity_step(const Sentence& prev, const Sentence& cur, const SeverityParams& params,
                                     const Provider& entailer, EntailmentCache* cache = nullptr) {
  switch (params.mode) {
    case SeverityMode::Off: return {std::nullopt, std::nullopt, 0};
    case SeverityMode::MinorOnly: return {std::nullopt, std::nullopt, params.minor_penalty};
    case SeverityMode::Full: break;
  }
  const std::string a = detokenize(prev);
  const std::string b = detokenize(cur);
  auto query = [&](const std::string& premise, const std::string& hypothesis) {
    if (cache) return cache->get_or_compute(entailer, premise, hypothesis);
    const double p = entailer.entail(premise, hypothesis);
    validate_probability(p, "entail");
    return p;
  };
  SeverityVerdict v;
  v.rho_fwd = query(a, b);
  v.rho_bwd = query(b, a);
  v.score = classify_severity(*v.rho_fwd, *v.rho_bwd, params);
  return v;
}

/// s' = sum of per-step severities over consecutive pairs (z_{i-1}, z_i).
/// Writes each step's severity into its EditRecord.
inline int chain_score(PerturbationChain& chain, const SeverityParams& params, const Provider& entailer,
                       EntailmentCache* cache = nullptr) {
  int total = 0;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    const auto verdict = severity_step(chain.before(i), chain.steps[i].sentence, params, entailer, cache);
    chain.steps[i].record.severity = verdict.score;
    total += verdict.score;
  }
  return total;
}

}  // namespace sescore
