#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sescore/error.hpp"
#include "sescore/perturbers.hpp"
#include "sescore/quality_model.hpp"
#include "sescore/remote.hpp"
#include "sescore/severity.hpp"

namespace sescore {

// JSON views of every config struct. Readers reject unknown keys and keep
// defaults for keys that are absent, so a file only needs the overrides.

namespace detail {

template <typename Fn>
void for_each_key(const nlohmann::json& j, std::string_view section, Fn&& fn) {
  if (!j.is_object()) throw DataError(std::string(section) + ": expected a JSON object");
  try {
    for (const auto& [key, v] : j.items())
      if (!fn(key, v)) throw DataError(std::string(section) + ": unknown key '" + key + "'");
  } catch (const nlohmann::json::type_error& e) {
    throw DataError(std::string(section) + ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const SynthesisParams& p) {
  return nlohmann::json{{"lambda_e", p.lambda_e},       {"m_max", p.m_max},
                        {"lambda_d", p.lambda_d},       {"lambda_r", p.lambda_r},
                        {"lambda_s", p.lambda_s},       {"top_k", p.top_k},
                        {"max_retries", p.max_retries}, {"phrase_prob", p.phrase_prob},
                        {"strict_q", p.strict_q},       {"min_tokens", p.min_tokens}};
}

inline SynthesisParams synthesis_params_from_json(const nlohmann::json& j, SynthesisParams p = {}) {
  detail::for_each_key(j, "synthesis params", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "lambda_e") p.lambda_e = v.get<double>();
    else if (k == "m_max") p.m_max = v.get<std::size_t>();
    else if (k == "lambda_d") p.lambda_d = v.get<double>();
    else if (k == "lambda_r") p.lambda_r = v.get<double>();
    else if (k == "lambda_s") p.lambda_s = v.get<std::size_t>();
    else if (k == "top_k") p.top_k = v.get<std::size_t>();
    else if (k == "max_retries") p.max_retries = v.get<std::size_t>();
    else if (k == "phrase_prob") p.phrase_prob = v.get<double>();
    else if (k == "strict_q") p.strict_q = v.get<bool>();
    else if (k == "min_tokens") p.min_tokens = v.get<std::size_t>();
    else return false;
    return true;
  });
  p.validate();
  return p;
}

inline nlohmann::json to_json(const SeverityParams& p) {
  return nlohmann::json{{"gamma", p.gamma},
                        {"minor_penalty", p.minor_penalty},
                        {"severe_penalty", p.severe_penalty},
                        {"mode", std::string(to_string(p.mode))}};
}

inline SeverityParams severity_params_from_json(const nlohmann::json& j, SeverityParams p = {}) {
  detail::for_each_key(j, "severity", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "gamma") p.gamma = v.get<double>();
    else if (k == "minor_penalty") p.minor_penalty = v.get<int>();
    else if (k == "severe_penalty") p.severe_penalty = v.get<int>();
    else if (k == "mode") p.mode = parse_severity_mode(v.get<std::string>());
    else return false;
    return true;
  });
  p.validate();
  return p;
}

inline nlohmann::json to_json(const GatewayConfig& g) {
  return nlohmann::json{
      {"provider", g.provider},
      {"remote",
       {{"base_url", g.base_url},
        {"timeout_ms", g.timeout_ms},
        {"max_retries", g.max_retries},
        {"backoff_ms", g.backoff_ms},
        {"pool_size", g.pool_size}}},
      {"mock", {{"seed", g.mock_seed}, {"lexicon_path", g.lexicon_path}, {"embed_dim", g.embed_dim}}}};
}

inline GatewayConfig gateway_config_from_json(const nlohmann::json& j, GatewayConfig g = {}) {
  detail::for_each_key(j, "gateway", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "provider") {
      g.provider = v.get<std::string>();
    } else if (k == "remote") {
      detail::for_each_key(v, "gateway.remote", [&](const std::string& rk, const nlohmann::json& rv) {
        if (rk == "base_url") g.base_url = rv.get<std::string>();
        else if (rk == "timeout_ms") g.timeout_ms = rv.get<int>();
        else if (rk == "max_retries") g.max_retries = rv.get<int>();
        else if (rk == "backoff_ms") g.backoff_ms = rv.get<int>();
        else if (rk == "pool_size") g.pool_size = rv.get<std::size_t>();
        else return false;
        return true;
      });
    } else if (k == "mock") {
      detail::for_each_key(v, "gateway.mock", [&](const std::string& mk, const nlohmann::json& mv) {
        if (mk == "seed") g.mock_seed = mv.get<std::uint64_t>();
        else if (mk == "lexicon_path") g.lexicon_path = mv.get<std::string>();
        else if (mk == "embed_dim") g.embed_dim = mv.get<std::size_t>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  if (g.provider != "mock" && g.provider != "remote")
    throw DataError("gateway: provider must be mock or remote, got '" + g.provider + "'");
  return g;
}

/// Merged view of every stage's settings.
struct RunConfig {
  SynthesisParams synthesis;
  SeverityParams severity;
  RegressorConfig regressor;
  GatewayConfig gateway;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return nlohmann::json{{"seed", c.seed},
                        {"workers", c.workers},
                        {"synthesis", to_json(c.synthesis)},
                        {"severity", to_json(c.severity)},
                        {"regressor", regressor_config_to_json(c.regressor)},
                        {"gateway", to_json(c.gateway)}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {}) {
  detail::for_each_key(j, "config", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "workers") c.workers = v.get<std::size_t>();
    else if (k == "synthesis") c.synthesis = synthesis_params_from_json(v, c.synthesis);
    else if (k == "severity") c.severity = severity_params_from_json(v, c.severity);
    else if (k == "regressor") c.regressor = regressor_config_from_json(v, c.regressor);
    else if (k == "gateway") c.gateway = gateway_config_from_json(v, c.gateway);
    else return false;
    return true;
  });
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(path + ": invalid JSON");
  return j;
}

}  // namespace sescore
