#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sescore/gateway.hpp"

namespace sescore {

struct GatewayConfig {
  std::string provider = "mock";  // mock | remote
  std::string base_url = "http://127.0.0.1:8000";
  int timeout_ms = 5000;
  int max_retries = 3;
  int backoff_ms = 100;
  std::size_t pool_size = 8;
  std::uint64_t mock_seed = 0;
  std::string lexicon_path;  // empty: built-in lexicon
  std::size_t embed_dim = 64;
};

/// JSON-over-HTTP client for the inference sidecar. Request and response
/// bodies carry {"v": 1}; see protocol.md for the byte-level schemas.
/// Transport failures and 5xx answers are retried with exponential backoff;
/// schema violations are fatal and never reach the caller as data.
class RemoteProvider final : public Provider {
 public:
  explicit RemoteProvider(GatewayConfig config) : config_(std::move(config)) {
    if (config_.timeout_ms <= 0) throw UsageError("remote.timeout_ms must be positive");
    if (config_.pool_size == 0) config_.pool_size = 1;
  }

  std::string backend_id() const override { return "remote:" + config_.base_url; }
  bool deterministic() const override { return false; }
  const GatewayConfig& config() const { return config_; }

  FillResponse fill_mask(const FillRequest& req) const override {
    nlohmann::json body = {{"v", kProtocolVersion},
                           {"tokens", req.tokens},
                           {"mask_index", req.mask_index},
                           {"top_k", req.top_k}};
    const auto resp = post("/fill_mask", body);
    FillResponse out;
    try {
      for (const auto& c : resp.at("candidates"))
        out.candidates.push_back({c.at("token").get<std::string>(), c.at("prob").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("POST /fill_mask: " + std::string(e.what()));
    }
    validate_fill_response(out, req.top_k);
    return out;
  }

  std::vector<std::string> infill(const InfillRequest& req) const override {
    nlohmann::json body = {{"v", kProtocolVersion},
                           {"tokens", req.tokens},
                           {"mask_index", req.mask_index},
                           {"span_hint", req.span_hint}};
    const auto resp = post("/infill", body);
    std::vector<std::string> out;
    try {
      out = resp.at("tokens").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("POST /infill: " + std::string(e.what()));
    }
    if (out.empty()) throw SchemaError("POST /infill: empty token list");
    validate_tokens(out, "POST /infill");
    return out;
  }

  double entail(std::string_view premise, std::string_view hypothesis) const override {
    nlohmann::json body = {{"v", kProtocolVersion}, {"premise", premise}, {"hypothesis", hypothesis}};
    const auto resp = post("/entail", body);
    double p = 0.0;
    try {
      p = resp.at("prob").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("POST /entail: " + std::string(e.what()));
    }
    validate_probability(p, "POST /entail");
    return p;
  }

  Embedding embed(std::string_view sentence) const override {
    nlohmann::json body = {{"v", kProtocolVersion}, {"text", sentence}};
    const auto resp = post("/embed", body);
    Embedding out;
    try {
      out = resp.at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("POST /embed: " + std::string(e.what()));
    }
    if (out.empty()) throw SchemaError("POST /embed: empty embedding");
    for (double v : out)
      if (!std::isfinite(v)) throw SchemaError("POST /embed: non-finite embedding entry");
    return out;
  }

  HealthReport health_check(std::span<const Capability> required) const override {
    const auto resp = send("GET", "/health", nullptr);
    HealthReport report;
    try {
      for (const auto& c : resp.at("capabilities")) {
        Capability cap;
        if (parse_capability(c.get<std::string>(), cap)) report.capabilities.push_back(cap);
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("GET /health: " + std::string(e.what()));
    }
    std::string missing;
    for (Capability need : required) {
      if (std::find(report.capabilities.begin(), report.capabilities.end(), need) == report.capabilities.end()) {
        if (!missing.empty()) missing += ", ";
        missing += to_string(need);
      }
    }
    report.ok = missing.empty();
    report.detail = report.ok ? "all required capabilities present" : "missing capabilities: " + missing;
    return report;
  }

 private:
  class Lease {
   public:
    Lease(const RemoteProvider& owner, std::unique_ptr<httplib::Client> client)
        : owner_(owner), client_(std::move(client)) {}
    ~Lease() { owner_.release(std::move(client_)); }
    httplib::Client& operator*() { return *client_; }

   private:
    const RemoteProvider& owner_;
    std::unique_ptr<httplib::Client> client_;
  };

  Lease acquire() const {
    std::unique_lock lock(pool_mutex_);
    pool_cv_.wait(lock, [&] { return !idle_.empty() || live_ < config_.pool_size; });
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return Lease(*this, std::move(c));
    }
    ++live_;
    lock.unlock();
    auto c = std::make_unique<httplib::Client>(config_.base_url);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    c->set_connection_timeout(timeout);
    c->set_read_timeout(timeout);
    c->set_write_timeout(timeout);
    c->set_keep_alive(true);
    return Lease(*this, std::move(c));
  }

  void release(std::unique_ptr<httplib::Client> c) const {
    {
      std::lock_guard lock(pool_mutex_);
      idle_.push_back(std::move(c));
    }
    pool_cv_.notify_one();
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    return send("POST", path, &body);
  }

  nlohmann::json send(const char* method, const std::string& path, const nlohmann::json* body) const {
    const std::string where = std::string(method) + " " + config_.base_url + path;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
      httplib::Result res;
      {
        auto lease = acquire();
        res = body ? (*lease).Post(path, body->dump(), "application/json") : (*lease).Get(path);
      }
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw BackendError(where + ": HTTP " + std::to_string(res->status) + ": " + res->body);
      nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded() || !parsed.is_object()) throw SchemaError(where + ": response is not a JSON object");
      if (!parsed.contains("v") || parsed["v"] != kProtocolVersion)
        throw SchemaError(where + ": missing or unsupported protocol version");
      return parsed;
    }
    throw TransportError(where + ": " + last_error + " (after " + std::to_string(config_.max_retries + 1) +
                         " attempts)");
  }

  GatewayConfig config_;
  mutable std::mutex pool_mutex_;
  mutable std::condition_variable pool_cv_;
  mutable std::vector<std::unique_ptr<httplib::Client>> idle_;
  mutable std::size_t live_ = 0;
};

inline std::unique_ptr<Provider> make_provider(const GatewayConfig& config) {
  if (config.provider == "mock") {
    auto lexicon = config.lexicon_path.empty() ? default_lexicon() : load_lexicon(config.lexicon_path);
    return std::make_unique<MockProvider>(config.mock_seed, config.embed_dim, std::move(lexicon));
  }
  if (config.provider == "remote") return std::make_unique<RemoteProvider>(config);
  throw UsageError("unknown provider '" + config.provider + "' (expected mock or remote)");
}

}  // namespace sescore
