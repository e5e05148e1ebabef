#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chunksel/backend.hpp"
#include "chunksel/errors.hpp"

namespace chunksel {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{8000};
  // Status classes worth retrying: "429", "408", "5xx", "transport".
  std::set<std::string> retry_on{"429", "5xx", "transport"};

  // Sleep after failed attempt `attempt` (1-based): min(cap, base * 2^(attempt-1)).
  std::chrono::milliseconds backoff_for(int attempt) const;
  bool retryable(int status) const;  // status 0 = transport failure
};

struct RemoteEndpointConfig {
  std::string base_url;           // e.g. http://127.0.0.1:8000/v1
  std::string model_name;
  std::string auth_token_env_var; // name only; the token never leaves the environment
  int max_in_flight = 8;
  std::chrono::milliseconds request_timeout{120000};
  RetryPolicy retry_policy;
  bool send_top_k = true;         // omit top_k for servers that reject it

  void validate() const;
};

nlohmann::json to_json(const RemoteEndpointConfig& config);
RemoteEndpointConfig remote_config_from_json(const nlohmann::json& j);

// Wire mapping for the completions protocol. Field-by-field:
//
// sample request: model, prompt, n, temperature, top_p, top_k (only when
//   send_top_k and top_k > 0), max_tokens (= token budget), stop (only when
//   non-empty), logprobs = 0, echo = false.
// sample response: choices[i].text -> text, choices[i].finish_reason -> finished
//   ("length" = false, anything else = true), len(choices[i].logprobs.tokens)
//   -> teacher_token_count. Choices are ordered by their "index" field.
// score request: model, prompt = context + continuation, max_tokens = 0,
//   logprobs = 1, echo = true, temperature = 1.0, n = 1.
// score response: choices[0].logprobs.tokens / token_logprobs; tokens are
//   matched against the prompt by cumulative byte length and the context part
//   is dropped.
nlohmann::json build_sample_body(const RemoteEndpointConfig& config, std::string_view prompt, int n,
                                 const GenerationParams& params, int max_tokens);
std::vector<SampledText> parse_sample_response(const nlohmann::json& response, int expected_n, int max_tokens);
nlohmann::json build_score_body(const RemoteEndpointConfig& config, std::string_view context,
                                std::string_view continuation);
std::vector<TokenScore> parse_score_response(const nlohmann::json& response, std::string_view context,
                                             std::string_view continuation);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Completions-protocol client. A single instance is shared across worker
/// threads; at most max_in_flight requests are outstanding at any time.
class RemoteBackend : public ModelBackend {
 public:
  // Probes the endpoint when `capabilities` is not supplied.
  explicit RemoteBackend(RemoteEndpointConfig config, std::optional<Capabilities> capabilities = std::nullopt,
                         Sleeper sleeper = {});

  std::string identity() const override;
  Capabilities capabilities() const override { return caps_; }
  std::vector<SampledText> sample_continuations(const SampleRequest& request) override;
  std::vector<TokenScore> score_text(std::string_view context, std::string_view continuation) override;
  bool prefers_concurrency() const override { return true; }

  // POST {base_url}/completions with retries. Throws BackendError carrying the
  // attempt log once retries are exhausted or the status is not retryable.
  nlohmann::json post_completion(const nlohmann::json& body, std::vector<AttemptRecord>* log = nullptr);

  const RemoteEndpointConfig& config() const { return config_; }
  std::int64_t requests_sent() const { return requests_sent_.load(); }
  int peak_in_flight() const { return peak_in_flight_.load(); }

 private:
  struct Reply {
    int status = 0;
    std::string body;
    std::string error;
  };
  Reply send_once(const std::string& payload);

  RemoteEndpointConfig config_;
  Capabilities caps_;
  Sleeper sleeper_;
  std::string auth_header_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_in_flight_{0};
  std::atomic<std::int64_t> requests_sent_{0};
};

/// Minimal probe requests: an n=2, max_tokens=1 sample (falls back to n=1,
/// which marks supports_n = false) and an echo-scoring request. Results are
/// cached per (base_url, model) unless `refresh`. Unreachable endpoints throw
/// StartupError.
Capabilities probe_capabilities(const RemoteEndpointConfig& config, bool refresh = false);

}  // namespace chunksel
