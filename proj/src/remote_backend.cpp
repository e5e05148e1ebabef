#include "chunksel/remote_backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <future>
#include <map>
#include <thread>

namespace chunksel {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix, no trailing slash
};

SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ValidationError("base_url needs a scheme: " + url);
  const std::string proto = url.substr(0, scheme);
  if (proto != "http" && proto != "https") throw ValidationError("base_url must be http or https: " + url);
  auto slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::string excerpt(const std::string& body) {
  return body.size() > 200 ? body.substr(0, 200) + "..." : body;
}

std::string describe(const std::vector<AttemptRecord>& log) {
  std::string out;
  for (const auto& a : log) {
    out += "\n  attempt " + std::to_string(a.attempt) + ": ";
    out += a.status ? "HTTP " + std::to_string(a.status) : std::string("transport");
    if (!a.error.empty()) out += " (" + a.error + ")";
    if (a.delay_ms) out += ", backoff " + std::to_string(a.delay_ms) + "ms";
  }
  return out;
}

}  // namespace

std::chrono::milliseconds RetryPolicy::backoff_for(int attempt) const {
  std::chrono::milliseconds::rep delay = backoff_base.count();
  for (int i = 1; i < attempt && delay < backoff_cap.count(); ++i) delay *= 2;
  return std::chrono::milliseconds(std::min(delay, backoff_cap.count()));
}

bool RetryPolicy::retryable(int status) const {
  if (status == 0) return retry_on.count("transport") > 0;
  if (status >= 500 && status < 600) return retry_on.count("5xx") > 0 || retry_on.count(std::to_string(status)) > 0;
  return retry_on.count(std::to_string(status)) > 0;
}

void RemoteEndpointConfig::validate() const {
  split_url(base_url);
  if (model_name.empty()) throw ValidationError("remote endpoint: model name is empty");
  if (max_in_flight < 1) throw ValidationError("remote endpoint: max_in_flight must be >= 1");
  if (retry_policy.max_attempts < 1) throw ValidationError("remote endpoint: retry max_attempts must be >= 1");
  if (retry_policy.backoff_base.count() < 0 || retry_policy.backoff_cap < retry_policy.backoff_base) {
    throw ValidationError("remote endpoint: need 0 <= backoff_base <= backoff_cap");
  }
}

nlohmann::json to_json(const RemoteEndpointConfig& c) {
  return {
      {"kind", "remote"},
      {"base_url", c.base_url},
      {"model", c.model_name},
      {"auth_token_env", c.auth_token_env_var},
      {"max_in_flight", c.max_in_flight},
      {"timeout_ms", c.request_timeout.count()},
      {"send_top_k", c.send_top_k},
      {"retry",
       {{"max_attempts", c.retry_policy.max_attempts},
        {"backoff_base_ms", c.retry_policy.backoff_base.count()},
        {"backoff_cap_ms", c.retry_policy.backoff_cap.count()},
        {"retry_on", c.retry_policy.retry_on}}},
  };
}

RemoteEndpointConfig remote_config_from_json(const nlohmann::json& j) {
  RemoteEndpointConfig c;
  try {
    c.base_url = j.at("base_url").get<std::string>();
    c.model_name = j.at("model").get<std::string>();
    c.auth_token_env_var = j.value("auth_token_env", std::string());
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.request_timeout = std::chrono::milliseconds(j.value("timeout_ms", c.request_timeout.count()));
    c.send_top_k = j.value("send_top_k", c.send_top_k);
    if (j.contains("retry")) {
      const auto& r = j.at("retry");
      c.retry_policy.max_attempts = r.value("max_attempts", c.retry_policy.max_attempts);
      c.retry_policy.backoff_base = std::chrono::milliseconds(r.value("backoff_base_ms", c.retry_policy.backoff_base.count()));
      c.retry_policy.backoff_cap = std::chrono::milliseconds(r.value("backoff_cap_ms", c.retry_policy.backoff_cap.count()));
      if (r.contains("retry_on")) c.retry_policy.retry_on = r.at("retry_on").get<std::set<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("remote endpoint config: ") + e.what());
  }
  if (j.contains("auth_token")) {
    throw ValidationError("remote endpoint config: inline auth tokens are not accepted; use auth_token_env");
  }
  c.validate();
  return c;
}

nlohmann::json build_sample_body(const RemoteEndpointConfig& config, std::string_view prompt, int n,
                                 const GenerationParams& params, int max_tokens) {
  nlohmann::json body = {
      {"model", config.model_name},
      {"prompt", std::string(prompt)},
      {"n", n},
      {"temperature", params.temperature},
      {"top_p", params.top_p},
      {"max_tokens", max_tokens},
      {"logprobs", 0},
      {"echo", false},
  };
  if (config.send_top_k && params.top_k > 0) body["top_k"] = params.top_k;
  if (!params.stop_markers.empty()) body["stop"] = params.stop_markers;
  return body;
}

std::vector<SampledText> parse_sample_response(const nlohmann::json& response, int expected_n, int max_tokens) {
  try {
    const auto& choices = response.at("choices");
    if (!choices.is_array() || static_cast<int>(choices.size()) != expected_n) {
      throw BackendError("completion returned " + std::to_string(choices.size()) + " choices, expected " +
                         std::to_string(expected_n));
    }
    std::vector<const nlohmann::json*> ordered;
    for (const auto& c : choices) ordered.push_back(&c);
    std::stable_sort(ordered.begin(), ordered.end(), [](const nlohmann::json* a, const nlohmann::json* b) {
      return a->value("index", 0) < b->value("index", 0);
    });

    long long usage_tokens = -1;
    if (response.contains("usage") && response["usage"].is_object() &&
        response["usage"].contains("completion_tokens")) {
      usage_tokens = response["usage"]["completion_tokens"].get<long long>();
    }

    std::vector<SampledText> out;
    for (const auto* c : ordered) {
      SampledText s;
      s.text = c->at("text").get<std::string>();
      std::string reason = c->contains("finish_reason") && (*c)["finish_reason"].is_string()
                               ? (*c)["finish_reason"].get<std::string>()
                               : std::string();
      s.finished = !reason.empty() && reason != "length";
      const auto* lp = c->contains("logprobs") ? &(*c)["logprobs"] : nullptr;
      if (lp && lp->is_object() && lp->contains("tokens") && (*lp)["tokens"].is_array()) {
        s.teacher_token_count = static_cast<int>((*lp)["tokens"].size());
      } else if (usage_tokens >= 0 && expected_n == 1) {
        s.teacher_token_count = static_cast<int>(usage_tokens);
      } else if (reason == "length") {
        s.teacher_token_count = max_tokens;
      } else if (usage_tokens >= 0) {
        s.teacher_token_count = static_cast<int>((usage_tokens + expected_n - 1) / expected_n);
      }
      s.teacher_token_count = std::min(s.teacher_token_count, max_tokens);
      out.push_back(std::move(s));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed completion response: ") + e.what());
  }
}

nlohmann::json build_score_body(const RemoteEndpointConfig& config, std::string_view context,
                                std::string_view continuation) {
  std::string prompt(context);
  prompt += continuation;
  return {
      {"model", config.model_name},
      {"prompt", prompt},
      {"n", 1},
      {"temperature", 1.0},
      {"max_tokens", 0},
      {"logprobs", 1},
      {"echo", true},
  };
}

std::vector<TokenScore> parse_score_response(const nlohmann::json& response, std::string_view context,
                                             std::string_view continuation) {
  std::string full(context);
  full += continuation;
  try {
    const auto& choices = response.at("choices");
    if (!choices.is_array() || choices.empty()) throw BackendError("score response has no choices");
    const auto& lp = choices.at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    if (tokens.size() != logprobs.size()) throw BackendError("score response: tokens/logprobs length mismatch");

    std::vector<TokenScore> out;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tokens.size() && pos < full.size(); ++i) {
      const auto tok = tokens[i].get<std::string>();
      if (full.compare(pos, tok.size(), tok) != 0) {
        throw BackendError("echoed tokens do not reproduce the prompt at byte " + std::to_string(pos));
      }
      std::size_t end = pos + tok.size();
      if (end > context.size()) {
        if (logprobs[i].is_null()) throw BackendError("score response: continuation token without logprob");
        std::size_t start = std::max(pos, context.size());
        out.push_back({full.substr(start, end - start), logprobs[i].get<double>()});
      }
      pos = end;
    }
    if (pos < full.size()) throw BackendError("echoed tokens cover only " + std::to_string(pos) + " prompt bytes");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed score response: ") + e.what());
  }
}

RemoteBackend::RemoteBackend(RemoteEndpointConfig config, std::optional<Capabilities> capabilities, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  config_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (!config_.auth_token_env_var.empty()) {
    const char* token = std::getenv(config_.auth_token_env_var.c_str());
    if (!token || !*token) {
      throw StartupError("environment variable " + config_.auth_token_env_var + " (auth token for " +
                         config_.base_url + ") is not set");
    }
    auth_header_ = std::string("Bearer ") + token;
  }
  slots_ = std::make_unique<std::counting_semaphore<>>(config_.max_in_flight);
  caps_ = capabilities ? *capabilities : probe_capabilities(config_);
}

std::string RemoteBackend::identity() const { return "remote:" + config_.model_name + "@" + config_.base_url; }

RemoteBackend::Reply RemoteBackend::send_once(const std::string& payload) {
  auto url = split_url(config_.base_url);
  httplib::Client client(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!auth_header_.empty()) headers.emplace("Authorization", auth_header_);

  Reply reply;
  auto res = client.Post(url.path + "/completions", headers, payload, "application/json");
  if (!res) {
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

nlohmann::json RemoteBackend::post_completion(const nlohmann::json& body, std::vector<AttemptRecord>* log_out) {
  const std::string payload = body.dump();
  std::vector<AttemptRecord> log;
  const auto& policy = config_.retry_policy;
  for (int attempt = 1;; ++attempt) {
    Reply reply;
    slots_->acquire();
    int now = in_flight_.fetch_add(1) + 1;
    int peak = peak_in_flight_.load();
    while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
    }
    try {
      reply = send_once(payload);
    } catch (...) {
      in_flight_.fetch_sub(1);
      slots_->release();
      throw;
    }
    in_flight_.fetch_sub(1);
    slots_->release();
    requests_sent_.fetch_add(1);

    AttemptRecord rec{attempt, reply.status, reply.error, 0};
    if (reply.status >= 200 && reply.status < 300) {
      log.push_back(rec);
      if (log_out) *log_out = log;
      try {
        return nlohmann::json::parse(reply.body);
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("response is not JSON: ") + e.what(), log);
      }
    }
    if (reply.status) rec.error = excerpt(reply.body);
    if (!policy.retryable(reply.status) || attempt >= policy.max_attempts) {
      log.push_back(rec);
      if (log_out) *log_out = log;
      throw BackendError(identity() + ": request failed after " + std::to_string(attempt) + " attempt(s)" +
                             describe(log),
                         log);
    }
    auto delay = policy.backoff_for(attempt);
    rec.delay_ms = delay.count();
    log.push_back(rec);
    sleeper_(delay);
  }
}

std::vector<SampledText> RemoteBackend::sample_continuations(const SampleRequest& request) {
  if (!caps_.can_sample) throw CapabilityError(identity() + " cannot sample");
  if (request.n < 1) throw ValidationError("sample_continuations: n must be >= 1");
  if (request.token_budget < 1) throw ValidationError("sample_continuations: token_budget must be >= 1");
  if (request.n == 1 || caps_.supports_n) {
    auto body = build_sample_body(config_, request.context, request.n, request.params, request.token_budget);
    return parse_sample_response(post_completion(body), request.n, request.token_budget);
  }
  // Endpoint ignores n: fan out into single-sample requests.
  std::vector<std::future<std::vector<SampledText>>> parts;
  for (int i = 0; i < request.n; ++i) {
    parts.push_back(std::async(std::launch::async, [&] {
      auto body = build_sample_body(config_, request.context, 1, request.params, request.token_budget);
      return parse_sample_response(post_completion(body), 1, request.token_budget);
    }));
  }
  std::vector<SampledText> out;
  for (auto& p : parts) out.push_back(p.get().front());
  return out;
}

std::vector<TokenScore> RemoteBackend::score_text(std::string_view context, std::string_view continuation) {
  if (!caps_.can_score) throw CapabilityError(identity() + " cannot score text");
  if (continuation.empty()) throw ValidationError("score_text: empty continuation");
  return parse_score_response(post_completion(build_score_body(config_, context, continuation)), context,
                              continuation);
}

namespace {

bool transport_only(const BackendError& e) {
  const auto& a = e.attempts();
  return !a.empty() && std::all_of(a.begin(), a.end(), [](const AttemptRecord& r) { return r.status == 0; });
}

}  // namespace

Capabilities probe_capabilities(const RemoteEndpointConfig& config, bool refresh) {
  static std::mutex mu;
  static std::map<std::pair<std::string, std::string>, Capabilities> cache;
  const auto key = std::make_pair(config.base_url, config.model_name);
  {
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (!refresh && it != cache.end()) return it->second;
  }

  RemoteBackend client(config, Capabilities{true, true, true});
  auto unreachable = [&](const BackendError& e) {
    return StartupError("endpoint " + config.base_url + " is unreachable: " + e.what());
  };

  GenerationParams probe_params;
  probe_params.temperature = 1.0;
  probe_params.top_p = 1.0;
  probe_params.top_k = 0;

  Capabilities caps{false, false, false};
  try {
    auto reply = client.post_completion(build_sample_body(config, "Hello", 2, probe_params, 1));
    auto n = reply.contains("choices") && reply["choices"].is_array() ? reply["choices"].size() : 0;
    caps.can_sample = n >= 1;
    caps.supports_n = n == 2;
  } catch (const BackendError& e) {
    if (transport_only(e)) throw unreachable(e);
    try {
      auto reply = client.post_completion(build_sample_body(config, "Hello", 1, probe_params, 1));
      caps.can_sample = reply.contains("choices") && !reply["choices"].empty();
    } catch (const BackendError& e2) {
      if (transport_only(e2)) throw unreachable(e2);
    }
  }

  try {
    auto reply = client.post_completion(build_score_body(config, "Hello", " world"));
    caps.can_score = !parse_score_response(reply, "Hello", " world").empty();
  } catch (const BackendError& e) {
    if (transport_only(e)) throw unreachable(e);
  }

  std::lock_guard lock(mu);
  cache[key] = caps;
  return caps;
}

}  // namespace chunksel
