#include "persona/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "persona/text.hpp"

namespace persona {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kPolicy:
      return "policy";
    case Role::kJudge:
      return "judge";
    case Role::kGenerator:
      return "generator";
  }
  return "policy";
}

Role role_from_name(std::string_view name) {
  if (name == "policy") return Role::kPolicy;
  if (name == "judge") return Role::kJudge;
  if (name == "generator") return Role::kGenerator;
  throw InvalidArgument("unknown backend role '" + std::string(name) + "'");
}

std::string_view error_kind_name(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::kTimeout:
      return "timeout";
    case BackendErrorKind::kTransient:
      return "transient";
    case BackendErrorKind::kAuth:
      return "auth";
    case BackendErrorKind::kRejected:
      return "rejected";
    case BackendErrorKind::kMalformed:
      return "malformed-response";
    case BackendErrorKind::kScripted:
      return "scripted";
  }
  return "unknown";
}

void CompletionRequest::validate() const {
  if (messages.empty()) throw InvalidArgument("completion request has no messages");
  if (max_prompt_tokens == 0 || max_response_tokens == 0) {
    throw InvalidArgument("completion request limits must be positive");
  }
  std::size_t tokens = 0;
  for (const auto& m : messages) tokens += whitespace_token_count(m.text);
  if (tokens > max_prompt_tokens) {
    throw InvalidArgument("prompt has " + std::to_string(tokens) + " tokens, limit is " +
                          std::to_string(max_prompt_tokens));
  }
}

std::string CompletionRequest::key() const {
  std::string k(role_name(role));
  for (const auto& m : messages) {
    k += '\x1f';
    k += m.speaker;
    k += '\x1e';
    k += m.text;
  }
  return k;
}

std::string CompletionRequest::attribute(std::string_view name) const {
  const auto it = attributes.find(std::string(name));
  return it == attributes.end() ? std::string() : it->second;
}

// ---------------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::backoff_before(std::size_t attempt) const {
  if (attempt < 2) return std::chrono::milliseconds(0);
  const double scaled =
      static_cast<double>(initial_backoff.count()) * std::pow(multiplier, static_cast<double>(attempt - 2));
  const auto capped = std::min(scaled, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {
  if (!(requests_per_second > 0.0)) throw InvalidArgument("rate limit must be > 0 requests/second");
}

void RateLimiter::acquire() {
  while (true) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

void BackendProfile::validate() const {
  if (base_url.empty()) throw InvalidArgument("backend profile needs a base_url");
  if (retry.max_attempts < 1) throw InvalidArgument("retry policy needs max_attempts >= 1");
  if (!(rate_limit_rps > 0.0)) throw InvalidArgument("backend rate limit must be > 0");
}

nlohmann::json chat_request_body(const CompletionRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.speaker}, {"content", m.text}});
  return {{"model", request.model}, {"messages", std::move(messages)}, {"max_tokens", request.max_response_tokens}};
}

CompletionResult parse_chat_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::parse_error&) {
    throw BackendError(BackendErrorKind::kMalformed, "response body is not JSON");
  }
  CompletionResult result;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    result.text = content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError(BackendErrorKind::kMalformed, "response lacks choices[0].message.content");
  }
  if (const auto it = j.find("usage"); it != j.end() && it->is_object()) {
    if (it->contains("prompt_tokens") && (*it)["prompt_tokens"].is_number_unsigned()) {
      result.usage.prompt_tokens = (*it)["prompt_tokens"].get<std::size_t>();
    }
    if (it->contains("completion_tokens") && (*it)["completion_tokens"].is_number_unsigned()) {
      result.usage.completion_tokens = (*it)["completion_tokens"].get<std::size_t>();
    }
  }
  return result;
}

HttpChatBackend::HttpChatBackend(BackendProfile profile, std::shared_ptr<RateLimiter> limiter)
    : profile_(std::move(profile)), limiter_(std::move(limiter)) {
  profile_.validate();
  if (!limiter_) limiter_ = std::make_shared<RateLimiter>(profile_.rate_limit_rps);
  sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  const auto scheme_end = profile_.base_url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("base_url needs a scheme: " + profile_.base_url);
  const auto path_start = profile_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = profile_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : profile_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

CompletionResult HttpChatBackend::attempt(const CompletionRequest& request, std::chrono::milliseconds budget) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(budget);
  client.set_read_timeout(budget);
  client.set_write_timeout(budget);

  httplib::Headers headers;
  if (!profile_.credential_env.empty()) {
    const char* key = std::getenv(profile_.credential_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw BackendError(BackendErrorKind::kAuth, "credential variable " + profile_.credential_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto started = std::chrono::steady_clock::now();
  const auto body = chat_request_body(request).dump();
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const bool out_of_time = std::chrono::steady_clock::now() - started >= budget;
    if (err == httplib::Error::ConnectionTimeout || out_of_time) {
      throw BackendError(BackendErrorKind::kTimeout, "no response within " + std::to_string(budget.count()) + " ms");
    }
    throw BackendError(BackendErrorKind::kTransient, "request failed: " + httplib::to_string(err));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw BackendError(BackendErrorKind::kAuth, "upstream returned HTTP " + std::to_string(status));
  }
  if (status == 408 || status == 429 || status >= 500) {
    throw BackendError(BackendErrorKind::kTransient, "upstream returned HTTP " + std::to_string(status));
  }
  if (status < 200 || status >= 300) {
    throw BackendError(BackendErrorKind::kRejected, "upstream returned HTTP " + std::to_string(status));
  }
  return parse_chat_response(res->body);
}

CompletionResult HttpChatBackend::complete(const CompletionRequest& request) {
  request.validate();
  const auto deadline = std::chrono::steady_clock::now() + request.timeout;
  for (std::size_t attempt_no = 1;; ++attempt_no) {
    if (attempt_no > 1) sleeper_(profile_.retry.backoff_before(attempt_no));
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      throw BackendError(BackendErrorKind::kTimeout, "deadline passed after " + std::to_string(attempt_no - 1) +
                                                         " attempt(s)");
    }
    limiter_->acquire();
    try {
      auto result = attempt(request, remaining);
      result.attempts = attempt_no;
      return result;
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt_no >= profile_.retry.max_attempts) throw;
    }
  }
}

// ---------------------------------------------------------------------------

ScriptedBackend& ScriptedBackend::on_key(std::string key, std::string response) {
  by_key_.insert_or_assign(std::move(key), std::move(response));
  return *this;
}

ScriptedBackend& ScriptedBackend::on_contains(std::string needle, std::string response) {
  rules_.push_back({std::move(needle), std::move(response), std::nullopt});
  return *this;
}

ScriptedBackend& ScriptedBackend::fail_on_contains(std::string needle, BackendErrorKind kind) {
  rules_.push_back({std::move(needle), {}, kind});
  return *this;
}

ScriptedBackend& ScriptedBackend::otherwise(std::string response) {
  default_ = std::move(response);
  return *this;
}

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) {
  request.validate();
  if (const auto it = by_key_.find(request.key()); it != by_key_.end()) return {it->second, {}, 1};
  const auto& last = request.messages.back().text;
  for (const auto& rule : rules_) {
    if (last.find(rule.needle) == std::string::npos) continue;
    if (rule.failure) throw BackendError(*rule.failure, "scripted failure on '" + rule.needle + "'");
    return {rule.response, {}, 1};
  }
  if (default_) return {*default_, {}, 1};
  throw BackendError(BackendErrorKind::kScripted, "no script for request");
}

SequenceBackend::SequenceBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {
  if (responses_.empty()) throw InvalidArgument("SequenceBackend needs at least one response");
}

CompletionResult SequenceBackend::complete(const CompletionRequest& request) {
  request.validate();
  std::lock_guard lock(mutex_);
  const auto& text = responses_[std::min(next_, responses_.size() - 1)];
  ++next_;
  return {text, {}, 1};
}

std::size_t SequenceBackend::calls() const {
  std::lock_guard lock(mutex_);
  return next_;
}

}  // namespace persona
