#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/error.hpp"

namespace persona {

enum class Role { kPolicy, kJudge, kGenerator };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct ChatMessage {
  std::string speaker;  // "system", "user", or "assistant"
  std::string text;

  bool operator==(const ChatMessage&) const = default;
};

inline constexpr std::size_t kDefaultMaxPromptTokens = 2048;
inline constexpr std::size_t kDefaultMaxResponseTokens = 512;

struct CompletionRequest {
  Role role = Role::kPolicy;
  std::vector<ChatMessage> messages;
  std::size_t max_prompt_tokens = kDefaultMaxPromptTokens;
  std::size_t max_response_tokens = kDefaultMaxResponseTokens;
  std::string model;
  std::chrono::milliseconds timeout{30000};
  /// Structured copies of the prompt's inputs. Never sent over the wire;
  /// offline mocks read them instead of re-parsing prompt text.
  std::map<std::string, std::string> attributes;

  /// Throws InvalidArgument if messages are empty, limits are zero, or the
  /// prompt exceeds max_prompt_tokens (whitespace tokens).
  void validate() const;

  /// Role plus every message, for exact-match scripting and caching.
  std::string key() const;

  std::string attribute(std::string_view name) const;
};

struct Usage {
  std::optional<std::size_t> prompt_tokens;
  std::optional<std::size_t> completion_tokens;
};

struct CompletionResult {
  std::string text;
  Usage usage;
  std::size_t attempts = 1;
};

enum class BackendErrorKind {
  kTimeout,    // deadline passed; retryable
  kTransient,  // connection failure, 408, 429, 5xx; retryable
  kAuth,       // 401/403 or missing credential; not retryable
  kRejected,   // other 4xx; not retryable
  kMalformed,  // upstream body not in the expected schema; not retryable
  kScripted,   // mock has no script for the request, or a scripted failure
};

std::string_view error_kind_name(BackendErrorKind kind);

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what)
      : Error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept {
    return kind_ == BackendErrorKind::kTimeout || kind_ == BackendErrorKind::kTransient;
  }

 private:
  BackendErrorKind kind_;
};

/// Text-in/text-out completion contract shared by the policy, judge, and
/// generator roles. Implementations must tolerate concurrent calls.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

using BackendPtr = std::shared_ptr<CompletionBackend>;

// ---------------------------------------------------------------------------
// Remote client

struct RetryPolicy {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};

  std::chrono::milliseconds backoff_before(std::size_t attempt) const;  // attempt >= 2

  bool operator==(const RetryPolicy&) const = default;
};

/// Token bucket; one instance is shared by every client of a backend profile.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second, double burst = 1.0);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct BackendProfile {
  std::string base_url;        // e.g. "http://localhost:8000/v1"
  std::string credential_env;  // name of the env var holding the API key; empty for none
  RetryPolicy retry;
  double rate_limit_rps = 5.0;

  void validate() const;
};

/// OpenAI-style chat-completions client:
/// POST {base_url}/chat/completions with
/// {"model", "messages": [{"role", "content"}], "max_tokens"} and reads
/// choices[0].message.content plus optional usage counts.
class HttpChatBackend final : public CompletionBackend {
 public:
  HttpChatBackend(BackendProfile profile, std::shared_ptr<RateLimiter> limiter = nullptr);
  CompletionResult complete(const CompletionRequest& request) override;

  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  /// Replaces the backoff sleep (tests).
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  CompletionResult attempt(const CompletionRequest& request, std::chrono::milliseconds budget) const;

  BackendProfile profile_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleeper_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

nlohmann::json chat_request_body(const CompletionRequest& request);
CompletionResult parse_chat_response(std::string_view body);

// ---------------------------------------------------------------------------
// Offline backends

/// Pure lookup: exact request key first, then the first rule whose needle
/// occurs in the last message, then the default. No match is a kScripted error.
class ScriptedBackend final : public CompletionBackend {
 public:
  ScriptedBackend& on_key(std::string key, std::string response);
  ScriptedBackend& on_contains(std::string needle, std::string response);
  ScriptedBackend& fail_on_contains(std::string needle, BackendErrorKind kind = BackendErrorKind::kScripted);
  ScriptedBackend& otherwise(std::string response);

  CompletionResult complete(const CompletionRequest& request) override;

 private:
  struct Rule {
    std::string needle;
    std::string response;
    std::optional<BackendErrorKind> failure;
  };
  std::map<std::string, std::string> by_key_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_;
};

/// Returns responses in order, then repeats the last one. Stateful; meant for
/// tests that drive a known call sequence.
class SequenceBackend final : public CompletionBackend {
 public:
  explicit SequenceBackend(std::vector<std::string> responses);
  CompletionResult complete(const CompletionRequest& request) override;
  std::size_t calls() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
};

class FunctionBackend final : public CompletionBackend {
 public:
  using Fn = std::function<CompletionResult(const CompletionRequest&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  CompletionResult complete(const CompletionRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

}  // namespace persona
