#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "persona/engine.hpp"
#include "persona/pipeline.hpp"
#include "persona/taxonomy.hpp"

namespace httplib {
class Server;
}

namespace persona {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  EngineConfig engine;
  std::size_t max_sessions = 10000;
  /// When set, each user's profile is loaded from and saved to
  /// <profile_dir>/<user_id>.json so it survives across sessions.
  std::optional<std::filesystem::path> profile_dir;
  /// When set, files under this directory are served at "/" (the chat UI build).
  std::optional<std::filesystem::path> static_dir;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// Live sessions keyed by id. Requests for one session are serialized by its
/// own mutex; different sessions run in parallel.
class SessionManager {
 public:
  SessionManager(const ProfileTaxonomy& taxonomy, Backends backends, ServiceConfig config);

  /// Returns the new session id. Throws StateError when the session limit is reached.
  std::string create(std::string user_id);
  bool exists(const std::string& id) const;
  std::size_t size() const;

  /// Runs `fn` on the session while holding its lock. Throws
  /// std::out_of_range for an unknown id.
  template <typename Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    auto result = fn(slot->session);
    persist(slot->session);
    return result;
  }

 private:
  struct Slot {
    std::mutex mutex;
    LiveSession session;
    template <typename... Args>
    explicit Slot(Args&&... args) : session(std::forward<Args>(args)...) {}
  };

  std::shared_ptr<Slot> find(const std::string& id) const;
  void persist(const LiveSession& session) const;

  const ProfileTaxonomy* taxonomy_;
  Backends backends_;
  ServiceConfig config_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::atomic<std::uint64_t> next_id_{1};
};

/// HTTP JSON API:
///   POST /v1/sessions                  {user_id?}  -> 201 {session_id, user_id}
///   POST /v1/sessions/{id}/messages    {text}      -> turn result
///   POST /v1/sessions/{id}/answers     {text}      -> turn result (409 with no pending query)
///   GET  /v1/sessions/{id}/profile
///   GET  /v1/sessions/{id}/trajectory
///   GET  /v1/health
/// Errors carry {"error": {"code", "message"}}.
class PersonaService {
 public:
  PersonaService(const ProfileTaxonomy& taxonomy, Backends backends, ServiceConfig config = {});
  ~PersonaService();

  PersonaService(const PersonaService&) = delete;
  PersonaService& operator=(const PersonaService&) = delete;

  /// Routing without sockets; the HTTP server calls this for every request.
  HttpReply handle(std::string_view method, std::string_view path, std::string_view body);

  /// Binds config.port (0 picks a free port) and returns the bound port.
  /// Throws Error when the port cannot be bound.
  int bind();
  /// Serves until stop(); call after bind().
  void run();
  /// Stops accepting; in-flight requests finish before run() returns.
  void stop();

  SessionManager& sessions() noexcept { return sessions_; }

 private:
  HttpReply create_session(std::string_view body);
  HttpReply post_turn(const std::string& id, std::string_view body, bool answer);

  ServiceConfig config_;
  SessionManager sessions_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace persona
