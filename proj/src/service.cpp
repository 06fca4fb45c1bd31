#include "persona/service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "persona/text.hpp"

namespace persona {

namespace fs = std::filesystem;

namespace {

HttpReply error_reply(int status, std::string_view code, std::string_view message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

std::string sanitize_user_id(std::string_view id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "_" : out;
}

std::optional<nlohmann::json> parse_body(std::string_view body) {
  if (trim(body).empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(body.begin(), body.end());
    if (!j.is_object()) return std::nullopt;
    return j;
  } catch (const nlohmann::json::parse_error&) {
    return std::nullopt;
  }
}

}  // namespace

SessionManager::SessionManager(const ProfileTaxonomy& taxonomy, Backends backends, ServiceConfig config)
    : taxonomy_(&taxonomy), backends_(std::move(backends)), config_(std::move(config)) {
  if (!backends_.policy || !backends_.generator) {
    throw InvalidArgument("session manager needs policy and generator backends");
  }
  config_.engine.validate();
}

std::string SessionManager::create(std::string user_id) {
  if (trim(user_id).empty()) user_id = "anonymous";
  UserProfile profile;
  if (config_.profile_dir) {
    const auto path = *config_.profile_dir / (sanitize_user_id(user_id) + ".json");
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::ostringstream buf;
      buf << in.rdbuf();
      profile = deserialize_profile(buf.str(), taxonomy_);
    }
  }
  std::unique_lock lock(mutex_);
  if (sessions_.size() >= config_.max_sessions) {
    throw StateError("session limit of " + std::to_string(config_.max_sessions) + " reached");
  }
  const auto id = "s" + std::to_string(next_id_++);
  sessions_.emplace(id, std::make_shared<Slot>(id, user_id, *taxonomy_, backends_.policy, backends_.generator,
                                               config_.engine, std::move(profile)));
  return id;
}

bool SessionManager::exists(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return sessions_.count(id) != 0;
}

std::size_t SessionManager::size() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

std::shared_ptr<SessionManager::Slot> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw std::out_of_range("no session '" + id + "'");
  return it->second;
}

void SessionManager::persist(const LiveSession& session) const {
  if (!config_.profile_dir) return;
  fs::create_directories(*config_.profile_dir);
  const auto path = *config_.profile_dir / (sanitize_user_id(session.user_id()) + ".json");
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << serialize_profile(session.profile());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------

PersonaService::PersonaService(const ProfileTaxonomy& taxonomy, Backends backends, ServiceConfig config)
    : config_(config), sessions_(taxonomy, std::move(backends), std::move(config)),
      server_(std::make_unique<httplib::Server>()) {
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    const auto reply = handle(req.method, req.path, req.body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  server_->Get(R"(/v1/.*)", dispatch);
  server_->Post(R"(/v1/.*)", dispatch);
  server_->Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  if (config_.static_dir) server_->set_mount_point("/", config_.static_dir->string());
}

PersonaService::~PersonaService() { stop(); }

HttpReply PersonaService::handle(std::string_view method, std::string_view path, std::string_view body) {
  std::vector<std::string> parts;
  for (auto& p : split(path, '/')) {
    if (!p.empty()) parts.push_back(std::move(p));
  }
  const bool is_get = method == "GET";
  const bool is_post = method == "POST";
  try {
    if (parts.size() == 2 && parts[0] == "v1" && parts[1] == "health") {
      if (!is_get) return error_reply(405, "method_not_allowed", "use GET");
      return {200, {{"status", "ok"}, {"sessions", sessions_.size()}}};
    }
    if (parts.size() >= 2 && parts[0] == "v1" && parts[1] == "sessions") {
      if (parts.size() == 2) {
        if (!is_post) return error_reply(405, "method_not_allowed", "use POST");
        return create_session(body);
      }
      if (parts.size() == 4) {
        const auto& id = parts[2];
        const auto& action = parts[3];
        if (!sessions_.exists(id)) return error_reply(404, "session_not_found", "no session '" + id + "'");
        if (action == "messages" || action == "answers") {
          if (!is_post) return error_reply(405, "method_not_allowed", "use POST");
          return post_turn(id, body, action == "answers");
        }
        if (action == "profile") {
          if (!is_get) return error_reply(405, "method_not_allowed", "use GET");
          return sessions_.with_session(id, [&](LiveSession& s) {
            nlohmann::json j = {{"session_id", s.id()},
                                {"user_id", s.user_id()},
                                {"profile", to_json(s.profile())},
                                {"profile_view", to_json(s.profile().current())}};
            return HttpReply{200, std::move(j)};
          });
        }
        if (action == "trajectory") {
          if (!is_get) return error_reply(405, "method_not_allowed", "use GET");
          return sessions_.with_session(id, [&](LiveSession& s) {
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& e : s.trajectory()) entries.push_back(entry_to_json(e, s.id()));
            return HttpReply{200, {{"session_id", s.id()}, {"entries", std::move(entries)}}};
          });
        }
      }
    }
    return error_reply(404, "not_found", "no route for " + std::string(method) + " " + std::string(path));
  } catch (const std::out_of_range& e) {
    return error_reply(404, "session_not_found", e.what());
  } catch (const StateError& e) {
    return error_reply(409, "conflict", e.what());
  } catch (const InvalidArgument& e) {
    return error_reply(400, "bad_request", e.what());
  } catch (const BackendError& e) {
    return error_reply(502, "backend_error", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal_error", e.what());
  }
}

HttpReply PersonaService::create_session(std::string_view body) {
  const auto j = parse_body(body);
  if (!j) return error_reply(400, "bad_request", "request body must be a JSON object");
  std::string user_id = "anonymous";
  if (const auto it = j->find("user_id"); it != j->end()) {
    if (!it->is_string()) return error_reply(400, "bad_request", "'user_id' must be a string");
    user_id = it->get<std::string>();
  }
  const auto id = sessions_.create(user_id);
  return {201, {{"session_id", id}, {"user_id", trim(user_id).empty() ? "anonymous" : user_id}}};
}

HttpReply PersonaService::post_turn(const std::string& id, std::string_view body, bool answer) {
  const auto j = parse_body(body);
  if (!j) return error_reply(400, "bad_request", "request body must be a JSON object");
  const auto it = j->find("text");
  if (it == j->end() || !it->is_string() || trim(it->get<std::string>()).empty()) {
    return error_reply(400, "bad_request", "'text' must be a nonempty string");
  }
  const auto text = it->get<std::string>();
  return sessions_.with_session(id, [&](LiveSession& s) {
    if (answer && !s.pending()) {
      return error_reply(409, "no_pending_query", "session '" + id + "' has no pending proactive query");
    }
    auto result = answer ? s.answer(text) : s.send_message(text);
    auto body_json = to_json(result);
    body_json["session_id"] = s.id();
    return HttpReply{200, std::move(body_json)};
  });
}

int PersonaService::bind() {
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
    if (port < 0) throw Error("cannot bind any port on " + config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    throw Error("cannot bind " + config_.host + ":" + std::to_string(port));
  }
  return port;
}

void PersonaService::run() { server_->listen_after_bind(); }

void PersonaService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace persona
