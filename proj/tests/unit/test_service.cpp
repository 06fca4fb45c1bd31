#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "persona/mock_backends.hpp"
#include "persona/service.hpp"
#include "support.hpp"

using namespace persona;
using namespace persona::testing;

namespace {

Backends live_backends() {
  return {std::make_shared<KeywordPolicyBackend>(tax()), std::make_shared<RuleJudgeBackend>(),
          std::make_shared<TemplateGeneratorBackend>(tax())};
}

std::string new_session(PersonaService& svc, const std::string& user = "alice") {
  const auto r = svc.handle("POST", "/v1/sessions", nlohmann::json{{"user_id", user}}.dump());
  EXPECT_EQ(r.status, 201);
  return r.body["session_id"].get<std::string>();
}

std::string text_body(const std::string& text) { return nlohmann::json{{"text", text}}.dump(); }

}  // namespace

TEST(Service, HealthAndCreate) {
  PersonaService svc(tax(), live_backends());
  EXPECT_EQ(svc.handle("GET", "/v1/health", "").status, 200);
  const auto r = svc.handle("POST", "/v1/sessions", "{}");
  EXPECT_EQ(r.status, 201);
  EXPECT_EQ(r.body["user_id"], "anonymous");
  EXPECT_TRUE(svc.sessions().exists(r.body["session_id"].get<std::string>()));
  EXPECT_EQ(svc.handle("GET", "/v1/health", "").body["sessions"], 1);
}

TEST(Service, ErrorStatuses) {
  PersonaService svc(tax(), live_backends());
  const auto missing = svc.handle("POST", "/v1/sessions/nope/messages", text_body("hi"));
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body["error"]["code"], "session_not_found");

  const auto id = new_session(svc);
  const auto no_query = svc.handle("POST", "/v1/sessions/" + id + "/answers", text_body("vegan"));
  EXPECT_EQ(no_query.status, 409);
  EXPECT_EQ(no_query.body["error"]["code"], "no_pending_query");

  EXPECT_EQ(svc.handle("POST", "/v1/sessions/" + id + "/messages", "not json").status, 400);
  EXPECT_EQ(svc.handle("POST", "/v1/sessions/" + id + "/messages", R"({"text": "   "})").status, 400);
  EXPECT_EQ(svc.handle("POST", "/v1/sessions", R"({"user_id": 5})").status, 400);
  EXPECT_EQ(svc.handle("GET", "/v1/sessions/" + id + "/messages", "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/v1/unknown", "").status, 404);
}

TEST(Service, ColdStartQueryMatchesEngineDecision) {
  PersonaService svc(tax(), live_backends());
  const auto id = new_session(svc);
  const std::string question = "Can you recommend a restaurant for dinner?";
  const auto expected = decide_cold_start(ProfileView{}, question, lexical_relevance(tax()), EngineConfig{}.tau,
                                          taxonomy_topic_extractor(tax()), &tax());
  ASSERT_EQ(expected.kind, DecisionKind::kQuery);

  const auto r = svc.handle("POST", "/v1/sessions/" + id + "/messages", text_body(question));
  ASSERT_EQ(r.status, 200);
  ASSERT_TRUE(r.body.contains("cold_start_query"));
  EXPECT_EQ(r.body["cold_start_query"]["topic"], expected.topic);
  EXPECT_EQ(r.body["cold_start_query"]["original_question"], question);
  EXPECT_EQ(r.body["aligned"], false);
}

TEST(Service, DeltaInResponseIsWhatTheProfileGained) {
  PersonaService svc(tax(), live_backends());
  const auto id = new_session(svc);
  const auto before = view_from_json(svc.handle("GET", "/v1/sessions/" + id + "/profile", "").body["profile_view"]);
  svc.handle("POST", "/v1/sessions/" + id + "/messages", text_body("Can you recommend a restaurant for dinner?"));
  const auto r = svc.handle("POST", "/v1/sessions/" + id + "/answers", text_body("I'm vegetarian and I'm allergic to peanuts."));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["aligned"], true);
  const auto delta = delta_from_json(r.body["delta"]);
  EXPECT_FALSE(delta.empty());

  const auto profile = svc.handle("GET", "/v1/sessions/" + id + "/profile", "").body;
  const auto after = view_from_json(profile["profile_view"]);
  EXPECT_EQ(view_from_json(r.body["profile_view"]), after);
  for (const auto& a : delta.assertions()) {
    const auto* stored = after.find(a.normalized_path());
    ASSERT_NE(stored, nullptr) << a.normalized_path();
    EXPECT_EQ(stored->value, a.value);
  }
  EXPECT_TRUE(before.empty());

  const auto traj = svc.handle("GET", "/v1/sessions/" + id + "/trajectory", "").body;
  EXPECT_EQ(traj["entries"].size(), 2u);
}

TEST(Service, ProfilesPersistAcrossSessions) {
  TempDir dir;
  ServiceConfig config;
  config.profile_dir = dir.path();
  {
    PersonaService svc(tax(), live_backends(), config);
    const auto id = new_session(svc, "bob");
    svc.handle("POST", "/v1/sessions/" + id + "/messages", text_body("I love spicy food."));
  }
  ASSERT_TRUE(std::filesystem::exists(dir / "bob.json"));
  PersonaService svc(tax(), live_backends(), config);
  const auto id = new_session(svc, "bob");
  const auto profile = svc.handle("GET", "/v1/sessions/" + id + "/profile", "").body;
  EXPECT_FALSE(view_from_json(profile["profile_view"]).empty());
  const auto r = svc.handle("POST", "/v1/sessions/" + id + "/messages", text_body("Suggest a restaurant?"));
  EXPECT_FALSE(r.body.contains("cold_start_query") && !r.body["cold_start_query"].is_null());
  EXPECT_EQ(r.body["aligned"], true);
}

TEST(Service, SessionLimit) {
  ServiceConfig config;
  config.max_sessions = 1;
  PersonaService svc(tax(), live_backends(), config);
  new_session(svc);
  EXPECT_EQ(svc.handle("POST", "/v1/sessions", "{}").status, 409);
}

TEST(Service, RealSocketRoundTrip) {
  ServiceConfig config;
  config.port = 0;
  PersonaService svc(tax(), live_backends(), config);
  const int port = svc.bind();
  ASSERT_GT(port, 0);
  std::thread server([&] { svc.run(); });

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(5, 0);
  const auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

  const auto created = client.Post("/v1/sessions", R"({"user_id": "carol"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const auto id = nlohmann::json::parse(created->body)["session_id"].get<std::string>();
  const auto turn = client.Post("/v1/sessions/" + id + "/messages", text_body("What restaurant should I try?"),
                                "application/json");
  ASSERT_TRUE(turn);
  EXPECT_EQ(turn->status, 200);
  EXPECT_TRUE(nlohmann::json::parse(turn->body).contains("cold_start_query"));

  svc.stop();
  server.join();
}
