#include <gtest/gtest.h>

#include <random>

#include "persona/engine.hpp"
#include "persona/mock_backends.hpp"
#include "persona/prompts.hpp"
#include "support.hpp"

using namespace persona;
using namespace persona::testing;

namespace {

std::shared_ptr<SequenceBackend> sequence(std::vector<std::string> replies) {
  return std::make_shared<SequenceBackend>(std::move(replies));
}

ProfileView view_of(std::initializer_list<std::pair<const char*, const char*>> items) {
  ProfileView v;
  v.fold(delta_of(items));
  return v;
}

}  // namespace

TEST(InitState, EmptyProfile) {
  const auto s = init_state({}, "hi");
  EXPECT_EQ(s.t, 1u);
  EXPECT_EQ(s.user_msg, "hi");
  EXPECT_TRUE(s.view.empty());
  EXPECT_TRUE(s.accumulated.empty());
}

TEST(InitState, CarriesPriorProfileAndIsPure) {
  const auto old = view_of({{"interests/music", "jazz"}, {"lifestyle/diet", "vegan"}});
  const auto a = init_state(old, "hello");
  EXPECT_EQ(a.view.assertions.size(), 2u);
  EXPECT_EQ(a, init_state(old, "hello"));
}

TEST(Step, WellFormedBlockBecomesDelta) {
  const auto s = init_state({}, "I love jazz");
  auto policy = sequence({"<inferred_profile>interests/music: jazz</inferred_profile>"
                          "<inferred_personality></inferred_personality><classification>interests</classification>"});
  const auto out = step(s, *policy, tax(), std::string("next"));
  EXPECT_EQ(out.delta.keys(), delta_of({{"interests/music", "jazz"}}).keys());
  EXPECT_EQ(out.report.well_formed_count(), 3u);
  ASSERT_TRUE(out.next);
  EXPECT_EQ(out.next->t, 2u);
  EXPECT_EQ(out.next->accumulated.size(), 1u);
  EXPECT_EQ(out.next->user_msg, "next");
  EXPECT_EQ(out.next->view, out.next->replay());
}

TEST(Step, NoTagsStillTransitions) {
  const auto s = init_state({}, "hello");
  auto policy = sequence({"just prose"});
  const auto out = step(s, *policy, tax(), std::string("again"));
  EXPECT_TRUE(out.delta.empty());
  EXPECT_TRUE(out.report.parse_error());
  ASSERT_TRUE(out.next);
  EXPECT_EQ(out.next->accumulated.size(), 1u);
  EXPECT_TRUE(out.next->view.empty());
}

TEST(Step, DropsPathsOutsideTaxonomy) {
  const auto s = init_state({}, "x");
  auto policy = sequence({"<inferred_profile>\nmade/up: 1\ninterests/music: jazz\n</inferred_profile>"
                          "<inferred_personality></inferred_personality><classification>interests, bogus</classification>"});
  const auto out = step(s, *policy, tax());
  EXPECT_EQ(out.delta.assertions().size(), 1u);
  EXPECT_EQ(out.delta.classification(), std::set<std::string>{"interests"});
  EXPECT_EQ(out.dropped, (std::vector<std::string>{"made/up", "#classification/bogus"}));
  EXPECT_FALSE(out.next);
}

TEST(Step, PolicySeesOnlyCurrentMessageAndAccumulated) {
  // Markov property: the request is a function of (u_t, p_{1:t-1}, P_old) only.
  std::vector<std::string> keys;
  auto policy = std::make_shared<FunctionBackend>([&](const CompletionRequest& r) {
    keys.push_back(r.key());
    return CompletionResult{"<inferred_profile></inferred_profile>", {}, 1};
  });
  const auto base = view_of({{"interests/music", "jazz"}});
  auto s = init_state(base, "first");
  s = *step(s, *policy, tax(), std::string("second")).next;
  step(s, *policy, tax());
  ASSERT_EQ(keys.size(), 2u);
  EXPECT_EQ(keys[1], build_policy_prompt("second", s.accumulated, base).key());

  InferenceState same = s;
  same.view = same.replay();
  keys.clear();
  step(same, *policy, tax());
  EXPECT_EQ(keys[0], build_policy_prompt("second", s.accumulated, base).key());
}

TEST(Step, TenScriptedStepsMatchFoldOracle) {
  std::mt19937_64 rng(9);
  const auto record = random_record(rng, "fold", 10, 0.9);
  std::vector<std::string> replies;
  std::vector<InferredDelta> scripted;
  for (const auto& t : record.turns) {
    const auto d = t.gt_delta.value_or(InferredDelta{});
    scripted.push_back(d);
    replies.push_back(render_tagged_output(d));
  }
  auto policy = sequence(replies);
  auto s = init_state({}, record.turns[0].user);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto next = i + 1 < 10 ? std::optional<std::string>(record.turns[i + 1].user) : std::nullopt;
    auto out = step(s, *policy, tax(), next);
    if (next) {
      s = *out.next;
    } else {
      s = transition(s, out.delta, "");
    }
  }
  ProfileView oracle;
  for (const auto& d : scripted) oracle.fold(d);
  EXPECT_EQ(s.view.keys(), oracle.keys());
  EXPECT_EQ(s.accumulated.size(), 10u);
}

// ---------------------------------------------------------------------------

TEST(RunSession, LengthAndTruncation) {
  std::mt19937_64 rng(10);
  const auto record = random_record(rng, "len", 10);
  auto policy = std::make_shared<OraclePolicyBackend>(std::vector<SessionRecord>{record});
  EXPECT_EQ(run_session(record, *policy, tax(), 10).entries.size(), 10u);
  EXPECT_EQ(run_session(record, *policy, tax(), 3).entries.size(), 3u);
}

TEST(RunSession, OracleEchoReproducesGroundTruth) {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 20; ++iter) {
    const auto record = random_record(rng, "echo" + std::to_string(iter), 10);
    OraclePolicyBackend policy({record});
    const auto traj = run_session(record, policy, tax(), 10);
    ASSERT_TRUE(traj.complete);
    EXPECT_EQ(traj.terminal.current().keys(), record.inferable_view().keys());
    EXPECT_EQ(traj.terminal.replay(), traj.terminal.current());
    ASSERT_EQ(traj.terminal.snapshots().size(), 1u);
    EXPECT_EQ(traj.session_index, 1u);
    for (std::size_t i = 0; i < traj.entries.size(); ++i) {
      EXPECT_EQ(traj.entries[i].t(), i + 1);
      EXPECT_EQ(traj.entries[i].state.user_msg, record.turns[i].user);
    }
  }
}

TEST(RunSession, SessionIndexFollowsPriorProfile) {
  std::mt19937_64 rng(12);
  const auto record = random_record(rng, "idx", 3);
  OraclePolicyBackend policy({record});
  UserProfile old;
  old.apply_delta(delta_of({{"interests/music", "jazz"}}), {2, 1}, tax());
  old.snapshot(2);
  const auto traj = run_session(record, policy, tax(), 10, old);
  EXPECT_EQ(traj.session_index, 3u);
  EXPECT_TRUE(traj.terminal.snapshots().count(3));
  EXPECT_EQ(traj.entries[0].state.base, old.current());
}

TEST(RunSession, BackendFailureYieldsPartialTrajectory) {
  std::mt19937_64 rng(13);
  const auto record = random_record(rng, "fail", 6);
  auto policy = std::make_shared<ScriptedBackend>();
  policy->fail_on_contains(record.turns[3].user, BackendErrorKind::kTransient).otherwise("<classification></classification>");
  const auto traj = run_session(record, *policy, tax());
  EXPECT_FALSE(traj.complete);
  EXPECT_EQ(traj.entries.size(), 3u);
  ASSERT_TRUE(traj.error);
  EXPECT_NE(traj.error->find("turn 4"), std::string::npos);
}

TEST(Trajectory, JsonlRoundTrip) {
  std::mt19937_64 rng(14);
  const auto record = random_record(rng, "json", 5);
  OraclePolicyBackend policy({record}, 0.3, 0.2, 4);
  auto traj = run_session(record, policy, tax());
  RuleBasedJudge judge;
  attach_rewards(traj, record, judge);
  const auto lines = parse_trajectory_jsonl(trajectory_to_jsonl(traj));
  ASSERT_EQ(lines.size(), traj.entries.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    EXPECT_EQ(lines[i].t, traj.entries[i].t());
    EXPECT_EQ(lines[i].delta.keys(), traj.entries[i].delta.keys());
    EXPECT_EQ(lines[i].report, traj.entries[i].report);
    EXPECT_EQ(lines[i].reward, traj.entries[i].reward);
    EXPECT_EQ(lines[i].raw_output, traj.entries[i].raw_output);
  }
  EXPECT_THROW(parse_trajectory_jsonl("{\"t\": 1}\nnot json\n"), ParseError);
}

// ---------------------------------------------------------------------------

TEST(ColdStart, EmptyProfileQueries) {
  const auto d = decide_cold_start({}, "What restaurant should I try?", lexical_relevance(tax()), 0.5,
                                   taxonomy_topic_extractor(tax()), &tax());
  EXPECT_EQ(d.kind, DecisionKind::kQuery);
  EXPECT_TRUE(d.relevant.empty());
  ASSERT_TRUE(d.topic_path);
  EXPECT_EQ(path_to_string(*d.topic_path), "lifestyle/diet");
  EXPECT_EQ(d.topic, "Diet & Food Preferences");
}

TEST(ColdStart, RelevantAssertionAnswers) {
  const auto profile = view_of({{"lifestyle/diet", "vegan"}, {"digital/devices", "android phone"}});
  const auto d = decide_cold_start(profile, "Any restaurant ideas for tonight?", lexical_relevance(tax()), 0.5,
                                   taxonomy_topic_extractor(tax()), &tax());
  ASSERT_EQ(d.kind, DecisionKind::kAnswer);
  ASSERT_EQ(d.relevant.size(), 1u);
  EXPECT_EQ(d.relevant[0].assertion.value, "vegan");
}

TEST(ColdStart, ThresholdOneAlwaysQueries) {
  const auto profile = view_of({{"lifestyle/diet", "vegan"}});
  const auto d = decide_cold_start(profile, "restaurant food meal vegan restaurant", lexical_relevance(tax()), 1.0,
                                   taxonomy_topic_extractor(tax()), &tax());
  EXPECT_EQ(d.kind, DecisionKind::kQuery);
}

TEST(ColdStart, UnknownTopicFallsBack) {
  const auto d = decide_cold_start({}, "zzz qqq", lexical_relevance(tax()), 0.5, taxonomy_topic_extractor(tax()), &tax());
  EXPECT_FALSE(d.topic_path);
  EXPECT_EQ(d.topic, "preferences");
}

TEST(AssembleResponse, TemplateEmbedsValues) {
  TemplateGeneratorBackend gen(tax());
  const std::vector<AttributeAssertion> relevant = {AttributeAssertion(std::string_view("lifestyle/diet"), "vegan"),
                                                    AttributeAssertion(std::string_view("interests/music"), "live jazz")};
  const auto r = assemble_response("Where should I eat?", std::nullopt, relevant, gen);
  EXPECT_TRUE(r.aligned);
  EXPECT_NE(r.text.find("vegan"), std::string::npos);
  EXPECT_NE(r.text.find("live jazz"), std::string::npos);

  const auto e = assemble_response("Where should I eat?", std::string("no peanuts please"), {}, gen);
  EXPECT_TRUE(e.aligned);
  EXPECT_NE(e.text.find("no peanuts please"), std::string::npos);
}

TEST(AssembleResponse, UnalignedFlagMatchesDecision) {
  TemplateGeneratorBackend gen(tax());
  for (const auto* q : {"What restaurant should I try?", "Recommend a jazz album"}) {
    for (const auto& profile : {ProfileView{}, view_of({{"lifestyle/diet", "vegan"}})}) {
      const auto d = decide_cold_start(profile, q, lexical_relevance(tax()), 0.5, taxonomy_topic_extractor(tax()));
      std::vector<AttributeAssertion> rel;
      for (const auto& s : d.relevant) rel.push_back(s.assertion);
      const auto r = assemble_response(q, std::nullopt, rel, gen);
      EXPECT_FALSE(r.text.empty());
      EXPECT_EQ(r.aligned, d.kind == DecisionKind::kAnswer) << q;
    }
  }
}

// ---------------------------------------------------------------------------

TEST(LiveSession, ColdStartQueryThenAnswer) {
  auto policy = std::make_shared<KeywordPolicyBackend>(tax());
  auto gen = std::make_shared<TemplateGeneratorBackend>(tax());
  LiveSession s("s1", "u", tax(), policy, gen);
  const auto first = s.send_message("Can you recommend a restaurant for dinner?");
  ASSERT_TRUE(first.cold_start_query);
  EXPECT_TRUE(s.pending());
  EXPECT_FALSE(first.aligned);
  EXPECT_EQ(first.cold_start_query->original_question, "Can you recommend a restaurant for dinner?");

  const auto second = s.answer("I'm vegetarian and I'm allergic to peanuts.");
  EXPECT_FALSE(s.pending());
  EXPECT_TRUE(second.aligned);
  EXPECT_NE(second.response.find("allergic to peanuts"), std::string::npos);
  EXPECT_FALSE(second.delta.empty());
  EXPECT_EQ(second.profile_view, s.profile().current());
  EXPECT_EQ(s.trajectory().size(), 2u);
  EXPECT_THROW(s.answer("again"), StateError);
}

TEST(LiveSession, KnownPreferenceIsUsedDirectly) {
  auto policy = std::make_shared<KeywordPolicyBackend>(tax());
  auto gen = std::make_shared<TemplateGeneratorBackend>(tax());
  LiveSession s("s2", "u", tax(), policy, gen);
  s.send_message("I live in Seattle.");
  const auto r = s.send_message("I love spicy food. Suggest a restaurant?");
  EXPECT_FALSE(r.cold_start_query);
  EXPECT_TRUE(r.aligned);
}
