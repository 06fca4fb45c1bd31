#include <gtest/gtest.h>

#include <random>

#include "persona/mock_backends.hpp"
#include "persona/prompts.hpp"
#include "support.hpp"

using namespace persona;
using namespace persona::testing;

namespace {

std::string all_text(const CompletionRequest& r) {
  std::string out;
  for (const auto& m : r.messages) out += m.text + "\n";
  return out;
}

}  // namespace

TEST(CriteriaPrompt, EmptyInputsAreValid) {
  const auto r = build_criteria_prompt({}, {}, {});
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(r.attribute("task"), kTaskCriteria);
  EXPECT_EQ(r.attribute("prompt_version"), kPromptVersion);
  EXPECT_EQ(r.role, Role::kJudge);
}

TEST(CriteriaPrompt, EmbedsGroundTruthValues) {
  const auto gt = delta_of({{"interests/music", "bebop jazz"}, {"lifestyle/diet", "strict vegan"}}, {"curious"});
  const auto text = all_text(build_criteria_prompt({}, gt, {}));
  for (const auto* v : {"bebop jazz", "strict vegan", "curious"}) EXPECT_NE(text.find(v), std::string::npos) << v;
  for (const auto* label : {"Completeness", "No Hallucination", "Informativeness", "Consistency"}) {
    EXPECT_NE(text.find(label), std::string::npos) << label;
  }
}

TEST(CriteriaPrompt, MockJudgeRoundTrip) {
  std::mt19937_64 rng(21);
  auto judge_backend = std::make_shared<RuleJudgeBackend>();
  BackendCriteriaJudge via_prompt(judge_backend);
  RuleBasedJudge direct;
  for (int i = 0; i < 100; ++i) {
    const auto record = random_record(rng, "p" + std::to_string(i), 4, 0.8);
    const auto units = decompose(record);
    for (std::size_t k = 0; k < units.size(); ++k) {
      const auto gt = units[k].gt_delta.value_or(InferredDelta{});
      const auto pred = units[(k + i) % units.size()].gt_delta.value_or(InferredDelta{});
      EXPECT_EQ(via_prompt.judge({pred, gt, units[k].prior_gt_view}), direct.judge({pred, gt, units[k].prior_gt_view}));
    }
  }

  ScriptedBackend fixed;
  fixed.otherwise("Completeness: yes\nNo Hallucination: no\nInformativeness: yes\nConsistency: yes\n");
  const auto reply = fixed.complete(build_criteria_prompt({}, {}, {})).text;
  const auto v = parse_verdict(reply);
  EXPECT_EQ(v, (CriteriaVerdict{true, false, true, true}));
}

TEST(ParseVerdict, Strictness) {
  EXPECT_EQ(parse_verdict("completeness: true\nno_hallucination: TRUE\n**Informativeness**: yes\n- Consistency: no"),
            (CriteriaVerdict{true, true, true, false}));
  try {
    parse_verdict("Completeness: yes\nNo Hallucination: yes\nInformativeness: yes\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("Consistency"), std::string::npos);
  }
  try {
    parse_verdict("Completeness: yes\nCompleteness: no\nNo Hallucination: yes\nInformativeness: yes\nConsistency: yes");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("conflicting"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(parse_verdict(
      "Completeness: yes\nCompleteness: yes\nNo Hallucination: yes\nInformativeness: yes\nConsistency: yes"));
  EXPECT_THROW(parse_verdict("Completeness: maybe\nNo Hallucination: yes\nInformativeness: yes\nConsistency: yes"),
               ParseError);
}

TEST(AlignmentPrompt, MinimalPersona) {
  ProfileView persona;
  persona.fold(delta_of({{"interests/music", "jazz"}}));
  const auto r = build_alignment_prompt(persona, "hi", "hello there");
  EXPECT_NO_THROW(r.validate());
  EXPECT_NE(all_text(r).find("jazz"), std::string::npos);
  EXPECT_EQ(r.attribute("response"), "hello there");
}

TEST(ParseScore, Forms) {
  EXPECT_EQ(parse_score("Score: 87"), 87);
  EXPECT_EQ(parse_score("87"), 87);
  EXPECT_EQ(parse_score("Reasoning first.\nScore: 0"), 0);
  EXPECT_EQ(parse_score("score = 100"), 100);
  EXPECT_THROW(parse_score("120"), ParseError);
  EXPECT_THROW(parse_score("Score: -3"), ParseError);
  EXPECT_THROW(parse_score("great answer"), ParseError);
}

TEST(AlignmentJudge, RuleBackendScoresFoundValues) {
  ProfileView persona;
  persona.fold(delta_of({{"interests/music", "jazz"}, {"lifestyle/diet", "vegan"}}));
  BackendAlignmentJudge judge(std::make_shared<RuleJudgeBackend>());
  EXPECT_DOUBLE_EQ(judge.score(persona, "q", "Try a vegan place with jazz.", 1), 100.0);
  EXPECT_DOUBLE_EQ(judge.score(persona, "q", "Try a vegan place.", 1), 50.0);
  EXPECT_DOUBLE_EQ(judge.score(persona, "q", "Anything works.", 1), 0.0);
  EXPECT_DOUBLE_EQ(judge.score(ProfileView{}, "q", "Anything works.", 1), 0.0);
}

TEST(Rubric, PromptAndMock) {
  ProfileView gt, inf;
  gt.fold(delta_of({{"interests/music", "jazz"}}, {"calm"}));
  inf = gt;
  const auto s = judge_rubric(*std::make_shared<RuleJudgeBackend>(), gt, inf);
  EXPECT_DOUBLE_EQ(s.completeness(), 1.0);
  EXPECT_DOUBLE_EQ(s.no_hallucination(), 1.0);
  const auto text = all_text(build_rubric_prompt(gt, inf));
  for (auto d : kRubricDimensions) EXPECT_NE(text.find(std::string(d)), std::string::npos);
}

TEST(Choice, Parsing) {
  EXPECT_EQ(parse_choice("Choice: 2", 3), 1u);
  EXPECT_THROW(parse_choice("Choice: 4", 3), ParseError);
  EXPECT_THROW(parse_choice("Choice: 0", 3), ParseError);
  EXPECT_THROW(parse_choice("none", 3), ParseError);
  const auto q = parse_generated_question("Question: Where to eat?\nExplanation: needs the allergy.");
  EXPECT_EQ(q.question, "Where to eat?");
  EXPECT_EQ(q.explanation, "needs the allergy.");
  EXPECT_THROW(parse_generated_question("Explanation: only"), ParseError);
}

TEST(PolicyPrompt, ShowsKnownProfile) {
  ProfileView base;
  base.fold(delta_of({{"geography/residence", "Seattle"}}));
  const std::vector<InferredDelta> acc = {delta_of({{"interests/music", "jazz"}})};
  const auto r = build_policy_prompt("I have two cats", acc, base);
  const auto text = all_text(r);
  EXPECT_NE(text.find("I have two cats"), std::string::npos);
  EXPECT_NE(text.find("seattle"), std::string::npos);
  EXPECT_NE(text.find("jazz"), std::string::npos);
  for (auto tag : kBlockTags) EXPECT_NE(text.find(std::string(tag)), std::string::npos);
  EXPECT_EQ(r.attribute("turn"), "2");
}

TEST(GenerationPrompt, CarriesElicitedAndRelevant) {
  const auto r = build_generation_prompt("Where to eat?", std::string("I avoid gluten"),
                                         {AttributeAssertion(std::string_view("lifestyle/diet"), "vegan")});
  const auto text = all_text(r);
  EXPECT_NE(text.find("I avoid gluten"), std::string::npos);
  EXPECT_NE(text.find("vegan"), std::string::npos);
  EXPECT_EQ(r.role, Role::kGenerator);
}
