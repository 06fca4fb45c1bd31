#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "persona/dialogue.hpp"
#include "persona/text.hpp"
#include "support.hpp"

using namespace persona;
using namespace persona::testing;

namespace {

std::filesystem::path example(const std::string& name) { return source_dir() / "data" / "examples" / name; }

std::string aloe_line(const std::string& id, const std::string& extra_turn = "") {
  std::string turns = R"({"user": "I love jazz", "agent": "Nice", "inferred_profile": {"interests/music": "jazz"}})";
  if (!extra_turn.empty()) turns += "," + extra_turn;
  return R"({"id": ")" + id + R"(", "theme": "music", "profile": {"interests/music": "jazz", "lifestyle/diet": "vegan"},)"
         R"( "personality": ["calm"], "turns": [)" + turns + "]}";
}

/// Index of each original turn in `out`, or npos when the original order is
/// not preserved as a subsequence.
bool is_order_preserving_subsequence(const SessionRecord& original, const SessionRecord& out) {
  std::size_t j = 0;
  for (const auto& t : out.turns) {
    if (t.distractor) continue;
    if (j >= original.turns.size() || !(t == original.turns[j])) return false;
    ++j;
  }
  return j == original.turns.size();
}

}  // namespace

TEST(Corpus, SampleAloeRecordHasTenTurns) {
  const auto result = load_corpus(example("aloe_sample.jsonl"), CorpusFormat::kAloe, tax());
  EXPECT_TRUE(result.errors.empty());
  ASSERT_EQ(result.records.size(), 3u);
  for (const auto& r : result.records) EXPECT_EQ(r.turns.size(), 10u) << r.id;

  const auto& first = result.records[0];
  EXPECT_EQ(first.theme, "restaurant");
  EXPECT_EQ(first.gt_profile.assertions.size(), 6u);
  EXPECT_EQ(first.gt_profile.traits, (std::set<std::string>{"curious", "introverted"}));
  EXPECT_EQ(first.turns[0].agent, *first.turns[0].preferred);
  ASSERT_TRUE(first.turns[0].gt_delta);
  EXPECT_EQ(first.turns[0].gt_delta->classification(), std::set<std::string>{"career_finance"});
  EXPECT_FALSE(first.turns[3].gt_delta);
  // The allergy is in the persona but never revealed in dialogue.
  EXPECT_EQ(first.inferable_view().find("lifestyle/diet/food_allergies"), nullptr);
}

TEST(Corpus, SinglePaperShapedRecord) {
  std::string turns;
  for (int i = 1; i <= 10; ++i) {
    if (i > 1) turns += ",";
    turns += R"({"user": "message )" + std::to_string(i) +
             R"(", "preferred": "p", "rejected": "r", "chosen": "rejected", "inferred_profile": {}, "inferred_personality": []})";
  }
  const auto line = R"({"id": "r1", "profile": {"interests/music": "jazz"}, "turns": [)" + turns + "]}";
  const auto result = parse_corpus(line, CorpusFormat::kAloe, tax());
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].turns.size(), 10u);
  EXPECT_EQ(result.records[0].turns[4].agent, "r");
  EXPECT_TRUE(result.records[0].turns[4].gt_delta->empty());
}

TEST(Corpus, EmptyFile) {
  const auto result = parse_corpus("", CorpusFormat::kAloe, tax());
  EXPECT_TRUE(result.records.empty());
  EXPECT_TRUE(result.errors.empty());
  EXPECT_TRUE(parse_corpus("\n\n  \n", CorpusFormat::kAloe, tax()).errors.empty());
}

TEST(Corpus, MissingUserFieldIsSkippedWithLineNumber) {
  const auto text = aloe_line("a") + "\n" + aloe_line("b", R"({"agent": "no user"})") + "\n" + aloe_line("c") + "\n";
  const auto result = parse_corpus(text, CorpusFormat::kAloe, tax());
  ASSERT_EQ(result.records.size(), 2u);
  ASSERT_EQ(result.errors.size(), 1u);
  EXPECT_EQ(result.errors[0].line, 2u);
  EXPECT_NE(result.errors[0].message.find("user"), std::string::npos);

  try {
    parse_corpus(text, CorpusFormat::kAloe, tax(), {200, true});
    FAIL() << "strict mode should throw";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Corpus, SchemaViolations) {
  const auto errors_for = [](const std::string& line, CorpusFormat f = CorpusFormat::kAloe) {
    return parse_corpus(line, f, tax()).errors.size();
  };
  EXPECT_EQ(errors_for("{not json"), 1u);
  EXPECT_EQ(errors_for(aloe_line("a") + "\n" + aloe_line("a")), 1u);  // duplicate id
  EXPECT_EQ(errors_for(R"({"id": "x", "profile": {"no/such": "v"}, "turns": [{"user": "u"}]})"), 1u);
  EXPECT_EQ(errors_for(R"({"id": "x", "profile": {"interests/music": 3}, "turns": [{"user": "u"}]})"), 1u);
  EXPECT_EQ(errors_for(R"({"id": "x", "profile": {}, "turns": []})"), 1u);
  EXPECT_EQ(errors_for(R"({"id": "x", "profile": {}, "turns": [{"user": "u", "preferred": "p"}]})"), 1u);
  EXPECT_EQ(errors_for(R"({"id": "x", "profile": {}, "turns": [{"user": "u", "inferred_profile": {}, "classification": ["nope"]}]})"),
            1u);

  std::string many;
  for (int i = 0; i < 5; ++i) many += std::string(i ? "," : "") + R"({"user": "u"})";
  const auto line = R"({"id": "x", "profile": {}, "turns": [)" + many + "]}";
  EXPECT_EQ(parse_corpus(line, CorpusFormat::kAloe, tax(), {4, false}).errors.size(), 1u);
}

TEST(Corpus, PrefEvalSample) {
  const auto result = load_corpus(example("prefeval_sample.jsonl"), CorpusFormat::kPrefEval, tax());
  ASSERT_TRUE(result.errors.empty()) << result.errors[0].message;
  ASSERT_EQ(result.records.size(), 1u);
  const auto& r = result.records[0];
  EXPECT_EQ(r.theme, "travel");
  ASSERT_TRUE(r.final_question);
  EXPECT_NE(r.gt_profile.find("scenario/stated_preferences"), nullptr);
  EXPECT_FALSE(r.turns[0].gt_delta);
}

TEST(Corpus, RoundTripIsExact) {
  for (const auto& [file, format] : {std::pair{"aloe_sample.jsonl", CorpusFormat::kAloe},
                                     std::pair{"prefeval_sample.jsonl", CorpusFormat::kPrefEval}}) {
    const auto records = load_corpus(example(file), format, tax()).records;
    const auto text = serialize_corpus(records);
    const auto back = parse_corpus(text, format, tax());
    EXPECT_TRUE(back.errors.empty());
    EXPECT_EQ(back.records, records) << file;
    EXPECT_EQ(serialize_corpus(back.records), text);
  }
}

TEST(Corpus, UnseenSchemaChecksThePreferenceIsHidden) {
  const auto base = std::string(R"({"id": "u1", "profile": {"interests/music": "jazz", "lifestyle/diet": "vegan"}, )") +
                    R"("turns": [{"user": "I love jazz", "inferred_profile": {"interests/music": "jazz"}}], )" +
                    R"("question": "q?", "explanation": "e", "cold_start_preference": )";
  EXPECT_TRUE(parse_corpus(base + R"({"path": "lifestyle/diet", "value": "vegan"}})", CorpusFormat::kUnseen, tax())
                  .errors.empty());
  EXPECT_EQ(parse_corpus(base + R"({"path": "interests/music", "value": "jazz"}})", CorpusFormat::kUnseen, tax())
                .errors.size(),
            1u);
}

// ---------------------------------------------------------------------------

TEST(Decompose, LengthAndPriorViews) {
  std::mt19937_64 rng(3);
  const auto record = random_record(rng, "d", 10);
  const auto units = decompose(record);
  ASSERT_EQ(units.size(), 10u);
  for (std::size_t n = 0; n < units.size(); ++n) {
    EXPECT_EQ(units[n].index, n + 1);
    ProfileView oracle;
    for (std::size_t k = 0; k < n; ++k) {
      if (record.turns[k].gt_delta) oracle.fold(*record.turns[k].gt_delta);
    }
    EXPECT_EQ(units[n].prior_gt_view, oracle) << "unit " << n + 1;
  }
  const auto back = recompose(units);
  ASSERT_EQ(back.size(), record.turns.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].user, record.turns[i].user);
    EXPECT_EQ(back[i].gt_delta, record.turns[i].gt_delta);
  }
}

TEST(Decompose, SingleTurnHasEmptyPrior) {
  std::mt19937_64 rng(4);
  const auto units = decompose(random_record(rng, "one", 1));
  ASSERT_EQ(units.size(), 1u);
  EXPECT_TRUE(units[0].prior_gt_view.empty());
}

// ---------------------------------------------------------------------------

TEST(Distractors, ZeroBudgetIsIdentity) {
  std::mt19937_64 rng(5);
  const auto record = random_record(rng, "z", 6);
  const auto out = insert_distractors(record, DistractorPool::synthetic(), 0);
  EXPECT_EQ(out.record, record);
  EXPECT_EQ(out.inserted_turns, 0u);
  EXPECT_EQ(out.inserted_tokens, 0u);
}

TEST(Distractors, CeilingArithmetic) {
  std::vector<DialogueTurn> turns;
  for (int i = 0; i < 4; ++i) turns.push_back({"one two three", "four five", {}, {}, {}, {}, false});
  const auto pool = DistractorPool::from_turns(turns);
  EXPECT_EQ(pool.turn_tokens(0, whitespace_tokenizer()), 5u);
  std::mt19937_64 rng(6);
  const auto out = insert_distractors(random_record(rng, "c", 3), pool, 12);
  EXPECT_EQ(out.inserted_turns, 3u);
  EXPECT_EQ(out.inserted_tokens, 15u);
}

TEST(Distractors, AfterPreferencePlacementAndSubsequence) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 20; ++iter) {
    const auto record = random_record(rng, "s" + std::to_string(iter), 1 + rng() % 10);
    for (auto position : {DistractorPosition::kAfterPreference, DistractorPosition::kInterleave}) {
      const auto out = insert_distractors(record, DistractorPool::synthetic(), 3000, position,
                                          whitespace_tokenizer(), rng() % 7);
      EXPECT_TRUE(is_order_preserving_subsequence(record, out.record));
      EXPECT_GE(out.inserted_tokens, 3000u);
      EXPECT_LT(out.inserted_tokens, 3000u + DistractorPool::synthetic().max_turn_tokens(whitespace_tokenizer()));
      std::size_t count = 0;
      for (const auto& t : out.record.turns) count += t.distractor;
      EXPECT_EQ(count, out.inserted_turns);
      EXPECT_EQ(out.record.gt_profile, record.gt_profile);

      if (position == DistractorPosition::kAfterPreference) {
        std::size_t last_pref = 0;
        bool any = false;
        for (std::size_t i = 0; i < record.turns.size(); ++i) {
          if (record.turns[i].gt_delta && !record.turns[i].gt_delta->empty()) {
            last_pref = i;
            any = true;
          }
        }
        const std::size_t begin = any ? last_pref + 1 : record.turns.size();
        for (std::size_t i = 0; i < out.record.turns.size(); ++i) {
          const bool inside = i >= begin && i < begin + out.inserted_turns;
          EXPECT_EQ(out.record.turns[i].distractor, inside) << "index " << i;
        }
      }
    }
  }
}

TEST(Distractors, PoolParsing) {
  const auto pool = DistractorPool::load(example("distractor_pool.jsonl"));
  ASSERT_EQ(pool.turns.size(), 3u);
  for (const auto& t : pool.turns) EXPECT_TRUE(t.distractor);
  EXPECT_THROW(DistractorPool::parse("{\"agent\": \"x\"}\n"), ParseError);
  EXPECT_THROW(position_from_name("middle"), InvalidArgument);
  EXPECT_EQ(position_from_name("interleave"), DistractorPosition::kInterleave);
}

// ---------------------------------------------------------------------------

TEST(BuildUnseen, AllergyDrivesRestaurantQuestion) {
  SessionRecord record;
  record.id = "rest";
  record.theme = "restaurant";
  record.gt_profile.fold(delta_of({{"lifestyle/diet/food_allergies", "shellfish allergy"}, {"interests/music", "jazz"}}));
  DialogueTurn turn{"I love jazz", "ok", {}, {}, {}, delta_of({{"interests/music", "jazz"}}), false};
  record.turns.push_back(turn);

  const auto unseen = build_unseen(record, lexical_first_selector(), template_question_generator(tax()));
  EXPECT_EQ(unseen.cold_start_preference.value, "shellfish allergy");
  EXPECT_NE(to_lower(unseen.question).find("restaurant"), std::string::npos);
  EXPECT_NE(unseen.explanation.find("shellfish allergy"), std::string::npos);
  EXPECT_EQ(unseen.session.format, CorpusFormat::kUnseen);
  EXPECT_EQ(unseen.session.final_question, unseen.question);

  // The built record satisfies the unseen schema.
  const auto back = parse_corpus(serialize_corpus({unseen.session}), CorpusFormat::kUnseen, tax());
  EXPECT_TRUE(back.errors.empty()) << (back.errors.empty() ? "" : back.errors[0].message);
}

TEST(BuildUnseen, NoCandidate) {
  SessionRecord record;
  record.id = "full";
  record.gt_profile.fold(delta_of({{"interests/music", "jazz"}}));
  record.turns.push_back({"I love jazz", "ok", {}, {}, {}, delta_of({{"interests/music", "jazz"}}), false});
  EXPECT_THROW(build_unseen(record, lexical_first_selector(), template_question_generator(tax())), NoCandidateError);
}

TEST(BuildUnseen, DeterministicSelector) {
  const auto records = load_corpus(example("aloe_sample.jsonl"), CorpusFormat::kAloe, tax()).records;
  for (const auto& r : records) {
    const auto a = build_unseen(r, lexical_first_selector(), template_question_generator(tax()));
    const auto b = build_unseen(r, lexical_first_selector(), template_question_generator(tax()));
    EXPECT_EQ(a.cold_start_preference, b.cold_start_preference);
    EXPECT_EQ(a.question, b.question);
    const auto candidates = profile_diff(r.gt_profile, r.inferable_view());
    const auto min = std::min_element(candidates.begin(), candidates.end(),
                                      [](const auto& x, const auto& y) { return x.key() < y.key(); });
    EXPECT_EQ(a.cold_start_preference.key(), min->key());
  }
}

TEST(BuildUnseen, SelectorFailureNamesRecord) {
  const auto records = load_corpus(example("aloe_sample.jsonl"), CorpusFormat::kAloe, tax()).records;
  const ColdStartSelector bad = [](const SessionRecord&, const std::vector<AttributeAssertion>&) -> AttributeAssertion {
    throw std::runtime_error("selector down");
  };
  try {
    build_unseen(records[0], bad, template_question_generator(tax()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("aloe-0001"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------

TEST(Split, NineToOne) {
  std::mt19937_64 rng(8);
  std::vector<SessionRecord> records;
  for (int i = 0; i < 10; ++i) records.push_back(random_record(rng, "r" + std::to_string(i), 2));
  const auto [train, test] = split_corpus(records, 0.9, 42);
  EXPECT_EQ(train.size(), 9u);
  EXPECT_EQ(test.size(), 1u);

  const auto [train2, test2] = split_corpus(records, 0.9, 42);
  EXPECT_EQ(train, train2);
  EXPECT_EQ(test, test2);

  std::multiset<std::string> in, out;
  for (const auto& r : records) in.insert(r.id);
  for (const auto& r : train) out.insert(r.id);
  for (const auto& r : test) out.insert(r.id);
  EXPECT_EQ(in, out);
  EXPECT_THROW(split_corpus(records, 1.5, 1), InvalidArgument);
}
