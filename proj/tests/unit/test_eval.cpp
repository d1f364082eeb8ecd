#include <gtest/gtest.h>

#include <set>

#include "molllama/eval/judge.hpp"
#include "molllama/eval/moleculeqa.hpp"
#include "molllama/eval/pampa.hpp"
#include "molllama/eval/selection.hpp"
#include "molllama/prompts.hpp"
#include "test_util.hpp"

using namespace molllama;
using namespace molllama::eval;

namespace {

std::string verdict(const JudgeScores& a, const JudgeScores& b) {
  std::string out = "Some preamble.\n";
  const JudgeScores* s[2] = {&a, &b};
  for (int n = 0; n < 2; ++n) {
    out += "[Assistant " + std::to_string(n + 1) + "]\n";
    out += "- Helpfulness: " + std::to_string(s[n]->helpfulness) + "\n";
    out += "- Relevance : " + std::to_string(s[n]->relevance) + "\n";
    out += "- Accuracy: " + std::to_string(s[n]->accuracy) + "\n";
    out += "- Level of Detail: " + std::to_string(s[n]->detail) + "\n";
    out += "- Overall: " + std::to_string(s[n]->overall) + "\n";
  }
  return out;
}

PampaItem item(const std::string& id, PampaLabel label, const std::string& smiles = "CCO") {
  PampaItem p;
  p.id = id;
  p.molecule.id = id;
  p.molecule.smiles = smiles;
  p.label = label;
  return p;
}

std::set<std::string> ids(const std::vector<chem::MoleculeRecord>& recs) {
  std::set<std::string> out;
  for (const auto& r : recs) out.insert(r.id);
  return out;
}

}  // namespace

TEST(Judge, ParsesPairwiseVerdict) {
  const JudgeScores a{8, 9, 7, 6, 7.5}, b{5, 6, 4, 3, 4.5};
  const auto parsed = parse_pairwise_verdict(verdict(a, b));
  ASSERT_TRUE(parsed);
  EXPECT_EQ((*parsed)[0], a);
  EXPECT_EQ((*parsed)[1], b);
}

TEST(Judge, RejectsIncompleteOrOutOfRange) {
  JudgeScores ok{8, 9, 7, 6, 7}, bad = ok;
  bad.accuracy = 11;
  EXPECT_FALSE(parse_pairwise_verdict(verdict(ok, bad)));
  EXPECT_FALSE(parse_pairwise_verdict("[Assistant 1]\n- Helpfulness: 3\n"));
  EXPECT_FALSE(parse_pairwise_verdict("no headers at all"));
}

TEST(Judge, ParsesReasoningVerdict) {
  const std::string text =
      "Explanation of the evaluation: ...\nFinal Decision:\n[Assistant 1]\n- Fidelity : 7\n- Helpfulness : 8\n"
      "[Assistant 2]\n- Fidelity : 4\n- Helpfulness : 6\n";
  const auto parsed = parse_reasoning_verdict(text);
  ASSERT_TRUE(parsed);
  EXPECT_EQ((*parsed)[0], (ReasoningScores{7, 8}));
  EXPECT_EQ((*parsed)[1], (ReasoningScores{4, 6}));
}

TEST(Judge, RelativeScore) {
  const std::vector<JudgeScores> x = {{3, 4, 5, 6, 7}, {1.5, 2, 9, 10, 3}};
  const JudgeScores one = relative_score(x, x);
  EXPECT_EQ(one, (JudgeScores{1, 1, 1, 1, 1}));
  const std::vector<JudgeScores> half = {{1.5, 2, 2.5, 3, 3.5}, {0.75, 1, 4.5, 5, 1.5}};
  EXPECT_NEAR(relative_score(half, x).overall, 0.5, 1e-15);
  EXPECT_THROW(relative_score(x, {x[0]}), std::invalid_argument);
  std::vector<JudgeScores> zero = x;
  zero[1].accuracy = 0;
  EXPECT_THROW(relative_score(x, zero), std::invalid_argument);
}

TEST(Judge, BothOrdersAverageOutPositionBias) {
  // The judge always gives the first slot +2 on every criterion.
  datagen::LLMClient client;
  client.provider = std::make_shared<datagen::FunctionProvider>([](const datagen::CompletionRequest& r) {
    const std::string& user = r.messages.back().text;
    const bool a_first = user.find("RESPONSE-A") < user.find("RESPONSE-B");
    const JudgeScores a{6, 6, 6, 6, 6}, b{4, 4, 4, 4, 4}, bump{2, 2, 2, 2, 2};
    auto plus = [](JudgeScores s, const JudgeScores& d) {
      return JudgeScores{s.helpfulness + d.helpfulness, s.relevance + d.relevance, s.accuracy + d.accuracy,
                         s.detail + d.detail, s.overall + d.overall};
    };
    return a_first ? verdict(plus(a, bump), b) : verdict(plus(b, bump), a);
  });
  const auto& mol = fixtures::record("aspirin");
  const auto both = judge_pairwise(client, mol, "chemical", "RESPONSE-A", "RESPONSE-B");
  EXPECT_EQ(both.a, (JudgeScores{7, 7, 7, 7, 7}));
  EXPECT_EQ(both.b, (JudgeScores{5, 5, 5, 5, 5}));
  JudgeOptions one;
  one.both_orders = false;
  const auto single = judge_pairwise(client, mol, "chemical", "RESPONSE-A", "RESPONSE-B", one);
  EXPECT_EQ(single.a, (JudgeScores{8, 8, 8, 8, 8}));
  EXPECT_EQ(single.b, (JudgeScores{4, 4, 4, 4, 4}));
}

TEST(Judge, RetriesThenFails) {
  int calls = 0;
  datagen::LLMClient client;
  client.provider = std::make_shared<datagen::FunctionProvider>([&](const datagen::CompletionRequest&) {
    ++calls;
    return std::string(calls == 1 ? "garbage" : verdict({5, 5, 5, 5, 5}, {6, 6, 6, 6, 6}));
  });
  JudgeOptions o;
  o.both_orders = false;
  const auto r = judge_pairwise(client, fixtures::record("urea"), "structural", "x", "y", o);
  EXPECT_EQ(r.rejected, 1);
  EXPECT_EQ(r.raw.size(), 2u);
  client.provider = std::make_shared<datagen::FunctionProvider>(
      [](const datagen::CompletionRequest&) { return std::string("never parses"); });
  EXPECT_THROW(judge_pairwise(client, fixtures::record("urea"), "structural", "x", "y", o), JudgeError);
  EXPECT_THROW(judge_pairwise(client, fixtures::record("urea"), "structural", "", "y", o), std::invalid_argument);
}

TEST(Judge, MockJudgeIsOrderConsistent) {
  datagen::LLMClient client;
  client.provider = std::make_shared<datagen::MockProvider>();
  const auto r = judge_reasoning(client, fixtures::record("phenol"), "first answer", "second answer");
  const auto swapped = judge_reasoning(client, fixtures::record("phenol"), "second answer", "first answer");
  EXPECT_EQ(r.a, swapped.b);
  EXPECT_EQ(r.b, swapped.a);
}

TEST(Pampa, ScanFinalAnswer) {
  EXPECT_EQ(scan_final_answer("...\nFinal answer: High permeability."), PampaLabel::kHigh);
  EXPECT_EQ(scan_final_answer("final answer: low-to-moderate permeability"), PampaLabel::kLowToModerate);
  EXPECT_EQ(scan_final_answer("Final Answer: Low to moderate permeability."), PampaLabel::kLowToModerate);
  EXPECT_EQ(scan_final_answer("Final answer: High. On reflection, Final answer: Low-to-moderate permeability."),
            PampaLabel::kLowToModerate);
  EXPECT_FALSE(scan_final_answer("The permeability is high."));
  EXPECT_FALSE(scan_final_answer("Final answer: medium permeability."));
}

TEST(Pampa, ExtractionRetriesOnce) {
  int calls = 0;
  std::string prefix_seen;
  ScriptedResponder model([&](const ModelQuery& q) {
    ++calls;
    prefix_seen = q.assistant_prefix;
    return std::string("High permeability.");
  });
  const PampaItem it = item("x", PampaLabel::kHigh);
  const ModelQuery q = pampa_query(it, PampaMode::kDefault);
  const auto e = extract_final_answer("It depends on many factors.", model, q);
  EXPECT_TRUE(e.retried);
  EXPECT_EQ(e.label, PampaLabel::kHigh);
  EXPECT_EQ(calls, 1);
  // The retry continues the original response after the cue.
  EXPECT_EQ(prefix_seen, "It depends on many factors.\nFinal answer: ");
  const auto direct = extract_final_answer("Final answer: Low-to-moderate permeability.", model, q);
  EXPECT_FALSE(direct.retried);
  EXPECT_EQ(calls, 1);
}

TEST(Pampa, QueryModes) {
  const PampaItem it = item("x", PampaLabel::kHigh);
  const auto base = pampa_query(it, PampaMode::kDefault);
  ASSERT_EQ(base.chat.messages.size(), 2u);
  EXPECT_EQ(base.chat.messages[0].role, Role::kSystem);
  EXPECT_EQ(base.chat.messages[1].molecule, 0);
  EXPECT_EQ(base.molecules.size(), 1u);
  EXPECT_EQ(pampa_query(it, PampaMode::kCot).chat.messages[1].text,
            base.chat.messages[1].text + "\n" + prompts::pampa_cot_suffix());
  EXPECT_NE(pampa_query(it, PampaMode::kTaskInfo).chat.messages[0].text.find(prompts::pampa_task_info()),
            std::string::npos);
  const std::vector<PampaItem> shots = {item("a", PampaLabel::kHigh), item("b", PampaLabel::kLowToModerate)};
  const auto few = pampa_query(it, PampaMode::kFewShot, shots);
  ASSERT_EQ(few.chat.messages.size(), 6u);
  EXPECT_EQ(few.molecules.size(), 3u);
  EXPECT_EQ(few.chat.messages[2].text, "Final answer: High permeability.");
  EXPECT_EQ(few.chat.messages[4].text, "Final answer: Low-to-moderate permeability.");
}

TEST(Pampa, MetricsDegenerateAndNotApplicable) {
  std::vector<PampaItem> items;
  for (int i = 0; i < 10; ++i) {
    auto p = item("i" + std::to_string(i), i < 3 ? PampaLabel::kHigh : PampaLabel::kLowToModerate);
    p.prediction = PampaLabel::kLowToModerate;
    items.push_back(p);
  }
  const auto m = pampa_metrics(items);
  EXPECT_EQ(m.minority, PampaLabel::kHigh);
  EXPECT_EQ(m.label_ratio, 0.0);
  EXPECT_TRUE(m.all_same);
  EXPECT_NEAR(m.accuracy, 0.7, 1e-15);
  EXPECT_FALSE(m.not_applicable);

  items[0].prediction.reset();
  items[1].prediction.reset();
  EXPECT_FALSE(pampa_metrics(items).not_applicable);  // exactly 20%
  items[2].prediction.reset();
  const auto na = pampa_metrics(items);
  EXPECT_TRUE(na.not_applicable);
  EXPECT_EQ(na.nonconforming, 3u);
  for (auto& p : items) p.prediction.reset();
  EXPECT_THROW(pampa_metrics(items), std::invalid_argument);
}

TEST(Pampa, FixtureLoads) {
  const auto items = read_pampa(fixtures::data_path("pampa_20.jsonl").string());
  ASSERT_EQ(items.size(), 20u);
  std::size_t high = 0;
  for (const auto& p : items) high += p.label == PampaLabel::kHigh;
  EXPECT_GT(high, 0u);
  EXPECT_LT(high, 20u);
  EXPECT_EQ(pampa_label_from_name("low_to_moderate"), PampaLabel::kLowToModerate);
  EXPECT_THROW(pampa_label_from_name("medium"), DataError);
}

TEST(MoleculeQa, FirstOptionLetter) {
  EXPECT_EQ(first_option_letter("B", 4), 'B');
  EXPECT_EQ(first_option_letter("The answer is (C).", 4), 'C');
  EXPECT_EQ(first_option_letter("Option D, because", 4), 'D');
  EXPECT_FALSE(first_option_letter("E is not an option", 4));
  EXPECT_FALSE(first_option_letter("ABC", 4));
  EXPECT_FALSE(first_option_letter("none", 4));
}

TEST(MoleculeQa, ScoresPerCategory) {
  const auto items = read_mcq(fixtures::data_path("mcq.jsonl").string());
  ASSERT_EQ(items.size(), 8u);
  std::map<std::string, char> gold;
  for (const auto& q : items) gold[q.question] = q.answer;
  ScriptedResponder oracle([&](const ModelQuery& q) {
    const std::string& user = q.chat.messages.back().text;
    return std::string(1, gold.at(user.substr(0, user.find('\n'))));
  });
  const auto report = moleculeqa_eval(oracle, items, fixtures::corpus());
  EXPECT_EQ(report.overall.correct, 8u);
  EXPECT_EQ(report.categories.size(), 4u);
  ScriptedResponder always_a([](const ModelQuery&) { return std::string("A"); });
  const auto a = moleculeqa_eval(always_a, items, fixtures::corpus());
  std::size_t expected = 0;
  for (const auto& q : items) expected += q.answer == 'A';
  EXPECT_EQ(a.overall.correct, expected);
  EXPECT_EQ(mcq_query(items[0], fixtures::record("benzene")).chat.messages.front().text, prompts::conversation_system());
}

TEST(Selection, FullCorpusAndStability) {
  const auto& corpus = fixtures::corpus();
  const auto all = select_representatives(corpus, static_cast<int>(corpus.size()), 3);
  EXPECT_EQ(ids(all), ids(corpus));
  const auto a = select_representatives(corpus, 7, 11);
  const auto b = select_representatives(corpus, 7, 11);
  ASSERT_EQ(a.size(), 7u);
  std::vector<std::string> ia, ib;
  for (const auto& r : a) ia.push_back(r.id);
  for (const auto& r : b) ib.push_back(r.id);
  EXPECT_EQ(ia, ib);
  EXPECT_EQ(ids(a).size(), 7u);
  EXPECT_THROW(select_representatives(corpus, 0, 1), std::invalid_argument);
  EXPECT_THROW(select_representatives(corpus, static_cast<int>(corpus.size()) + 1, 1), std::invalid_argument);
  EXPECT_THROW(select_representatives({}, 1, 1), DataError);
}
