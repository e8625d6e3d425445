#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mosyn/eval.hpp"
#include "mosyn/numkern.hpp"

namespace mosyn {
namespace {

std::string fixture(const std::string& rel) {
  std::ifstream in(std::string(MOSYN_DATA_DIR) + "/" + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Corpus load(const std::string& rel) { return parse_conllu(fixture(rel)); }

Sentence with_forms(const std::vector<std::string>& forms) { return sentence_from_forms(forms, "x"); }

TEST(Align, IdenticalSplitAndEmpty) {
  const Sentence a = with_forms({"I", "cannot", "go"});
  EXPECT_EQ(align_tokens(a, a).pairs.size(), 3u);

  const Sentence split = with_forms({"I", "can", "not", "go"});
  const Alignment al = align_tokens(split, a);
  EXPECT_EQ(al.pairs, (std::vector<std::pair<int, int>>{{0, 0}, {3, 2}}));
  EXPECT_EQ(al.unmatched_gold, (std::vector<int>{1, 2}));
  EXPECT_EQ(al.unmatched_system, (std::vector<int>{1}));

  const Alignment empty = align_tokens(a, Sentence{});
  EXPECT_TRUE(empty.pairs.empty());
  EXPECT_EQ(empty.unmatched_gold.size(), 3u);

  EXPECT_THROW(align_tokens(a, with_forms({"I", "cannot", "run"})), EvalError);
}

TEST(Metrics, SelfEvaluationIsPerfect) {
  for (const char* f : {"fixtures/ap_story.conllu", "fixtures/eval/gold_mslas.conllu", "fixtures/analysis/gold.conllu",
                        "toy/toy.conllu"}) {
    const Corpus c = load(f);
    const auto r = evaluate(c, c);
    for (const Score* s : {&r.las, &r.feats, &r.mslas}) {
      EXPECT_DOUBLE_EQ(s->p, 100.0) << f;
      EXPECT_DOUBLE_EQ(s->r, 100.0) << f;
      EXPECT_DOUBLE_EQ(s->f1, 100.0) << f;
    }
  }
}

TEST(Metrics, LasThreeOfFour) {
  const auto r = evaluate(load("fixtures/ap_story.conllu"), load("fixtures/eval/sys_las.conllu"));
  EXPECT_EQ(r.las.counts.tp, 3u);
  EXPECT_DOUBLE_EQ(round1(r.las.p), 75.0);
  EXPECT_DOUBLE_EQ(round1(r.las.r), 75.0);
  EXPECT_DOUBLE_EQ(round1(r.las.f1), 75.0);
  EXPECT_DOUBLE_EQ(r.feats.f1, 100.0);
}

TEST(Metrics, FeatsMissingOneAtom) {
  const Corpus gold = load("fixtures/ap_story.conllu");
  const Corpus sys = load("fixtures/eval/sys_feats.conllu");
  // only the AP token differs: TP=2, FN=1 there
  const auto c = count_sentence(gold[0], sys[0]);
  EXPECT_EQ(c.feats.tp, 10u);
  EXPECT_EQ(c.feats.fn, 1u);
  EXPECT_EQ(c.feats.fp, 0u);
  const auto r = evaluate(gold, sys);
  EXPECT_DOUBLE_EQ(round1(r.feats.p), 100.0);
  EXPECT_DOUBLE_EQ(round1(r.feats.r), 90.9);   // 10/11
  EXPECT_DOUBLE_EQ(round1(r.feats.f1), 95.2);  // 20/21
}

TEST(Metrics, MslasHalf) {
  const auto r = evaluate(load("fixtures/eval/gold_mslas.conllu"), load("fixtures/eval/sys_mslas.conllu"));
  EXPECT_EQ(r.mslas.counts.tp, 3u);
  EXPECT_EQ(r.mslas.counts.fp, 3u);
  EXPECT_EQ(r.mslas.counts.fn, 3u);
  EXPECT_DOUBLE_EQ(round1(r.mslas.p), 50.0);
  EXPECT_DOUBLE_EQ(round1(r.mslas.r), 50.0);
  EXPECT_DOUBLE_EQ(r.feats.f1, 100.0);
}

TEST(Metrics, SetSemanticsAndCwiErrors) {
  const std::string head = "# sent_id = s\n";
  auto tok = [](const std::string& id, const std::string& form, const std::string& feats, const std::string& h,
                const std::string& rel) {
    return id + "\t" + form + "\t_\t_\t_\t" + feats + "\t" + h + "\t" + rel + "\t_\t_\n";
  };
  const Corpus gold = parse_conllu(head + tok("1", "in", "_", "_", "_") + tok("2", "sea", "Case=Atr;Ine", "0", "root"));
  const Corpus same = parse_conllu(head + tok("1", "in", "_", "_", "_") + tok("2", "sea", "Case=Ine;Atr", "0", "root"));
  EXPECT_DOUBLE_EQ(evaluate(gold, same).feats.f1, 100.0);

  // a gold function word labelled content is a false positive only
  const Corpus fp = parse_conllu(head + tok("1", "in", "Case=Ine", "2", "case") + tok("2", "sea", "Case=Atr;Ine", "0", "root"));
  const auto r = evaluate(gold, fp);
  EXPECT_DOUBLE_EQ(r.las.r, 100.0);
  EXPECT_DOUBLE_EQ(r.las.p, 50.0);
}

TEST(Metrics, AllHeadsWrongGivesZeroMslas) {
  const Corpus gold = load("fixtures/ap_story.conllu");
  Corpus sys = gold;
  // every content word gets a different head than in gold
  for (auto& t : sys[0].tokens) {
    if (!t.is_content) continue;
    if (t.id == 3) t.head = 5;
    if (t.id == 4) t.head = 6;
    if (t.id == 5) t.head = 3;
    if (t.id == 6) t.head = 0;
  }
  const auto r = evaluate(gold, sys);
  EXPECT_DOUBLE_EQ(r.mslas.f1, 0.0);
  EXPECT_DOUBLE_EQ(r.feats.f1, 100.0);
}

TEST(Metrics, CountMismatchListsIds) {
  const Corpus gold = load("toy/toy.conllu");
  const Corpus sys(gold.begin(), gold.begin() + 3);
  try {
    evaluate(gold, sys);
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_NE(std::string(e.what()).find("toy-50"), std::string::npos);
  }
}

TEST(Metrics, SentenceOrderInvariance) {
  const Corpus gold = load("toy/toy.conllu");
  Corpus sys = gold;
  sys[0].tokens[2].deprel = "nmod";
  Corpus shuffled = sys;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto a = evaluate(gold, sys);
  const auto b = evaluate(gold, shuffled);
  EXPECT_EQ(a.las.counts.tp, b.las.counts.tp);
  EXPECT_EQ(a.mslas.counts.tp, b.mslas.counts.tp);
}

// Random perturbations of heads, labels, features and CWI labels.
Corpus perturb(const Corpus& gold, Rng& rng) {
  static const std::vector<std::string> rels{"nsubj", "obj", "obl", "nmod", "amod", "det", "root"};
  static const std::vector<AtomicFeature> extra{{"Case", "Gen"}, {"Number", "Plur"}, {"Definite", "Def"}};
  Corpus sys = gold;
  for (auto& s : sys) {
    for (auto& t : s.tokens) {
      const double u = uniform01(rng);
      if (u < 0.1) {
        t.is_content = !t.is_content;
        if (t.is_content) {
          t.head = 0;
          t.deprel = "root";
        } else {
          t.head.reset();
          t.deprel.reset();
          t.feats.clear();
        }
      }
      if (!t.is_content) continue;
      if (uniform01(rng) < 0.2) t.head = static_cast<int>(rng() % (s.size() + 1));
      if (uniform01(rng) < 0.2) t.deprel = rels[rng() % rels.size()];
      if (uniform01(rng) < 0.3 && !t.feats.empty()) t.feats.erase(t.feats.begin());
      if (uniform01(rng) < 0.3) t.feats.insert(extra[rng() % extra.size()]);
    }
  }
  return sys;
}

TEST(Metrics, MslasNeverExceedsFeats) {
  const Corpus gold = load("toy/toy.conllu");
  Rng rng(17);
  for (int iter = 0; iter < 100; ++iter) {
    const auto r = evaluate(gold, perturb(gold, rng));
    EXPECT_LE(r.mslas.f1, r.feats.f1 + 1e-12);
    EXPECT_LE(r.mslas.counts.tp, r.feats.counts.tp);
  }
}

TEST(Report, JsonAndTable) {
  const auto r = evaluate(load("fixtures/ap_story.conllu"), load("fixtures/eval/sys_las.conllu"));
  const auto j = to_json(r);
  EXPECT_DOUBLE_EQ(j["las"]["f1"].get<double>(), 75.0);
  EXPECT_EQ(j["las"]["tp"].get<int>(), 3);
  const std::string table = format_report(r);
  EXPECT_NE(table.find("75.0"), std::string::npos);
  EXPECT_NE(table.find("MSLAS"), std::string::npos);
}

TEST(Score, ZeroDenominators) {
  EXPECT_DOUBLE_EQ(Score::from({}).f1, 100.0);
  EXPECT_DOUBLE_EQ(Score::from({0, 0, 3}).f1, 0.0);
  EXPECT_DOUBLE_EQ(Score::from({0, 2, 0}).p, 0.0);
}

}  // namespace
}  // namespace mosyn
