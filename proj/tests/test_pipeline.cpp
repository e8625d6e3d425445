#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mosyn/pipeline.hpp"

namespace mosyn {
namespace {

std::vector<TokenPrediction> labelled(const std::vector<std::pair<int, double>>& rows) {
  std::vector<TokenPrediction> out;
  for (auto [label, conf] : rows) {
    TokenPrediction t;
    t.label = label;
    t.confidence = conf;
    out.push_back(t);
  }
  return out;
}

std::vector<int> labels_of(const std::vector<TokenPrediction>& t) {
  std::vector<int> out;
  for (const auto& x : t) out.push_back(x.label);
  return out;
}

constexpr int C = kContent;
constexpr int F = kFunction;

TEST(Relabel, LowConfidenceFunctionBetweenContent) {
  auto t = labelled({{C, 0.9}, {F, 0.55}, {C, 0.8}});
  relabel_low_confidence(t);
  EXPECT_EQ(labels_of(t), (std::vector<int>{C, C, C}));
  EXPECT_TRUE(t[1].relabeled_by_rule);
}

TEST(Relabel, ConfidentTokenUnchanged) {
  auto t = labelled({{C, 0.9}, {F, 0.7}, {C, 0.8}});
  relabel_low_confidence(t);
  EXPECT_EQ(labels_of(t), (std::vector<int>{C, F, C}));
  auto edge = labelled({{F, 0.6}, {C, 0.9}});
  relabel_low_confidence(edge);
  EXPECT_EQ(labels_of(edge), (std::vector<int>{F, C}));
}

TEST(Relabel, LowConfidenceContentBetweenFunction) {
  auto t = labelled({{F, 0.9}, {C, 0.55}, {F, 0.8}});
  relabel_low_confidence(t);
  EXPECT_EQ(labels_of(t), (std::vector<int>{F, F, F}));
}

TEST(Relabel, SingleLeftToRightPass) {
  // token 1 flips to C, then token 2 sees C on its left and F on its right
  auto t = labelled({{C, 0.9}, {F, 0.5}, {F, 0.5}, {C, 0.9}});
  relabel_low_confidence(t);
  EXPECT_EQ(labels_of(t), (std::vector<int>{C, F, F, C}));
  auto u = labelled({{C, 0.9}, {F, 0.5}, {C, 0.5}, {F, 0.9}});
  relabel_low_confidence(u);
  // token 1 -> C; token 2 now has C left, F right: unchanged
  EXPECT_EQ(labels_of(u), (std::vector<int>{C, C, C, F}));
}

TEST(Relabel, NeverChangesConfidentTokensProperty) {
  Rng rng(12);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> p(2 + rng() % 8);
    for (auto& x : p) x = uniform01(rng);
    auto t = label_tokens(p);
    const auto before = t;
    relabel_low_confidence(t);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (before[i].confidence >= 0.6) {
        EXPECT_EQ(t[i].label, before[i].label);
      }
  }
}

TEST(Labels, ConfidenceIsAssignedLabelProbability) {
  auto t = label_tokens({0.9, 0.2, 0.5});
  EXPECT_EQ(labels_of(t), (std::vector<int>{C, F, C}));
  EXPECT_DOUBLE_EQ(t[1].confidence, 0.8);
  EXPECT_DOUBLE_EQ(t[2].confidence, 0.5);
}

TEST(Fallback, AllFunctionForcesFirstTokenRoot) {
  auto two = labelled({{F, 0.9}, {F, 0.9}});
  EXPECT_TRUE(all_function_fallback(two));
  EXPECT_EQ(two[0].label, C);
  EXPECT_EQ(two[0].head, 0);
  EXPECT_EQ(two[0].deprel, "root");
  EXPECT_TRUE(two[0].forced_fallback);
  EXPECT_EQ(two[1].label, F);

  auto one = labelled({{F, 0.99}});
  EXPECT_TRUE(all_function_fallback(one));
  EXPECT_EQ(one[0].head, 0);

  auto mixed = labelled({{F, 0.9}, {C, 0.9}});
  EXPECT_FALSE(all_function_fallback(mixed));
  EXPECT_EQ(labels_of(mixed), (std::vector<int>{F, C}));
}

ModelConfig tiny() {
  ModelConfig c;
  c.encoder.dim = 8;
  c.encoder.hash_buckets = 256;
  c.shared_dim = 16;
  c.cwi_hidden = 8;
  c.arc_dim = 8;
  c.rel_dim = 4;
  return c;
}

Corpus ap_story() {
  std::ifstream in(std::string(MOSYN_DATA_DIR) + "/fixtures/ap_story.conllu");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_conllu(ss.str());
}

TEST(Predict, FallbackSerializationAndSwitch) {
  const Corpus gold = ap_story();
  JointModel model(tiny(), build_feature_vocab(gold));
  PipelineOptions opt;
  opt.cwi_override = [](const Sentence& s) { return std::vector<double>(s.size(), 0.1); };
  const Sentence in = sentence_from_forms({"of", "the"}, "f");
  const Prediction p = predict_tokens(model, in, opt);
  EXPECT_TRUE(p.tokens[0].forced_fallback);
  const Sentence out = annotate(in, p, opt);
  EXPECT_NE(serialize(out).find("1\tof\t_\t_\t_\t|\t0\troot"), std::string::npos);
  opt.fallback_feats_underscore = true;
  EXPECT_NE(serialize(annotate(in, p, opt)).find("1\tof\t_\t_\t_\t_\t0\troot"), std::string::npos);
}

TEST(Predict, OutputIsWellFormed) {
  const Corpus gold = ap_story();
  JointModel model(tiny(), build_feature_vocab(gold));
  Rng rng(3);
  for (int iter = 0; iter < 20; ++iter) {
    PipelineOptions opt;
    std::vector<double> probs(7);
    for (auto& x : probs) x = uniform01(rng);
    opt.cwi_override = [&](const Sentence&) { return probs; };
    const Corpus pred = predict_corpus(model, gold, opt);
    Warnings w;
    const Corpus back = parse_conllu(serialize_corpus(pred), &w);
    EXPECT_TRUE(w.empty()) << w.front();
    int roots = 0;
    for (const auto& t : back[0].tokens) {
      if (!t.is_content) continue;
      ASSERT_TRUE(t.head.has_value());
      roots += *t.head == 0;
      if (*t.head > 0) {
        EXPECT_TRUE(back[0].tokens[static_cast<std::size_t>(*t.head - 1)].is_content);
      }
    }
    EXPECT_EQ(roots, 1);
  }
}

TEST(Predict, SingleTokenIsRoot) {
  const Corpus gold = ap_story();
  JointModel model(tiny(), build_feature_vocab(gold));
  const Prediction p = predict_tokens(model, sentence_from_forms({"Hello"}, "h"));
  EXPECT_EQ(p.tokens[0].label, C);
  EXPECT_EQ(p.tokens[0].head, 0);
}

TEST(Predict, StubbedCwiChangesParserRows) {
  const Corpus gold = ap_story();
  JointModel model(tiny(), build_feature_vocab(gold));
  PipelineOptions opt;
  std::vector<double> probs{0.1, 0.1, 0.9, 0.9, 0.9, 0.9, 0.1};
  opt.cwi_override = [&](const Sentence&) { return probs; };
  EXPECT_EQ(predict_tokens(model, gold[0], opt).content, (std::vector<int>{2, 3, 4, 5}));
  probs[6] = 0.9;  // flip ':' to content
  EXPECT_EQ(predict_tokens(model, gold[0], opt).content, (std::vector<int>{2, 3, 4, 5, 6}));
}

TEST(Predict, DeterministicAndEmptyInput) {
  const Corpus gold = ap_story();
  JointModel model(tiny(), build_feature_vocab(gold));
  EXPECT_EQ(serialize_corpus(predict_corpus(model, gold)), serialize_corpus(predict_corpus(model, gold)));
  EXPECT_TRUE(predict_corpus(model, Corpus{}).empty());
}

TEST(Predict, ConlluAndPlainTextAgree) {
  const Corpus gold = ap_story();
  JointModel model(tiny(), build_feature_vocab(gold));
  const Corpus text = parse_plain_text("From the AP comes this story :\n");
  const Corpus a = predict_corpus(model, gold);
  const Corpus b = predict_corpus(model, text);
  for (std::size_t i = 0; i < a[0].size(); ++i) {
    EXPECT_EQ(a[0].tokens[i].head, b[0].tokens[i].head);
    EXPECT_EQ(a[0].tokens[i].deprel, b[0].tokens[i].deprel);
    EXPECT_EQ(a[0].tokens[i].feats, b[0].tokens[i].feats);
  }
}

}  // namespace
}  // namespace mosyn
