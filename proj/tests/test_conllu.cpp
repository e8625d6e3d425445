#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mosyn/conllu.hpp"
#include "mosyn/numkern.hpp"

namespace mosyn {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string ap_story() { return read_file(std::string(MOSYN_DATA_DIR) + "/fixtures/ap_story.conllu"); }

std::string line(const std::string& id, const std::string& form, const std::string& feats,
                 const std::string& head, const std::string& deprel) {
  return id + "\t" + form + "\t_\t_\t_\t" + feats + "\t" + head + "\t" + deprel + "\t_\t_\n";
}

TEST(Parse, ApStory) {
  auto corpus = parse_conllu(ap_story());
  ASSERT_EQ(corpus.size(), 1u);
  const auto& s = corpus[0];
  EXPECT_EQ(s.sent_id, "ap-story");
  ASSERT_EQ(s.size(), 7u);
  std::vector<std::string> content;
  for (const auto& t : s.tokens)
    if (t.is_content) content.push_back(t.form);
  EXPECT_EQ(content, (std::vector<std::string>{"AP", "comes", "this", "story"}));
  EXPECT_EQ(s.tokens[2].head, 4);
  EXPECT_EQ(s.tokens[3].head, 0);
  EXPECT_EQ(s.tokens[3].deprel, "root");
  EXPECT_FALSE(s.tokens[0].head.has_value());
  EXPECT_FALSE(s.tokens[6].deprel.has_value());
  EXPECT_EQ(s.tokens[2].feats, (FeatureSet{{"Case", "Abl"}, {"Definite", "Def"}, {"Number", "Sing"}}));
  // spans come from the text comment; ':' is attached to "story"
  EXPECT_EQ(s.tokens[0].span, (CharSpan{0, 4}));
  EXPECT_EQ(s.tokens[6].span, (CharSpan{28, 29}));
}

TEST(Parse, EmptyInput) {
  EXPECT_TRUE(parse_conllu("").empty());
  EXPECT_TRUE(parse_conllu("\n\n").empty());
}

TEST(Parse, AbstractNodeDroppedAcrossSentences) {
  const std::string text = "# sent_id = a\n" + line("1", "Dogs", "Number=Plur", "2", "nsubj") +
                           line("2", "bark", "Mood=Ind", "0", "root") + "\n" +
                           "# sent_id = b\n" + line("1", "Cats", "Number=Plur", "2", "nsubj") +
                           line("2", "sleep", "Mood=Ind", "0", "root") +
                           line("2.1", "_", "Person=3", "2", "obj") +
                           line("3", "there", "PronType=Dem", "2.1", "advmod") + "\n";
  Warnings w;
  auto corpus = parse_conllu(text, &w);
  ASSERT_EQ(corpus.size(), 2u);
  const auto& s = corpus[1];
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.tokens[2].id, 3);
  EXPECT_EQ(s.tokens[2].form, "there");
  EXPECT_EQ(s.tokens[2].head, 2);  // 3 -> 2.1 -> 2
  EXPECT_EQ(s.content_count(), 3u);
  EXPECT_TRUE(w.empty());
}

TEST(Filter, IdentityWithoutAbstractNodes) {
  auto raw = parse_conllu_raw(ap_story());
  auto direct = filter_abstract_nodes(raw[0]);
  EXPECT_EQ(serialize(direct), ap_story().substr(0, ap_story().size() - 1));
}

TEST(Filter, AbstractLeafRemoved) {
  const std::string text = line("1", "Go", "Mood=Imp", "0", "root") + line("1.1", "_", "Person=2", "_", "_");
  auto s = parse_conllu(text);
  ASSERT_EQ(s[0].size(), 1u);
  EXPECT_EQ(s[0].tokens[0].head, 0);
}

TEST(Filter, AbstractChainWithoutHeadWarns) {
  const std::string text = line("1", "Go", "Mood=Imp", "0", "root") + line("1.1", "_", "Person=2", "_", "_") +
                           line("2", "now", "Deg=Pos", "1.1", "advmod");
  Warnings w;
  auto s = parse_conllu(text, &w);
  EXPECT_FALSE(s[0].tokens[1].head.has_value());
  EXPECT_FALSE(w.empty());
}

TEST(Filter, CyclicAbstractChainIsError) {
  const std::string text = line("1", "Go", "Mood=Imp", "0", "root") + line("1.1", "_", "Person=2", "1.2", "x") +
                           line("1.2", "_", "Person=3", "1.1", "x") +
                           line("2", "now", "Deg=Pos", "1.1", "advmod");
  EXPECT_THROW(parse_conllu(text), FormatError);
}

TEST(Parse, Errors) {
  try {
    parse_conllu(line("1", "a", "X=Y", "0", "root") + "2\tb\t_\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_conllu(line("1", "a", "X=Y", "0", "root") + line("3", "b", "X=Y", "1", "dep")),
               FormatError);
  EXPECT_THROW(parse_conllu(line("1", "a", "Broken", "0", "root")), ParseError);
}

TEST(Parse, HeadOnFunctionWordWarnsAndKeeps) {
  const std::string text = line("1", "the", "_", "_", "_") + line("2", "cat", "Number=Sing", "1", "nsubj") +
                           line("3", "sat", "Mood=Ind", "0", "root");
  Warnings w;
  auto s = parse_conllu(text, &w);
  EXPECT_EQ(s[0].tokens[1].head, 1);
  EXPECT_EQ(w.size(), 1u);
}

TEST(Feats, Decompose) {
  EXPECT_EQ(decompose_feats("Case=Abl|Definite=Def|Number=Sing"),
            (FeatureSet{{"Case", "Abl"}, {"Definite", "Def"}, {"Number", "Sing"}}));
  EXPECT_TRUE(decompose_feats("_").empty());
  EXPECT_EQ(decompose_feats("Case=Ine;Atr"), (FeatureSet{{"Case", "Ine"}, {"Case", "Atr"}}));
  EXPECT_EQ(decompose_feats("Gender=Fem,Masc"), (FeatureSet{{"Gender", "Fem"}, {"Gender", "Masc"}}));
  EXPECT_TRUE(decompose_feats("|").empty());
  EXPECT_THROW(decompose_feats("Case"), ParseError);
  EXPECT_THROW(decompose_feats("Case="), ParseError);
}

TEST(Feats, Recompose) {
  EXPECT_EQ(recompose_feats({{"Case", "Atr"}, {"Case", "Ine"}}), "Case=Atr;Ine");
  EXPECT_EQ(recompose_feats({}), "_");
  EXPECT_EQ(recompose_feats({{"Number", "Sing"}}), "Number=Sing");
  EXPECT_EQ(recompose_feats({{"Number", "Sing"}, {"Case", "Gen"}}), "Case=Gen|Number=Sing");
}

TEST(Feats, RoundTripProperty) {
  const std::vector<std::string> classes{"Case", "Number", "Gender", "Tense", "Voice"};
  const std::vector<std::string> values{"Abl", "Atr", "Sing", "Plur", "Fem", "Masc", "Ine"};
  Rng rng(7);
  for (int iter = 0; iter < 500; ++iter) {
    FeatureSet s;
    const int k = static_cast<int>(rng() % 6);
    for (int i = 0; i < k; ++i)
      s.insert({classes[rng() % classes.size()], values[rng() % values.size()]});
    const std::string canon = recompose_feats(s);
    EXPECT_EQ(decompose_feats(canon), s);
    EXPECT_EQ(recompose_feats(decompose_feats(canon)), canon);
  }
}

TEST(Vocab, ApStory) {
  auto vocab = build_feature_vocab(parse_conllu(ap_story()));
  EXPECT_EQ(vocab.feature_count(), 9u);
  EXPECT_EQ(vocab.deprels(), (std::vector<std::string>{"det", "nsubj", "obl", "root"}));
  EXPECT_TRUE(vocab.frozen());
  EXPECT_EQ(vocab.feature_index({"Case", "Abl"}), 0u);
  EXPECT_FALSE(vocab.feature_index({"Case", "Gen"}).has_value());
}

TEST(Vocab, FunctionOnlyCorpusIsError) {
  EXPECT_THROW(build_feature_vocab(parse_conllu(line("1", "the", "_", "_", "_"))), ConfigError);
}

TEST(Vocab, OrderIndependent) {
  const std::string a = line("1", "x", "Case=Gen", "0", "root") + "\n";
  const std::string b = line("1", "y", "Number=Plur|Case=Abl", "0", "nmod") + "\n";
  EXPECT_EQ(build_feature_vocab(parse_conllu(a + b)), build_feature_vocab(parse_conllu(b + a)));
}

TEST(Serialize, RoundTripApStory) {
  const std::string text = ap_story();
  EXPECT_EQ(serialize_corpus(parse_conllu(text)), text);
  EXPECT_EQ(serialize(Sentence{}), "");
}

TEST(Serialize, PreservesGoldValueOrderAndMultiword) {
  const std::string text = "# sent_id = mw\n# text = del mar\n1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n" +
                           line("1", "de", "_", "_", "_") + line("2", "el", "_", "_", "_") +
                           line("3", "mar", "Case=Ine;Atr", "0", "root") + "\n";
  auto corpus = parse_conllu(text);
  EXPECT_EQ(serialize_corpus(corpus), text);
  EXPECT_EQ(serialize_corpus(parse_conllu(serialize_corpus(corpus))), text);
}

TEST(Split, RatiosAndDeterminism) {
  Corpus c;
  for (int i = 0; i < 10; ++i) c.push_back(sentence_from_forms({"w" + std::to_string(i)}, std::to_string(i)));
  auto [a, b] = split_corpus(c, 0.9, 1);
  EXPECT_EQ(a.size(), 9u);
  EXPECT_EQ(b.size(), 1u);
  auto [a2, b2] = split_corpus(c, 0.9, 1);
  EXPECT_EQ(serialize_corpus(a), serialize_corpus(a2));
  EXPECT_EQ(serialize_corpus(b), serialize_corpus(b2));
  std::set<std::string> ids;
  for (const auto& s : a) ids.insert(s.sent_id);
  for (const auto& s : b) ids.insert(s.sent_id);
  EXPECT_EQ(ids.size(), 10u);

  Corpus two(c.begin(), c.begin() + 2);
  auto [x, y] = split_corpus(two, 0.5, 3);
  EXPECT_EQ(x.size(), 1u);
  EXPECT_EQ(y.size(), 1u);
  EXPECT_THROW(split_corpus(c, 1.0, 1), ConfigError);
  EXPECT_THROW(split_corpus(c, 0.0, 1), ConfigError);
  EXPECT_THROW(split_corpus(Corpus(c.begin(), c.begin() + 1), 0.5, 1), ConfigError);
}

TEST(PlainText, OneSentencePerLine) {
  auto c = parse_plain_text("From the AP\n\n comes  this\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[1].forms(), (std::vector<std::string>{"comes", "this"}));
  EXPECT_EQ(c[1].sent_id, "2");
}

}  // namespace
}  // namespace mosyn
