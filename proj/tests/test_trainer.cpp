#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mosyn/trainer.hpp"

namespace mosyn {
namespace {

Corpus load(const std::string& rel) {
  std::ifstream in(std::string(MOSYN_DATA_DIR) + "/" + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_conllu(ss.str());
}

ModelConfig small_model() {
  ModelConfig c;
  c.encoder.dim = 16;
  c.encoder.hash_buckets = 4096;
  c.shared_dim = 32;
  c.cwi_hidden = 16;
  c.arc_dim = 16;
  c.rel_dim = 8;
  return c;
}

TEST(JointLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(joint_loss(1, 1, 1, LossWeights{}), 4.5);
  EXPECT_DOUBLE_EQ(joint_loss(1, 1, 1, preset_weights("turkish")), 5.5);
  EXPECT_DOUBLE_EQ(joint_loss(3, 5, 7, LossWeights{0, 0, 1}), 7.0);
  EXPECT_THROW(joint_loss(NAN, 1, 1, LossWeights{}), NumericError);
  EXPECT_THROW(joint_loss(1, INFINITY, 1, LossWeights{}), NumericError);
}

TEST(JointLoss, Presets) {
  for (const char* name : {"czech", "english", "hebrew", "italian", "polish", "portuguese", "serbian"}) {
    const auto w = preset_weights(name);
    EXPECT_EQ(w.parser, 2.0);
    EXPECT_EQ(w.morph, 1.5);
    EXPECT_EQ(w.cwi, 1.0);
  }
  const auto sv = preset_weights("swedish");
  EXPECT_EQ(sv.cwi, 1.5);
  const auto tr = preset_weights("turkish");
  EXPECT_EQ(tr.morph, 2.0);
  EXPECT_EQ(tr.cwi, 1.5);
  EXPECT_THROW(preset_weights("klingon"), ConfigError);
}

TEST(TrainConfigJson, PresetThenOverrides) {
  auto c = nlohmann::json::parse(R"({"preset": "turkish", "w_cwi": 0.5, "max_epochs": 3})").get<TrainConfig>();
  EXPECT_EQ(c.weights.parser, 2.0);
  EXPECT_EQ(c.weights.morph, 2.0);
  EXPECT_EQ(c.weights.cwi, 0.5);
  EXPECT_EQ(c.max_epochs, 3);
  EXPECT_EQ(c.batch_size, 16);
  TrainConfig bad;
  bad.lr_factor = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.weights = {0, 0, 0};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Schedule, HalvesThenStops) {
  PlateauSchedule s{1, 1e-4};
  using A = PlateauSchedule::Action;
  EXPECT_EQ(s.observe(1.0), A::improved);
  EXPECT_EQ(s.observe(1.0), A::reduce);
  EXPECT_EQ(s.observe(0.99995), A::reduce);  // below min_delta
  EXPECT_EQ(s.observe(1.0), A::stop);

  PlateauSchedule t{2, 1e-4};
  EXPECT_EQ(t.observe(1.0), A::improved);
  EXPECT_EQ(t.observe(1.0), A::wait);
  EXPECT_EQ(t.observe(1.0), A::reduce);
  EXPECT_EQ(t.observe(0.5), A::improved);
  EXPECT_EQ(t.reductions, 0);
}

TEST(Train, EpochCapAndLrHistory) {
  const Corpus c = load("toy/toy.conllu");
  const auto [tr, dev] = split_corpus(c, 0.8, 1);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.lr = 1e-3;
  const auto r = train(tr, dev, small_model(), cfg);
  EXPECT_LE(r.log.stop_epoch, 3);
  ASSERT_FALSE(r.log.epochs.empty());
  for (std::size_t i = 0; i < r.log.epochs.size(); ++i) {
    EXPECT_EQ(r.log.epochs[i].epoch, static_cast<int>(i) + 1);
    EXPECT_TRUE(r.log.epochs[i].dev_las.has_value());
  }
  EXPECT_GE(r.log.best_epoch, 1);
}

TEST(Train, Errors) {
  EXPECT_THROW(train(Corpus{}, Corpus{}, small_model(), TrainConfig{}), ConfigError);
  const Corpus c = load("fixtures/ap_story.conllu");
  TrainConfig cfg;
  cfg.max_epochs = 1;
  const auto r = train(c, Corpus{}, small_model(), cfg);
  bool warned = false;
  for (const auto& w : r.log.warnings) warned = warned || w.find("dev corpus is empty") != std::string::npos;
  EXPECT_TRUE(warned);
}

TEST(Train, SameSeedIsBitIdentical) {
  const Corpus c = load("toy/toy.conllu");
  const auto [tr, dev] = split_corpus(c, 0.8, 2);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 5;
  auto a = train(tr, dev, small_model(), cfg);
  auto b = train(tr, dev, small_model(), cfg);
  std::stringstream sa, sb;
  a.model.save(sa);
  b.model.save(sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(to_json(a.log).dump(), to_json(b.log).dump());
  cfg.seed = 6;
  auto d = train(tr, dev, small_model(), cfg);
  std::stringstream sd;
  d.model.save(sd);
  EXPECT_NE(sa.str(), sd.str());
}

// One epoch on one sentence with a small learning rate lowers its loss.
TEST(Train, GradientFlowDecreasesLoss) {
  const Corpus c = load("fixtures/ap_story.conllu");
  ModelConfig mc = small_model();
  JointModel model(mc, build_feature_vocab(c));
  const auto ex = make_example(c[0], model.vocab());
  const TrainExample* batch[] = {&ex};
  const LossWeights w;
  const double before = joint_loss(model.batch_loss(batch, w, {}, false), w);
  AdamW opt;
  opt.lr = 1e-4;
  zero_grads(model.parameters());
  model.batch_loss(batch, w, {}, true);
  opt.step(model.parameters());
  const double after = joint_loss(model.batch_loss(batch, w, {}, false), w);
  EXPECT_LT(after, before);
}

TEST(Train, GoldContentRowsFeedParser) {
  const Corpus c = load("fixtures/ap_story.conllu");
  const auto vocab = build_feature_vocab(c);
  const auto ex = make_example(c[0], vocab);
  // parser/feature rows are the gold content words only; CWI sees all tokens
  EXPECT_EQ(ex.content, (std::vector<int>{2, 3, 4, 5}));
  EXPECT_EQ(ex.cwi_gold.size(), 7u);
}

TEST(Train, OverfitSingleSentence) {
  const Corpus c = load("fixtures/ap_story.conllu");
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.early_stopping = false;
  cfg.word_dropout = 0.0;
  cfg.dev_metrics = false;
  cfg.lr = 3e-3;
  auto r = train(c, c, small_model(), cfg);
  const Corpus pred = predict_corpus(r.model, c);
  std::vector<int> content;
  for (const auto& t : pred[0].tokens)
    if (t.is_content) content.push_back(t.id);
  EXPECT_EQ(content, (std::vector<int>{3, 4, 5, 6}));
  EXPECT_EQ(pred[0].tokens[2].feats, (FeatureSet{{"Case", "Abl"}, {"Definite", "Def"}, {"Number", "Sing"}}));
  // an oracle-perfect model reproduces the gold annotation
  EXPECT_EQ(serialize_corpus(pred), serialize_corpus(c));
}

TEST(Grid, SingletonTiesAndDeterminism) {
  const Corpus c = load("toy/toy.conllu");
  const auto [tr, dev] = split_corpus(c, 0.8, 3);
  TrainConfig base;
  base.max_epochs = 1;
  base.dev_metrics = false;
  const LossWeights w{2.0, 1.5, 1.0};
  const auto single = grid_search_weights(tr, dev, small_model(), base, {w});
  EXPECT_EQ(single.best_index, 0u);
  EXPECT_EQ(single.best.weights.morph, 1.5);

  const auto twice = grid_search_weights(tr, dev, small_model(), base, {w, w});
  EXPECT_EQ(twice.table[0].dev_mslas, twice.table[1].dev_mslas);
  EXPECT_EQ(twice.best_index, 0u);
  EXPECT_THROW(grid_search_weights(tr, dev, small_model(), base, {}), ConfigError);
}

TEST(Grid, ParseAndDefault) {
  const auto g = parse_grid(nlohmann::json::parse(R"([[2, 1.5, 1], {"w_parser": 1, "w_morph": 2, "w_cwi": 3}])"));
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[1].cwi, 3.0);
  EXPECT_THROW(parse_grid(nlohmann::json::array()), ConfigError);
  EXPECT_EQ(default_grid().size(), 3u);
}

}  // namespace
}  // namespace mosyn
