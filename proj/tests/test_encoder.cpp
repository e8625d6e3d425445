#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mosyn/encoder.hpp"

namespace mosyn {
namespace {

EncoderConfig small_config(int dim = 8, int window = 2) {
  EncoderConfig c;
  c.dim = dim;
  c.hash_buckets = 1024;
  c.window = window;
  return c;
}

TEST(Encoder, DeterministicAndShaped) {
  HashedEncoder a(small_config(), 5), b(small_config(), 5);
  const std::vector<std::string> forms{"From", "the", "AP", "comes"};
  HashedEncoder::Cache cache;
  const Matrix ea = a.encode(forms, cache);
  EXPECT_EQ(ea, b.encode(forms));
  EXPECT_EQ(ea, a.encode(forms));
  const Matrix one = a.encode(std::vector<std::string>{"story"});
  EXPECT_EQ(one.rows(), 1);
  EXPECT_EQ(one.cols(), 8);
  EXPECT_THROW(a.encode(std::vector<std::string>{""}), FormatError);
}

TEST(Encoder, SharedFeaturesGiveIdenticalRows) {
  // differ only in ASCII case past the first letter: same lowercase form,
  // affixes and shape flags
  EXPECT_EQ(token_features("ApPle"), token_features("Apple"));
  HashedEncoder enc(small_config(), 1);
  const Matrix E = enc.encode(std::vector<std::string>{"ApPle", "pear", "Apple"});
  EXPECT_EQ(E.row(0), E.row(2));
  EXPECT_NE(E.row(0), E.row(1));
}

TEST(Encoder, FeatureStrings) {
  const auto f = token_features("Çay");
  // prefixes and suffixes count code points, not bytes
  EXPECT_NE(std::find(f.begin(), f.end(), "p1:Ç"), f.end());
  EXPECT_NE(std::find(f.begin(), f.end(), "s2:ay"), f.end());
  const auto d = token_features("1984");
  EXPECT_NE(std::find(d.begin(), d.end(), "shape:digit"), d.end());
  const auto p = token_features(":");
  EXPECT_NE(std::find(p.begin(), p.end(), "shape:punct"), p.end());
}

TEST(Encoder, LazyTableMatchesInitialRowsAndTrains) {
  HashedEncoder enc(small_config(4, 0), 9);
  HashedEncoder::Cache cache;
  const std::vector<std::string> forms{"cat"};
  const Matrix before = enc.encode(forms, cache);
  const auto buckets = token_buckets("cat", 1024);
  RowVector mean = RowVector::Zero(4);
  for (auto b : buckets) mean += enc.initial_row(b);
  mean /= static_cast<double>(buckets.size());
  EXPECT_LT((before.row(0) - mean).cwiseAbs().maxCoeff(), 1e-15);
  enc.backward(cache, Matrix::Ones(1, 4));
  EXPECT_FALSE(enc.table().touched.empty());
}

TEST(Contextualize, Cases) {
  Matrix H(3, 2);
  H << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(contextualize(H, 0), H);

  const Matrix one = contextualize(H.topRows(1), 2);
  ASSERT_EQ(one.cols(), 10);
  Matrix expect_one = Matrix::Zero(1, 10);
  expect_one(0, 4) = 1;
  expect_one(0, 5) = 2;
  EXPECT_EQ(one, expect_one);

  const Matrix X = contextualize(H, 1);
  Matrix middle(1, 6);
  middle << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(X.row(1), middle.row(0));
  EXPECT_THROW(contextualize(H, -1), ConfigError);
}

TEST(Contextualize, BackwardIsAdjoint) {
  Rng rng(2);
  Matrix H(4, 3), G(4, 15);
  for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = uniform01(rng);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = uniform01(rng);
  // <contextualize(H), G> == <H, contextualize_backward(G)>
  EXPECT_NEAR(contextualize(H, 2).cwiseProduct(G).sum(),
              H.cwiseProduct(contextualize_backward(G, 2, 3)).sum(), 1e-12);
}

TEST(SharedLayer, ZeroInputInferenceAndGradient) {
  SharedLayer layer(6, 4, 0.1);
  SharedLayer::Cache cache;
  EXPECT_EQ(layer.forward(Matrix::Zero(2, 6), nullptr, false, cache), Matrix::Zero(2, 4));
  Rng rng(4);
  layer.dense.init(rng);
  Matrix X(3, 6);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = 2 * uniform01(rng) - 1;
  EXPECT_EQ(layer.forward(X, nullptr, false, cache), layer.forward(X, nullptr, false, cache));
  EXPECT_THROW(layer.forward(Matrix::Zero(1, 5), nullptr, false, cache), DimensionError);

  Matrix P(3, 4);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = 2 * uniform01(rng) - 1;
  Param Xp("X", 3, 6);
  Xp.value = X;
  auto fn = [&] {
    SharedLayer::Cache c;
    Matrix Y = layer.forward(Xp.value, nullptr, false, c);
    Xp.grad += layer.backward(c, P);
    return Y.cwiseProduct(P).sum();
  };
  auto res = grad_check(fn, {&layer.dense.W, &layer.dense.b, &Xp});
  EXPECT_LE(res.max_rel_error, 1e-6) << res.worst_param;
}

TEST(ExternalEmbeddings, ParseAndAlign) {
  std::string text;
  for (int s = 0; s < 2; ++s) {
    for (int t = 0; t < 2 + s; ++t) {
      text += "tok" + std::to_string(t) + "\t";
      for (int k = 0; k < 8; ++k) text += std::to_string(0.25 * k + s) + (k == 7 ? "\n" : " ");
    }
    text += "\n";
  }
  auto emb = ExternalEmbeddings::parse(text);
  EXPECT_EQ(emb.dim(), 8);
  ASSERT_EQ(emb.size(), 2u);
  EXPECT_EQ(emb.sentence(1).rows(), 3);
  EXPECT_DOUBLE_EQ(emb.sentence(1)(2, 3), 1.75);

  Corpus corpus{sentence_from_forms({"a", "b"}, "1"), sentence_from_forms({"a", "b", "c"}, "2")};
  EXPECT_NO_THROW(emb.check_alignment(corpus));
  corpus[1] = sentence_from_forms({"a"}, "2");
  EXPECT_THROW(emb.check_alignment(corpus), AlignmentError);

  EXPECT_THROW(ExternalEmbeddings::parse(""), FormatError);
  EXPECT_THROW(ExternalEmbeddings::parse("a\t1 2\nb\t1\n"), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "mosyn_emb_test.txt";
  std::ofstream(path) << text;
  EXPECT_EQ(ExternalEmbeddings::load(path.string()).size(), 2u);
  std::filesystem::remove(path);
  EXPECT_THROW(ExternalEmbeddings::load("/nonexistent/emb.txt"), FormatError);
}

}  // namespace
}  // namespace mosyn
