#pragma once

// Joint model: encoder -> context window -> shared layer -> {CWI, parser,
// features}. Training losses for the parser and feature heads are computed
// over gold content rows only; inference uses whatever content set the
// caller supplies (normally the CWI prediction).

#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosyn/conllu.hpp"
#include "mosyn/decoders.hpp"
#include "mosyn/encoder.hpp"
#include "mosyn/numkern.hpp"
#include "mosyn/treecrf.hpp"

namespace mosyn {

struct ModelConfig {
  EncoderConfig encoder;
  int shared_dim = 512;
  double shared_dropout = 0.1;
  int cwi_hidden = 256;
  double cwi_dropout = 0.5;
  int arc_dim = 256;
  int rel_dim = 128;
  double feats_threshold = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    encoder.validate();
    if (shared_dim <= 0 || cwi_hidden <= 0 || arc_dim <= 0 || rel_dim <= 0)
      throw ConfigError("layer widths must be positive");
    check_rate(shared_dropout);
    check_rate(cwi_dropout);
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"dim", c.encoder.dim},
       {"hash_buckets", c.encoder.hash_buckets},
       {"window", c.encoder.window},
       {"provider", c.encoder.provider == EncoderProvider::hashed_features ? "hashed_features" : "external_file"},
       {"shared_dim", c.shared_dim},
       {"shared_dropout", c.shared_dropout},
       {"cwi_hidden", c.cwi_hidden},
       {"cwi_dropout", c.cwi_dropout},
       {"arc_dim", c.arc_dim},
       {"rel_dim", c.rel_dim},
       {"feats_threshold", c.feats_threshold},
       {"seed", c.seed}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoder.dim = j.value("dim", c.encoder.dim);
  c.encoder.hash_buckets = j.value("hash_buckets", c.encoder.hash_buckets);
  c.encoder.window = j.value("window", c.encoder.window);
  const std::string provider = j.value("provider", std::string("hashed_features"));
  if (provider == "hashed_features") {
    c.encoder.provider = EncoderProvider::hashed_features;
  } else if (provider == "external_file") {
    c.encoder.provider = EncoderProvider::external_file;
  } else {
    throw ConfigError("unknown encoder provider '" + provider + "'");
  }
  c.shared_dim = j.value("shared_dim", c.shared_dim);
  c.shared_dropout = j.value("shared_dropout", c.shared_dropout);
  c.cwi_hidden = j.value("cwi_hidden", c.cwi_hidden);
  c.cwi_dropout = j.value("cwi_dropout", c.cwi_dropout);
  c.arc_dim = j.value("arc_dim", c.arc_dim);
  c.rel_dim = j.value("rel_dim", c.rel_dim);
  c.feats_threshold = j.value("feats_threshold", c.feats_threshold);
  c.seed = j.value("seed", c.seed);
}

struct LossWeights {
  double parser = 2.0;
  double morph = 1.5;
  double cwi = 1.0;
};

struct LossBreakdown {
  double parser = 0.0;
  double morph = 0.0;
  double cwi = 0.0;
};

// A gold sentence prepared for training.
struct TrainExample {
  std::vector<std::string> forms;
  const Matrix* external = nullptr;
  std::vector<int> cwi_gold;              // per token: kContent / kFunction
  std::vector<int> content;               // token positions (0-based) of gold content words
  Heads heads;                            // content-local: 0 root, k = content[k-1]
  std::vector<int> rels;                  // deprel index per content word
  std::vector<std::vector<int>> feats;    // vocabulary indices per content word
  bool parse_ok = false;                  // gold tree usable for the parser loss
  std::size_t unknown_features = 0;
};

inline TrainExample make_example(const Sentence& s, const FeatureVocabulary& vocab,
                                 Warnings* warnings = nullptr) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back("sentence '" + s.sent_id + "': " + msg);
  };
  TrainExample ex;
  ex.forms = s.forms();
  std::vector<int> local(s.size() + 1, -1);
  local[0] = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Token& t = s.tokens[i];
    ex.cwi_gold.push_back(t.is_content ? kContent : kFunction);
    if (t.is_content) {
      ex.content.push_back(static_cast<int>(i));
      local[i + 1] = static_cast<int>(ex.content.size());
    }
  }
  ex.parse_ok = !ex.content.empty();
  for (int pos : ex.content) {
    const Token& t = s.tokens[static_cast<std::size_t>(pos)];
    int h = -1;
    if (t.head && *t.head >= 0 && *t.head <= static_cast<int>(s.size())) h = local[static_cast<std::size_t>(*t.head)];
    if (h < 0) ex.parse_ok = false;
    ex.heads.push_back(h);
    std::optional<std::size_t> rel = t.deprel ? vocab.deprel_index(*t.deprel) : std::nullopt;
    if (!rel) ex.parse_ok = false;
    ex.rels.push_back(rel ? static_cast<int>(*rel) : -1);
    std::vector<int> f;
    for (const auto& a : t.feats) {
      if (auto k = vocab.feature_index(a)) {
        f.push_back(static_cast<int>(*k));
      } else {
        ++ex.unknown_features;
      }
    }
    ex.feats.push_back(std::move(f));
  }
  if (!ex.content.empty() && ex.parse_ok && !is_projective_tree(ex.heads)) {
    ex.parse_ok = false;
    warn("gold tree is not single-root projective; no parser loss");
  } else if (!ex.content.empty() && !ex.parse_ok) {
    warn("incomplete gold tree over content words; no parser loss");
  }
  return ex;
}

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;
  double word_dropout = 0.0;
};

// Parser and feature output for one sentence's content rows.
struct ContentPrediction {
  Heads heads;                          // content-local
  std::vector<int> rels;
  std::vector<std::vector<int>> feats;  // vocabulary indices
};

class JointModel {
 public:
  JointModel() = default;
  JointModel(const ModelConfig& cfg, FeatureVocabulary vocab)
      : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    if (vocab_.deprel_count() == 0) throw ConfigError("vocabulary has no dependency relations");
    encoder_ = HashedEncoder(cfg_.encoder, cfg_.seed);
    shared_ = SharedLayer(cfg_.encoder.context_dim(), cfg_.shared_dim, cfg_.shared_dropout);
    cwi_ = CwiHead(cfg_.shared_dim, cfg_.cwi_hidden, cfg_.cwi_dropout);
    parser_ = BiaffineHead(cfg_.shared_dim, cfg_.arc_dim, cfg_.rel_dim,
                           static_cast<Eigen::Index>(vocab_.deprel_count()));
    feats_ = FeatsHead(cfg_.shared_dim, static_cast<Eigen::Index>(vocab_.feature_count()));
    feats_.threshold = cfg_.feats_threshold;
    Rng rng(cfg_.seed);
    shared_.dense.init(rng);
    cwi_.hidden.init(rng);
    cwi_.out.init(rng);
    parser_.init(rng);
    feats_.out.init(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const FeatureVocabulary& vocab() const { return vocab_; }
  HashedEncoder& encoder() { return encoder_; }
  const HashedEncoder& encoder() const { return encoder_; }
  SharedLayer& shared() { return shared_; }
  CwiHead& cwi() { return cwi_; }
  const CwiHead& cwi() const { return cwi_; }
  BiaffineHead& parser() { return parser_; }
  FeatsHead& feats() { return feats_; }

  // Shared-layer forward passes made by batch_loss (instrumentation).
  std::size_t shared_forward_count() const { return shared_forwards_; }

  ParamList parameters() {
    ParamList out;
    if (cfg_.encoder.provider == EncoderProvider::hashed_features) out.push_back(&encoder_.table());
    for (Param* p : shared_.params()) out.push_back(p);
    for (Param* p : cwi_.params()) out.push_back(p);
    for (Param* p : parser_.params()) out.push_back(p);
    for (Param* p : feats_.params()) out.push_back(p);
    return out;
  }

  // Component losses over a batch, each normalized by its own unit count
  // (tokens for CWI, content words for features, parseable content words for
  // the parser). With `backprop`, weighted gradients are accumulated.
  LossBreakdown batch_loss(std::span<const TrainExample* const> batch, const LossWeights& w,
                           const ForwardOptions& opt, bool backprop) {
    double n_tokens = 0, n_content = 0, n_parse = 0;
    for (const TrainExample* ex : batch) {
      n_tokens += static_cast<double>(ex->forms.size());
      n_content += static_cast<double>(ex->content.size());
      if (ex->parse_ok) n_parse += static_cast<double>(ex->content.size());
    }
    LossBreakdown total;
    for (const TrainExample* ex : batch) {
      if (ex->forms.empty()) continue;
      HashedEncoder::Cache enc_cache;
      const Matrix E = embed(*ex, backprop ? &enc_cache : nullptr);
      const Matrix X = contextualize(E, cfg_.encoder.window);
      SharedLayer::Cache shared_cache;
      const Matrix Hs = shared_.forward(X, opt.rng, opt.training, shared_cache);
      ++shared_forwards_;
      Matrix dHs = Matrix::Zero(Hs.rows(), Hs.cols());

      CwiHead::Cache cwi_cache;
      const Matrix cwi_logits = cwi_.forward(Hs, opt.word_dropout, opt.rng, opt.training, cwi_cache);
      auto cl = cwi_loss(cwi_logits, ex->cwi_gold, cwi_.class_weights, n_tokens);
      total.cwi += cl.loss;
      if (backprop && w.cwi != 0.0) dHs += cwi_.backward(cwi_cache, cl.dlogits * w.cwi);

      const auto m = static_cast<Eigen::Index>(ex->content.size());
      if (m > 0) {
        Matrix Hc(m, Hs.cols());
        for (Eigen::Index k = 0; k < m; ++k) Hc.row(k) = Hs.row(ex->content[static_cast<std::size_t>(k)]);
        Matrix dHc = Matrix::Zero(m, Hs.cols());

        const Matrix fl = feats_.forward(Hc);
        auto ml = feats_loss(fl, ex->feats, n_content);
        total.morph += ml.loss;
        if (backprop && w.morph != 0.0) dHc += feats_.backward(Hc, ml.dlogits * w.morph);

        if (ex->parse_ok) {
          BiaffineHead::ArcCache arc_cache;
          const ArcScores S = parser_.arc_scores(Hc, arc_cache);
          auto crf = crf_nll_and_grad(S, ex->heads);
          BiaffineHead::RelCache rel_cache;
          const Matrix rl = parser_.rel_logits(Hc, ex->heads, rel_cache);
          HeadLoss rel;
          rel.dlogits.resize(rl.rows(), rl.cols());
          for (Eigen::Index k = 0; k < m; ++k) {
            auto r = weighted_softmax_ce(rl.row(k), ex->rels[static_cast<std::size_t>(k)], {});
            rel.loss += r.loss;
            rel.dlogits.row(k) = r.dlogits;
          }
          total.parser += (crf.loss + rel.loss) / n_parse;
          if (backprop && w.parser != 0.0) {
            const double scale = w.parser / n_parse;
            dHc += parser_.arc_backward(arc_cache, crf.dS * scale);
            dHc += parser_.rel_backward(rel_cache, rel.dlogits * scale);
          }
        }
        for (Eigen::Index k = 0; k < m; ++k) dHs.row(ex->content[static_cast<std::size_t>(k)]) += dHc.row(k);
      }

      if (backprop) {
        const Matrix dX = shared_.backward(shared_cache, dHs);
        if (!ex->external && cfg_.encoder.provider == EncoderProvider::hashed_features)
          encoder_.backward(enc_cache, contextualize_backward(dX, cfg_.encoder.window, cfg_.encoder.dim));
      }
    }
    return total;
  }

  // Shared representation for inference.
  Matrix shared_representation(const std::vector<std::string>& forms, const Matrix* external) const {
    Matrix E = external ? *external : encoder_.encode(forms);
    check_external(E, forms.size());
    SharedLayer::Cache cache;
    return shared_.forward(contextualize(E, cfg_.encoder.window), nullptr, false, cache);
  }

  // Probability of "content" per token.
  std::vector<double> content_probabilities(const Matrix& Hs) const {
    CwiHead::Cache cache;
    const Matrix p = softmax_rows(cwi_.forward(Hs, 0.0, nullptr, false, cache));
    std::vector<double> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = p(i, kContent);
    return out;
  }

  // Decodes a tree, relations and features over the given content positions.
  ContentPrediction predict_content(const Matrix& Hs, const std::vector<int>& content) const {
    ContentPrediction out;
    const auto m = static_cast<Eigen::Index>(content.size());
    if (m == 0) return out;
    Matrix Hc(m, Hs.cols());
    for (Eigen::Index k = 0; k < m; ++k) Hc.row(k) = Hs.row(content[static_cast<std::size_t>(k)]);
    BiaffineHead::ArcCache arc_cache;
    out.heads = viterbi_decode(parser_.arc_scores(Hc, arc_cache));
    BiaffineHead::RelCache rel_cache;
    const Matrix rl = parser_.rel_logits(Hc, out.heads, rel_cache);
    for (Eigen::Index k = 0; k < m; ++k) {
      Eigen::Index best = 0;
      rl.row(k).maxCoeff(&best);
      out.rels.push_back(static_cast<int>(best));
    }
    const Matrix probs = FeatsHead::probabilities(feats_.forward(Hc));
    for (Eigen::Index k = 0; k < m; ++k) out.feats.push_back(feats_.predict(probs.row(k)));
    return out;
  }

  // Checkpoint: a text header, the configuration and vocabulary as one JSON
  // line, then every tensor as `tensor <name> <rows> <cols>` followed by its
  // values in hexadecimal floating point (exact round trip).
  void save(std::ostream& out) {
    nlohmann::json meta;
    meta["model"] = cfg_;
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : vocab_.features()) feats.push_back({f.cls, f.value});
    meta["features"] = feats;
    meta["deprels"] = vocab_.deprels();
    meta["cwi_class_weights"] = {cwi_.class_weights[0], cwi_.class_weights[1]};
    out << "mosyn-checkpoint 1\n" << meta.dump() << "\n";
    const auto& buckets = encoder_.materialized_buckets();
    out << "buckets " << buckets.size() << "\n";
    for (std::size_t i = 0; i < buckets.size(); ++i) out << buckets[i] << (i + 1 == buckets.size() ? "" : " ");
    out << "\n";
    write_tensor(out, encoder_.table());
    for (Param* p : parameters())
      if (p != &encoder_.table()) write_tensor(out, *p);
  }

  static JointModel load(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != "mosyn-checkpoint 1") throw FormatError("not a mosyn checkpoint (bad header)");
    std::string meta_line;
    std::getline(in, meta_line);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(meta_line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    std::vector<AtomicFeature> features;
    for (const auto& f : meta.at("features")) features.push_back({f.at(0).get<std::string>(), f.at(1).get<std::string>()});
    JointModel model(meta.at("model").get<ModelConfig>(),
                     FeatureVocabulary(std::move(features), meta.at("deprels").get<std::vector<std::string>>()));
    model.cwi_.class_weights = {meta.at("cwi_class_weights").at(0).get<double>(),
                                meta.at("cwi_class_weights").at(1).get<double>()};
    std::string word;
    std::size_t count = 0;
    if (!(in >> word >> count) || word != "buckets") throw FormatError("checkpoint: missing bucket list");
    std::vector<std::uint32_t> buckets(count);
    for (auto& b : buckets)
      if (!(in >> b)) throw FormatError("checkpoint: truncated bucket list");
    Param table("encoder.buckets", 0, 0);
    read_tensor(in, table, static_cast<Eigen::Index>(count), model.cfg_.encoder.dim);
    model.encoder_.restore(buckets, table.value);
    for (Param* p : model.parameters()) {
      if (p == &model.encoder_.table()) continue;
      read_tensor(in, *p, p->value.rows(), p->value.cols());
    }
    return model;
  }

 private:
  Matrix embed(const TrainExample& ex, HashedEncoder::Cache* cache) {
    if (ex.external) {
      check_external(*ex.external, ex.forms.size());
      return *ex.external;
    }
    if (cfg_.encoder.provider == EncoderProvider::external_file)
      throw ConfigError("model expects external embeddings but none were supplied");
    return cache ? encoder_.encode(ex.forms, *cache) : static_cast<const HashedEncoder&>(encoder_).encode(ex.forms);
  }

  void check_external(const Matrix& E, std::size_t n) const {
    if (E.rows() != static_cast<Eigen::Index>(n))
      throw AlignmentError("embedding rows (" + std::to_string(E.rows()) + ") do not match token count (" +
                           std::to_string(n) + ")");
    if (E.cols() != cfg_.encoder.dim)
      throw DimensionError("embedding width " + std::to_string(E.cols()) + " does not match encoder dim " +
                           std::to_string(cfg_.encoder.dim));
  }

  static void write_tensor(std::ostream& out, const Param& p) {
    out << "tensor " << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
    char buf[64];
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", p.value(r, c));
        out << buf << (c + 1 == p.value.cols() ? "" : " ");
      }
      out << "\n";
    }
  }

  static void read_tensor(std::istream& in, Param& p, Eigen::Index rows, Eigen::Index cols) {
    std::string word, name;
    Eigen::Index r = 0, c = 0;
    if (!(in >> word >> name >> r >> c) || word != "tensor") throw FormatError("checkpoint: expected tensor header");
    if (!p.name.empty() && name != p.name)
      throw FormatError("checkpoint: expected tensor '" + p.name + "', found '" + name + "'");
    if (r != rows || c != cols)
      throw FormatError("checkpoint: tensor '" + name + "' is " + std::to_string(r) + "x" + std::to_string(c) +
                        ", model expects " + std::to_string(rows) + "x" + std::to_string(cols));
    Matrix value(r, c);
    std::string tok;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      if (!(in >> tok)) throw FormatError("checkpoint: truncated tensor '" + name + "'");
      char* end = nullptr;
      value.data()[i] = std::strtod(tok.c_str(), &end);
      if (*end != '\0') throw FormatError("checkpoint: bad number in tensor '" + name + "'");
    }
    p.value = std::move(value);
  }

  ModelConfig cfg_;
  FeatureVocabulary vocab_;
  HashedEncoder encoder_;
  SharedLayer shared_;
  CwiHead cwi_;
  BiaffineHead parser_;
  FeatsHead feats_;
  std::size_t shared_forwards_ = 0;
};

}  // namespace mosyn
