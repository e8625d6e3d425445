#pragma once

// Inference: CWI, the two label post-processing rules, then tree, relation
// and feature decoding over the predicted content words.

#include <algorithm>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mosyn/conllu.hpp"
#include "mosyn/model.hpp"

namespace mosyn {

struct PipelineOptions {
  double relabel_threshold = 0.6;
  // Forced root FEATS: "|" by default, "_" when set.
  bool fallback_feats_underscore = false;
  // Replaces the CWI head (content probability per token); used by tests.
  std::function<std::vector<double>(const Sentence&)> cwi_override;
};

struct TokenPrediction {
  int label = kFunction;
  double confidence = 0.0;  // probability of `label`
  std::optional<int> head;
  std::optional<std::string> deprel;
  FeatureSet feats;
  bool relabeled_by_rule = false;
  bool forced_fallback = false;
};

struct Prediction {
  std::vector<TokenPrediction> tokens;
  std::vector<int> content;  // 0-based positions handed to the parser
};

// Labels from content probabilities; p = 0.5 counts as content.
inline std::vector<TokenPrediction> label_tokens(const std::vector<double>& p_content) {
  std::vector<TokenPrediction> out(p_content.size());
  for (std::size_t i = 0; i < p_content.size(); ++i) {
    const bool content = p_content[i] >= 0.5;
    out[i].label = content ? kContent : kFunction;
    out[i].confidence = content ? p_content[i] : 1.0 - p_content[i];
  }
  return out;
}

// One left-to-right pass; neighbours are read after earlier flips.
inline void relabel_low_confidence(std::vector<TokenPrediction>& toks, double threshold = 0.6) {
  for (std::size_t i = 1; i + 1 < toks.size(); ++i) {
    const int opposite = 1 - toks[i].label;
    if (toks[i].confidence < threshold && toks[i - 1].label == opposite && toks[i + 1].label == opposite) {
      toks[i].label = opposite;
      toks[i].relabeled_by_rule = true;
    }
  }
}

// Returns true when it fired.
inline bool all_function_fallback(std::vector<TokenPrediction>& toks) {
  if (toks.empty()) return false;
  for (const auto& t : toks)
    if (t.label == kContent) return false;
  toks[0].label = kContent;
  toks[0].head = 0;
  toks[0].deprel = "root";
  toks[0].feats.clear();
  toks[0].forced_fallback = true;
  return true;
}

inline std::vector<int> content_positions(const std::vector<TokenPrediction>& toks) {
  std::vector<int> out;
  for (std::size_t i = 0; i < toks.size(); ++i)
    if (toks[i].label == kContent) out.push_back(static_cast<int>(i));
  return out;
}

inline Prediction predict_tokens(const JointModel& model, const Sentence& s, const PipelineOptions& opt = {},
                                 const Matrix* external = nullptr) {
  Prediction pred;
  if (s.tokens.empty()) return pred;
  const Matrix H = model.shared_representation(s.forms(), external);
  pred.tokens = label_tokens(opt.cwi_override ? opt.cwi_override(s) : model.content_probabilities(H));
  if (pred.tokens.size() != s.size()) throw DimensionError("CWI output does not match token count");
  relabel_low_confidence(pred.tokens, opt.relabel_threshold);
  if (all_function_fallback(pred.tokens)) return pred;
  pred.content = content_positions(pred.tokens);
  const ContentPrediction cp = model.predict_content(H, pred.content);
  const auto& vocab = model.vocab();
  for (std::size_t k = 0; k < pred.content.size(); ++k) {
    TokenPrediction& t = pred.tokens[static_cast<std::size_t>(pred.content[k])];
    const int h = cp.heads[k];
    t.head = h == 0 ? 0 : pred.content[static_cast<std::size_t>(h - 1)] + 1;
    t.deprel = vocab.deprels()[static_cast<std::size_t>(cp.rels[k])];
    for (int f : cp.feats[k]) t.feats.insert(vocab.features()[static_cast<std::size_t>(f)]);
  }
  return pred;
}

// Copies the input sentence and overwrites FEATS, HEAD and DEPREL.
inline Sentence annotate(const Sentence& input, const Prediction& pred, const PipelineOptions& opt = {}) {
  Sentence out = input;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    Token& t = out.tokens[i];
    const TokenPrediction& p = pred.tokens[i];
    t.is_content = p.label == kContent;
    t.head = t.is_content ? p.head : std::nullopt;
    t.deprel = t.is_content ? p.deprel : std::nullopt;
    t.feats = t.is_content ? p.feats : FeatureSet{};
    if (!t.is_content) {
      t.feats_raw = "_";
    } else if (p.forced_fallback) {
      t.feats_raw = opt.fallback_feats_underscore ? "_" : "|";
    } else {
      t.feats_raw = p.feats.empty() ? "|" : recompose_feats(p.feats);
    }
  }
  return out;
}

struct PipelineStats {
  std::size_t sentences = 0;
  std::size_t relabeled = 0;
  std::size_t fallbacks = 0;
};

// Sentences are independent; with threads > 1 they are split into
// contiguous chunks. Output does not depend on the thread count.
inline Corpus predict_corpus(const JointModel& model, const Corpus& input, const PipelineOptions& opt = {},
                             const ExternalEmbeddings* external = nullptr, PipelineStats* stats = nullptr,
                             unsigned threads = 1) {
  if (external) external->check_alignment(input);
  std::vector<Prediction> preds(input.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      preds[i] = predict_tokens(model, input[i], opt, external ? &external->sentence(i) : nullptr);
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(input.size(), 1))));
  if (threads == 1) {
    run(0, input.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (input.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          run(std::min(input.size(), t * chunk), std::min(input.size(), (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  Corpus out;
  out.reserve(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (stats) {
      ++stats->sentences;
      for (const auto& t : preds[i].tokens) {
        stats->relabeled += t.relabeled_by_rule ? 1 : 0;
        stats->fallbacks += t.forced_fallback ? 1 : 0;
      }
    }
    out.push_back(annotate(input[i], preds[i], opt));
  }
  return out;
}

}  // namespace mosyn
