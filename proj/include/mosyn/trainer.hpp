#pragma once

// Joint training loop, learning-rate schedule, early stopping and the
// loss-weight grid search.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosyn/conllu.hpp"
#include "mosyn/eval.hpp"
#include "mosyn/model.hpp"
#include "mosyn/pipeline.hpp"

namespace mosyn {

struct TrainConfig {
  LossWeights weights;
  double lr = 1e-3;
  int batch_size = 16;
  int max_epochs = 25;
  int patience = 1;
  double lr_factor = 0.5;
  std::uint64_t seed = 1;
  double word_dropout = 0.05;
  double weight_decay = 0.01;
  // Off: constant learning rate, no early stop, final parameters returned.
  bool early_stopping = true;
  double min_delta = 1e-4;
  bool dev_metrics = true;

  void validate() const {
    const auto& w = weights;
    if (!(w.parser >= 0 && w.morph >= 0 && w.cwi >= 0)) throw ConfigError("loss weights must be non-negative");
    if (w.parser == 0 && w.morph == 0 && w.cwi == 0) throw ConfigError("at least one loss weight must be positive");
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (patience < 0) throw ConfigError("patience must be non-negative");
    if (!(lr_factor > 0 && lr_factor < 1)) throw ConfigError("lr_factor must lie in (0, 1)");
    check_rate(word_dropout);
  }
};

inline const std::map<std::string, LossWeights>& weight_presets() {
  static const std::map<std::string, LossWeights> presets{
      {"czech", {2.0, 1.5, 1.0}},      {"english", {2.0, 1.5, 1.0}}, {"hebrew", {2.0, 1.5, 1.0}},
      {"italian", {2.0, 1.5, 1.0}},    {"polish", {2.0, 1.5, 1.0}},  {"portuguese", {2.0, 1.5, 1.0}},
      {"serbian", {2.0, 1.5, 1.0}},    {"swedish", {2.0, 1.5, 1.5}}, {"turkish", {2.0, 2.0, 1.5}},
  };
  return presets;
}

inline LossWeights preset_weights(const std::string& name) {
  auto it = weight_presets().find(name);
  if (it == weight_presets().end()) {
    std::string known;
    for (const auto& [k, v] : weight_presets()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

inline double joint_loss(double l_parser, double l_morph, double l_cwi, const LossWeights& w) {
  if (!std::isfinite(l_parser) || !std::isfinite(l_morph) || !std::isfinite(l_cwi)) {
    std::ostringstream msg;
    msg << "non-finite component loss: parser=" << l_parser << " morph=" << l_morph << " cwi=" << l_cwi;
    throw NumericError(msg.str());
  }
  return w.parser * l_parser + w.morph * l_morph + w.cwi * l_cwi;
}

inline double joint_loss(const LossBreakdown& l, const LossWeights& w) {
  return joint_loss(l.parser, l.morph, l.cwi, w);
}

// Missing keys keep their defaults; `preset` sets the weights before any
// explicit w_* keys are applied.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (j.contains("preset")) c.weights = preset_weights(j.at("preset").get<std::string>());
  c.weights.parser = j.value("w_parser", c.weights.parser);
  c.weights.morph = j.value("w_morph", c.weights.morph);
  c.weights.cwi = j.value("w_cwi", c.weights.cwi);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.lr_factor = j.value("lr_factor", c.lr_factor);
  c.seed = j.value("seed", c.seed);
  c.word_dropout = j.value("word_dropout", c.word_dropout);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.early_stopping = j.value("early_stopping", c.early_stopping);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.dev_metrics = j.value("dev_metrics", c.dev_metrics);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"w_parser", c.weights.parser}, {"w_morph", c.weights.morph},   {"w_cwi", c.weights.cwi},
       {"lr", c.lr},                   {"batch_size", c.batch_size},   {"max_epochs", c.max_epochs},
       {"patience", c.patience},       {"lr_factor", c.lr_factor},     {"seed", c.seed},
       {"word_dropout", c.word_dropout}, {"weight_decay", c.weight_decay}, {"early_stopping", c.early_stopping},
       {"min_delta", c.min_delta},     {"dev_metrics", c.dev_metrics}};
}

struct TaskLosses {
  double parser = 0.0, morph = 0.0, cwi = 0.0, total = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  TaskLosses train, dev;
  std::optional<double> dev_mslas, dev_las, dev_feats;
  bool improved = false;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  int stop_epoch = 0;
  std::string stop_reason;
  std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const TaskLosses& l) {
  return {{"parser", l.parser}, {"morph", l.morph}, {"cwi", l.cwi}, {"total", l.total}};
}

inline nlohmann::json to_json(const TrainLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs) {
    nlohmann::json j{{"epoch", e.epoch}, {"lr", e.lr}, {"train", to_json(e.train)}, {"dev", to_json(e.dev)},
                     {"improved", e.improved}};
    if (e.dev_mslas) j["dev_mslas"] = *e.dev_mslas;
    if (e.dev_las) j["dev_las"] = *e.dev_las;
    if (e.dev_feats) j["dev_feats"] = *e.dev_feats;
    epochs.push_back(j);
  }
  return {{"epochs", epochs},
          {"best_epoch", log.best_epoch},
          {"stop_epoch", log.stop_epoch},
          {"stop_reason", log.stop_reason},
          {"warnings", log.warnings}};
}

// Tracks the monitored loss. After `patience` epochs without an improvement
// of at least `min_delta` the learning rate is reduced; an unproductive epoch
// after two reductions since the last improvement stops training.
struct PlateauSchedule {
  enum class Action { improved, wait, reduce, stop };

  int patience = 1;
  double min_delta = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int reductions = 0;

  Action observe(double loss) {
    if (loss < best - min_delta) {
      best = loss;
      bad_epochs = 0;
      reductions = 0;
      return Action::improved;
    }
    if (reductions >= 2) return Action::stop;
    if (++bad_epochs >= patience) {
      bad_epochs = 0;
      ++reductions;
      return Action::reduce;
    }
    return Action::wait;
  }
};

struct TrainResult {
  JointModel model;
  TrainLog log;
};

struct TrainData {
  const Corpus* corpus = nullptr;
  const ExternalEmbeddings* external = nullptr;
};

namespace detail {

inline std::vector<TrainExample> prepare(const TrainData& d, const FeatureVocabulary& vocab, TrainLog& log,
                                         const char* what) {
  std::vector<TrainExample> out;
  if (d.external) d.external->check_alignment(*d.corpus);
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < d.corpus->size(); ++i) {
    out.push_back(make_example((*d.corpus)[i], vocab, &log.warnings));
    if (d.external) out.back().external = &d.external->sentence(i);
    unknown += out.back().unknown_features;
  }
  if (unknown > 0)
    log.warnings.push_back(std::string(what) + ": " + std::to_string(unknown) +
                           " gold feature occurrences are outside the training vocabulary and cannot be predicted");
  return out;
}

inline TaskLosses corpus_loss(JointModel& model, const std::vector<TrainExample>& examples, const LossWeights& w) {
  std::vector<const TrainExample*> all;
  for (const auto& e : examples) all.push_back(&e);
  const LossBreakdown l = model.batch_loss(all, w, ForwardOptions{}, false);
  return {l.parser, l.morph, l.cwi, joint_loss(l, w)};
}

}  // namespace detail

// Trains a fresh model. The vocabulary comes from the training corpus only.
inline TrainResult train(const TrainData& train_data, const TrainData& dev_data, ModelConfig model_cfg,
                         const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (!train_data.corpus || train_data.corpus->empty()) throw ConfigError("training corpus is empty");
  model_cfg.seed = cfg.seed;
  if (train_data.external) model_cfg.encoder.provider = EncoderProvider::external_file;
  TrainLog log;
  JointModel model(model_cfg, build_feature_vocab(*train_data.corpus));

  std::size_t n_content = 0, n_function = 0;
  for (const auto& s : *train_data.corpus) {
    n_content += s.content_count();
    n_function += s.size() - s.content_count();
  }
  model.cwi().class_weights = inverse_frequency_weights(n_content, n_function);

  const auto train_ex = detail::prepare(train_data, model.vocab(), log, "train");
  const bool have_dev = dev_data.corpus && !dev_data.corpus->empty();
  std::vector<TrainExample> dev_ex;
  if (have_dev) {
    dev_ex = detail::prepare(dev_data, model.vocab(), log, "dev");
  } else {
    log.warnings.push_back("dev corpus is empty; the schedule follows the training loss");
  }

  Rng rng(detail::splitmix64(cfg.seed ^ 0x7261696eull));
  AdamW opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  ParamList params = model.parameters();

  std::vector<std::size_t> order(train_ex.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PlateauSchedule schedule{cfg.patience, cfg.min_delta};
  std::string best_state;
  log.stop_reason = "max_epochs";
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    EpochLog e;
    e.epoch = epoch;
    e.lr = opt.lr;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const TrainExample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++k)
        batch.push_back(&train_ex[order[k]]);
      zero_grads(params);
      const LossBreakdown l = model.batch_loss(batch, cfg.weights, ForwardOptions{true, &rng, cfg.word_dropout}, true);
      e.train.parser += l.parser;
      e.train.morph += l.morph;
      e.train.cwi += l.cwi;
      e.train.total += joint_loss(l, cfg.weights);
      opt.step(params);
      for (Param* p : params) p->clear_touched();
      ++batches;
    }
    for (double* x : {&e.train.parser, &e.train.morph, &e.train.cwi, &e.train.total}) *x /= static_cast<double>(batches);

    e.dev = detail::corpus_loss(model, have_dev ? dev_ex : train_ex, cfg.weights);
    if (have_dev && cfg.dev_metrics) {
      const Corpus pred = predict_corpus(model, *dev_data.corpus, {}, dev_data.external);
      const MetricReport r = evaluate(*dev_data.corpus, pred);
      e.dev_mslas = r.mslas.f1;
      e.dev_las = r.las.f1;
      e.dev_feats = r.feats.f1;
    }

    bool stop = false;
    const auto action = schedule.observe(e.dev.total);
    if (action == PlateauSchedule::Action::improved) {
      e.improved = true;
      log.best_epoch = epoch;
      if (cfg.early_stopping) {
        std::ostringstream ss;
        model.save(ss);
        best_state = ss.str();
      }
    } else if (cfg.early_stopping && action == PlateauSchedule::Action::reduce) {
      opt.lr *= cfg.lr_factor;
    } else if (cfg.early_stopping && action == PlateauSchedule::Action::stop) {
      stop = true;
    }
    log.epochs.push_back(e);
    log.stop_epoch = epoch;
    if (on_epoch) on_epoch(e);
    if (stop) {
      log.stop_reason = "plateau";
      break;
    }
  }

  if (cfg.early_stopping && !best_state.empty()) {
    std::istringstream in(best_state);
    model = JointModel::load(in);
  } else {
    log.best_epoch = log.stop_epoch;
  }
  return {std::move(model), std::move(log)};
}

inline TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, const ModelConfig& model_cfg,
                         const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  return train(TrainData{&train_corpus, nullptr}, TrainData{&dev_corpus, nullptr}, model_cfg, cfg, on_epoch);
}

struct GridEntry {
  LossWeights weights;
  double dev_mslas = 0.0;
  double dev_las = 0.0;
  double dev_feats = 0.0;
};

struct GridResult {
  TrainConfig best;
  std::size_t best_index = 0;
  std::vector<GridEntry> table;  // grid order
};

// Default grid: the distinct preset triples.
inline std::vector<LossWeights> default_grid() {
  std::vector<LossWeights> out;
  for (const auto& [name, w] : weight_presets()) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](const LossWeights& o) {
      return o.parser == w.parser && o.morph == w.morph && o.cwi == w.cwi;
    });
    if (!seen) out.push_back(w);
  }
  return out;
}

// Accepts [[p, m, c], ...] or [{"w_parser": .., "w_morph": .., "w_cwi": ..}, ...].
inline std::vector<LossWeights> parse_grid(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("grid must be a non-empty JSON array");
  std::vector<LossWeights> out;
  for (const auto& e : j) {
    if (e.is_array()) {
      if (e.size() != 3) throw ConfigError("grid triples need exactly three weights");
      out.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
    } else if (e.is_object()) {
      out.push_back({e.at("w_parser").get<double>(), e.at("w_morph").get<double>(), e.at("w_cwi").get<double>()});
    } else {
      throw ConfigError("grid entries must be arrays or objects");
    }
  }
  return out;
}

// One model per triple with the same seed; best dev MSLAS wins, ties keep the
// earlier entry.
inline GridResult grid_search_weights(const Corpus& train_corpus, const Corpus& dev_corpus,
                                      const ModelConfig& model_cfg, const TrainConfig& base,
                                      const std::vector<LossWeights>& grid,
                                      const std::function<void(const GridEntry&)>& on_entry = {}) {
  if (grid.empty()) throw ConfigError("weight grid is empty");
  const Corpus& scoring = dev_corpus.empty() ? train_corpus : dev_corpus;
  GridResult out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    TrainConfig cfg = base;
    cfg.weights = grid[i];
    TrainResult r = train(train_corpus, dev_corpus, model_cfg, cfg);
    const MetricReport rep = evaluate(scoring, predict_corpus(r.model, scoring));
    out.table.push_back({grid[i], rep.mslas.f1, rep.las.f1, rep.feats.f1});
    if (on_entry) on_entry(out.table.back());
    if (i == 0 || rep.mslas.f1 > out.table[out.best_index].dev_mslas) out.best_index = i;
  }
  out.best = base;
  out.best.weights = grid[out.best_index];
  return out;
}

}  // namespace mosyn
