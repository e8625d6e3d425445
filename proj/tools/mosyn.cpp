#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "mosyn/analysis.hpp"
#include "mosyn/trainer.hpp"

namespace {

using namespace mosyn;
using nlohmann::json;

// Exit codes.
constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kEvalMismatch = 2;

// Errors from a named file get the file prefixed to the message.
struct FileError : Error {
  using Error::Error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError(path + ": cannot write file");
  out << text;
  if (!out) throw FileError(path + ": write failed");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

void print_warnings(const std::string& path, const Warnings& w) {
  for (const auto& msg : w) std::cerr << path << ": warning: " << msg << "\n";
}

Corpus load_conllu(const std::string& path) {
  const std::string text = read_file(path);
  Warnings w;
  try {
    Corpus c = parse_conllu(text, &w);
    print_warnings(path, w);
    return c;
  } catch (const Error& e) {
    throw FileError(path + ": " + e.what());
  }
}

bool looks_like_conllu(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    return line.find('\t') != std::string::npos;
  }
  return true;
}

Corpus load_input(const std::string& path, const std::string& format) {
  if (format == "conllu") return load_conllu(path);
  const std::string text = read_file(path);
  if (format == "auto" && looks_like_conllu(text)) return load_conllu(path);
  return parse_plain_text(text);
}

std::optional<ExternalEmbeddings> load_embeddings(const std::string& path) {
  if (path.empty()) return std::nullopt;
  try {
    return ExternalEmbeddings::load(path);
  } catch (const Error& e) {
    throw FileError(path + ": " + e.what());
  }
}

JointModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(path + ": cannot open checkpoint");
  try {
    return JointModel::load(in);
  } catch (const Error& e) {
    throw FileError(path + ": " + e.what());
  }
}

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FileError(path + ": " + e.what());
  }
}

// Model and training settings from an optional config file plus flag overrides.
struct Settings {
  ModelConfig model;
  TrainConfig train;
};

struct TrainFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

Settings resolve_settings(const TrainFlags& f) {
  Settings s;
  if (!f.config.empty()) {
    const json j = load_json(f.config);
    try {
      s.train = j.get<TrainConfig>();
      if (j.contains("model")) s.model = j.at("model").get<ModelConfig>();
    } catch (const json::exception& e) {
      throw FileError(f.config + ": " + e.what());
    } catch (const ConfigError& e) {
      throw FileError(f.config + ": " + e.what());
    }
  }
  if (!f.preset.empty()) s.train.weights = preset_weights(f.preset);
  if (f.seed) s.train.seed = *f.seed;
  if (f.epochs) s.train.max_epochs = *f.epochs;
  s.train.validate();
  s.model.validate();
  return s;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "training config JSON");
  cmd->add_option("--preset", f.preset, "loss-weight preset (language name)");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--epochs", f.epochs, "maximum number of epochs");
}

std::string format_epoch(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch %3d  lr %.3g  train %.4f  dev %.4f", e.epoch, e.lr, e.train.total,
                e.dev.total);
  std::string out = buf;
  if (e.dev_mslas) {
    std::snprintf(buf, sizeof buf, "  MSLAS %.1f  LAS %.1f  Feats %.1f", *e.dev_mslas, *e.dev_las, *e.dev_feats);
    out += buf;
  }
  if (e.improved) out += "  *";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mosyn: joint morphosyntactic parsing for content-word CoNLL-U"};
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "worker threads for sentence-level inference")
      ->check(CLI::Range(1u, 256u));

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  std::string train_path, dev_path, out_path, log_path, train_emb, dev_emb;
  TrainFlags train_flags;
  bool quiet = false;
  train_cmd->add_option("--train", train_path, "training corpus (CoNLL-U)")->required();
  train_cmd->add_option("--dev", dev_path, "development corpus (CoNLL-U)");
  train_cmd->add_option("--out", out_path, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "training log JSON (default: <out>.log.json)");
  train_cmd->add_option("--embeddings", train_emb, "precomputed vectors for the training corpus");
  train_cmd->add_option("--dev-embeddings", dev_emb, "precomputed vectors for the dev corpus");
  train_cmd->add_flag("--quiet", quiet, "no per-epoch progress on stderr");
  add_train_flags(train_cmd, train_flags);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "annotate a corpus with a trained model");
  std::string model_path, input_path, pred_out, format = "auto", pred_emb;
  bool fallback_underscore = false;
  predict_cmd->add_option("--model", model_path, "checkpoint")->required();
  predict_cmd->add_option("--input", input_path, "CoNLL-U or whitespace-tokenized text")->required();
  predict_cmd->add_option("--out", pred_out, "output CoNLL-U (default: stdout)");
  predict_cmd->add_option("--format", format, "input format")->check(CLI::IsMember({"auto", "conllu", "text"}));
  predict_cmd->add_option("--embeddings", pred_emb, "precomputed vectors for the input");
  predict_cmd->add_flag("--fallback-underscore", fallback_underscore, "write _ as FEATS of a forced root");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score a system file against gold");
  std::string gold_path, sys_path;
  bool as_json = false;
  eval_cmd->add_option("--gold", gold_path)->required();
  eval_cmd->add_option("--system", sys_path)->required();
  eval_cmd->add_flag("--json", as_json, "print JSON instead of a table");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "error analysis of a system file");
  std::string spatial_path;
  std::size_t top_k = 10;
  bool signed_distance = false;
  std::vector<std::string> classes;
  analyze_cmd->add_option("--gold", gold_path)->required();
  analyze_cmd->add_option("--system", sys_path)->required();
  analyze_cmd->add_option("--spatial-cases", spatial_path, "file listing spatial Case values");
  analyze_cmd->add_option("--top-k", top_k, "length of the merged deprel error list");
  analyze_cmd->add_option("--classes", classes, "feature classes for confusion tables (default: all in gold)")
      ->delimiter(',');
  analyze_cmd->add_flag("--signed", signed_distance, "signed attachment distances");
  analyze_cmd->add_flag("--json", as_json, "print JSON");

  // split
  auto* split_cmd = app.add_subcommand("split", "seeded train/dev split");
  double ratio = 0.9;
  std::uint64_t split_seed = 1;
  std::string split_train, split_dev;
  split_cmd->add_option("--input", input_path)->required();
  split_cmd->add_option("--ratio", ratio, "fraction kept for training");
  split_cmd->add_option("--seed", split_seed);
  split_cmd->add_option("--train-out", split_train)->required();
  split_cmd->add_option("--dev-out", split_dev)->required();

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "grid search over loss weights");
  std::string grid_path, tune_out;
  tune_cmd->add_option("--train", train_path)->required();
  tune_cmd->add_option("--dev", dev_path)->required();
  tune_cmd->add_option("--grid", grid_path, "JSON list of weight triples (default: the presets)");
  tune_cmd->add_option("--out", tune_out, "write the result table as JSON");
  add_train_flags(tune_cmd, train_flags);
  tune_cmd->add_flag("--json", as_json, "print JSON instead of a table");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect_cmd->add_option("--model", model_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInputError;
  }

  try {
    if (*train_cmd) {
      const Settings s = resolve_settings(train_flags);
      const Corpus tr = load_conllu(train_path);
      const Corpus dev = dev_path.empty() ? Corpus{} : load_conllu(dev_path);
      const auto tr_emb = load_embeddings(train_emb);
      const auto dv_emb = load_embeddings(dev_emb);
      if (!dev_path.empty() && tr_emb.has_value() != dv_emb.has_value())
        throw ConfigError("--embeddings and --dev-embeddings must be given together");
      auto result = train(TrainData{&tr, tr_emb ? &*tr_emb : nullptr}, TrainData{&dev, dv_emb ? &*dv_emb : nullptr},
                          s.model, s.train, [&](const EpochLog& e) {
                            if (!quiet) std::cerr << format_epoch(e) << "\n";
                          });
      for (const auto& w : result.log.warnings) std::cerr << "warning: " << w << "\n";
      std::ostringstream ck;
      result.model.save(ck);
      write_file(out_path, ck.str());
      json log = to_json(result.log);
      log["config"] = s.train;
      log["model"] = s.model;
      write_file(log_path.empty() ? out_path + ".log.json" : log_path, log.dump(2) + "\n");
      std::cerr << "best epoch " << result.log.best_epoch << ", stopped at " << result.log.stop_epoch << " ("
                << result.log.stop_reason << ")\n";
      return kOk;
    }

    if (*predict_cmd) {
      const JointModel model = load_model(model_path);
      const Corpus input = load_input(input_path, format);
      const auto emb = load_embeddings(pred_emb);
      if (model.config().encoder.provider == EncoderProvider::external_file && !emb)
        throw ConfigError("model was trained on precomputed vectors; pass --embeddings");
      PipelineOptions opt;
      opt.fallback_feats_underscore = fallback_underscore;
      PipelineStats stats;
      const Corpus out = predict_corpus(model, input, opt, emb ? &*emb : nullptr, &stats, threads);
      emit(pred_out, serialize_corpus(out));
      std::cerr << "sentences " << stats.sentences << ", relabeled by confidence rule " << stats.relabeled
                << ", all-function fallbacks " << stats.fallbacks << "\n";
      return kOk;
    }

    if (*eval_cmd) {
      const MetricReport r = evaluate(load_conllu(gold_path), load_conllu(sys_path));
      std::cout << (as_json ? to_json(r).dump(2) + "\n" : format_report(r));
      return kOk;
    }

    if (*analyze_cmd) {
      const Corpus gold = load_conllu(gold_path);
      const Corpus sys = load_conllu(sys_path);
      if (classes.empty()) {
        std::set<std::string> seen;
        for (const auto& s : gold)
          for (const auto& t : s.tokens)
            for (const auto& f : t.feats) seen.insert(f.cls);
        classes.assign(seen.begin(), seen.end());
      }
      const auto deprels = deprel_confusions(gold, sys, top_k);
      const auto hist = attachment_distance_histogram(gold, sys, signed_distance);
      const auto dir = direction_confusion(gold, sys);
      std::optional<Score> spatial;
      if (!spatial_path.empty()) spatial = spatial_case_metrics(gold, sys, load_value_list(spatial_path));
      if (as_json) {
        json j;
        for (const auto& cls : classes) {
          const auto t = feature_confusions(gold, sys, cls);
          j["features"][cls] = {{"confusions", to_json(t)}, {"errors", to_json(ranked_errors(t))}};
        }
        j["deprel_errors"] = to_json(deprels.merged);
        j["label_swaps"] = to_json(deprels.label_swaps);
        j["cwi_errors"] = to_json(deprels.cwi_rows);
        j["distance"] = to_json(hist);
        j["direction"] = to_json(dir);
        if (spatial)
          j["spatial_case"] = {{"precision", round1(spatial->p)},
                               {"recall", round1(spatial->r)},
                               {"f1", round1(spatial->f1)},
                               {"tp", spatial->counts.tp},
                               {"fp", spatial->counts.fp},
                               {"fn", spatial->counts.fn}};
        std::cout << j.dump(2) << "\n";
      } else {
        for (const auto& cls : classes) {
          auto rows = ranked_errors(feature_confusions(gold, sys, cls));
          if (rows.size() > top_k) rows.resize(top_k);
          std::cout << format_rows(cls + " errors", rows) << "\n";
        }
        std::cout << format_rows("Deprel errors", deprels.merged) << "\n"
                  << format_histogram(hist) << "\n"
                  << format_direction(dir);
        if (spatial) {
          char buf[128];
          std::snprintf(buf, sizeof buf, "\nSpatial cases  P %.1f  R %.1f  F1 %.1f\n", spatial->p, spatial->r,
                        spatial->f1);
          std::cout << buf;
        }
      }
      return kOk;
    }

    if (*split_cmd) {
      const auto [tr, dev] = split_corpus(load_conllu(input_path), ratio, split_seed);
      write_file(split_train, serialize_corpus(tr));
      write_file(split_dev, serialize_corpus(dev));
      std::cerr << "train " << tr.size() << ", dev " << dev.size() << " sentences\n";
      return kOk;
    }

    if (*tune_cmd) {
      const Settings s = resolve_settings(train_flags);
      const Corpus tr = load_conllu(train_path);
      const Corpus dev = load_conllu(dev_path);
      std::vector<LossWeights> grid = default_grid();
      if (!grid_path.empty()) {
        try {
          grid = parse_grid(load_json(grid_path));
        } catch (const ConfigError& e) {
          throw FileError(grid_path + ": " + e.what());
        }
      }
      const GridResult r = grid_search_weights(tr, dev, s.model, s.train, grid, [](const GridEntry& e) {
        std::cerr << "weights (" << e.weights.parser << ", " << e.weights.morph << ", " << e.weights.cwi
                  << ")  dev MSLAS " << round1(e.dev_mslas) << "\n";
      });
      std::vector<GridEntry> rows = r.table;
      std::stable_sort(rows.begin(), rows.end(),
                       [](const GridEntry& a, const GridEntry& b) { return a.dev_mslas > b.dev_mslas; });
      json j = json::array();
      for (const auto& e : rows)
        j.push_back({{"w_parser", e.weights.parser},
                     {"w_morph", e.weights.morph},
                     {"w_cwi", e.weights.cwi},
                     {"dev_mslas", round1(e.dev_mslas)},
                     {"dev_las", round1(e.dev_las)},
                     {"dev_feats", round1(e.dev_feats)}});
      if (!tune_out.empty()) write_file(tune_out, j.dump(2) + "\n");
      if (as_json) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::printf("%-8s %-8s %-8s %7s %7s %7s\n", "w_parser", "w_morph", "w_cwi", "MSLAS", "LAS", "Feats");
        for (const auto& e : rows)
          std::printf("%-8g %-8g %-8g %7.1f %7.1f %7.1f\n", e.weights.parser, e.weights.morph, e.weights.cwi,
                      e.dev_mslas, e.dev_las, e.dev_feats);
      }
      return kOk;
    }

    if (*inspect_cmd) {
      JointModel model = load_model(model_path);
      std::size_t params = 0;
      for (Param* p : model.parameters()) params += static_cast<std::size_t>(p->value.size());
      json j;
      j["model"] = model.config();
      j["features"] = model.vocab().features().size();
      j["deprels"] = model.vocab().deprels();
      j["parameters"] = params;
      if (model.config().encoder.provider == EncoderProvider::hashed_features)
        j["materialized_buckets"] = model.encoder().materialized_buckets().size();
      std::cout << j.dump(2) << "\n";
      return kOk;
    }
  } catch (const EvalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEvalMismatch;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kOk;
}
