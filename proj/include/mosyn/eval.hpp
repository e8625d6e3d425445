#pragma once

// LAS, Feats F1 and MSLAS over content words, with tokens aligned by their
// character spans in the whitespace-free sentence string.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosyn/conllu.hpp"
#include "mosyn/errors.hpp"

namespace mosyn {

struct Alignment {
  std::vector<std::pair<int, int>> pairs;  // (gold index, system index), 0-based
  std::vector<int> unmatched_gold;
  std::vector<int> unmatched_system;
};

namespace detail {

inline std::string strip_space(const std::string& s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

inline std::vector<CharSpan> compact_spans(const Sentence& s, std::string* joined) {
  std::vector<CharSpan> out;
  std::size_t pos = 0;
  for (const auto& t : s.tokens) {
    const std::string f = strip_space(t.form);
    out.push_back({pos, pos + f.size()});
    pos += f.size();
    if (joined) *joined += f;
  }
  return out;
}

}  // namespace detail

inline Alignment align_tokens(const Sentence& gold, const Sentence& sys) {
  Alignment a;
  if (gold.tokens.empty() || sys.tokens.empty()) {
    for (std::size_t i = 0; i < gold.size(); ++i) a.unmatched_gold.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < sys.size(); ++j) a.unmatched_system.push_back(static_cast<int>(j));
    return a;
  }
  std::string gs, ss;
  const auto g = detail::compact_spans(gold, &gs);
  const auto s = detail::compact_spans(sys, &ss);
  if (gs != ss)
    throw EvalError("sentence '" + gold.sent_id + "': gold and system text differ ('" + gs + "' vs '" + ss + "')");
  // Spans are monotone and disjoint on both sides, so matching equal spans in
  // one merge pass yields the longest common subsequence.
  std::size_t i = 0, j = 0;
  while (i < g.size() && j < s.size()) {
    if (g[i] == s[j]) {
      a.pairs.emplace_back(static_cast<int>(i++), static_cast<int>(j++));
    } else if (g[i].end < s[j].end || (g[i].end == s[j].end && g[i].start > s[j].start)) {
      a.unmatched_gold.push_back(static_cast<int>(i++));
    } else {
      a.unmatched_system.push_back(static_cast<int>(j++));
    }
  }
  for (; i < g.size(); ++i) a.unmatched_gold.push_back(static_cast<int>(i));
  for (; j < s.size(); ++j) a.unmatched_system.push_back(static_cast<int>(j));
  return a;
}

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

// Percentages. With nothing to find and nothing predicted every score is 100.
struct Score {
  Counts counts;
  double p = 0.0;
  double r = 0.0;
  double f1 = 0.0;

  static Score from(const Counts& c) {
    Score s;
    s.counts = c;
    const double sys = static_cast<double>(c.tp + c.fp);
    const double gold = static_cast<double>(c.tp + c.fn);
    if (sys == 0.0 && gold == 0.0) {
      s.p = s.r = s.f1 = 100.0;
      return s;
    }
    s.p = sys > 0.0 ? 100.0 * static_cast<double>(c.tp) / sys : 0.0;
    s.r = gold > 0.0 ? 100.0 * static_cast<double>(c.tp) / gold : 0.0;
    s.f1 = s.p + s.r > 0.0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
    return s;
  }
};

struct SentenceCounts {
  Counts las, feats, mslas;
};

// Counts for one aligned sentence pair.
inline SentenceCounts count_sentence(const Sentence& gold, const Sentence& sys) {
  const Alignment a = align_tokens(gold, sys);
  std::vector<int> sys_to_gold(sys.size(), -1);
  for (auto [gi, si] : a.pairs) sys_to_gold[static_cast<std::size_t>(si)] = gi;

  SentenceCounts out;
  auto add_all = [](std::size_t& slot, const Token& t) { slot += t.is_content ? t.feats.size() : 0; };
  for (int gi : a.unmatched_gold) {
    const Token& g = gold.tokens[static_cast<std::size_t>(gi)];
    out.las.fn += g.is_content ? 1 : 0;
    add_all(out.feats.fn, g);
    add_all(out.mslas.fn, g);
  }
  for (int si : a.unmatched_system) {
    const Token& s = sys.tokens[static_cast<std::size_t>(si)];
    out.las.fp += s.is_content ? 1 : 0;
    add_all(out.feats.fp, s);
    add_all(out.mslas.fp, s);
  }
  for (auto [gi, si] : a.pairs) {
    const Token& g = gold.tokens[static_cast<std::size_t>(gi)];
    const Token& s = sys.tokens[static_cast<std::size_t>(si)];
    bool las_ok = false;
    if (g.is_content && s.is_content && g.head && s.head && g.deprel && s.deprel && *g.deprel == *s.deprel) {
      if (*s.head == 0) {
        las_ok = *g.head == 0;
      } else if (*s.head >= 1 && *s.head <= static_cast<int>(sys.size())) {
        const int mapped = sys_to_gold[static_cast<std::size_t>(*s.head - 1)];
        las_ok = mapped >= 0 && *g.head == mapped + 1;
      }
    }
    if (las_ok) {
      ++out.las.tp;
    } else {
      out.las.fn += g.is_content ? 1 : 0;
      out.las.fp += s.is_content ? 1 : 0;
    }
    const FeatureSet& gf = g.is_content ? g.feats : FeatureSet{};
    const FeatureSet& sf = s.is_content ? s.feats : FeatureSet{};
    Counts f;
    for (const auto& x : sf) (gf.count(x) ? f.tp : f.fp) += 1;
    for (const auto& x : gf) f.fn += sf.count(x) ? 0 : 1;
    out.feats += f;
    if (las_ok) {
      out.mslas += f;
    } else {
      out.mslas.fp += sf.size();
      out.mslas.fn += gf.size();
    }
  }
  return out;
}

struct MetricReport {
  Score mslas, las, feats;
  std::size_t sentences = 0;
};

namespace detail {

// Pairs sentences by sent_id when ids are unique and identical on both
// sides, otherwise by position.
inline std::vector<std::pair<std::size_t, std::size_t>> pair_sentences(const Corpus& gold, const Corpus& sys) {
  auto ids_of = [](const Corpus& c) {
    std::vector<std::string> ids;
    for (const auto& s : c) ids.push_back(s.sent_id);
    return ids;
  };
  if (gold.size() != sys.size()) {
    std::vector<std::string> gi = ids_of(gold), si = ids_of(sys);
    std::sort(gi.begin(), gi.end());
    std::sort(si.begin(), si.end());
    std::vector<std::string> only_gold, only_sys;
    std::set_difference(gi.begin(), gi.end(), si.begin(), si.end(), std::back_inserter(only_gold));
    std::set_difference(si.begin(), si.end(), gi.begin(), gi.end(), std::back_inserter(only_sys));
    std::string msg = "sentence count mismatch: gold has " + std::to_string(gold.size()) + ", system has " +
                      std::to_string(sys.size());
    auto list = [&](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string("; only in ") + label + ":";
      for (const auto& id : ids) msg += " " + id;
    };
    list("gold", only_gold);
    list("system", only_sys);
    throw EvalError(msg);
  }
  std::map<std::string, std::size_t> by_id;
  for (std::size_t j = 0; j < sys.size(); ++j) by_id.emplace(sys[j].sent_id, j);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  bool by_ids = by_id.size() == sys.size();
  for (std::size_t i = 0; by_ids && i < gold.size(); ++i) {
    auto it = by_id.find(gold[i].sent_id);
    if (it == by_id.end()) by_ids = false;
    else out.emplace_back(i, it->second);
  }
  std::map<std::string, int> gold_ids;
  for (const auto& s : gold) gold_ids[s.sent_id]++;
  if (gold_ids.size() != gold.size()) by_ids = false;
  if (!by_ids) {
    out.clear();
    for (std::size_t i = 0; i < gold.size(); ++i) out.emplace_back(i, i);
  }
  return out;
}

}  // namespace detail

inline MetricReport evaluate(const Corpus& gold, const Corpus& sys) {
  Counts las, feats, mslas;
  for (auto [gi, si] : detail::pair_sentences(gold, sys)) {
    const auto c = count_sentence(gold[gi], sys[si]);
    las += c.las;
    feats += c.feats;
    mslas += c.mslas;
  }
  MetricReport r;
  r.las = Score::from(las);
  r.feats = Score::from(feats);
  r.mslas = Score::from(mslas);
  r.sentences = gold.size();
  return r;
}

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

inline nlohmann::json to_json(const MetricReport& r) {
  auto score = [](const Score& s) {
    return nlohmann::json{{"p", round1(s.p)},
                          {"r", round1(s.r)},
                          {"f1", round1(s.f1)},
                          {"tp", s.counts.tp},
                          {"fp", s.counts.fp},
                          {"fn", s.counts.fn}};
  };
  return {{"mslas", score(r.mslas)}, {"las", score(r.las)}, {"feats", score(r.feats)}, {"sentences", r.sentences}};
}

inline std::string format_report(const MetricReport& r) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %9s %9s %9s %8s %8s %8s\n", "Metric", "Precision", "Recall", "F1", "TP",
                "FP", "FN");
  out << line;
  auto row = [&](const char* name, const Score& s) {
    std::snprintf(line, sizeof line, "%-8s %9.1f %9.1f %9.1f %8zu %8zu %8zu\n", name, s.p, s.r, s.f1, s.counts.tp,
                  s.counts.fp, s.counts.fn);
    out << line;
  };
  row("MSLAS", r.mslas);
  row("LAS", r.las);
  row("Feats", r.feats);
  return out.str();
}

}  // namespace mosyn
