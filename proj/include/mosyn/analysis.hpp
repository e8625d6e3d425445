#pragma once

// Error analyses over aligned gold/system corpora.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mosyn/conllu.hpp"
#include "mosyn/eval.hpp"

namespace mosyn {

// One aligned token pair with the gold and system sentences it came from.
struct AlignedToken {
  const Sentence* gold_sentence;
  const Sentence* sys_sentence;
  int gold_index;  // 0-based
  int sys_index;
  bool head_correct;  // system head maps onto the gold head
};

namespace detail {

inline bool head_matches(const Token& g, const Token& s, const std::vector<int>& sys_to_gold) {
  if (!g.head || !s.head) return false;
  if (*s.head == 0) return *g.head == 0;
  if (*s.head < 1 || *s.head > static_cast<int>(sys_to_gold.size())) return false;
  const int mapped = sys_to_gold[static_cast<std::size_t>(*s.head - 1)];
  return mapped >= 0 && *g.head == mapped + 1;
}

}  // namespace detail

inline std::vector<AlignedToken> aligned_tokens(const Corpus& gold, const Corpus& sys) {
  std::vector<AlignedToken> out;
  for (auto [gi, si] : detail::pair_sentences(gold, sys)) {
    const Sentence& g = gold[gi];
    const Sentence& s = sys[si];
    const Alignment a = align_tokens(g, s);
    std::vector<int> sys_to_gold(s.size(), -1);
    for (auto [x, y] : a.pairs) sys_to_gold[static_cast<std::size_t>(y)] = x;
    for (auto [x, y] : a.pairs)
      out.push_back({&g, &s, x, y,
                     detail::head_matches(g.tokens[static_cast<std::size_t>(x)],
                                          s.tokens[static_cast<std::size_t>(y)], sys_to_gold)});
  }
  return out;
}

// ---- feature confusions ----

struct ConfusionTable {
  std::string scope;
  std::map<std::pair<std::string, std::string>, std::size_t> cells;  // (gold, predicted)

  std::vector<std::string> row_labels() const {
    std::set<std::string> s;
    for (const auto& [k, v] : cells) s.insert(k.first);
    return {s.begin(), s.end()};
  }
  std::vector<std::string> column_labels() const {
    std::set<std::string> s;
    for (const auto& [k, v] : cells) s.insert(k.second);
    return {s.begin(), s.end()};
  }
  std::size_t at(const std::string& gold, const std::string& pred) const {
    auto it = cells.find({gold, pred});
    return it == cells.end() ? 0 : it->second;
  }
  std::size_t off_diagonal() const {
    std::size_t n = 0;
    for (const auto& [k, v] : cells) n += k.first != k.second ? v : 0;
    return n;
  }
};

struct ErrorRow {
  std::size_t count;
  std::string gold;
  std::string predicted;
};

// Off-diagonal cells as (count, gold, predicted), most frequent first.
inline std::vector<ErrorRow> ranked_errors(const ConfusionTable& t) {
  std::vector<ErrorRow> rows;
  for (const auto& [k, v] : t.cells)
    if (k.first != k.second) rows.push_back({v, k.first, k.second});
  std::stable_sort(rows.begin(), rows.end(), [](const ErrorRow& a, const ErrorRow& b) { return a.count > b.count; });
  return rows;
}

// Values of one class joined with ',' (so `Fem,Masc` is its own label), `_`
// when the token has none.
inline std::string class_label(const FeatureSet& feats, const std::string& cls) {
  std::string out;
  for (const auto& f : feats) {
    if (f.cls != cls) continue;
    if (!out.empty()) out += ",";
    out += f.value;
  }
  return out.empty() ? "_" : out;
}

inline ConfusionTable feature_confusions(const Corpus& gold, const Corpus& sys, const std::string& cls) {
  bool known = false;
  for (const Corpus* c : {&gold, &sys})
    for (const auto& s : *c)
      for (const auto& t : s.tokens)
        for (const auto& f : t.feats) known = known || f.cls == cls;
  if (!known) throw ConfigError("feature class '" + cls + "' does not occur in either corpus");
  ConfusionTable table;
  table.scope = cls;
  for (const auto& at : aligned_tokens(gold, sys)) {
    const Token& g = at.gold_sentence->tokens[static_cast<std::size_t>(at.gold_index)];
    const Token& s = at.sys_sentence->tokens[static_cast<std::size_t>(at.sys_index)];
    if (!g.is_content || !s.is_content) continue;
    const std::string gl = class_label(g.feats, cls);
    const std::string sl = class_label(s.feats, cls);
    if (gl == "_" && sl == "_") continue;
    ++table.cells[{gl, sl}];
  }
  return table;
}

// ---- deprel confusions ----

struct DeprelConfusions {
  std::vector<ErrorRow> label_swaps;  // head correct, label differs
  std::vector<ErrorRow> cwi_rows;     // one side is a function word (`_`)
  std::vector<ErrorRow> merged;       // both, top-k
};

inline DeprelConfusions deprel_confusions(const Corpus& gold, const Corpus& sys, std::size_t top_k = 10) {
  std::map<std::pair<std::string, std::string>, std::size_t> swaps, cwi;
  for (const auto& at : aligned_tokens(gold, sys)) {
    const Token& g = at.gold_sentence->tokens[static_cast<std::size_t>(at.gold_index)];
    const Token& s = at.sys_sentence->tokens[static_cast<std::size_t>(at.sys_index)];
    const std::string gd = g.is_content ? g.deprel.value_or("_") : "_";
    const std::string sd = s.is_content ? s.deprel.value_or("_") : "_";
    if (g.is_content && s.is_content) {
      if (at.head_correct && gd != sd) ++swaps[{gd, sd}];
    } else if (g.is_content != s.is_content) {
      ++cwi[{gd, sd}];
    }
  }
  auto rank = [](const std::map<std::pair<std::string, std::string>, std::size_t>& m) {
    std::vector<ErrorRow> rows;
    for (const auto& [k, v] : m) rows.push_back({v, k.first, k.second});
    std::stable_sort(rows.begin(), rows.end(), [](const ErrorRow& a, const ErrorRow& b) { return a.count > b.count; });
    return rows;
  };
  DeprelConfusions out;
  out.label_swaps = rank(swaps);
  out.cwi_rows = rank(cwi);
  auto all = swaps;
  for (const auto& [k, v] : cwi) all[k] += v;
  out.merged = rank(all);
  if (out.merged.size() > top_k) out.merged.resize(top_k);
  return out;
}

// ---- attachment distance and direction over head errors ----

struct DistanceHistogram {
  bool is_signed = false;
  std::map<int, std::size_t> gold;
  std::map<int, std::size_t> predicted;
  std::size_t gold_root = 0;
  std::size_t predicted_root = 0;
  std::size_t errors = 0;
};

namespace detail {

// Content tokens present on both sides whose system head is wrong.
template <typename Fn>
void for_each_head_error(const Corpus& gold, const Corpus& sys, Fn fn) {
  for (const auto& at : aligned_tokens(gold, sys)) {
    const Token& g = at.gold_sentence->tokens[static_cast<std::size_t>(at.gold_index)];
    const Token& s = at.sys_sentence->tokens[static_cast<std::size_t>(at.sys_index)];
    if (!g.is_content || !s.is_content || !g.head || !s.head || at.head_correct) continue;
    fn(g, s);
  }
}

}  // namespace detail

inline DistanceHistogram attachment_distance_histogram(const Corpus& gold, const Corpus& sys, bool is_signed = false) {
  DistanceHistogram h;
  h.is_signed = is_signed;
  auto dist = [&](const Token& t) {
    const int d = *t.head - t.id;
    return is_signed ? d : std::abs(d);
  };
  detail::for_each_head_error(gold, sys, [&](const Token& g, const Token& s) {
    ++h.errors;
    if (*g.head == 0) ++h.gold_root;
    else ++h.gold[dist(g)];
    if (*s.head == 0) ++h.predicted_root;
    else ++h.predicted[dist(s)];
  });
  return h;
}

enum Direction { kLeft = 0, kRight = 1, kRoot = 2 };
inline constexpr std::array<const char*, 3> kDirectionNames{"LEFT", "RIGHT", "ROOT"};

inline Direction direction_of(const Token& t) {
  if (*t.head == 0) return kRoot;
  return *t.head < t.id ? kLeft : kRight;
}

// rows gold, columns predicted
using DirectionTable = std::array<std::array<std::size_t, 3>, 3>;

inline DirectionTable direction_confusion(const Corpus& gold, const Corpus& sys) {
  DirectionTable t{};
  detail::for_each_head_error(gold, sys, [&](const Token& g, const Token& s) { ++t[direction_of(g)][direction_of(s)]; });
  return t;
}

// ---- spatial cases ----

inline std::vector<std::string> parse_value_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

inline std::vector<std::string> load_value_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open value list '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_value_list(ss.str());
}

inline Score spatial_case_metrics(const Corpus& gold, const Corpus& sys, const std::vector<std::string>& values,
                                  const std::string& cls = "Case") {
  if (values.empty()) throw ConfigError("spatial case list is empty");
  const std::set<std::string> keep(values.begin(), values.end());
  auto filtered = [&](const Token& t) {
    FeatureSet out;
    if (!t.is_content) return out;
    for (const auto& f : t.feats)
      if (f.cls == cls && keep.count(f.value)) out.insert(f);
    return out;
  };
  Counts c;
  for (const auto& at : aligned_tokens(gold, sys)) {
    const FeatureSet g = filtered(at.gold_sentence->tokens[static_cast<std::size_t>(at.gold_index)]);
    const FeatureSet s = filtered(at.sys_sentence->tokens[static_cast<std::size_t>(at.sys_index)]);
    for (const auto& x : s) (g.count(x) ? c.tp : c.fp) += 1;
    for (const auto& x : g) c.fn += s.count(x) ? 0 : 1;
  }
  return Score::from(c);
}

// ---- output ----

inline nlohmann::json to_json(const std::vector<ErrorRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"count", r.count}, {"gold", r.gold}, {"predicted", r.predicted}});
  return out;
}

inline nlohmann::json to_json(const ConfusionTable& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [k, v] : t.cells) cells.push_back({{"gold", k.first}, {"predicted", k.second}, {"count", v}});
  return {{"scope", t.scope}, {"cells", cells}, {"errors", to_json(ranked_errors(t))}};
}

inline nlohmann::json to_json(const DistanceHistogram& h) {
  auto series = [](const std::map<int, std::size_t>& m, std::size_t root) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    j["root"] = root;
    return j;
  };
  return {{"signed", h.is_signed},
          {"errors", h.errors},
          {"gold", series(h.gold, h.gold_root)},
          {"predicted", series(h.predicted, h.predicted_root)}};
}

inline nlohmann::json to_json(const DirectionTable& t) {
  nlohmann::json j = nlohmann::json::object();
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p) j[kDirectionNames[static_cast<std::size_t>(g)]][kDirectionNames[static_cast<std::size_t>(p)]] = t[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
  return j;
}

inline std::string format_rows(const std::string& title, const std::vector<ErrorRow>& rows) {
  std::ostringstream out;
  out << title << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%8s  %-20s %-20s\n", "count", "gold", "predicted");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%8zu  %-20s %-20s\n", r.count, r.gold.c_str(), r.predicted.c_str());
    out << line;
  }
  return out.str();
}

inline std::string format_histogram(const DistanceHistogram& h) {
  std::set<int> keys;
  for (const auto& [k, v] : h.gold) keys.insert(k);
  for (const auto& [k, v] : h.predicted) keys.insert(k);
  std::ostringstream out;
  out << "Attachment distance of head errors (" << (h.is_signed ? "signed" : "absolute") << ", " << h.errors
      << " errors)\n";
  char line[128];
  std::snprintf(line, sizeof line, "%10s %8s %10s\n", "distance", "gold", "predicted");
  out << line;
  auto get = [](const std::map<int, std::size_t>& m, int k) {
    auto it = m.find(k);
    return it == m.end() ? std::size_t{0} : it->second;
  };
  for (int k : keys) {
    std::snprintf(line, sizeof line, "%10d %8zu %10zu\n", k, get(h.gold, k), get(h.predicted, k));
    out << line;
  }
  std::snprintf(line, sizeof line, "%10s %8zu %10zu\n", "root", h.gold_root, h.predicted_root);
  out << line;
  return out.str();
}

inline std::string format_direction(const DirectionTable& t) {
  std::ostringstream out;
  char line[128];
  out << "Attachment direction of head errors (rows gold, columns predicted)\n";
  std::snprintf(line, sizeof line, "%8s %8s %8s %8s\n", "", "LEFT", "RIGHT", "ROOT");
  out << line;
  for (std::size_t g = 0; g < 3; ++g) {
    std::snprintf(line, sizeof line, "%8s %8zu %8zu %8zu\n", kDirectionNames[g], t[g][0], t[g][1], t[g][2]);
    out << line;
  }
  return out.str();
}

}  // namespace mosyn
