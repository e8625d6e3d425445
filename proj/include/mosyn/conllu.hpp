#pragma once

// Reader/writer for the content/function variant of CoNLL-U.
//
// Content words are exactly the tokens whose FEATS column is not `_`; only
// they carry HEAD, DEPREL and features. Empty ("abstract") nodes with decimal
// ids are dropped while loading and heads that pointed at them are moved up
// the head chain.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mosyn/errors.hpp"

namespace mosyn {

struct AtomicFeature {
  std::string cls;
  std::string value;

  auto operator<=>(const AtomicFeature&) const = default;
  std::string str() const { return cls + "=" + value; }
};

using FeatureSet = std::set<AtomicFeature>;

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const CharSpan&) const = default;
};

struct Token {
  int id = 0;
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats_raw = "_";
  FeatureSet feats;
  std::optional<int> head;
  std::optional<std::string> deprel;
  std::string deps = "_";
  std::string misc = "_";
  bool is_content = false;
  CharSpan span;
};

// `i-j` multiword line, kept verbatim apart from renumbering.
struct MultiwordRange {
  int first = 0;
  int last = 0;
  std::vector<std::string> columns;  // columns 2..10
};

struct Sentence {
  std::string sent_id;
  std::optional<std::string> text;
  std::vector<Token> tokens;
  std::vector<std::string> comments;  // verbatim, including the leading '#'
  std::vector<MultiwordRange> ranges;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> forms() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.form);
    return out;
  }
  std::size_t content_count() const {
    return static_cast<std::size_t>(std::count_if(
        tokens.begin(), tokens.end(), [](const Token& t) { return t.is_content; }));
  }
};

using Corpus = std::vector<Sentence>;

// One node line before abstract-node filtering; ids and heads are kept as text.
struct RawNode {
  std::string id;
  std::vector<std::string> columns;  // all 10 columns
  std::size_t line = 0;
};

struct RawSentence {
  std::vector<std::string> comments;
  std::vector<RawNode> nodes;  // word lines and decimal-id lines, file order
  std::vector<RawNode> ranges;
  std::size_t first_line = 0;
};

using Warnings = std::vector<std::string>;

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

inline bool is_integer_id(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

inline bool is_decimal_id(std::string_view s) {
  auto dot = s.find('.');
  return dot != std::string_view::npos && is_integer_id(s.substr(0, dot)) &&
         is_integer_id(s.substr(dot + 1));
}

inline bool is_range_id(std::string_view s) {
  auto dash = s.find('-');
  return dash != std::string_view::npos && is_integer_id(s.substr(0, dash)) &&
         is_integer_id(s.substr(dash + 1));
}

inline std::optional<std::string> comment_value(std::string_view comment,
                                                std::string_view key) {
  std::string_view body = comment.substr(1);
  while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
  if (body.substr(0, key.size()) != key) return std::nullopt;
  body.remove_prefix(key.size());
  while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
  if (body.empty() || body.front() != '=') return std::nullopt;
  body.remove_prefix(1);
  while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
  return std::string(body);
}

}  // namespace detail

// `Case=Ine;Atr|Number=Sing` -> {Case=Atr, Case=Ine, Number=Sing}. Values
// joined with `;` or `,` are separate atoms. Empty entries are skipped so the
// bare `|` literal decodes to the empty set.
inline FeatureSet decompose_feats(std::string_view feats_raw) {
  FeatureSet out;
  if (feats_raw == "_") return out;
  for (const auto& entry : detail::split(feats_raw, '|')) {
    if (entry.empty()) continue;
    auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw ParseError("feature entry without '=': '" + entry + "'");
    std::string cls = entry.substr(0, eq);
    if (cls.empty()) throw ParseError("empty feature class in '" + entry + "'");
    std::string values = entry.substr(eq + 1);
    std::string cur;
    auto flush = [&] {
      if (cur.empty()) throw ParseError("empty feature value in '" + entry + "'");
      out.insert({cls, cur});
      cur.clear();
    };
    for (char c : values) {
      if (c == ';' || c == ',') {
        flush();
      } else {
        cur.push_back(c);
      }
    }
    flush();
  }
  return out;
}

// Canonical form: classes and per-class values in lexicographic order,
// values joined by `;`. The empty set is `_`.
inline std::string recompose_feats(const FeatureSet& feats) {
  if (feats.empty()) return "_";
  std::string out;
  const std::string* prev_cls = nullptr;
  for (const auto& f : feats) {
    if (prev_cls && *prev_cls == f.cls) {
      out += ';';
    } else {
      if (prev_cls) out += '|';
      out += f.cls;
      out += '=';
    }
    out += f.value;
    prev_cls = &f.cls;
  }
  return out;
}

// Computes char spans from the `# text` comment when every form can be found
// in order, else from the forms joined by single spaces.
inline void assign_char_spans(Sentence& s) {
  if (s.text) {
    const std::string& text = *s.text;
    std::size_t cursor = 0;
    bool ok = true;
    std::vector<CharSpan> spans;
    for (const auto& t : s.tokens) {
      while (cursor < text.size() && std::isspace(static_cast<unsigned char>(text[cursor])))
        ++cursor;
      if (t.form.empty() || text.compare(cursor, t.form.size(), t.form) != 0) {
        ok = false;
        break;
      }
      spans.push_back({cursor, cursor + t.form.size()});
      cursor += t.form.size();
    }
    if (ok) {
      for (std::size_t i = 0; i < spans.size(); ++i) s.tokens[i].span = spans[i];
      return;
    }
  }
  std::size_t cursor = 0;
  for (auto& t : s.tokens) {
    t.span = {cursor, cursor + t.form.size()};
    cursor += t.form.size() + 1;
  }
}

// Splits text into blank-line separated blocks of comment and node lines.
inline std::vector<RawSentence> parse_conllu_raw(std::string_view text) {
  std::vector<RawSentence> out;
  RawSentence cur;
  bool open = false;
  auto close = [&] {
    if (open && !(cur.nodes.empty() && cur.ranges.empty())) out.push_back(std::move(cur));
    cur = RawSentence{};
    open = false;
  };
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (detail::is_blank(line)) {
      close();
      if (nl == text.size()) break;
      continue;
    }
    if (!open) {
      open = true;
      cur.first_line = line_no;
    }
    if (line.front() == '#') {
      cur.comments.emplace_back(line);
      continue;
    }
    auto cols = detail::split(line, '\t');
    if (cols.size() != 10)
      throw ParseError("expected 10 tab-separated columns, found " +
                           std::to_string(cols.size()),
                       line_no);
    RawNode node{cols[0], std::move(cols), line_no};
    if (detail::is_range_id(node.id)) {
      cur.ranges.push_back(std::move(node));
    } else if (detail::is_integer_id(node.id) || detail::is_decimal_id(node.id)) {
      cur.nodes.push_back(std::move(node));
    } else {
      throw ParseError("invalid token id '" + node.id + "'", line_no);
    }
    if (nl == text.size()) break;
  }
  close();
  return out;
}

// Drops decimal-id nodes, renumbers the survivors 1..n and re-resolves heads.
// A head that named a dropped node is replaced by that node's own head,
// following the chain until a surviving node or the root is reached.
inline Sentence filter_abstract_nodes(const RawSentence& raw, Warnings* warnings = nullptr) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  auto at_line = [](std::size_t line) { return "line " + std::to_string(line) + ": "; };

  std::unordered_map<std::string, const RawNode*> abstract;
  std::unordered_map<std::string, int> new_id;
  std::vector<const RawNode*> kept;
  for (const auto& node : raw.nodes) {
    if (detail::is_decimal_id(node.id)) {
      abstract.emplace(node.id, &node);
    } else {
      kept.push_back(&node);
    }
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::string& id = kept[i]->id;
    if (std::stoll(id) != static_cast<long long>(i + 1))
      throw FormatError(at_line(kept[i]->line) + "non-contiguous token id '" + id +
                        "' (expected " + std::to_string(i + 1) + ")");
    new_id.emplace(id, static_cast<int>(i + 1));
  }

  // nullopt: no head could be resolved.
  auto resolve = [&](const RawNode& node) -> std::optional<int> {
    std::string head = node.columns[6];
    std::set<std::string> seen;
    for (;;) {
      if (head == "_") return std::nullopt;
      if (head == "0") return 0;
      if (auto it = new_id.find(head); it != new_id.end()) return it->second;
      auto ab = abstract.find(head);
      if (ab == abstract.end()) {
        if (detail::is_integer_id(head))
          throw FormatError(at_line(node.line) + "head '" + head + "' does not exist");
        throw FormatError(at_line(node.line) + "invalid head '" + head + "'");
      }
      if (!seen.insert(head).second)
        throw FormatError(at_line(node.line) + "cyclic head chain through abstract node '" +
                          head + "'");
      head = ab->second->columns[6];
    }
  };

  Sentence s;
  s.comments = raw.comments;
  for (const auto& c : s.comments) {
    if (auto v = detail::comment_value(c, "sent_id")) s.sent_id = *v;
    if (auto v = detail::comment_value(c, "text")) s.text = *v;
  }
  for (const RawNode* node : kept) {
    const auto& c = node->columns;
    Token t;
    t.id = new_id.at(node->id);
    t.form = c[1];
    t.lemma = c[2];
    t.upos = c[3];
    t.xpos = c[4];
    t.feats_raw = c[5];
    try {
      t.feats = decompose_feats(c[5]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), node->line);
    }
    t.is_content = c[5] != "_";
    bool had_head = c[6] != "_";
    t.head = resolve(*node);
    if (had_head && !t.head)
      warn(at_line(node->line) + "head of token " + node->id +
           " reaches an abstract node without a head; marked absent");
    if (c[7] != "_") t.deprel = c[7];
    t.deps = c[8];
    t.misc = c[9];
    s.tokens.push_back(std::move(t));
  }
  for (const auto& r : raw.ranges) {
    auto dash = r.id.find('-');
    MultiwordRange mw;
    mw.first = std::stoi(r.id.substr(0, dash));
    mw.last = std::stoi(r.id.substr(dash + 1));
    mw.columns.assign(r.columns.begin() + 1, r.columns.end());
    s.ranges.push_back(std::move(mw));
  }

  int roots = 0;
  bool gold_tree = false;
  for (const auto& t : s.tokens) {
    if (!t.is_content) {
      if (t.head || t.deprel)
        warn("sentence '" + s.sent_id + "': function token " + std::to_string(t.id) +
             " carries a head or deprel");
      continue;
    }
    if (!t.head) continue;
    gold_tree = true;
    if (*t.head == 0) {
      ++roots;
    } else if (*t.head < 0 || *t.head > static_cast<int>(s.tokens.size())) {
      throw FormatError("sentence '" + s.sent_id + "': head " + std::to_string(*t.head) +
                        " out of range");
    } else if (!s.tokens[*t.head - 1].is_content) {
      warn("sentence '" + s.sent_id + "': token " + std::to_string(t.id) +
           " is headed by function token " + std::to_string(*t.head));
    }
  }
  if (gold_tree && roots != 1)
    warn("sentence '" + s.sent_id + "': " + std::to_string(roots) + " root tokens");

  assign_char_spans(s);
  return s;
}

inline Corpus parse_conllu(std::string_view text, Warnings* warnings = nullptr) {
  Corpus corpus;
  for (const auto& raw : parse_conllu_raw(text))
    corpus.push_back(filter_abstract_nodes(raw, warnings));
  return corpus;
}

// Lines of one sentence, each terminated by '\n', without the blank separator.
inline std::string serialize(const Sentence& s) {
  std::string out;
  for (const auto& c : s.comments) {
    out += c;
    out += '\n';
  }
  std::size_t next_range = 0;
  for (const auto& t : s.tokens) {
    while (next_range < s.ranges.size() && s.ranges[next_range].first <= t.id) {
      const auto& r = s.ranges[next_range++];
      out += std::to_string(r.first) + "-" + std::to_string(r.last);
      for (const auto& col : r.columns) {
        out += '\t';
        out += col;
      }
      out += '\n';
    }
    const std::string head = t.head ? std::to_string(*t.head) : "_";
    const std::string& deprel = t.deprel ? *t.deprel : std::string("_");
    out += std::to_string(t.id);
    for (const std::string& col :
         {t.form, t.lemma, t.upos, t.xpos, t.feats_raw, head, deprel, t.deps, t.misc}) {
      out += '\t';
      out += col;
    }
    out += '\n';
  }
  return out;
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus) {
    out += serialize(s);
    out += '\n';
  }
  return out;
}

// Builds a forms-only sentence (all tokens function, no annotations).
inline Sentence sentence_from_forms(const std::vector<std::string>& forms,
                                    const std::string& sent_id) {
  Sentence s;
  s.sent_id = sent_id;
  std::string text;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    if (i) text += ' ';
    text += forms[i];
  }
  s.text = text;
  s.comments = {"# sent_id = " + sent_id, "# text = " + text};
  for (std::size_t i = 0; i < forms.size(); ++i) {
    Token t;
    t.id = static_cast<int>(i + 1);
    t.form = forms[i];
    s.tokens.push_back(std::move(t));
  }
  assign_char_spans(s);
  return s;
}

// One pre-tokenized sentence per non-blank line, tokens separated by spaces.
inline Corpus parse_plain_text(std::string_view text) {
  Corpus corpus;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream words(line);
    std::vector<std::string> forms;
    std::string w;
    while (words >> w) forms.push_back(w);
    if (forms.empty()) continue;
    corpus.push_back(sentence_from_forms(forms, std::to_string(corpus.size() + 1)));
  }
  return corpus;
}

class FeatureVocabulary {
 public:
  FeatureVocabulary() = default;
  FeatureVocabulary(std::vector<AtomicFeature> features, std::vector<std::string> deprels)
      : features_(std::move(features)), deprels_(std::move(deprels)), frozen_(true) {
    reindex();
  }

  const std::vector<AtomicFeature>& features() const { return features_; }
  const std::vector<std::string>& deprels() const { return deprels_; }
  bool frozen() const { return frozen_; }
  std::size_t feature_count() const { return features_.size(); }
  std::size_t deprel_count() const { return deprels_.size(); }

  std::optional<std::size_t> feature_index(const AtomicFeature& f) const {
    auto it = feature_index_.find(f);
    if (it == feature_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> deprel_index(const std::string& d) const {
    auto it = deprel_index_.find(d);
    if (it == deprel_index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const FeatureVocabulary& o) const {
    return features_ == o.features_ && deprels_ == o.deprels_;
  }

 private:
  void reindex() {
    feature_index_.clear();
    deprel_index_.clear();
    for (std::size_t i = 0; i < features_.size(); ++i) feature_index_.emplace(features_[i], i);
    for (std::size_t i = 0; i < deprels_.size(); ++i) deprel_index_.emplace(deprels_[i], i);
  }

  std::vector<AtomicFeature> features_;
  std::vector<std::string> deprels_;
  std::map<AtomicFeature, std::size_t> feature_index_;
  std::map<std::string, std::size_t> deprel_index_;
  bool frozen_ = false;
};

// Every atomic feature and deprel on content words, sorted; the result is
// independent of sentence order.
inline FeatureVocabulary build_feature_vocab(const Corpus& corpus) {
  std::set<AtomicFeature> feats;
  std::set<std::string> deprels;
  bool any_content = false;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) {
      if (!t.is_content) continue;
      any_content = true;
      feats.insert(t.feats.begin(), t.feats.end());
      if (t.deprel) deprels.insert(*t.deprel);
    }
  }
  if (!any_content) throw ConfigError("cannot build a vocabulary: corpus has no content words");
  return FeatureVocabulary({feats.begin(), feats.end()}, {deprels.begin(), deprels.end()});
}

// Seeded shuffle; the first ceil(ratio * n) sentences (clamped to [1, n-1])
// go to the first part.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double ratio,
                                              std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("split ratio must lie in (0, 1), got " + std::to_string(ratio));
  const std::size_t n = corpus.size();
  if (n < 2) throw ConfigError("cannot split a corpus of fewer than 2 sentences");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  auto first = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  first = std::clamp<std::size_t>(first, 1, n - 1);
  std::pair<Corpus, Corpus> out;
  for (std::size_t i = 0; i < n; ++i)
    (i < first ? out.first : out.second).push_back(corpus[order[i]]);
  return out;
}

}  // namespace mosyn
