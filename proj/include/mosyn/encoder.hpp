#pragma once

// Per-token input vectors. The default provider hashes lexical features of
// each form into a trainable bucket table; the external provider replays
// vectors exported by some other encoder.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mosyn/conllu.hpp"
#include "mosyn/errors.hpp"
#include "mosyn/numkern.hpp"

namespace mosyn {

enum class EncoderProvider { hashed_features, external_file };

struct EncoderConfig {
  int dim = 128;
  std::uint32_t hash_buckets = 1u << 18;
  int window = 2;
  EncoderProvider provider = EncoderProvider::hashed_features;

  void validate() const {
    if (dim <= 0) throw ConfigError("encoder dim must be positive");
    if (hash_buckets == 0) throw ConfigError("hash_buckets must be positive");
    if (window < 0 || window > 5) throw ConfigError("encoder window must lie in [0, 5]");
  }
  int context_dim() const { return dim * (2 * window + 1); }
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Byte offsets of UTF-8 code point starts, plus the end offset.
inline std::vector<std::size_t> codepoint_offsets(std::string_view s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) out.push_back(i);
  out.push_back(s.size());
  return out;
}

}  // namespace detail

// Feature strings for one form: lowercase form, 1-3 code point prefixes and
// suffixes, and shape flags.
inline std::vector<std::string> token_features(std::string_view form) {
  if (form.empty()) throw FormatError("cannot encode an empty token form");
  std::string lower(form);
  for (auto& c : lower)
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::vector<std::string> feats{"w:" + lower};
  const auto cps = detail::codepoint_offsets(lower);
  const std::size_t len = cps.size() - 1;
  for (std::size_t k = 1; k <= 3; ++k) {
    const std::size_t take = std::min(k, len);
    feats.push_back("p" + std::to_string(k) + ":" + lower.substr(0, cps[take]));
    feats.push_back("s" + std::to_string(k) + ":" + lower.substr(cps[len - take]));
  }
  const auto first = static_cast<unsigned char>(form.front());
  if (std::isupper(first)) feats.emplace_back("shape:cap");
  auto all = [&](auto pred) {
    return std::all_of(form.begin(), form.end(),
                       [&](char c) { return pred(static_cast<unsigned char>(c)); });
  };
  if (all([](unsigned char c) { return std::isdigit(c) != 0; })) feats.emplace_back("shape:digit");
  if (all([](unsigned char c) { return std::ispunct(c) != 0; })) feats.emplace_back("shape:punct");
  return feats;
}

inline std::vector<std::uint32_t> token_buckets(std::string_view form, std::uint32_t buckets) {
  std::vector<std::uint32_t> out;
  for (const auto& f : token_features(form))
    out.push_back(static_cast<std::uint32_t>(detail::fnv1a(f) % buckets));
  return out;
}

// Bucket table of hash_buckets x dim, stored sparsely. A row's initial value
// is a pure function of (seed, bucket), so rows that were never trained read
// the same as they would from a dense table.
class HashedEncoder {
 public:
  struct Cache {
    std::vector<std::vector<Eigen::Index>> rows;  // table rows per token
  };

  HashedEncoder() = default;
  HashedEncoder(const EncoderConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), seed_(seed), table_("encoder.buckets", 0, cfg.dim) {
    cfg_.validate();
    table_.lazy_rows = true;
  }

  const EncoderConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  Param& table() { return table_; }
  const std::vector<std::uint32_t>& materialized_buckets() const { return bucket_of_row_; }

  RowVector initial_row(std::uint32_t bucket) const {
    RowVector row(cfg_.dim);
    for (int k = 0; k < cfg_.dim; ++k) {
      const std::uint64_t bits = detail::splitmix64(
          seed_ ^ detail::splitmix64((static_cast<std::uint64_t>(bucket) << 16) + static_cast<std::uint64_t>(k)));
      row(k) = 2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0;
    }
    return row;
  }

  // Training-mode encoding: rows are materialized and recorded for backward.
  Matrix encode(const std::vector<std::string>& forms, Cache& cache) {
    Matrix E(static_cast<Eigen::Index>(forms.size()), cfg_.dim);
    cache.rows.assign(forms.size(), {});
    for (std::size_t i = 0; i < forms.size(); ++i) {
      RowVector acc = RowVector::Zero(cfg_.dim);
      for (std::uint32_t b : token_buckets(forms[i], cfg_.hash_buckets)) {
        const Eigen::Index r = materialize(b);
        cache.rows[i].push_back(r);
        acc += table_.value.row(r);
      }
      E.row(static_cast<Eigen::Index>(i)) = acc / static_cast<double>(cache.rows[i].size());
    }
    return E;
  }

  // Read-only encoding for inference.
  Matrix encode(const std::vector<std::string>& forms) const {
    Matrix E(static_cast<Eigen::Index>(forms.size()), cfg_.dim);
    for (std::size_t i = 0; i < forms.size(); ++i) {
      RowVector acc = RowVector::Zero(cfg_.dim);
      const auto buckets = token_buckets(forms[i], cfg_.hash_buckets);
      for (std::uint32_t b : buckets) {
        auto it = row_of_.find(b);
        acc += it == row_of_.end() ? initial_row(b) : RowVector(table_.value.row(it->second));
      }
      E.row(static_cast<Eigen::Index>(i)) = acc / static_cast<double>(buckets.size());
    }
    return E;
  }

  void backward(const Cache& cache, const Matrix& dE) {
    for (std::size_t i = 0; i < cache.rows.size(); ++i) {
      const double scale = 1.0 / static_cast<double>(cache.rows[i].size());
      for (Eigen::Index r : cache.rows[i]) {
        table_.grad.row(r) += dE.row(static_cast<Eigen::Index>(i)) * scale;
        table_.touch_row(r);
      }
    }
  }

  // Restores a saved table (checkpoint loading).
  void restore(const std::vector<std::uint32_t>& buckets, const Matrix& values) {
    if (values.rows() != static_cast<Eigen::Index>(buckets.size()) || values.cols() != cfg_.dim)
      throw FormatError("bucket table shape does not match bucket list");
    table_ = Param("encoder.buckets", 0, cfg_.dim);
    table_.lazy_rows = true;
    row_of_.clear();
    bucket_of_row_.clear();
    for (std::size_t i = 0; i < buckets.size(); ++i) {
      row_of_.emplace(buckets[i], static_cast<Eigen::Index>(i));
      bucket_of_row_.push_back(buckets[i]);
      table_.append_row(values.row(static_cast<Eigen::Index>(i)));
    }
  }

 private:
  Eigen::Index materialize(std::uint32_t bucket) {
    auto it = row_of_.find(bucket);
    if (it != row_of_.end()) return it->second;
    const Eigen::Index r = table_.value.rows();
    table_.append_row(initial_row(bucket));
    row_of_.emplace(bucket, r);
    bucket_of_row_.push_back(bucket);
    return r;
  }

  EncoderConfig cfg_;
  std::uint64_t seed_ = 0;
  Param table_;
  std::unordered_map<std::uint32_t, Eigen::Index> row_of_;
  std::vector<std::uint32_t> bucket_of_row_;
};

// Row i becomes rows i-w..i+w concatenated, zero-padded at the edges.
inline Matrix contextualize(const Matrix& H, int window) {
  if (window < 0) throw ConfigError("window must be non-negative");
  const Eigen::Index n = H.rows();
  const Eigen::Index d = H.cols();
  Matrix X = Matrix::Zero(n, d * (2 * window + 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int off = -window; off <= window; ++off) {
      const Eigen::Index j = i + off;
      if (j < 0 || j >= n) continue;
      X.block(i, (off + window) * d, 1, d) = H.row(j);
    }
  }
  return X;
}

inline Matrix contextualize_backward(const Matrix& dX, int window, Eigen::Index dim) {
  const Eigen::Index n = dX.rows();
  Matrix dH = Matrix::Zero(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int off = -window; off <= window; ++off) {
      const Eigen::Index j = i + off;
      if (j < 0 || j >= n) continue;
      dH.row(j) += dX.block(i, (off + window) * dim, 1, dim);
    }
  }
  return dH;
}

// ReLU(dense(X)) with dropout; the single representation all heads read.
struct SharedLayer {
  DenseLayer dense;
  double dropout_rate = 0.1;

  struct Cache {
    Matrix X;
    Matrix activated;
    Dropout drop;
  };

  SharedLayer() = default;
  SharedLayer(Eigen::Index in, Eigen::Index out, double rate)
      : dense("shared", in, out), dropout_rate(rate) {
    check_rate(rate);
  }

  Matrix forward(const Matrix& X, Rng* rng, bool training, Cache& cache) const {
    cache.X = X;
    cache.activated = relu(dense.forward(X));
    return cache.drop.forward(cache.activated, dropout_rate, rng, training);
  }

  Matrix backward(Cache& cache, const Matrix& dH) {
    Matrix d = relu_backward(cache.activated, cache.drop.backward(dH));
    return dense.backward(cache.X, d);
  }

  ParamList params() { return dense.params(); }
};

// Precomputed vectors: one blank-line separated block per sentence, one
// `form<TAB>v1 v2 ...` line per token.
class ExternalEmbeddings {
 public:
  static ExternalEmbeddings load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open embeddings file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  static ExternalEmbeddings parse(const std::string& text) {
    ExternalEmbeddings out;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> forms;
    auto flush = [&] {
      if (rows.empty()) return;
      Matrix m(static_cast<Eigen::Index>(rows.size()), out.dim_);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int k = 0; k < out.dim_; ++k) m(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
      out.sentences_.push_back(std::move(m));
      out.forms_.push_back(std::move(forms));
      rows.clear();
      forms.clear();
    };
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (detail::is_blank(line)) {
        flush();
        continue;
      }
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError("line " + std::to_string(line_no) + ": missing tab");
      std::vector<double> values;
      const char* p = line.c_str() + tab + 1;
      for (;;) {
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (end == p) break;
        values.push_back(v);
        p = end;
      }
      while (*p == ' ') ++p;
      if (*p != '\0') throw FormatError("line " + std::to_string(line_no) + ": invalid number");
      if (values.empty()) throw FormatError("line " + std::to_string(line_no) + ": no values");
      if (out.dim_ == 0) out.dim_ = static_cast<int>(values.size());
      if (static_cast<int>(values.size()) != out.dim_)
        throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(out.dim_) +
                          " values, found " + std::to_string(values.size()));
      forms.push_back(line.substr(0, tab));
      rows.push_back(std::move(values));
    }
    flush();
    if (out.sentences_.empty()) throw FormatError("embeddings file contains no vectors");
    return out;
  }

  int dim() const { return dim_; }
  std::size_t size() const { return sentences_.size(); }
  const Matrix& sentence(std::size_t i) const { return sentences_.at(i); }

  // Sentence and token counts must match the corpus, in order.
  void check_alignment(const Corpus& corpus) const {
    if (corpus.size() != sentences_.size())
      throw AlignmentError("embeddings hold " + std::to_string(sentences_.size()) +
                           " sentences, corpus has " + std::to_string(corpus.size()));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (static_cast<Eigen::Index>(corpus[i].size()) != sentences_[i].rows())
        throw AlignmentError("sentence " + std::to_string(i + 1) + " ('" + corpus[i].sent_id +
                             "'): " + std::to_string(corpus[i].size()) + " tokens but " +
                             std::to_string(sentences_[i].rows()) + " vectors");
    }
  }

 private:
  int dim_ = 0;
  std::vector<Matrix> sentences_;
  std::vector<std::vector<std::string>> forms_;
};

}  // namespace mosyn
