#pragma once

// Exact inference over single-root projective dependency trees.
//
// Scores are an (n+1) x n matrix: row h is the head (0 = root), column d-1 is
// dependent d. All charts run in log space over tokens 1..n; the root is
// attached last, which is what restricts it to exactly one child.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mosyn/errors.hpp"
#include "mosyn/numkern.hpp"

namespace mosyn {

struct ArcScores {
  Matrix S;  // (n+1) x n

  ArcScores() = default;
  explicit ArcScores(Matrix s) : S(std::move(s)) {
    if (S.cols() < 1 || S.rows() != S.cols() + 1)
      throw DimensionError("arc scores must be (n+1) x n with n >= 1");
  }
  static ArcScores zeros(int n) { return ArcScores(Matrix::Zero(n + 1, n)); }

  int n() const { return static_cast<int>(S.cols()); }
  double operator()(int head, int dep) const { return S(head, dep - 1); }
  double& operator()(int head, int dep) { return S(head, dep - 1); }
};

struct TreeDistribution {
  double logZ = 0.0;
  Matrix marginals;  // same layout as ArcScores::S
};

// Head vector: heads[d-1] is the head of token d.
using Heads = std::vector<int>;

class NonProjectiveTree : public Error {
 public:
  using Error::Error;
};

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Square chart indexed [i][j] for 1 <= i <= j <= n.
struct Chart {
  int n = 0;
  std::vector<double> cells;
  explicit Chart(int n_, double init = kNegInf)
      : n(n_), cells(static_cast<std::size_t>((n_ + 2) * (n_ + 2)), init) {}
  double& operator()(int i, int j) { return cells[static_cast<std::size_t>(i * (n + 2) + j)]; }
  double operator()(int i, int j) const {
    return cells[static_cast<std::size_t>(i * (n + 2) + j)];
  }
};

struct InsideCharts {
  Chart acc, Ir, Il, Cr, Cl;
  explicit InsideCharts(int n) : acc(n), Ir(n), Il(n), Cr(n), Cl(n) {}
};

inline double inside(const ArcScores& s, InsideCharts& c) {
  const int n = s.n();
  for (int i = 1; i <= n; ++i) {
    c.Cr(i, i) = 0.0;
    c.Cl(i, i) = 0.0;
  }
  for (int w = 1; w < n; ++w) {
    for (int i = 1; i + w <= n; ++i) {
      const int j = i + w;
      double acc = kNegInf;
      for (int r = i; r < j; ++r) acc = lse2(acc, c.Cr(i, r) + c.Cl(r + 1, j));
      c.acc(i, j) = acc;
      c.Ir(i, j) = acc + s(i, j);
      c.Il(i, j) = acc + s(j, i);
      double cr = kNegInf;
      for (int r = i + 1; r <= j; ++r) cr = lse2(cr, c.Ir(i, r) + c.Cr(r, j));
      c.Cr(i, j) = cr;
      double cl = kNegInf;
      for (int r = i; r < j; ++r) cl = lse2(cl, c.Cl(i, r) + c.Il(r, j));
      c.Cl(i, j) = cl;
    }
  }
  double z = kNegInf;
  for (int k = 1; k <= n; ++k) z = lse2(z, s(0, k) + c.Cl(1, k) + c.Cr(k, n));
  return z;
}

inline void check_finite(const ArcScores& s) {
  if (!s.S.allFinite()) throw NumericError("arc scores contain non-finite entries");
}

}  // namespace detail

inline double inside_log_partition(const ArcScores& s) {
  if (s.n() < 1) throw DimensionError("tree CRF needs at least one token");
  detail::check_finite(s);
  detail::InsideCharts c(s.n());
  return detail::inside(s, c);
}

// Outside pass written as the adjoint of the inside recursion: the adjoint of
// each arc score is its marginal probability.
inline TreeDistribution marginals(const ArcScores& s) {
  if (s.n() < 1) throw DimensionError("tree CRF needs at least one token");
  detail::check_finite(s);
  const int n = s.n();
  detail::InsideCharts c(n);
  TreeDistribution out;
  out.logZ = detail::inside(s, c);
  out.marginals = Matrix::Zero(n + 1, n);

  detail::Chart aIr(n, 0.0), aIl(n, 0.0), aCr(n, 0.0), aCl(n, 0.0);
  for (int k = 1; k <= n; ++k) {
    const double p = std::exp(s(0, k) + c.Cl(1, k) + c.Cr(k, n) - out.logZ);
    out.marginals(0, k - 1) = p;
    aCl(1, k) += p;
    aCr(k, n) += p;
  }
  for (int w = n - 1; w >= 1; --w) {
    for (int i = 1; i + w <= n; ++i) {
      const int j = i + w;
      if (const double a = aCl(i, j); a != 0.0) {
        for (int r = i; r < j; ++r) {
          const double p = a * std::exp(c.Cl(i, r) + c.Il(r, j) - c.Cl(i, j));
          aCl(i, r) += p;
          aIl(r, j) += p;
        }
      }
      if (const double a = aCr(i, j); a != 0.0) {
        for (int r = i + 1; r <= j; ++r) {
          const double p = a * std::exp(c.Ir(i, r) + c.Cr(r, j) - c.Cr(i, j));
          aIr(i, r) += p;
          aCr(r, j) += p;
        }
      }
      out.marginals(i, j - 1) = aIr(i, j);
      out.marginals(j, i - 1) = aIl(i, j);
      if (const double a = aIr(i, j) + aIl(i, j); a != 0.0) {
        for (int r = i; r < j; ++r) {
          const double p = a * std::exp(c.Cr(i, r) + c.Cl(r + 1, j) - c.acc(i, j));
          aCr(i, r) += p;
          aCl(r + 1, j) += p;
        }
      }
    }
  }
  return out;
}

// Tree validity: one root child, every token reaches the root, no crossing
// arcs (each arc's span is inside the head's subtree).
inline bool is_projective_tree(const Heads& heads) {
  const int n = static_cast<int>(heads.size());
  if (n == 0) return false;
  int roots = 0;
  for (int d = 1; d <= n; ++d) {
    const int h = heads[d - 1];
    if (h < 0 || h > n || h == d) return false;
    if (h == 0) ++roots;
  }
  if (roots != 1) return false;
  // ancestor test with cycle detection
  auto dominates = [&](int anc, int node) {
    for (int steps = 0; steps <= n; ++steps) {
      if (node == anc) return true;
      if (node == 0) return false;
      node = heads[node - 1];
    }
    return false;
  };
  for (int d = 1; d <= n; ++d)
    if (!dominates(0, d)) return false;
  for (int d = 1; d <= n; ++d) {
    const int h = heads[d - 1];
    for (int k = std::min(h, d) + 1; k < std::max(h, d); ++k)
      if (!dominates(h, k)) return false;
  }
  return true;
}

inline double tree_score(const ArcScores& s, const Heads& heads) {
  double total = 0.0;
  for (int d = 1; d <= static_cast<int>(heads.size()); ++d) total += s(heads[d - 1], d);
  return total;
}

namespace detail {

struct ViterbiResult {
  double score = kNegInf;
  Heads heads;
  bool tie = false;
};

inline bool near(double a, double b) {
  if (a == kNegInf || b == kNegInf) return a == b;
  return std::abs(a - b) <= 1e-10 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Max-product Eisner with backpointers. The first (smallest split) argmax wins;
// `tie` records whether any choice was ambiguous.
inline ViterbiResult viterbi(const ArcScores& s) {
  const int n = s.n();
  Chart acc(n), Ir(n), Il(n), Cr(n), Cl(n);
  std::vector<int> bacc(static_cast<std::size_t>((n + 2) * (n + 2)), -1);
  auto bCr = bacc, bCl = bacc;
  auto idx = [n](int i, int j) { return static_cast<std::size_t>(i * (n + 2) + j); };
  ViterbiResult res;
  auto better = [&](double cand, double& best, int& arg, int r) {
    if (arg < 0) {
      best = cand;
      arg = r;
    } else if (near(cand, best)) {
      if (cand != kNegInf) res.tie = true;
    } else if (cand > best) {
      best = cand;
      arg = r;
    }
  };
  for (int i = 1; i <= n; ++i) {
    Cr(i, i) = 0.0;
    Cl(i, i) = 0.0;
  }
  for (int w = 1; w < n; ++w) {
    for (int i = 1; i + w <= n; ++i) {
      const int j = i + w;
      double best = kNegInf;
      int arg = -1;
      for (int r = i; r < j; ++r) better(Cr(i, r) + Cl(r + 1, j), best, arg, r);
      acc(i, j) = best;
      bacc[idx(i, j)] = arg;
      Ir(i, j) = best + s(i, j);
      Il(i, j) = best + s(j, i);
      best = kNegInf;
      arg = -1;
      for (int r = i + 1; r <= j; ++r) better(Ir(i, r) + Cr(r, j), best, arg, r);
      Cr(i, j) = best;
      bCr[idx(i, j)] = arg;
      best = kNegInf;
      arg = -1;
      for (int r = i; r < j; ++r) better(Cl(i, r) + Il(r, j), best, arg, r);
      Cl(i, j) = best;
      bCl[idx(i, j)] = arg;
    }
  }
  double best = kNegInf;
  int root = -1;
  for (int k = 1; k <= n; ++k) better(s(0, k) + Cl(1, k) + Cr(k, n), best, root, k);
  res.score = best;
  res.heads.assign(static_cast<std::size_t>(n), -1);
  Heads& heads = res.heads;

  // explicit stack instead of recursion; kind: 0 Cr, 1 Cl, 2 Ir, 3 Il
  struct Item {
    int kind, i, j;
  };
  std::vector<Item> stack{{1, 1, root}, {0, root, n}};
  heads[root - 1] = 0;
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    if (it.i == it.j && it.kind < 2) continue;
    switch (it.kind) {
      case 0: {
        const int r = bCr[idx(it.i, it.j)];
        stack.push_back({2, it.i, r});
        stack.push_back({0, r, it.j});
        break;
      }
      case 1: {
        const int r = bCl[idx(it.i, it.j)];
        stack.push_back({1, it.i, r});
        stack.push_back({3, r, it.j});
        break;
      }
      case 2:
      case 3: {
        if (it.kind == 2) {
          heads[it.j - 1] = it.i;
        } else {
          heads[it.i - 1] = it.j;
        }
        const int r = bacc[idx(it.i, it.j)];
        stack.push_back({0, it.i, r});
        stack.push_back({1, r + 1, it.j});
        break;
      }
    }
  }
  return res;
}

}  // namespace detail

// Highest-scoring tree. Among equal-scoring trees the lexicographically
// smallest head vector is returned: when the chart saw a tie, heads are fixed
// left to right, each to the smallest head that still admits an optimal tree.
inline Heads viterbi_decode(const ArcScores& s) {
  if (s.n() < 1) throw DimensionError("tree CRF needs at least one token");
  detail::check_finite(s);
  auto res = detail::viterbi(s);
  if (!res.tie) return res.heads;

  const int n = s.n();
  const double optimum = res.score;
  ArcScores constrained = s;
  for (int d = 1; d <= n; ++d) {
    bool fixed = false;
    for (int h = 0; h <= n && !fixed; ++h) {
      if (h == d) continue;
      ArcScores trial = constrained;
      for (int g = 0; g <= n; ++g)
        if (g != h) trial(g, d) = detail::kNegInf;
      const double score = detail::viterbi(trial).score;
      if (score != detail::kNegInf && detail::near(score, optimum)) {
        constrained = std::move(trial);
        fixed = true;
      }
    }
    if (!fixed) return res.heads;
  }
  Heads heads(static_cast<std::size_t>(n));
  for (int d = 1; d <= n; ++d) {
    for (int h = 0; h <= n; ++h) {
      if (h != d && constrained(h, d) != detail::kNegInf) heads[d - 1] = h;
    }
  }
  return heads;
}

// Brute force over all (n+1)^n head vectors; test oracle only.
inline std::vector<Heads> enumerate_projective_trees(int n) {
  if (n < 1 || n > 8) throw ConfigError("tree enumeration supports 1 <= n <= 8");
  std::vector<Heads> out;
  Heads heads(static_cast<std::size_t>(n), 0);
  for (;;) {
    if (is_projective_tree(heads)) out.push_back(heads);
    int k = n - 1;
    while (k >= 0 && heads[k] == n) heads[k--] = 0;
    if (k < 0) break;
    ++heads[k];
  }
  return out;
}

struct CrfLoss {
  double loss = 0.0;
  Matrix dS;
};

// NLL of the gold tree and its gradient (marginals minus gold indicators).
inline CrfLoss crf_nll_and_grad(const ArcScores& s, const Heads& gold) {
  if (static_cast<int>(gold.size()) != s.n())
    throw DimensionError("gold head count does not match arc scores");
  if (!is_projective_tree(gold))
    throw NonProjectiveTree("gold tree is not a single-root projective tree");
  auto dist = marginals(s);
  CrfLoss out;
  out.loss = dist.logZ - tree_score(s, gold);
  out.dS = std::move(dist.marginals);
  for (int d = 1; d <= s.n(); ++d) out.dS(gold[d - 1], d - 1) -= 1.0;
  return out;
}

}  // namespace mosyn
