#pragma once

// The three task heads that read the shared token representation.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mosyn/numkern.hpp"
#include "mosyn/treecrf.hpp"

namespace mosyn {

constexpr int kContent = 0;
constexpr int kFunction = 1;

// dense -> layer norm -> ReLU
struct Mlp {
  DenseLayer dense;
  LayerNorm norm;

  struct Cache {
    Matrix X;
    LayerNorm::Cache ln;
    Matrix Y;
  };

  Mlp() = default;
  Mlp(const std::string& name, Eigen::Index in, Eigen::Index out)
      : dense(name, in, out), norm(name + ".ln", out) {}

  Matrix forward(const Matrix& X, Cache& c) const {
    c.X = X;
    c.Y = relu(norm.forward(dense.forward(X), c.ln));
    return c.Y;
  }

  Matrix backward(Cache& c, const Matrix& dY) {
    return dense.backward(c.X, norm.backward(c.ln, relu_backward(c.Y, dY)));
  }

  ParamList params() { return {&dense.W, &dense.b, &norm.gain, &norm.bias}; }
};

struct HeadLoss {
  double loss = 0.0;
  Matrix dlogits;
};

// Content word identification: word dropout, 256-unit ReLU layer with
// dropout, then two logits (content, function).
struct CwiHead {
  DenseLayer hidden;
  DenseLayer out;
  double dropout_rate = 0.5;
  std::array<double, 2> class_weights{1.0, 1.0};

  struct Cache {
    Dropout word_drop;
    Matrix Z;
    Matrix A;
    Dropout drop;
    Matrix Ad;
  };

  CwiHead() = default;
  CwiHead(Eigen::Index in, Eigen::Index hidden_dim, double rate)
      : hidden("cwi.hidden", in, hidden_dim), out("cwi.out", hidden_dim, 2), dropout_rate(rate) {}

  Matrix forward(const Matrix& H, double word_dropout, Rng* rng, bool training, Cache& c) const {
    c.Z = c.word_drop.forward_rows(H, word_dropout, rng, training);
    c.A = relu(hidden.forward(c.Z));
    c.Ad = c.drop.forward(c.A, dropout_rate, rng, training);
    return out.forward(c.Ad);
  }

  Matrix backward(Cache& c, const Matrix& dlogits) {
    Matrix dA = c.drop.backward(out.backward(c.Ad, dlogits));
    return c.word_drop.backward(hidden.backward(c.Z, relu_backward(c.A, dA)));
  }

  ParamList params() { return {&hidden.W, &hidden.b, &out.W, &out.b}; }
};

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) p.row(i) = softmax(logits.row(i));
  return p;
}

// Inverse class frequency, rescaled to mean 1. Absent classes count as 1.
inline std::array<double, 2> inverse_frequency_weights(std::size_t content, std::size_t function) {
  const double inv_c = 1.0 / static_cast<double>(std::max<std::size_t>(content, 1));
  const double inv_f = 1.0 / static_cast<double>(std::max<std::size_t>(function, 1));
  const double mean = 0.5 * (inv_c + inv_f);
  return {inv_c / mean, inv_f / mean};
}

// Sum of weighted cross-entropy over tokens divided by `normalizer`
// (token count when 0).
inline HeadLoss cwi_loss(const Matrix& logits, std::span<const int> gold,
                         const std::array<double, 2>& weights, double normalizer = 0.0) {
  if (static_cast<Eigen::Index>(gold.size()) != logits.rows())
    throw DimensionError("cwi gold label count does not match logits");
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(std::max<std::size_t>(gold.size(), 1));
  HeadLoss out;
  out.dlogits.resize(logits.rows(), 2);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto r = weighted_softmax_ce(logits.row(i), gold[static_cast<std::size_t>(i)], weights);
    out.loss += r.loss;
    out.dlogits.row(i) = r.dlogits / norm;
  }
  out.loss /= norm;
  return out;
}

// Biaffine arc and relation scorer over content words. Head candidates are
// the learned root vector followed by the content rows.
struct BiaffineHead {
  Mlp arc_dep, arc_head, rel_dep, rel_head;
  Param U_arc;       // A x A
  Param u_arc;       // 1 x A
  Param U_rel;       // (R*K) x K, block r is U_r
  Param u_rel_dep;   // R x K
  Param u_rel_head;  // R x K
  Param b_rel;       // 1 x R
  Param root;        // 1 x shared

  struct ArcCache {
    Matrix Hh;
    Mlp::Cache dep, head;
    Matrix Rd, Rh;
  };

  struct RelCache {
    Matrix Hh;
    Mlp::Cache dep, head;
    Matrix Q, K;
    Heads heads;
  };

  BiaffineHead() = default;
  BiaffineHead(Eigen::Index shared, Eigen::Index arc_dim, Eigen::Index rel_dim, Eigen::Index relations)
      : arc_dep("arc_dep", shared, arc_dim),
        arc_head("arc_head", shared, arc_dim),
        rel_dep("rel_dep", shared, rel_dim),
        rel_head("rel_head", shared, rel_dim),
        U_arc("arc.U", arc_dim, arc_dim),
        u_arc("arc.u", 1, arc_dim),
        U_rel("rel.U", relations * rel_dim, rel_dim),
        u_rel_dep("rel.u_dep", relations, rel_dim),
        u_rel_head("rel.u_head", relations, rel_dim),
        b_rel("rel.b", 1, relations),
        root("root", 1, shared) {}

  Eigen::Index relations() const { return b_rel.value.cols(); }
  Eigen::Index rel_dim() const { return U_rel.value.cols(); }

  void init(Rng& rng) {
    for (Mlp* m : {&arc_dep, &arc_head, &rel_dep, &rel_head}) m->dense.init(rng);
    const double a = std::sqrt(3.0 / static_cast<double>(U_arc.value.cols()));
    init_uniform(U_arc.value, a, rng);
    init_uniform(U_rel.value, std::sqrt(3.0 / static_cast<double>(rel_dim())), rng);
    init_uniform(root.value, 1.0, rng);
  }

  Matrix head_inputs(const Matrix& Hc) const {
    Matrix Hh(Hc.rows() + 1, Hc.cols());
    Hh.row(0) = root.value.row(0);
    Hh.bottomRows(Hc.rows()) = Hc;
    return Hh;
  }

  // S[h][d] = Rd[d] U Rh[h]^T + u . Rh[h]
  ArcScores arc_scores(const Matrix& Hc, ArcCache& c) const {
    if (Hc.rows() < 1) throw DimensionError("arc scoring needs at least one content word");
    c.Hh = head_inputs(Hc);
    c.Rd = arc_dep.forward(Hc, c.dep);
    c.Rh = arc_head.forward(c.Hh, c.head);
    Matrix S = c.Rh * U_arc.value.transpose() * c.Rd.transpose();
    S.colwise() += c.Rh * u_arc.value.row(0).transpose();
    return ArcScores(std::move(S));
  }

  // Returns dHc; the root row's gradient goes to `root`.
  Matrix arc_backward(ArcCache& c, const Matrix& dS) {
    U_arc.grad.noalias() += c.Rd.transpose() * dS.transpose() * c.Rh;
    const Eigen::VectorXd row_sums = dS.rowwise().sum();
    u_arc.grad.row(0) += (c.Rh.transpose() * row_sums).transpose();
    Matrix dRh = dS * c.Rd * U_arc.value;
    dRh += row_sums * u_arc.value.row(0);
    Matrix dRd = dS.transpose() * c.Rh * U_arc.value.transpose();
    Matrix dHh = arc_head.backward(c.head, dRh);
    Matrix dHc = arc_dep.backward(c.dep, dRd);
    root.grad.row(0) += dHh.row(0);
    dHc += dHh.bottomRows(dHc.rows());
    return dHc;
  }

  // logit[d][r] = q_d U_r k_h^T + a_r . q_d + b_r . k_h + c_r with h = heads[d]
  Matrix rel_logits(const Matrix& Hc, const Heads& heads, RelCache& c) const {
    const Eigen::Index m = Hc.rows();
    if (static_cast<Eigen::Index>(heads.size()) != m)
      throw DimensionError("head count does not match content rows");
    for (int h : heads)
      if (h < 0 || h > m) throw DimensionError("head index " + std::to_string(h) + " out of range");
    c.Hh = head_inputs(Hc);
    c.Q = rel_dep.forward(Hc, c.dep);
    c.K = rel_head.forward(c.Hh, c.head);
    c.heads = heads;
    const Eigen::Index R = relations(), Kd = rel_dim();
    Matrix logits(m, R);
    for (Eigen::Index d = 0; d < m; ++d) {
      const RowVector k = c.K.row(heads[static_cast<std::size_t>(d)]);
      const RowVector q = c.Q.row(d);
      Eigen::VectorXd Uk = U_rel.value * k.transpose();  // (R*K)
      Eigen::Map<const Matrix> T(Uk.data(), R, Kd);
      logits.row(d) = (T * q.transpose() + u_rel_dep.value * q.transpose() +
                       u_rel_head.value * k.transpose())
                          .transpose() +
                      b_rel.value.row(0);
    }
    return logits;
  }

  Matrix rel_backward(RelCache& c, const Matrix& dlogits) {
    const Eigen::Index m = c.Q.rows(), R = relations(), Kd = rel_dim();
    Matrix dQ = Matrix::Zero(m, Kd);
    Matrix dK = Matrix::Zero(c.K.rows(), Kd);
    for (Eigen::Index d = 0; d < m; ++d) {
      const Eigen::Index h = c.heads[static_cast<std::size_t>(d)];
      const RowVector k = c.K.row(h);
      const RowVector q = c.Q.row(d);
      const RowVector g = dlogits.row(d);
      Eigen::VectorXd Uk = U_rel.value * k.transpose();
      Eigen::Map<const Matrix> T(Uk.data(), R, Kd);
      dQ.row(d) += g * (T + u_rel_dep.value);
      Matrix W = Matrix::Zero(Kd, Kd);  // sum_r g_r U_r
      for (Eigen::Index r = 0; r < R; ++r) {
        if (g(r) == 0.0) continue;
        W += g(r) * U_rel.value.block(r * Kd, 0, Kd, Kd);
        U_rel.grad.block(r * Kd, 0, Kd, Kd).noalias() += g(r) * (q.transpose() * k);
      }
      dK.row(h) += q * W + g * u_rel_head.value;
      u_rel_dep.grad.noalias() += g.transpose() * q;
      u_rel_head.grad.noalias() += g.transpose() * k;
      b_rel.grad.row(0) += g;
    }
    Matrix dHh = rel_head.backward(c.head, dK);
    Matrix dHc = rel_dep.backward(c.dep, dQ);
    root.grad.row(0) += dHh.row(0);
    dHc += dHh.bottomRows(m);
    return dHc;
  }

  ParamList params() {
    ParamList out;
    for (Mlp* m : {&arc_dep, &arc_head, &rel_dep, &rel_head})
      for (Param* p : m->params()) out.push_back(p);
    for (Param* p : {&U_arc, &u_arc, &U_rel, &u_rel_dep, &u_rel_head, &b_rel, &root}) out.push_back(p);
    return out;
  }
};

// Multi-label feature classifier: one logit per atomic feature.
struct FeatsHead {
  DenseLayer out;
  double threshold = 0.5;

  FeatsHead() = default;
  FeatsHead(Eigen::Index in, Eigen::Index features) : out("feats.out", in, features) {}

  Matrix forward(const Matrix& Hc) const { return out.forward(Hc); }
  Matrix backward(const Matrix& Hc, const Matrix& dlogits) { return out.backward(Hc, dlogits); }

  static Matrix probabilities(const Matrix& logits) {
    return logits.unaryExpr([](double x) { return sigmoid(x); });
  }

  // Feature indices with probability >= threshold.
  std::vector<int> predict(const RowVector& probs) const {
    std::vector<int> out_idx;
    for (Eigen::Index k = 0; k < probs.size(); ++k)
      if (probs(k) >= threshold) out_idx.push_back(static_cast<int>(k));
    return out_idx;
  }

  ParamList params() { return out.params(); }
};

// BCE summed over the vocabulary, summed over tokens, divided by `normalizer`
// (token count when 0). Gold lists hold vocabulary indices.
inline HeadLoss feats_loss(const Matrix& logits, const std::vector<std::vector<int>>& gold,
                           double normalizer = 0.0) {
  if (static_cast<Eigen::Index>(gold.size()) != logits.rows())
    throw DimensionError("feature gold count does not match logits");
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(std::max<std::size_t>(gold.size(), 1));
  HeadLoss res;
  res.dlogits.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    RowVector target = RowVector::Zero(logits.cols());
    for (int k : gold[static_cast<std::size_t>(i)]) target(k) = 1.0;
    auto r = sigmoid_bce(logits.row(i), target);
    res.loss += r.loss;
    res.dlogits.row(i) = r.dlogits / norm;
  }
  res.loss /= norm;
  return res;
}

}  // namespace mosyn
