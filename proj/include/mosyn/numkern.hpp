#pragma once

// Small dense-layer toolkit with hand-written backward passes. Everything is
// double precision; parameters carry their own gradient and AdamW moments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mosyn/errors.hpp"

namespace mosyn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // AdamW first moment
  Matrix v;  // AdamW second moment

  // Lazily grown embedding tables only update rows touched since the last step.
  bool lazy_rows = false;
  std::vector<Eigen::Index> touched;
  std::vector<char> touched_flag;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        m(Matrix::Zero(rows, cols)),
        v(Matrix::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }

  void zero_grad() {
    if (lazy_rows) {
      for (auto r : touched) grad.row(r).setZero();
      return;
    }
    grad.setZero();
  }

  void touch_row(Eigen::Index r) {
    if (!touched_flag[static_cast<std::size_t>(r)]) {
      touched_flag[static_cast<std::size_t>(r)] = 1;
      touched.push_back(r);
    }
  }

  void clear_touched() {
    for (auto r : touched) touched_flag[static_cast<std::size_t>(r)] = 0;
    touched.clear();
  }

  void append_row(const RowVector& row) {
    const Eigen::Index r = value.rows();
    const Eigen::Index c = row.size();
    if (r == 0) {
      value.resize(0, c);
      grad.resize(0, c);
      m.resize(0, c);
      v.resize(0, c);
    }
    value.conservativeResize(r + 1, c);
    grad.conservativeResize(r + 1, c);
    m.conservativeResize(r + 1, c);
    v.conservativeResize(r + 1, c);
    value.row(r) = row;
    grad.row(r).setZero();
    m.row(r).setZero();
    v.row(r).setZero();
    touched_flag.push_back(0);
  }
};

using ParamList = std::vector<Param*>;

inline void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

inline void check_shape(const Matrix& a, Eigen::Index rows, Eigen::Index cols,
                        const char* what) {
  if (a.rows() != rows || a.cols() != cols)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
}

// Glorot-uniform fill.
inline void init_uniform(Matrix& w, double limit, Rng& rng) {
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * limit;
}

// Y = X W^T + b.
struct DenseLayer {
  Param W;
  Param b;

  DenseLayer() = default;
  DenseLayer(const std::string& name, Eigen::Index in, Eigen::Index out)
      : W(name + ".W", out, in), b(name + ".b", 1, out) {}

  Eigen::Index in_dim() const { return W.value.cols(); }
  Eigen::Index out_dim() const { return W.value.rows(); }

  void init(Rng& rng) {
    init_uniform(W.value, std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim())), rng);
    b.value.setZero();
  }

  Matrix forward(const Matrix& X) const {
    if (X.cols() != in_dim())
      throw DimensionError(W.name + ": input has " + std::to_string(X.cols()) +
                           " columns, layer expects " + std::to_string(in_dim()));
    Matrix Y = X * W.value.transpose();
    Y.rowwise() += b.value.row(0);
    return Y;
  }

  // Accumulates dW, db; returns dX.
  Matrix backward(const Matrix& X, const Matrix& dY) {
    check_shape(dY, X.rows(), out_dim(), "dense backward");
    W.grad.noalias() += dY.transpose() * X;
    b.grad.row(0) += dY.colwise().sum();
    return dY * W.value;
  }

  ParamList params() { return {&W, &b}; }
};

inline Matrix relu(const Matrix& X) { return X.cwiseMax(0.0); }

// Gradient through ReLU given its output.
inline Matrix relu_backward(const Matrix& Y, const Matrix& dY) {
  return (Y.array() > 0.0).select(dY, 0.0);
}

// Row-wise normalization over the last dimension with learned gain and bias.
struct LayerNorm {
  Param gain;
  Param bias;
  double eps = 1e-5;

  struct Cache {
    Matrix xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim)
      : gain(name + ".gain", 1, dim), bias(name + ".bias", 1, dim) {
    gain.value.setOnes();
  }

  Matrix forward(const Matrix& X, Cache& cache) const {
    const auto d = static_cast<double>(X.cols());
    cache.xhat.resize(X.rows(), X.cols());
    cache.inv_std.resize(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double mean = X.row(i).sum() / d;
      const double var = (X.row(i).array() - mean).square().sum() / d;
      const double inv = 1.0 / std::sqrt(var + eps);
      cache.inv_std(i) = inv;
      cache.xhat.row(i) = (X.row(i).array() - mean) * inv;
    }
    Matrix Y = cache.xhat.array().rowwise() * gain.value.row(0).array();
    Y.rowwise() += bias.value.row(0);
    return Y;
  }

  Matrix backward(const Cache& cache, const Matrix& dY) {
    gain.grad.row(0) += (dY.array() * cache.xhat.array()).colwise().sum().matrix();
    bias.grad.row(0) += dY.colwise().sum();
    const auto d = static_cast<double>(dY.cols());
    Matrix dxhat = dY.array().rowwise() * gain.value.row(0).array();
    Matrix dX(dY.rows(), dY.cols());
    for (Eigen::Index i = 0; i < dY.rows(); ++i) {
      const double mean_dxhat = dxhat.row(i).sum() / d;
      const double mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / d;
      dX.row(i) = cache.inv_std(i) *
                  (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat)
                      .matrix();
    }
    return dX;
  }

  ParamList params() { return {&gain, &bias}; }
};

inline void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
}

// Inverted dropout: kept units are scaled by 1/(1-rate) so evaluation is a
// plain forward pass. The mask holds the per-unit multiplier.
struct Dropout {
  Matrix mask;
  bool active = false;

  Matrix forward(const Matrix& X, double rate, Rng* rng, bool training) {
    check_rate(rate);
    active = training && rate > 0.0;
    if (!active) return X;
    mask.resize(X.rows(), X.cols());
    const double keep = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i)
      mask.data()[i] = uniform01(*rng) < rate ? 0.0 : keep;
    return X.cwiseProduct(mask);
  }

  // Whole rows (tokens) are dropped together.
  Matrix forward_rows(const Matrix& X, double rate, Rng* rng, bool training) {
    check_rate(rate);
    active = training && rate > 0.0;
    if (!active) return X;
    mask.resize(X.rows(), X.cols());
    const double keep = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      mask.row(i).setConstant(uniform01(*rng) < rate ? 0.0 : keep);
    return X.cwiseProduct(mask);
  }

  Matrix backward(const Matrix& dY) const { return active ? Matrix(dY.cwiseProduct(mask)) : dY; }
};

inline Matrix dropout(const Matrix& X, double rate, Rng& rng, bool training) {
  Dropout d;
  return d.forward(X, rate, &rng, training);
}

inline Matrix word_dropout(const Matrix& H, double rate, Rng& rng, bool training) {
  Dropout d;
  return d.forward_rows(H, rate, &rng, training);
}

struct LossGrad {
  double loss = 0.0;
  RowVector dlogits;
};

inline RowVector softmax(const RowVector& logits) {
  const double mx = logits.maxCoeff();
  RowVector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

inline double log_sum_exp(const RowVector& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

// loss = -w[gold] * log softmax(logits)[gold].
inline LossGrad weighted_softmax_ce(const RowVector& logits, Eigen::Index gold,
                                    std::span<const double> class_weights) {
  if (gold < 0 || gold >= logits.size())
    throw DimensionError("gold class " + std::to_string(gold) + " out of range for " +
                         std::to_string(logits.size()) + " logits");
  double w = 1.0;
  if (!class_weights.empty()) {
    if (static_cast<Eigen::Index>(class_weights.size()) != logits.size())
      throw DimensionError("class weight count does not match logit count");
    w = class_weights[static_cast<std::size_t>(gold)];
  }
  LossGrad out;
  out.loss = w * (log_sum_exp(logits) - logits(gold));
  out.dlogits = softmax(logits) * w;
  out.dlogits(gold) -= w;
  return out;
}

enum class Reduction { Sum, Mean };

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Binary cross-entropy on logits: max(x,0) - x*t + log(1 + exp(-|x|)).
inline LossGrad sigmoid_bce(const RowVector& logits, const RowVector& targets,
                            Reduction reduction = Reduction::Sum) {
  if (targets.size() != logits.size())
    throw DimensionError("target count does not match logit count");
  LossGrad out;
  out.dlogits.resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double x = logits(i);
    const double t = targets(i);
    out.loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
    out.dlogits(i) = sigmoid(x) - t;
  }
  if (reduction == Reduction::Mean && logits.size() > 0) {
    const auto n = static_cast<double>(logits.size());
    out.loss /= n;
    out.dlogits /= n;
  }
  return out;
}

// Decoupled weight decay: p -= lr*wd*p, then the bias-corrected Adam update.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::int64_t t = 0;

  void step(const ParamList& params) {
    for (const Param* p : params) {
      auto check = [&](Eigen::Index r) {
        for (Eigen::Index c = 0; c < p->grad.cols(); ++c) {
          if (!std::isfinite(p->grad(r, c)))
            throw NumericError("non-finite gradient in " + p->name + " at (" +
                               std::to_string(r) + "," + std::to_string(c) +
                               "); optimizer step aborted");
        }
      };
      if (p->lazy_rows) {
        for (auto r : p->touched) check(r);
      } else {
        for (Eigen::Index r = 0; r < p->grad.rows(); ++r) check(r);
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto update_row = [&](Param& p, Eigen::Index r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const double g = p.grad(r, c);
        double& w = p.value(r, c);
        double& m = p.m(r, c);
        double& v = p.v(r, c);
        w -= lr * weight_decay * w;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        w -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      }
    };
    for (Param* p : params) {
      if (p->lazy_rows) {
        for (auto r : p->touched) update_row(*p, r);
      } else {
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) update_row(*p, r);
      }
    }
  }
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero up to
// rounding from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences over every entry of every parameter. `loss_and_grad`
// must be deterministic and accumulate analytic gradients into the params.
inline GradCheckResult grad_check(const std::function<double()>& loss_and_grad,
                                  const ParamList& params, double eps = 1e-5) {
  zero_grads(params);
  for (Param* p : params) p->grad.setZero();
  loss_and_grad();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = loss_and_grad();
      x = saved - eps;
      const double down = loss_and_grad();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      const double err = relative_error(a, numeric);
      ++res.checked;
      if (err > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = err;
        res.worst_param = p.name;
        res.worst_index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = analytic[k];
  return res;
}

}  // namespace mosyn
