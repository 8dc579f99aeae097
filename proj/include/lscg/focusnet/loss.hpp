#pragma once

// Two-term InfoNCE over unit vectors, with hand-derived gradients.
//
// (a) sentence -> word set: S_ij = s_i·w_j / τ. Positives of anchor i are all j
//     with group_j == group_i (i itself included); the softmax runs over every j.
// (b) sentence -> sentence: T_ij = s_i·s_j / τ. Positives are j != i in the same
//     group; the softmax runs over every j including i. Anchors without a
//     positive are skipped.
// Per-anchor loss is -(1/|P|) Σ_p log softmax_p; each term is the mean over its
// anchors. loss = (a + b) / 2, or a alone when no anchor has a (b) positive.

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lscg/focusnet/model.hpp"

namespace lscg::focusnet {

struct InfoNceResult {
  double loss = 0.0;
  double term_word_set = 0.0;
  double term_sentence = 0.0;
  std::size_t sentence_anchors = 0;  // anchors contributing to term (b)
  Matrix grad_s;  // B×d, rows dL/ds_i
  Matrix grad_w;  // B×d, rows dL/dw_i
};

namespace detail {

inline Vector log_softmax_row(const Eigen::RowVectorXd& row) {
  double m = row.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) sum += std::exp(row[j] - m);
  double lse = m + std::log(sum);
  return (row.array() - lse).matrix().transpose();
}

}  // namespace detail

/// s, w: B×d with unit rows. groups: B keys, at least two distinct values.
inline InfoNceResult info_nce(const Matrix& s, const Matrix& w, const std::vector<std::int64_t>& groups,
                              double tau, bool with_grad = true) {
  const Eigen::Index B = s.rows();
  if (w.rows() != B || static_cast<Eigen::Index>(groups.size()) != B || w.cols() != s.cols())
    throw std::invalid_argument("info_nce: shape mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: temperature must be positive");
  bool two_groups = false;
  for (Eigen::Index i = 1; i < B && !two_groups; ++i) two_groups = groups[static_cast<std::size_t>(i)] != groups[0];
  if (!two_groups) throw std::invalid_argument("info_nce: batch holds a single group, no negatives");

  InfoNceResult r;
  if (with_grad) {
    r.grad_s = Matrix::Zero(B, s.cols());
    r.grad_w = Matrix::Zero(B, s.cols());
  }
  auto same = [&](Eigen::Index i, Eigen::Index j) {
    return groups[static_cast<std::size_t>(i)] == groups[static_cast<std::size_t>(j)];
  };

  // term (a)
  Matrix S = (s * w.transpose()) / tau;
  Matrix GS = Matrix::Zero(B, B);  // dL_a/dS, before the 1/2 weighting
  for (Eigen::Index i = 0; i < B; ++i) {
    Vector lp = detail::log_softmax_row(S.row(i));
    double npos = 0;
    double acc = 0;
    for (Eigen::Index j = 0; j < B; ++j)
      if (same(i, j)) {
        acc += lp[j];
        ++npos;
      }
    r.term_word_set += -acc / npos;
    if (with_grad)
      for (Eigen::Index j = 0; j < B; ++j)
        GS(i, j) = (std::exp(lp[j]) - (same(i, j) ? 1.0 / npos : 0.0)) / static_cast<double>(B);
  }
  r.term_word_set /= static_cast<double>(B);

  // term (b)
  Matrix T = (s * s.transpose()) / tau;
  Matrix GT = Matrix::Zero(B, B);
  std::vector<Eigen::Index> anchors;
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index j = 0; j < B; ++j)
      if (j != i && same(i, j)) {
        anchors.push_back(i);
        break;
      }
  r.sentence_anchors = anchors.size();
  for (Eigen::Index i : anchors) {
    Vector lp = detail::log_softmax_row(T.row(i));
    double npos = 0;
    double acc = 0;
    for (Eigen::Index j = 0; j < B; ++j)
      if (j != i && same(i, j)) {
        acc += lp[j];
        ++npos;
      }
    r.term_sentence += -acc / npos;
    if (with_grad)
      for (Eigen::Index j = 0; j < B; ++j)
        GT(i, j) = (std::exp(lp[j]) - ((j != i && same(i, j)) ? 1.0 / npos : 0.0)) /
                   static_cast<double>(anchors.size());
  }
  if (!anchors.empty()) r.term_sentence /= static_cast<double>(anchors.size());

  const double wa = anchors.empty() ? 1.0 : 0.5;
  const double wb = anchors.empty() ? 0.0 : 0.5;
  r.loss = wa * r.term_word_set + wb * r.term_sentence;

  if (with_grad) {
    // dS_ij/ds_i = w_j/τ, dS_ij/dw_j = s_i/τ; T is symmetric in its two arguments.
    r.grad_s = (wa / tau) * (GS * w) + (wb / tau) * ((GT + GT.transpose()) * s);
    r.grad_w = (wa / tau) * (GS.transpose() * s);
  }
  return r;
}

/// One training batch: sentence embeddings plus, per item, indices into a
/// shared table of word embeddings.
struct Batch {
  Matrix sentences;                       // B×D
  Matrix words;                           // M×D
  std::vector<std::vector<int>> word_ids; // B lists into `words`
  std::vector<std::int64_t> groups;       // B
};

struct Gradients {
  Matrix chi;
  Vector chi_bias;
  Matrix gamma;
  Vector lambda;
  double lambda_bias = 0.0;

  static Gradients zeros_like(const FoCusNetParams& p) {
    return {Matrix::Zero(p.chi.rows(), p.chi.cols()), Vector::Zero(p.chi_bias.size()),
            Matrix::Zero(p.gamma.rows(), p.gamma.cols()), Vector::Zero(p.lambda.size()), 0.0};
  }
};

struct ForwardResult {
  double loss = 0.0;
  InfoNceResult nce;
};

/// Loss of the full model on a batch; fills `grads` when non-null.
inline ForwardResult batch_loss(const FoCusNetParams& p, const Batch& b, double tau,
                                Gradients* grads = nullptr) {
  const Eigen::Index B = b.sentences.rows();
  const Eigen::Index d = p.proj_dim();
  if (b.sentences.cols() != p.input_dim() || (b.words.rows() > 0 && b.words.cols() != p.input_dim()))
    throw std::invalid_argument("batch_loss: embedding dim != model input dim");

  Matrix Z = b.sentences * p.chi;
  Z.rowwise() += p.chi_bias.transpose();
  Vector zn(B);
  Matrix S(B, d);
  for (Eigen::Index i = 0; i < B; ++i) {
    zn[i] = Z.row(i).norm();
    if (!(zn[i] > 0.0)) throw std::domain_error("batch_loss: zero refined sentence vector");
    S.row(i) = Z.row(i) / zn[i];
  }

  Matrix V = b.words * p.gamma;                        // M×d
  Vector L = b.words * p.lambda;                       // M
  L.array() += p.lambda_bias;
  std::vector<Vector> att(static_cast<std::size_t>(B));
  Matrix U(B, d);
  Vector un(B);
  Matrix W(B, d);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& ids = b.word_ids[static_cast<std::size_t>(i)];
    if (ids.empty()) throw std::invalid_argument("batch_loss: item without words");
    Vector sc(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) sc[static_cast<Eigen::Index>(k)] = L[ids[k]];
    Vector a = softmax(sc);
    Eigen::RowVectorXd u = Eigen::RowVectorXd::Zero(d);
    for (std::size_t k = 0; k < ids.size(); ++k) u += a[static_cast<Eigen::Index>(k)] * V.row(ids[k]);
    U.row(i) = u;
    un[i] = u.norm();
    if (!(un[i] > 0.0)) throw std::domain_error("batch_loss: zero aggregated word vector");
    W.row(i) = u / un[i];
    att[static_cast<std::size_t>(i)] = std::move(a);
  }

  ForwardResult out;
  out.nce = info_nce(S, W, b.groups, tau, grads != nullptr);
  out.loss = out.nce.loss;
  if (!grads) return out;

  *grads = Gradients::zeros_like(p);
  // through ŝ = z/|z|
  Matrix dZ(B, d);
  for (Eigen::Index i = 0; i < B; ++i) {
    Eigen::RowVectorXd g = out.nce.grad_s.row(i);
    dZ.row(i) = (g - g.dot(S.row(i)) * S.row(i)) / zn[i];
  }
  grads->chi = b.sentences.transpose() * dZ;
  grads->chi_bias = dZ.colwise().sum().transpose();

  Matrix dV = Matrix::Zero(V.rows(), d);
  Vector dL = Vector::Zero(L.size());
  for (Eigen::Index i = 0; i < B; ++i) {
    Eigen::RowVectorXd g = out.nce.grad_w.row(i);
    Eigen::RowVectorXd du = (g - g.dot(W.row(i)) * W.row(i)) / un[i];
    const auto& ids = b.word_ids[static_cast<std::size_t>(i)];
    const Vector& a = att[static_cast<std::size_t>(i)];
    Vector da(a.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      dV.row(ids[k]) += a[static_cast<Eigen::Index>(k)] * du;
      da[static_cast<Eigen::Index>(k)] = V.row(ids[k]).dot(du);
    }
    double mean_da = a.dot(da);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto kk = static_cast<Eigen::Index>(k);
      dL[ids[k]] += a[kk] * (da[kk] - mean_da);
    }
  }
  grads->gamma = b.words.transpose() * dV;
  grads->lambda = b.words.transpose() * dL;
  grads->lambda_bias = dL.sum();
  return out;
}

}  // namespace lscg::focusnet
