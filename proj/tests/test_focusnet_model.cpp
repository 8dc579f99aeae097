#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lscg/focusnet/loss.hpp"
#include "lscg/focusnet/model.hpp"
#include "support/fixtures.hpp"

namespace lscg::focusnet {
namespace {

Vector random_unit(Eigen::Index n, Rng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-1, 1);
  return v / v.norm();
}

Matrix random_unit_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = random_unit(cols, rng).transpose();
  return m;
}

std::vector<std::int64_t> random_groups(Eigen::Index B, Rng& rng) {
  std::vector<std::int64_t> g(static_cast<std::size_t>(B));
  do {
    for (auto& x : g) x = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(std::max<Eigen::Index>(2, B / 2))));
  } while (std::all_of(g.begin(), g.end(), [&](auto x) { return x == g[0]; }));
  return g;
}

// Plain-loop evaluation of the two-term objective, written from its definition.
double reference_loss(const Matrix& s, const Matrix& w, const std::vector<std::int64_t>& g, double tau) {
  const auto B = static_cast<std::size_t>(s.rows());
  auto dot = [](const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double acc = 0;
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      acc += a(static_cast<Eigen::Index>(i), k) * b(static_cast<Eigen::Index>(j), k);
    return acc;
  };
  double ta = 0;
  for (std::size_t i = 0; i < B; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < B; ++j) denom += std::exp(dot(s, i, w, j) / tau);
    double acc = 0;
    int npos = 0;
    for (std::size_t j = 0; j < B; ++j)
      if (g[j] == g[i]) {
        acc += std::log(std::exp(dot(s, i, w, j) / tau) / denom);
        ++npos;
      }
    ta += -acc / npos;
  }
  ta /= static_cast<double>(B);
  double tb = 0;
  int anchors = 0;
  for (std::size_t i = 0; i < B; ++i) {
    int npos = 0;
    for (std::size_t j = 0; j < B; ++j) npos += (j != i && g[j] == g[i]);
    if (!npos) continue;
    ++anchors;
    double denom = 0;
    for (std::size_t j = 0; j < B; ++j) denom += std::exp(dot(s, i, s, j) / tau);
    double acc = 0;
    for (std::size_t j = 0; j < B; ++j)
      if (j != i && g[j] == g[i]) acc += std::log(std::exp(dot(s, i, s, j) / tau) / denom);
    tb += -acc / npos;
  }
  if (!anchors) return ta;
  return 0.5 * ta + 0.5 * tb / anchors;
}

TEST(InfoNce, MatchesPlainLoopReference) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::Index B = 3 + static_cast<Eigen::Index>(rng.index(8)), d = 4;
    Matrix s = random_unit_rows(B, d, rng), w = random_unit_rows(B, d, rng);
    auto g = random_groups(B, rng);
    double tau = trial % 2 ? 0.05 : 0.7;
    EXPECT_NEAR(info_nce(s, w, g, tau, false).loss, reference_loss(s, w, g, tau), 1e-9);
  }
}

TEST(InfoNce, IdenticalInputsGiveLogN) {
  Rng rng(2);
  Vector v = random_unit(5, rng);
  for (Eigen::Index B : {2, 4, 9}) {
    Matrix s = v.transpose().replicate(B, 1);
    std::vector<std::int64_t> g(static_cast<std::size_t>(B));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<std::int64_t>(i);
    EXPECT_NEAR(info_nce(s, s, g, 0.05).loss, std::log(static_cast<double>(B)), 1e-12);
  }
}

TEST(InfoNce, RejectsDegenerateBatches) {
  Rng rng(3);
  Matrix s = random_unit_rows(3, 4, rng);
  EXPECT_THROW(info_nce(s, s, {1, 1, 1}, 0.1), std::invalid_argument);
  EXPECT_THROW(info_nce(s, s, {1, 2}, 0.1), std::invalid_argument);
  EXPECT_THROW(info_nce(s, s, {1, 2, 3}, 0.0), std::invalid_argument);
}

TEST(InfoNce, GradientsMatchCentralDifferences) {
  Rng rng(4);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Index B = 4 + static_cast<Eigen::Index>(rng.index(5)), d = 5;
    Matrix s = random_unit_rows(B, d, rng), w = random_unit_rows(B, d, rng);
    auto g = random_groups(B, rng);
    auto r = info_nce(s, w, g, 0.2);
    Matrix ns(B, d), nw(B, d);
    for (Eigen::Index i = 0; i < B; ++i)
      for (Eigen::Index k = 0; k < d; ++k) {
        Matrix sp = s, sm = s, wp = w, wm = w;
        sp(i, k) += h;
        sm(i, k) -= h;
        wp(i, k) += h;
        wm(i, k) -= h;
        ns(i, k) = (info_nce(sp, w, g, 0.2, false).loss - info_nce(sm, w, g, 0.2, false).loss) / (2 * h);
        nw(i, k) = (info_nce(s, wp, g, 0.2, false).loss - info_nce(s, wm, g, 0.2, false).loss) / (2 * h);
      }
    EXPECT_LT((ns - r.grad_s).norm() / (ns.norm() + r.grad_s.norm()), 1e-6);
    EXPECT_LT((nw - r.grad_w).norm() / (nw.norm() + r.grad_w.norm()), 1e-6);
  }
}

Batch random_batch(Eigen::Index D, Rng& rng) {
  Batch b;
  Eigen::Index B = 4 + static_cast<Eigen::Index>(rng.index(5));
  Eigen::Index M = 6;
  b.sentences = random_unit_rows(B, D, rng);
  b.words = random_unit_rows(M, D, rng);
  b.groups = random_groups(B, rng);
  for (Eigen::Index i = 0; i < B; ++i) {
    auto n = 1 + rng.index(3);
    std::vector<int> ids;
    for (auto k : rng.sample_indices(static_cast<std::size_t>(M), n)) ids.push_back(static_cast<int>(k));
    b.word_ids.push_back(ids);
  }
  return b;
}

double rel_err(const Matrix& a, const Matrix& n) {
  double denom = a.norm() + n.norm();
  return denom == 0 ? 0 : (a - n).norm() / denom;
}

TEST(BatchLoss, GradientsMatchCentralDifferencesPerTensor) {
  Rng rng(5);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    FoCusNetParams p = init_params(10, 6, "t", derive_seed(7, static_cast<std::uint64_t>(trial)));
    for (Eigen::Index i = 0; i < p.chi_bias.size(); ++i) p.chi_bias[i] = rng.uniform(-0.1, 0.1);
    p.lambda_bias = 0.3;
    Batch b = random_batch(10, rng);
    Gradients g;
    batch_loss(p, b, 0.1, &g);
    auto fd = [&](auto&& ref) {
      double& x = ref(p);
      double orig = x;
      x = orig + h;
      double up = batch_loss(p, b, 0.1).loss;
      x = orig - h;
      double dn = batch_loss(p, b, 0.1).loss;
      x = orig;
      return (up - dn) / (2 * h);
    };
    Matrix n_chi(p.chi.rows(), p.chi.cols()), n_gamma(p.gamma.rows(), p.gamma.cols());
    Vector n_cb(p.chi_bias.size()), n_lambda(p.lambda.size());
    for (Eigen::Index r = 0; r < p.chi.rows(); ++r)
      for (Eigen::Index c = 0; c < p.chi.cols(); ++c) {
        n_chi(r, c) = fd([&](FoCusNetParams& q) -> double& { return q.chi(r, c); });
        n_gamma(r, c) = fd([&](FoCusNetParams& q) -> double& { return q.gamma(r, c); });
      }
    for (Eigen::Index i = 0; i < n_cb.size(); ++i) n_cb[i] = fd([&](FoCusNetParams& q) -> double& { return q.chi_bias[i]; });
    for (Eigen::Index i = 0; i < n_lambda.size(); ++i)
      n_lambda[i] = fd([&](FoCusNetParams& q) -> double& { return q.lambda[i]; });
    double n_lb = fd([&](FoCusNetParams& q) -> double& { return q.lambda_bias; });

    EXPECT_LT(rel_err(g.chi, n_chi), 1e-4) << "chi, trial " << trial;
    EXPECT_LT(rel_err(g.chi_bias, n_cb), 1e-4) << "chi_bias, trial " << trial;
    EXPECT_LT(rel_err(g.gamma, n_gamma), 1e-4) << "gamma, trial " << trial;
    EXPECT_LT(rel_err(g.lambda, n_lambda), 1e-4) << "lambda, trial " << trial;
    // softmax is shift invariant: the bias gradient is analytically zero
    EXPECT_NEAR(g.lambda_bias, 0.0, 1e-9);
    EXPECT_NEAR(n_lb, 0.0, 1e-6);
  }
}

TEST(Forward, OutputsAreUnitNorm) {
  Rng rng(6);
  auto p = init_params(16, 8, "t", 1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(refine_sentence(random_unit(16, rng), p).norm(), 1.0, 1e-6);
    std::vector<Vector> words;
    for (std::uint64_t k = 0; k < 1 + rng.index(5); ++k) words.push_back(random_unit(16, rng));
    EXPECT_NEAR(aggregate_words(words, p).norm(), 1.0, 1e-6);
  }
}

TEST(Forward, AttentionIsADistribution) {
  Rng rng(7);
  auto p = init_params(16, 8, "t", 2);
  p.lambda *= 5.0;
  for (int i = 0; i < 50; ++i) {
    std::vector<Vector> words;
    for (int k = 0; k < 7; ++k) words.push_back(random_unit(16, rng));
    Vector a = attention_weights(words, p);
    EXPECT_NEAR(a.sum(), 1.0, 1e-9);
    EXPECT_TRUE((a.array() > 0).all());
    EXPECT_TRUE(a.allFinite());
  }
}

TEST(Forward, AggregationIsPermutationInvariant) {
  Rng rng(8);
  auto p = init_params(16, 8, "t", 3);
  for (int i = 0; i < 50; ++i) {
    std::vector<Vector> words;
    for (int k = 0; k < 5; ++k) words.push_back(random_unit(16, rng));
    Vector base = aggregate_words(words, p);
    rng.shuffle(words);
    EXPECT_LT((aggregate_words(words, p) - base).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Forward, ShapeAndZeroErrors) {
  auto p = init_params(4, 3, "t", 1);
  EXPECT_THROW(refine_sentence(Vector::Ones(5), p), std::invalid_argument);
  EXPECT_THROW(aggregate_words({}, p), std::invalid_argument);
  EXPECT_THROW(l2_normalize(Vector::Zero(3)), std::domain_error);
  EXPECT_THROW(init_params(0, 3, "t", 1), std::invalid_argument);
}

TEST(InitParams, SeededAndBounded) {
  auto a = init_params(20, 10, "p", 9), b = init_params(20, 10, "p", 9), c = init_params(20, 10, "p", 10);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  double bound = std::sqrt(6.0 / 30.0);
  EXPECT_LE(a.chi.cwiseAbs().maxCoeff(), bound);
  EXPECT_LE(a.gamma.cwiseAbs().maxCoeff(), bound);
  EXPECT_TRUE(a.chi_bias.isZero());
  EXPECT_EQ(a.lambda_bias, 0.0);
}

TEST(Checkpoint, JsonRoundTripIsBitIdentical) {
  testing::TempDir d;
  auto p = init_params(12, 5, "mock:ngram-v1", 4);
  p.chi(0, 0) = 1.0 / 3.0;
  p.chi_bias[2] = -2.5e-300;
  p.lambda_bias = 0.1;
  save_params(d / "p.json", p);
  auto q = load_params(d / "p.json");
  EXPECT_TRUE(p == q);
  EXPECT_EQ(std::memcmp(p.chi.data(), q.chi.data(), sizeof(double) * static_cast<std::size_t>(p.chi.size())), 0);
  auto j = to_json(p);
  for (auto key : {"version", "provider_id", "D", "d", "chi", "gamma", "lambda", "biases"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Checkpoint, MalformedFilesAreIntegrityErrors) {
  auto good = nlohmann::json(to_json(init_params(3, 2, "p", 1)));
  auto mutate = [&](auto&& f) {
    auto j = good;
    f(j);
    return j;
  };
  EXPECT_THROW(params_from_json(mutate([](auto& j) { j["version"] = 2; })), IntegrityError);
  EXPECT_THROW(params_from_json(mutate([](auto& j) { j.erase("gamma"); })), IntegrityError);
  EXPECT_THROW(params_from_json(mutate([](auto& j) { j["D"] = 4; })), IntegrityError);
  EXPECT_THROW(params_from_json(mutate([](auto& j) { j["chi"][0][0] = "x"; })), IntegrityError);
  EXPECT_THROW(params_from_json(mutate([](auto& j) { j["lambda"].push_back(1.0); })), IntegrityError);
  testing::TempDir d;
  testing::write_file(d / "bad.json", "{");
  EXPECT_THROW(load_params(d / "bad.json"), IntegrityError);
  EXPECT_THROW(load_params(d / "missing.json"), DataError);
}

}  // namespace
}  // namespace lscg::focusnet
