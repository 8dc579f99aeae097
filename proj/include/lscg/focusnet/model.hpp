#pragma once

// FoCusNet parameters and forward pass.
//
//   ê_S = normalize(e_S · chi + chi_bias)
//   a_i = softmax_i(e_{w_i} · lambda + lambda_bias)
//   e_ŵ = normalize(Σ_i a_i · (e_{w_i} · gamma))     (left-to-right sum)
//
// Row-vector convention: embeddings are 1×D, weight matrices D×d.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lscg/errors.hpp"
#include "lscg/rng.hpp"

namespace lscg::focusnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kCheckpointVersion = 1;

struct FoCusNetParams {
  int version = kCheckpointVersion;
  std::string provider_id;
  Matrix chi;       // D×d
  Vector chi_bias;  // d
  Matrix gamma;     // D×d
  Vector lambda;    // D
  double lambda_bias = 0.0;

  Eigen::Index input_dim() const { return chi.rows(); }
  Eigen::Index proj_dim() const { return chi.cols(); }

  bool finite() const {
    return chi.allFinite() && chi_bias.allFinite() && gamma.allFinite() && lambda.allFinite() &&
           std::isfinite(lambda_bias);
  }
  bool operator==(const FoCusNetParams& o) const {
    return version == o.version && provider_id == o.provider_id && chi == o.chi &&
           chi_bias == o.chi_bias && gamma == o.gamma && lambda == o.lambda &&
           lambda_bias == o.lambda_bias;
  }
};

/// Uniform ±sqrt(6/(fan_in+fan_out)) per matrix, zero biases. Draw order:
/// chi, gamma, lambda, each row-major.
inline FoCusNetParams init_params(Eigen::Index D, Eigen::Index d, std::string provider_id,
                                  std::uint64_t seed) {
  if (D <= 0 || d <= 0) throw std::invalid_argument("init_params: dims must be positive");
  FoCusNetParams p;
  p.provider_id = std::move(provider_id);
  Rng rng(seed);
  auto fill = [&](Matrix& m, double bound) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  };
  const double b = std::sqrt(6.0 / static_cast<double>(D + d));
  p.chi.resize(D, d);
  fill(p.chi, b);
  p.gamma.resize(D, d);
  fill(p.gamma, b);
  Matrix lam(D, 1);
  fill(lam, std::sqrt(6.0 / static_cast<double>(D + 1)));
  p.lambda = lam.col(0);
  p.chi_bias = Vector::Zero(d);
  p.lambda_bias = 0.0;
  return p;
}

/// Throws std::domain_error on a zero vector.
inline Vector l2_normalize(const Vector& v) {
  double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::domain_error("cannot normalize a zero or non-finite vector");
  return v / n;
}

inline void check_dim(const Vector& e, const FoCusNetParams& p, const char* what) {
  if (e.size() != p.input_dim())
    throw std::invalid_argument(std::string(what) + ": embedding dim " + std::to_string(e.size()) +
                                " != model input dim " + std::to_string(p.input_dim()));
}

inline Vector refine_sentence(const Vector& e_s, const FoCusNetParams& p) {
  check_dim(e_s, p, "refine_sentence");
  Vector z = p.chi.transpose() * e_s + p.chi_bias;
  return l2_normalize(z);
}

/// Softmax with max subtraction; order of accumulation is index order.
inline Vector softmax(const Vector& x) {
  double m = x.maxCoeff();
  Vector e(x.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - m);
    sum += e[i];
  }
  return e / sum;
}

inline Vector attention_weights(const std::vector<Vector>& words, const FoCusNetParams& p) {
  Vector scores(static_cast<Eigen::Index>(words.size()));
  for (std::size_t i = 0; i < words.size(); ++i) scores[static_cast<Eigen::Index>(i)] = words[i].dot(p.lambda) + p.lambda_bias;
  return softmax(scores);
}

inline Vector aggregate_words(const std::vector<Vector>& words, const FoCusNetParams& p) {
  if (words.empty()) throw std::invalid_argument("aggregate_words: empty word list");
  for (const auto& w : words) check_dim(w, p, "aggregate_words");
  Vector a = attention_weights(words, p);
  Vector u = Vector::Zero(p.proj_dim());
  for (std::size_t i = 0; i < words.size(); ++i)
    u += a[static_cast<Eigen::Index>(i)] * (p.gamma.transpose() * words[i]);
  return l2_normalize(u);
}

// ---------------------------------------------------------------- checkpoint

namespace detail {
inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}
inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}
inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                               const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw IntegrityError(std::string("checkpoint: bad row count for ") + name);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw IntegrityError(std::string("checkpoint: bad column count for ") + name);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}
inline Vector vector_from_json(const nlohmann::json& j, Eigen::Index n, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw IntegrityError(std::string("checkpoint: bad length for ") + name);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}
}  // namespace detail

/// Doubles are written in shortest round-trip form, so load(save(p)) == p bit for bit.
inline nlohmann::ordered_json to_json(const FoCusNetParams& p) {
  nlohmann::ordered_json j;
  j["version"] = p.version;
  j["provider_id"] = p.provider_id;
  j["D"] = p.input_dim();
  j["d"] = p.proj_dim();
  j["chi"] = detail::matrix_to_json(p.chi);
  j["gamma"] = detail::matrix_to_json(p.gamma);
  j["lambda"] = detail::vector_to_json(p.lambda);
  j["biases"] = {{"chi", detail::vector_to_json(p.chi_bias)}, {"lambda", p.lambda_bias}};
  return j;
}

inline FoCusNetParams params_from_json(const nlohmann::json& j) {
  try {
    FoCusNetParams p;
    p.version = j.at("version").get<int>();
    if (p.version != kCheckpointVersion)
      throw IntegrityError("checkpoint version " + std::to_string(p.version) + " is not supported");
    p.provider_id = j.at("provider_id").get<std::string>();
    auto D = j.at("D").get<Eigen::Index>();
    auto d = j.at("d").get<Eigen::Index>();
    if (D <= 0 || d <= 0) throw IntegrityError("checkpoint: non-positive dims");
    p.chi = detail::matrix_from_json(j.at("chi"), D, d, "chi");
    p.gamma = detail::matrix_from_json(j.at("gamma"), D, d, "gamma");
    p.lambda = detail::vector_from_json(j.at("lambda"), D, "lambda");
    p.chi_bias = detail::vector_from_json(j.at("biases").at("chi"), d, "chi bias");
    p.lambda_bias = j.at("biases").at("lambda").get<double>();
    if (!p.finite()) throw IntegrityError("checkpoint contains non-finite values");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_params(const std::filesystem::path& file, const FoCusNetParams& p) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << to_json(p).dump() << '\n';
}

inline FoCusNetParams load_params(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IntegrityError(file.string() + " is not valid JSON");
  return params_from_json(j);
}

}  // namespace lscg::focusnet
