#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "povmap/error.hpp"
#include "povmap/losses.hpp"
#include "support.hpp"

using namespace povmap;
using testutil::normal;
using testutil::uniform;

namespace {

RowMat<double> random_mat(int r, int c) {
  RowMat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
  return m;
}

oracle::Rows rows(const RowMat<double>& m) {
  oracle::Rows out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) out[i][k] = m(i, k);
  return out;
}

std::vector<double> flat(const RowMat<double>& m) { return {m.data(), m.data() + m.size()}; }

RowMat<double> unflat(const std::vector<double>& v, Eigen::Index r, Eigen::Index c) {
  RowMat<double> m(r, c);
  std::copy(v.begin(), v.begin() + r * c, m.data());
  return m;
}

}  // namespace

TEST_CASE("contrastive loss examples") {
  const RowMat<double> one = random_mat(1, 5);
  CHECK(contrastive_loss(one, random_mat(1, 5), std::log(0.07)).loss == 0.0);

  RowMat<double> e = RowMat<double>::Zero(2, 2);
  e(0, 0) = 1.0;
  e(1, 1) = 1.0;
  const auto r = contrastive_loss(e, e, 0.0);
  CHECK(r.loss == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-14));
  CHECK(r.loss == doctest::Approx(0.3133).epsilon(1e-4));
  CHECK(r.row_loss[0] == doctest::Approx(r.row_loss[1]).epsilon(1e-15));
}

TEST_CASE("contrastive loss matches the brute-force oracle") {
  for (int trial = 0; trial < 200; ++trial) {
    const int b = testutil::uniform_int(1, 12), d = testutil::uniform_int(2, 16);
    const auto img = random_mat(b, d), poi = random_mat(b, d);
    const double log_tau = uniform(std::log(0.05), std::log(5.0));
    const double got = contrastive_loss(img, poi, log_tau).loss;
    CHECK(std::abs(got - oracle::contrastive(rows(img), rows(poi), std::exp(log_tau))) <= 1e-10);
  }
}

TEST_CASE("contrastive temperature is clamped") {
  const auto img = random_mat(4, 3), poi = random_mat(4, 3);
  CHECK(contrastive_loss(img, poi, std::log(1e-4)).loss == contrastive_loss(img, poi, std::log(0.01)).loss);
  CHECK(contrastive_loss(img, poi, std::log(1e4)).loss == contrastive_loss(img, poi, std::log(100.0)).loss);
  CHECK(clamp_log_temperature(std::log(0.07)) == std::log(0.07));
}

TEST_CASE("contrastive loss errors") {
  CHECK_THROWS_AS(contrastive_loss(RowMat<double>(0, 3), RowMat<double>(0, 3), 0.0), DomainError);
  auto img = random_mat(3, 4);
  img.row(1).setZero();
  CHECK_THROWS_AS(contrastive_loss(img, random_mat(3, 4), 0.0), NumericError);
}

TEST_CASE("contrastive gradients match finite differences") {
  for (int trial = 0; trial < 100; ++trial) {
    const int b = testutil::uniform_int(2, 8), d = testutil::uniform_int(2, 8);
    const auto img = random_mat(b, d), poi = random_mat(b, d);
    const double lt = uniform(std::log(0.05), std::log(2.0));
    const auto r = contrastive_loss(img, poi, lt);
    const auto fi = oracle::central_fd([&](const std::vector<double>& v) { return contrastive_loss(unflat(v, b, d), poi, lt).loss; }, flat(img));
    const auto fp = oracle::central_fd([&](const std::vector<double>& v) { return contrastive_loss(img, unflat(v, b, d), lt).loss; }, flat(poi));
    const auto ft = oracle::central_fd([&](const std::vector<double>& v) { return contrastive_loss(img, poi, v[0]).loss; }, {lt});
    CHECK(oracle::vector_rel_err(flat(r.d_image), fi) < 1e-6);
    CHECK(oracle::vector_rel_err(flat(r.d_poi), fp) < 1e-6);
    CHECK(oracle::vector_rel_err({r.d_log_tau}, ft) < 1e-6);
  }
}

TEST_CASE("contrastive loss is permutation-equivariant") {
  const int b = 7;
  const auto img = random_mat(b, 5), poi = random_mat(b, 5);
  std::vector<int> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), testutil::rng());
  RowMat<double> pi(b, 5), pp(b, 5);
  for (int i = 0; i < b; ++i) {
    pi.row(i) = img.row(perm[i]);
    pp.row(i) = poi.row(perm[i]);
  }
  const auto a = contrastive_loss(img, poi, -1.0), c = contrastive_loss(pi, pp, -1.0);
  for (int i = 0; i < b; ++i) CHECK(c.row_loss[i] == doctest::Approx(a.row_loss[perm[i]]).epsilon(1e-12));
  CHECK(c.loss == doctest::Approx(a.loss).epsilon(1e-12));
}

TEST_CASE("precondition loss examples") {
  const RowMat<double> zero = RowMat<double>::Zero(3, 4);
  RowMat<double> labels = RowMat<double>::Zero(3, 4);
  labels(0, 1) = 1.0;
  CHECK(precondition_loss(zero, labels).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  RowMat<double> big = RowMat<double>::Constant(1, 4, 40.0);
  const RowMat<double> ones = RowMat<double>::Ones(1, 4);
  const auto r = precondition_loss(big, ones);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss < 1e-15);
  big.setConstant(-800.0);
  const auto r2 = precondition_loss(big, ones);
  CHECK(r2.loss == doctest::Approx(800.0).epsilon(1e-12));
  CHECK(r2.d_logits.allFinite());

  labels(2, 2) = 0.5;
  CHECK_THROWS_AS(precondition_loss(zero, labels), DomainError);
}

TEST_CASE("precondition loss matches the direct oracle and its gradient") {
  for (int trial = 0; trial < 100; ++trial) {
    const int b = testutil::uniform_int(1, 10);
    RowMat<double> logits = random_mat(b, 4) * 3.0;
    RowMat<double> labels(b, 4);
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = testutil::uniform_int(0, 1);
    const auto r = precondition_loss(logits, labels);
    CHECK(std::abs(r.loss - oracle::bce(rows(logits), rows(labels))) <= 1e-10);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-logits.data()[i]));
      CHECK(r.d_logits.data()[i] == doctest::Approx((sig - labels.data()[i]) / (4.0 * b)).epsilon(1e-12));
    }
    const auto fd = oracle::central_fd(
        [&](const std::vector<double>& v) { return precondition_loss(unflat(v, b, 4), labels).loss; }, flat(logits));
    CHECK(oracle::vector_rel_err(flat(r.d_logits), fd) < 1e-6);
  }
}

TEST_CASE("combined loss examples and linearity") {
  CHECK(combined_access_loss(0.7, 3.0, 0.0).value == 0.7);
  CHECK(combined_access_loss(1.0, 2.0, 0.1).value == doctest::Approx(1.2).epsilon(1e-15));
  for (int trial = 0; trial < 100; ++trial) {
    const double c = uniform(0, 5), p = uniform(0, 5), l1 = uniform(0, 1), l2 = uniform(0, 1);
    const double lhs = combined_access_loss(c, p, l1 + l2).value;
    const double rhs = combined_access_loss(c, p, l1).value + combined_access_loss(c, p, l2).value - c;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
  CHECK_THROWS_AS(combined_access_loss(std::nan(""), 1.0, 0.1), NumericError);
}

TEST_CASE("combined gradient is the weighted sum of the parts") {
  for (int trial = 0; trial < 100; ++trial) {
    const int b = testutil::uniform_int(2, 6), d = 4;
    const auto img = random_mat(b, d), poi = random_mat(b, d);
    const RowMat<double> w = random_mat(4, d);
    RowMat<double> labels(b, 4);
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = testutil::uniform_int(0, 1);
    const double lam = uniform(0.0, 1.0), lt = std::log(0.5);
    const auto total = [&](const std::vector<double>& v) {
      const auto e = unflat(v, b, d);
      const RowMat<double> logits = e * w.transpose();
      return combined_access_loss(contrastive_loss(e, poi, lt).loss, precondition_loss(logits, labels).loss, lam).value;
    };
    const auto c = contrastive_loss(img, poi, lt);
    const auto p = precondition_loss(img * w.transpose(), labels);
    const RowMat<double> analytic = c.d_image + lam * p.d_logits * w;
    CHECK(oracle::vector_rel_err(flat(analytic), oracle::central_fd(total, flat(img))) < 1e-6);
  }
}

TEST_CASE("pearson loss examples") {
  std::vector<double> t{1.0, 4.0, 2.0, 8.0, 5.0};
  std::vector<double> p;
  for (double v : t) p.push_back(2.0 * v + 3.0);
  CHECK(std::abs(pearson_loss(p, t).loss + 1.0) <= 1e-12);
  std::vector<double> neg;
  for (double v : t) neg.push_back(-v);
  CHECK(std::abs(pearson_loss(neg, t).loss - 1.0) <= 1e-12);

  const std::vector<double> flat_pred(5, 2.0);
  const auto deg = pearson_loss(flat_pred, t);
  CHECK(deg.degenerate);
  CHECK(deg.loss == 0.0);
  CHECK(deg.d_pred.norm() == 0.0);
  CHECK_THROWS_AS(pearson_loss(std::vector<double>{1.0}, std::vector<double>{2.0}), DomainError);
}

TEST_CASE("pearson gradient matches finite differences") {
  for (int trial = 0; trial < 100; ++trial) {
    const int b = testutil::uniform_int(3, 32);
    const auto pred = testutil::random_vector(b, -3, 3);
    auto target = testutil::random_vector(b, -2, 5);
    const auto r = pearson_loss(pred, target);
    const auto fd = oracle::central_fd([&](const std::vector<double>& v) { return pearson_loss(v, target).loss; }, pred);
    CHECK(oracle::vector_rel_err(std::vector<double>(r.d_pred.data(), r.d_pred.data() + b), fd) < 1e-6);
  }
}

TEST_CASE("two-point pearson loss is flat") {
  const auto r = pearson_loss(std::vector<double>{0.3, 1.7}, std::vector<double>{-2.0, 5.0});
  CHECK(r.loss == doctest::Approx(-1.0));
  CHECK(r.d_pred.norm() <= 1e-12);
}

TEST_CASE("pearson loss invariances") {
  for (int trial = 0; trial < 100; ++trial) {
    const int b = testutil::uniform_int(3, 20);
    const auto pred = testutil::random_vector(b);
    const auto target = testutil::random_vector(b);
    const double a = uniform(0.1, 10), c = uniform(-5, 5);
    std::vector<double> t2, p2;
    for (double v : target) t2.push_back(a * v + c);
    for (double v : pred) p2.push_back(a * v);
    const auto base = pearson_loss(pred, target);
    CHECK(pearson_loss(pred, t2).loss == doctest::Approx(base.loss).epsilon(1e-12));
    CHECK((pearson_loss(pred, t2).d_pred - base.d_pred).norm() <= 1e-10 * std::max(1.0, base.d_pred.norm()));
    const auto scaled = pearson_loss(p2, target);
    const double cosine = scaled.d_pred.dot(base.d_pred) / (scaled.d_pred.norm() * base.d_pred.norm());
    CHECK(cosine == doctest::Approx(1.0).epsilon(1e-12));
  }
}
