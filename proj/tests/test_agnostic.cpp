#include <doctest.h>

#include <cmath>
#include <numbers>

#include "agnostic_features.hpp"
#include "random.hpp"
#include "support.hpp"

using namespace probeforge;
using doctest::Approx;

TEST_SUITE("agnostic_features") {

TEST_CASE("uniform logits give quarter probabilities and ln 4") {
  const auto f = agnostic::mc_features(std::vector<double>{0, 0, 0, 0});
  REQUIRE(f.size() == 5);
  for (int i = 0; i < 4; ++i) CHECK(f[i] == 0.25);
  CHECK(std::abs(f[4] - std::log(4.0)) <= 1e-12);
}

TEST_CASE("one-hot limit") {
  const auto f = agnostic::mc_features(std::vector<double>{30, 0, 0, 0});
  CHECK(f[0] == Approx(1.0).epsilon(1e-12));
  CHECK(f[4] <= 1e-9);
  CHECK(f[4] >= 0.0);
}

TEST_CASE("unsorted logits are sorted after softmax") {
  const auto f = agnostic::mc_features(std::vector<double>{1, 3, 2, 0});
  // direct evaluation without max subtraction
  const double z = std::exp(3.0) + std::exp(2.0) + std::exp(1.0) + 1.0;
  const double p[4] = {std::exp(3.0) / z, std::exp(2.0) / z, std::exp(1.0) / z, 1.0 / z};
  double h = 0;
  for (double q : p) h -= q * std::log(q);
  for (int i = 0; i < 4; ++i) CHECK(f[i] == Approx(p[i]).epsilon(1e-12));
  CHECK(f[4] == Approx(h).epsilon(1e-12));
}

TEST_CASE("non-finite logit is rejected") {
  CHECK_THROWS_AS(agnostic::mc_features(std::vector<double>{0, NAN, 0, 0}), Error);
  CHECK_THROWS_AS(agnostic::mc_features(std::vector<double>{0, 0, 0}), Error);
}

TEST_CASE("short-form features") {
  const auto zero = agnostic::sf_features(std::vector<double>{0}, std::vector<double>{0});
  CHECK(zero == std::vector<double>{0, 0, 0, 0});

  const auto f = agnostic::sf_features(std::vector<double>{std::log(0.5), std::log(0.25)},
                                       std::vector<double>{0.1, 0.3});
  CHECK(f[0] == Approx(1.0397207708399179).epsilon(1e-12));
  CHECK(f[1] == Approx(1.3862943611198906).epsilon(1e-12));
  CHECK(f[2] == Approx(0.2).epsilon(1e-12));
  CHECK(f[3] == Approx(0.3).epsilon(1e-12));

  const auto c = agnostic::sf_features(std::vector<double>{-1, -2, -3}, std::vector<double>{0.7, 0.7, 0.7});
  CHECK(c[2] == Approx(0.7));
  CHECK(c[3] == 0.7);

  CHECK_THROWS_AS(agnostic::sf_features(std::vector<double>{}, std::vector<double>{}), Error);
  CHECK_THROWS_AS(agnostic::sf_features(std::vector<double>{-1}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("sf_features equals a plain fold over the lists") {
  rng::Rng gen(99);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + gen.below(20);
    std::vector<double> lp(n), h(n);
    for (std::size_t i = 0; i < n; ++i) {
      lp[i] = -gen.exponential(2.0);
      h[i] = gen.exponential(1.5);
    }
    double s_nll = 0, m_nll = 0, s_h = 0, m_h = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s_nll += -lp[i];
      m_nll = std::max(m_nll, -lp[i]);
      s_h += h[i];
      m_h = std::max(m_h, h[i]);
    }
    const auto f = agnostic::sf_features(lp, h);
    CHECK(f[0] == s_nll / double(n));
    CHECK(f[1] == m_nll);
    CHECK(f[2] == s_h / double(n));
    CHECK(f[3] == m_h);
    CHECK(f[1] >= f[0]);
    CHECK(f[3] >= f[2]);
  }
}

TEST_CASE("sortedness, bounds and shift invariance over random draws") {
  rng::Rng gen(7);
  const double ln4 = std::log(4.0);
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> z(4);
    for (auto& v : z) v = gen.normal() * 5.0;
    const auto f = agnostic::mc_features(z);
    double sum = 0;
    for (int i = 0; i < 4; ++i) {
      REQUIRE(f[i] >= 0.0);
      REQUIRE(f[i] <= 1.0);
      sum += f[i];
      if (i > 0) REQUIRE(f[i] <= f[i - 1]);
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    REQUIRE(f[4] >= 0.0);
    REQUIRE(f[4] <= ln4);
    const double c = gen.uniform(-50, 50);
    std::vector<double> shifted(z);
    for (auto& v : shifted) v += c;
    const auto g = agnostic::mc_features(shifted);
    for (int i = 0; i < 5; ++i) REQUIRE(std::abs(f[i] - g[i]) <= 1e-9);
  }
}

TEST_CASE("batch features map the per-sample call") {
  auto b = testing_support::sf_bundle(2, 3, {15}, 1);
  const auto m = agnostic::batch_features(b);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 4);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto f = agnostic::sample_features(TaskType::kShortForm, b.signals[i]);
    for (std::size_t j = 0; j < 4; ++j) CHECK(m(i, j) == f[j]);
  }

  auto mc = testing_support::mc_bundle(1, 3, {15}, 2);
  mc.signals[0].choice_logits = {0, 0, 0, 0};
  const auto row = agnostic::batch_features(mc);
  REQUIRE(row.cols() == 5);
  CHECK(row(0, 0) == 0.25);
  CHECK(row(0, 4) == Approx(std::log(4.0)));
}

TEST_CASE("batch errors carry the sample id") {
  auto b = testing_support::sf_bundle(3, 3, {15}, 1);
  b.signals[2].token_entropies.clear();
  try {
    agnostic::batch_features(b);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(b.signals[2].id) != std::string::npos);
  }
}

}  // TEST_SUITE
