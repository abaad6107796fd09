#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "random.hpp"
#include "tree_shap.hpp"

using namespace probeforge;
using forest::Node;
using forest::Tree;

namespace {

forest::ForestModel random_forest(std::size_t n_features, std::size_t n_trees, std::size_t depth,
                                  std::uint64_t seed) {
  rng::Rng gen(seed);
  const std::size_t n = 200;
  FeatureMatrix x(n, n_features);
  std::vector<double> y(n);
  for (auto& v : x.data()) v = static_cast<float>(gen.below(5)) / 4.0f;  // coarse grid, many ties
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n_features; ++j) s += (j % 3 == 0 ? 1.0 : -0.5) * x(i, j);
    y[i] = 1.0 / (1.0 + std::exp(-s + gen.normal() * 0.3));
  }
  forest::Params p;
  p.n_trees = n_trees;
  p.max_depth = depth;
  p.min_samples_leaf = 1;
  p.seed = seed;
  return forest::train(x, y, p);
}

}  // namespace

TEST_SUITE("tree_shap") {

TEST_CASE("single leaf tree") {
  const Tree t{{Node{-1, 0, -1, -1, 0.7, 9}}};
  const auto a = shap::shap_tree(t, std::vector<float>{1, 2, 3}, 3);
  CHECK(a.phi0 == 0.7);
  CHECK(a.phi == std::vector<double>{0, 0, 0});
}

TEST_CASE("depth-one stump routed right") {
  const Tree t{{Node{0, 0.5, 1, 2, 0.5, 100}, Node{-1, 0, -1, -1, 0.0, 50}, Node{-1, 0, -1, -1, 1.0, 50}}};
  const std::vector<float> x{0.9f, 0.1f, 0.3f};
  const auto a = shap::shap_tree(t, x, 3);
  CHECK(a.phi0 == doctest::Approx(0.5));
  CHECK(a.phi[0] == doctest::Approx(0.5));
  CHECK(a.phi[1] == 0.0);
  CHECK(a.phi[2] == 0.0);
  const auto o = oracle::brute_force_shapley({t}, x);
  CHECK(o.phi[0] == doctest::Approx(0.5));
}

TEST_CASE("inconsistent covers are rejected") {
  const Tree t{{Node{0, 0.5, 1, 2, 0.5, 100}, Node{-1, 0, -1, -1, 0.0, 50}, Node{-1, 0, -1, -1, 1.0, 40}}};
  CHECK_THROWS_AS(shap::shap_tree(t, std::vector<float>{0, 0}, 2), Error);
}

TEST_CASE("random trees match brute-force Shapley") {
  rng::Rng gen(77);
  for (int f = 0; f < 10; ++f) {
    const std::size_t n_features = 2 + gen.below(11);
    const auto model = random_forest(n_features, 1 + gen.below(5), 1 + gen.below(4), 100 + f);
    for (int r = 0; r < 5; ++r) {
      std::vector<float> x(n_features);
      for (auto& v : x) v = static_cast<float>(gen.below(5)) / 4.0f;
      const auto mine = shap::shap_forest(model, x);
      const auto ref = oracle::brute_force_shapley(model.trees(), x);
      CHECK(std::abs(mine.phi0 - ref.phi0) <= 1e-9);
      for (std::size_t j = 0; j < n_features; ++j) CHECK(std::abs(mine.phi[j] - ref.phi[j]) <= 1e-6);
    }
  }
}

TEST_CASE("repeated feature on one path") {
  // x0 < 0.5 ? (x0 < 0.25 ? 0 : 0.4) : (x1 < 0.5 ? 0.6 : 1)
  const Tree t{{Node{0, 0.5, 1, 4, 0.5, 20}, Node{0, 0.25, 2, 3, 0.2, 10}, Node{-1, 0, -1, -1, 0.0, 4},
                Node{-1, 0, -1, -1, 0.4, 6}, Node{1, 0.5, 5, 6, 0.8, 10}, Node{-1, 0, -1, -1, 0.6, 3},
                Node{-1, 0, -1, -1, 1.0, 7}}};
  for (const std::vector<float>& x : {std::vector<float>{0.1f, 0.9f}, std::vector<float>{0.3f, 0.2f},
                                      std::vector<float>{0.7f, 0.7f}}) {
    const auto a = shap::shap_tree(t, x, 2);
    const auto o = oracle::brute_force_shapley({t}, x);
    CHECK(a.phi[0] == doctest::Approx(o.phi[0]).epsilon(1e-12));
    CHECK(a.phi[1] == doctest::Approx(o.phi[1]).epsilon(1e-12));
    CHECK(a.phi0 + a.phi[0] + a.phi[1] == doctest::Approx(t.predict(x)).epsilon(1e-12));
  }
}

TEST_CASE("forest attribution is the mean of tree attributions") {
  const auto model = random_forest(6, 4, 3, 5);
  const std::vector<float> x{0.25f, 0.5f, 1.0f, 0.0f, 0.75f, 0.5f};
  const auto all = shap::shap_forest(model, x);
  std::vector<double> sum(6, 0.0);
  double phi0 = 0;
  for (const auto& t : model.trees()) {
    const auto a = shap::shap_tree(t, x, 6);
    for (std::size_t j = 0; j < 6; ++j) sum[j] += a.phi[j];
    phi0 += a.phi0;
  }
  for (std::size_t j = 0; j < 6; ++j) CHECK(all.phi[j] == doctest::Approx(sum[j] / 4.0).epsilon(1e-14));
  CHECK(all.phi0 == doctest::Approx(phi0 / 4.0).epsilon(1e-14));

  const Tree& first = model.trees().front();
  const forest::ForestModel twins({first, first}, 6, model.params(), model.base_value());
  const auto single = shap::shap_tree(first, x, 6);
  const auto doubled = shap::shap_forest(twins, x);
  for (std::size_t j = 0; j < 6; ++j) CHECK(doubled.phi[j] == doctest::Approx(single.phi[j]).epsilon(1e-14));
}

TEST_CASE("unused features get exactly zero and local accuracy holds") {
  const auto model = random_forest(5, 3, 2, 9);
  std::set<int> used;
  for (const auto& t : model.trees())
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) used.insert(n.feature);
  FeatureMatrix x(50, 5);
  rng::Rng gen(10);
  for (auto& v : x.data()) v = static_cast<float>(gen.uniform());
  const auto attrs = shap::shap_forest(model, x, 2);
  for (std::size_t r = 0; r < 50; ++r) {
    double total = attrs[r].phi0;
    for (std::size_t j = 0; j < 5; ++j) {
      total += attrs[r].phi[j];
      if (!used.count(static_cast<int>(j))) CHECK(attrs[r].phi[j] == 0.0);
    }
    CHECK(std::abs(total - model.predict_row(x.row(r))) <= 1e-9);
  }
  CHECK_THROWS_AS(shap::shap_forest(model, std::vector<float>{1, 2}), Error);
}

TEST_CASE("mean |SHAP| table ordering and flags") {
  std::vector<shap::Attribution> one{{{0.1, -0.5, 0.3}, 0.0}};
  const auto t = shap::mean_abs_table(one, 2);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].feature == 1);
  CHECK(t.rows[0].mean_abs == 0.5);
  CHECK(t.rows[1].feature == 2);
  CHECK(t.rows[1].agnostic);
  CHECK_FALSE(t.rows[0].agnostic);

  std::vector<shap::Attribution> zeros(3, shap::Attribution{{0.0, 0.0, 0.0, 0.0}, 0.0});
  const auto z = shap::mean_abs_table(zeros, 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(z.rows[i].feature == i);
  CHECK(z.to_csv().rfind("rank,feature,mean_shap,agnostic\n1,feature_0,0,0\n", 0) == 0);

  std::vector<shap::Attribution> ragged{{{1.0, 2.0}, 0.0}, {{1.0}, 0.0}};
  CHECK_THROWS_AS(shap::mean_abs_table(ragged, 1), Error);
  CHECK_THROWS_AS(shap::mean_abs_table(std::vector<shap::Attribution>{}, 1), Error);
}

TEST_CASE("agnostic flags land on the appended block of a 4101-wide view") {
  std::vector<shap::Attribution> a{{std::vector<double>(4101, 0.0), 0.0}};
  a[0].phi[4100] = 0.9;
  a[0].phi[4096] = 0.8;
  a[0].phi[12] = 0.5;
  const auto t = shap::mean_abs_table(a, 4096);
  CHECK(t.rows[0].feature == 4100);
  CHECK(t.rows[0].agnostic);
  CHECK(t.rows[1].feature == 4096);
  CHECK(t.rows[1].agnostic);
  CHECK(t.rows[2].feature == 12);
  CHECK_FALSE(t.rows[2].agnostic);
  std::size_t flagged = 0;
  for (const auto& r : t.rows) flagged += r.agnostic;
  CHECK(flagged == 5);
}

}  // TEST_SUITE
