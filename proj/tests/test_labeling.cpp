#include <doctest.h>

#include "labeling.hpp"
#include "oracles.hpp"
#include "random.hpp"
#include "support.hpp"

using namespace probeforge;
using doctest::Approx;

TEST_SUITE("labeling") {

TEST_CASE("exact match normalization") {
  CHECK(labeling::exact_match_label("B", "B") == 1);
  CHECK(labeling::exact_match_label("B.", "b") == 1);
  CHECK(labeling::exact_match_label("The answer is C", "D") == 0);
  CHECK(labeling::exact_match_label("(a) apples", "A") == 1);
  CHECK(labeling::exact_match_label("none", "A") == 0);
  CHECK(labeling::exact_match_label("", "") == 0);
  CHECK(labeling::normalize_choice("Bad answer: d") == 'D');
  CHECK(labeling::normalize_choice("xyz") == '\0');
}

TEST_CASE("rouge-l examples") {
  CHECK(labeling::rouge_l("the cat sat", "the cat sat") == 1.0);
  CHECK(labeling::rouge_l("a b c", "d e f") == 0.0);
  CHECK(labeling::rouge_l("the cat sat on the mat", "the cat lay on the mat") == Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(labeling::rouge_l("", "x") == 0.0);
  CHECK(labeling::rouge_l("!!!", "x") == 0.0);
  CHECK(labeling::rouge_l("Paris.", "paris") == 1.0);
}

TEST_CASE("rouge-l matches the memoized LCS oracle and stays bounded") {
  rng::Rng gen(2024);
  const std::vector<std::string> vocab{"a", "b", "c", "the", "cat", "dog", "Sat", "on", "mat", "x-y"};
  for (int t = 0; t < 300; ++t) {
    auto sentence = [&] {
      std::string s;
      const auto len = gen.below(12);
      for (std::size_t i = 0; i < len; ++i) s += vocab[gen.below(vocab.size())] + (gen.below(3) ? " " : ", ");
      return s;
    };
    const std::string c = sentence(), r = sentence();
    const auto ct = labeling::tokenize(c), rt = labeling::tokenize(r);
    CHECK(ct == oracle::split_tokens(c));
    CHECK(labeling::lcs_length(ct, rt) == oracle::lcs(ct, rt));
    const double f = labeling::rouge_l(c, r);
    CHECK(f == oracle::rouge_f(c, r));
    CHECK(f == labeling::rouge_l(r, c));
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    if (!ct.empty()) CHECK(labeling::rouge_l(c, c) == 1.0);
  }
}

TEST_CASE("label_bundle for both task types") {
  auto mc = testing_support::mc_bundle(6, 2, {15}, 3);
  for (auto& s : mc.signals) s.answer = s.gold[0];
  const auto lm = labeling::label_bundle(mc);
  CHECK(lm.kind == LabelKind::kExactMatch);
  CHECK(lm.values == std::vector<double>(6, 1.0));

  auto sf = testing_support::sf_bundle(2, 2, {15}, 4);
  sf.signals[0].gold = {"X Y", "A B"};
  sf.signals[0].answer = "A B";
  sf.signals[1].answer = "";
  const auto ls = labeling::label_bundle(sf);
  CHECK(ls.kind == LabelKind::kRougeL);
  CHECK(ls.values[0] == 1.0);
  CHECK(ls.values[1] == 0.0);

  sf.signals[1].gold.clear();
  try {
    labeling::label_bundle(sf);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(sf.signals[1].id) != std::string::npos);
  }
}

TEST_CASE("binarize uses >=") {
  CHECK(labeling::binarize(std::vector<double>{0.83, 0.2}, 0.5) == std::vector<int>{1, 0});
  CHECK(labeling::binarize(std::vector<double>{0.5}, 0.5) == std::vector<int>{1});
  CHECK(labeling::binarize(std::vector<double>{1, 0, 1}, 0.5) == std::vector<int>{1, 0, 1});
  CHECK_THROWS_AS(labeling::binarize(std::vector<double>{0.5}, 1.0), Error);
}

}  // TEST_SUITE
