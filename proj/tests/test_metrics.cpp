#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fcmformer/metrics.hpp"
#include "oracles.hpp"

using namespace fcmformer;

TEST_CASE("accuracy counts exact matches") {
  CHECK(accuracy({0, 1, 2}, {0, 1, 2}) == 1.0);
  CHECK(accuracy({0, 1, 2}, {0, 1, 1}) == Catch::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(accuracy({}, {}), ContractError);
  CHECK_THROWS_AS(accuracy({0, 1}, {0}), ContractError);
}

TEST_CASE("binary AUC on separated and fully tied scores") {
  CHECK(binary_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(binary_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(binary_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(binary_auc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(binary_auc({0.1, 0.2}, {0, 0}), MetricError);
}

TEST_CASE("binary AUC equals the pairwise oracle exactly") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> score_dist(0.0, 1.0);
  std::uniform_int_distribution<int> label_dist(0, 1);
  std::uniform_int_distribution<int> tie_dist(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 49);
    std::vector<double> scores(n);
    std::vector<int> truth(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantized scores force plenty of ties
      scores[i] = tie_dist(rng) == 0 ? 0.25 * tie_dist(rng) : score_dist(rng);
      truth[i] = label_dist(rng);
      has_pos = has_pos || truth[i] == 1;
      has_neg = has_neg || truth[i] == 0;
    }
    if (!has_pos) truth[0] = 1;
    if (!has_neg) truth[n - 1] = 0;
    CHECK(binary_auc(scores, truth) == oracle::auc_pairwise(scores, truth));
  }
}

TEST_CASE("binary AUC is invariant under strictly increasing transforms") {
  std::mt19937 rng(103);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> scores(30);
  std::vector<int> truth(30);
  for (std::size_t i = 0; i < 30; ++i) {
    scores[i] = i % 5 == 0 ? 0.5 : dist(rng);
    truth[i] = i % 3 == 0 ? 1 : 0;
  }
  std::vector<double> transformed(30);
  for (std::size_t i = 0; i < 30; ++i) transformed[i] = std::exp(scores[i]) * 3.0 + 7.0;
  CHECK(binary_auc(scores, truth) == binary_auc(transformed, truth));
}

TEST_CASE("binary AUC of negated scores complements to one exactly") {
  std::mt19937 rng(107);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(20);
    std::vector<int> truth(20);
    for (std::size_t i = 0; i < 20; ++i) {
      scores[i] = i % 4 == 0 ? 0.5 : dist(rng);
      truth[i] = (i + trial) % 2;
    }
    std::vector<double> negated(20);
    for (std::size_t i = 0; i < 20; ++i) negated[i] = -scores[i];
    CHECK(binary_auc(scores, truth) + binary_auc(negated, truth) == 1.0);
  }
}

TEST_CASE("macro one-vs-rest AUC on degenerate inputs") {
  const std::vector<std::vector<double>> onehot = {
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<std::size_t> truth = {0, 1, 2, 0, 1, 2};
  CHECK(macro_ovr_auc(onehot, truth, 3) == 1.0);

  const std::vector<std::vector<double>> uniform(6, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(macro_ovr_auc(uniform, truth, 3) == 0.5);
}

TEST_CASE("macro AUC equals per-class pairwise oracles") {
  std::mt19937 rng(109);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<std::vector<double>> probs(12, std::vector<double>(3));
  std::vector<std::size_t> truth(12);
  for (std::size_t i = 0; i < 12; ++i) {
    double total = 0.0;
    for (auto& p : probs[i]) {
      p = dist(rng);
      total += p;
    }
    for (auto& p : probs[i]) p /= total;
    truth[i] = i % 3;
  }
  double expected = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> scores(12);
    std::vector<int> binary(12);
    for (std::size_t i = 0; i < 12; ++i) {
      scores[i] = probs[i][c];
      binary[i] = truth[i] == c;
    }
    expected += oracle::auc_pairwise(scores, binary);
  }
  expected /= 3.0;
  CHECK(macro_ovr_auc(probs, truth, 3) == Catch::Approx(expected).margin(1e-15));
}

TEST_CASE("macro AUC lists the absent classes") {
  const std::vector<std::vector<double>> probs = {{1, 0, 0}, {0, 1, 0}};
  try {
    macro_ovr_auc(probs, {0, 1}, 3);
    FAIL("expected MetricError");
  } catch (const MetricError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("confusion matrix bookkeeping") {
  const std::vector<std::size_t> preds = {0, 0, 1, 2, 2, 1};
  const std::vector<std::size_t> truth = {0, 1, 1, 2, 1, 1};
  const auto m = confusion_matrix(preds, truth, 3);
  CHECK(m[0][0] == 1);
  CHECK(m[1][0] == 1);
  CHECK(m[1][1] == 2);
  CHECK(m[1][2] == 1);
  CHECK(m[2][2] == 1);
  std::size_t total = 0;
  std::vector<std::size_t> row_sums(3, 0);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      total += m[r][c];
      row_sums[r] += m[r][c];
    }
  }
  CHECK(total == preds.size());
  CHECK(row_sums == std::vector<std::size_t>{1, 4, 1});

  const double acc = accuracy(preds, truth);
  const double trace = static_cast<double>(m[0][0] + m[1][1] + m[2][2]);
  CHECK(acc == trace / static_cast<double>(total));
}
