#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pgt/analysis.hpp"
#include "pgt/errors.hpp"
#include "pgt/rng.hpp"

using namespace pgt;
using namespace pgt::analysis;

namespace {

PromptBank make_bank(const std::vector<std::pair<std::string, std::vector<double>>>& prompts,
                     size_t np, size_t d, const std::string& block = "enc.s1.b0") {
  PromptBank bank;
  for (const auto& [task, values] : prompts)
    bank.put(task, block, Tensor::from_data({np, d}, values));
  return bank;
}

}  // namespace

TEST_CASE("identical prompts have similarity one, orthogonal zero") {
  PromptBank bank = make_bank({{"a", {1, 0, 0, 1}}, {"b", {1, 0, 0, 1}}, {"c", {0, 1, -1, 0}}},
                              2, 2);
  SimilarityMatrix sim = prompt_similarity(bank, {"a", "b", "c"}, "enc.s1.b0");
  CHECK(sim.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sim.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sim.at(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sim.at(1, 2) == doctest::Approx(0.0).epsilon(1e-12));
  // symmetry with unit diagonal
  for (size_t i = 0; i < 3; ++i) {
    CHECK(sim.at(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    for (size_t j = 0; j < 3; ++j) CHECK(sim.at(i, j) == sim.at(j, i));
  }
}

TEST_CASE("similarity matches a direct dot-product oracle") {
  SplitMix64 rng(2);
  const size_t np = 3, d = 5;
  std::vector<std::pair<std::string, std::vector<double>>> prompts;
  for (const std::string name : {"t0", "t1", "t2", "t3"}) {
    std::vector<double> v(np * d);
    for (double& x : v) x = rng.uniform(-1, 1);
    prompts.emplace_back(name, v);
  }
  PromptBank bank = make_bank(prompts, np, d);
  SimilarityMatrix sim = prompt_similarity(bank, {"t0", "t1", "t2", "t3"}, "enc.s1.b0");
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) {
      const auto& a = prompts[i].second;
      const auto& b = prompts[j].second;
      double dot = 0, na = 0, nb = 0;
      for (size_t k = 0; k < np * d; ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
      }
      CHECK(std::abs(sim.at(i, j) - dot / std::sqrt(na * nb)) < 1e-12);
    }
}

TEST_CASE("zero prompts are an undefined-similarity error") {
  PromptBank bank = make_bank({{"a", {0, 0, 0, 0}}, {"b", {1, 0, 0, 1}}}, 2, 2);
  CHECK_THROWS_AS(prompt_similarity(bank, {"a", "b"}, "enc.s1.b0"), MetricError);
}

TEST_CASE("unknown block id is a selector error") {
  PromptBank bank = make_bank({{"a", {1, 0, 0, 1}}}, 2, 2);
  CHECK_THROWS_AS(prompt_similarity(bank, {"a"}, "enc.s9.b9"), ConfigError);
}

TEST_CASE("similarity is invariant under a common rotation") {
  SplitMix64 rng(3);
  const size_t np = 2, d = 4, n = np * d;

  // Gram-Schmidt an 8x8 random matrix into an orthogonal Q
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  for (auto& row : q)
    for (double& v : row) v = rng.uniform(-1, 1);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (size_t k = 0; k < n; ++k) dot += q[i][k] * q[j][k];
      for (size_t k = 0; k < n; ++k) q[i][k] -= dot * q[j][k];
    }
    double norm = 0;
    for (size_t k = 0; k < n; ++k) norm += q[i][k] * q[i][k];
    norm = std::sqrt(norm);
    for (size_t k = 0; k < n; ++k) q[i][k] /= norm;
  }

  std::vector<std::pair<std::string, std::vector<double>>> raw, rotated;
  for (const std::string name : {"a", "b", "c"}) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1, 1);
    std::vector<double> rv(n, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < n; ++k) rv[i] += q[i][k] * v[k];
    raw.emplace_back(name, v);
    rotated.emplace_back(name, rv);
  }
  SimilarityMatrix s1 = prompt_similarity(make_bank(raw, np, d), {"a", "b", "c"}, "enc.s1.b0");
  SimilarityMatrix s2 =
      prompt_similarity(make_bank(rotated, np, d), {"a", "b", "c"}, "enc.s1.b0");
  for (size_t i = 0; i < 9; ++i) CHECK(std::abs(s1.values[i] - s2.values[i]) < 1e-9);
}

TEST_CASE("per-token reduction averages token cosines") {
  // token 0 aligned, token 1 anti-aligned: flatten sees 0, token mean sees 0 too,
  // but scaling one token breaks the tie for flatten only
  PromptBank bank =
      make_bank({{"a", {1, 0, 2, 0}}, {"b", {1, 0, -2, 0}}}, 2, 2);
  SimilarityMatrix flat =
      prompt_similarity(bank, {"a", "b"}, "enc.s1.b0", SimilarityReduction::kFlatten);
  SimilarityMatrix per_token =
      prompt_similarity(bank, {"a", "b"}, "enc.s1.b0", SimilarityReduction::kMeanPerToken);
  CHECK(flat.at(0, 1) == doctest::Approx((1.0 - 4.0) / 5.0).epsilon(1e-12));
  CHECK(per_token.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("heatmap of a constant map is all zeros") {
  Tensor heat = feature_heatmap(Tensor::full({4, 4, 3}, 2.5));
  for (size_t i = 0; i < heat.size(); ++i) CHECK(heat.data()[i] == 0.0);
}

TEST_CASE("heatmap of a single hot pixel") {
  Tensor map = Tensor::zeros({3, 3, 2});
  map.data()[(1 * 3 + 2) * 2 + 0] = 4.0;
  map.data()[(1 * 3 + 2) * 2 + 1] = -4.0;
  Tensor heat = feature_heatmap(map);
  for (size_t i = 0; i < 9; ++i)
    CHECK(heat.data()[i] == (i == 5 ? 1.0 : 0.0));
}

TEST_CASE("heatmap matches a loop oracle and stays in range") {
  SplitMix64 rng(4);
  Tensor map = Tensor::zeros({5, 6, 3});
  for (double& v : map.values()) v = rng.uniform(-2, 2);
  Tensor heat = feature_heatmap(map);

  std::vector<double> raw(30);
  for (size_t i = 0; i < 30; ++i) {
    double s = 0;
    for (size_t c = 0; c < 3; ++c) s += std::abs(map.data()[i * 3 + c]);
    raw[i] = s / 3.0;
  }
  const double lo = *std::min_element(raw.begin(), raw.end());
  const double hi = *std::max_element(raw.begin(), raw.end());
  for (size_t i = 0; i < 30; ++i) {
    CHECK(std::abs(heat.data()[i] - (raw[i] - lo) / (hi - lo)) < 1e-12);
    CHECK(heat.data()[i] >= 0.0);
    CHECK(heat.data()[i] <= 1.0);
  }
}

TEST_CASE("pgm export carries the expected header") {
  Tensor heat = Tensor::from_data({2, 2}, {0.0, 0.5, 0.25, 1.0});
  const std::string pgm = to_pgm(heat);
  CHECK(pgm.rfind("P2\n2 2\n255\n", 0) == 0);
  CHECK(pgm.find("255") != std::string::npos);
  CHECK(pgm.find("128") != std::string::npos);  // 0.5 rounds to 128
}
