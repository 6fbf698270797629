#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pgt/errors.hpp"
#include "pgt/ops.hpp"
#include "pgt/rng.hpp"
#include "pgt/tensor.hpp"

using namespace pgt;
using namespace pgt::ops;

namespace {

Tensor random_tensor(std::vector<size_t> shape, SplitMix64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// independent triple-loop product
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c = Tensor::zeros({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (size_t kk = 0; kk < k; ++kk) s += a.data()[i * k + kk] * b.data()[kk * n + j];
      c.data()[i * n + j] = s;
    }
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace

TEST_CASE("splitmix64 reference sequence") {
  SplitMix64 rng0(0);
  CHECK(rng0.next_u64() == 0xE220A8397B1DCDAFull);
  CHECK(rng0.next_u64() == 0x6E789E6AA1B965F4ull);
  CHECK(rng0.next_u64() == 0x06C45D188009454Full);
  SplitMix64 rng1(1234567);
  CHECK(rng1.next_u64() == 0x599ED017FB08FC85ull);
  CHECK(rng1.next_u64() == 0x2C73F08458540FA5ull);
  CHECK(rng1.next_u64() == 0x883EBCE5A3F27C77ull);
}

TEST_CASE("matmul identity") {
  Tensor id = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(id, m);
  CHECK(max_abs_diff(out, m) == 0.0);
}

TEST_CASE("matmul hand arithmetic") {
  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul vs triple-loop oracle") {
  SplitMix64 rng(42);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax symmetry and stabilization") {
  Tensor x = Tensor::from_data({3}, {0, 0, 0});
  Tensor y = softmax(x, 0);
  for (size_t i = 0; i < 3; ++i) CHECK(y.data()[i] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  Tensor big = Tensor::from_data({2}, {1000, 1000});
  Tensor yb = softmax(big, 0);
  CHECK(yb.all_finite());
  CHECK(yb.data()[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("softmax closed form") {
  Tensor x = Tensor::from_data({2}, {0.0, std::log(3.0)});
  Tensor y = softmax(x, 0);
  CHECK(y.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one on random shapes") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t rows = 1 + rng.next_u64() % 32;
    const size_t cols = 1 + rng.next_u64() % 32;
    Tensor x = random_tensor({rows, cols}, rng, -30.0, 30.0);
    Tensor y = softmax(x, -1);
    for (size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (size_t c = 0; c < cols; ++c) s += y.data()[r * cols + c];
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("layer_norm constant row with eps") {
  Tensor x = Tensor::full({1, 5}, 3.0);
  Tensor gamma = Tensor::full({5}, 1.0);
  Tensor beta = Tensor::zeros({5});
  Tensor y = layer_norm(x, gamma, beta, 1e-5);
  for (size_t i = 0; i < 5; ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("layer_norm closed form") {
  Tensor x = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  Tensor y = layer_norm(x, gamma, beta, 0.0);
  CHECK(y.data()[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(y.data()[2] == doctest::Approx(1.2247).epsilon(1e-4));
}

TEST_CASE("layer_norm affine collapse") {
  SplitMix64 rng(3);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor gamma = Tensor::zeros({6});
  Tensor beta = Tensor::full({6}, 2.5);
  Tensor y = layer_norm(x, gamma, beta, 1e-5);
  for (size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("gelu anchor values") {
  Tensor x = Tensor::from_data({3}, {0.0, 10.0, 1.0});
  Tensor y = gelu(x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(y.data()[2] == doctest::Approx(0.8413).epsilon(1e-3));
}

TEST_CASE("grad_check quadratic") {
  Tensor x = Tensor::scalar(3.0);
  auto f = [](const Tensor& t, Tape* tape) {
    return l2_loss(t, Tensor::zeros({1}), tape);  // x^2
  };
  CHECK(grad_check(f, x, 1e-5) < 1e-8);
}

TEST_CASE("grad_check sum of softmax is constant") {
  SplitMix64 rng(11);
  Tensor x = random_tensor({6}, rng);
  auto f = [](const Tensor& t, Tape* tape) { return sum_all(softmax(t, 0, tape), tape); };
  CHECK(grad_check(f, x, 1e-5) < 1e-6);
}

TEST_CASE("grad_check rejects non-scalar f") {
  Tensor x = Tensor::zeros({2});
  auto f = [](const Tensor& t, Tape*) { return t; };
  CHECK_THROWS_AS(grad_check(f, x, 1e-5), ShapeError);
}

TEST_CASE("backward of primitives matches finite differences") {
  SplitMix64 rng(1234567);

  SUBCASE("matmul lhs and rhs") {
    Tensor a = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4, 6}, rng);
    auto fa = [&](const Tensor& t, Tape* tape) { return mean_all(matmul(t, b, tape), tape); };
    auto fb = [&](const Tensor& t, Tape* tape) { return mean_all(matmul(a, t, tape), tape); };
    CHECK(grad_check(fa, a) < 1e-4);
    CHECK(grad_check(fb, b) < 1e-4);
  }
  SUBCASE("add_rowwise bias") {
    Tensor x = random_tensor({7, 3}, rng);
    Tensor bias = random_tensor({3}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(add_rowwise(x, t, tape), tape), tape);
    };
    CHECK(grad_check(f, bias) < 1e-4);
  }
  SUBCASE("softmax") {
    Tensor x = random_tensor({4, 9}, rng);
    // weight rows so the gradient is not identically zero
    Tensor w = random_tensor({4, 9}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      Tensor y = softmax(t, -1, tape);
      Tensor prod = matmul(y, transpose(w, tape), tape);
      return mean_all(prod, tape);
    };
    CHECK(grad_check(f, x) < 1e-4);
  }
  SUBCASE("layer_norm inputs gamma beta") {
    Tensor x = random_tensor({5, 8}, rng);
    Tensor gamma = random_tensor({8}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({8}, rng);
    auto fx = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(layer_norm(t, gamma, beta, 1e-5, tape), tape), tape);
    };
    auto fg = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(layer_norm(x, t, beta, 1e-5, tape), tape), tape);
    };
    auto fbta = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(layer_norm(x, gamma, t, 1e-5, tape), tape), tape);
    };
    CHECK(grad_check(fx, x) < 1e-4);
    CHECK(grad_check(fg, gamma) < 1e-4);
    CHECK(grad_check(fbta, beta) < 1e-4);
  }
  SUBCASE("gelu") {
    Tensor x = random_tensor({4, 8}, rng, -3.0, 3.0);
    auto f = [&](const Tensor& t, Tape* tape) {
      Tensor y = gelu(t, tape);
      return mean_all(matmul(y, transpose(y, tape), tape), tape);
    };
    CHECK(grad_check(f, x) < 1e-4);
  }
  SUBCASE("slice and concat routing") {
    Tensor x = random_tensor({6, 4}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      Tensor top = slice_rows(t, 0, 2, tape);
      Tensor rest = slice_rows(t, 2, 6, tape);
      Tensor round = concat_rows({rest, top}, tape);
      Tensor left = slice_cols(round, 0, 2, tape);
      Tensor right = slice_cols(round, 2, 4, tape);
      return mean_all(gelu(concat_cols({right, left}, tape), tape), tape);
    };
    CHECK(grad_check(f, x) < 1e-4);
  }
  SUBCASE("take and reshape") {
    Tensor x = random_tensor({3, 4}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      Tensor picked = take(t, {0, 5, 5, 11, 3}, tape);
      return mean_all(gelu(reshape(picked, {5, 1}, tape), tape), tape);
    };
    CHECK(grad_check(f, x) < 1e-4);
  }
  SUBCASE("upsample_bilinear") {
    Tensor x = random_tensor({3, 4, 2}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(upsample_bilinear(t, 2, tape), tape), tape);
    };
    CHECK(grad_check(f, x) < 1e-4);
  }
  SUBCASE("conv2d map kernel bias") {
    Tensor map = random_tensor({5, 6, 2}, rng);
    Tensor kernel = random_tensor({3, 3, 2, 3}, rng);
    Tensor bias = random_tensor({3}, rng);
    auto fm = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(conv2d(t, kernel, bias, tape), tape), tape);
    };
    auto fk = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(conv2d(map, t, bias, tape), tape), tape);
    };
    auto fbias = [&](const Tensor& t, Tape* tape) {
      return mean_all(gelu(conv2d(map, kernel, t, tape), tape), tape);
    };
    CHECK(grad_check(fm, map) < 1e-4);
    CHECK(grad_check(fk, kernel) < 1e-4);
    CHECK(grad_check(fbias, bias) < 1e-4);
  }
  SUBCASE("losses") {
    Tensor logits = random_tensor({6, 3}, rng);
    Tensor labels = Tensor::from_data({6}, {0, 2, 1, 1, 0, 2});
    auto fce = [&](const Tensor& t, Tape* tape) {
      return softmax_cross_entropy(t, labels, -1, tape);
    };
    CHECK(grad_check(fce, logits) < 1e-4);

    Tensor blogits = random_tensor({4, 4}, rng);
    Tensor btarget = Tensor::zeros({4, 4});
    for (size_t i = 0; i < 16; ++i) btarget.data()[i] = (i % 3 == 0) ? 1.0 : 0.0;
    auto fbce = [&](const Tensor& t, Tape* tape) {
      return bce_with_logits(t, btarget, 0.95, 0.05, tape);
    };
    CHECK(grad_check(fbce, blogits) < 1e-4);

    Tensor pred = random_tensor({5, 3}, rng);
    Tensor gt = random_tensor({5, 3}, rng);
    auto fl1 = [&](const Tensor& t, Tape* tape) { return l1_loss(t, gt, tape); };
    auto fl2 = [&](const Tensor& t, Tape* tape) { return l2_loss(t, gt, tape); };
    CHECK(grad_check(fl1, pred) < 1e-4);
    CHECK(grad_check(fl2, pred) < 1e-4);
  }
}

TEST_CASE("operations are deterministic") {
  SplitMix64 rng_a(99);
  SplitMix64 rng_b(99);
  Tensor a1 = random_tensor({8, 8}, rng_a);
  Tensor a2 = random_tensor({8, 8}, rng_b);
  CHECK(max_abs_diff(a1, a2) == 0.0);
  Tensor y1 = softmax(matmul(a1, a1), -1);
  Tensor y2 = softmax(matmul(a2, a2), -1);
  for (size_t i = 0; i < y1.size(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("backward accumulates into leaves exactly once") {
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  Tensor y = mean_all(matmul(x, x, &tape), &tape);
  tape.backward(y);
  REQUIRE(x.has_grad());
  // d/dx mean(x.x) via finite differences
  auto f = [](const Tensor& t, Tape* tape2) { return mean_all(matmul(t, t, tape2), tape2); };
  CHECK(grad_check(f, Tensor::from_data({2, 2}, {1, 2, 3, 4})) < 1e-6);
}

TEST_CASE("pgtt round trip preserves bits") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const size_t r = 1 + rng.next_u64() % 4;
    std::vector<size_t> shape;
    for (size_t i = 0; i < r; ++i) shape.push_back(1 + rng.next_u64() % 5);
    Tensor t = random_tensor(shape, rng, -1e6, 1e6);
    std::ostringstream out(std::ios::binary);
    write_pgtt(out, t);
    std::istringstream in(out.str(), std::ios::binary);
    Tensor back = read_pgtt(in);
    REQUIRE(back.shape() == t.shape());
    for (size_t i = 0; i < t.size(); ++i) CHECK(back.data()[i] == t.data()[i]);
  }
}

TEST_CASE("pgtt rejects bad magic") {
  std::istringstream in("NOPE....", std::ios::binary);
  CHECK_THROWS_AS(read_pgtt(in), LoadError);
}
