#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cf/gradcheck.hpp"
#include "cf/ops.hpp"
#include "cf/rng.hpp"
#include "cf/tensor.hpp"

using namespace cf;

TEST_CASE("tensor construction validates shape", "[tensor]") {
  CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor({}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6.0);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("untracked ops run pure", "[tensor]") {
  const Tensor a({2}, {1.0, 2.0});
  const Tensor b({2}, {3.0, 4.0});
  const Tensor c = add(a, b);
  CHECK_FALSE(c.tracked());
  CHECK(c.data == std::vector<double>{4.0, 6.0});
}

TEST_CASE("backward of sum of squares gives 2x", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({3}, {1.0, -2.0, 0.5}));
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  const Tensor g = tape.grad(x);
  CHECK(g.data == std::vector<double>{2.0, -4.0, 1.0});
}

TEST_CASE("matmul forward matches hand result", "[tensor]") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  const Tensor c = matmul(a, b);
  CHECK(c.data == std::vector<double>{19, 22, 43, 50});
  CHECK_THROWS_AS(matmul(a, Tensor({3, 2}, {1, 2, 3, 4, 5, 6})), ShapeError);
}

TEST_CASE("matmul backward matches hand gradients", "[tensor]") {
  // loss = sum(A.B); dA = ones . B^T, dB = A^T . ones
  Tape tape;
  Tensor a = tape.watch(Tensor({2, 2}, {1, 2, 3, 4}));
  Tensor b = tape.watch(Tensor({2, 2}, {5, 6, 7, 8}));
  tape.backward(sum(matmul(a, b)));
  CHECK(tape.grad(a).data == std::vector<double>{11, 15, 11, 15});
  CHECK(tape.grad(b).data == std::vector<double>{4, 4, 6, 6});
}

TEST_CASE("conv2d matches hand-rolled direct convolution", "[tensor]") {
  const Tensor input({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor kernel({1, 1, 2, 2}, {1, 0, 0, 1});
  const Tensor out = conv2d(input, kernel);
  CHECK(out.shape == Shape{1, 1, 2, 2});
  CHECK(out.data == std::vector<double>{6, 8, 12, 14});
}

TEST_CASE("conv2d padding and stride shapes", "[tensor]") {
  const Tensor input = Tensor::full({1, 1, 5, 5}, 1.0);
  const Tensor kernel = Tensor::full({2, 1, 3, 3}, 1.0);
  CHECK(conv2d(input, kernel, 1, 0).shape == Shape{1, 2, 3, 3});
  CHECK(conv2d(input, kernel, 2, 1).shape == Shape{1, 2, 3, 3});
  const Tensor padded = conv2d(input, kernel, 1, 1);
  CHECK(padded.shape == Shape{1, 2, 5, 5});
  // Centre of an all-ones 5x5 seen by a 3x3 ones kernel sums 9 cells.
  CHECK(padded.at(2 * 5 + 2) == 9.0);
  // Top-left corner with pad 1 only overlaps 4 cells.
  CHECK(padded.at(0) == 4.0);
  CHECK_THROWS_AS(conv2d(input, Tensor::full({1, 2, 3, 3}, 1.0)), ShapeError);
  CHECK_THROWS_AS(conv2d(input, Tensor::full({1, 1, 7, 7}, 1.0)), ShapeError);
}

TEST_CASE("softmax cross entropy on uniform logits is log K", "[tensor]") {
  const Tensor logits = Tensor::zeros({3, 4});
  const std::vector<int> labels{0, 1, 3};
  CHECK(softmax_cross_entropy(logits, labels).item() ==
        Catch::Approx(std::log(4.0)).epsilon(1e-12));
  // Smoothing does not move the loss when all log-probs are equal.
  CHECK(softmax_cross_entropy(logits, labels, 0.3).item() ==
        Catch::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1}), ShapeError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1, 4}), std::out_of_range);
}

TEST_CASE("softmax cross entropy gradient equals probs minus target over n", "[tensor]") {
  const std::vector<double> vals{0.2, -0.1, 0.3, 1.0, 0.0, -1.0};
  const std::vector<int> labels{2, 0};
  Tape tape;
  Tensor logits = tape.watch(Tensor({2, 3}, vals));
  tape.backward(softmax_cross_entropy(logits, labels, 0.1));
  const Tensor g = tape.grad(logits);
  for (std::size_t i = 0; i < 2; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(vals[i * 3 + j]);
    for (std::size_t j = 0; j < 3; ++j) {
      const double p = std::exp(vals[i * 3 + j]) / z;
      double target = 0.1 / 3.0;
      if (j == static_cast<std::size_t>(labels[i])) target += 0.9;
      CHECK(g.data[i * 3 + j] == Catch::Approx((p - target) / 2.0).margin(1e-12));
    }
  }
}

TEST_CASE("large logits do not overflow", "[tensor]") {
  const Tensor logits({1, 3}, {1000.0, 999.0, -1000.0});
  const double loss = softmax_cross_entropy(logits, {0}).item();
  CHECK(std::isfinite(loss));
  CHECK(loss == Catch::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-9));
}

TEST_CASE("relu gradient is zero at the kink", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({3}, {-1.0, 0.0, 2.0}));
  tape.backward(sum(relu(x)));
  CHECK(tape.grad(x).data == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("gather_rows scatter-adds repeated rows", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  Tensor g = gather_rows(x, {1, 1, 0});
  CHECK(g.data == std::vector<double>{3, 4, 3, 4, 1, 2});
  tape.backward(sum(g));
  CHECK(tape.grad(x).data == std::vector<double>{1, 1, 2, 2, 0, 0});
  CHECK_THROWS_AS(gather_rows(x, {3}), ShapeError);
  CHECK_THROWS_AS(gather_rows(x, {}), ShapeError);
}

TEST_CASE("concat forward and backward slices", "[tensor]") {
  Tape tape;
  Tensor a = tape.watch(Tensor({1, 2}, {1, 2}));
  const Tensor b({2, 2}, {3, 4, 5, 6});
  Tensor joined = concat({a, b});
  CHECK(joined.shape == Shape{3, 2});
  CHECK(joined.data == std::vector<double>{1, 2, 3, 4, 5, 6});
  tape.backward(sum(scalar_mul(joined, 2.0)));
  CHECK(tape.grad(a).data == std::vector<double>{2, 2});
  CHECK_THROWS_AS(concat({a, Tensor({1, 3}, {1, 2, 3})}), ShapeError);
}

TEST_CASE("bias_add broadcasts rows and channels", "[tensor]") {
  const Tensor x({2, 3}, {0, 0, 0, 1, 1, 1});
  const Tensor b({3}, {1, 2, 3});
  CHECK(bias_add(x, b).data == std::vector<double>{1, 2, 3, 2, 3, 4});
  Tape tape;
  Tensor tb = tape.watch(b);
  tape.backward(sum(bias_add(tape.watch(x), tb)));
  CHECK(tape.grad(tb).data == std::vector<double>{2, 2, 2});
  const Tensor img = Tensor::zeros({1, 2, 2, 2});
  const Tensor cb({2}, {5, 7});
  const Tensor y = bias_add(img, cb);
  CHECK(y.data == std::vector<double>{5, 5, 5, 5, 7, 7, 7, 7});
}

TEST_CASE("detach stops gradient flow", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({2}, {1.0, 2.0}));
  Tensor frozen = detach(mul(x, x));
  CHECK_FALSE(frozen.tracked());
  Tensor loss = sum(add(mul(x, x), frozen));
  tape.backward(loss);
  CHECK(tape.grad(x).data == std::vector<double>{2.0, 4.0});
}

TEST_CASE("leaves unreachable from the loss get zero gradients", "[tensor]") {
  Tape tape;
  Tensor used = tape.watch(Tensor({2}, {1.0, 1.0}));
  Tensor unused = tape.watch(Tensor({2}, {5.0, 5.0}));
  tape.backward(sum(used));
  CHECK(tape.grad(unused).data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("a value consumed twice accumulates both paths", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({2}, {3.0, -1.0}));
  Tensor y = add(x, x);
  tape.backward(sum(y));
  CHECK(tape.grad(x).data == std::vector<double>{2.0, 2.0});
}

TEST_CASE("backward contract violations throw", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(mul(x, x)), ContractError);  // non-scalar
  Tape other;
  CHECK_THROWS_AS(other.backward(sum(x)), ContractError);  // wrong tape
  CHECK_THROWS_AS(other.grad(x), ContractError);
  Tensor y = other.watch(Tensor({2}, {1.0, 1.0}));
  CHECK_THROWS_AS(add(x, y), ContractError);  // mixed tapes
}

TEST_CASE("repeated backward reproduces the same gradients", "[tensor]") {
  Tape tape;
  Tensor x = tape.watch(Tensor({3}, {0.5, -0.5, 2.0}));
  Tensor loss = mean(mul(x, x));
  tape.backward(loss);
  const Tensor g1 = tape.grad(x);
  tape.backward(loss);
  CHECK(tape.grad(x).data == g1.data);
}

TEST_CASE("backward is linear in the loss", "[tensor]") {
  const Tensor x0({4}, {0.3, -1.2, 0.7, 2.0});
  const auto grad_of = [&](double a, double b) {
    Tape tape;
    Tensor x = tape.watch(x0);
    Tensor f = sum(mul(x, x));
    Tensor g = mean(relu(x));
    tape.backward(add(scalar_mul(f, a), scalar_mul(g, b)));
    return tape.grad(x);
  };
  const Tensor gf = grad_of(1.0, 0.0);
  const Tensor gg = grad_of(0.0, 1.0);
  const Tensor mix = grad_of(2.0, -3.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(mix.data[i] == Catch::Approx(2.0 * gf.data[i] - 3.0 * gg.data[i]).margin(1e-10));
  }
}

TEST_CASE("finite differences agree for a composed expression", "[tensor]") {
  Rng rng(77);
  const Tensor x = cf::detail::random_tensor({3, 4}, rng);
  const Tensor w = cf::detail::random_tensor({4, 2}, rng);
  const double err = grad_check(
      [&](Tape& t, const Tensor& in) {
        Tensor h = relu(matmul(in, t.watch(w)));
        return mean(mul(h, h));
      },
      x);
  CHECK(err < 1e-6);
}

TEST_CASE("gradcheck suite passes for every op", "[tensor]") {
  const auto results = run_gradcheck_suite();
  REQUIRE_FALSE(results.empty());
  for (const auto& r : results) {
    INFO(r.name << " rel err " << r.max_rel_err << " tol " << r.tolerance);
    CHECK(r.passed);
  }
  CHECK(gradcheck_all_passed(results));
}

TEST_CASE("rng streams are deterministic and decorrelated", "[tensor]") {
  Rng a(123);
  Rng b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.bits() == b.bits());
  Rng c(mix_seed(123, streams::dropout));
  Rng d(mix_seed(123, streams::history));
  CHECK(c.bits() != d.bits());
}

TEST_CASE("uniform stays in range and fills it", "[tensor]") {
  Rng rng(9);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("normal draws match standard moments", "[tensor]") {
  Rng rng(31337);
  const int n = 100000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s1 += v;
    s2 += v * v;
  }
  const double mean_v = s1 / n;
  CHECK(std::fabs(mean_v) < 0.02);
  CHECK(std::fabs(s2 / n - mean_v * mean_v - 1.0) < 0.05);
}

TEST_CASE("index and shuffle are unbiased enough", "[tensor]") {
  Rng rng(4242);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.index(5)];
  for (const int c : counts) CHECK(std::fabs(c - 10000.0) < 400.0);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> sorted = v;
  rng.shuffle(v);
  std::vector<int> resorted = v;
  std::sort(resorted.begin(), resorted.end());
  CHECK(resorted == sorted);
  CHECK_THROWS_AS(rng.index(0), ContractError);
}
