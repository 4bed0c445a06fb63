#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cf/ops.hpp"
#include "cf/rng.hpp"
#include "cf/tensor.hpp"

namespace cf {

// f builds a scalar loss from the tracked input (and may watch additional
// constants on the tape it is given). Returns the worst relative error between
// the tape gradient and central finite differences over every coordinate of x.
inline double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                         double eps = 1e-5) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
  Tape tape;
  Tensor tx = tape.watch(x);
  Tensor loss = f(tape, tx);
  if (!loss.is_scalar()) throw ContractError("grad_check: f must return a scalar");
  tape.backward(loss);
  const Tensor analytic = tape.grad(tx);

  const auto eval = [&](const Tensor& probe) {
    Tape t;
    Tensor tracked = t.watch(probe);
    return f(t, tracked).item();
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor hi = x;
    Tensor lo = x;
    hi.data[i] += eps;
    lo.data[i] -= eps;
    const double numeric = (eval(hi) - eval(lo)) / (2.0 * eps);
    const double a = analytic.data[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

struct OpCheck {
  std::string name;
  double max_rel_err;
  double tolerance;
  bool passed;
};

namespace detail {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Keeps every coordinate away from the relu kink so finite differences stay
// on one side of it.
inline Tensor random_tensor_off_kink(Shape s, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(s));
  for (double& v : t.data) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

}  // namespace detail

// Finite-difference checks for every differentiable op, each against the
// tolerance it is expected to hold. Deterministic: seeds are fixed here.
inline std::vector<OpCheck> run_gradcheck_suite() {
  std::vector<OpCheck> results;
  const auto check = [&](const std::string& name, double tol,
                         const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                         double eps = 1e-5) {
    const double err = grad_check(f, x, eps);
    results.push_back(OpCheck{name, err, tol, err < tol});
  };

  Rng rng(0x5eedu);

  {
    const Tensor other = detail::random_tensor({3, 4}, rng);
    check("add", 1e-6,
          [&](Tape& t, const Tensor& x) { return sum(add(x, t.watch(other))); },
          detail::random_tensor({3, 4}, rng));
  }

  check("sub", 1e-6,
        [&](Tape& t, const Tensor& x) { return sum(sub(x, Tensor::full({3, 4}, 0.25))); },
        detail::random_tensor({3, 4}, rng));

  {
    const Tensor other = detail::random_tensor({3, 4}, rng);
    check("mul", 1e-6, [&](Tape& t, const Tensor& x) { return sum(mul(x, other)); },
          detail::random_tensor({3, 4}, rng));
  }

  check("scalar_mul", 1e-6,
        [](Tape& t, const Tensor& x) { return sum(scalar_mul(x, -1.7)); },
        detail::random_tensor({5}, rng));

  check("scalar_add", 1e-6,
        [](Tape& t, const Tensor& x) { return sum(scalar_add(x, 3.0)); },
        detail::random_tensor({5}, rng));

  check("mean", 1e-6, [](Tape& t, const Tensor& x) { return mean(x); },
        detail::random_tensor({4, 3}, rng));

  check("sum", 1e-6, [](Tape& t, const Tensor& x) { return sum(x); },
        detail::random_tensor({7}, rng));

  check("reshape", 1e-6,
        [](Tape& t, const Tensor& x) {
          Tensor r = reshape(x, {2, 6});
          return sum(mul(r, r));
        },
        detail::random_tensor({3, 4}, rng));

  check("concat", 1e-6,
        [](Tape& t, const Tensor& x) {
          Tensor fixed = t.watch(Tensor::full({2, 4}, 0.5));
          Tensor joined = concat({x, fixed});
          return sum(mul(joined, joined));
        },
        detail::random_tensor({3, 4}, rng));

  check("gather_rows", 1e-6,
        [](Tape& t, const Tensor& x) {
          Tensor g = gather_rows(x, {0, 2, 2, 3});
          return sum(mul(g, g));
        },
        detail::random_tensor({4, 3}, rng));

  {
    const Tensor b = detail::random_tensor({4, 2}, rng);
    check("matmul_lhs", 1e-6,
          [&](Tape& t, const Tensor& x) {
            Tensor y = matmul(x, b);
            return sum(mul(y, y));
          },
          detail::random_tensor({3, 4}, rng));
    const Tensor a = detail::random_tensor({3, 4}, rng);
    check("matmul_rhs", 1e-6,
          [&](Tape& t, const Tensor& x) {
            Tensor y = matmul(a, x);
            return sum(mul(y, y));
          },
          detail::random_tensor({4, 2}, rng));
  }

  {
    const Tensor x2 = detail::random_tensor({3, 4}, rng);
    check("bias_add_2d", 1e-6,
          [&](Tape& t, const Tensor& b) {
            Tensor y = bias_add(t.watch(x2), b);
            return sum(mul(y, y));
          },
          detail::random_tensor({4}, rng));
    const Tensor x4 = detail::random_tensor({2, 3, 4, 4}, rng);
    check("bias_add_4d", 1e-6,
          [&](Tape& t, const Tensor& b) {
            Tensor y = bias_add(t.watch(x4), b);
            return sum(mul(y, y));
          },
          detail::random_tensor({3}, rng));
  }

  check("relu", 1e-5,
        [](Tape& t, const Tensor& x) { return sum(relu(x)); },
        detail::random_tensor_off_kink({4, 5}, rng));

  {
    const std::vector<int> labels{1, 0, 3, 2, 1};
    check("softmax_cross_entropy", 1e-6,
          [&](Tape& t, const Tensor& x) { return softmax_cross_entropy(x, labels); },
          detail::random_tensor({5, 4}, rng, -2.0, 2.0));
    check("softmax_cross_entropy_smoothed", 1e-6,
          [&](Tape& t, const Tensor& x) { return softmax_cross_entropy(x, labels, 0.1); },
          detail::random_tensor({5, 4}, rng, -2.0, 2.0));
  }

  {
    const Tensor kernel = detail::random_tensor({4, 3, 3, 3}, rng);
    check("conv2d_input", 1e-5,
          [&](Tape& t, const Tensor& x) {
            Tensor y = conv2d(x, kernel, 1, 1);
            return sum(mul(y, y));
          },
          detail::random_tensor({2, 3, 6, 6}, rng));
    const Tensor image = detail::random_tensor({2, 3, 6, 6}, rng);
    check("conv2d_kernel", 1e-5,
          [&](Tape& t, const Tensor& x) {
            Tensor y = conv2d(image, x, 2, 1);
            return sum(mul(y, y));
          },
          detail::random_tensor({4, 3, 3, 3}, rng));
  }

  return results;
}

inline bool gradcheck_all_passed(const std::vector<OpCheck>& results) {
  return std::all_of(results.begin(), results.end(), [](const OpCheck& c) { return c.passed; });
}

}  // namespace cf
