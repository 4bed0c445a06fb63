#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "cf/metrics.hpp"
#include "cf/optim.hpp"

using namespace cf;

namespace {

// Textbook Adam with decoupled decay, written against plain arrays so the
// production path is checked by something that shares none of its code.
struct ReferenceAdam {
  double lr, b1, b2, eps, wd;
  std::vector<double> m, v;
  int t = 0;

  explicit ReferenceAdam(std::size_t n, double lr_, double wd_)
      : lr(lr_), b1(0.9), b2(0.999), eps(1e-8), wd(wd_), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(b1, t));
      const double vhat = v[i] / (1 - std::pow(b2, t));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * theta[i];
    }
  }
};

ParamState make_param(std::vector<double> values) {
  ParamState p;
  p.name = "test.param";
  const std::size_t n = values.size();
  p.value = Tensor({n}, std::move(values));
  return p;
}

}  // namespace

TEST_CASE("updates track a reference implementation for 100 steps", "[optim]") {
  const std::size_t n = 7;
  std::vector<double> init(n);
  for (std::size_t i = 0; i < n; ++i) init[i] = 0.3 * static_cast<double>(i) - 1.0;

  for (const double wd : {0.0, 0.01}) {
    ParamState p = make_param(init);
    OptimHyper hyper;
    hyper.lr = 1e-3;
    hyper.weight_decay = wd;
    AdamW opt(hyper);
    ReferenceAdam ref(n, 1e-3, wd);
    std::vector<double> theta = init;
    for (int step = 1; step <= 100; ++step) {
      std::vector<double> g(n);
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = std::sin(0.1 * step + static_cast<double>(i)) + 0.05 * static_cast<double>(i);
      }
      p.grad = Tensor({n}, g);
      opt.step({&p});
      ref.step(theta, g);
      for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(std::fabs(p.value.data[i] - theta[i]) < 1e-12);
      }
    }
    CHECK(opt.step_count() == 100);
  }
}

TEST_CASE("first step matches the closed form", "[optim]") {
  ParamState p = make_param({1.0});
  p.grad = Tensor({1}, {0.5});
  OptimHyper hyper;
  hyper.lr = 1e-4;
  AdamW opt(hyper);
  opt.step({&p});
  // After bias correction the first step is lr * g / (|g| + eps).
  const double expected = 1.0 - 1e-4 * (0.5 / (0.5 + 1e-8));
  CHECK(p.value.data[0] == Catch::Approx(expected).margin(1e-16));
}

TEST_CASE("decay is decoupled from the adaptive term", "[optim]") {
  // With zero gradients the moments stay zero and the update is pure decay.
  ParamState p = make_param({2.0, -4.0});
  OptimHyper hyper;
  hyper.lr = 0.1;
  hyper.weight_decay = 0.5;
  AdamW opt(hyper);
  double a = 2.0, b = -4.0;
  for (int i = 0; i < 10; ++i) {
    p.grad = Tensor::zeros({2});
    opt.step({&p});
    a -= 0.1 * 0.5 * a;
    b -= 0.1 * 0.5 * b;
  }
  CHECK(p.value.data[0] == Catch::Approx(a).epsilon(1e-15));
  CHECK(p.value.data[1] == Catch::Approx(b).epsilon(1e-15));

  // And with gradients present, decoupled decay differs from folding
  // wd * theta into the gradient the way classic L2 regularization would.
  ParamState decoupled = make_param({1.0});
  ParamState folded = make_param({1.0});
  AdamW opt_decoupled(hyper);
  OptimHyper plain = hyper;
  plain.weight_decay = 0.0;
  AdamW opt_folded(plain);
  for (int i = 0; i < 5; ++i) {
    decoupled.grad = Tensor({1}, {0.3});
    opt_decoupled.step({&decoupled});
    folded.grad = Tensor({1}, {0.3 + 0.5 * folded.value.data[0]});
    opt_folded.step({&folded});
  }
  CHECK(std::fabs(decoupled.value.data[0] - folded.value.data[0]) > 1e-6);
}

TEST_CASE("instances keep independent state", "[optim]") {
  ParamState p1 = make_param({1.0});
  ParamState p2 = make_param({1.0});
  OptimHyper hyper;
  AdamW a(hyper);
  AdamW b(hyper);
  p1.grad = Tensor({1}, {1.0});
  a.step({&p1});
  a.step({&p1});
  CHECK(a.step_count() == 2);
  CHECK(b.step_count() == 0);
  p2.grad = Tensor({1}, {1.0});
  b.step({&p2});
  // b's first step applies fresh bias correction, matching a's first step.
  ParamState fresh = make_param({1.0});
  AdamW c(hyper);
  fresh.grad = Tensor({1}, {1.0});
  c.step({&fresh});
  CHECK(p2.value.data[0] == fresh.value.data[0]);
}

TEST_CASE("contract and config violations throw", "[optim]") {
  OptimHyper bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(AdamW(bad), ConfigError);
  bad = OptimHyper{};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(AdamW(bad), ConfigError);
  bad = OptimHyper{};
  bad.weight_decay = -0.1;
  CHECK_THROWS_AS(AdamW(bad), ConfigError);

  ParamState p = make_param({1.0});
  AdamW opt{OptimHyper{}};
  CHECK_THROWS_AS(opt.step({&p}), ContractError);  // no grad populated
}

TEST_CASE("fixed formatting and csv round trip", "[optim][metrics]") {
  CHECK(format_fixed(1.0) == "1.000000");
  CHECK(format_fixed(0.1234567) == "0.123457");
  CHECK(format_fixed(-2.5) == "-2.500000");

  std::vector<MetricsRecord> records;
  for (std::size_t e = 0; e < 3; ++e) {
    MetricsRecord r;
    r.epoch = e;
    r.train_loss = 1.5 - 0.25 * static_cast<double>(e);
    r.train_top1 = 0.5 + 0.1 * static_cast<double>(e);
    r.val_loss = 1.6 - 0.2 * static_cast<double>(e);
    r.val_top1 = 0.4 + 0.1 * static_cast<double>(e);
    r.val_top5 = 0.9;
    r.disc_loss = 1.9;
    r.cf_penalty = 0.05;
    records.push_back(r);
  }
  const std::string csv = metrics_to_csv(records);
  CHECK(csv.find(kMetricsHeader) == 0);
  const std::string path = "test_metrics_tmp.csv";
  write_text_atomic(path, csv);
  {
    std::ifstream tmp(path + ".tmp");
    CHECK_FALSE(tmp.good());  // temp file renamed away
  }
  const auto parsed = parse_metrics_csv(path);
  REQUIRE(parsed.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(parsed[i].epoch == records[i].epoch);
    CHECK(parsed[i].val_loss == Catch::Approx(records[i].val_loss).margin(1e-6));
    CHECK(parsed[i].cf_penalty == Catch::Approx(records[i].cf_penalty).margin(1e-6));
  }
  CHECK(metrics_to_csv(parsed) == csv);  // byte-stable through a round trip
  {
    std::ofstream out(path);
    out << "epoch,other\n";
  }
  CHECK_THROWS_AS(parse_metrics_csv(path), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("avg_last_k windows from the tail", "[optim][metrics]") {
  const std::vector<double> series{1.0, 2.0, 3.0, 4.0};
  CHECK(avg_last_k(series, 2) == 3.5);
  CHECK(avg_last_k(series, 10) == 2.5);  // capped at the series length
  CHECK(avg_last_k(series, 1) == 4.0);
  CHECK_THROWS_AS(avg_last_k(series, 0), ContractError);
  CHECK_THROWS_AS(avg_last_k(std::vector<double>{}, 3), ContractError);

  std::vector<MetricsRecord> records(3);
  records[0].val_loss = 3.0;
  records[1].val_loss = 2.0;
  records[2].val_loss = 1.0;
  CHECK(avg_last_k(records, 2, "val_loss") == 1.5);
  CHECK_THROWS_AS(avg_last_k(records, 2, "nope"), ConfigError);
}
