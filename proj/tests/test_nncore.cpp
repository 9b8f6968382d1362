#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "sorbkit/nncore.hpp"

using namespace sorbkit;
using nn::Mat;

namespace {

// Central finite differences of a scalar loss over the flattened parameters.
Eigen::VectorXd numeric_grad(const std::vector<nn::Param*>& params,
                             const std::function<double()>& loss, double h = 1e-5) {
  Eigen::VectorXd base = nn::flatten_values(params);
  Eigen::VectorXd g(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Eigen::VectorXd x = base;
    x(i) += h;
    nn::unflatten_values(params, x);
    double fp = loss();
    x(i) = base(i) - h;
    nn::unflatten_values(params, x);
    double fm = loss();
    g(i) = (fp - fm) / (2 * h);
  }
  nn::unflatten_values(params, base);
  return g;
}

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

}  // namespace

TEST_CASE("swish derivative at zero is one half", "[nncore]") {
  nn::Param x(Mat::Zero(1, 1), "x");
  nn::Graph g;
  auto loss = g.sum(g.swish(g.leaf(x)));
  g.backward(loss);
  CHECK(x.grad(0, 0) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("safe exponential stays finite at extreme inputs", "[nncore]") {
  nn::Graph g;
  Mat big(1, 2);
  big << 1000.0, -1000.0;
  auto out = g.exp_safe(g.constant(big));
  CHECK(std::isfinite(out.value()(0, 0)));
  CHECK(out.value()(0, 0) == Catch::Approx(std::exp(30.0)));
  CHECK(out.value()(0, 1) == Catch::Approx(std::exp(-30.0)));
  auto lg = g.log_safe(g.constant(Mat::Zero(1, 1)));
  CHECK(lg.value()(0, 0) == Catch::Approx(std::log(1e-12)));
}

TEST_CASE("elementwise op gradients match finite differences", "[nncore]") {
  auto rng = make_rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat init(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) init(i, j) = gauss(rng);
  nn::Param p(init, "p");
  std::vector<nn::Param*> params{&p};

  using Op = std::function<nn::Var(nn::Graph&, nn::Var)>;
  std::vector<Op> ops = {
      [](nn::Graph& g, nn::Var v) { return g.swish(v); },
      [](nn::Graph& g, nn::Var v) { return g.gelu(v); },
      [](nn::Graph& g, nn::Var v) { return g.relu(v); },
      [](nn::Graph& g, nn::Var v) { return g.softplus(v); },
      [](nn::Graph& g, nn::Var v) { return g.sigmoid(v); },
      [](nn::Graph& g, nn::Var v) { return g.square(v); },
      [](nn::Graph& g, nn::Var v) { return g.exp_safe(v); },
      [](nn::Graph& g, nn::Var v) { return g.log_safe(g.softplus(v)); },
      [](nn::Graph& g, nn::Var v) { return g.hadamard(v, v); },
      [](nn::Graph& g, nn::Var v) { return g.cdiv(g.square(v), g.add_scalar(g.square(v), 1.0)); },
  };
  for (std::size_t k = 0; k < ops.size(); ++k) {
    auto loss_fn = [&]() {
      nn::Graph g;
      return g.mean(ops[k](g, g.leaf(p))).value()(0, 0);
    };
    p.zero_grad();
    nn::Graph g;
    auto loss = g.mean(ops[k](g, g.leaf(p)));
    g.backward(loss);
    Eigen::VectorXd analytic = nn::flatten_grads(params);
    Eigen::VectorXd numeric = numeric_grad(params, loss_fn);
    INFO("op " << k);
    CHECK(rel_err(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("three-layer network gradients match finite differences", "[nncore]") {
  auto rng = make_rng(12);
  nn::Dense l1(6, 8, rng, "l1");
  nn::Dense l2(8, 4, rng, "l2");
  nn::Dense l3(4, 1, rng, "l3");
  std::vector<nn::Param*> params;
  for (auto* d : {&l1, &l2, &l3})
    for (auto* p : d->params()) params.push_back(p);

  Mat x = Mat::Random(7, 6);
  Mat y = Mat::Random(7, 1);
  auto loss_fn = [&]() {
    nn::Graph g;
    auto h = g.swish(l1.forward(g, g.constant(x)));
    h = g.swish(l2.forward(g, h));
    auto out = l3.forward(g, h);
    return g.huber(out, y, 1.0).value()(0, 0);
  };

  for (auto* p : params) p->zero_grad();
  {
    nn::Graph g;
    auto h = g.swish(l1.forward(g, g.constant(x)));
    h = g.swish(l2.forward(g, h));
    auto out = l3.forward(g, h);
    g.backward(g.huber(out, y, 1.0));
  }
  Eigen::VectorXd analytic = nn::flatten_grads(params);
  Eigen::VectorXd numeric = numeric_grad(params, loss_fn);
  CHECK(analytic.size() >= 64);
  CHECK(rel_err(analytic, numeric) < 1e-4);
}

TEST_CASE("residual block with norm and activation passes gradient check", "[nncore]") {
  for (nn::Norm norm : {nn::Norm::Layer, nn::Norm::Batch, nn::Norm::None}) {
    auto rng = make_rng(31);
    nn::ResidualBlock block(4, 6, norm, nn::Activation::Swish, 0.0, rng, "blk");
    nn::Dense head(6, 1, rng, "head");
    std::vector<nn::Param*> params = block.params();
    for (auto* p : head.params()) params.push_back(p);

    Mat x = Mat::Random(9, 4);
    auto fwd_rng = make_rng(0);
    auto loss_fn = [&]() {
      nn::Graph g;
      auto h = block.forward(g, g.constant(x), true, fwd_rng);
      return g.mean(g.square(head.forward(g, h))).value()(0, 0);
    };
    for (auto* p : params) p->zero_grad();
    // batch-norm updates running stats; pin them by priming once
    loss_fn();
    {
      nn::Graph g;
      auto h = block.forward(g, g.constant(x), true, fwd_rng);
      g.backward(g.mean(g.square(head.forward(g, h))));
    }
    Eigen::VectorXd analytic = nn::flatten_grads(params);
    Eigen::VectorXd numeric = numeric_grad(params, loss_fn);
    INFO("norm " << static_cast<int>(norm));
    CHECK(rel_err(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("layer norm output is standardized per row", "[nncore]") {
  auto rng = make_rng(2);
  nn::Param gamma(Mat::Ones(1, 6), "g");
  nn::Param beta(Mat::Zero(1, 6), "b");
  nn::Graph g;
  Mat x = 3.0 * Mat::Random(5, 6);
  auto out = g.layer_norm(g.constant(x), g.leaf(gamma), g.leaf(beta));
  for (int i = 0; i < 5; ++i) {
    double mean = out.value().row(i).mean();
    double var = (out.value().row(i).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == Catch::Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("batch norm standardizes each feature over the batch", "[nncore]") {
  nn::Param gamma(Mat::Ones(1, 3), "g");
  nn::Param beta(Mat::Zero(1, 3), "b");
  Mat rm, rv;
  nn::Graph g;
  Mat x = Mat::Random(64, 3) * 5.0;
  auto out = g.batch_norm(g.constant(x), g.leaf(gamma), g.leaf(beta), rm, rv, true);
  for (int j = 0; j < 3; ++j) {
    double mean = out.value().col(j).mean();
    double var = (out.value().col(j).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(var == Catch::Approx(1.0).margin(1e-4));
  }
}

TEST_CASE("dropout is identity in eval mode and unbiased in train mode", "[nncore]") {
  Mat x = Mat::Ones(4, 4);
  auto rng = make_rng(10);
  {
    nn::Graph g;
    auto out = g.dropout(g.constant(x), 0.4, rng, false);
    CHECK((out.value() - x).cwiseAbs().maxCoeff() == 0.0);
  }
  double acc = 0.0;
  const int passes = 10000;
  for (int k = 0; k < passes; ++k) {
    nn::Graph g;
    acc += g.dropout(g.constant(x), 0.4, rng, true).value().mean();
  }
  CHECK(acc / passes == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("nan in forward raises a recoverable fault", "[nncore]") {
  nn::Graph g;
  Mat bad(1, 1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(g.constant(bad), nn::TrainingFault);
}

TEST_CASE("optimizer first step approximates the learning rate", "[nncore]") {
  nn::Param theta(Mat::Zero(1, 1), "t");
  nn::OptimConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 0.0;
  nn::AdamW opt(cfg);
  theta.grad(0, 0) = 1.0;
  opt.step({&theta});
  // bias-corrected moments make the first step ~ -lr * g/|g|
  CHECK(theta.value(0, 0) == Catch::Approx(-0.1).margin(1e-6));
}

TEST_CASE("zero gradients and zero decay leave parameters unchanged", "[nncore]") {
  nn::Param theta(Mat::Constant(2, 2, 3.0), "t");
  nn::OptimConfig cfg;
  cfg.weight_decay = 0.0;
  nn::AdamW opt(cfg);
  opt.step({&theta});
  CHECK((theta.value.array() == 3.0).all());
}

TEST_CASE("gradient clipping equals pre-scaled gradients", "[nncore]") {
  nn::OptimConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 1.0;
  Mat g0 = Mat::Constant(1, 1, 10.0);

  nn::Param a(Mat::Zero(1, 1), "a");
  nn::AdamW opt_a(cfg);
  a.grad = g0;
  opt_a.step({&a});

  nn::Param b(Mat::Zero(1, 1), "b");
  nn::OptimConfig cfg2 = cfg;
  cfg2.clip_norm = 0.0;
  nn::AdamW opt_b(cfg2);
  b.grad = g0 / 10.0;
  opt_b.step({&b});

  CHECK(a.value(0, 0) == Catch::Approx(b.value(0, 0)).epsilon(1e-12));
}

TEST_CASE("optimizer is deterministic", "[nncore]") {
  auto run = [] {
    nn::Param p(Mat::Constant(2, 1, 1.0), "p");
    nn::AdamW opt({.lr = 1e-2, .weight_decay = 1e-5});
    for (int i = 0; i < 5; ++i) {
      p.grad = Mat::Constant(2, 1, 0.3 * (i + 1));
      opt.step({&p});
    }
    return p.value(0, 0);
  };
  CHECK(run() == run());
}

TEST_CASE("schedule: warmup, restarts, and midpoints", "[nncore]") {
  nn::ScheduleConfig cfg{1e-3, 1e-5, 100, 50};
  CHECK(nn::lr_schedule(0, cfg) == Catch::Approx(1e-4));  // 0.1 * lr_max
  CHECK(nn::lr_schedule(50, cfg) == Catch::Approx(1e-3));  // first period start
  CHECK(nn::lr_schedule(100, cfg) ==
        Catch::Approx(1e-5 + 0.5 * (1e-3 - 1e-5)));  // mid first period
  CHECK(nn::lr_schedule(150, cfg) == Catch::Approx(1e-3));  // restart boundary
  CHECK(nn::lr_schedule(250, cfg) ==
        Catch::Approx(1e-5 + 0.5 * (1e-3 - 1e-5)));  // mid second (doubled) period
  CHECK_THROWS_AS(nn::lr_schedule(-1, cfg), invalid_input);
}

TEST_CASE("xavier initialization respects the gain-scaled limit", "[nncore]") {
  auto rng = make_rng(6);
  Mat w = nn::xavier_uniform(64, 32, rng, 0.5);
  double limit = 0.5 * std::sqrt(6.0 / (64.0 + 32.0));
  CHECK(w.cwiseAbs().maxCoeff() <= limit);
  CHECK(w.cwiseAbs().maxCoeff() > 0.5 * limit);  // actually fills the range
}
