#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sorbkit/pinn.hpp"

using namespace sorbkit;
using pinn::Mat;
using pinn::Vec;

namespace {

// Small synthetic regression batch: y = saturating curve of x0 plus mild noise.
pinn::Batch toy_batch(int n, std::uint64_t seed, bool with_pairs = false) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  pinn::Batch b;
  b.x.resize(n, 3);
  b.y.resize(n);
  b.aux.pressure.resize(n);
  b.aux.temperature.resize(n);
  b.aux.pore_diameter_nm = Vec::Constant(n, 1e3);
  for (int i = 0; i < n; ++i) {
    double x0 = unif(rng), x1 = unif(rng), x2 = unif(rng);
    b.x.row(i) << x0, x1, x2;
    b.y(i) = 1.0 / (1.0 + std::exp(-2.0 * x0)) + 0.05 * x1;
    b.aux.pressure(i) = 1.0 + i * 0.1;
    b.aux.temperature(i) = (i % 2) ? 298.15 : 318.15;
  }
  if (with_pairs)
    for (int i = 0; i + 1 < n; i += 2) b.aux.pairs.emplace_back(i, i + 1);
  return b;
}

pinn::PinnConfig tiny_config() {
  pinn::PinnConfig cfg;
  cfg.widths = {8, 8};
  cfg.dropout_p = 0.0;
  cfg.max_epochs = 40;
  cfg.warmup_epochs = 5;
  cfg.patience = 40;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("network construction is deterministic in the seed", "[pinn]") {
  auto cfg = tiny_config();
  pinn::Network a(cfg, 3), b(cfg, 3);
  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff() == 0.0);
  cfg.seed = 4;
  pinn::Network c(cfg, 3);
  auto pc = c.params();
  CHECK((pa[0]->value - pc[0]->value).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("width presets and custom widths shape the trunk", "[pinn]") {
  CHECK(pinn::PinnConfig::baseline_widths() == std::vector<int>{128, 256, 128, 64});
  CHECK(pinn::PinnConfig::moderate_widths() == std::vector<int>{256, 512, 256, 128});
  CHECK(pinn::PinnConfig::high_widths() == std::vector<int>{512, 1024, 512, 256, 128});

  pinn::PinnConfig cfg = tiny_config();
  cfg.widths = {4};
  pinn::Network net(cfg, 3);
  CHECK(net.parameter_count() > 0);
  Mat x = Mat::Random(5, 3);
  CHECK(net.predict(x).size() == 5);
}

TEST_CASE("config validation rejects bad settings", "[pinn]") {
  auto bad = tiny_config();
  bad.widths = {};
  CHECK_THROWS_AS(pinn::Network(bad, 3), invalid_input);
  bad = tiny_config();
  bad.dropout_p = 1.0;
  CHECK_THROWS_AS(pinn::Network(bad, 3), invalid_input);
  bad = tiny_config();
  bad.lr_min = bad.lr_max * 10;
  CHECK_THROWS_AS(pinn::Network(bad, 3), invalid_input);
  CHECK_THROWS_AS(pinn::Network(tiny_config(), 0), invalid_input);
}

TEST_CASE("physics head outputs stay inside their bounds", "[pinn]") {
  pinn::PhysicsBounds bounds;
  pinn::Network net(tiny_config(), 3, bounds);
  Mat x = 10.0 * Mat::Random(40, 3);
  Mat pp = net.physics_parameters(x);
  for (int i = 0; i < 40; ++i) {
    CHECK(pp(i, 0) >= bounds.q_max_lo);
    CHECK(pp(i, 0) <= bounds.q_max_hi);
    CHECK(pp(i, 1) >= bounds.k_lo);
    CHECK(pp(i, 1) <= bounds.k_hi);
    CHECK(pp(i, 2) >= bounds.dh_lo);
    CHECK(pp(i, 2) <= bounds.dh_hi);
    CHECK(pp(i, 3) >= bounds.n_lo);
    CHECK(pp(i, 3) <= bounds.n_hi);
  }
}

TEST_CASE("physics penalties vanish where the constraints hold", "[pinn]") {
  pinn::Network net(tiny_config(), 3);
  auto b = toy_batch(12, 5);
  auto lb = pinn::physics_loss(net, b);
  // wide pores: no sieving; positive predictions expected from a fresh net
  CHECK(lb.physics_sieving == 0.0);
  CHECK(lb.physics_vant_hoff == 0.0);      // no pairs supplied
  CHECK(lb.physics_monotonicity == 0.0);   // no pressure-up features supplied

  // narrow pores switch the sieving term on whenever predictions are nonzero
  auto b2 = b;
  b2.aux.pore_diameter_nm = Vec::Constant(12, 0.1);
  auto lb2 = pinn::physics_loss(net, b2);
  Vec q = net.predict(b.x);
  if (q.cwiseAbs().maxCoeff() > 1e-8) CHECK(lb2.physics_sieving > 0.0);
}

TEST_CASE("vant hoff penalty on consistent pairs is tiny at equal temperature slots",
          "[pinn]") {
  // pairs with identical temperatures have 1/T1 - 1/T2 = 0, so the residual
  // reduces to ln K differences; identical rows give exactly zero.
  pinn::Network net(tiny_config(), 3);
  pinn::Batch b = toy_batch(6, 9);
  for (int i = 0; i < 6; ++i) b.aux.temperature(i) = 298.15;
  b.x.row(1) = b.x.row(0);
  b.x.row(3) = b.x.row(2);
  b.aux.pairs = {{0, 1}, {2, 3}};
  auto lb = pinn::physics_loss(net, b);
  CHECK(lb.physics_vant_hoff < 1e-20);
}

TEST_CASE("monotonicity penalty reacts to a decreasing prediction pair", "[pinn]") {
  pinn::Network net(tiny_config(), 3);
  auto b = toy_batch(10, 6);
  b.x_pressure_up = b.x;  // identical inputs: delta is exactly zero
  auto lb = pinn::physics_loss(net, b);
  CHECK(lb.physics_monotonicity == 0.0);
}

TEST_CASE("lambda ramps over warmup then adapts to the violation ratio", "[pinn]") {
  auto cfg = tiny_config();
  cfg.physics_weight = 0.1;
  cfg.warmup_epochs = 50;
  CHECK(pinn::Trainer::lambda_effective(cfg, 0, 1.0, 1.0) == 0.0);
  CHECK(pinn::Trainer::lambda_effective(cfg, 25, 1.0, 1.0) == Catch::Approx(0.05));
  // past warmup: lambda * (1 + clamp(phys/data, 0, 2))
  CHECK(pinn::Trainer::lambda_effective(cfg, 60, 1.0, 1.0) == Catch::Approx(0.2));
  CHECK(pinn::Trainer::lambda_effective(cfg, 60, 1.0, 100.0) == Catch::Approx(0.3));
  CHECK(pinn::Trainer::lambda_effective(cfg, 60, 1.0, 0.0) == Catch::Approx(0.1));
}

TEST_CASE("training reduces validation loss and logs a consistent breakdown", "[pinn]") {
  auto cfg = tiny_config();
  cfg.physics_weight = 0.05;
  pinn::Network net(cfg, 3);
  auto tr = toy_batch(64, 11, true);
  auto va = toy_batch(24, 12);
  double before = pinn::Trainer::validation_data_loss(net, va);
  auto res = pinn::Trainer::train(net, tr, va);
  REQUIRE(!res.history.empty());
  CHECK(res.best_val_loss < before);
  for (const auto& e : res.history) {
    double recomposed = e.train.data_loss + e.train.lambda_effective * e.train.physics_sum();
    CHECK(std::abs(e.train.total - recomposed) < 1e-10);
    CHECK(e.lr > 0.0);
  }
}

TEST_CASE("training twice from the same seed is bit-identical", "[pinn]") {
  auto run = [] {
    auto cfg = tiny_config();
    cfg.max_epochs = 15;
    pinn::Network net(cfg, 3);
    auto tr = toy_batch(32, 21);
    auto va = toy_batch(16, 22);
    pinn::Trainer::train(net, tr, va);
    return net.predict(tr.x);
  };
  Vec a = run(), b = run();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("patience zero stops at the first non-improving epoch", "[pinn]") {
  auto cfg = tiny_config();
  cfg.patience = 0;
  cfg.max_epochs = 200;
  pinn::Network net(cfg, 3);
  auto tr = toy_batch(32, 31);
  auto va = toy_batch(16, 32);
  auto res = pinn::Trainer::train(net, tr, va);
  if (res.early_stopped) {
    CHECK(static_cast<int>(res.history.size()) < cfg.max_epochs);
    CHECK(res.history.back().epoch == res.best_epoch + 1);
  }
}

TEST_CASE("minibatch training runs and covers all rows", "[pinn]") {
  auto cfg = tiny_config();
  cfg.batch_size = 10;
  cfg.max_epochs = 10;
  pinn::Network net(cfg, 3);
  auto tr = toy_batch(33, 41, true);
  auto va = toy_batch(12, 42);
  auto res = pinn::Trainer::train(net, tr, va);
  CHECK(!res.history.empty());
  CHECK(res.nan_recoveries == 0);
}

TEST_CASE("uncertainty collapses without dropout and at z = 0", "[pinn]") {
  auto cfg = tiny_config();
  cfg.dropout_p = 0.0;
  pinn::Network net(cfg, 3);
  Mat x = Mat::Random(8, 3);
  auto up = pinn::predict_with_uncertainty(net, x, 20, 1.96, 7);
  // identical passes; only sumsq/n - mean^2 cancellation noise remains
  CHECK(up.sigma_epistemic.cwiseAbs().maxCoeff() < 1e-6);
  for (int i = 0; i < 8; ++i) CHECK(up.sigma_aleatoric(i) > 0.0);

  auto cfg2 = tiny_config();
  cfg2.dropout_p = 0.2;
  pinn::Network net2(cfg2, 3);
  auto u2 = pinn::predict_with_uncertainty(net2, x, 50, 0.0, 7);
  CHECK((u2.lower - u2.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((u2.upper - u2.mean).cwiseAbs().maxCoeff() < 1e-12);
  auto u3 = pinn::predict_with_uncertainty(net2, x, 50, 1.96, 7);
  for (int i = 0; i < 8; ++i) {
    CHECK(u3.sigma_epistemic(i) > 0.0);
    CHECK(u3.lower(i) < u3.mean(i));
    CHECK(u3.upper(i) > u3.mean(i));
  }
  CHECK_THROWS_AS(pinn::predict_with_uncertainty(net, x, 1), invalid_input);
}

TEST_CASE("full model gradients match finite differences on a tiny instance", "[pinn]") {
  auto cfg = tiny_config();
  cfg.widths = {3};
  cfg.norm = nn::Norm::None;
  pinn::Network net(cfg, 2);
  auto params = net.params();

  pinn::Batch b;
  b.x = Mat::Random(5, 2);
  b.y = Vec::Random(5);
  b.x_pressure_up = b.x + Mat::Constant(5, 2, 0.01);
  b.aux.pressure = Vec::Constant(5, 1.0);
  b.aux.temperature.resize(5);
  b.aux.temperature << 288, 298, 308, 318, 328;
  b.aux.pore_diameter_nm = Vec::Constant(5, 0.2);  // sieving active
  b.aux.pairs = {{0, 2}, {1, 3}};

  double lam = 0.3;
  auto loss_value = [&]() {
    nn::Graph g;
    auto rng = make_rng(0);
    auto hv = net.forward(g, b.x, false, false, rng);
    auto data = pinn::detail::data_loss(g, hv, b.y, 1.0);
    auto terms = pinn::detail::physics_terms(g, net, hv, b, false, rng);
    auto phys = g.add(g.add(g.add(terms.positivity, terms.saturation), terms.monotonicity),
                      g.add(terms.vant_hoff, terms.sieving));
    return g.add(data, g.scale(phys, lam)).value()(0, 0);
  };

  for (auto* p : params) p->zero_grad();
  {
    nn::Graph g;
    auto rng = make_rng(0);
    auto hv = net.forward(g, b.x, false, false, rng);
    auto data = pinn::detail::data_loss(g, hv, b.y, 1.0);
    auto terms = pinn::detail::physics_terms(g, net, hv, b, false, rng);
    auto phys = g.add(g.add(g.add(terms.positivity, terms.saturation), terms.monotonicity),
                      g.add(terms.vant_hoff, terms.sieving));
    g.backward(g.add(data, g.scale(phys, lam)));
  }
  Eigen::VectorXd analytic = nn::flatten_grads(params);

  Eigen::VectorXd base = nn::flatten_values(params);
  Eigen::VectorXd numeric(base.size());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Eigen::VectorXd t = base;
    t(i) += h;
    nn::unflatten_values(params, t);
    double fp = loss_value();
    t(i) = base(i) - h;
    nn::unflatten_values(params, t);
    double fm = loss_value();
    numeric(i) = (fp - fm) / (2 * h);
  }
  nn::unflatten_values(params, base);
  double rel = (analytic - numeric).norm() /
               std::max(1e-12, std::max(analytic.norm(), numeric.norm()));
  CHECK(rel < 1e-4);
}
