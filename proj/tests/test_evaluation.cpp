#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sorbkit/evaluation.hpp"
#include "sorbkit/isotherms.hpp"

using namespace sorbkit;

TEST_CASE("metrics match a six-point hand calculation", "[evaluation]") {
  std::vector<double> yt = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<double> yp = {1.1, 1.9, 3.2, 3.8, 5.3, 5.9};
  auto m = eval::metrics(yt, yp);
  // sse = 0.01+0.01+0.04+0.04+0.09+0.01 = 0.20, sst = 17.5
  CHECK(m.r2 == Catch::Approx(1.0 - 0.20 / 17.5).epsilon(1e-12));
  CHECK(m.rmse == Catch::Approx(std::sqrt(0.20 / 6.0)).epsilon(1e-12));
  CHECK(m.mae == Catch::Approx(0.1666666666666667).epsilon(1e-10));
  double ape = 0.1 / 1 + 0.1 / 2 + 0.2 / 3 + 0.2 / 4 + 0.3 / 5 + 0.1 / 6;
  CHECK(m.mape == Catch::Approx(100.0 * ape / 6.0).epsilon(1e-10));
  CHECK(m.mape_skipped == 0);
  CHECK(m.spearman == Catch::Approx(1.0));  // strictly increasing predictions
  CHECK(m.pearson > 0.99);
}

TEST_CASE("metrics edge cases", "[evaluation]") {
  std::vector<double> yt = {1.0, 2.0, 3.0, 4.0};
  auto perfect = eval::metrics(yt, yt);
  CHECK(perfect.r2 == Catch::Approx(1.0));
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mae == 0.0);

  std::vector<double> mean_pred(4, 2.5);
  auto at_mean = eval::metrics(yt, mean_pred);
  CHECK(at_mean.r2 == Catch::Approx(0.0).margin(1e-12));

  std::vector<double> constant(4, 3.0);
  auto undef = eval::metrics(constant, yt);
  CHECK_FALSE(undef.r2_defined);
  CHECK(std::isnan(undef.r2));

  std::vector<double> with_zero = {0.0, 1.0, 2.0, 3.0};
  auto mz = eval::metrics(with_zero, yt);
  CHECK(mz.mape_skipped == 1);

  CHECK_THROWS_AS(eval::metrics({1.0}, {1.0, 2.0}), invalid_input);
  CHECK_THROWS_AS(eval::metrics({}, {}), invalid_input);
}

TEST_CASE("jarque-bera holds its level under the null and rejects heavy tails",
          "[evaluation]") {
  int accepted = 0;
  for (int s = 0; s < 100; ++s) {
    auto rng = make_rng(1000 + s);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(2000);
    for (auto& v : x) v = gauss(rng);
    auto [stat, p] = eval::jarque_bera(x);
    if (p > 0.01) ++accepted;
  }
  CHECK(accepted >= 95);

  auto rng = make_rng(7);
  std::student_t_distribution<double> t2(2.0);
  std::vector<double> heavy(500);
  for (auto& v : heavy) v = t2(rng);
  auto [stat, p] = eval::jarque_bera(heavy);
  CHECK(p < 0.01);
  CHECK_THROWS_AS(eval::jarque_bera({1, 2, 3}), invalid_input);
}

TEST_CASE("lilliefors accepts gaussian and rejects uniform samples", "[evaluation]") {
  int accepted = 0;
  for (int s = 0; s < 40; ++s) {
    auto rng = make_rng(50 + s);
    std::normal_distribution<double> gauss(2.0, 3.0);
    std::vector<double> x(100);
    for (auto& v : x) v = gauss(rng);
    auto [d, p] = eval::lilliefors(x);
    if (p > 0.01) ++accepted;
  }
  CHECK(accepted >= 37);

  auto rng = make_rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> u(300);
  for (auto& v : u) v = unif(rng);
  auto [d, p] = eval::lilliefors(u);
  CHECK(p < 0.01);
}

TEST_CASE("breusch-pagan detects constructed heteroscedasticity", "[evaluation]") {
  const int n = 500;
  auto rng = make_rng(12);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(n, 1);
  std::vector<double> resid_het(n), resid_hom(n);
  for (int i = 0; i < n; ++i) {
    double xi = static_cast<double>(i) / n;
    x(i, 0) = xi;
    double e = gauss(rng);
    resid_het[i] = e * (0.1 + 2.0 * xi);  // variance grows with x
    resid_hom[i] = e;
  }
  auto [s_het, p_het] = eval::breusch_pagan(resid_het, x);
  auto [s_hom, p_hom] = eval::breusch_pagan(resid_hom, x);
  CHECK(p_het < 0.01);
  CHECK(p_hom > 0.01);
}

TEST_CASE("residual test bundle wires all three diagnostics", "[evaluation]") {
  auto rng = make_rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> r(200);
  for (auto& v : r) v = gauss(rng);
  auto out = eval::residual_tests(r);
  CHECK_FALSE(out.has_breusch_pagan);
  Eigen::MatrixXd reg = Eigen::MatrixXd::Random(200, 2);
  auto out2 = eval::residual_tests(r, &reg);
  CHECK(out2.has_breusch_pagan);
  CHECK(out2.jarque_bera_p > 0.0);
  CHECK(out2.lilliefors_p >= 0.0);
}

TEST_CASE("wilcoxon detects a shift and is antisymmetric", "[evaluation]") {
  const int n = 50;
  auto rng = make_rng(6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    double base = gauss(rng);
    a[i] = base + 0.8;
    b[i] = base + 0.1 * gauss(rng);
  }
  auto r1 = eval::wilcoxon_signed_rank(a, b);
  CHECK(r1.p < 0.01);
  CHECK(r1.w_signed > 0.0);
  auto r2 = eval::wilcoxon_signed_rank(b, a);
  CHECK(r2.w_signed == Catch::Approx(-r1.w_signed));
  CHECK(r2.p == Catch::Approx(r1.p).epsilon(1e-12));

  // all-zero differences degenerate rather than crash
  auto deg = eval::wilcoxon_signed_rank(a, a);
  CHECK(deg.degenerate);
  CHECK(deg.p == 1.0);

  std::vector<double> s1 = {1, 2, 3, 4}, s2 = {0, 1, 2, 3};
  CHECK_THROWS_AS(eval::wilcoxon_signed_rank(s1, s2), invalid_input);
}

TEST_CASE("friedman is zero for identical models and near-null for shuffles",
          "[evaluation]") {
  std::vector<double> e(30);
  for (int i = 0; i < 30; ++i) e[i] = 0.1 * i;
  auto same = eval::friedman({e, e, e});
  CHECK(same.statistic == Catch::Approx(0.0).margin(1e-9));
  CHECK(same.p == Catch::Approx(1.0));
  CHECK(same.df == 2);

  // one model clearly worse: large statistic, small p
  std::vector<double> worse(30);
  for (int i = 0; i < 30; ++i) worse[i] = e[i] + 5.0;
  auto diff = eval::friedman({e, e, worse});
  CHECK(diff.p < 0.01);

  CHECK_THROWS_AS(eval::friedman({e, e}), invalid_input);
}

TEST_CASE("calibration coverage matches a gaussian sampling oracle", "[evaluation]") {
  const int n = 10000;
  auto rng = make_rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> yt(n), mean(n), sigma(n, 1.0);
  for (int i = 0; i < n; ++i) {
    mean[i] = 0.3 * i;
    yt[i] = mean[i] + gauss(rng);
  }
  auto rep = eval::calibration(yt, mean, sigma);
  REQUIRE(rep.coverage.size() == 3);
  CHECK(rep.coverage[0] == Catch::Approx(0.6827).margin(0.02));
  CHECK(rep.coverage[1] == Catch::Approx(0.95).margin(0.02));
  CHECK(rep.coverage[2] == Catch::Approx(0.99).margin(0.02));
  CHECK(rep.coverage[0] < rep.coverage[1]);
  CHECK(rep.coverage[1] < rep.coverage[2]);

  std::vector<double> tiny(n, 1e-300);
  auto zero = eval::calibration(yt, mean, tiny);
  CHECK(zero.coverage[2] < 0.01);

  std::vector<double> neg(n, -1.0);
  CHECK_THROWS_AS(eval::calibration(yt, mean, neg), invalid_input);
}

TEST_CASE("physics consistency scores a well-behaved isotherm as perfect",
          "[evaluation]") {
  eval::SweepSpec sweep;
  for (int i = 0; i < 50; ++i) sweep.pressures.push_back(0.01 * std::pow(1.2, i));
  sweep.temperatures = {288.15, 298.15, 318.15};
  auto model = [](double p, double T) {
    double K = 0.5 * std::exp(8000.0 / kGasConstant * (1.0 / T - 1.0 / 298.15));
    return 1.5 * K * p / (1.0 + K * p);
  };
  auto rep = eval::physics_consistency(model, sweep, 1.5);
  CHECK(rep.score == Catch::Approx(1.0));
  CHECK(rep.monotonicity_violation_rate == 0.0);
  CHECK(rep.negativity_rate == 0.0);
  CHECK(rep.saturation_breach_rate == 0.0);
}

TEST_CASE("physics consistency flags an always-negative model", "[evaluation]") {
  eval::SweepSpec sweep;
  sweep.pressures = {0.1, 1.0, 10.0};
  sweep.temperatures = {298.15};
  auto rep = eval::physics_consistency([](double, double) { return -1.0; }, sweep);
  CHECK(rep.negativity_rate == 1.0);
  CHECK(rep.monotonicity_violation_rate == 0.0);  // flat, never decreasing
  CHECK(rep.score == Catch::Approx(0.5));

  eval::SweepSpec bad;
  bad.pressures = {1.0, 0.5};
  bad.temperatures = {298.15};
  CHECK_THROWS_AS(
      eval::physics_consistency([](double p, double) { return p; }, bad), invalid_input);
}
