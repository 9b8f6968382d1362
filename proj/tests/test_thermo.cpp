#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "sorbkit/thermo.hpp"

using namespace sorbkit;
using iso::Kind;

namespace {

double k_of_t(double k_ref, double dh, double T, double t_ref = 298.15) {
  return k_ref * std::exp(-dh / kGasConstant * (1.0 / T - 1.0 / t_ref));
}

}  // namespace

TEST_CASE("vant hoff recovers an exact exponential law", "[thermo]") {
  double dh = -8000.0, k_ref = 0.5;
  std::vector<std::pair<double, double>> pts;
  for (double T : {278.15, 298.15, 318.15, 338.15})
    pts.push_back({T, k_of_t(k_ref, dh, T)});
  auto res = thermo::vant_hoff(pts);
  CHECK(std::abs(res.dH - dh) / std::abs(dh) < 1e-6);
  CHECK(res.r2 == Catch::Approx(1.0));
  // dG = dH - T dS at each temperature
  for (auto [T, K] : pts)
    CHECK(res.dG_at.at(T) == Catch::Approx(res.dH - T * res.dS).epsilon(1e-12));
}

TEST_CASE("vant hoff input validation", "[thermo]") {
  std::vector<std::pair<double, double>> one = {{298.15, 0.5}, {298.15, 0.5}};
  CHECK_THROWS_AS(thermo::vant_hoff(one), invalid_input);
  std::vector<std::pair<double, double>> neg = {{298.15, 0.5}, {318.15, -0.1}};
  CHECK_THROWS_AS(thermo::vant_hoff(neg), invalid_input);
}

TEST_CASE("isotherm inversion round-trips", "[thermo]") {
  std::vector<double> th{1.5, 0.3};
  for (double p : {0.01, 0.5, 3.0, 50.0}) {
    double q = iso::evaluate(Kind::Langmuir, th, p);
    double p_back = thermo::invert_isotherm(Kind::Langmuir, th, q, {298.15});
    CHECK(std::abs(p_back - p) / p < 1e-9);
  }
  // loading above capacity cannot be bracketed
  CHECK_THROWS_AS(thermo::invert_isotherm(Kind::Langmuir, th, 2.0, {298.15}), domain_error);
}

TEST_CASE("isosteric heat matches the generating enthalpy", "[thermo]") {
  // Langmuir with exact exponential affinity: q_st should equal |dH| at
  // every loading.
  double dh = -8000.0, q_max = 1.0, k_ref = 0.5;
  std::map<double, fit::FitResult> by_t;
  for (double T : {278.15, 298.15, 318.15}) {
    fit::FitResult fr;
    fr.kind = Kind::Langmuir;
    fr.theta = {q_max, k_of_t(k_ref, dh, T)};
    by_t[T] = fr;
  }
  std::vector<double> loadings;
  for (double f = 0.1; f < 0.85; f += 0.1) loadings.push_back(f * q_max);
  auto curve = thermo::isosteric_heat(by_t, loadings);
  REQUIRE(curve.qst.size() == loadings.size());
  for (double qst : curve.qst) {
    CHECK(qst > 0.0);  // exothermic reported as positive
    CHECK(std::abs(qst - std::abs(dh)) / std::abs(dh) < 0.005);
  }
}

TEST_CASE("isosteric heat rejects non-increasing loadings", "[thermo]") {
  std::map<double, fit::FitResult> by_t;
  for (double T : {278.15, 298.15}) {
    fit::FitResult fr;
    fr.kind = Kind::Langmuir;
    fr.theta = {1.0, 0.5};
    by_t[T] = fr;
  }
  std::vector<double> bad = {0.2, 0.2};
  CHECK_THROWS_AS(thermo::isosteric_heat(by_t, bad), invalid_input);
  std::map<double, fit::FitResult> single;
  single[298.15] = by_t[298.15];
  std::vector<double> ok = {0.1, 0.2};
  CHECK_THROWS_AS(thermo::isosteric_heat(single, ok), invalid_input);
}
