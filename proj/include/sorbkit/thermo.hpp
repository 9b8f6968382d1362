#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "sorbkit/common.hpp"
#include "sorbkit/fitting.hpp"
#include "sorbkit/isotherms.hpp"

// Temperature-dependence analysis: Van't Hoff regression of affinity
// constants and Clausius-Clapeyron isosteric heats.
//
// Sign convention: dH is negative for exothermic adsorption; the isosteric
// heat q_st is reported as a positive magnitude. dS assumes dimensionless K
// against a 1 bar^-1 reference (convention-dependent, flagged in reports).

namespace sorbkit::thermo {

struct VantHoffResult {
  double K0 = 0.0;      // pre-exponential, same units as K
  double dH = 0.0;      // J/mol
  double dS = 0.0;      // J/(mol K)
  std::map<double, double> dG_at;  // T -> J/mol
  double r2 = 0.0;
  int n_temps = 0;
};

struct IsostericCurve {
  std::vector<double> loadings;    // mmol/g, strictly increasing
  std::vector<double> qst;         // J/mol, positive for exothermic
  std::vector<double> temps_used;  // K
};

// Linear regression of ln K on 1/T. slope = -dH/R, intercept = ln K0.
inline VantHoffResult vant_hoff(std::span<const std::pair<double, double>> k_by_t) {
  std::vector<double> x, y;
  for (auto [T, K] : k_by_t) {
    if (T <= 0) throw invalid_input("vant_hoff: non-positive temperature");
    if (K <= 0) throw invalid_input("vant_hoff: non-positive K");
    x.push_back(1.0 / T);
    y.push_back(std::log(K));
  }
  std::vector<double> distinct(x);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2)
    throw invalid_input("vant_hoff: need >= 2 distinct temperatures");

  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  double slope = sxy / sxx;
  double intercept = my - slope * mx;

  VantHoffResult res;
  res.n_temps = static_cast<int>(distinct.size());
  res.dH = -kGasConstant * slope;
  res.K0 = std::exp(intercept);
  res.dS = kGasConstant * intercept;
  res.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  for (auto [T, K] : k_by_t) res.dG_at[T] = res.dH - T * res.dS;
  return res;
}

// Inverts Q(p; theta) = q by bisection on [1e-9, 1e7] bar.
inline double invert_isotherm(iso::Kind kind, std::span<const double> theta, double q,
                              const iso::EvalContext& ctx) {
  double lo = iso::kMinPressure, hi = 1e7;
  auto f = [&](double p) { return iso::evaluate(kind, theta, p, ctx) - q; };
  double flo = f(lo), fhi = f(hi);
  if (flo > 0 || fhi < 0)
    throw domain_error("invert_isotherm: loading outside bracket");
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if (fm <= 0)
      lo = mid;
    else
      hi = mid;
    if ((hi - lo) / std::max(lo, 1e-300) < 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

// Clausius-Clapeyron: for each loading, regress ln p on 1/T; the slope is
// dH/R for Van't Hoff-consistent isotherms, and q_st = -R * slope comes out
// positive for exothermic adsorption.
inline IsostericCurve isosteric_heat(const std::map<double, fit::FitResult>& isotherms_by_t,
                                     std::span<const double> loadings) {
  if (isotherms_by_t.size() < 2)
    throw invalid_input("isosteric_heat: need >= 2 temperatures");
  for (std::size_t i = 1; i < loadings.size(); ++i)
    if (loadings[i] <= loadings[i - 1])
      throw invalid_input("isosteric_heat: loadings must be strictly increasing");

  IsostericCurve curve;
  for (const auto& [T, fr] : isotherms_by_t) curve.temps_used.push_back(T);

  for (double q : loadings) {
    std::vector<double> invT, lnp;
    for (const auto& [T, fr] : isotherms_by_t) {
      double p = invert_isotherm(fr.kind, fr.theta, q, {T});
      invT.push_back(1.0 / T);
      lnp.push_back(std::log(p));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < invT.size(); ++i) { mx += invT[i]; my += lnp[i]; }
    mx /= invT.size();
    my /= invT.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < invT.size(); ++i) {
      sxy += (invT[i] - mx) * (lnp[i] - my);
      sxx += (invT[i] - mx) * (invT[i] - mx);
    }
    double slope = sxy / sxx;  // d ln p / d(1/T)
    curve.loadings.push_back(q);
    curve.qst.push_back(-kGasConstant * slope);
  }
  return curve;
}

}  // namespace sorbkit::thermo
