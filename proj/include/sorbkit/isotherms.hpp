#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sorbkit/common.hpp"

// Closed-form isotherm models Q(p; theta) with analytic parameter gradients,
// default parameter bounds and physics-constraint predicates.
//
// Units: pressure in bar, uptake in mmol/g, temperature in kelvin.
// Temkin b_T in J/mol, D-R B in mol^2/J^2 (so B*eps^2 is dimensionless with
// eps = R*T*ln(1 + 1/p) in J/mol, p relative to a 1-bar reference).

namespace sorbkit::iso {

enum class Kind {
  Langmuir,
  Freundlich,
  BET,
  Sips,
  Toth,
  Temkin,
  DubininRadushkevich,
  Henry,
  RedlichPeterson,
};

inline constexpr std::array<Kind, 9> all_kinds = {
    Kind::Langmuir,       Kind::Freundlich, Kind::BET,
    Kind::Sips,           Kind::Toth,       Kind::Temkin,
    Kind::DubininRadushkevich, Kind::Henry, Kind::RedlichPeterson,
};

// Evaluation below this pressure is a domain error for the log-singular kinds.
inline constexpr double kMinPressure = 1e-9;  // bar

inline std::size_t arity(Kind k) {
  switch (k) {
    case Kind::Langmuir: return 2;        // Q_max, K_L
    case Kind::Freundlich: return 2;      // K_F, n
    case Kind::BET: return 3;             // Q_m, C, p0
    case Kind::Sips: return 3;            // Q_max, K_S, n_s
    case Kind::Toth: return 3;            // Q_max, b, t
    case Kind::Temkin: return 2;          // b_T, K_T
    case Kind::DubininRadushkevich: return 2;  // Q_s, B
    case Kind::Henry: return 1;           // K_H
    case Kind::RedlichPeterson: return 3; // K_RP, A_RP, beta
  }
  throw invalid_input("unknown isotherm kind");
}

inline const char* name(Kind k) {
  switch (k) {
    case Kind::Langmuir: return "langmuir";
    case Kind::Freundlich: return "freundlich";
    case Kind::BET: return "bet";
    case Kind::Sips: return "sips";
    case Kind::Toth: return "toth";
    case Kind::Temkin: return "temkin";
    case Kind::DubininRadushkevich: return "dubinin_radushkevich";
    case Kind::Henry: return "henry";
    case Kind::RedlichPeterson: return "redlich_peterson";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  for (Kind k : all_kinds)
    if (s == name(k)) return k;
  throw invalid_input("unknown isotherm kind: " + s);
}

inline std::vector<std::string> param_names(Kind k) {
  switch (k) {
    case Kind::Langmuir: return {"q_max", "k_l"};
    case Kind::Freundlich: return {"k_f", "n"};
    case Kind::BET: return {"q_m", "c", "p0"};
    case Kind::Sips: return {"q_max", "k_s", "n_s"};
    case Kind::Toth: return {"q_max", "b", "t"};
    case Kind::Temkin: return {"b_t", "k_t"};
    case Kind::DubininRadushkevich: return {"q_s", "b"};
    case Kind::Henry: return {"k_h"};
    case Kind::RedlichPeterson: return {"k_rp", "a_rp", "beta"};
  }
  return {};
}

struct EvalContext {
  double temperature = 298.15;  // K, required by Temkin and D-R
};

// Per-parameter (low, high). BET p0 is bounded above the observed pressure
// range; callers pass the maximum observed pressure (defaults to 100 bar).
inline std::vector<std::pair<double, double>> default_bounds(Kind k, double p_max = 100.0) {
  switch (k) {
    case Kind::Langmuir: return {{0.001, 100.0}, {1e-6, 100.0}};
    case Kind::Freundlich: return {{1e-6, 100.0}, {1.0 + 1e-6, 10.0}};
    case Kind::BET: return {{0.001, 100.0}, {1.0, 1e4}, {p_max * (1.0 + 1e-4), 10.0 * p_max}};
    case Kind::Sips: return {{0.001, 100.0}, {1e-6, 100.0}, {0.1 + 1e-9, 10.0}};
    case Kind::Toth: return {{0.001, 100.0}, {1e-6, 100.0}, {0.05 + 1e-9, 5.0}};
    case Kind::Temkin: return {{1.0, 1e6}, {1e-6, 100.0}};
    case Kind::DubininRadushkevich: return {{0.001, 100.0}, {1e-12, 1e-2}};
    case Kind::Henry: return {{1e-6, 100.0}};
    case Kind::RedlichPeterson: return {{1e-6, 100.0}, {1e-6, 100.0}, {1e-9, 1.0}};
  }
  throw invalid_input("unknown isotherm kind");
}

inline void check_theta(Kind k, std::span<const double> th) {
  if (th.size() != arity(k))
    throw invalid_input(std::string("parameter count mismatch for ") + name(k));
}

inline double evaluate(Kind k, std::span<const double> th, double p, const EvalContext& ctx = {}) {
  check_theta(k, th);
  if (p < 0) throw domain_error("negative pressure");
  if (ctx.temperature <= 0) throw domain_error("non-positive temperature");
  switch (k) {
    case Kind::Langmuir: {
      double u = th[1] * p;
      return th[0] * u / (1.0 + u);
    }
    case Kind::Freundlich:
      return th[0] * std::pow(p, 1.0 / th[1]);
    case Kind::BET: {
      double x = p / th[2];
      if (x >= 1.0) throw domain_error("BET: p >= p0");
      double c = th[1];
      return th[0] * c * x / ((1.0 - x) * (1.0 + (c - 1.0) * x));
    }
    case Kind::Sips: {
      if (p == 0) return 0.0;
      double u = std::pow(th[1] * p, 1.0 / th[2]);
      return th[0] * u / (1.0 + u);
    }
    case Kind::Toth: {
      if (p == 0) return 0.0;
      double s = th[1] + std::pow(p, th[2]);
      return th[0] * p * std::pow(s, -1.0 / th[2]);
    }
    case Kind::Temkin: {
      if (p < kMinPressure) throw domain_error("Temkin: pressure below 1e-9 bar");
      return kGasConstant * ctx.temperature / th[0] * std::log(th[1] * p);
    }
    case Kind::DubininRadushkevich: {
      if (p < kMinPressure) throw domain_error("D-R: pressure below 1e-9 bar");
      double eps = kGasConstant * ctx.temperature * std::log1p(1.0 / p);
      return th[0] * std::exp(-th[1] * eps * eps);
    }
    case Kind::Henry:
      return th[0] * p;
    case Kind::RedlichPeterson: {
      if (p == 0) return 0.0;
      double d = 1.0 + th[1] * std::pow(p, th[2]);
      return th[0] * p / d;
    }
  }
  throw invalid_input("unknown isotherm kind");
}

// Analytic partial derivatives dQ/dtheta_i, same domain as evaluate.
inline std::vector<double> gradient(Kind k, std::span<const double> th, double p,
                                    const EvalContext& ctx = {}) {
  check_theta(k, th);
  if (p < 0) throw domain_error("negative pressure");
  switch (k) {
    case Kind::Langmuir: {
      double u = th[1] * p, d = 1.0 + u;
      return {u / d, th[0] * p / (d * d)};
    }
    case Kind::Freundlich: {
      if (p == 0) return {0.0, 0.0};
      double pw = std::pow(p, 1.0 / th[1]);
      return {pw, -th[0] * pw * std::log(p) / (th[1] * th[1])};
    }
    case Kind::BET: {
      double x = p / th[2];
      if (x >= 1.0) throw domain_error("BET: p >= p0");
      double c = th[1];
      double den = (1.0 - x) * (1.0 + (c - 1.0) * x);
      double dqm = c * x / den;
      double dc = th[0] * x * (1.0 - x) * (1.0 - x) / (den * den);
      double dq_dx = th[0] * c * (1.0 + (c - 1.0) * x * x) / (den * den);
      double dp0 = dq_dx * (-x / th[2]);
      return {dqm, dc, dp0};
    }
    case Kind::Sips: {
      if (p == 0) return {0.0, 0.0, 0.0};
      double ns = th[2];
      double u = std::pow(th[1] * p, 1.0 / ns);
      double d = 1.0 + u;
      double dq_du = th[0] / (d * d);
      double du_dk = u / (ns * th[1]);
      double du_dn = -u * std::log(th[1] * p) / (ns * ns);
      return {u / d, dq_du * du_dk, dq_du * du_dn};
    }
    case Kind::Toth: {
      if (p == 0) return {0.0, 0.0, 0.0};
      double t = th[2], b = th[1];
      double pt = std::pow(p, t);
      double s = b + pt;
      double sp = std::pow(s, -1.0 / t);
      double dqmax = p * sp;
      double db = th[0] * p * (-1.0 / t) * std::pow(s, -1.0 / t - 1.0);
      double dt = th[0] * p * sp *
                  (std::log(s) / (t * t) - pt * std::log(p) / (t * s));
      return {dqmax, db, dt};
    }
    case Kind::Temkin: {
      if (p < kMinPressure) throw domain_error("Temkin: pressure below 1e-9 bar");
      double rt = kGasConstant * ctx.temperature;
      return {-rt / (th[0] * th[0]) * std::log(th[1] * p), rt / (th[0] * th[1])};
    }
    case Kind::DubininRadushkevich: {
      if (p < kMinPressure) throw domain_error("D-R: pressure below 1e-9 bar");
      double eps = kGasConstant * ctx.temperature * std::log1p(1.0 / p);
      double e2 = eps * eps;
      double ex = std::exp(-th[1] * e2);
      return {ex, -th[0] * e2 * ex};
    }
    case Kind::Henry:
      return {p};
    case Kind::RedlichPeterson: {
      if (p == 0) return {0.0, 0.0, 0.0};
      double pb = std::pow(p, th[2]);
      double d = 1.0 + th[1] * pb;
      return {p / d, -th[0] * p * pb / (d * d),
              -th[0] * p * th[1] * pb * std::log(p) / (d * d)};
    }
  }
  throw invalid_input("unknown isotherm kind");
}

inline bool has_saturation_capacity(Kind k) {
  return k == Kind::Langmuir || k == Kind::Sips || k == Kind::Toth ||
         k == Kind::DubininRadushkevich;
}

struct Predicate {
  std::string name;
  bool pass = false;
};

struct PhysicsReport {
  std::vector<Predicate> predicates;
  double score = 0.0;  // passed / total
};

// Evaluates positivity, monotonicity, saturation, favorability and parameter
// positivity on the supplied ascending pressure grid. Domain errors count as
// predicate failures rather than propagating.
inline PhysicsReport physics_predicates(Kind k, std::span<const double> th,
                                        std::span<const double> pressures,
                                        const EvalContext& ctx = {}) {
  check_theta(k, th);
  PhysicsReport rep;

  std::vector<double> q;
  q.reserve(pressures.size());
  bool eval_ok = true;
  for (double p : pressures) {
    try {
      q.push_back(evaluate(k, th, p, ctx));
    } catch (const domain_error&) {
      eval_ok = false;
      break;
    }
  }

  bool positive = eval_ok;
  bool monotone = eval_ok;
  if (eval_ok) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q[i] < 0) positive = false;
      if (i > 0 && q[i] + 1e-12 < q[i - 1]) monotone = false;
    }
  }
  rep.predicates.push_back({"positivity", positive});
  rep.predicates.push_back({"monotonicity", monotone});

  if (has_saturation_capacity(k)) {
    bool sat = eval_ok;
    double cap = th[0];
    if (eval_ok)
      for (double v : q)
        if (v > cap * (1.0 + 1e-9)) sat = false;
    rep.predicates.push_back({"saturation", sat});
  }
  if (k == Kind::Freundlich)
    rep.predicates.push_back({"favorability", th[1] > 1.0});

  bool params_positive = true;
  for (double v : th)
    if (!(v > 0)) params_positive = false;
  rep.predicates.push_back({"parameter_positivity", params_positive});

  int passed = 0;
  for (const auto& pr : rep.predicates) passed += pr.pass ? 1 : 0;
  rep.score = static_cast<double>(passed) / static_cast<double>(rep.predicates.size());
  return rep;
}

}  // namespace sorbkit::iso
