#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"
#include "sorbkit/isotherms.hpp"

// Hybrid global/local nonlinear fitting of isotherm models: differential
// evolution inside the default bounds followed by bounded Levenberg-Marquardt
// refinement with analytic Jacobians. Plain SSE loss on uptake.

namespace sorbkit::fit {

struct FitConfig {
  int de_population = 30;
  int de_generations = 300;
  double de_crossover = 0.9;
  double de_weight = 0.7;
  int local_max_iter = 200;
  double local_tol = 1e-10;  // relative SSE change
  std::uint64_t seed = 0;

  void validate() const {
    if (de_population < 1 || de_generations < 1 || local_max_iter < 1)
      throw invalid_input("FitConfig: counts must be >= 1");
    if (!(de_crossover > 0.0 && de_crossover <= 1.0))
      throw invalid_input("FitConfig: crossover must be in (0,1]");
    if (!(de_weight > 0.0 && de_weight < 2.0))
      throw invalid_input("FitConfig: weight must be in (0,2)");
  }
};

struct DataPoint {
  double p = 0.0;  // bar
  double q = 0.0;  // mmol/g
  double T = 298.15;  // K
};

struct FitResult {
  iso::Kind kind = iso::Kind::Langmuir;
  std::vector<double> theta;
  double sse = std::numeric_limits<double>::infinity();
  double r2 = -std::numeric_limits<double>::infinity();
  double rmse = std::numeric_limits<double>::infinity();
  double physics_score = 0.0;
  std::vector<double> param_sigma;
  int n_points = 0;
  bool converged = false;
  int iterations = 0;
  bool skipped = false;
  std::string skip_reason;
};

namespace detail {

// Pressures for Temkin/D-R are clamped to the model's minimum; exact zeros
// make the kind inapplicable.
inline bool needs_positive_pressure(iso::Kind k) {
  return k == iso::Kind::Temkin || k == iso::Kind::DubininRadushkevich;
}

inline double sse_of(iso::Kind k, std::span<const double> th,
                     std::span<const DataPoint> data) {
  double s = 0.0;
  for (const auto& d : data) {
    double q;
    try {
      q = iso::evaluate(k, th, d.p, {d.T});
    } catch (const domain_error&) {
      return std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(q)) return std::numeric_limits<double>::infinity();
    double r = q - d.q;
    s += r * r;
  }
  return s;
}

// Wide-range strictly positive parameters are searched in log space.
struct Transform {
  std::vector<bool> log_scale;
  std::vector<std::pair<double, double>> lo_hi;  // transformed bounds

  explicit Transform(const std::vector<std::pair<double, double>>& bounds) {
    for (auto [lo, hi] : bounds) {
      bool lg = lo > 0 && hi / lo > 1e3;
      log_scale.push_back(lg);
      if (lg)
        lo_hi.push_back({std::log(lo), std::log(hi)});
      else
        lo_hi.push_back({lo, hi});
    }
  }
  std::vector<double> decode(const std::vector<double>& z) const {
    std::vector<double> th(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      th[i] = log_scale[i] ? std::exp(z[i]) : z[i];
    return th;
  }
};

}  // namespace detail

// Differential evolution (rand/1/bin) within bounds; returns the best theta.
inline std::vector<double> differential_evolution(
    iso::Kind k, std::span<const DataPoint> data,
    const std::vector<std::pair<double, double>>& bounds, const FitConfig& cfg) {
  const std::size_t dim = bounds.size();
  detail::Transform tf(bounds);
  auto rng = make_rng(split_seed(cfg.seed, 0x6465));  // "de"
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int np = std::max(cfg.de_population, 4);
  std::vector<std::vector<double>> pop(np, std::vector<double>(dim));
  std::vector<double> cost(np);
  for (int i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      auto [lo, hi] = tf.lo_hi[j];
      pop[i][j] = lo + (hi - lo) * unif(rng);
    }
    cost[i] = detail::sse_of(k, tf.decode(pop[i]), data);
  }

  std::uniform_int_distribution<int> pick(0, np - 1);
  std::uniform_int_distribution<int> pickdim(0, static_cast<int>(dim) - 1);
  std::vector<double> trial(dim);
  for (int gen = 0; gen < cfg.de_generations; ++gen) {
    for (int i = 0; i < np; ++i) {
      int r1, r2, r3;
      do { r1 = pick(rng); } while (r1 == i);
      do { r2 = pick(rng); } while (r2 == i || r2 == r1);
      do { r3 = pick(rng); } while (r3 == i || r3 == r1 || r3 == r2);
      int jrand = pickdim(rng);
      for (std::size_t j = 0; j < dim; ++j) {
        if (unif(rng) < cfg.de_crossover || static_cast<int>(j) == jrand) {
          double v = pop[r1][j] + cfg.de_weight * (pop[r2][j] - pop[r3][j]);
          auto [lo, hi] = tf.lo_hi[j];
          trial[j] = std::clamp(v, lo, hi);
        } else {
          trial[j] = pop[i][j];
        }
      }
      double c = detail::sse_of(k, tf.decode(trial), data);
      if (c <= cost[i]) {
        pop[i] = trial;
        cost[i] = c;
      }
    }
  }
  int best = 0;
  for (int i = 1; i < np; ++i)
    if (cost[i] < cost[best]) best = i;
  return tf.decode(pop[best]);
}

// Bounded Levenberg-Marquardt with analytic Jacobian. Never increases SSE
// relative to the starting point. Returns (theta, sse, iterations, converged).
struct LocalResult {
  std::vector<double> theta;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline LocalResult levenberg_marquardt(
    iso::Kind k, std::span<const DataPoint> data, std::vector<double> theta,
    const std::vector<std::pair<double, double>>& bounds, const FitConfig& cfg) {
  const int n = static_cast<int>(data.size());
  const int m = static_cast<int>(theta.size());
  double sse = detail::sse_of(k, theta, data);
  double lambda = 1e-3;
  LocalResult out;

  for (int it = 0; it < cfg.local_max_iter; ++it) {
    out.iterations = it + 1;
    Eigen::MatrixXd J(n, m);
    Eigen::VectorXd r(n);
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      try {
        double q = iso::evaluate(k, theta, data[i].p, {data[i].T});
        auto g = iso::gradient(k, theta, data[i].p, {data[i].T});
        r(i) = q - data[i].q;
        for (int j = 0; j < m; ++j) J(i, j) = g[j];
      } catch (const domain_error&) {
        ok = false;
        break;
      }
    }
    if (!ok) break;

    Eigen::MatrixXd jtj = J.transpose() * J;
    Eigen::VectorXd jtr = J.transpose() * r;
    bool improved = false;
    for (int inner = 0; inner < 25; ++inner) {
      Eigen::MatrixXd a = jtj;
      for (int j = 0; j < m; ++j)
        a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
      Eigen::VectorXd delta = a.ldlt().solve(-jtr);
      std::vector<double> cand(theta);
      for (int j = 0; j < m; ++j)
        cand[j] = std::clamp(theta[j] + delta(j), bounds[j].first, bounds[j].second);
      double cs = detail::sse_of(k, cand, data);
      if (cs < sse) {
        double rel = (sse - cs) / std::max(sse, 1e-300);
        theta = std::move(cand);
        sse = cs;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (rel < cfg.local_tol) out.converged = true;
        break;
      }
      lambda *= 5.0;
      if (lambda > 1e12) break;
    }
    if (!improved) {
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  out.theta = std::move(theta);
  out.sse = sse;
  return out;
}

// sigma_i = sqrt(s^2 [(J^T J)^-1]_ii), s^2 = SSE/(n - arity). Singular
// information matrices yield +inf markers.
inline std::vector<double> param_uncertainty(iso::Kind k, std::span<const double> theta,
                                             std::span<const DataPoint> data) {
  const int n = static_cast<int>(data.size());
  const int m = static_cast<int>(iso::arity(k));
  if (n <= m) throw invalid_input("param_uncertainty: need more points than parameters");
  Eigen::MatrixXd J(n, m);
  double sse = 0.0;
  for (int i = 0; i < n; ++i) {
    double q = iso::evaluate(k, theta, data[i].p, {data[i].T});
    auto g = iso::gradient(k, theta, data[i].p, {data[i].T});
    double r = q - data[i].q;
    sse += r * r;
    for (int j = 0; j < m; ++j) J(i, j) = g[j];
  }
  double s2 = sse / (n - m);
  Eigen::MatrixXd jtj = J.transpose() * J;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  std::vector<double> sigma(m, std::numeric_limits<double>::infinity());
  if (!lu.isInvertible()) return sigma;
  Eigen::MatrixXd inv = lu.inverse();
  for (int j = 0; j < m; ++j) {
    double v = s2 * inv(j, j);
    sigma[j] = v >= 0 ? std::sqrt(v) : std::numeric_limits<double>::infinity();
  }
  return sigma;
}

inline FitResult fit_one(iso::Kind k, std::span<const DataPoint> data, const FitConfig& cfg) {
  cfg.validate();
  FitResult res;
  res.kind = k;
  res.n_points = static_cast<int>(data.size());
  if (data.size() < iso::arity(k) + 1)
    throw invalid_input(std::string("fit_one: insufficient points for ") + iso::name(k));

  double p_max = 0.0, p_min = std::numeric_limits<double>::infinity();
  for (const auto& d : data) {
    p_max = std::max(p_max, d.p);
    p_min = std::min(p_min, d.p);
  }
  if (detail::needs_positive_pressure(k) && p_min <= 0.0)
    throw domain_error(std::string(iso::name(k)) + ": zero pressure in data");

  // Clamp sub-threshold pressures for the log-singular kinds.
  std::vector<DataPoint> work(data.begin(), data.end());
  if (detail::needs_positive_pressure(k))
    for (auto& d : work)
      d.p = std::max(d.p, iso::kMinPressure);

  auto bounds = iso::default_bounds(k, p_max);
  auto de_theta = differential_evolution(k, work, bounds, cfg);
  double de_sse = detail::sse_of(k, de_theta, work);
  if (!std::isfinite(de_sse))
    throw domain_error(std::string("fit_one: no feasible candidate for ") + iso::name(k));

  auto local = levenberg_marquardt(k, work, de_theta, bounds, cfg);
  if (local.sse <= de_sse) {
    res.theta = local.theta;
    res.sse = local.sse;
  } else {
    res.theta = de_theta;
    res.sse = de_sse;
  }
  res.iterations = local.iterations;
  res.converged = local.converged;

  double mean_q = 0.0;
  for (const auto& d : work) mean_q += d.q;
  mean_q /= work.size();
  double sst = 0.0;
  for (const auto& d : work) sst += (d.q - mean_q) * (d.q - mean_q);
  res.r2 = sst > 0 ? 1.0 - res.sse / sst : (res.sse == 0 ? 1.0 : -std::numeric_limits<double>::infinity());
  res.rmse = std::sqrt(res.sse / work.size());

  // Physics predicates on the observed pressure range.
  std::vector<double> grid(64);
  double lo = std::max(p_min, detail::needs_positive_pressure(k) ? iso::kMinPressure : p_min);
  if (lo <= 0) lo = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = lo + (p_max - lo) * static_cast<double>(i) / (grid.size() - 1);
  double t_mean = 0.0;
  for (const auto& d : work) t_mean += d.T;
  t_mean /= work.size();
  res.physics_score = iso::physics_predicates(k, res.theta, grid, {t_mean}).score;

  if (res.n_points > static_cast<int>(iso::arity(k))) {
    try {
      res.param_sigma = param_uncertainty(k, res.theta, work);
    } catch (const std::exception&) {
      res.param_sigma.assign(iso::arity(k), std::numeric_limits<double>::infinity());
    }
  }
  return res;
}

// Fits every kind, ranks by physics score, then r2, then fewer parameters,
// then fixed kind order. Inapplicable kinds are reported as skipped.
inline std::vector<FitResult> fit_all(std::span<const DataPoint> data, const FitConfig& cfg) {
  if (data.empty()) throw invalid_input("fit_all: empty dataset");
  std::vector<FitResult> results;
  for (iso::Kind k : iso::all_kinds) {
    FitResult r;
    r.kind = k;
    try {
      r = fit_one(k, data, cfg);
    } catch (const std::exception& e) {
      r.skipped = true;
      r.skip_reason = e.what();
      r.n_points = static_cast<int>(data.size());
    }
    results.push_back(std::move(r));
  }
  auto order_of = [](iso::Kind k) {
    for (std::size_t i = 0; i < iso::all_kinds.size(); ++i)
      if (iso::all_kinds[i] == k) return i;
    return iso::all_kinds.size();
  };
  std::stable_sort(results.begin(), results.end(), [&](const FitResult& a, const FitResult& b) {
    if (a.skipped != b.skipped) return !a.skipped;
    if (a.physics_score != b.physics_score) return a.physics_score > b.physics_score;
    if (a.r2 != b.r2) return a.r2 > b.r2;
    if (iso::arity(a.kind) != iso::arity(b.kind)) return iso::arity(a.kind) < iso::arity(b.kind);
    return order_of(a.kind) < order_of(b.kind);
  });
  return results;
}

}  // namespace sorbkit::fit
