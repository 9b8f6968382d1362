#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"
#include "sorbkit/domain.hpp"
#include "sorbkit/isotherms.hpp"

// Synthetic-data oracle: sorption datasets generated from known ground-truth
// isotherms and Van't Hoff temperature dependence, with optional
// multiplicative and heteroscedastic noise.

namespace sorbkit::synth {

struct LithologyProfile {
  iso::Kind kind = iso::Kind::Langmuir;
  std::pair<double, double> q_max_range = {0.5, 2.0};    // mmol/g
  std::pair<double, double> k_range = {0.05, 1.0};       // affinity at T_ref
  std::pair<double, double> n_range = {1.0, 1.0};        // exponent (Sips n_s / Freundlich n)
  std::pair<double, double> ssa_range = {2.96, 273.1};   // m^2/g
  std::pair<double, double> pore_volume_range = {0.01, 0.5};   // cm^3/g
  std::pair<double, double> pore_diameter_range = {1.0, 50.0}; // nm
  double dH = -8000.0;  // J/mol
};

struct NoiseSpec {
  double multiplicative_sigma = 0.0;  // relative
  double heteroscedastic_slope = 0.0; // absolute sigma per bar
};

struct GeneratorSpec {
  std::map<domain::Lithology, LithologyProfile> profiles = default_profiles();
  std::vector<double> temperatures = {298.15};
  std::vector<double> pressures = log_grid(0.1, 100.0, 10);
  NoiseSpec noise;
  int n_samples = 15;  // materials; records = n_samples * |T| * |p|
  double t_ref = 298.15;
  std::uint64_t seed = 0;

  static std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i)
      g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / std::max(n - 1, 1));
    return g;
  }

  // Mirrors the lithology-specific model preferences: Sips for clays,
  // Langmuir for shales, Freundlich for coals.
  static std::map<domain::Lithology, LithologyProfile> default_profiles() {
    std::map<domain::Lithology, LithologyProfile> p;
    p[domain::Lithology::Clay] = {iso::Kind::Sips, {0.6, 1.5}, {0.1, 0.8}, {0.8, 1.6},
                                  {2.96, 273.1}, {0.02, 0.6}, {1.0, 20.0}, -9000.0};
    p[domain::Lithology::Shale] = {iso::Kind::Langmuir, {0.05, 0.3}, {0.05, 0.5}, {1.0, 1.0},
                                   {0.01, 0.05}, {0.005, 0.05}, {2.0, 30.0}, -7000.0};
    p[domain::Lithology::Coal] = {iso::Kind::Freundlich, {0.02, 0.15}, {0.02, 0.15}, {1.5, 3.0},
                                  {0.05, 30.51}, {0.01, 0.2}, {0.5, 10.0}, -8000.0};
    return p;
  }
};

struct SampleTruth {
  std::string sample_id;
  domain::Lithology lithology;
  iso::Kind kind;
  std::vector<double> theta_ref;  // at t_ref
  double dH = 0.0;
};

struct GroundTruth {
  std::vector<SampleTruth> samples;
  NoiseSpec noise;
  double t_ref = 298.15;

  // Affinity at temperature T via K(T) = K_ref * exp(-dH/R * (1/T - 1/T_ref)).
  static std::vector<double> theta_at(const SampleTruth& s, double T, double t_ref) {
    std::vector<double> th = s.theta_ref;
    double scale = std::exp(-s.dH / kGasConstant * (1.0 / T - 1.0 / t_ref));
    switch (s.kind) {
      case iso::Kind::Langmuir:
      case iso::Kind::Sips:
      case iso::Kind::Toth:
        th[1] *= scale;
        break;
      case iso::Kind::Freundlich:
      case iso::Kind::Henry:
      case iso::Kind::RedlichPeterson:
        th[0] *= scale;
        break;
      case iso::Kind::Temkin:
        th[1] *= scale;
        break;
      case iso::Kind::BET:
      case iso::Kind::DubininRadushkevich:
        break;  // no affinity scaling defined for these profiles
    }
    return th;
  }

  double noiseless_uptake(std::size_t sample, double p, double T) const {
    const auto& s = samples[sample];
    auto th = theta_at(s, T, t_ref);
    return iso::evaluate(s.kind, th, p, {T});
  }
};

inline std::pair<domain::Dataset, GroundTruth> generate(const GeneratorSpec& spec) {
  domain::Dataset ds;
  ds.provenance = "synthetic";
  GroundTruth gt;
  gt.noise = spec.noise;
  gt.t_ref = spec.t_ref;

  std::vector<domain::Lithology> liths;
  for (const auto& [l, prof] : spec.profiles) liths.push_back(l);
  if (liths.empty()) throw invalid_input("generate: no lithology profiles");
  for (double p : spec.pressures)
    if (p < 1e-3 || p > 200.0)
      throw invalid_input("generate: pressure grid must stay within [1e-3, 200] bar");

  auto rng = make_rng(split_seed(spec.seed, 0x73796e));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](std::pair<double, double> range) {
    return range.first + (range.second - range.first) * unif(rng);
  };

  for (int s = 0; s < spec.n_samples; ++s) {
    domain::Lithology lith = liths[s % liths.size()];
    const auto& prof = spec.profiles.at(lith);
    SampleTruth truth;
    truth.sample_id = std::string(domain::lithology_name(lith)) + "_" + std::to_string(s);
    truth.lithology = lith;
    truth.kind = prof.kind;
    truth.dH = prof.dH;
    // Material properties drive the isotherm parameters: capacity scales
    // with surface area, affinity with pore confinement, heterogeneity with
    // pore volume. Keeps uptake a recoverable function of the descriptors.
    double u_ssa = unif(rng), u_dp = unif(rng), u_vp = unif(rng);
    auto lerp = [](std::pair<double, double> r, double u) {
      return r.first + (r.second - r.first) * u;
    };
    double ssa = lerp(prof.ssa_range, u_ssa);
    double dpore = lerp(prof.pore_diameter_range, u_dp);
    double vpore = lerp(prof.pore_volume_range, u_vp);
    double q_max = lerp(prof.q_max_range, u_ssa);
    double k = lerp(prof.k_range, 1.0 - u_dp);
    double nexp = lerp(prof.n_range, u_vp);
    switch (prof.kind) {
      case iso::Kind::Langmuir: truth.theta_ref = {q_max, k}; break;
      case iso::Kind::Sips: truth.theta_ref = {q_max, k, nexp}; break;
      case iso::Kind::Freundlich: truth.theta_ref = {k, std::max(nexp, 1.0 + 1e-6)}; break;
      case iso::Kind::Henry: truth.theta_ref = {k}; break;
      default: throw invalid_input("generate: unsupported profile kind");
    }

    std::size_t sample_index = gt.samples.size();
    gt.samples.push_back(truth);

    for (double T : spec.temperatures) {
      for (double p : spec.pressures) {
        double q = gt.noiseless_uptake(sample_index, p, T);
        double noisy = q;
        if (spec.noise.multiplicative_sigma > 0)
          noisy *= 1.0 + spec.noise.multiplicative_sigma * gauss(rng);
        if (spec.noise.heteroscedastic_slope > 0)
          noisy += spec.noise.heteroscedastic_slope * p * gauss(rng);

        domain::SorptionRecord rec;
        rec.sample_id = truth.sample_id;
        rec.lithology = lith;
        rec.pressure = p;
        rec.temperature = T;
        rec.uptake = noisy;
        rec.ssa = ssa;
        rec.pore_volume = vpore;
        rec.pore_diameter = dpore;
        rec.valid_uptake = domain::uptake_valid(noisy);
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return {std::move(ds), std::move(gt)};
}

}  // namespace sorbkit::synth
