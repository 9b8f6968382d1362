#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sorbkit/synth.hpp"

using namespace sorbkit;

TEST_CASE("zero noise reproduces the isotherm exactly", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 5;
  spec.n_samples = 6;
  auto [ds, gt] = synth::generate(spec);
  REQUIRE(ds.records.size() ==
          spec.n_samples * spec.temperatures.size() * spec.pressures.size());

  std::size_t per_sample = spec.temperatures.size() * spec.pressures.size();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    std::size_t s = i / per_sample;
    double q = gt.noiseless_uptake(s, r.pressure, r.temperature);
    CHECK(std::abs(q - r.uptake) < 1e-12);
  }
}

TEST_CASE("generation is bit-identical under a fixed seed", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 77;
  spec.noise.multiplicative_sigma = 0.02;
  auto [a, ga] = synth::generate(spec);
  auto [b, gb] = synth::generate(spec);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].uptake == b.records[i].uptake);
    CHECK(a.records[i].pressure == b.records[i].pressure);
  }
  for (std::size_t s = 0; s < ga.samples.size(); ++s)
    CHECK(ga.samples[s].theta_ref == gb.samples[s].theta_ref);
}

TEST_CASE("clay surface areas stay inside the configured span", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 9;
  spec.n_samples = 30;
  auto [ds, gt] = synth::generate(spec);
  for (const auto& r : ds.records) {
    if (r.lithology != domain::Lithology::Clay) continue;
    REQUIRE(r.ssa.has_value());
    CHECK(*r.ssa >= 2.96);
    CHECK(*r.ssa <= 273.1);
  }
}

TEST_CASE("profile kinds follow the lithology mapping", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 3;
  spec.n_samples = 9;
  auto [ds, gt] = synth::generate(spec);
  for (const auto& s : gt.samples) {
    if (s.lithology == domain::Lithology::Clay) CHECK(s.kind == iso::Kind::Sips);
    if (s.lithology == domain::Lithology::Shale) CHECK(s.kind == iso::Kind::Langmuir);
    if (s.lithology == domain::Lithology::Coal) CHECK(s.kind == iso::Kind::Freundlich);
  }
}

TEST_CASE("temperature dependence follows the exponential affinity law", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 21;
  spec.n_samples = 3;
  auto [ds, gt] = synth::generate(spec);
  const auto& s = gt.samples[1];  // shale/langmuir sample
  REQUIRE(s.kind == iso::Kind::Langmuir);
  double t1 = 288.15, t2 = 318.15;
  auto th1 = synth::GroundTruth::theta_at(s, t1, gt.t_ref);
  auto th2 = synth::GroundTruth::theta_at(s, t2, gt.t_ref);
  double lhs = std::log(th1[1] / th2[1]);
  double rhs = -s.dH / kGasConstant * (1.0 / t1 - 1.0 / t2);
  CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
  // exothermic: affinity falls with temperature
  CHECK(th1[1] > th2[1]);
}

TEST_CASE("monotone kinds generate monotone noiseless curves", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 2;
  spec.n_samples = 9;
  auto [ds, gt] = synth::generate(spec);
  for (std::size_t s = 0; s < gt.samples.size(); ++s) {
    double prev = -1.0;
    for (double p : spec.pressures) {
      double q = gt.noiseless_uptake(s, p, 298.15);
      CHECK(q >= prev);
      prev = q;
    }
  }
}

TEST_CASE("pressure grid outside the operating span is rejected", "[synth]") {
  synth::GeneratorSpec spec;
  spec.pressures = {0.5, 250.0};
  CHECK_THROWS_AS(synth::generate(spec), invalid_input);
  synth::GeneratorSpec spec2;
  spec2.pressures = {1e-4, 1.0};
  CHECK_THROWS_AS(synth::generate(spec2), invalid_input);
}

TEST_CASE("heteroscedastic noise grows with pressure", "[synth]") {
  synth::GeneratorSpec spec;
  spec.seed = 13;
  spec.n_samples = 30;
  spec.noise.heteroscedastic_slope = 0.002;
  auto [ds, gt] = synth::generate(spec);
  std::size_t per_sample = spec.temperatures.size() * spec.pressures.size();
  double low_dev = 0, high_dev = 0;
  int nlow = 0, nhigh = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    double clean = gt.noiseless_uptake(i / per_sample, r.pressure, r.temperature);
    double dev = std::abs(r.uptake - clean);
    if (r.pressure < 1.0) { low_dev += dev; ++nlow; }
    if (r.pressure > 30.0) { high_dev += dev; ++nhigh; }
  }
  REQUIRE(nlow > 0);
  REQUIRE(nhigh > 0);
  CHECK(high_dev / nhigh > low_dev / nlow);
}
