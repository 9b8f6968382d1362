#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"
#include "sorbkit/domain.hpp"
#include "sorbkit/features.hpp"

namespace sorbkit::domain {

// Per-column completeness, isolation-forest/IQR outlier flags over the
// numeric columns (median-filled for scoring only) and per-lithology counts.
inline QualityReport quality_report(const Dataset& ds, double contamination = 0.1,
                                    std::uint64_t seed = 0) {
  if (ds.records.empty()) throw invalid_input("quality_report: empty dataset");
  QualityReport rep;
  rep.n_records = ds.records.size();

  std::map<Lithology, std::set<std::string>> distinct;
  for (const auto& r : ds.records) distinct[r.lithology].insert(r.sample_id);
  for (const auto& [l, ids] : distinct) rep.n_samples[lithology_name(l)] = ids.size();

  const std::size_t n = ds.records.size();
  auto completeness_of = [&](auto getter) {
    std::size_t present = 0;
    for (const auto& r : ds.records)
      if (getter(r)) ++present;
    return static_cast<double>(present) / static_cast<double>(n);
  };
  rep.completeness["pressure"] = 1.0;
  rep.completeness["temperature"] = 1.0;
  rep.completeness["uptake"] = 1.0;
  rep.completeness["ssa"] = completeness_of([](const SorptionRecord& r) { return r.ssa.has_value(); });
  rep.completeness["pore_volume"] =
      completeness_of([](const SorptionRecord& r) { return r.pore_volume.has_value(); });
  rep.completeness["pore_diameter"] =
      completeness_of([](const SorptionRecord& r) { return r.pore_diameter.has_value(); });
  std::set<std::string> extra_cols;
  for (const auto& r : ds.records)
    for (const auto& [k, v] : r.extra) extra_cols.insert(k);
  for (const auto& c : extra_cols)
    rep.completeness[c] = completeness_of([&](const SorptionRecord& r) {
      auto it = r.extra.find(c);
      return it != r.extra.end() && it->second.has_value();
    });

  // numeric columns for outlier scoring; optional columns median-filled
  std::vector<std::vector<double>> cols = {{}, {}, {}};
  std::vector<std::vector<double>> opt = {{}, {}, {}};
  for (const auto& r : ds.records) {
    cols[0].push_back(r.pressure);
    cols[1].push_back(r.temperature);
    cols[2].push_back(r.uptake);
    if (r.ssa) opt[0].push_back(*r.ssa);
    if (r.pore_volume) opt[1].push_back(*r.pore_volume);
    if (r.pore_diameter) opt[2].push_back(*r.pore_diameter);
  }
  feat::FeatureMatrix fm;
  fm.names = {"pressure", "temperature", "uptake"};
  std::vector<std::optional<double>> fills(3);
  for (int j = 0; j < 3; ++j)
    if (!opt[j].empty()) fills[j] = median_of(opt[j]);
  if (fills[0]) fm.names.push_back("ssa");
  if (fills[1]) fm.names.push_back("pore_volume");
  if (fills[2]) fm.names.push_back("pore_diameter");
  fm.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(fm.names.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = ds.records[i];
    Eigen::Index j = 0;
    fm.rows(i, j++) = r.pressure;
    fm.rows(i, j++) = r.temperature;
    fm.rows(i, j++) = r.uptake;
    if (fills[0]) fm.rows(i, j++) = r.ssa.value_or(*fills[0]);
    if (fills[1]) fm.rows(i, j++) = r.pore_volume.value_or(*fills[1]);
    if (fills[2]) fm.rows(i, j++) = r.pore_diameter.value_or(*fills[2]);
  }
  for (const auto& name : fm.names) fm.category[name] = feat::Category::Thermodynamic;
  fm.refresh_mask();

  auto outliers = feat::detect_outliers(fm, contamination, seed);
  rep.outlier_flags.assign(outliers.removal.begin(), outliers.removal.end());
  std::size_t flagged = 0;
  for (bool b : rep.outlier_flags) flagged += b ? 1 : 0;
  rep.flagged_fraction = static_cast<double>(flagged) / static_cast<double>(n);
  return rep;
}

}  // namespace sorbkit::domain
