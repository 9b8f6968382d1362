#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"
#include "sorbkit/domain.hpp"
#include "sorbkit/isolation_forest.hpp"
#include "sorbkit/random_forest.hpp"

// Physics-informed feature construction, tiered preprocessing, outlier
// detection, robust scaling, ensemble feature selection and stratified
// splitting.

namespace sorbkit::feat {

enum class Category {
  Thermodynamic,
  PoreStructure,
  SurfaceChemistry,
  ClassicalPrior,
  Interaction,
  Kinetic,
  Sieving,
};

inline const char* category_name(Category c) {
  switch (c) {
    case Category::Thermodynamic: return "thermodynamic";
    case Category::PoreStructure: return "pore_structure";
    case Category::SurfaceChemistry: return "surface_chemistry";
    case Category::ClassicalPrior: return "classical_prior";
    case Category::Interaction: return "interaction";
    case Category::Kinetic: return "kinetic";
    case Category::Sieving: return "sieving";
  }
  return "?";
}

struct FeatureMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd rows;  // n_samples x n_features, NaN where missing
  std::map<std::string, Category> category;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;  // 1 = missing

  Eigen::Index n_samples() const { return rows.rows(); }
  Eigen::Index n_features() const { return rows.cols(); }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  void refresh_mask() {
    mask.resize(rows.rows(), rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      for (Eigen::Index j = 0; j < rows.cols(); ++j)
        mask(i, j) = std::isnan(rows(i, j)) ? 1 : 0;
  }
};

// Classical-fit priors keyed by lithology: capacity, affinity, exponent.
struct ClassicalPrior {
  double q_max = 0.0;
  double k = 0.0;
  double n = 1.0;
};
using PriorMap = std::map<domain::Lithology, ClassicalPrior>;

// Mean free path of H2 at (T, p) from the ideal-gas hard-sphere formula, nm.
inline double mean_free_path_nm(double temperature_k, double pressure_bar) {
  double p_pa = std::max(pressure_bar, 1e-12) * 1e5;
  double d_m = kH2KineticDiameterNm * 1e-9;
  double lambda_m = kBoltzmann * temperature_k /
                    (std::sqrt(2.0) * M_PI * d_m * d_m * p_pa);
  return lambda_m * 1e9;
}

// Per-record, deterministic feature registry across the seven categories.
inline FeatureMatrix engineer(const domain::Dataset& ds, const PriorMap& priors = {}) {
  FeatureMatrix fm;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto add = [&](const std::string& name, Category cat) {
    fm.names.push_back(name);
    fm.category[name] = cat;
  };

  // thermodynamic
  add("pressure_bar", Category::Thermodynamic);
  add("temperature_k", Category::Thermodynamic);
  add("inv_temp_1000", Category::Thermodynamic);
  add("reduced_temperature", Category::Thermodynamic);
  add("reduced_pressure", Category::Thermodynamic);
  add("thermo_beta", Category::Thermodynamic);
  // pore structure
  add("log1p_ssa", Category::PoreStructure);
  add("log1p_pore_volume", Category::PoreStructure);
  add("sqrt_ssa", Category::PoreStructure);
  add("pore_diameter", Category::PoreStructure);
  add("pore_diameter_sq", Category::PoreStructure);
  add("confinement_xi", Category::PoreStructure);
  // surface chemistry
  add("is_clay", Category::SurfaceChemistry);
  add("is_shale", Category::SurfaceChemistry);
  add("is_coal", Category::SurfaceChemistry);
  add("clay_ssa", Category::SurfaceChemistry);
  add("shale_ssa", Category::SurfaceChemistry);
  add("coal_ssa", Category::SurfaceChemistry);
  // classical priors
  const bool with_priors = !priors.empty();
  if (with_priors) {
    add("prior_q_max", Category::ClassicalPrior);
    add("prior_k", Category::ClassicalPrior);
    add("prior_n", Category::ClassicalPrior);
  }
  // interactions
  add("pr_times_tr", Category::Interaction);
  add("ssa_times_t", Category::Interaction);
  add("beta_times_p", Category::Interaction);
  // kinetic
  add("knudsen_proxy", Category::Kinetic);
  // sieving
  add("sieving_ratio", Category::Sieving);

  const Eigen::Index n = static_cast<Eigen::Index>(ds.records.size());
  const Eigen::Index d = static_cast<Eigen::Index>(fm.names.size());
  fm.rows.setConstant(n, d, nan);

  auto set = [&](Eigen::Index i, const std::string& name, double v) {
    fm.rows(i, fm.index_of(name)) = v;
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = ds.records[i];
    double T = r.temperature, p = r.pressure;
    set(i, "pressure_bar", p);
    set(i, "temperature_k", T);
    set(i, "inv_temp_1000", 1000.0 / T);
    set(i, "reduced_temperature", T / kH2CriticalTemperature);
    set(i, "reduced_pressure", p / kH2CriticalPressure);
    set(i, "thermo_beta", 1.0 / (kGasConstant * T));

    if (r.ssa) {
      set(i, "log1p_ssa", std::log1p(*r.ssa));
      set(i, "sqrt_ssa", std::sqrt(*r.ssa));
      set(i, "ssa_times_t", *r.ssa * T);
    }
    if (r.pore_volume) set(i, "log1p_pore_volume", std::log1p(*r.pore_volume));
    if (r.pore_diameter) {
      set(i, "pore_diameter", *r.pore_diameter);
      set(i, "pore_diameter_sq", *r.pore_diameter * *r.pore_diameter);
      set(i, "knudsen_proxy", mean_free_path_nm(T, p) / *r.pore_diameter);
      set(i, "sieving_ratio", *r.pore_diameter / kH2KineticDiameterNm);
    }
    if (r.ssa && r.pore_diameter)
      set(i, "confinement_xi", *r.ssa / *r.pore_diameter);

    double clay = r.lithology == domain::Lithology::Clay ? 1.0 : 0.0;
    double shale = r.lithology == domain::Lithology::Shale ? 1.0 : 0.0;
    double coal = r.lithology == domain::Lithology::Coal ? 1.0 : 0.0;
    set(i, "is_clay", clay);
    set(i, "is_shale", shale);
    set(i, "is_coal", coal);
    if (r.ssa) {
      set(i, "clay_ssa", clay * *r.ssa);
      set(i, "shale_ssa", shale * *r.ssa);
      set(i, "coal_ssa", coal * *r.ssa);
    }

    if (with_priors) {
      auto it = priors.find(r.lithology);
      if (it != priors.end()) {
        set(i, "prior_q_max", it->second.q_max);
        set(i, "prior_k", it->second.k);
        set(i, "prior_n", it->second.n);
      }
    }

    set(i, "pr_times_tr", (p / kH2CriticalPressure) * (T / kH2CriticalTemperature));
    set(i, "beta_times_p", p / (kGasConstant * T));
  }
  fm.refresh_mask();
  return fm;
}

namespace detail {

inline std::vector<double> present_values(const FeatureMatrix& fm, Eigen::Index j) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < fm.n_samples(); ++i)
    if (!fm.mask(i, j)) v.push_back(fm.rows(i, j));
  return v;
}

inline double iqr_of(std::vector<double> v) {
  double q3 = quantile_of(v, 0.75);
  double q1 = quantile_of(v, 0.25);
  return q3 - q1;
}

}  // namespace detail

// Tiered imputation: kNN (<10% missing), global median (10-30%), per-lithology
// median with global fallback (>30%). Features 100% missing are dropped.
inline FeatureMatrix impute(FeatureMatrix fm, const std::vector<domain::Lithology>& groups,
                            std::vector<std::string>* dropped = nullptr) {
  if (static_cast<Eigen::Index>(groups.size()) != fm.n_samples())
    throw invalid_input("impute: group labels size mismatch");
  const Eigen::Index n = fm.n_samples();
  const Eigen::Index d = fm.n_features();

  // complete columns serve as the kNN distance space
  std::vector<Eigen::Index> complete_cols;
  for (Eigen::Index j = 0; j < d; ++j) {
    bool complete = true;
    for (Eigen::Index i = 0; i < n; ++i)
      if (fm.mask(i, j)) complete = false;
    if (complete) complete_cols.push_back(j);
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < d; ++j) {
    auto present = detail::present_values(fm, j);
    if (present.empty()) {
      if (dropped) dropped->push_back(fm.names[j]);
      continue;
    }
    keep.push_back(j);
    double miss_frac = 1.0 - static_cast<double>(present.size()) / n;
    if (miss_frac == 0.0) continue;

    if (miss_frac < 0.10 && !complete_cols.empty()) {
      // kNN: distance-weighted mean over the 5 nearest complete-feature rows
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!fm.mask(i, j)) continue;
        std::vector<std::pair<double, Eigen::Index>> dist;
        for (Eigen::Index r = 0; r < n; ++r) {
          if (r == i || fm.mask(r, j)) continue;
          double s = 0.0;
          for (Eigen::Index c : complete_cols) {
            double delta = fm.rows(i, c) - fm.rows(r, c);
            s += delta * delta;
          }
          dist.push_back({std::sqrt(s), r});
        }
        std::sort(dist.begin(), dist.end());
        if (dist.size() > 5) dist.resize(5);
        double wsum = 0, vsum = 0;
        for (auto [dd, r] : dist) {
          double w = 1.0 / (dd + 1e-9);
          wsum += w;
          vsum += w * fm.rows(r, j);
        }
        fm.rows(i, j) = vsum / wsum;
      }
    } else if (miss_frac <= 0.30) {
      double med = median_of(present);
      for (Eigen::Index i = 0; i < n; ++i)
        if (fm.mask(i, j)) fm.rows(i, j) = med;
    } else {
      double global_med = median_of(present);
      std::map<domain::Lithology, std::vector<double>> by_group;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!fm.mask(i, j)) by_group[groups[i]].push_back(fm.rows(i, j));
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!fm.mask(i, j)) continue;
        auto it = by_group.find(groups[i]);
        fm.rows(i, j) = (it != by_group.end() && !it->second.empty())
                            ? median_of(it->second)
                            : global_med;
      }
    }
  }

  if (keep.size() != static_cast<std::size_t>(d)) {
    FeatureMatrix out;
    out.rows.resize(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
      out.rows.col(jj) = fm.rows.col(keep[jj]);
      out.names.push_back(fm.names[keep[jj]]);
      out.category[fm.names[keep[jj]]] = fm.category[fm.names[keep[jj]]];
    }
    out.refresh_mask();
    return out;
  }
  fm.refresh_mask();
  return fm;
}

struct OutlierReport {
  std::vector<bool> removal;             // union of extreme flags
  std::vector<bool> univariate_extreme;  // per record
  std::vector<bool> multivariate;        // isolation-forest top fraction
  bool iforest_skipped = false;
  int winsorized_cells = 0;
};

// Univariate: |x - median| > 3*(IQR/1.349) flags extreme; deviations past the
// 1.5*IQR fence but inside the 3-sigma equivalent are winsorized to the
// fence. Multivariate: isolation forest, top `contamination` fraction.
inline OutlierReport detect_outliers(FeatureMatrix& fm, double contamination = 0.1,
                                     std::uint64_t seed = 0) {
  const Eigen::Index n = fm.n_samples();
  const Eigen::Index d = fm.n_features();
  if (!fm.rows.allFinite()) throw invalid_input("detect_outliers: matrix contains NaN");

  OutlierReport rep;
  rep.removal.assign(n, false);
  rep.univariate_extreme.assign(n, false);
  rep.multivariate.assign(n, false);

  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> col(fm.rows.col(j).data(), fm.rows.col(j).data() + n);
    double med = median_of(col);
    double iqr = detail::iqr_of(col);
    if (iqr <= 0) continue;  // constant or near-constant column
    double sigma_equiv = iqr / 1.349;
    double extreme_cut = 3.0 * sigma_equiv;
    double fence = 1.5 * iqr;
    for (Eigen::Index i = 0; i < n; ++i) {
      double dev = std::abs(fm.rows(i, j) - med);
      if (dev > extreme_cut) {
        rep.univariate_extreme[i] = true;
      } else if (dev > fence) {
        fm.rows(i, j) = med + (fm.rows(i, j) > med ? fence : -fence);
        rep.winsorized_cells++;
      }
    }
  }

  if (n < 8) {
    rep.iforest_skipped = true;
  } else {
    IsolationForest forest;
    forest.fit(fm.rows, {.n_trees = 100, .max_subsample = 256, .seed = seed});
    auto scores = forest.scores(fm.rows);
    int n_flag = static_cast<int>(std::floor(contamination * static_cast<double>(n)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    for (int i = 0; i < n_flag; ++i) rep.multivariate[order[i]] = true;
  }

  for (Eigen::Index i = 0; i < n; ++i)
    rep.removal[i] = rep.univariate_extreme[i] || rep.multivariate[i];
  return rep;
}

struct ScalerState {
  std::vector<double> median;
  std::vector<double> iqr;  // 1.0 stand-in for zero-IQR features
  std::vector<bool> zero_iqr;
  std::vector<std::string> names;
};

inline std::pair<FeatureMatrix, ScalerState> scale(FeatureMatrix fm) {
  if (!fm.rows.allFinite()) throw invalid_input("scale: matrix contains NaN");
  ScalerState st;
  st.names = fm.names;
  for (Eigen::Index j = 0; j < fm.n_features(); ++j) {
    std::vector<double> col(fm.rows.col(j).data(), fm.rows.col(j).data() + fm.n_samples());
    double med = median_of(col);
    double iqr = detail::iqr_of(col);
    bool zero = iqr <= 0;
    st.median.push_back(med);
    st.iqr.push_back(zero ? 1.0 : iqr);
    st.zero_iqr.push_back(zero);
    fm.rows.col(j) = (fm.rows.col(j).array() - med) / st.iqr.back();
  }
  return {std::move(fm), std::move(st)};
}

inline FeatureMatrix apply_scale(const ScalerState& st, FeatureMatrix fm) {
  if (st.median.size() != static_cast<std::size_t>(fm.n_features()))
    throw invalid_input("apply_scale: feature count mismatch");
  for (Eigen::Index j = 0; j < fm.n_features(); ++j)
    fm.rows.col(j) = (fm.rows.col(j).array() - st.median[j]) / st.iqr[j];
  return fm;
}

inline FeatureMatrix inverse_scale(const ScalerState& st, FeatureMatrix fm) {
  if (st.median.size() != static_cast<std::size_t>(fm.n_features()))
    throw invalid_input("inverse_scale: feature count mismatch");
  for (Eigen::Index j = 0; j < fm.n_features(); ++j)
    fm.rows.col(j) = fm.rows.col(j).array() * st.iqr[j] + st.median[j];
  return fm;
}

struct SelectionReport {
  std::vector<std::string> feature;  // order mirrors the input columns
  std::vector<double> pearson_abs;
  std::vector<double> mutual_information;
  std::vector<double> tree_importance;
  std::vector<double> f_statistic;
  std::vector<int> votes;  // 0..4
  std::vector<std::string> selected;  // ordered top-k
};

namespace detail {

// Equal-frequency 10-bin plug-in mutual information estimate.
inline double mutual_information_binned(const std::vector<double>& x,
                                        const std::vector<double>& y, int bins = 10) {
  const std::size_t n = x.size();
  auto bin_edges = [&](const std::vector<double>& v) {
    std::vector<double> e;
    for (int b = 1; b < bins; ++b) e.push_back(quantile_of(v, static_cast<double>(b) / bins));
    return e;
  };
  auto assign = [&](const std::vector<double>& v, const std::vector<double>& edges) {
    std::vector<int> idx(n);
    for (std::size_t i = 0; i < n; ++i)
      idx[i] = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v[i]) - edges.begin());
    return idx;
  };
  auto bx = assign(x, bin_edges(x));
  auto by = assign(y, bin_edges(y));
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> px, py;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{bx[i], by[i]}] += 1.0 / n;
    px[bx[i]] += 1.0 / n;
    py[by[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [key, pij] : joint)
    mi += pij * std::log(pij / (px[key.first] * py[key.second]));
  return std::max(mi, 0.0);
}

inline std::vector<int> topk_of(const std::vector<double>& score, int k,
                                const std::vector<std::string>& names) {
  std::vector<int> idx(score.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return names[a] < names[b];
  });
  if (static_cast<int>(idx.size()) > k) idx.resize(k);
  return idx;
}

}  // namespace detail

// Four rankings (|Pearson r|, binned mutual information, random-forest MDI,
// univariate F-statistic); each votes for its top-k; final ranking by votes
// then mean rank, ties broken by name.
inline SelectionReport select(const FeatureMatrix& fm, const Eigen::VectorXd& target, int k = 25,
                              std::uint64_t seed = 0) {
  const Eigen::Index n = fm.n_samples();
  const Eigen::Index d = fm.n_features();
  if (n <= 10) throw invalid_input("select: need more than 10 samples");
  if (target.size() != n) throw invalid_input("select: target size mismatch");
  {
    double tmin = target.minCoeff(), tmax = target.maxCoeff();
    if (tmin == tmax) throw invalid_input("select: constant target");
  }

  SelectionReport rep;
  rep.feature = fm.names;
  std::vector<double> y(target.data(), target.data() + n);

  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> x(fm.rows.col(j).data(), fm.rows.col(j).data() + n);
    double r = pearson_corr(x, y);
    double r_abs = std::isnan(r) ? 0.0 : std::abs(r);
    rep.pearson_abs.push_back(r_abs);
    rep.mutual_information.push_back(detail::mutual_information_binned(x, y));
    double r2 = r_abs * r_abs;
    double f = r2 >= 1.0 ? std::numeric_limits<double>::infinity()
                         : r2 * (n - 2) / (1.0 - r2);
    rep.f_statistic.push_back(f);
  }

  RandomForestRegressor rf;
  rf.fit(fm.rows, target, {.n_trees = 100, .max_depth = 8, .min_leaf = 2, .seed = seed});
  rep.tree_importance = rf.importance();

  const int kk = std::min<int>(k, static_cast<int>(d));
  rep.votes.assign(d, 0);
  std::vector<double> rank_sum(d, 0.0);
  for (const auto* score :
       {&rep.pearson_abs, &rep.mutual_information, &rep.tree_importance, &rep.f_statistic}) {
    auto top = detail::topk_of(*score, kk, fm.names);
    for (int i : top) rep.votes[i]++;
    // mean rank over all features for tie-breaking
    auto full = detail::topk_of(*score, static_cast<int>(d), fm.names);
    for (std::size_t pos = 0; pos < full.size(); ++pos)
      rank_sum[full[pos]] += static_cast<double>(pos);
  }

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (rep.votes[a] != rep.votes[b]) return rep.votes[a] > rep.votes[b];
    if (rank_sum[a] != rank_sum[b]) return rank_sum[a] < rank_sum[b];
    return fm.names[a] < fm.names[b];
  });
  for (int i = 0; i < kk; ++i) rep.selected.push_back(fm.names[order[i]]);
  return rep;
}

// Per-lithology split with test proportions within one sample of the global
// fraction. Lithologies with a single sample go to train.
inline std::pair<std::vector<int>, std::vector<int>> stratified_split(
    const std::vector<domain::Lithology>& groups, double test_fraction = 0.2,
    std::uint64_t seed = 0) {
  std::map<domain::Lithology, std::vector<int>> by_group;
  for (std::size_t i = 0; i < groups.size(); ++i)
    by_group[groups[i]].push_back(static_cast<int>(i));

  std::vector<int> train, test;
  for (auto& [lith, idx] : by_group) {
    if (idx.size() == 1) {
      train.push_back(idx[0]);
      continue;
    }
    auto rng = make_rng(split_seed(seed, 0x7370 + static_cast<int>(lith)));
    std::shuffle(idx.begin(), idx.end(), rng);
    int n_test = static_cast<int>(std::round(test_fraction * static_cast<double>(idx.size())));
    n_test = std::min<int>(n_test, static_cast<int>(idx.size()) - 1);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (static_cast<int>(i) < n_test ? test : train).push_back(idx[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace sorbkit::feat
