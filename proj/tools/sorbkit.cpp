// sorbkit command-line front end: gen-data | fit | thermo | train | explain
// | report. Each stage reads prior-stage artifacts, writes JSON/CSV outputs
// plus a manifest (config hash, seed, version), and is deterministic for a
// fixed config and seed.

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sorbkit/domain.hpp"
#include "sorbkit/evaluation.hpp"
#include "sorbkit/features.hpp"
#include "sorbkit/fitting.hpp"
#include "sorbkit/interpret.hpp"
#include "sorbkit/isotherms.hpp"
#include "sorbkit/pinn.hpp"
#include "sorbkit/quality.hpp"
#include "sorbkit/synth.hpp"
#include "sorbkit/thermo.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sorbkit;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json_file(const std::string& path) {
  return json::parse(slurp(path));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot write " + path);
  out << text;
}

void write_json_file(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

struct StageContext {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool force = false;
  json config = json::object();
  std::string config_hash;

  void prepare(const std::string& stage) {
    if (!config_path.empty()) config = load_json_file(config_path);
    if (!seed_given && config.contains("seed")) seed = config["seed"].get<std::uint64_t>();
    json hashed = config.contains(stage) ? config[stage] : json::object();
    hashed["seed"] = seed;
    config_hash = hex64(fnv1a(hashed.dump()));
    fs::create_directories(out_dir);
  }

  json stage_config(const std::string& stage) const {
    return config.contains(stage) ? config[stage] : json::object();
  }

  std::string path(const std::string& name) const {
    return (fs::path(out_dir) / name).string();
  }

  void write_manifest(const std::string& stage, const std::map<std::string, std::string>& files) {
    json m;
    m["stage"] = stage;
    m["version"] = kVersion;
    m["config_hash"] = config_hash;
    m["seed"] = seed;
    json artifacts = json::object();
    for (const auto& [name, p] : files) artifacts[name] = hex64(fnv1a(slurp(p)));
    m["artifacts"] = artifacts;
    write_json_file(path("manifest_" + stage + ".json"), m);
  }

  // Verifies that `file` (relative to out_dir) still matches the hash the
  // producing stage recorded. Missing manifests (external inputs) pass.
  void check_input(const std::string& producer_stage, const std::string& file) const {
    std::string mpath = path("manifest_" + producer_stage + ".json");
    if (!fs::exists(mpath)) return;
    json m = load_json_file(mpath);
    if (!m.contains("artifacts") || !m["artifacts"].contains(file)) return;
    std::string expect = m["artifacts"][file].get<std::string>();
    std::string got = hex64(fnv1a(slurp(path(file))));
    if (expect != got) {
      if (force) {
        std::cerr << "warning: " << file << " does not match manifest_" << producer_stage
                  << ".json; continuing (--force)\n";
        return;
      }
      throw invalid_input(file + " does not match the hash in manifest_" + producer_stage +
                          ".json (rerun the producing stage or pass --force)");
    }
  }
};

void add_common_flags(CLI::App* cmd, StageContext& ctx) {
  cmd->add_option("--config", ctx.config_path, "JSON config file");
  cmd->add_option("--seed", ctx.seed, "global random seed")
      ->each([&ctx](const std::string&) { ctx.seed_given = true; });
  cmd->add_option("--out", ctx.out_dir, "output directory");
  cmd->add_flag("--force", ctx.force, "ignore manifest hash mismatches");
}

double get_or(const json& j, const std::string& key, double def) {
  return j.contains(key) ? j[key].get<double>() : def;
}
int get_or_int(const json& j, const std::string& key, int def) {
  return j.contains(key) ? j[key].get<int>() : def;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(StageContext& ctx) {
  ctx.prepare("gen");
  json cfg = ctx.stage_config("gen");

  synth::GeneratorSpec spec;
  spec.seed = ctx.seed;
  spec.n_samples = get_or_int(cfg, "n_samples", 15);
  if (cfg.contains("temperatures"))
    spec.temperatures = cfg["temperatures"].get<std::vector<double>>();
  if (cfg.contains("pressures")) {
    spec.pressures = cfg["pressures"].get<std::vector<double>>();
  } else if (cfg.contains("pressure_grid")) {
    const auto& g = cfg["pressure_grid"];
    spec.pressures = synth::GeneratorSpec::log_grid(g["lo"].get<double>(), g["hi"].get<double>(),
                                                    g["n"].get<int>());
  }
  if (cfg.contains("noise")) {
    spec.noise.multiplicative_sigma = get_or(cfg["noise"], "multiplicative_sigma", 0.0);
    spec.noise.heteroscedastic_slope = get_or(cfg["noise"], "heteroscedastic_slope", 0.0);
  }

  auto [ds, truth] = synth::generate(spec);
  domain::save_csv(ds, ctx.path("data.csv"));

  json tj;
  tj["config_hash"] = ctx.config_hash;
  tj["t_ref"] = truth.t_ref;
  tj["noise"] = {{"multiplicative_sigma", truth.noise.multiplicative_sigma},
                 {"heteroscedastic_slope", truth.noise.heteroscedastic_slope}};
  json samples = json::array();
  for (const auto& s : truth.samples) {
    json e;
    e["sample_id"] = s.sample_id;
    e["lithology"] = domain::lithology_name(s.lithology);
    e["model"] = iso::name(s.kind);
    e["theta_ref"] = s.theta_ref;
    e["dH"] = s.dH;
    samples.push_back(e);
  }
  tj["samples"] = samples;
  write_json_file(ctx.path("truth.json"), tj);

  ctx.write_manifest("gen", {{"data.csv", ctx.path("data.csv")},
                             {"truth.json", ctx.path("truth.json")}});
  std::cout << "gen-data: " << ds.records.size() << " records, "
            << truth.samples.size() << " samples -> " << ctx.path("data.csv") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

json fit_result_json(const fit::FitResult& r) {
  json e;
  e["model"] = iso::name(r.kind);
  if (r.skipped) {
    e["skipped"] = true;
    e["skip_reason"] = r.skip_reason;
    return e;
  }
  json params = json::object();
  auto names = iso::param_names(r.kind);
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = r.theta[i];
  e["parameters"] = params;
  if (!r.param_sigma.empty()) {
    json sig = json::object();
    for (std::size_t i = 0; i < names.size(); ++i)
      sig[names[i]] = std::isfinite(r.param_sigma[i]) ? json(r.param_sigma[i]) : json("inf");
    e["parameter_sigma"] = sig;
  }
  e["sse"] = r.sse;
  e["r2"] = r.r2;
  e["rmse"] = r.rmse;
  e["physics_score"] = r.physics_score;
  e["n_points"] = r.n_points;
  e["converged"] = r.converged;
  return e;
}

int cmd_fit(StageContext& ctx) {
  ctx.prepare("fit");
  json cfg = ctx.stage_config("fit");
  std::string data_path =
      cfg.contains("data") ? cfg["data"].get<std::string>() : ctx.path("data.csv");
  if (fs::path(data_path).parent_path() == fs::path(ctx.out_dir))
    ctx.check_input("gen", "data.csv");

  auto ds = domain::load_csv(data_path);
  if (ds.records.empty()) throw invalid_input("fit: no usable records in " + data_path);

  fit::FitConfig fcfg;
  fcfg.seed = ctx.seed;
  fcfg.de_generations = get_or_int(cfg, "de_generations", 150);
  fcfg.de_population = get_or_int(cfg, "de_population", 30);

  // per sample and temperature: one isotherm fit ranking each
  std::map<std::string, std::map<double, std::vector<fit::DataPoint>>> grouped;
  for (const auto& r : ds.records) {
    if (!r.valid_uptake) continue;
    grouped[r.sample_id][r.temperature].push_back({r.pressure, r.uptake, r.temperature});
  }

  json out;
  out["config_hash"] = ctx.config_hash;
  json fits = json::array();
  for (const auto& [sid, by_t] : grouped) {
    for (const auto& [T, points] : by_t) {
      if (points.size() < 4) continue;
      auto ranked = fit::fit_all(points, fcfg);
      json entry;
      entry["sample_id"] = sid;
      entry["temperature"] = T;
      entry["n_points"] = points.size();
      json models = json::array();
      for (const auto& r : ranked) models.push_back(fit_result_json(r));
      entry["models"] = models;
      fits.push_back(entry);
    }
  }
  if (fits.empty()) throw invalid_input("fit: no sample had enough points to fit");
  out["fits"] = fits;
  write_json_file(ctx.path("fits.json"), out);
  ctx.write_manifest("fit", {{"fits.json", ctx.path("fits.json")}});
  std::cout << "fit: " << fits.size() << " sample/temperature fits -> " << ctx.path("fits.json")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// thermo

int cmd_thermo(StageContext& ctx) {
  ctx.prepare("thermo");
  json cfg = ctx.stage_config("thermo");
  std::string data_path =
      cfg.contains("data") ? cfg["data"].get<std::string>() : ctx.path("data.csv");
  if (fs::path(data_path).parent_path() == fs::path(ctx.out_dir))
    ctx.check_input("gen", "data.csv");

  auto ds = domain::load_csv(data_path);
  fit::FitConfig fcfg;
  fcfg.seed = ctx.seed;
  fcfg.de_generations = get_or_int(cfg, "de_generations", 150);

  std::map<std::string, std::map<double, std::vector<fit::DataPoint>>> grouped;
  for (const auto& r : ds.records) {
    if (!r.valid_uptake) continue;
    grouped[r.sample_id][r.temperature].push_back({r.pressure, r.uptake, r.temperature});
  }

  json out;
  out["config_hash"] = ctx.config_hash;
  json entries = json::array();
  for (const auto& [sid, by_t] : grouped) {
    if (by_t.size() < 2) continue;
    std::map<double, fit::FitResult> langmuir_by_t;
    std::vector<std::pair<double, double>> k_by_t;
    bool ok = true;
    for (const auto& [T, points] : by_t) {
      if (points.size() < 4) { ok = false; break; }
      try {
        auto fr = fit::fit_one(iso::Kind::Langmuir, points, fcfg);
        langmuir_by_t[T] = fr;
        k_by_t.push_back({T, fr.theta[1]});
      } catch (const std::exception&) {
        ok = false;
        break;
      }
    }
    if (!ok || langmuir_by_t.size() < 2) continue;

    json e;
    e["sample_id"] = sid;
    try {
      auto vh = thermo::vant_hoff(k_by_t);
      e["vant_hoff"] = {{"dH", vh.dH}, {"dS", vh.dS}, {"K0", vh.K0}, {"r2", vh.r2}};
      json dg = json::object();
      for (auto [T, g] : vh.dG_at) dg[std::to_string(T)] = g;
      e["dG"] = dg;
    } catch (const std::exception& ex) {
      e["vant_hoff_error"] = ex.what();
    }
    try {
      double qmax_min = std::numeric_limits<double>::infinity();
      for (const auto& [T, fr] : langmuir_by_t) qmax_min = std::min(qmax_min, fr.theta[0]);
      std::vector<double> loadings;
      for (double f = 0.1; f < 0.85; f += 0.1) loadings.push_back(f * qmax_min);
      auto curve = thermo::isosteric_heat(langmuir_by_t, loadings);
      e["isosteric"] = {{"loadings", curve.loadings}, {"qst", curve.qst}};
    } catch (const std::exception& ex) {
      e["isosteric_error"] = ex.what();
    }
    entries.push_back(e);
  }
  out["samples"] = entries;
  write_json_file(ctx.path("thermo.json"), out);
  ctx.write_manifest("thermo", {{"thermo.json", ctx.path("thermo.json")}});
  std::cout << "thermo: " << entries.size() << " samples -> " << ctx.path("thermo.json") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// shared feature pipeline for train / explain / report

struct Prepared {
  domain::Dataset ds;            // valid records only
  feat::FeatureMatrix fm;        // imputed, outliers removed, unscaled
  feat::FeatureMatrix fm_up;     // same rows at pressure*1.05
  std::vector<domain::Lithology> groups;
  Eigen::VectorXd y;
  pinn::AuxChannels aux;
};

Prepared prepare_features(const domain::Dataset& raw, double contamination,
                          std::uint64_t seed) {
  Prepared out;
  for (const auto& r : raw.records)
    if (r.valid_uptake) out.ds.records.push_back(r);
  if (out.ds.records.size() < 20)
    throw invalid_input("need at least 20 valid records for training");

  auto engineer_all = [&](const domain::Dataset& d) {
    feat::FeatureMatrix fm = feat::engineer(d);
    std::vector<domain::Lithology> groups;
    for (const auto& r : d.records) groups.push_back(r.lithology);
    return std::pair{feat::impute(std::move(fm), groups), groups};
  };

  auto [fm, groups] = engineer_all(out.ds);
  auto outliers = feat::detect_outliers(fm, contamination, seed);

  domain::Dataset kept;
  for (std::size_t i = 0; i < out.ds.records.size(); ++i)
    if (!outliers.removal[i]) kept.records.push_back(out.ds.records[i]);
  out.ds = std::move(kept);

  auto [fm2, groups2] = engineer_all(out.ds);
  out.fm = std::move(fm2);
  out.groups = std::move(groups2);

  domain::Dataset up = out.ds;
  for (auto& r : up.records) r.pressure *= 1.05;
  out.fm_up = engineer_all(up).first;
  if (out.fm_up.names != out.fm.names)
    throw invalid_input("feature registry mismatch between paired pressure passes");

  const Eigen::Index n = out.fm.n_samples();
  out.y.resize(n);
  out.aux.pressure.resize(n);
  out.aux.temperature.resize(n);
  out.aux.pore_diameter_nm.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = out.ds.records[i];
    out.y(i) = r.uptake;
    out.aux.pressure(i) = r.pressure;
    out.aux.temperature(i) = r.temperature;
    out.aux.pore_diameter_nm(i) = r.pore_diameter.value_or(1e3);
  }
  // same material at the same pressure, different temperature
  std::map<std::string, std::map<double, std::vector<int>>> by_sample_p;
  for (Eigen::Index i = 0; i < n; ++i)
    by_sample_p[out.ds.records[i].sample_id][out.ds.records[i].pressure].push_back(
        static_cast<int>(i));
  for (const auto& [sid, by_p] : by_sample_p)
    for (const auto& [p, rows] : by_p)
      for (std::size_t a = 0; a + 1 < rows.size(); ++a)
        if (out.ds.records[rows[a]].temperature != out.ds.records[rows[a + 1]].temperature)
          out.aux.pairs.emplace_back(rows[a], rows[a + 1]);
  return out;
}

// Reorders feature columns by name to match a stored registry; absent
// features scale to zero (their stored median).
Eigen::MatrixXd align_columns(const feat::FeatureMatrix& fm, const feat::ScalerState& st) {
  Eigen::MatrixXd x(fm.n_samples(), static_cast<Eigen::Index>(st.names.size()));
  for (std::size_t j = 0; j < st.names.size(); ++j) {
    int src = fm.index_of(st.names[j]);
    if (src >= 0)
      x.col(static_cast<Eigen::Index>(j)) = fm.rows.col(src);
    else
      x.col(static_cast<Eigen::Index>(j)).setConstant(st.median[j]);
  }
  return x;
}

Eigen::MatrixXd apply_scaler(const feat::ScalerState& st, Eigen::MatrixXd x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    x.col(j) = (x.col(j).array() - st.median[j]) / st.iqr[j];
  return x;
}

pinn::PinnConfig parse_pinn_config(const json& cfg, std::uint64_t seed) {
  pinn::PinnConfig pc;
  pc.seed = seed;
  if (cfg.contains("widths")) {
    if (cfg["widths"].is_string()) {
      std::string w = cfg["widths"].get<std::string>();
      if (w == "baseline") pc.widths = pinn::PinnConfig::baseline_widths();
      else if (w == "moderate") pc.widths = pinn::PinnConfig::moderate_widths();
      else if (w == "high") pc.widths = pinn::PinnConfig::high_widths();
      else throw invalid_input("unknown widths preset: " + w);
    } else {
      pc.widths = cfg["widths"].get<std::vector<int>>();
    }
  }
  pc.physics_weight = get_or(cfg, "physics_weight", pc.physics_weight);
  pc.max_epochs = get_or_int(cfg, "max_epochs", pc.max_epochs);
  pc.patience = get_or_int(cfg, "patience", pc.patience);
  pc.warmup_epochs = get_or_int(cfg, "warmup_epochs", pc.warmup_epochs);
  pc.dropout_p = get_or(cfg, "dropout_p", pc.dropout_p);
  pc.batch_size = get_or_int(cfg, "batch_size", pc.batch_size);
  pc.lr_max = get_or(cfg, "lr_max", pc.lr_max);
  pc.lr_min = get_or(cfg, "lr_min", pc.lr_min);
  pc.weight_decay = get_or(cfg, "weight_decay", pc.weight_decay);
  pc.grad_accumulation = get_or_int(cfg, "grad_accumulation", pc.grad_accumulation);
  if (cfg.contains("norm")) {
    std::string nrm = cfg["norm"].get<std::string>();
    if (nrm == "layer") pc.norm = nn::Norm::Layer;
    else if (nrm == "batch") pc.norm = nn::Norm::Batch;
    else if (nrm == "none") pc.norm = nn::Norm::None;
    else throw invalid_input("unknown norm: " + nrm);
  }
  return pc;
}

void save_checkpoint(StageContext& ctx, pinn::Network& net, const feat::ScalerState& st,
                     const json& extra) {
  auto params = net.params();
  json header;
  header["config_hash"] = ctx.config_hash;
  header["version"] = kVersion;
  header["seed"] = net.config().seed;
  header["n_features"] = net.n_features();
  header["widths"] = net.config().widths;
  header["dropout_p"] = net.config().dropout_p;
  header["norm"] = net.config().norm == nn::Norm::Layer
                       ? "layer"
                       : (net.config().norm == nn::Norm::Batch ? "batch" : "none");
  json shapes = json::array();
  for (nn::Param* p : params)
    shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  header["shapes"] = shapes;
  header["scaler"] = {{"names", st.names}, {"median", st.median}, {"iqr", st.iqr}};
  header["weights_file"] = "model.bin";
  for (auto& [k, v] : extra.items()) header[k] = v;
  write_json_file(ctx.path("model.json"), header);

  Eigen::VectorXd flat = nn::flatten_values(params);
  std::ofstream bin(ctx.path("model.bin"), std::ios::binary);
  bin.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

struct LoadedModel {
  pinn::Network net;
  feat::ScalerState scaler;
  json header;
};

LoadedModel load_checkpoint(StageContext& ctx) {
  ctx.check_input("train", "model.json");
  ctx.check_input("train", "model.bin");
  json header = load_json_file(ctx.path("model.json"));
  pinn::PinnConfig pc;
  pc.widths = header["widths"].get<std::vector<int>>();
  pc.dropout_p = header["dropout_p"].get<double>();
  std::string nrm = header["norm"].get<std::string>();
  pc.norm = nrm == "layer" ? nn::Norm::Layer : (nrm == "batch" ? nn::Norm::Batch : nn::Norm::None);
  pc.seed = header["seed"].get<std::uint64_t>();

  LoadedModel lm{pinn::Network(pc, header["n_features"].get<int>()), {}, header};
  lm.scaler.names = header["scaler"]["names"].get<std::vector<std::string>>();
  lm.scaler.median = header["scaler"]["median"].get<std::vector<double>>();
  lm.scaler.iqr = header["scaler"]["iqr"].get<std::vector<double>>();

  auto params = lm.net.params();
  Eigen::Index total = 0;
  for (nn::Param* p : params) total += p->value.size();
  std::string raw = slurp(ctx.path("model.bin"));
  if (raw.size() != static_cast<std::size_t>(total) * sizeof(double))
    throw invalid_input("model.bin size does not match the declared shapes");
  Eigen::VectorXd flat(total);
  std::memcpy(flat.data(), raw.data(), raw.size());
  nn::unflatten_values(params, flat);
  return lm;
}

int cmd_train(StageContext& ctx) {
  ctx.prepare("train");
  json cfg = ctx.stage_config("train");
  std::string data_path =
      cfg.contains("data") ? cfg["data"].get<std::string>() : ctx.path("data.csv");
  if (fs::path(data_path).parent_path() == fs::path(ctx.out_dir))
    ctx.check_input("gen", "data.csv");

  auto raw = domain::load_csv(data_path);
  double contamination = get_or(cfg, "contamination", 0.05);
  Prepared prep = prepare_features(raw, contamination, ctx.seed);

  auto [train_idx, test_idx] =
      feat::stratified_split(prep.groups, get_or(cfg, "test_fraction", 0.2), ctx.seed);
  if (test_idx.empty()) throw invalid_input("train: validation split is empty");

  // scaler fitted on training rows only
  feat::FeatureMatrix train_fm;
  train_fm.names = prep.fm.names;
  train_fm.rows.resize(static_cast<Eigen::Index>(train_idx.size()), prep.fm.n_features());
  for (std::size_t i = 0; i < train_idx.size(); ++i)
    train_fm.rows.row(static_cast<Eigen::Index>(i)) = prep.fm.rows.row(train_idx[i]);
  train_fm.refresh_mask();
  feat::ScalerState st = feat::scale(std::move(train_fm)).second;

  Eigen::MatrixXd x_all = apply_scaler(st, prep.fm.rows);
  Eigen::MatrixXd x_up_all = apply_scaler(st, prep.fm_up.rows);

  auto make_batch = [&](const std::vector<int>& idx, bool with_up) {
    pinn::Batch b;
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    b.x.resize(m, x_all.cols());
    b.y.resize(m);
    if (with_up) b.x_pressure_up.resize(m, x_all.cols());
    b.aux.pressure.resize(m);
    b.aux.temperature.resize(m);
    b.aux.pore_diameter_nm.resize(m);
    std::vector<int> where(x_all.rows(), -1);
    for (Eigen::Index i = 0; i < m; ++i) {
      int src = idx[i];
      where[src] = static_cast<int>(i);
      b.x.row(i) = x_all.row(src);
      b.y(i) = prep.y(src);
      if (with_up) b.x_pressure_up.row(i) = x_up_all.row(src);
      b.aux.pressure(i) = prep.aux.pressure(src);
      b.aux.temperature(i) = prep.aux.temperature(src);
      b.aux.pore_diameter_nm(i) = prep.aux.pore_diameter_nm(src);
    }
    for (auto [a, c] : prep.aux.pairs)
      if (where[a] >= 0 && where[c] >= 0) b.aux.pairs.emplace_back(where[a], where[c]);
    return b;
  };
  pinn::Batch train_batch = make_batch(train_idx, true);
  pinn::Batch val_batch = make_batch(test_idx, false);

  pinn::PinnConfig pc = parse_pinn_config(cfg, ctx.seed);
  pinn::Network net(pc, static_cast<int>(x_all.cols()));
  auto res = pinn::Trainer::train(net, train_batch, val_batch);

  // history CSV
  {
    std::ostringstream hs;
    hs << "epoch,data_loss,positivity,saturation,monotonicity,vant_hoff,sieving,"
          "lambda_effective,total,val_data_loss,lr\n";
    char buf[512];
    for (const auto& e : res.history) {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                    e.epoch, e.train.data_loss, e.train.physics_positivity,
                    e.train.physics_saturation, e.train.physics_monotonicity,
                    e.train.physics_vant_hoff, e.train.physics_sieving,
                    e.train.lambda_effective, e.train.total, e.val_data_loss, e.lr);
      hs << buf;
    }
    write_text(ctx.path("history.csv"), hs.str());
  }

  Eigen::VectorXd val_pred = net.predict(val_batch.x);
  std::vector<double> yt(val_batch.y.data(), val_batch.y.data() + val_batch.y.size());
  std::vector<double> yp(val_pred.data(), val_pred.data() + val_pred.size());
  auto ms = eval::metrics(yt, yp);

  json extra;
  extra["train_rows"] = train_idx.size();
  extra["val_rows"] = test_idx.size();
  extra["parameter_count"] = net.parameter_count();
  extra["best_epoch"] = res.best_epoch;
  extra["best_val_loss"] = res.best_val_loss;
  extra["epochs_run"] = res.history.size();
  extra["nan_recoveries"] = res.nan_recoveries;
  extra["val_metrics"] = {{"r2", ms.r2}, {"rmse", ms.rmse}, {"mae", ms.mae}};
  save_checkpoint(ctx, net, st, extra);

  ctx.write_manifest("train", {{"model.json", ctx.path("model.json")},
                               {"model.bin", ctx.path("model.bin")},
                               {"history.csv", ctx.path("history.csv")}});
  std::cout << "train: " << res.history.size() << " epochs, val r2 " << ms.r2 << " -> "
            << ctx.path("model.json") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explain

int cmd_explain(StageContext& ctx) {
  ctx.prepare("explain");
  json cfg = ctx.stage_config("explain");
  std::string data_path =
      cfg.contains("data") ? cfg["data"].get<std::string>() : ctx.path("data.csv");

  LoadedModel lm = load_checkpoint(ctx);
  auto raw = domain::load_csv(data_path);
  Prepared prep = prepare_features(raw, get_or(cfg, "contamination", 0.05), ctx.seed);
  Eigen::MatrixXd x = apply_scaler(lm.scaler, align_columns(prep.fm, lm.scaler));

  interp::Model model = [&](const Eigen::MatrixXd& rows) { return lm.net.predict(rows); };

  const int n_explain = std::min<int>(get_or_int(cfg, "n_explain", 16),
                                      static_cast<int>(x.rows()));
  Eigen::MatrixXd x_explain = x.topRows(n_explain);
  auto shap = interp::kernel_shap(model, x_explain, x, get_or_int(cfg, "n_coalitions", 1024),
                                  ctx.seed);

  json out;
  out["config_hash"] = ctx.config_hash;
  out["shap"] = {{"base_value", shap.base_value},
                 {"features", lm.scaler.names},
                 {"global_importance", shap.global_importance},
                 {"ridge_fallback", shap.used_ridge_fallback}};
  json shap_rows = json::array();
  for (Eigen::Index i = 0; i < shap.values.rows(); ++i) {
    std::vector<double> row(shap.values.cols());
    for (Eigen::Index j = 0; j < shap.values.cols(); ++j) row[j] = shap.values(i, j);
    shap_rows.push_back(row);
  }
  out["shap"]["values"] = shap_rows;

  // ALE curves for the most important features
  std::vector<int> order(lm.scaler.names.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (shap.global_importance[a] != shap.global_importance[b])
      return shap.global_importance[a] > shap.global_importance[b];
    return lm.scaler.names[a] < lm.scaler.names[b];
  });
  int n_ale = std::min<int>(get_or_int(cfg, "n_ale", 5), static_cast<int>(order.size()));
  json ale_list = json::array();
  std::ostringstream ale_csv;
  ale_csv << "feature,bin_low,bin_high,effect,count\n";
  for (int r = 0; r < n_ale; ++r) {
    int f = order[r];
    interp::AleCurve curve;
    try {
      curve = interp::ale(model, x, f, get_or_int(cfg, "ale_bins", 10), lm.scaler.names[f]);
    } catch (const invalid_input&) {
      continue;  // constant feature
    }
    ale_list.push_back({{"feature", curve.feature},
                        {"effect_strength", curve.effect_strength},
                        {"monotonicity", curve.monotonicity}});
    char buf[256];
    for (std::size_t b = 0; b + 1 < curve.bin_edges.size(); ++b) {
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%zu\n", curve.feature.c_str(),
                    curve.bin_edges[b], curve.bin_edges[b + 1], curve.effects[b],
                    curve.bin_counts[b]);
      ale_csv << buf;
    }
  }
  out["ale"] = ale_list;
  write_text(ctx.path("ale.csv"), ale_csv.str());

  // pairwise interactions among the top features
  json h_list = json::array();
  int n_h = std::min<int>(get_or_int(cfg, "n_h_features", 4), static_cast<int>(order.size()));
  for (int a = 0; a < n_h; ++a) {
    for (int b = a + 1; b < n_h; ++b) {
      try {
        double h2 = interp::h_statistic(model, x, order[a], order[b],
                                        get_or_int(cfg, "h_grid", 20), ctx.seed);
        h_list.push_back({{"pair", {lm.scaler.names[order[a]], lm.scaler.names[order[b]]}},
                          {"h2", h2},
                          {"band", interp::interaction_band_name(interp::classify_interaction(h2))}});
      } catch (const invalid_input&) {
      }
    }
  }
  out["h_statistic"] = h_list;

  write_json_file(ctx.path("explain.json"), out);
  ctx.write_manifest("explain", {{"explain.json", ctx.path("explain.json")},
                                 {"ale.csv", ctx.path("ale.csv")}});
  std::cout << "explain: " << n_explain << " samples attributed -> " << ctx.path("explain.json")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(StageContext& ctx) {
  ctx.prepare("report");
  json cfg = ctx.stage_config("report");
  std::string data_path =
      cfg.contains("data") ? cfg["data"].get<std::string>() : ctx.path("data.csv");

  LoadedModel lm = load_checkpoint(ctx);
  auto raw = domain::load_csv(data_path);
  Prepared prep = prepare_features(raw, get_or(cfg, "contamination", 0.05), ctx.seed);
  Eigen::MatrixXd x = apply_scaler(lm.scaler, align_columns(prep.fm, lm.scaler));

  auto up = pinn::predict_with_uncertainty(lm.net, x, get_or_int(cfg, "n_mc", 100), 1.96,
                                           ctx.seed);
  std::vector<double> yt(prep.y.data(), prep.y.data() + prep.y.size());
  std::vector<double> yp(up.mean.data(), up.mean.data() + up.mean.size());
  auto ms = eval::metrics(yt, yp);

  json out;
  out["config_hash"] = ctx.config_hash;
  out["metrics"] = {{"r2", ms.r2},     {"rmse", ms.rmse},       {"mae", ms.mae},
                    {"mape", ms.mape}, {"pearson", ms.pearson}, {"spearman", ms.spearman}};

  std::vector<double> resid(yt.size());
  std::vector<double> sigma(yt.size());
  for (std::size_t i = 0; i < yt.size(); ++i) {
    resid[i] = yt[i] - yp[i];
    double va = up.sigma_aleatoric(static_cast<Eigen::Index>(i));
    double ve = up.sigma_epistemic(static_cast<Eigen::Index>(i));
    sigma[i] = std::sqrt(va * va + ve * ve);
  }
  if (resid.size() >= 8) {
    Eigen::MatrixXd regressors(resid.size(), 2);
    for (std::size_t i = 0; i < resid.size(); ++i) {
      regressors(static_cast<Eigen::Index>(i), 0) = prep.aux.pressure(static_cast<Eigen::Index>(i));
      regressors(static_cast<Eigen::Index>(i), 1) =
          prep.aux.temperature(static_cast<Eigen::Index>(i));
    }
    auto rt = eval::residual_tests(resid, &regressors);
    out["residual_tests"] = {{"jarque_bera_p", rt.jarque_bera_p},
                             {"lilliefors_p", rt.lilliefors_p},
                             {"breusch_pagan_p", rt.breusch_pagan_p}};
  }

  auto cal = eval::calibration(yt, yp, sigma);
  out["calibration"] = {{"nominal", cal.nominal},
                        {"coverage", cal.coverage},
                        {"sigma_error_spearman", cal.sigma_error_spearman}};

  // physics sweep at median material properties per lithology
  std::map<domain::Lithology, std::size_t> counts = prep.ds.counts_by_lithology();
  domain::Lithology lith = domain::Lithology::Clay;
  std::size_t best_count = 0;
  for (auto [l, c] : counts)
    if (c > best_count) { best_count = c; lith = l; }
  std::vector<double> ssa_v, vp_v, dp_v;
  for (const auto& r : prep.ds.records) {
    if (r.lithology != lith) continue;
    if (r.ssa) ssa_v.push_back(*r.ssa);
    if (r.pore_volume) vp_v.push_back(*r.pore_volume);
    if (r.pore_diameter) dp_v.push_back(*r.pore_diameter);
  }
  domain::SorptionRecord proto;
  proto.sample_id = "sweep";
  proto.lithology = lith;
  if (!ssa_v.empty()) proto.ssa = median_of(ssa_v);
  if (!vp_v.empty()) proto.pore_volume = median_of(vp_v);
  if (!dp_v.empty()) proto.pore_diameter = median_of(dp_v);

  double p_lo = prep.aux.pressure.minCoeff(), p_hi = prep.aux.pressure.maxCoeff();
  double t_lo = prep.aux.temperature.minCoeff(), t_hi = prep.aux.temperature.maxCoeff();
  eval::SweepSpec sweep;
  for (int i = 0; i < 50; ++i)
    sweep.pressures.push_back(p_lo + (p_hi - p_lo) * i / 49.0);
  int nt = t_hi > t_lo ? 10 : 1;
  for (int i = 0; i < nt; ++i)
    sweep.temperatures.push_back(nt == 1 ? t_lo : t_lo + (t_hi - t_lo) * i / (nt - 1.0));

  auto model_at = [&](double p, double T) {
    domain::Dataset one;
    domain::SorptionRecord r = proto;
    r.pressure = p;
    r.temperature = T;
    r.uptake = 1.0;
    r.valid_uptake = true;
    one.records.push_back(r);
    feat::FeatureMatrix fm = feat::engineer(one);
    Eigen::MatrixXd row = apply_scaler(lm.scaler, align_columns(fm, lm.scaler));
    return lm.net.predict(row)(0);
  };
  auto phys = eval::physics_consistency(model_at, sweep);
  out["physics_consistency"] = {{"monotonicity_violation_rate", phys.monotonicity_violation_rate},
                                {"negativity_rate", phys.negativity_rate},
                                {"score", phys.score}};

  // parity curve data for external plotting
  std::ostringstream parity;
  parity << "y_true,y_pred,sigma\n";
  char buf[160];
  for (std::size_t i = 0; i < yt.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", yt[i], yp[i], sigma[i]);
    parity << buf;
  }
  write_text(ctx.path("parity.csv"), parity.str());

  write_json_file(ctx.path("report.json"), out);
  ctx.write_manifest("report", {{"report.json", ctx.path("report.json")},
                                {"parity.csv", ctx.path("parity.csv")}});
  std::cout << "report: r2 " << ms.r2 << ", physics score " << phys.score << " -> "
            << ctx.path("report.json") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("SORBKIT_THREADS")) {
    int n = std::atoi(t);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"sorption modeling toolkit"};
  app.require_subcommand(1);

  StageContext ctx;
  int (*run)(StageContext&) = nullptr;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic sorption dataset");
  add_common_flags(gen, ctx);
  gen->callback([&] { run = cmd_gen_data; });
  auto* fit_cmd = app.add_subcommand("fit", "fit classical isotherms per sample");
  add_common_flags(fit_cmd, ctx);
  fit_cmd->callback([&] { run = cmd_fit; });
  auto* th = app.add_subcommand("thermo", "Van't Hoff and isosteric-heat analysis");
  add_common_flags(th, ctx);
  th->callback([&] { run = cmd_thermo; });
  auto* tr = app.add_subcommand("train", "train the physics-informed network");
  add_common_flags(tr, ctx);
  tr->callback([&] { run = cmd_train; });
  auto* ex = app.add_subcommand("explain", "attribution, local effects and interactions");
  add_common_flags(ex, ctx);
  ex->callback([&] { run = cmd_explain; });
  auto* rp = app.add_subcommand("report", "metrics, diagnostics, calibration, physics score");
  add_common_flags(rp, ctx);
  rp->callback([&] { run = cmd_report; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return run(ctx);
  } catch (const invalid_input& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime fault: " << e.what() << "\n";
    return 2;
  }
}
