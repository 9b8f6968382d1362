#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sorbkit/common.hpp"
#include "sorbkit/isotherms.hpp"
#include "sorbkit/nncore.hpp"

// Physics-informed sorption network: residual trunk with three output heads
// (uptake prediction, squashed physics parameters, heteroscedastic variance),
// physics penalty terms, adaptive-weight training loop with early stopping
// and NaN recovery, and Monte-Carlo-dropout uncertainty.

namespace sorbkit::pinn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct PinnConfig {
  std::vector<int> widths = baseline_widths();
  nn::Activation activation = nn::Activation::Swish;
  nn::Norm norm = nn::Norm::Layer;
  double dropout_p = 0.1;
  double physics_weight = 0.1;  // lambda
  int max_epochs = 300;
  int patience = 50;
  int warmup_epochs = 50;
  int batch_size = 0;        // 0 = full batch
  int grad_accumulation = 1;
  double lr_max = 3e-3;
  double lr_min = 1e-6;
  double weight_decay = 1e-5;
  double clip_norm = 1.0;
  double huber_delta = 1.0;
  double input_clamp = 5.0;  // scaled-feature clamp, +-
  std::uint64_t seed = 0;

  static std::vector<int> baseline_widths() { return {128, 256, 128, 64}; }
  static std::vector<int> moderate_widths() { return {256, 512, 256, 128}; }
  static std::vector<int> high_widths() { return {512, 1024, 512, 256, 128}; }

  void validate() const {
    if (widths.empty()) throw invalid_input("PinnConfig: widths empty");
    for (int w : widths)
      if (w < 1) throw invalid_input("PinnConfig: non-positive width");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw invalid_input("PinnConfig: dropout_p outside [0,1)");
    if (physics_weight < 0.0) throw invalid_input("PinnConfig: negative physics weight");
    if (max_epochs < 1 || patience < 0 || warmup_epochs < 0 || grad_accumulation < 1)
      throw invalid_input("PinnConfig: bad epoch/patience settings");
    if (lr_max <= 0 || lr_min < 0 || lr_min > lr_max) throw invalid_input("PinnConfig: bad lr range");
  }
};

// Bounds the physics-parameter head squashes into.
struct PhysicsBounds {
  double q_max_lo = 1e-3, q_max_hi = 100.0;   // mmol/g, linear
  double k_lo = 1e-6, k_hi = 100.0;           // affinity, log-space squash
  double dh_lo = -60000.0, dh_hi = 0.0;       // J/mol, linear
  double n_lo = 0.1, n_hi = 10.0;             // heterogeneity exponent, linear
};

// Raw per-batch channels the physics penalties need alongside the scaled
// feature rows. Rows align with the feature matrix. `pairs` lists row
// indices of the same material at two different temperatures.
struct AuxChannels {
  Vec pressure;          // bar
  Vec temperature;       // K
  Vec pore_diameter_nm;  // raw; rows without a value should carry a large number
  std::vector<std::pair<int, int>> pairs;

  void check(Eigen::Index n) const {
    if (pressure.size() != n || temperature.size() != n || pore_diameter_nm.size() != n)
      throw invalid_input("AuxChannels: channel length mismatch");
    for (auto [a, b] : pairs)
      if (a < 0 || b < 0 || a >= n || b >= n) throw invalid_input("AuxChannels: pair index out of range");
  }
};

struct Batch {
  Mat x;            // scaled features, n x d
  Vec y;            // uptake, mmol/g
  Mat x_pressure_up;  // features recomputed at p*1.05 and rescaled; may be empty
  AuxChannels aux;
};

struct LossBreakdown {
  double data_loss = 0.0;
  double physics_positivity = 0.0;
  double physics_saturation = 0.0;
  double physics_monotonicity = 0.0;
  double physics_vant_hoff = 0.0;
  double physics_sieving = 0.0;
  double lambda_effective = 0.0;
  double total = 0.0;

  double physics_sum() const {
    return physics_positivity + physics_saturation + physics_monotonicity + physics_vant_hoff +
           physics_sieving;
  }
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;
  double val_data_loss = 0.0;
  double lr = 0.0;
};

struct HeadVars {
  nn::Var q_pred;   // n x 1
  nn::Var q_max;    // n x 1, squashed
  nn::Var ln_k;     // n x 1, log of squashed affinity
  nn::Var dh;       // n x 1, J/mol
  nn::Var n_exp;    // n x 1
  nn::Var sigma2;   // n x 1, aleatoric variance
};

class Network {
 public:
  Network() = default;

  Network(const PinnConfig& cfg, int n_features, PhysicsBounds bounds = {})
      : cfg_(cfg), bounds_(bounds), n_features_(n_features) {
    cfg_.validate();
    if (n_features < 1) throw invalid_input("Network: n_features must be >= 1");
    auto rng = make_rng(split_seed(cfg.seed, 0x696e69));
    input_ = nn::Dense(n_features, cfg.widths.front(), rng, "input");
    int prev = cfg.widths.front();
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
      blocks_.emplace_back(prev, cfg.widths[i], cfg.norm, cfg.activation, cfg.dropout_p, rng,
                           "block" + std::to_string(i));
      prev = cfg.widths[i];
    }
    head_pred_ = nn::Dense(prev, 1, rng, "head.pred");
    head_phys_ = nn::Dense(prev, 4, rng, "head.phys");
    head_var_ = nn::Dense(prev, 1, rng, "head.var");
  }

  const PinnConfig& config() const { return cfg_; }
  const PhysicsBounds& bounds() const { return bounds_; }
  int n_features() const { return n_features_; }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> ps = input_.params();
    for (auto& b : blocks_)
      for (nn::Param* p : b.params()) ps.push_back(p);
    for (nn::Param* p : head_pred_.params()) ps.push_back(p);
    for (nn::Param* p : head_phys_.params()) ps.push_back(p);
    for (nn::Param* p : head_var_.params()) ps.push_back(p);
    return ps;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (nn::Param* p : params()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  // Full forward pass. `train` drives normalization statistics, `dropout_on`
  // drives the dropout masks (kept separate so MC-dropout inference can keep
  // eval-mode statistics).
  HeadVars forward(nn::Graph& g, const Mat& x, bool train, bool dropout_on,
                   std::mt19937_64& rng) {
    nn::Var h = g.constant(x);
    h = g.clamp(h, -cfg_.input_clamp, cfg_.input_clamp);
    h = input_.forward(g, h);
    for (auto& b : blocks_) h = b.forward(g, h, train, dropout_on, rng);
    HeadVars out;
    // softplus keeps predicted uptake non-negative everywhere
    out.q_pred = g.softplus(head_pred_.forward(g, h));
    nn::Var phys = head_phys_.forward(g, h);
    nn::Var s0 = g.sigmoid(g.col(phys, 0));
    nn::Var s1 = g.sigmoid(g.col(phys, 1));
    nn::Var s2 = g.sigmoid(g.col(phys, 2));
    nn::Var s3 = g.sigmoid(g.col(phys, 3));
    out.q_max = g.add_scalar(g.scale(s0, bounds_.q_max_hi - bounds_.q_max_lo), bounds_.q_max_lo);
    double lk_lo = std::log(bounds_.k_lo), lk_hi = std::log(bounds_.k_hi);
    out.ln_k = g.add_scalar(g.scale(s1, lk_hi - lk_lo), lk_lo);
    out.dh = g.add_scalar(g.scale(s2, bounds_.dh_hi - bounds_.dh_lo), bounds_.dh_lo);
    out.n_exp = g.add_scalar(g.scale(s3, bounds_.n_hi - bounds_.n_lo), bounds_.n_lo);
    out.sigma2 = g.add_scalar(g.softplus(head_var_.forward(g, h)), 1e-6);
    return out;
  }

  // Deterministic single-pass prediction.
  Vec predict(const Mat& x) {
    nn::Graph g;
    auto rng = make_rng(0);
    HeadVars hv = forward(g, x, /*train=*/false, /*dropout_on=*/false, rng);
    return hv.q_pred.value().col(0);
  }

  Mat physics_parameters(const Mat& x) {
    nn::Graph g;
    auto rng = make_rng(0);
    HeadVars hv = forward(g, x, false, false, rng);
    Mat out(x.rows(), 4);
    out.col(0) = hv.q_max.value().col(0);
    out.col(1) = hv.ln_k.value().col(0).array().exp();
    out.col(2) = hv.dh.value().col(0);
    out.col(3) = hv.n_exp.value().col(0);
    return out;
  }

 private:
  PinnConfig cfg_;
  PhysicsBounds bounds_;
  int n_features_ = 0;
  nn::Dense input_;
  std::vector<nn::ResidualBlock> blocks_;
  nn::Dense head_pred_, head_phys_, head_var_;
  friend class Trainer;
};

namespace detail {

struct PhysicsVars {
  nn::Var positivity, saturation, monotonicity, vant_hoff, sieving;
  bool has_monotonicity = false;
};

inline nn::Var relu_sq_mean(nn::Graph& g, nn::Var v) { return g.mean(g.square(g.relu(v))); }

// Builds the five physics penalty terms inside the active graph so their
// gradients flow back into the network.
inline PhysicsVars physics_terms(nn::Graph& g, Network& net, const HeadVars& hv, const Batch& batch,
                                 bool train, std::mt19937_64& rng) {
  const Eigen::Index n = batch.x.rows();
  batch.aux.check(n);
  PhysicsVars out;

  out.positivity = relu_sq_mean(g, g.scale(hv.q_pred, -1.0));
  out.saturation = relu_sq_mean(g, g.sub(hv.q_pred, hv.q_max));

  if (batch.x_pressure_up.size() > 0) {
    HeadVars up = net.forward(g, batch.x_pressure_up, train, /*dropout_on=*/false, rng);
    nn::Var delta = g.sub(up.q_pred, hv.q_pred);
    // mixed hinge: the quadratic part keeps the penalty smooth near zero,
    // the linear part keeps pushing even on shallow dips in flat regions
    nn::Var viol = g.relu(g.scale(delta, -1.0));
    out.monotonicity = g.add(g.mean(g.square(g.scale(viol, 100.0))),
                             g.mean(g.scale(viol, 50.0)));
    out.has_monotonicity = true;
  } else {
    out.monotonicity = g.constant(Mat::Zero(1, 1));
  }

  if (!batch.aux.pairs.empty()) {
    std::vector<int> ia, ib;
    Mat dinv(static_cast<Eigen::Index>(batch.aux.pairs.size()), 1);
    for (std::size_t k = 0; k < batch.aux.pairs.size(); ++k) {
      auto [a, b] = batch.aux.pairs[k];
      ia.push_back(a);
      ib.push_back(b);
      dinv(static_cast<Eigen::Index>(k), 0) =
          1.0 / batch.aux.temperature(a) - 1.0 / batch.aux.temperature(b);
    }
    nn::Var lnk_a = g.gather_rows(hv.ln_k, ia);
    nn::Var lnk_b = g.gather_rows(hv.ln_k, ib);
    nn::Var dh_a = g.gather_rows(hv.dh, ia);
    nn::Var resid = g.add(g.sub(lnk_a, lnk_b),
                          g.hadamard(g.scale(dh_a, 1.0 / kGasConstant), g.constant(dinv)));
    out.vant_hoff = g.mean(g.square(resid));
  } else {
    out.vant_hoff = g.constant(Mat::Zero(1, 1));
  }

  Mat w(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    w(i, 0) = std::max(kH2KineticDiameterNm - batch.aux.pore_diameter_nm(i), 0.0);
  out.sieving = g.mean(g.hadamard(g.constant(w), g.square(hv.q_pred)));
  return out;
}

// 50/50 Huber + heteroscedastic negative log-likelihood.
inline nn::Var data_loss(nn::Graph& g, const HeadVars& hv, const Vec& y, double huber_delta) {
  Mat yt = y;
  nn::Var hub = g.huber(hv.q_pred, yt, huber_delta);
  nn::Var resid2 = g.square(g.sub(hv.q_pred, g.constant(yt)));
  nn::Var nll = g.mean(g.scale(g.add(g.log_safe(hv.sigma2), g.cdiv(resid2, hv.sigma2)), 0.5));
  return g.add(g.scale(hub, 0.5), g.scale(nll, 0.5));
}

}  // namespace detail

// Standalone physics-loss evaluation (no gradient), exposed for testing and
// reporting.
inline LossBreakdown physics_loss(Network& net, const Batch& batch) {
  nn::Graph g;
  auto rng = make_rng(0);
  HeadVars hv = net.forward(g, batch.x, false, false, rng);
  auto terms = detail::physics_terms(g, net, hv, batch, false, rng);
  LossBreakdown lb;
  lb.physics_positivity = terms.positivity.value()(0, 0);
  lb.physics_saturation = terms.saturation.value()(0, 0);
  lb.physics_monotonicity = terms.monotonicity.value()(0, 0);
  lb.physics_vant_hoff = terms.vant_hoff.value()(0, 0);
  lb.physics_sieving = terms.sieving.value()(0, 0);
  return lb;
}

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int nan_recoveries = 0;
  bool early_stopped = false;
};

class Trainer {
 public:
  // lambda_eff: 0 -> lambda over warmup, then scaled by (1 + violation ratio)
  // where the ratio is physics/(data + 1e-8) clamped to [0, 2], detached.
  static double lambda_effective(const PinnConfig& cfg, int epoch, double data, double phys) {
    double lam = cfg.physics_weight;
    if (cfg.warmup_epochs > 0 && epoch < cfg.warmup_epochs)
      return lam * static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
    double ratio = phys / (data + 1e-8);
    ratio = std::min(std::max(ratio, 0.0), 2.0);
    return lam * (1.0 + ratio);
  }

  static TrainResult train(Network& net, const Batch& train_batch, const Batch& val_batch) {
    const PinnConfig& cfg = net.config();
    if (val_batch.x.rows() == 0) throw invalid_input("train: empty validation set");
    if (train_batch.x.rows() == 0) throw invalid_input("train: empty training set");
    if (train_batch.y.size() != train_batch.x.rows() || val_batch.y.size() != val_batch.x.rows())
      throw invalid_input("train: target length mismatch");

    auto params = net.params();
    nn::OptimConfig ocfg;
    ocfg.lr = cfg.lr_max;
    ocfg.weight_decay = cfg.weight_decay;
    ocfg.clip_norm = cfg.clip_norm;
    nn::AdamW opt(ocfg);
    nn::ScheduleConfig sched{cfg.lr_max, cfg.lr_min, std::max(cfg.max_epochs, 1),
                             cfg.warmup_epochs};

    auto rng = make_rng(split_seed(cfg.seed, 0x747261));
    TrainResult res;
    Eigen::VectorXd best = nn::flatten_values(params);
    Eigen::VectorXd checkpoint = best;
    double lr_scale = 1.0;
    int since_best = 0;

    const Eigen::Index n = train_batch.x.rows();
    int bs = cfg.batch_size > 0 ? cfg.batch_size : static_cast<int>(n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      double lr = nn::lr_schedule(epoch, sched) * lr_scale;
      opt.lr() = lr;

      LossBreakdown eb;
      try {
        std::shuffle(order.begin(), order.end(), rng);
        int n_batches = 0;
        for (Eigen::Index start = 0; start < n; start += bs) {
          Eigen::Index stop = std::min<Eigen::Index>(start + bs, n);
          Batch mb = slice(train_batch, order, start, stop);
          LossBreakdown lb = step(net, params, opt, mb, epoch, rng,
                                  (n_batches % cfg.grad_accumulation) == cfg.grad_accumulation - 1 ||
                                      stop == n);
          accumulate(eb, lb);
          ++n_batches;
        }
        scale_breakdown(eb, 1.0 / std::max(n_batches, 1));
        checkpoint = nn::flatten_values(params);
      } catch (const nn::TrainingFault&) {
        if (++res.nan_recoveries > 3) throw;
        nn::unflatten_values(params, checkpoint);
        for (nn::Param* p : params) {
          p->m.setZero();
          p->v.setZero();
          p->zero_grad();
        }
        lr_scale *= 0.5;
        continue;
      }

      double val = validation_data_loss(net, val_batch);
      res.history.push_back({epoch, eb, val, lr});

      if (val < res.best_val_loss - 1e-12) {
        res.best_val_loss = val;
        res.best_epoch = epoch;
        best = nn::flatten_values(params);
        since_best = 0;
      } else {
        ++since_best;
        if (since_best > cfg.patience) {
          res.early_stopped = true;
          break;
        }
      }
    }
    nn::unflatten_values(params, best);
    return res;
  }

  static double validation_data_loss(Network& net, const Batch& batch) {
    nn::Graph g;
    auto rng = make_rng(0);
    HeadVars hv = net.forward(g, batch.x, false, false, rng);
    return detail::data_loss(g, hv, batch.y, net.config().huber_delta).value()(0, 0);
  }

  // One optimizer step on a (mini)batch; returns the loss breakdown with the
  // exact recomposition total = data + lambda_eff * physics_sum.
  static LossBreakdown step(Network& net, const std::vector<nn::Param*>& params, nn::AdamW& opt,
                            const Batch& batch, int epoch, std::mt19937_64& rng, bool apply) {
    nn::Graph g;
    HeadVars hv = net.forward(g, batch.x, true, true, rng);
    nn::Var data = detail::data_loss(g, hv, batch.y, net.config().huber_delta);
    auto terms = detail::physics_terms(g, net, hv, batch, true, rng);
    nn::Var phys = g.add(g.add(g.add(terms.positivity, terms.saturation), terms.monotonicity),
                         g.add(terms.vant_hoff, terms.sieving));

    LossBreakdown lb;
    lb.data_loss = data.value()(0, 0);
    lb.physics_positivity = terms.positivity.value()(0, 0);
    lb.physics_saturation = terms.saturation.value()(0, 0);
    lb.physics_monotonicity = terms.monotonicity.value()(0, 0);
    lb.physics_vant_hoff = terms.vant_hoff.value()(0, 0);
    lb.physics_sieving = terms.sieving.value()(0, 0);
    lb.lambda_effective = lambda_effective(net.config(), epoch, lb.data_loss, lb.physics_sum());

    nn::Var total = g.add(data, g.scale(phys, lb.lambda_effective));
    lb.total = total.value()(0, 0);

    g.backward(total);
    if (apply) {
      opt.step(params);
      for (nn::Param* p : params) p->zero_grad();
    }
    return lb;
  }

 private:
  static Batch slice(const Batch& b, const std::vector<int>& order, Eigen::Index start,
                     Eigen::Index stop) {
    if (start == 0 && stop == b.x.rows()) {
      bool identity = true;
      for (Eigen::Index i = 0; i < stop; ++i)
        if (order[i] != i) {
          identity = false;
          break;
        }
      if (identity) return b;
    }
    Eigen::Index m = stop - start;
    Batch out;
    out.x.resize(m, b.x.cols());
    out.y.resize(m);
    if (b.x_pressure_up.size() > 0) out.x_pressure_up.resize(m, b.x.cols());
    out.aux.pressure.resize(m);
    out.aux.temperature.resize(m);
    out.aux.pore_diameter_nm.resize(m);
    std::vector<int> where(b.x.rows(), -1);
    for (Eigen::Index i = 0; i < m; ++i) {
      int src = order[start + i];
      where[src] = static_cast<int>(i);
      out.x.row(i) = b.x.row(src);
      out.y(i) = b.y(src);
      if (b.x_pressure_up.size() > 0) out.x_pressure_up.row(i) = b.x_pressure_up.row(src);
      out.aux.pressure(i) = b.aux.pressure(src);
      out.aux.temperature(i) = b.aux.temperature(src);
      out.aux.pore_diameter_nm(i) = b.aux.pore_diameter_nm(src);
    }
    for (auto [a, c] : b.aux.pairs)
      if (where[a] >= 0 && where[c] >= 0) out.aux.pairs.emplace_back(where[a], where[c]);
    return out;
  }

  static void accumulate(LossBreakdown& acc, const LossBreakdown& lb) {
    acc.data_loss += lb.data_loss;
    acc.physics_positivity += lb.physics_positivity;
    acc.physics_saturation += lb.physics_saturation;
    acc.physics_monotonicity += lb.physics_monotonicity;
    acc.physics_vant_hoff += lb.physics_vant_hoff;
    acc.physics_sieving += lb.physics_sieving;
    acc.lambda_effective = lb.lambda_effective;
    acc.total += lb.total;
  }
  static void scale_breakdown(LossBreakdown& lb, double s) {
    lb.data_loss *= s;
    lb.physics_positivity *= s;
    lb.physics_saturation *= s;
    lb.physics_monotonicity *= s;
    lb.physics_vant_hoff *= s;
    lb.physics_sieving *= s;
    lb.total *= s;
  }
};

struct UncertainPrediction {
  Vec mean;
  Vec sigma_aleatoric;
  Vec sigma_epistemic;
  Vec lower, upper;
};

// Monte Carlo dropout: dropout masks active across n_mc forward passes with
// eval-mode normalization statistics; interval = mean +- z*sqrt(var_a+var_e).
inline UncertainPrediction predict_with_uncertainty(Network& net, const Mat& x, int n_mc = 100,
                                                    double z = 1.96, std::uint64_t seed = 0) {
  if (n_mc < 2) throw invalid_input("predict_with_uncertainty: n_mc must be >= 2");
  const Eigen::Index n = x.rows();
  Vec sum = Vec::Zero(n), sumsq = Vec::Zero(n), var_a = Vec::Zero(n);
  for (int k = 0; k < n_mc; ++k) {
    auto rng = make_rng(split_seed(seed, 0x6d63 + static_cast<std::uint64_t>(k)));
    nn::Graph g;
    HeadVars hv = net.forward(g, x, /*train=*/false, /*dropout_on=*/true, rng);
    Vec q = hv.q_pred.value().col(0);
    sum += q;
    sumsq += q.cwiseProduct(q);
    var_a += hv.sigma2.value().col(0);
  }
  UncertainPrediction out;
  out.mean = sum / n_mc;
  Vec var_e = (sumsq / n_mc - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  out.sigma_epistemic = var_e.cwiseSqrt();
  out.sigma_aleatoric = (var_a / n_mc).cwiseSqrt();
  Vec total = (var_e + var_a / n_mc).cwiseSqrt();
  out.lower = out.mean - z * total;
  out.upper = out.mean + z * total;
  return out;
}

}  // namespace sorbkit::pinn
