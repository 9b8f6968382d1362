#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"

// Minimal reverse-mode automatic differentiation over double matrices with
// the layer set needed for the physics-informed network: dense layers,
// residual blocks, layer/batch normalization, swish/relu/gelu, dropout,
// decoupled-weight-decay adaptive-moment optimizer and a cosine warm-restart
// schedule. All math in 64-bit.

namespace sorbkit::nn {

using Mat = Eigen::MatrixXd;

// Raised on NaN detection or shape faults during a training step; the
// training loop treats it as recoverable.
struct TrainingFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Param {
  Mat value;
  Mat grad;
  Mat m, v;  // optimizer moments
  std::string name;

  explicit Param(Mat init = {}, std::string n = "")
      : value(std::move(init)), name(std::move(n)) {
    grad = Mat::Zero(value.rows(), value.cols());
    m = Mat::Zero(value.rows(), value.cols());
    v = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

namespace detail {
struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward;  // pulls this->grad into inputs

  void ensure_grad() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
  }
};
}  // namespace detail

class Var {
 public:
  Var() = default;
  explicit Var(detail::Node* n) : node_(n) {}
  const Mat& value() const { return node_->value; }
  detail::Node* node() const { return node_; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

 private:
  detail::Node* node_ = nullptr;
};

// One forward/backward tape. Build a fresh Graph per training step.
class Graph {
 public:
  Var constant(Mat v) { return make(std::move(v), false, nullptr); }

  Var leaf(Param& p) {
    Var out = make(p.value, true, nullptr);
    detail::Node* n = out.node();
    n->backward = [&p](detail::Node& self) { p.grad += self.grad; };
    return out;
  }

  Var matmul(Var a, Var b) {
    Mat v = a.value() * b.value();
    Var out = make(std::move(v), grad_of(a, b), nullptr);
    auto* na = a.node();
    auto* nb = b.node();
    out.node()->backward = [na, nb](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += self.grad * nb->value.transpose();
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad += na->value.transpose() * self.grad;
      }
    };
    return out;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var out = make(a.value() + b.value(), grad_of(a, b), nullptr);
    binary_passthrough(out, a, b, 1.0, 1.0);
    return out;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var out = make(a.value() - b.value(), grad_of(a, b), nullptr);
    binary_passthrough(out, a, b, 1.0, -1.0);
    return out;
  }

  // a (n x m) + row vector b (1 x m), broadcast over rows
  Var add_rowvec(Var a, Var b) {
    if (b.rows() != 1 || b.cols() != a.cols()) throw TrainingFault("add_rowvec: shape mismatch");
    Mat v = a.value().rowwise() + b.value().row(0);
    Var out = make(std::move(v), grad_of(a, b), nullptr);
    auto* na = a.node();
    auto* nb = b.node();
    out.node()->backward = [na, nb](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += self.grad;
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad.row(0) += self.grad.colwise().sum();
      }
    };
    return out;
  }

  Var hadamard(Var a, Var b) {
    check_same(a, b, "hadamard");
    Var out = make(a.value().cwiseProduct(b.value()), grad_of(a, b), nullptr);
    auto* na = a.node();
    auto* nb = b.node();
    out.node()->backward = [na, nb](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += self.grad.cwiseProduct(nb->value);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad += self.grad.cwiseProduct(na->value);
      }
    };
    return out;
  }

  Var cdiv(Var a, Var b) {
    check_same(a, b, "cdiv");
    Var out = make(a.value().cwiseQuotient(b.value()), grad_of(a, b), nullptr);
    auto* na = a.node();
    auto* nb = b.node();
    out.node()->backward = [na, nb](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += self.grad.cwiseQuotient(nb->value);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad -= self.grad.cwiseProduct(na->value)
                        .cwiseQuotient(nb->value.cwiseProduct(nb->value));
      }
    };
    return out;
  }

  Var scale(Var a, double s) {
    Var out = make(a.value() * s, a.node()->requires_grad, nullptr);
    auto* na = a.node();
    out.node()->backward = [na, s](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += self.grad * s;
      }
    };
    return out;
  }

  Var add_scalar(Var a, double s) {
    Var out = make(a.value().array() + s, a.node()->requires_grad, nullptr);
    unary_passthrough(out, a);
    return out;
  }

  Var relu(Var a) {
    Var out = make(a.value().cwiseMax(0.0), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    out.node()->backward = [na](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad.array() += self.grad.array() * (na->value.array() > 0.0).cast<double>();
    };
    return out;
  }

  Var sigmoid(Var a) {
    Mat v = (1.0 + (-a.value().array()).exp()).inverse();
    Var out = make(std::move(v), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    auto* no = out.node();
    out.node()->backward = [na, no](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad.array() += self.grad.array() * no->value.array() * (1.0 - no->value.array());
    };
    return out;
  }

  Var swish(Var a) {
    Eigen::ArrayXXd s = (1.0 + (-a.value().array()).exp()).inverse();
    Var out = make(a.value().array() * s, a.node()->requires_grad, nullptr);
    auto* na = a.node();
    Mat ds = (s + a.value().array() * s * (1.0 - s)).matrix();
    out.node()->backward = [na, ds](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(ds);
    };
    return out;
  }

  Var gelu(Var a) {
    auto x = a.value().array();
    Eigen::ArrayXXd phi =
        (x / std::sqrt(2.0)).unaryExpr([](double v) { return 0.5 * (1.0 + std::erf(v)); });
    Var out = make((x * phi).matrix(), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    Mat d = (phi + x * (-0.5 * x.square()).exp() / std::sqrt(2.0 * M_PI)).matrix();
    out.node()->backward = [na, d](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(d);
    };
    return out;
  }

  Var softplus(Var a) {
    auto x = a.value().array();
    Eigen::ArrayXXd v = (x > 30.0).select(x, (1.0 + x.exp()).log());
    Var out = make(v.matrix(), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    Mat d = ((1.0 + (-x).exp()).inverse()).matrix();
    out.node()->backward = [na, d](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(d);
    };
    return out;
  }

  // exp with argument clamped to [-30, 30]; zero gradient outside the clamp
  Var exp_safe(Var a) {
    auto x = a.value().array();
    Eigen::ArrayXXd c = x.min(30.0).max(-30.0);
    Var out = make(c.exp().matrix(), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    auto* no = out.node();
    Mat inside = ((x > -30.0) && (x < 30.0)).cast<double>().matrix();
    out.node()->backward = [na, no, inside](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(no->value).cwiseProduct(inside);
    };
    return out;
  }

  // log(max(x, 1e-12))
  Var log_safe(Var a) {
    auto x = a.value().array();
    Eigen::ArrayXXd c = x.max(1e-12);
    Var out = make(c.log().matrix(), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    Mat d = ((x > 1e-12).cast<double>() / c).matrix();
    out.node()->backward = [na, d](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(d);
    };
    return out;
  }

  Var square(Var a) {
    Var out = make(a.value().array().square().matrix(), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    out.node()->backward = [na](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(2.0 * na->value);
    };
    return out;
  }

  // gradient pass-through inside (lo, hi), zero outside
  Var clamp(Var a, double lo, double hi) {
    auto x = a.value().array();
    Var out = make(x.min(hi).max(lo).matrix(), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    Mat inside = ((x > lo) && (x < hi)).cast<double>().matrix();
    out.node()->backward = [na, inside](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(inside);
    };
    return out;
  }

  Var mean(Var a) {
    Mat v(1, 1);
    v(0, 0) = a.value().mean();
    Var out = make(std::move(v), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    double inv_n = 1.0 / static_cast<double>(a.value().size());
    out.node()->backward = [na, inv_n](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad.array() += self.grad(0, 0) * inv_n;
    };
    return out;
  }

  Var sum(Var a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    Var out = make(std::move(v), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    out.node()->backward = [na](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad.array() += self.grad(0, 0);
    };
    return out;
  }

  // Mean Huber loss against a constant target.
  Var huber(Var pred, const Mat& target, double delta = 1.0) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
      throw TrainingFault("huber: shape mismatch");
    Eigen::ArrayXXd r = pred.value().array() - target.array();
    Eigen::ArrayXXd absr = r.abs();
    Eigen::ArrayXXd loss =
        (absr <= delta).select(0.5 * r.square(), delta * (absr - 0.5 * delta));
    Mat v(1, 1);
    v(0, 0) = loss.mean();
    Var out = make(std::move(v), pred.node()->requires_grad, nullptr);
    auto* np = pred.node();
    Mat d = ((absr <= delta).select(r, delta * r.sign())).matrix() /
            static_cast<double>(r.size());
    out.node()->backward = [np, d](detail::Node& self) {
      if (!np->requires_grad) return;
      np->ensure_grad();
      np->grad += self.grad(0, 0) * d;
    };
    return out;
  }

  Var col(Var a, Eigen::Index j) {
    Var out = make(a.value().col(j), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    out.node()->backward = [na, j](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      na->grad.col(j) += self.grad.col(0);
    };
    return out;
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) v.row(i) = a.value().row(idx[i]);
    Var out = make(std::move(v), a.node()->requires_grad, nullptr);
    auto* na = a.node();
    out.node()->backward = [na, idx = std::move(idx)](detail::Node& self) {
      if (!na->requires_grad) return;
      na->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        na->grad.row(idx[i]) += self.grad.row(i);
    };
    return out;
  }

  // Row-wise layer normalization with learned gain/bias (1 x m each).
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Eigen::Index n = x.rows(), m = x.cols();
    Mat mu = x.value().rowwise().mean();
    Mat centered = x.value().colwise() - mu.col(0);
    Mat var = centered.array().square().matrix().rowwise().mean();
    Mat invstd = (var.array() + eps).rsqrt().matrix();
    Mat xhat = centered.array().colwise() * invstd.col(0).array();
    Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();
    Var out = make(std::move(y), true, nullptr);
    auto* nx = x.node();
    auto* ng = gamma.node();
    auto* nb = beta.node();
    out.node()->backward = [nx, ng, nb, xhat, invstd, m](detail::Node& self) {
      Eigen::ArrayXXd dy = self.grad.array();
      if (ng->requires_grad) {
        ng->ensure_grad();
        ng->grad.row(0) += (dy * xhat.array()).colwise().sum().matrix();
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad.row(0) += dy.colwise().sum().matrix();
      }
      if (nx->requires_grad) {
        nx->ensure_grad();
        Eigen::ArrayXXd dxhat = dy.rowwise() * ng->value.row(0).array();
        Eigen::ArrayXd s1 = dxhat.rowwise().sum();
        Eigen::ArrayXd s2 = (dxhat * xhat.array()).rowwise().sum();
        double dm = static_cast<double>(m);
        Eigen::ArrayXXd dx =
            ((dxhat * dm).colwise() - s1) - (xhat.array().colwise() * s2);
        dx = dx.colwise() * (invstd.col(0).array() / dm);
        nx->grad += dx.matrix();
      }
    };
    return out;
  }

  // Column-wise batch normalization over the batch dimension. In training
  // mode batch statistics are used and running stats updated; in eval mode
  // the running statistics normalize.
  Var batch_norm(Var x, Var gamma, Var beta, Mat& running_mean, Mat& running_var, bool train,
                 double momentum = 0.1, double eps = 1e-5) {
    const Eigen::Index n = x.rows();
    Mat mu, var;
    if (train) {
      mu = x.value().colwise().mean();
      Mat centered = x.value().rowwise() - mu.row(0);
      var = centered.array().square().matrix().colwise().mean();
      if (running_mean.size() == 0) {
        running_mean = mu;
        running_var = var;
      } else {
        running_mean = (1.0 - momentum) * running_mean + momentum * mu;
        running_var = (1.0 - momentum) * running_var + momentum * var;
      }
    } else {
      mu = running_mean.size() ? running_mean : Mat::Zero(1, x.cols());
      var = running_var.size() ? running_var : Mat::Ones(1, x.cols());
    }
    Mat invstd = (var.array() + eps).rsqrt().matrix();
    Mat xhat = (x.value().rowwise() - mu.row(0)).array().rowwise() * invstd.row(0).array();
    Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();
    Var out = make(std::move(y), true, nullptr);
    auto* nx = x.node();
    auto* ng = gamma.node();
    auto* nb = beta.node();
    bool use_batch_stats = train;
    out.node()->backward = [nx, ng, nb, xhat, invstd, n, use_batch_stats](detail::Node& self) {
      Eigen::ArrayXXd dy = self.grad.array();
      if (ng->requires_grad) {
        ng->ensure_grad();
        ng->grad.row(0) += (dy * xhat.array()).colwise().sum().matrix();
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad.row(0) += dy.colwise().sum().matrix();
      }
      if (nx->requires_grad) {
        nx->ensure_grad();
        Eigen::ArrayXXd dxhat = dy.rowwise() * ng->value.row(0).array();
        if (use_batch_stats) {
          Eigen::ArrayXd s1 = dxhat.colwise().sum();
          Eigen::ArrayXd s2 = (dxhat * xhat.array()).colwise().sum();
          double dn = static_cast<double>(n);
          Eigen::ArrayXXd dx =
              ((dxhat * dn).rowwise() - s1.transpose()) -
              (xhat.array().rowwise() * s2.transpose());
          dx = dx.rowwise() * (invstd.row(0).array() / dn);
          nx->grad += dx.matrix();
        } else {
          nx->grad += (dxhat.rowwise() * invstd.row(0).array()).matrix();
        }
      }
    };
    return out;
  }

  // Inverted dropout: identity in eval mode.
  Var dropout(Var x, double p, std::mt19937_64& rng, bool train) {
    if (!train || p <= 0.0) return x;
    std::bernoulli_distribution keep(1.0 - p);
    Mat mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        mask(i, j) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
    Var out = make(x.value().cwiseProduct(mask), x.node()->requires_grad, nullptr);
    auto* nx = x.node();
    out.node()->backward = [nx, mask](detail::Node& self) {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      nx->grad += self.grad.cwiseProduct(mask);
    };
    return out;
  }

  void backward(Var loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw TrainingFault("backward: loss must be scalar");
    for (auto& n : nodes_) n->grad.resize(0, 0);
    loss.node()->ensure_grad();
    loss.node()->grad(0, 0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      detail::Node& n = **it;
      if (n.backward && n.grad.size() != 0) n.backward(n);
    }
  }

 private:
  static bool grad_of(Var a, Var b) {
    return a.node()->requires_grad || b.node()->requires_grad;
  }
  static void check_same(Var a, Var b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw TrainingFault(std::string(op) + ": shape mismatch");
  }
  void binary_passthrough(Var out, Var a, Var b, double wa, double wb) {
    auto* na = a.node();
    auto* nb = b.node();
    out.node()->backward = [na, nb, wa, wb](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += wa * self.grad;
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        nb->grad += wb * self.grad;
      }
    };
  }
  void unary_passthrough(Var out, Var a) {
    auto* na = a.node();
    out.node()->backward = [na](detail::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        na->grad += self.grad;
      }
    };
  }

  Var make(Mat v, bool requires_grad, std::nullptr_t) {
    if (!v.allFinite()) throw TrainingFault("non-finite value in forward pass");
    auto node = std::make_unique<detail::Node>();
    node->value = std::move(v);
    node->requires_grad = requires_grad;
    detail::Node* raw = node.get();
    nodes_.push_back(std::move(node));
    return Var(raw);
  }

  std::vector<std::unique_ptr<detail::Node>> nodes_;
};

// ---------------------------------------------------------------------------
// Layers

enum class Activation { Swish, Relu, Gelu };
enum class Norm { Layer, Batch, None };

inline Var activate(Graph& g, Var x, Activation a) {
  switch (a) {
    case Activation::Swish: return g.swish(x);
    case Activation::Relu: return g.relu(x);
    case Activation::Gelu: return g.gelu(x);
  }
  throw invalid_input("unknown activation");
}

// Xavier-Glorot uniform with scaled-down gain.
inline Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng,
                          double gain = 0.5) {
  double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> unif(-limit, limit);
  Mat w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = unif(rng);
  return w;
}

struct Dense {
  Param W, b;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng, const std::string& name,
        double gain = 0.5)
      : W(xavier_uniform(in, out, rng, gain), name + ".W"),
        b(Mat::Zero(1, out), name + ".b") {}

  Var forward(Graph& g, Var x) {
    return g.add_rowvec(g.matmul(x, g.leaf(W)), g.leaf(b));
  }
  std::vector<Param*> params() { return {&W, &b}; }
};

struct ResidualBlock {
  Dense lin;
  Param gamma, beta;
  Dense proj;  // used when widths differ
  bool has_proj = false;
  Norm norm = Norm::Layer;
  Activation activation = Activation::Swish;
  double dropout_p = 0.0;
  Mat running_mean, running_var;  // batch-norm state

  ResidualBlock() = default;
  ResidualBlock(Eigen::Index in, Eigen::Index out, Norm nrm, Activation act, double drop,
                std::mt19937_64& rng, const std::string& name)
      : lin(in, out, rng, name + ".lin"),
        gamma(Mat::Ones(1, out), name + ".gamma"),
        beta(Mat::Zero(1, out), name + ".beta"),
        norm(nrm),
        activation(act),
        dropout_p(drop) {
    if (in != out) {
      proj = Dense(in, out, rng, name + ".proj");
      has_proj = true;
    }
  }

  // `train` drives normalization statistics, `dropout_on` the dropout masks;
  // MC-dropout inference needs them decoupled.
  Var forward(Graph& g, Var x, bool train, bool dropout_on, std::mt19937_64& rng) {
    Var h = lin.forward(g, x);
    if (norm == Norm::Layer)
      h = g.layer_norm(h, g.leaf(gamma), g.leaf(beta));
    else if (norm == Norm::Batch)
      h = g.batch_norm(h, g.leaf(gamma), g.leaf(beta), running_mean, running_var, train);
    h = activate(g, h, activation);
    h = g.dropout(h, dropout_p, rng, dropout_on);
    Var skip = has_proj ? proj.forward(g, x) : x;
    return g.add(h, skip);
  }

  Var forward(Graph& g, Var x, bool train, std::mt19937_64& rng) {
    return forward(g, x, train, train, rng);
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps = lin.params();
    if (norm != Norm::None) {
      ps.push_back(&gamma);
      ps.push_back(&beta);
    }
    if (has_proj)
      for (Param* p : proj.params()) ps.push_back(p);
    return ps;
  }
};

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

class AdamW {
 public:
  explicit AdamW(OptimConfig cfg = {}) : cfg_(cfg) {}

  double& lr() { return cfg_.lr; }
  const OptimConfig& config() const { return cfg_; }

  // Global-norm clipping, decoupled decay, bias-corrected moment update.
  void step(const std::vector<Param*>& params) {
    double norm_sq = 0.0;
    for (Param* p : params) norm_sq += p->grad.squaredNorm();
    double norm = std::sqrt(norm_sq);
    if (!std::isfinite(norm)) throw TrainingFault("non-finite gradient norm");
    double scale = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (Param* p : params) {
      Mat g = p->grad * scale;
      p->value *= (1.0 - cfg_.lr * cfg_.weight_decay);
      p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * g;
      p->v = cfg_.beta2 * p->v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      Mat mhat = p->m / bc1;
      Mat vhat = p->v / bc2;
      p->value -= cfg_.lr * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                               Mat::Constant(vhat.rows(), vhat.cols(), cfg_.eps));
      if (!p->value.allFinite()) throw TrainingFault("non-finite parameter after step");
    }
  }

  int steps() const { return t_; }

 private:
  OptimConfig cfg_;
  int t_ = 0;
};

struct ScheduleConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  int period = 100;       // first restart period, doubling after each restart
  int warmup_epochs = 50; // linear ramp from 0.1*lr_max
};

// Cosine annealing with warm restarts plus an initial linear warmup.
inline double lr_schedule(int epoch, const ScheduleConfig& cfg) {
  if (epoch < 0) throw invalid_input("lr_schedule: negative epoch");
  if (cfg.warmup_epochs > 0 && epoch < cfg.warmup_epochs) {
    double frac = static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
    return cfg.lr_max * (0.1 + 0.9 * frac);
  }
  int e = epoch - cfg.warmup_epochs;
  int period = std::max(cfg.period, 1);
  while (e >= period) {
    e -= period;
    period *= 2;
  }
  double t = static_cast<double>(e) / static_cast<double>(period);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * t));
}

// ---------------------------------------------------------------------------
// Flat parameter access for checkpoints and gradient checks

inline Eigen::VectorXd flatten_values(const std::vector<Param*>& params) {
  Eigen::Index total = 0;
  for (Param* p : params) total += p->value.size();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (Param* p : params) {
    Eigen::Map<const Eigen::VectorXd> v(p->value.data(), p->value.size());
    out.segment(at, p->value.size()) = v;
    at += p->value.size();
  }
  return out;
}

inline void unflatten_values(const std::vector<Param*>& params, const Eigen::VectorXd& flat) {
  Eigen::Index at = 0;
  for (Param* p : params) {
    Eigen::Map<Eigen::VectorXd>(p->value.data(), p->value.size()) =
        flat.segment(at, p->value.size());
    at += p->value.size();
  }
}

inline Eigen::VectorXd flatten_grads(const std::vector<Param*>& params) {
  Eigen::Index total = 0;
  for (Param* p : params) total += p->grad.size();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (Param* p : params) {
    Eigen::Map<const Eigen::VectorXd> v(p->grad.data(), p->grad.size());
    out.segment(at, p->grad.size()) = v;
    at += p->grad.size();
  }
  return out;
}

}  // namespace sorbkit::nn
