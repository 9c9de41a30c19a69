#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "anydim/network.hpp"
#include "anydim/rng.hpp"

namespace anydim {

// The five benchmark mappings. All are defined for inputs of every level and
// commute with zero-padding, which is what makes cross-level evaluation of a
// single trained model meaningful.
enum class Task { trace, diag_extract, sym_project, top_singular_vector, orth_invariance };

struct TaskInfo {
  Task task;
  std::string name;          // config spelling
  SeqExpr in;
  SeqExpr out;
  GroupFamily family;
  LossKind loss;
  std::string metric;        // mse | mse_per_entry | squared_sine
};

inline TaskInfo task_info(Task task) {
  const SeqExpr v = SeqExpr::base();
  const SeqExpr v2 = SeqExpr::tensor_power(2);
  const SeqExpr s = SeqExpr::scalar();
  switch (task) {
    case Task::trace:
      return {task, "trace", v2, s, {GroupKind::symmetric}, LossKind::mse, "mse"};
    case Task::diag_extract:
      return {task, "diag", v2, v2, {GroupKind::symmetric}, LossKind::mse, "mse_per_entry"};
    case Task::sym_project:
      return {task, "sym", v2, v2, {GroupKind::symmetric}, LossKind::mse, "mse_per_entry"};
    case Task::top_singular_vector:
      return {task, "svd", v2, v, {GroupKind::symmetric}, LossKind::squared_sine, "squared_sine"};
    case Task::orth_invariance:
      return {task, "orth", SeqExpr::multiple(2, v), s, {GroupKind::orthogonal}, LossKind::mse,
              "mse"};
  }
  throw ConfigError("unreachable task");
}

inline Task task_from_string(const std::string& s) {
  for (Task t : {Task::trace, Task::diag_extract, Task::sym_project, Task::top_singular_vector,
                 Task::orth_invariance})
    if (task_info(t).name == s) return t;
  throw ConfigError("unknown task '" + s + "' (expected trace, diag, sym, svd, orth)");
}

// Three affine layers, two hidden spaces, residual bilinear activations with
// entrywise ReLU for the permutation tasks and gates for the orthogonal one.
inline NetworkSpec default_network_spec(Task task, BasisMode mode) {
  const TaskInfo info = task_info(task);
  SeqExpr hidden;
  switch (task) {
    case Task::trace:
      hidden = SeqExpr::parse("2*V + 2*V^2");
      break;
    case Task::diag_extract:
    case Task::sym_project:
      hidden = SeqExpr::parse("4*V + 4*V^2");
      break;
    case Task::top_singular_vector:
    case Task::orth_invariance:
      hidden = SeqExpr::parse("25*S + 10*V + 2*V^2 + V^3");
      break;
  }
  const ActivationSpec act = ActivationSpec::parse(
      info.family.kind == GroupKind::orthogonal ? "bilinear+gated" : "bilinear+relu");
  const ActivationSpec none = ActivationSpec::parse("identity");
  NetworkSpec spec;
  spec.family = info.family;
  spec.mode = mode;
  spec.loss = info.loss;
  spec.layers = {{info.in, hidden, act}, {hidden, hidden, act}, {hidden, info.out, none}};
  return spec;
}

struct GroundTruth {
  Eigen::VectorXd y;
  bool degenerate = false;  // caller should resample the input
};

inline GroundTruth ground_truth(Task task, const Eigen::VectorXd& x, Index level) {
  const Index n = level;
  GroundTruth g;
  switch (task) {
    case Task::trace: {
      double tr = 0.0;
      for (Index i = 0; i < n; ++i) tr += x[i * n + i];
      g.y = Eigen::VectorXd::Constant(1, tr);
      return g;
    }
    case Task::diag_extract: {
      g.y = Eigen::VectorXd::Zero(n * n);
      for (Index i = 0; i < n; ++i) g.y[i * n + i] = x[i * n + i];
      return g;
    }
    case Task::sym_project: {
      g.y = Eigen::VectorXd::Zero(n * n);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) g.y[i * n + j] = 0.5 * (x[i * n + j] + x[j * n + i]);
      return g;
    }
    case Task::top_singular_vector: {
      Eigen::MatrixXd m(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) m(i, j) = x[i * n + j];
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      if (n >= 2 && sv[0] - sv[1] <= 1e-8) g.degenerate = true;
      Eigen::VectorXd v = svd.matrixV().col(0);
      for (Index i = 0; i < n; ++i) {
        if (std::abs(v[i]) > 1e-12) {
          if (v[i] < 0) v = -v;
          break;
        }
      }
      g.y = v;
      return g;
    }
    case Task::orth_invariance: {
      const Eigen::VectorXd x1 = x.head(n);
      const Eigen::VectorXd x2 = x.tail(n);
      const double n1 = x1.norm(), n2 = x2.norm();
      if (n1 < 1e-6 || n2 < 1e-6) g.degenerate = true;
      const double value = std::sin(n1) - 0.5 * n2 * n2 * n2 +
                           (g.degenerate ? 0.0 : x1.dot(x2) / (n1 * n2));
      g.y = Eigen::VectorXd::Constant(1, value);
      return g;
    }
  }
  throw ConfigError("unreachable task");
}

struct Dataset {
  Index level = 1;
  Eigen::MatrixXd inputs;   // dim x count
  Eigen::MatrixXd targets;  // out_dim x count
  std::uint64_t seed = 0;

  Index count() const { return inputs.cols(); }
};

// I.i.d. standard Gaussian inputs paired with exact targets; degenerate draws
// (tied singular values, near-zero parts) are rejected and redrawn from the
// same stream, which keeps generation deterministic.
inline Dataset make_dataset(Task task, Index level, Index count, std::uint64_t seed) {
  const TaskInfo info = task_info(task);
  const Index din = info.in.dim(level);
  const Index dout = info.out.dim(level);
  Dataset ds;
  ds.level = level;
  ds.seed = seed;
  ds.inputs.resize(din, count);
  ds.targets.resize(dout, count);
  Rng rng(seed);
  for (Index s = 0; s < count; ++s) {
    Eigen::VectorXd x(din);
    GroundTruth g;
    do {
      for (Index i = 0; i < din; ++i) x[i] = rng.normal();
      g = ground_truth(task, x, level);
    } while (g.degenerate);
    ds.inputs.col(s) = x;
    ds.targets.col(s) = g.y;
  }
  return ds;
}

inline double loss_value(LossKind kind, const Eigen::VectorXd& yhat, const Eigen::VectorXd& y) {
  switch (kind) {
    case LossKind::mse:
      return (yhat - y).squaredNorm() / static_cast<double>(y.size());
    case LossKind::squared_sine: {
      const double ny = yhat.squaredNorm(), nt = y.squaredNorm();
      if (ny == 0.0 || nt == 0.0) {
        std::cerr << "warning: squared-sine loss of a zero vector, returning 1\n";
        return 1.0;
      }
      const double d = yhat.dot(y);
      return 1.0 - d * d / (ny * nt);
    }
  }
  throw ConfigError("unreachable loss kind");
}

inline Eigen::VectorXd loss_gradient(LossKind kind, const Eigen::VectorXd& yhat,
                                     const Eigen::VectorXd& y) {
  switch (kind) {
    case LossKind::mse:
      return 2.0 / static_cast<double>(y.size()) * (yhat - y);
    case LossKind::squared_sine: {
      const double ny = yhat.squaredNorm(), nt = y.squaredNorm();
      if (ny == 0.0 || nt == 0.0) return Eigen::VectorXd::Zero(yhat.size());
      const double d = yhat.dot(y);
      return (-2.0 * d / (ny * nt)) * y + (2.0 * d * d / (ny * ny * nt)) * yhat;
    }
  }
  throw ConfigError("unreachable loss kind");
}

// ---------------------------------------------------------------------------
// Reverse-mode gradient over all coefficients.

namespace detail {

struct LayerTape {
  Eigen::MatrixXd input;  // X
  Eigen::MatrixXd pre;    // Z = W X + b
  Eigen::MatrixXd mid;    // R = bilinear(Z) + Z (or Z)
  Eigen::MatrixXd out;    // Y = h(R)
  Eigen::MatrixXd weight; // materialized W
};

inline void bilinear_backward(const SummandLayout& layout, const BilinearPairing& pairing,
                              const Eigen::VectorXd& coeffs, Index level, const Eigen::VectorXd& z,
                              const Eigen::VectorXd& grad_r, Eigen::VectorXd& grad_z,
                              Eigen::VectorXd& grad_coeffs) {
  using RowMat = detail::RowMat;
  for (std::size_t t = 0; t < pairing.terms.size(); ++t) {
    const auto& term = pairing.terms[t];
    const auto& ea = layout.entries[static_cast<std::size_t>(term.a)];
    const auto& eb = layout.entries[static_cast<std::size_t>(term.b)];
    const auto& et = layout.entries[static_cast<std::size_t>(term.target)];
    const Index m = int_pow(level, ea.order - 1);
    const Index k = int_pow(level, eb.order - 1);
    Eigen::Map<const RowMat> a(z.data() + ea.offset, m, level);
    Eigen::Map<const RowMat> b(z.data() + eb.offset, level, k);
    Eigen::Map<const RowMat> gc(grad_r.data() + et.offset, m, k);
    grad_coeffs[static_cast<Index>(t)] += (gc.array() * (a * b).array()).sum();
    const double c = coeffs[static_cast<Index>(t)];
    RowMat ga = c * gc * b.transpose();
    RowMat gb = c * a.transpose() * gc;
    grad_z.segment(ea.offset, ea.size) += Eigen::Map<const Eigen::VectorXd>(ga.data(), ea.size);
    grad_z.segment(eb.offset, eb.size) += Eigen::Map<const Eigen::VectorXd>(gb.data(), eb.size);
  }
}

inline void gated_backward(const SummandLayout& layout, const Eigen::VectorXd& r,
                           const Eigen::VectorXd& grad_y, Eigen::VectorXd& grad_r) {
  std::vector<Index> gate_offsets;
  for (const auto& e : layout.entries)
    if (e.order == 0) gate_offsets.push_back(e.offset);
  grad_r = Eigen::VectorXd::Zero(r.size());
  Index gate_index = 0;
  for (const auto& e : layout.entries) {
    if (e.order == 0) {
      const double a = r[e.offset];
      const double s = scalar_fn_eval(ScalarFn::sigmoid, a);
      const double ds = scalar_fn_derivative(ScalarFn::sigmoid, a);
      grad_r[e.offset] += grad_y[e.offset] * (s + a * ds);
    } else {
      const Index go = gate_offsets[static_cast<std::size_t>(gate_index)];
      const double alpha = r[go];
      const double s = scalar_fn_eval(ScalarFn::sigmoid, alpha);
      const double ds = scalar_fn_derivative(ScalarFn::sigmoid, alpha);
      grad_r.segment(e.offset, e.size) += s * grad_y.segment(e.offset, e.size);
      grad_r[go] += ds * grad_y.segment(e.offset, e.size).dot(r.segment(e.offset, e.size));
      ++gate_index;
    }
  }
}

}  // namespace detail

// Forward pass through an instance with explicit parameters, without building
// a TrainedNetwork; weights are materialized once per call.
inline Eigen::MatrixXd forward_with_params(const NetworkInstance& inst,
                                           const std::vector<LayerParams>& params,
                                           const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd cur = inputs;
  for (std::size_t i = 0; i < inst.layers.size(); ++i) {
    const auto& li = inst.layers[i];
    const auto& layer = inst.spec.layers[i];
    const Eigen::MatrixXd w = detail::materialize_weight(li, params[i].weight_coefficients);
    const Eigen::VectorXd bias = li.biases.materialize(params[i].bias_coefficients);
    Eigen::MatrixXd z = w * cur;
    z.colwise() += bias;
    Eigen::MatrixXd out(z.rows(), z.cols());
    for (Index s = 0; s < z.cols(); ++s)
      out.col(s) = detail::activation_forward(layer, li, params[i].activation_coefficients,
                                              z.col(s), inst.level);
    cur = std::move(out);
  }
  return cur;
}

inline double batch_loss(const NetworkInstance& inst, const std::vector<LayerParams>& params,
                         const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  const Eigen::MatrixXd out = forward_with_params(inst, params, inputs);
  double total = 0.0;
  for (Index s = 0; s < out.cols(); ++s)
    total += loss_value(inst.spec.loss, out.col(s), targets.col(s));
  return total / static_cast<double>(out.cols());
}

struct GradientResult {
  double loss = 0.0;
  std::vector<LayerParams> gradients;  // same shapes as the parameters
};

// Mean batch loss and its exact gradient with respect to every weight
// coefficient, bias coefficient and activation coefficient.
inline GradientResult loss_and_gradient(const NetworkInstance& inst,
                                        const std::vector<LayerParams>& params,
                                        const Eigen::MatrixXd& inputs,
                                        const Eigen::MatrixXd& targets) {
  const Index batch = inputs.cols();
  if (batch == 0) throw ConfigError("gradient of an empty batch");
  const std::size_t nl = inst.layers.size();
  std::vector<detail::LayerTape> tape(nl);

  // Forward.
  Eigen::MatrixXd cur = inputs;
  for (std::size_t i = 0; i < nl; ++i) {
    const auto& li = inst.layers[i];
    const auto& layer = inst.spec.layers[i];
    auto& t = tape[i];
    t.input = std::move(cur);
    t.weight = detail::materialize_weight(li, params[i].weight_coefficients);
    const Eigen::VectorXd bias = li.biases.materialize(params[i].bias_coefficients);
    t.pre = t.weight * t.input;
    t.pre.colwise() += bias;
    if (layer.activation.bilinear_residual) {
      t.mid.resize(t.pre.rows(), batch);
      for (Index s = 0; s < batch; ++s)
        t.mid.col(s) = t.pre.col(s) + bilinear_apply(li.out_layout, li.pairing,
                                                     params[i].activation_coefficients,
                                                     t.pre.col(s), inst.level);
    } else {
      t.mid = t.pre;
    }
    switch (layer.activation.base) {
      case ActivationSpec::Base::identity:
        t.out = t.mid;
        break;
      case ActivationSpec::Base::entrywise:
        t.out = t.mid.unaryExpr([&](double v) { return scalar_fn_eval(layer.activation.fn, v); });
        break;
      case ActivationSpec::Base::gated:
        t.out.resize(t.mid.rows(), batch);
        for (Index s = 0; s < batch; ++s) t.out.col(s) = gated_apply(li.out_layout, t.mid.col(s));
        break;
    }
    cur = t.out;
  }

  GradientResult res;
  Eigen::MatrixXd grad_y(cur.rows(), batch);
  for (Index s = 0; s < batch; ++s) {
    res.loss += loss_value(inst.spec.loss, cur.col(s), targets.col(s));
    grad_y.col(s) = loss_gradient(inst.spec.loss, cur.col(s), targets.col(s));
  }
  res.loss /= static_cast<double>(batch);
  grad_y /= static_cast<double>(batch);

  // Backward.
  res.gradients.resize(nl);
  for (std::size_t ii = nl; ii-- > 0;) {
    const auto& li = inst.layers[ii];
    const auto& layer = inst.spec.layers[ii];
    const auto& t = tape[ii];
    auto& g = res.gradients[ii];
    g.activation_coefficients = Eigen::VectorXd::Zero(params[ii].activation_coefficients.size());

    Eigen::MatrixXd grad_r;
    switch (layer.activation.base) {
      case ActivationSpec::Base::identity:
        grad_r = grad_y;
        break;
      case ActivationSpec::Base::entrywise:
        grad_r = grad_y.array() *
                 t.mid.unaryExpr([&](double v) { return scalar_fn_derivative(layer.activation.fn, v); })
                     .array();
        break;
      case ActivationSpec::Base::gated: {
        grad_r.resize(grad_y.rows(), batch);
        for (Index s = 0; s < batch; ++s) {
          Eigen::VectorXd gr;
          detail::gated_backward(li.out_layout, t.mid.col(s), grad_y.col(s), gr);
          grad_r.col(s) = gr;
        }
        break;
      }
    }

    Eigen::MatrixXd grad_z;
    if (layer.activation.bilinear_residual) {
      grad_z = grad_r;
      for (Index s = 0; s < batch; ++s) {
        Eigen::VectorXd gz = grad_z.col(s);
        detail::bilinear_backward(li.out_layout, li.pairing, params[ii].activation_coefficients,
                                  inst.level, t.pre.col(s), grad_r.col(s), gz,
                                  g.activation_coefficients);
        grad_z.col(s) = gz;
      }
    } else {
      grad_z = grad_r;
    }

    g.bias_coefficients = li.biases.coefficients_of(grad_z.rowwise().sum());
    Eigen::MatrixXd grad_w = grad_z * t.input.transpose();
    g.weight_coefficients = li.weights.coefficients_of(
        Eigen::Map<const Eigen::VectorXd>(grad_w.data(), grad_w.size()));
    grad_y = t.weight.transpose() * grad_z;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Optimizer.

struct TrainHyperparams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Index epochs = 10'000;
  Index patience = 500;
  Index batch = 0;  // 0 = full batch
  bool fix_bilinear_coefficients = false;
  bool allow_underdetermined = false;
};

// Smallest training level at which the extension of this spec is unique.
inline Index required_training_level(const NetworkSpec& spec) {
  Index req = 1;
  for (const auto& layer : spec.layers) {
    if (spec.mode == BasisMode::free) {
      req = std::max(req, SeqExpr::tensor({layer.in, layer.out}).degrees().presentation);
      req = std::max(req, layer.out.degrees().presentation);
    } else {
      req = std::max(req, layer.in.degrees().presentation);
      req = std::max(req, layer.out.degrees().presentation);
    }
  }
  return req;
}

namespace detail {

inline Index parameter_count(const std::vector<LayerParams>& p) {
  Index n = 0;
  for (const auto& lp : p)
    n += lp.weight_coefficients.size() + lp.bias_coefficients.size() +
         lp.activation_coefficients.size();
  return n;
}

inline Eigen::VectorXd pack(const std::vector<LayerParams>& p) {
  Eigen::VectorXd v(parameter_count(p));
  Index at = 0;
  for (const auto& lp : p) {
    v.segment(at, lp.weight_coefficients.size()) = lp.weight_coefficients;
    at += lp.weight_coefficients.size();
    v.segment(at, lp.bias_coefficients.size()) = lp.bias_coefficients;
    at += lp.bias_coefficients.size();
    v.segment(at, lp.activation_coefficients.size()) = lp.activation_coefficients;
    at += lp.activation_coefficients.size();
  }
  return v;
}

inline std::vector<LayerParams> unpack(const std::vector<LayerParams>& shapes,
                                       const Eigen::VectorXd& v) {
  std::vector<LayerParams> p = shapes;
  Index at = 0;
  for (auto& lp : p) {
    lp.weight_coefficients = v.segment(at, lp.weight_coefficients.size());
    at += lp.weight_coefficients.size();
    lp.bias_coefficients = v.segment(at, lp.bias_coefficients.size());
    at += lp.bias_coefficients.size();
    lp.activation_coefficients = v.segment(at, lp.activation_coefficients.size());
    at += lp.activation_coefficients.size();
  }
  return p;
}

}  // namespace detail

// Adam on a flat parameter vector; step() returns the updated iterate.
class AdamOptimizer {
 public:
  AdamOptimizer(Index size, const TrainHyperparams& hp)
      : hp_(hp), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  Eigen::VectorXd step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = hp_.beta1 * m_ + (1.0 - hp_.beta1) * grad;
    v_ = hp_.beta2 * v_ + (1.0 - hp_.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
    Eigen::VectorXd mhat = m_ / bc1;
    Eigen::VectorXd vhat = v_ / bc2;
    return params - hp_.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + hp_.eps).matrix());
  }

 private:
  TrainHyperparams hp_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  Index t_ = 0;
};

struct TrainReport {
  Index epochs_run = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  double final_train_loss = std::numeric_limits<double>::infinity();
};

// Trains coefficients with Adam, deterministic given (seed, thread count 1).
// A 90/10 train/validation split drives early stopping; the returned network
// is the best-validation snapshot.
inline TrainedNetwork train(const NetworkSpec& spec, const Dataset& dataset,
                            const TrainHyperparams& hp, std::uint64_t seed,
                            const BasisOptions& opts = {}, TrainReport* report = nullptr) {
  spec.validate();
  if (dataset.count() == 0) throw ConfigError("training requires a nonempty dataset");
  const Index required = required_training_level(spec);
  if (dataset.level < required && !hp.allow_underdetermined)
    throw ConfigError("training level " + std::to_string(dataset.level) +
                      " is below the level " + std::to_string(required) +
                      " required for a unique " + to_string(spec.mode) +
                      " extension; set allow_underdetermined to accept a non-unique model");

  NetworkInstance inst = NetworkInstance::build(spec, dataset.level, opts);

  // Initialization: small Gaussian coefficients, N(0, 1/100).
  Rng init_rng(Rng::derive(seed, 0xA11));
  std::vector<LayerParams> params(inst.layers.size());
  for (std::size_t i = 0; i < inst.layers.size(); ++i) {
    auto& p = params[i];
    p.weight_coefficients.resize(inst.layers[i].weights.count());
    p.bias_coefficients.resize(inst.layers[i].biases.count());
    const Index act = inst.spec.layers[i].activation.bilinear_residual
                          ? inst.layers[i].pairing.coefficient_count()
                          : 0;
    p.activation_coefficients.resize(act);
    for (Index j = 0; j < p.weight_coefficients.size(); ++j)
      p.weight_coefficients[j] = 0.1 * init_rng.normal();
    for (Index j = 0; j < p.bias_coefficients.size(); ++j)
      p.bias_coefficients[j] = 0.1 * init_rng.normal();
    for (Index j = 0; j < act; ++j)
      p.activation_coefficients[j] = hp.fix_bilinear_coefficients ? 1.0 : 0.1 * init_rng.normal();
  }

  // 90/10 split on a seeded shuffle.
  const Index count = dataset.count();
  std::vector<Index> order(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng split_rng(Rng::derive(seed, 0x591));
  for (Index i = count - 1; i > 0; --i) {
    const Index j = static_cast<Index>(split_rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const Index val_count = count / 10;
  const Index train_count = count - val_count;
  Eigen::MatrixXd train_x(dataset.inputs.rows(), train_count);
  Eigen::MatrixXd train_y(dataset.targets.rows(), train_count);
  for (Index i = 0; i < train_count; ++i) {
    train_x.col(i) = dataset.inputs.col(order[static_cast<std::size_t>(i)]);
    train_y.col(i) = dataset.targets.col(order[static_cast<std::size_t>(i)]);
  }
  Eigen::MatrixXd val_x = val_count > 0 ? Eigen::MatrixXd(dataset.inputs.rows(), val_count) : train_x;
  Eigen::MatrixXd val_y = val_count > 0 ? Eigen::MatrixXd(dataset.targets.rows(), val_count) : train_y;
  for (Index i = 0; i < val_count; ++i) {
    val_x.col(i) = dataset.inputs.col(order[static_cast<std::size_t>(train_count + i)]);
    val_y.col(i) = dataset.targets.col(order[static_cast<std::size_t>(train_count + i)]);
  }

  const std::vector<LayerParams> shapes = params;
  Eigen::VectorXd theta = detail::pack(params);
  AdamOptimizer adam(theta.size(), hp);

  // Indices of frozen coordinates when the bilinear coefficients are pinned.
  std::vector<char> frozen(static_cast<std::size_t>(theta.size()), 0);
  if (hp.fix_bilinear_coefficients) {
    Index at = 0;
    for (const auto& lp : shapes) {
      at += lp.weight_coefficients.size() + lp.bias_coefficients.size();
      for (Index j = 0; j < lp.activation_coefficients.size(); ++j)
        frozen[static_cast<std::size_t>(at + j)] = 1;
      at += lp.activation_coefficients.size();
    }
  }

  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = theta;
  Index since_best = 0;
  double last_train_loss = std::numeric_limits<double>::infinity();
  Index epochs_run = 0;

  const Index batch_size = hp.batch > 0 ? std::min(hp.batch, train_count) : train_count;
  for (Index epoch = 0; epoch < hp.epochs; ++epoch) {
    ++epochs_run;
    for (Index start = 0; start < train_count; start += batch_size) {
      const Index len = std::min(batch_size, train_count - start);
      const auto cur = detail::unpack(shapes, theta);
      GradientResult g = loss_and_gradient(inst, cur, train_x.middleCols(start, len),
                                           train_y.middleCols(start, len));
      last_train_loss = g.loss;
      if (!std::isfinite(g.loss))
        throw NumericalError("training diverged (non-finite loss at epoch " +
                             std::to_string(epoch) + "); try a smaller learning rate");
      Eigen::VectorXd grad = detail::pack(g.gradients);
      for (Index j = 0; j < grad.size(); ++j)
        if (frozen[static_cast<std::size_t>(j)]) grad[j] = 0.0;
      theta = adam.step(theta, grad);
    }

    // Validation for the early-stopping snapshot.
    const double val_loss = batch_loss(inst, detail::unpack(shapes, theta), val_x, val_y);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_theta = theta;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }

  if (report) {
    report->epochs_run = epochs_run;
    report->best_validation_loss = best_val;
    report->final_train_loss = last_train_loss;
  }
  return TrainedNetwork::create(std::move(inst), detail::unpack(shapes, best_theta));
}

}  // namespace anydim
