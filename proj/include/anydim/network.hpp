#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "anydim/compatibility.hpp"
#include "anydim/errors.hpp"

namespace anydim {

enum class ScalarFn { relu, tanh_fn, sigmoid };

inline double scalar_fn_eval(ScalarFn f, double x) {
  switch (f) {
    case ScalarFn::relu: return x > 0.0 ? x : 0.0;
    case ScalarFn::tanh_fn: return std::tanh(x);
    case ScalarFn::sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

inline double scalar_fn_derivative(ScalarFn f, double x) {
  switch (f) {
    case ScalarFn::relu: return x > 0.0 ? 1.0 : 0.0;
    case ScalarFn::tanh_fn: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ScalarFn::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

// sigma(0) = 0 is what lets an entrywise nonlinearity commute with
// zero-padding.
inline bool scalar_fn_zero_fixing(ScalarFn f) { return f != ScalarFn::sigmoid; }

// Activation attached to a layer: either plain (identity / entrywise /
// gated), or the residual composition h(bilinear(x) + x) with h one of the
// plain kinds.
struct ActivationSpec {
  enum class Base { identity, entrywise, gated };

  Base base = Base::identity;
  ScalarFn fn = ScalarFn::relu;  // entrywise nonlinearity; gates always use sigmoid
  bool bilinear_residual = false;

  std::string name() const {
    std::string h;
    switch (base) {
      case Base::identity: h = "identity"; break;
      case Base::gated: h = "gated"; break;
      case Base::entrywise:
        h = fn == ScalarFn::relu ? "relu" : (fn == ScalarFn::tanh_fn ? "tanh" : "sigmoid");
        break;
    }
    return bilinear_residual ? "bilinear+" + h : h;
  }

  static ActivationSpec parse(const std::string& s) {
    ActivationSpec a;
    std::string body = s;
    if (body.rfind("bilinear+", 0) == 0) {
      a.bilinear_residual = true;
      body = body.substr(9);
    }
    if (body == "identity") a.base = Base::identity;
    else if (body == "gated") a.base = Base::gated;
    else if (body == "relu") { a.base = Base::entrywise; a.fn = ScalarFn::relu; }
    else if (body == "tanh") { a.base = Base::entrywise; a.fn = ScalarFn::tanh_fn; }
    else if (body == "sigmoid") { a.base = Base::entrywise; a.fn = ScalarFn::sigmoid; }
    else throw ConfigError("unknown activation '" + s + "'");
    return a;
  }
};

struct LayerSpec {
  SeqExpr in;
  SeqExpr out;
  ActivationSpec activation;
};

enum class LossKind { mse, squared_sine };

inline std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "squared_sine"; }
inline LossKind loss_from_string(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "squared_sine") return LossKind::squared_sine;
  throw ConfigError("unknown loss '" + s + "'");
}

// Per-level layout of a sum-of-tensor-powers expression; the unit in which
// the bilinear and gated activations think.
struct SummandLayout {
  struct Entry {
    Index order = 0;   // 0 = scalar channel
    Index offset = 0;  // at the instantiated level
    Index size = 1;
  };
  std::vector<Entry> entries;
  Index total = 0;
  Index scalar_count = 0;
  Index non_scalar_count = 0;

  static SummandLayout make(const SeqExpr& expr, Index level) {
    SummandLayout layout;
    for (const auto& part : expr.summands()) {
      const Index order = part.base_power_order();
      if (order < 0)
        throw ConfigError("expression '" + expr.to_string() +
                          "' is not a sum of tensor powers of the base sequence");
      Entry e;
      e.order = order;
      e.offset = layout.total;
      e.size = part.dim(level);
      layout.total += e.size;
      if (order == 0) ++layout.scalar_count; else ++layout.non_scalar_count;
      layout.entries.push_back(e);
    }
    return layout;
  }
};

// Admissible contractions between summands of a hidden expression: ordered
// pairs (a, b) of tensor summands whose single-index contraction (last index
// of a against first index of b) lands in summand `target`. One learnable
// coefficient per term; the list depends only on tensor orders, so it is the
// same at every level.
struct BilinearPairing {
  struct Term {
    Index a = 0;
    Index b = 0;
    Index target = 0;
  };
  std::vector<Term> terms;

  static BilinearPairing make(const SeqExpr& expr) {
    BilinearPairing pairing;
    std::vector<Index> orders;
    for (const auto& part : expr.summands()) {
      const Index k = part.base_power_order();
      if (k < 0)
        throw ConfigError("bilinear activation requires a sum of tensor powers");
      orders.push_back(k);
    }
    const Index count = static_cast<Index>(orders.size());
    for (Index t = 0; t < count; ++t)
      for (Index a = 0; a < count; ++a)
        for (Index b = 0; b < count; ++b)
          if (orders[a] >= 1 && orders[b] >= 1 && orders[a] + orders[b] - 2 == orders[t])
            pairing.terms.push_back({a, b, t});
    return pairing;
  }

  Index coefficient_count() const { return static_cast<Index>(terms.size()); }
};

namespace detail {

inline Index int_pow(Index base, Index exp) {
  Index r = 1;
  for (Index i = 0; i < exp; ++i) r *= base;
  return r;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Contraction of the last index of `xa` (order ka) with the first index of
// `xb` (order kb) over the base dimension n; row-major layouts throughout.
inline Eigen::VectorXd contract_pair(const Eigen::VectorXd& xa, Index ka, const Eigen::VectorXd& xb,
                                     Index kb, Index n) {
  const Index m = int_pow(n, ka - 1);
  const Index k = int_pow(n, kb - 1);
  Eigen::Map<const RowMat> a(xa.data(), m, n);
  Eigen::Map<const RowMat> b(xb.data(), n, k);
  RowMat c = a * b;
  return Eigen::Map<const Eigen::VectorXd>(c.data(), m * k);
}

}  // namespace detail

// Bilinear interaction: output summand `target` accumulates
// coeff * contract(x_a, x_b) over all admissible ordered pairs; summands with
// no admissible pair receive zero.
inline Eigen::VectorXd bilinear_apply(const SummandLayout& layout, const BilinearPairing& pairing,
                                      const Eigen::VectorXd& coefficients,
                                      const Eigen::VectorXd& x, Index level) {
  if (coefficients.size() != pairing.coefficient_count())
    throw ConfigError("bilinear: coefficient count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(layout.total);
  for (std::size_t t = 0; t < pairing.terms.size(); ++t) {
    const auto& term = pairing.terms[t];
    const auto& ea = layout.entries[static_cast<std::size_t>(term.a)];
    const auto& eb = layout.entries[static_cast<std::size_t>(term.b)];
    const auto& et = layout.entries[static_cast<std::size_t>(term.target)];
    const Eigen::VectorXd c = detail::contract_pair(x.segment(ea.offset, ea.size), ea.order,
                                                    x.segment(eb.offset, eb.size), eb.order, level);
    out.segment(et.offset, et.size) += coefficients[static_cast<Index>(t)] * c;
  }
  return out;
}

// Gated nonlinearity: the j-th non-scalar summand is scaled by sigmoid of the
// j-th scalar channel (declaration order); scalar channels pass through
// alpha * sigmoid(alpha).
inline Eigen::VectorXd gated_apply(const SummandLayout& layout, const Eigen::VectorXd& x) {
  if (layout.scalar_count < layout.non_scalar_count)
    throw ConfigError("gated activation needs at least as many scalar channels as gated summands");
  std::vector<double> gates;
  for (const auto& e : layout.entries)
    if (e.order == 0) gates.push_back(x[e.offset]);
  Eigen::VectorXd out(layout.total);
  Index gate_index = 0;
  for (const auto& e : layout.entries) {
    if (e.order == 0) {
      const double a = x[e.offset];
      out[e.offset] = a * scalar_fn_eval(ScalarFn::sigmoid, a);
    } else {
      const double s = scalar_fn_eval(ScalarFn::sigmoid, gates[static_cast<std::size_t>(gate_index)]);
      out.segment(e.offset, e.size) = s * x.segment(e.offset, e.size);
      ++gate_index;
    }
  }
  return out;
}

struct NetworkSpec {
  GroupFamily family;
  std::vector<LayerSpec> layers;
  BasisMode mode = BasisMode::free;
  LossKind loss = LossKind::mse;

  const SeqExpr& input_expr() const { return layers.front().in; }
  const SeqExpr& output_expr() const { return layers.back().out; }

  void validate() const {
    if (layers.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      if (!(layers[i].out == layers[i + 1].in))
        throw ConfigError("layer " + std::to_string(i + 1) +
                          " input does not chain with the previous output");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& layer = layers[i];
      const auto& act = layer.activation;
      const bool all_scalar = layer.out.base_power_order() == 0 ||
                              [&] {
                                for (const auto& p : layer.out.summands())
                                  if (p.base_power_order() != 0) return false;
                                return true;
                              }();
      if (act.base == ActivationSpec::Base::entrywise && !scalar_fn_zero_fixing(act.fn) &&
          !all_scalar)
        throw ConfigError("layer " + std::to_string(i) +
                          ": entrywise activation must fix zero on zero-padding sequences");
      if (act.base == ActivationSpec::Base::gated || act.bilinear_residual) {
        const SummandLayout layout = SummandLayout::make(layer.out, 1);
        if (act.base == ActivationSpec::Base::gated &&
            layout.scalar_count < layout.non_scalar_count)
          throw ConfigError("layer " + std::to_string(i) + ": gated activation needs " +
                            std::to_string(layout.non_scalar_count) + " scalar channels, found " +
                            std::to_string(layout.scalar_count));
      }
    }
  }
};

// A network spec instantiated at a level: bases for every layer plus the
// layout data the activations need. Weight-space elements are vec'd
// column-stacking, so reshaping uses Eigen's native column-major mapping.
struct LayerInstance {
  EqBasis weights;
  EqBasis biases;
  Index dim_in = 0;
  Index dim_out = 0;
  SummandLayout out_layout;  // populated when the activation needs it
  BilinearPairing pairing;   // populated for bilinear residual activations
};

struct NetworkInstance {
  NetworkSpec spec;
  Index level = 1;
  std::vector<LayerInstance> layers;

  static NetworkInstance build(const NetworkSpec& spec, Index level,
                               const BasisOptions& opts = {}) {
    spec.validate();
    NetworkInstance inst;
    inst.spec = spec;
    inst.level = level;
    for (const auto& layer : spec.layers) {
      LayerInstance li;
      li.weights = weight_basis(layer.in, layer.out, spec.family, level, spec.mode, opts);
      li.biases = bias_basis(layer.out, spec.family, level, spec.mode, opts);
      li.dim_in = layer.in.dim(level);
      li.dim_out = layer.out.dim(level);
      if (layer.activation.base == ActivationSpec::Base::gated || layer.activation.bilinear_residual)
        li.out_layout = SummandLayout::make(layer.out, level);
      if (layer.activation.bilinear_residual) li.pairing = BilinearPairing::make(layer.out);
      inst.layers.push_back(std::move(li));
    }
    return inst;
  }
};

// Learned degrees of freedom of one layer.
struct LayerParams {
  Eigen::VectorXd weight_coefficients;
  Eigen::VectorXd bias_coefficients;
  Eigen::VectorXd activation_coefficients;  // bilinear pairing coefficients
};

namespace detail {

inline Eigen::MatrixXd materialize_weight(const LayerInstance& li, const Eigen::VectorXd& coeffs) {
  Eigen::VectorXd vec = li.weights.materialize(coeffs);
  return Eigen::Map<const Eigen::MatrixXd>(vec.data(), li.dim_out, li.dim_in);
}

inline Eigen::VectorXd activation_forward(const LayerSpec& layer, const LayerInstance& li,
                                          const Eigen::VectorXd& act_coeffs,
                                          const Eigen::VectorXd& z, Index level) {
  const auto& act = layer.activation;
  Eigen::VectorXd r = z;
  if (act.bilinear_residual) r += bilinear_apply(li.out_layout, li.pairing, act_coeffs, z, level);
  switch (act.base) {
    case ActivationSpec::Base::identity:
      return r;
    case ActivationSpec::Base::entrywise: {
      Eigen::VectorXd y(r.size());
      for (Index i = 0; i < r.size(); ++i) y[i] = scalar_fn_eval(act.fn, r[i]);
      return y;
    }
    case ActivationSpec::Base::gated:
      return gated_apply(li.out_layout, r);
  }
  throw ConfigError("unreachable activation kind");
}

}  // namespace detail

// An immutable trained (or hand-assembled) network at a fixed level, with its
// affine maps materialized once from the basis coefficients.
class TrainedNetwork {
 public:
  TrainedNetwork() = default;

  static TrainedNetwork create(const NetworkSpec& spec, Index level,
                               std::vector<LayerParams> params, const BasisOptions& opts = {}) {
    return create(NetworkInstance::build(spec, level, opts), std::move(params));
  }

  static TrainedNetwork create(NetworkInstance instance, std::vector<LayerParams> params) {
    TrainedNetwork net;
    if (params.size() != instance.layers.size())
      throw ConfigError("network parameters do not match the layer count");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& li = instance.layers[i];
      const auto& p = params[i];
      if (p.weight_coefficients.size() != li.weights.count() ||
          p.bias_coefficients.size() != li.biases.count())
        throw ConfigError("layer " + std::to_string(i) + ": coefficient lengths do not match bases");
      const Index needed = instance.spec.layers[i].activation.bilinear_residual
                               ? li.pairing.coefficient_count()
                               : 0;
      if (p.activation_coefficients.size() != needed)
        throw ConfigError("layer " + std::to_string(i) + ": activation coefficient length mismatch");
      net.weights_.push_back(detail::materialize_weight(li, p.weight_coefficients));
      net.biases_.push_back(li.biases.materialize(p.bias_coefficients));
    }
    net.instance_ = std::make_shared<NetworkInstance>(std::move(instance));
    net.params_ = std::move(params);
    return net;
  }

  const NetworkSpec& spec() const { return instance_->spec; }
  Index level() const { return instance_->level; }
  const NetworkInstance& instance() const { return *instance_; }
  const std::vector<LayerParams>& params() const { return params_; }
  const Eigen::MatrixXd& layer_weight(std::size_t i) const { return weights_[i]; }
  const Eigen::VectorXd& layer_bias(std::size_t i) const { return biases_[i]; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    if (x.size() != instance_->layers.front().dim_in)
      throw ConfigError("forward: input has dimension " + std::to_string(x.size()) +
                        ", expected " + std::to_string(instance_->layers.front().dim_in));
    Eigen::VectorXd cur = x;
    for (std::size_t i = 0; i < instance_->layers.size(); ++i) {
      const auto& li = instance_->layers[i];
      Eigen::VectorXd z = weights_[i] * cur + biases_[i];
      cur = detail::activation_forward(instance_->spec.layers[i], li,
                                       params_[i].activation_coefficients, z, instance_->level);
    }
    return cur;
  }

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(instance_->layers.back().dim_out, x.cols());
    for (Index s = 0; s < x.cols(); ++s) out.col(s) = forward(x.col(s));
    return out;
  }

 private:
  std::shared_ptr<const NetworkInstance> instance_;
  std::vector<LayerParams> params_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

// Extends (or restricts) a trained network to another level: weights and
// biases are carried through the corresponding level-`target` bases, the
// dimension-independent activation coefficients are reused as-is.
inline TrainedNetwork extend_network(const TrainedNetwork& net, Index target_level,
                                     const BasisOptions& opts = {}) {
  const Index source_level = net.level();
  if (target_level == source_level) return net;
  NetworkInstance target = NetworkInstance::build(net.spec(), target_level, opts);
  std::vector<LayerParams> params;
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    const auto& src_li = net.instance().layers[i];
    const auto& tgt_li = target.layers[i];
    LayerParams p;
    p.activation_coefficients = net.params()[i].activation_coefficients;
    try {
      const Eigen::VectorXd w_vec =
          src_li.weights.materialize(net.params()[i].weight_coefficients);
      const Eigen::VectorXd b_vec = src_li.biases.materialize(net.params()[i].bias_coefficients);
      if (target_level > source_level) {
        p.weight_coefficients = extend_to_basis(tgt_li.weights, w_vec, source_level).coefficients;
        p.bias_coefficients = extend_to_basis(tgt_li.biases, b_vec, source_level).coefficients;
      } else {
        p.weight_coefficients = restrict_to_basis(tgt_li.weights, w_vec, source_level).coefficients;
        p.bias_coefficients = restrict_to_basis(tgt_li.biases, b_vec, source_level).coefficients;
      }
    } catch (const std::exception& e) {
      throw NumericalError("layer " + std::to_string(i) + ": " + e.what());
    }
    params.push_back(std::move(p));
  }
  return TrainedNetwork::create(std::move(target), std::move(params));
}

}  // namespace anydim
