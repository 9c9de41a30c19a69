#include "anydim/network.hpp"

#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace anydim;

namespace {

const GroupFamily kSn{GroupKind::symmetric};
const GroupFamily kOn{GroupKind::orthogonal};

Eigen::VectorXd vec_of_identity(Index n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n * n);
  for (Index i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return v;
}

TEST(BilinearPairing, TermsFollowOrderArithmetic) {
  const SeqExpr hidden = SeqExpr::parse("2*V + 2*V^2");
  const BilinearPairing pairing = BilinearPairing::make(hidden);
  // Targets of order 1 take (1,2)- and (2,1)-order pairs; order-2 targets take
  // (2,2) pairs; the would-be scalar outputs have no landing summand.
  Index to_vector = 0, to_matrix = 0;
  for (const auto& t : pairing.terms) {
    if (t.target <= 1) ++to_vector;
    else ++to_matrix;
  }
  EXPECT_EQ(to_vector, 2 * 8);
  EXPECT_EQ(to_matrix, 2 * 4);
  EXPECT_EQ(pairing.coefficient_count(), 24);
}

TEST(Bilinear, ScalarTargetTakesInnerProduct) {
  const SeqExpr expr = SeqExpr::parse("S + 2*V");
  const Index n = 3;
  const SummandLayout layout = SummandLayout::make(expr, n);
  const BilinearPairing pairing = BilinearPairing::make(expr);
  ASSERT_EQ(pairing.coefficient_count(), 4);  // ordered pairs of the two vectors
  // Coefficient 1 belongs to the ordered pair (first vector, second vector).
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(4);
  const double c = 0.75;
  coeffs[1] = c;
  Rng rng(3);
  const Eigen::VectorXd v = oracles::random_dense(n, 1, rng);
  const Eigen::VectorXd u = oracles::random_dense(n, 1, rng);
  Eigen::VectorXd x(1 + 2 * n);
  x << 0.0, v, u;
  const Eigen::VectorXd out = bilinear_apply(layout, pairing, coeffs, x, n);
  EXPECT_NEAR(out[0], c * v.dot(u), 1e-12);
  EXPECT_LT(out.tail(2 * n).norm(), 1e-15);
}

TEST(Bilinear, ZeroInputGivesZero) {
  const SeqExpr expr = SeqExpr::parse("V + V^2");
  const SummandLayout layout = SummandLayout::make(expr, 3);
  const BilinearPairing pairing = BilinearPairing::make(expr);
  Eigen::VectorXd coeffs = Eigen::VectorXd::Ones(pairing.coefficient_count());
  const Eigen::VectorXd out =
      bilinear_apply(layout, pairing, coeffs, Eigen::VectorXd::Zero(layout.total), 3);
  EXPECT_EQ(out.norm(), 0.0);
}

TEST(Bilinear, SingleIndexContraction) {
  // x_a = e1 (x) e2 in the matrix summand, x_b = e2 in the vector summand;
  // the vector target receives c * e1.
  const SeqExpr expr = SeqExpr::parse("V + V^2");
  const Index n = 2;
  const SummandLayout layout = SummandLayout::make(expr, n);
  const BilinearPairing pairing = BilinearPairing::make(expr);
  // Terms in (target, a, b) order: (0,0,1), (0,1,0), (1,1,1).
  ASSERT_EQ(pairing.coefficient_count(), 3);
  ASSERT_EQ(pairing.terms[1].a, 1);
  ASSERT_EQ(pairing.terms[1].b, 0);
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(3);
  const double c = 2.5;
  coeffs[1] = c;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout.total);
  x[1] = 1.0;                // vector summand: e2
  x[n + 0 * n + 1] = 1.0;    // matrix summand: entry (0, 1) = e1 (x) e2
  const Eigen::VectorXd out = bilinear_apply(layout, pairing, coeffs, x, n);
  EXPECT_NEAR(out[0], c, 1e-14);  // e1 component of the vector target
  EXPECT_NEAR(out[1], 0.0, 1e-14);
  EXPECT_LT(out.tail(n * n).norm(), 1e-14);
}

TEST(Gated, SigmoidOfZeroHalvesTheChannel) {
  const SeqExpr expr = SeqExpr::parse("S + V");
  const Index n = 4;
  const SummandLayout layout = SummandLayout::make(expr, n);
  Eigen::VectorXd x(1 + n);
  x << 0.0, 1.0, -2.0, 3.0, 0.5;
  const Eigen::VectorXd out = gated_apply(layout, x);
  EXPECT_NEAR(out[0], 0.0, 1e-15);  // alpha * sigmoid(alpha) at alpha = 0
  EXPECT_LT((out.tail(n) - 0.5 * x.tail(n)).norm(), 1e-12);
  // Zero tensor stays zero regardless of the gate.
  Eigen::VectorXd zero_x = Eigen::VectorXd::Zero(1 + n);
  zero_x[0] = 3.0;
  EXPECT_LT(gated_apply(layout, zero_x).tail(n).norm(), 1e-15);
}

TEST(Gated, EquivariantUnderRotations) {
  const SeqExpr expr = SeqExpr::parse("2*S + V");
  const Index n = 3;
  const SummandLayout layout = SummandLayout::make(expr, n);
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd g = random_element(kOn, n, rng);
    const Eigen::VectorXd x = oracles::random_dense(layout.total, 1, rng);
    const Eigen::VectorXd lhs = gated_apply(layout, apply_action(expr, g, x, n));
    const Eigen::VectorXd rhs = apply_action(expr, g, gated_apply(layout, x), n);
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
  }
}

TEST(Gated, RequiresEnoughScalarChannels) {
  const SeqExpr expr = SeqExpr::parse("S + 2*V");
  const SummandLayout layout = SummandLayout::make(expr, 3);
  EXPECT_THROW(gated_apply(layout, Eigen::VectorXd::Zero(layout.total)), ConfigError);
}

TEST(NetworkSpec, ValidationCatchesBadSpecs) {
  NetworkSpec chain_mismatch;
  chain_mismatch.family = kSn;
  chain_mismatch.layers = {{SeqExpr::base(), SeqExpr::tensor_power(2), ActivationSpec{}},
                           {SeqExpr::base(), SeqExpr::base(), ActivationSpec{}}};
  EXPECT_THROW(chain_mismatch.validate(), ConfigError);

  NetworkSpec sigmoid_on_padding;
  sigmoid_on_padding.family = kSn;
  sigmoid_on_padding.layers = {
      {SeqExpr::base(), SeqExpr::base(), ActivationSpec::parse("sigmoid")}};
  EXPECT_THROW(sigmoid_on_padding.validate(), ConfigError);

  // Entrywise sigmoid on an all-scalar space is fine (identity embeddings).
  NetworkSpec sigmoid_on_scalars;
  sigmoid_on_scalars.family = kSn;
  sigmoid_on_scalars.layers = {
      {SeqExpr::base(), SeqExpr::parse("4*S"), ActivationSpec::parse("sigmoid")}};
  EXPECT_NO_THROW(sigmoid_on_scalars.validate());

  NetworkSpec gate_starved;
  gate_starved.family = kOn;
  gate_starved.layers = {{SeqExpr::base(), SeqExpr::parse("S + 2*V"), ActivationSpec::parse("gated")}};
  EXPECT_THROW(gate_starved.validate(), ConfigError);
}

TEST(ActivationSpec, NamesRoundTrip) {
  for (const char* name :
       {"identity", "relu", "tanh", "sigmoid", "gated", "bilinear+relu", "bilinear+gated"})
    EXPECT_EQ(ActivationSpec::parse(name).name(), name);
  EXPECT_THROW(ActivationSpec::parse("swish"), ConfigError);
}

NetworkSpec single_layer_spec(const SeqExpr& in, const SeqExpr& out, const GroupFamily& family,
                              const char* act, BasisMode mode) {
  NetworkSpec spec;
  spec.family = family;
  spec.mode = mode;
  spec.layers = {{in, out, ActivationSpec::parse(act)}};
  return spec;
}

TEST(Forward, IdentityLayer) {
  const NetworkSpec spec =
      single_layer_spec(SeqExpr::base(), SeqExpr::base(), kSn, "identity", BasisMode::free);
  NetworkInstance inst = NetworkInstance::build(spec, 4);
  LayerParams p;
  p.weight_coefficients = inst.layers[0].weights.coefficients_of(vec_of_identity(4));
  p.bias_coefficients = Eigen::VectorXd::Zero(inst.layers[0].biases.count());
  p.activation_coefficients = Eigen::VectorXd(0);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), {p});
  Rng rng(4);
  const Eigen::VectorXd x = oracles::random_dense(4, 1, rng);
  EXPECT_LT((net.forward(x) - x).norm(), 1e-12);
}

TEST(Forward, HandAssembledTraceNetwork) {
  const NetworkSpec spec =
      single_layer_spec(SeqExpr::tensor_power(2), SeqExpr::scalar(), kSn, "identity",
                        BasisMode::free);
  NetworkInstance inst = NetworkInstance::build(spec, 3);
  LayerParams p;
  // The 1 x 9 weight whose vec is vec(I3) computes the trace.
  p.weight_coefficients = inst.layers[0].weights.coefficients_of(vec_of_identity(3));
  p.bias_coefficients = Eigen::VectorXd::Zero(inst.layers[0].biases.count());
  p.activation_coefficients = Eigen::VectorXd(0);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), {p});
  EXPECT_NEAR(net.forward(vec_of_identity(3))[0], 3.0, 1e-12);
  Rng rng(5);
  const Eigen::VectorXd x = oracles::random_dense(9, 1, rng);
  double tr = x[0] + x[4] + x[8];
  EXPECT_NEAR(net.forward(x)[0], tr, 1e-12);
}

TEST(Forward, DimensionMismatchIsRejected) {
  const NetworkSpec spec =
      single_layer_spec(SeqExpr::base(), SeqExpr::base(), kSn, "identity", BasisMode::free);
  NetworkInstance inst = NetworkInstance::build(spec, 4);
  LayerParams p;
  p.weight_coefficients = Eigen::VectorXd::Zero(inst.layers[0].weights.count());
  p.bias_coefficients = Eigen::VectorXd::Zero(inst.layers[0].biases.count());
  p.activation_coefficients = Eigen::VectorXd(0);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), {p});
  EXPECT_THROW(net.forward(Eigen::VectorXd::Zero(5)), ConfigError);
}

std::vector<LayerParams> random_params(const NetworkInstance& inst, Rng& rng) {
  std::vector<LayerParams> params;
  for (std::size_t i = 0; i < inst.layers.size(); ++i) {
    LayerParams p;
    p.weight_coefficients = Eigen::VectorXd(inst.layers[i].weights.count());
    for (Index j = 0; j < p.weight_coefficients.size(); ++j)
      p.weight_coefficients[j] = rng.normal();
    p.bias_coefficients = Eigen::VectorXd(inst.layers[i].biases.count());
    for (Index j = 0; j < p.bias_coefficients.size(); ++j) p.bias_coefficients[j] = rng.normal();
    const Index act = inst.spec.layers[i].activation.bilinear_residual
                          ? inst.layers[i].pairing.coefficient_count()
                          : 0;
    p.activation_coefficients = Eigen::VectorXd(act);
    for (Index j = 0; j < act; ++j) p.activation_coefficients[j] = rng.normal();
    params.push_back(std::move(p));
  }
  return params;
}

TEST(Forward, LinearEquivariantNetworkCommutesWithTheGroup) {
  NetworkSpec spec;
  spec.family = kSn;
  spec.mode = BasisMode::free;
  const SeqExpr hidden = SeqExpr::parse("2*V + 2*V^2");
  const SeqExpr io = SeqExpr::tensor_power(2);
  spec.layers = {{io, hidden, ActivationSpec::parse("identity")},
                 {hidden, io, ActivationSpec::parse("identity")}};
  NetworkInstance inst = NetworkInstance::build(spec, 4);
  Rng rng(6);
  const auto params = random_params(inst, rng);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), params);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd g = random_element(kSn, 4, rng);
    const Eigen::VectorXd x = oracles::random_dense(io.dim(4), 1, rng);
    const Eigen::VectorXd lhs = net.forward(apply_action(io, g, x, 4));
    const Eigen::VectorXd rhs = apply_action(io, g, net.forward(x), 4);
    EXPECT_LT((lhs - rhs).norm(), 1e-10 * (1.0 + rhs.norm()));
  }
}

TEST(Forward, FullNetworkEquivarianceWithNonlinearities) {
  struct Case {
    GroupFamily family;
    const char* act;
    SeqExpr hidden;
    SeqExpr in, out;
  };
  const std::vector<Case> cases = {
      {kSn, "bilinear+relu", SeqExpr::parse("2*V + 2*V^2"), SeqExpr::tensor_power(2),
       SeqExpr::scalar()},
      {kOn, "bilinear+gated", SeqExpr::parse("4*S + 2*V + V^2"), SeqExpr::multiple(2, SeqExpr::base()),
       SeqExpr::scalar()},
  };
  Rng rng(7);
  for (const auto& c : cases) {
    NetworkSpec spec;
    spec.family = c.family;
    spec.mode = BasisMode::free;
    spec.layers = {{c.in, c.hidden, ActivationSpec::parse(c.act)},
                   {c.hidden, c.out, ActivationSpec::parse("identity")}};
    const Index level = 3;
    NetworkInstance inst = NetworkInstance::build(spec, level);
    const auto params = random_params(inst, rng);
    const TrainedNetwork net = TrainedNetwork::create(std::move(inst), params);
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::MatrixXd g = random_element(c.family, level, rng);
      const Eigen::VectorXd x = oracles::random_dense(c.in.dim(level), 1, rng);
      const Eigen::VectorXd lhs = net.forward(apply_action(c.in, g, x, level));
      const Eigen::VectorXd rhs = apply_action(c.out, g, net.forward(x), level);
      EXPECT_LT((lhs - rhs).norm(), 1e-6 * (1.0 + net.forward(x).norm()));
    }
  }
}

TEST(Activations, ZeroFixingEntrywiseCommutesWithZeroPadding) {
  const SeqExpr expr = SeqExpr::parse("V + V^2");
  const Index n = 3;
  Rng rng(8);
  const auto e = embed(expr, n);
  const Eigen::VectorXd x = oracles::random_dense(expr.dim(n), 1, rng);
  for (ScalarFn fn : {ScalarFn::relu, ScalarFn::tanh_fn}) {
    Eigen::VectorXd padded_then_fn = e.apply(x);
    for (Index i = 0; i < padded_then_fn.size(); ++i)
      padded_then_fn[i] = scalar_fn_eval(fn, padded_then_fn[i]);
    Eigen::VectorXd fn_then_padded = x;
    for (Index i = 0; i < fn_then_padded.size(); ++i)
      fn_then_padded[i] = scalar_fn_eval(fn, fn_then_padded[i]);
    EXPECT_EQ((padded_then_fn - e.apply(fn_then_padded)).norm(), 0.0);
  }
}

TEST(Activations, BilinearResidualPreservesShape) {
  const SeqExpr hidden = SeqExpr::parse("25*S + 10*V + 2*V^2 + V^3");
  for (Index level : {2, 3, 5}) {
    const SummandLayout layout = SummandLayout::make(hidden, level);
    const BilinearPairing pairing = BilinearPairing::make(hidden);
    Rng rng(10 + static_cast<std::uint64_t>(level));
    Eigen::VectorXd coeffs(pairing.coefficient_count());
    for (Index j = 0; j < coeffs.size(); ++j) coeffs[j] = rng.normal();
    const Eigen::VectorXd x = oracles::random_dense(layout.total, 1, rng);
    EXPECT_EQ(bilinear_apply(layout, pairing, coeffs, x, level).size(), x.size());
  }
}

TEST(ExtendNetwork, SameLevelIsIdentityAndIdentityMapStaysIdentity) {
  const NetworkSpec spec =
      single_layer_spec(SeqExpr::base(), SeqExpr::base(), kSn, "identity", BasisMode::free);
  NetworkInstance inst = NetworkInstance::build(spec, 4);
  LayerParams p;
  p.weight_coefficients = inst.layers[0].weights.coefficients_of(vec_of_identity(4));
  p.bias_coefficients = Eigen::VectorXd::Zero(inst.layers[0].biases.count());
  p.activation_coefficients = Eigen::VectorXd(0);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), {p});

  const TrainedNetwork same = extend_network(net, 4);
  Rng rng(11);
  const Eigen::VectorXd x = oracles::random_dense(4, 1, rng);
  EXPECT_EQ((same.forward(x) - net.forward(x)).norm(), 0.0);

  // The unique equivariant extension of the identity is the identity, so the
  // extended forward pass agrees with zero-padding conjugation.
  const TrainedNetwork at6 = extend_network(net, 6);
  const auto e = embed_chain(SeqExpr::base(), 4, 6);
  const Eigen::VectorXd up = at6.forward(e.apply(x));
  EXPECT_LT((up - e.apply(net.forward(x))).norm(), 1e-9);
}

TEST(ExtendNetwork, CompatibleNetworksSatisfyTheCommutingDiagram) {
  // Any element of the compatible parameter space (trained or not) restricts
  // exactly: f at the next level composed with the input embedding equals the
  // output embedding composed with f.
  NetworkSpec spec;
  spec.family = kSn;
  spec.mode = BasisMode::compatible;
  spec.loss = LossKind::mse;
  const SeqExpr in = SeqExpr::tensor_power(2);
  const SeqExpr hidden = SeqExpr::parse("2*V + 2*V^2");
  spec.layers = {{in, hidden, ActivationSpec::parse("bilinear+relu")},
                 {hidden, SeqExpr::scalar(), ActivationSpec::parse("identity")}};
  NetworkInstance inst = NetworkInstance::build(spec, 4);
  Rng rng(12);
  const auto params = random_params(inst, rng);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), params);
  const TrainedNetwork up = extend_network(net, 5);
  const auto phi = embed(in, 4);
  const auto psi = embed(SeqExpr::scalar(), 4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = oracles::random_dense(in.dim(4), 1, rng);
    const Eigen::VectorXd low = net.forward(x);
    const Eigen::VectorXd high = up.forward(phi.apply(x));
    EXPECT_LT((high - psi.apply(low)).norm(), 1e-6 * (1.0 + low.norm()));
  }
}

TEST(ExtendNetwork, LayerErrorsCarryTheLayerIndex) {
  const NetworkSpec spec =
      single_layer_spec(SeqExpr::base(), SeqExpr::base(), kSn, "identity", BasisMode::free);
  NetworkInstance inst = NetworkInstance::build(spec, 4);
  LayerParams p;
  p.weight_coefficients = Eigen::VectorXd::Zero(inst.layers[0].weights.count());
  p.bias_coefficients = Eigen::VectorXd::Zero(inst.layers[0].biases.count());
  p.activation_coefficients = Eigen::VectorXd(0);
  const TrainedNetwork net = TrainedNetwork::create(std::move(inst), {p});
  try {
    extend_network(net, 20'000'000);  // dimension cap on the map space
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
}

}  // namespace
