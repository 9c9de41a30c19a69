#include "anydim/sequence_ops.hpp"

#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace anydim;

namespace {

// Index-permutation reference for the diagonal action on order-k tensors.
Eigen::VectorXd permute_tensor_indices(const Eigen::VectorXd& t, const std::vector<Index>& perm,
                                       Index n, int order) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(t.size());
  for (Index flat = 0; flat < t.size(); ++flat) {
    Index rest = flat;
    std::vector<Index> idx(static_cast<std::size_t>(order));
    for (int i = order - 1; i >= 0; --i) {
      idx[static_cast<std::size_t>(i)] = rest % n;
      rest /= n;
    }
    Index mapped = 0;
    for (int i = 0; i < order; ++i) mapped = mapped * n + perm[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    out[mapped] = t[flat];
  }
  return out;
}

TEST(Action, ScalarIsTrivial) {
  Rng rng(1);
  const Eigen::MatrixXd g = random_element({GroupKind::orthogonal}, 3, rng);
  const auto op = action_operator(SeqExpr::scalar(), SparseOperator::from_dense(g), 3);
  EXPECT_TRUE(op.to_dense().isApprox(Eigen::MatrixXd::Identity(1, 1)));
}

TEST(Action, SwapMovesMatrixUnits) {
  // The swap (1 2) sends the (1,3) matrix unit to the (2,3) one.
  const SeqExpr v2 = SeqExpr::tensor_power(2);
  SignedPermutation swap = SignedPermutation::identity(3);
  swap.target = {1, 0, 2};
  const auto op = action_operator(v2, swap.to_sparse(), 3);
  Eigen::VectorXd e13 = Eigen::VectorXd::Zero(9);
  e13[0 * 3 + 2] = 1.0;  // row-major (0, 2)
  Eigen::VectorXd e23 = Eigen::VectorXd::Zero(9);
  e23[1 * 3 + 2] = 1.0;
  EXPECT_LT((op.apply(e13) - e23).norm(), 1e-14);
  // Monomial route agrees.
  EXPECT_LT((action_signed(v2, swap, 3).apply(e13) - e23).norm(), 1e-14);
}

TEST(Action, MatchesIndexPermutationOracle) {
  Rng rng(2);
  const SeqExpr v3 = SeqExpr::tensor_power(3);
  const Index n = 3;
  for (int trial = 0; trial < 5; ++trial) {
    // Random permutation as both a matrix and an index map.
    const Eigen::MatrixXd g = random_element({GroupKind::symmetric}, n, rng);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (g(i, j) > 0.5) perm[static_cast<std::size_t>(j)] = i;
    const Eigen::VectorXd t = oracles::random_dense(27, 1, rng);
    const Eigen::VectorXd via_op =
        action_operator(v3, SparseOperator::from_dense(g), n).apply(t);
    const Eigen::VectorXd via_apply = apply_action(v3, g, t, n);
    const Eigen::VectorXd expected = permute_tensor_indices(t, perm, n, 3);
    EXPECT_LT((via_op - expected).norm(), 1e-13);
    EXPECT_LT((via_apply - expected).norm(), 1e-13);
  }
}

TEST(Action, HomomorphismProperty) {
  Rng rng(3);
  const SeqExpr expr = SeqExpr::parse("V + V^2");
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::MatrixXd g1 = random_element({GroupKind::symmetric}, 4, rng);
    const Eigen::MatrixXd g2 = random_element({GroupKind::symmetric}, 4, rng);
    const auto op1 = action_operator(expr, SparseOperator::from_dense(g1), 4);
    const auto op2 = action_operator(expr, SparseOperator::from_dense(g2), 4);
    const auto op12 = action_operator(expr, SparseOperator::from_dense(g1 * g2), 4);
    EXPECT_TRUE((op1 * op2).to_dense().isApprox(op12.to_dense(), 1e-12));
  }
}

TEST(Action, OrthogonalForRandomElements) {
  Rng rng(4);
  const SeqExpr expr = SeqExpr::parse("S + V + V^2");
  for (GroupKind kind : {GroupKind::symmetric, GroupKind::orthogonal}) {
    const Eigen::MatrixXd g = random_element({kind}, 3, rng);
    const Eigen::MatrixXd a = action_operator(expr, SparseOperator::from_dense(g), 3).to_dense();
    EXPECT_LT((a.transpose() * a - Eigen::MatrixXd::Identity(a.rows(), a.cols())).norm(), 1e-10);
  }
}

TEST(LieAction, BaseCasesAndLeibniz) {
  const auto lie = lie_algebra_basis({GroupKind::special_orthogonal}, 3);
  const auto& a = lie[0];
  EXPECT_TRUE(lie_action(SeqExpr::scalar(), a, 3).is_zero());
  EXPECT_TRUE(lie_action(SeqExpr::base(), a, 3).to_dense().isApprox(a.to_dense()));

  // d/dt action(exp(t a)) at t = 0 by central differences, h = 1e-4.
  const SeqExpr v2 = SeqExpr::tensor_power(2);
  const double h = 1e-4;
  const Eigen::MatrixXd gp = oracles::matrix_exp(h * a.to_dense());
  const Eigen::MatrixXd gm = oracles::matrix_exp(-h * a.to_dense());
  const Eigen::MatrixXd dplus = action_operator(v2, SparseOperator::from_dense(gp), 3).to_dense();
  const Eigen::MatrixXd dminus = action_operator(v2, SparseOperator::from_dense(gm), 3).to_dense();
  const Eigen::MatrixXd fd = (dplus - dminus) / (2.0 * h);
  EXPECT_LT((fd - lie_action(v2, a, 3).to_dense()).norm(), 1e-6);
}

TEST(LieAction, FiniteDifferenceAcrossExpressions) {
  Rng rng(5);
  const auto lie = lie_algebra_basis({GroupKind::orthogonal}, 3);
  const SeqExpr expr = SeqExpr::parse("S + 2*V + V^2");
  for (const auto& a : {lie[0], lie[2]}) {
    const double h = 1e-4;
    const Eigen::MatrixXd gp = oracles::matrix_exp(h * a.to_dense());
    const Eigen::MatrixXd gm = oracles::matrix_exp(-h * a.to_dense());
    const Eigen::VectorXd x = oracles::random_dense(expr.dim(3), 1, rng);
    const Eigen::VectorXd fd = (apply_action(expr, gp, x, 3) - apply_action(expr, gm, x, 3)) / (2 * h);
    EXPECT_LT((fd - lie_action(expr, a, 3).apply(x)).norm(), 1e-6 * (1.0 + x.norm()));
  }
}

TEST(Embed, BaseAndScalar) {
  const auto e = embed(SeqExpr::base(), 2);
  Eigen::MatrixXd expected(3, 2);
  expected << 1, 0, 0, 1, 0, 0;
  EXPECT_TRUE(e.to_dense().isApprox(expected));
  EXPECT_TRUE(embed(SeqExpr::scalar(), 7).to_dense().isApprox(Eigen::MatrixXd::Identity(1, 1)));
}

TEST(Embed, TensorZeroPadsArrays) {
  // vec of the 2x2 identity goes to vec of blkdiag(I2, 0) inside 3x3.
  const SeqExpr v2 = SeqExpr::tensor_power(2);
  const auto e = embed(v2, 2);
  Eigen::VectorXd id2 = Eigen::VectorXd::Zero(4);
  id2[0] = id2[3] = 1.0;  // (0,0) and (1,1) row-major
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(9);
  padded[0] = padded[4] = 1.0;
  EXPECT_LT((e.apply(id2) - padded).norm(), 1e-14);
}

TEST(Embed, IsometryAndEquivariance) {
  Rng rng(6);
  const SeqExpr expr = SeqExpr::parse("V + V^2 + S");
  const Index n = 3;
  const auto e = embed(expr, n);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::VectorXd x = oracles::random_dense(expr.dim(n), 1, rng);
    EXPECT_NEAR(e.apply(x).norm(), x.norm(), 1e-12);
    // Embedding then acting by the padded element equals acting then embedding.
    const Eigen::MatrixXd g = random_element({GroupKind::symmetric}, n, rng);
    Eigen::MatrixXd padded = Eigen::MatrixXd::Identity(n + 1, n + 1);
    padded.topLeftCorner(n, n) = g;
    const Eigen::VectorXd lhs = apply_action(expr, padded, e.apply(x), n + 1);
    const Eigen::VectorXd rhs = e.apply(apply_action(expr, g, x, n));
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
  }
}

TEST(Project, AllOnesProjectsToAllOnes) {
  const auto p = project(SeqExpr::base(), 4, 3);
  const Eigen::VectorXd ones4 = Eigen::VectorXd::Ones(4);
  EXPECT_TRUE(p.apply(ones4).isApprox(Eigen::VectorXd::Ones(3)));
}

TEST(Project, IdentityAndSectionProperties) {
  Rng rng(7);
  const SeqExpr expr = SeqExpr::parse("2*V + V^2");
  EXPECT_TRUE(project(expr, 4, 4).to_dense().isApprox(
      Eigen::MatrixXd::Identity(expr.dim(4), expr.dim(4))));
  const auto p = project(expr, 5, 3);
  const auto e = embed_chain(expr, 3, 5);
  const Eigen::MatrixXd pe = (p * e).to_dense();
  EXPECT_TRUE(pe.isApprox(Eigen::MatrixXd::Identity(expr.dim(3), expr.dim(3)), 1e-12));
}

TEST(EmbeddedMask, MatchesProjectorDiagonal) {
  const SeqExpr expr = SeqExpr::parse("S + V + V^2");
  for (Index m : {1, 2, 3}) {
    const auto mask = embedded_mask(expr, 3, m);
    const auto chain = embed_chain(expr, m, 3);
    const Eigen::MatrixXd projector = (chain * chain.transpose()).to_dense();
    for (Index i = 0; i < expr.dim(3); ++i)
      EXPECT_NEAR(projector(i, i), mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0, 1e-14);
  }
}

TEST(LevelSpace, CarriesDimension) {
  const auto ls = LevelSpace::make(SeqExpr::parse("V^2"), {GroupKind::symmetric}, 4);
  EXPECT_EQ(ls.dim, 16);
}

}  // namespace
