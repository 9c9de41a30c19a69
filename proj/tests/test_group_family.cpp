#include "anydim/group_family.hpp"

#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace anydim;

namespace {

std::vector<Eigen::MatrixXd> dense_generators(const GroupFamily& f, Index n) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& g : discrete_generators(f, n)) out.push_back(g.to_dense());
  return out;
}

TEST(DiscreteGenerators, SymmetricGroupClosure) {
  // Transposition and 3-cycle generate all 6 permutations.
  EXPECT_EQ(oracles::group_closure_order(dense_generators({GroupKind::symmetric}, 3)), 6u);
  EXPECT_EQ(oracles::group_closure_order(dense_generators({GroupKind::symmetric}, 4)), 24u);
}

TEST(DiscreteGenerators, SignedPermutationClosure) {
  EXPECT_EQ(oracles::group_closure_order(dense_generators({GroupKind::signed_permutation}, 2)), 8u);
  EXPECT_EQ(oracles::group_closure_order(dense_generators({GroupKind::signed_permutation}, 3)),
            48u);
}

TEST(DiscreteGenerators, EdgeLevels) {
  EXPECT_TRUE(discrete_generators({GroupKind::trivial}, 5).empty());
  EXPECT_TRUE(discrete_generators({GroupKind::special_orthogonal}, 4).empty());
  EXPECT_TRUE(discrete_generators({GroupKind::symmetric}, 1).empty());
  EXPECT_EQ(discrete_generators({GroupKind::symmetric}, 2).size(), 1u);
  // The reflection for O(n) and the sign flip for Bn.
  const auto refl = discrete_generators({GroupKind::orthogonal}, 3);
  ASSERT_EQ(refl.size(), 1u);
  EXPECT_DOUBLE_EQ(refl[0].to_dense()(0, 0), -1.0);
  EXPECT_EQ(discrete_generators({GroupKind::signed_permutation}, 1).size(), 1u);
}

TEST(DiscreteGenerators, AllElementsOrthogonal) {
  for (GroupKind kind : {GroupKind::symmetric, GroupKind::orthogonal, GroupKind::special_orthogonal,
                         GroupKind::signed_permutation, GroupKind::trivial}) {
    for (Index n : {1, 2, 5}) {
      for (const auto& g : discrete_generators({kind}, n)) {
        const Eigen::MatrixXd d = g.to_dense();
        EXPECT_LT((d.transpose() * d - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-10);
      }
    }
  }
}

TEST(DiscreteGenerators, NestIntoTheNextLevel) {
  // Zero-padding a level-n generator by one diagonal 1 lands inside the
  // level-(n+1) group; checked by closure membership at small sizes.
  for (GroupKind kind : {GroupKind::symmetric, GroupKind::signed_permutation}) {
    const Index n = 2;
    const auto low = dense_generators({kind}, n);
    const auto high = dense_generators({kind}, n + 1);
    std::vector<Eigen::MatrixXd> elements{Eigen::MatrixXd::Identity(n + 1, n + 1)};
    std::vector<Eigen::MatrixXd> frontier = elements;
    while (!frontier.empty()) {
      std::vector<Eigen::MatrixXd> next;
      for (const auto& m : frontier)
        for (const auto& g : high) {
          Eigen::MatrixXd prod = g * m;
          bool seen = false;
          for (const auto& e : elements)
            if ((e - prod).norm() < 1e-9) {
              seen = true;
              break;
            }
          if (!seen) {
            elements.push_back(prod);
            next.push_back(prod);
          }
        }
      frontier = std::move(next);
    }
    for (const auto& g : low) {
      Eigen::MatrixXd padded = Eigen::MatrixXd::Identity(n + 1, n + 1);
      padded.topLeftCorner(n, n) = g;
      bool found = false;
      for (const auto& e : elements)
        if ((e - padded).norm() < 1e-9) {
          found = true;
          break;
        }
      EXPECT_TRUE(found);
    }
  }
}

TEST(LieAlgebra, BasisSizesAndSkewSymmetry) {
  EXPECT_EQ(lie_algebra_basis({GroupKind::orthogonal}, 3).size(), 3u);
  EXPECT_EQ(lie_algebra_basis({GroupKind::special_orthogonal}, 5).size(), 10u);
  EXPECT_TRUE(lie_algebra_basis({GroupKind::symmetric}, 7).empty());
  EXPECT_TRUE(lie_algebra_basis({GroupKind::signed_permutation}, 4).empty());
  EXPECT_TRUE(lie_algebra_basis({GroupKind::trivial}, 4).empty());
  for (const auto& a : lie_algebra_basis({GroupKind::orthogonal}, 4)) {
    const Eigen::MatrixXd d = a.to_dense();
    EXPECT_TRUE((d + d.transpose()).isZero(0.0));
  }
}

TEST(LieAlgebra, ExponentialIsOrthogonal) {
  for (double t : {0.1, 1.0}) {
    for (const auto& a : lie_algebra_basis({GroupKind::special_orthogonal}, 4)) {
      const Eigen::MatrixXd g = oracles::matrix_exp(t * a.to_dense());
      EXPECT_LT((g.transpose() * g - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-8);
    }
  }
}

TEST(MonomialSubgroup, ElementsBelongToTheGroup) {
  for (GroupKind kind : {GroupKind::symmetric, GroupKind::signed_permutation, GroupKind::orthogonal,
                         GroupKind::special_orthogonal}) {
    for (Index n : {2, 3, 5}) {
      for (const auto& p : monomial_subgroup_elements({kind}, n)) {
        const Eigen::MatrixXd d = p.to_sparse().to_dense();
        EXPECT_LT((d.transpose() * d - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-12);
        if (kind == GroupKind::special_orthogonal) EXPECT_NEAR(d.determinant(), 1.0, 1e-12);
        if (kind == GroupKind::symmetric) EXPECT_DOUBLE_EQ(d.array().abs().sum(), double(n));
      }
    }
  }
}

TEST(RandomElement, TrivialIsIdentity) {
  Rng rng(1);
  EXPECT_TRUE(random_element({GroupKind::trivial}, 4, rng).isApprox(Eigen::MatrixXd::Identity(4, 4)));
}

TEST(RandomElement, PermutationIsOrthogonalZeroOne) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd g = random_element({GroupKind::symmetric}, 3, rng);
    EXPECT_LT((g.transpose() * g - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-12);
    EXPECT_DOUBLE_EQ(g.array().abs().sum(), 3.0);
    EXPECT_DOUBLE_EQ(g.minCoeff(), 0.0);
  }
}

TEST(RandomElement, HaarOrthogonalHasUnitDeterminant) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd g = random_element({GroupKind::orthogonal}, 4, rng);
    EXPECT_LT((g.transpose() * g - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-10);
    EXPECT_NEAR(std::abs(g.determinant()), 1.0, 1e-10);
    const Eigen::MatrixXd r = random_element({GroupKind::special_orthogonal}, 4, rng);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-10);
  }
}

TEST(RandomElement, SignedPermutationFlipsSigns) {
  Rng rng(4);
  bool saw_negative = false;
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd g = random_element({GroupKind::signed_permutation}, 3, rng);
    EXPECT_LT((g.transpose() * g - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-12);
    if (g.minCoeff() < -0.5) saw_negative = true;
  }
  EXPECT_TRUE(saw_negative);
}

TEST(GroupFamily, NamesRoundTrip) {
  for (const char* name : {"Sn", "On", "SOn", "Bn", "trivial"})
    EXPECT_EQ(GroupFamily::parse(name).name(), name);
  EXPECT_THROW(GroupFamily::parse("U(n)"), ConfigError);
}

}  // namespace
