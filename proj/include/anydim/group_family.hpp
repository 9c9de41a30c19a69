#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "anydim/errors.hpp"
#include "anydim/rng.hpp"
#include "anydim/sparse_operator.hpp"

namespace anydim {

// A sequence of compact groups G^(1) <= G^(2) <= ... acting on R^n, described
// at every level by a finite set of discrete generators plus a basis of the
// Lie algebra. Names below match the config-file spelling.
enum class GroupKind { symmetric, orthogonal, special_orthogonal, signed_permutation, trivial };

struct GroupFamily {
  GroupKind kind = GroupKind::trivial;

  std::string name() const {
    switch (kind) {
      case GroupKind::symmetric: return "Sn";
      case GroupKind::orthogonal: return "On";
      case GroupKind::special_orthogonal: return "SOn";
      case GroupKind::signed_permutation: return "Bn";
      case GroupKind::trivial: return "trivial";
    }
    return "?";
  }

  static GroupFamily parse(const std::string& s) {
    if (s == "Sn") return {GroupKind::symmetric};
    if (s == "On") return {GroupKind::orthogonal};
    if (s == "SOn") return {GroupKind::special_orthogonal};
    if (s == "Bn") return {GroupKind::signed_permutation};
    if (s == "trivial") return {GroupKind::trivial};
    throw ConfigError("unknown group family '" + s + "' (expected Sn, On, SOn, Bn, trivial)");
  }

  bool has_lie_algebra() const {
    return kind == GroupKind::orthogonal || kind == GroupKind::special_orthogonal;
  }

  bool operator==(const GroupFamily&) const = default;
};

namespace detail {

inline SignedPermutation transposition01(Index n) {
  SignedPermutation p = SignedPermutation::identity(n);
  p.target[0] = 1;
  p.target[1] = 0;
  return p;
}

inline SignedPermutation full_cycle(Index n) {
  SignedPermutation p = SignedPermutation::identity(n);
  for (Index i = 0; i < n; ++i) p.target[static_cast<std::size_t>(i)] = (i + 1) % n;
  return p;
}

inline SignedPermutation flip_first(Index n) {
  SignedPermutation p = SignedPermutation::identity(n);
  p.sign[0] = -1.0;
  return p;
}

inline SignedPermutation flip_first_two(Index n) {
  SignedPermutation p = SignedPermutation::identity(n);
  p.sign[0] = -1.0;
  p.sign[1] = -1.0;
  return p;
}

}  // namespace detail

// Discrete generators at level n, in monomial form. Together with the Lie
// algebra these generate the group: Sn uses the transposition (1 2) and the
// n-cycle, the reflection diag(-1, 1, ..., 1) extends SO(n) to O(n) and Sn to
// Bn.
inline std::vector<SignedPermutation> discrete_generator_perms(const GroupFamily& family, Index n) {
  if (n < 1) throw ConfigError("group level must be >= 1");
  std::vector<SignedPermutation> gens;
  switch (family.kind) {
    case GroupKind::symmetric:
      if (n >= 2) gens.push_back(detail::transposition01(n));
      if (n >= 3) gens.push_back(detail::full_cycle(n));
      break;
    case GroupKind::signed_permutation:
      if (n >= 2) gens.push_back(detail::transposition01(n));
      if (n >= 3) gens.push_back(detail::full_cycle(n));
      gens.push_back(detail::flip_first(n));
      break;
    case GroupKind::orthogonal:
      gens.push_back(detail::flip_first(n));
      break;
    case GroupKind::special_orthogonal:
    case GroupKind::trivial:
      break;
  }
  return gens;
}

inline std::vector<SparseOperator> discrete_generators(const GroupFamily& family, Index n) {
  std::vector<SparseOperator> out;
  for (const auto& p : discrete_generator_perms(family, n)) out.push_back(p.to_sparse());
  return out;
}

// Basis {E_ij - E_ji : i < j} of so(n) for the connected families; discrete
// families have trivial Lie algebra.
inline std::vector<SparseOperator> lie_algebra_basis(const GroupFamily& family, Index n) {
  if (n < 1) throw ConfigError("group level must be >= 1");
  std::vector<SparseOperator> out;
  if (!family.has_lie_algebra()) return out;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      out.push_back(SparseOperator::from_triplets(n, n, {{i, j, 1.0}, {j, i, -1.0}}));
  return out;
}

// Additional monomial elements of the group, used to shrink constraint
// systems before the remaining rows are imposed. For O(n) these are the
// signed permutations; for SO(n), signed permutations of determinant one.
inline std::vector<SignedPermutation> monomial_subgroup_elements(const GroupFamily& family, Index n) {
  std::vector<SignedPermutation> out = discrete_generator_perms(family, n);
  switch (family.kind) {
    case GroupKind::orthogonal:
      if (n >= 2) out.push_back(detail::transposition01(n));
      if (n >= 3) out.push_back(detail::full_cycle(n));
      break;
    case GroupKind::special_orthogonal: {
      if (n >= 2) {
        SignedPermutation rot = detail::transposition01(n);  // swap with one flip, det +1
        rot.sign[0] = -1.0;
        out.push_back(rot);
        out.push_back(detail::flip_first_two(n));
      }
      if (n >= 3) {
        SignedPermutation cyc = detail::full_cycle(n);
        if (n % 2 == 0) cyc.sign[0] = -1.0;  // fix determinant of an odd cycle
        out.push_back(cyc);
      }
      break;
    }
    default:
      break;
  }
  return out;
}

// Uniform group element: uniform (signed) permutations for the discrete
// families, Haar measure for O(n) / SO(n) via QR of a Gaussian matrix with the
// R-diagonal sign fix.
inline Eigen::MatrixXd random_element(const GroupFamily& family, Index n, Rng& rng) {
  if (n < 1) throw ConfigError("group level must be >= 1");
  switch (family.kind) {
    case GroupKind::trivial:
      return Eigen::MatrixXd::Identity(n, n);
    case GroupKind::symmetric:
    case GroupKind::signed_permutation: {
      std::vector<Index> perm(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
      for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      }
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
      for (Index i = 0; i < n; ++i) {
        double s = 1.0;
        if (family.kind == GroupKind::signed_permutation) s = (rng.next_u64() & 1) ? 1.0 : -1.0;
        g(perm[static_cast<std::size_t>(i)], i) = s;
      }
      return g;
    }
    case GroupKind::orthogonal:
    case GroupKind::special_orthogonal: {
      Eigen::MatrixXd a(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) a(i, j) = rng.normal();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
      Eigen::MatrixXd q = qr.householderQ();
      Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
      for (Index j = 0; j < n; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
      if (family.kind == GroupKind::special_orthogonal && q.determinant() < 0)
        q.col(n - 1) = -q.col(n - 1);
      return q;
    }
  }
  throw ConfigError("unreachable group kind");
}

}  // namespace anydim
