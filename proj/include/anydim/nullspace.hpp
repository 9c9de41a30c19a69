#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "anydim/errors.hpp"
#include "anydim/lsqr.hpp"
#include "anydim/rng.hpp"
#include "anydim/sparse_operator.hpp"

namespace anydim {

struct NullspaceOptions {
  // Relative singular-value threshold; non-positive selects
  // max(rows, cols) * machine-epsilon * sigma_max.
  double tol = -1.0;
  // Constraint matrices whose virtual size stays under this cap are
  // materialized and factored densely; larger systems take a structure-aware
  // or iterative route.
  Index dense_cap = 4'000'000;
  Index max_iterative_kernel = 4096;
  Index lsqr_max_iterations = 20'000;
};

namespace detail {

inline double effective_threshold(double tol, Index rows, Index cols, double sigma_max) {
  if (tol > 0.0) return tol * sigma_max;
  return static_cast<double>(std::max(rows, cols)) *
         std::numeric_limits<double>::epsilon() * sigma_max;
}

inline std::vector<Eigen::VectorXd> full_identity_basis(Index n) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[i] = 1.0;
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<Eigen::VectorXd> nullspace_dense(const Eigen::MatrixXd& m, double tol) {
  const Index rows = m.rows(), cols = m.cols();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double sigma_max = sv.size() > 0 ? sv[0] : 0.0;
  if (sigma_max == 0.0) return full_identity_basis(cols);
  const double thr = effective_threshold(tol, rows, cols, sigma_max);
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > thr) ++rank;
  std::vector<Eigen::VectorXd> out;
  for (Index j = rank; j < cols; ++j) out.push_back(svd.matrixV().col(j));
  return out;
}

// Projects random vectors onto the kernel with v - a^+ (a v), where the
// pseudoinverse apply is an LSQR solve. Grows the probe block until no new
// kernel directions appear.
inline std::vector<Eigen::VectorXd> nullspace_lsqr_projection(const SparseOperator& c,
                                                              const NullspaceOptions& opts) {
  const Index n = c.cols();
  const double cnorm = c.frobenius_norm();
  if (cnorm == 0.0) return full_identity_basis(n);
  const double accept = std::max(opts.tol > 0.0 ? opts.tol : 1e-10, 1e-12) * cnorm;

  LsqrOptions lopts;
  lopts.atol = 1e-14;
  lopts.btol = 1e-14;
  lopts.max_iterations = opts.lsqr_max_iterations;

  Rng rng(0x6b61726e656cULL);
  Eigen::MatrixXd q(n, 0);
  Index block = 8;
  while (true) {
    Eigen::MatrixXd probes(n, block);
    for (Index j = 0; j < block; ++j)
      for (Index i = 0; i < n; ++i) probes(i, j) = rng.normal();
    // Kernel component of each probe.
    for (Index j = 0; j < block; ++j) {
      Eigen::VectorXd v = probes.col(j);
      LsqrResult r = lsqr_solve(c, c.apply(v), lopts);
      probes.col(j) = v - r.x;
    }
    if (q.cols() > 0) probes -= q * (q.transpose() * probes);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(probes, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    Index found = 0;
    for (Index j = 0; j < sv.size(); ++j) {
      if (sv[j] <= 1e-10 * std::max(1.0, sv[0])) break;
      Eigen::VectorXd cand = svd.matrixU().col(j);
      if (c.apply(cand).norm() <= accept * 10.0) {
        q.conservativeResize(n, q.cols() + 1);
        q.col(q.cols() - 1) = cand;
        ++found;
      }
    }
    if (found < block) break;
    if (q.cols() > opts.max_iterative_kernel)
      throw NumericalError("iterative nullspace: kernel dimension exceeds capacity");
    block = std::min<Index>(block * 2, 256);
  }
  // One re-orthonormalization pass for the accumulated block.
  std::vector<Eigen::VectorXd> out;
  if (q.cols() == 0) return out;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
  Eigen::MatrixXd qq = qr.householderQ() * Eigen::MatrixXd::Identity(n, q.cols());
  for (Index j = 0; j < qq.cols(); ++j) {
    Eigen::VectorXd cand = qq.col(j);
    if (c.apply(cand).norm() <= accept * 10.0) out.push_back(cand);
  }
  return out;
}

}  // namespace detail

// Orthonormal basis of { x : ||c x|| <= thr * ||x|| }, with thr derived from
// tol and sigma_max as above. An empty result is a valid answer.
inline std::vector<Eigen::VectorXd> nullspace_orthonormal(const SparseOperator& c,
                                                          double tol = -1.0,
                                                          const NullspaceOptions& base_opts = {}) {
  if (c.cols() < 1) throw ConfigError("nullspace: operator must have at least one column");
  NullspaceOptions opts = base_opts;
  opts.tol = tol;
  if (c.rows() == 0 || c.is_zero()) return detail::full_identity_basis(c.cols());
  if (c.virtual_size() <= opts.dense_cap) return detail::nullspace_dense(c.to_dense(), tol);
  return detail::nullspace_lsqr_projection(c, opts);
}

// Homogeneous constraint system over R^dim. Invariance constraints
// (P - I) x = 0 with monomial P and coordinate-vanishing constraints admit a
// combinatorial solution; general rows are handled by a Gram reduction on the
// surviving class basis.
struct ConstraintSystem {
  Index dim = 0;
  std::vector<SignedPermutation> invariance;
  std::vector<Index> vanishing;
  std::vector<SparseOperator> linear;

  Index spec_row_count() const {
    Index rows = static_cast<Index>(invariance.size()) * dim +
                 static_cast<Index>(vanishing.size());
    for (const auto& l : linear) rows += l.rows();
    return rows;
  }

  SparseOperator materialize() const {
    std::vector<SparseOperator> blocks;
    const SparseOperator id = SparseOperator::identity(dim);
    for (const auto& p : invariance) blocks.push_back(p.to_sparse() + id.scaled(-1.0));
    if (!vanishing.empty()) {
      std::vector<Triplet> ts;
      for (std::size_t k = 0; k < vanishing.size(); ++k)
        ts.push_back({static_cast<Index>(k), vanishing[k], 1.0});
      blocks.push_back(
          SparseOperator::from_triplets(static_cast<Index>(vanishing.size()), dim, ts));
    }
    for (const auto& l : linear) blocks.push_back(l);
    if (blocks.empty()) return SparseOperator(0, dim);
    return vstack(blocks);
  }
};

namespace detail {

// Union-find with a sign carried on the edge to the parent: x_i = sign * x_root.
class SignedClasses {
 public:
  explicit SignedClasses(Index n)
      : parent_(static_cast<std::size_t>(n)), sign_(static_cast<std::size_t>(n), 1.0),
        dead_(static_cast<std::size_t>(n), 0) {
    for (Index i = 0; i < n; ++i) parent_[static_cast<std::size_t>(i)] = i;
  }

  std::pair<Index, double> find(Index i) {
    double s = 1.0;
    Index root = i;
    while (parent_[static_cast<std::size_t>(root)] != root) {
      s *= sign_[static_cast<std::size_t>(root)];
      root = parent_[static_cast<std::size_t>(root)];
    }
    // Path compression, repointing every node straight at the root.
    Index walk = i;
    double s_walk = 1.0;
    while (parent_[static_cast<std::size_t>(walk)] != walk) {
      const Index next = parent_[static_cast<std::size_t>(walk)];
      const double edge = sign_[static_cast<std::size_t>(walk)];
      const double rest = s / s_walk;  // sign from walk to root
      parent_[static_cast<std::size_t>(walk)] = root;
      sign_[static_cast<std::size_t>(walk)] = rest;
      s_walk *= edge;
      walk = next;
    }
    return {root, s};
  }

  // Impose x_j = s * x_i.
  void relate(Index i, Index j, double s) {
    auto [ri, si] = find(i);
    auto [rj, sj] = find(j);
    if (ri == rj) {
      if (si * s != sj) dead_[static_cast<std::size_t>(ri)] = 1;
      return;
    }
    // x_j = s si x_ri  and  x_j = sj x_rj  =>  x_rj = (s si / sj) x_ri.
    parent_[static_cast<std::size_t>(rj)] = ri;
    sign_[static_cast<std::size_t>(rj)] = s * si / sj;
    if (dead_[static_cast<std::size_t>(rj)]) dead_[static_cast<std::size_t>(ri)] = 1;
  }

  void kill(Index i) {
    auto [r, s] = find(i);
    (void)s;
    dead_[static_cast<std::size_t>(r)] = 1;
  }

  bool alive(Index root) const { return !dead_[static_cast<std::size_t>(root)]; }

 private:
  std::vector<Index> parent_;
  std::vector<double> sign_;
  std::vector<char> dead_;
};

// Orthonormal basis of the subspace cut out by the monomial constraints:
// one vector per surviving sign-consistent class, supported on that class.
inline SparseOperator signed_class_basis(const ConstraintSystem& sys) {
  SignedClasses uf(sys.dim);
  for (const auto& p : sys.invariance) {
    if (p.dim() != sys.dim) throw ConfigError("constraint system: operator dimension mismatch");
    for (Index i = 0; i < sys.dim; ++i)
      uf.relate(i, p.target[static_cast<std::size_t>(i)], p.sign[static_cast<std::size_t>(i)]);
  }
  for (Index i : sys.vanishing) uf.kill(i);

  std::vector<Index> class_id(static_cast<std::size_t>(sys.dim), -1);
  std::vector<Index> class_size;
  std::vector<Triplet> ts;
  Index count = 0;
  for (Index i = 0; i < sys.dim; ++i) {
    auto [root, sign] = uf.find(i);
    if (!uf.alive(root)) continue;
    Index& id = class_id[static_cast<std::size_t>(root)];
    if (id < 0) {
      id = count++;
      class_size.push_back(0);
    }
    class_size[static_cast<std::size_t>(id)]++;
    ts.push_back({i, id, sign});
  }
  // Normalize so each column has unit norm and its smallest-index entry is
  // positive, which pins the basis independent of union-find internals.
  std::vector<double> first_sign(static_cast<std::size_t>(count), 0.0);
  for (const auto& t : ts)
    if (first_sign[static_cast<std::size_t>(t.col)] == 0.0)
      first_sign[static_cast<std::size_t>(t.col)] = t.value;
  for (auto& t : ts)
    t.value = t.value / first_sign[static_cast<std::size_t>(t.col)] /
              std::sqrt(static_cast<double>(class_size[static_cast<std::size_t>(t.col)]));
  return SparseOperator::from_triplets(sys.dim, count, ts);
}

}  // namespace detail

// Orthonormal basis (as columns) of the joint kernel of all constraints.
inline SparseOperator solve_constraint_system(const ConstraintSystem& sys,
                                              const NullspaceOptions& opts = {}) {
  if (sys.dim < 1) throw ConfigError("constraint system: empty space");
  const Index virtual_size = sys.spec_row_count() * sys.dim;
  const bool small_enough = virtual_size <= opts.dense_cap;
  if (small_enough) {
    const SparseOperator c = sys.materialize();
    const auto vecs = nullspace_orthonormal(c, opts.tol, opts);
    std::vector<Triplet> ts;
    for (std::size_t j = 0; j < vecs.size(); ++j)
      for (Index i = 0; i < sys.dim; ++i)
        if (vecs[j][i] != 0.0) ts.push_back({i, static_cast<Index>(j), vecs[j][i]});
    return SparseOperator::from_triplets(sys.dim, static_cast<Index>(vecs.size()), ts);
  }

  if (sys.invariance.empty() && sys.vanishing.empty()) {
    // No monomial structure to exploit; fall back to the iterative route.
    const auto vecs = nullspace_orthonormal(sys.materialize(), opts.tol, opts);
    std::vector<Triplet> ts;
    for (std::size_t j = 0; j < vecs.size(); ++j)
      for (Index i = 0; i < sys.dim; ++i)
        if (vecs[j][i] != 0.0) ts.push_back({i, static_cast<Index>(j), vecs[j][i]});
    return SparseOperator::from_triplets(sys.dim, static_cast<Index>(vecs.size()), ts);
  }

  SparseOperator class_basis = detail::signed_class_basis(sys);
  if (sys.linear.empty() || class_basis.cols() == 0) return class_basis;

  const Index r = class_basis.cols();
  if (r > 20'000)
    throw NumericalError("constraint system: reduced dimension " + std::to_string(r) +
                         " too large for the Gram stage");
  // Restrict the remaining rows to the class basis and keep the kernel of the
  // stacked restriction, via its Gram matrix.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(r, r);
  Index rows_total = 0;
  for (const auto& l : sys.linear) {
    if (l.cols() != sys.dim) throw ConfigError("constraint system: operator dimension mismatch");
    SparseOperator restricted = l * class_basis;
    gram += (restricted.transpose() * restricted).to_dense();
    rows_total += l.rows();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("constraint system: Gram eigensolve failed");
  const auto& ev = eig.eigenvalues();  // ascending
  const double lambda_max = ev[r - 1];
  if (lambda_max <= 0.0) return class_basis;
  // Zero eigenvalues of the Gram matrix are computed with absolute error on
  // the order of eps * lambda_max (not its square), so the floor is linear in
  // lambda_max; a user tolerance is still interpreted on the singular-value
  // scale.
  const double floor_thr = static_cast<double>(std::max(rows_total, sys.dim)) *
                           std::numeric_limits<double>::epsilon() * lambda_max;
  const double user_thr = opts.tol > 0.0 ? opts.tol * opts.tol * lambda_max : 0.0;
  const double thr = std::max(floor_thr, user_thr);
  Index kernel = 0;
  while (kernel < r && ev[kernel] <= thr) ++kernel;
  if (kernel == 0) return SparseOperator(sys.dim, 0);
  Eigen::MatrixXd k = eig.eigenvectors().leftCols(kernel);
  return class_basis * SparseOperator::from_dense(k);
}

}  // namespace anydim
