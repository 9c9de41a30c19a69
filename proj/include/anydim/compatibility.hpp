#pragma once

#include <Eigen/Dense>
#include <numbers>
#include <string>
#include <vector>

#include "anydim/equivariant_basis.hpp"
#include "anydim/lsqr.hpp"

namespace anydim {

namespace detail {

// Coordinates of the product space Tensor(in_part, out_part) that must vanish
// for the map to send the embedded level-m copy of the input into the
// embedded level-m copy of the output, for every m up to the generation
// degree of the input summand.
inline std::vector<Index> compatibility_kill_set(const SeqExpr& in_part, const SeqExpr& out_part,
                                                 Index level) {
  const Index din = in_part.dim(level);
  const Index dout = out_part.dim(level);
  const Index gen = in_part.degrees().generation;
  std::vector<char> killed(static_cast<std::size_t>(din * dout), 0);
  for (Index m = 1; m <= gen && m <= level; ++m) {
    const auto in_mask = embedded_mask(in_part, level, m);
    const auto out_mask = embedded_mask(out_part, level, m);
    for (Index ia = 0; ia < din; ++ia) {
      if (!in_mask[static_cast<std::size_t>(ia)]) continue;
      for (Index ib = 0; ib < dout; ++ib)
        if (!out_mask[static_cast<std::size_t>(ib)])
          killed[static_cast<std::size_t>(ia * dout + ib)] = 1;
    }
  }
  std::vector<Index> out;
  for (Index p = 0; p < din * dout; ++p)
    if (killed[static_cast<std::size_t>(p)]) out.push_back(p);
  return out;
}

}  // namespace detail

// Basis of the equivariant maps in_expr -> out_expr whose restrictions to the
// embedded low-level copies stay inside the corresponding output copies; such
// maps extend uniquely to all levels once the working level reaches the
// presentation degree of the input sequence.
inline EqBasis compatible_map_basis(const SeqExpr& in_expr, const SeqExpr& out_expr,
                                    const GroupFamily& family, Index level,
                                    const BasisOptions& opts = {}) {
  const Degrees din = in_expr.degrees();
  if (level < din.presentation)
    throw ConfigError("compatible basis: level " + std::to_string(level) +
                      " is below the presentation degree of the input sequence '" +
                      in_expr.to_string() + "'; minimum level is " +
                      std::to_string(din.presentation));
  const Index dim_in = in_expr.dim(level);
  const Index dim_out = out_expr.dim(level);
  if (dim_in > kDimCap / dim_out)
    throw DimensionOverflowError("map space dimension exceeds cap");
  std::vector<detail::ScatterPiece> pieces;
  Index in_offset = 0;
  for (const auto& in_part : in_expr.summands()) {
    const Index dpart_in = in_part.dim(level);
    Index out_offset = 0;
    for (const auto& out_part : out_expr.summands()) {
      const Index dpart_out = out_part.dim(level);
      const SeqExpr product = SeqExpr::tensor({in_part, out_part});
      const std::string extra = "cmap|in=" + in_part.to_string() + "|out=" + out_part.to_string();
      auto compute_key = detail::leaf_key("leaf", product, family, level, opts, extra);
      auto compute = [&]() {
        return detail::leaf_invariant_vectors(
            product, family, level, detail::compatibility_kill_set(in_part, out_part, level), opts);
      };
      detail::ScatterPiece piece;
      piece.vectors = opts.use_cache
                          ? detail::BasisCache::instance().get_or_compute(compute_key, compute)
                          : std::make_shared<const SparseOperator>(compute());
      piece.local_out_dim = dpart_out;
      piece.row_offset = in_offset;
      piece.col_offset = out_offset;
      piece.row_scale = dim_out;
      pieces.push_back(std::move(piece));
      out_offset += dpart_out;
    }
    in_offset += dpart_in;
  }
  return EqBasis(EqBasis::SpaceKind::map, in_expr, out_expr, family, level, BasisMode::compatible,
                 detail::scatter_blocks(dim_in * dim_out, pieces));
}

// Basis of the biases that belong to a compatible sequence: invariant at the
// working level and at the level above (as a joint system over (b, b+) with
// b+ = embed(b)), and supported inside the embedded level-1 copy so that the
// same bias exists at every lower level.
inline EqBasis compatible_bias_basis(const SeqExpr& out_expr, const GroupFamily& family,
                                     Index level, const BasisOptions& opts = {}) {
  const Index d0 = out_expr.dim(level);
  const Index d1 = out_expr.dim(level + 1);

  ConstraintSystem sys;
  sys.dim = d0 + d1;
  for (const auto& g : discrete_generator_perms(family, level)) {
    auto p = action_signed(out_expr, g, level);
    sys.invariance.push_back(direct_sum({p, SignedPermutation::identity(d1)}));
  }
  for (const auto& g : discrete_generator_perms(family, level + 1)) {
    auto p = action_signed(out_expr, g, level + 1);
    sys.invariance.push_back(direct_sum({SignedPermutation::identity(d0), p}));
  }
  std::vector<SparseOperator> linear;
  for (const auto& a : lie_algebra_basis(family, level)) {
    std::vector<Triplet> ts;
    for (const auto& t : lie_action(out_expr, a, level).entries()) ts.push_back(t);
    linear.push_back(SparseOperator::from_triplets(d0, d0 + d1, ts));
  }
  for (const auto& a : lie_algebra_basis(family, level + 1)) {
    std::vector<Triplet> ts;
    for (const auto& t : lie_action(out_expr, a, level + 1).entries())
      ts.push_back({t.row, t.col + d0, t.value});
    linear.push_back(SparseOperator::from_triplets(d1, d0 + d1, ts));
  }
  {
    // b+ = embed(b)
    std::vector<Triplet> ts;
    for (const auto& t : embed(out_expr, level).entries()) ts.push_back(t);
    for (Index i = 0; i < d1; ++i) ts.push_back({i, d0 + i, -1.0});
    linear.push_back(SparseOperator::from_triplets(d1, d0 + d1, ts));
  }
  sys.linear = std::move(linear);
  // Support constraint: the bias must already live at level 1.
  const auto level1_mask = embedded_mask(out_expr, level, 1);
  for (Index i = 0; i < d0; ++i)
    if (!level1_mask[static_cast<std::size_t>(i)]) sys.vanishing.push_back(i);

  NullspaceOptions nopts;
  nopts.tol = opts.tol;
  nopts.dense_cap = opts.dense_cap;
  const SparseOperator joint = solve_constraint_system(sys, nopts);

  // Slice the b-part; the embedding is an isometry so the slices stay
  // orthogonal and only need the sqrt(2) rescale.
  std::vector<Triplet> ts;
  for (const auto& t : joint.entries())
    if (t.row < d0) ts.push_back({t.row, t.col, t.value * std::numbers::sqrt2});
  return EqBasis(EqBasis::SpaceKind::invariant, out_expr, out_expr, family, level,
                 BasisMode::compatible,
                 SparseOperator::from_triplets(d0, joint.cols(), ts));
}

// Mode-aware basis selectors for network layers.
inline EqBasis weight_basis(const SeqExpr& in_expr, const SeqExpr& out_expr,
                            const GroupFamily& family, Index level, BasisMode mode,
                            const BasisOptions& opts = {}) {
  return mode == BasisMode::free ? equivariant_map_basis(in_expr, out_expr, family, level, opts)
                                 : compatible_map_basis(in_expr, out_expr, family, level, opts);
}

inline EqBasis bias_basis(const SeqExpr& out_expr, const GroupFamily& family, Index level,
                          BasisMode mode, const BasisOptions& opts = {}) {
  return mode == BasisMode::free ? invariant_basis(out_expr, family, level, opts)
                                 : compatible_bias_basis(out_expr, family, level, opts);
}

// Cross-level extension/restriction request for one layer's weight or bias.
struct ExtensionRequest {
  Index layer_index = 0;
  Index source_level = 0;
  Index target_level = 0;
  BasisMode mode = BasisMode::free;
};

struct ExtensionResult {
  Eigen::VectorXd coefficients;  // in the target-level basis
  Eigen::VectorXd vec;           // materialized element at the target level
  double relative_residual = 0.0;
  bool determined = true;  // extension is unique at this source level
};

namespace detail {

inline SeqExpr space_expr(const EqBasis& basis) {
  return basis.space() == EqBasis::SpaceKind::map
             ? SeqExpr::tensor({basis.in_expr(), basis.out_expr()})
             : basis.out_expr();
}

inline bool extension_determined(const EqBasis& target, Index source_level) {
  if (target.space() == EqBasis::SpaceKind::map && target.mode() == BasisMode::compatible) {
    return source_level >= target.in_expr().degrees().presentation &&
           source_level >= target.out_expr().degrees().presentation;
  }
  return source_level >= space_expr(target).degrees().presentation;
}

}  // namespace detail

// Solves for the target-level element whose restriction to the source level
// matches `source_vec`: the coefficient system stacks the restrictions of the
// target-level basis vectors columnwise. In the determined regime the system
// has full column rank and the minimum-norm solution is the unique one.
inline ExtensionResult extend_to_basis(const EqBasis& target, const Eigen::VectorXd& source_vec,
                                       Index source_level, Index max_lsqr_iterations = 10'000) {
  if (source_level >= target.level())
    throw ConfigError("extend_to_basis: source level must lie below the target level");
  const SeqExpr space = detail::space_expr(target);
  const SparseOperator restrict_op = project(space, target.level(), source_level);
  if (restrict_op.rows() != source_vec.size())
    throw ConfigError("extend_to_basis: source vector has wrong dimension");
  const SparseOperator system = restrict_op * target.vectors();
  ExtensionResult res;
  res.determined = detail::extension_determined(target, source_level);
  const double rhs_norm = source_vec.norm();
  if (target.count() == 0) {
    res.coefficients = Eigen::VectorXd::Zero(0);
    res.vec = Eigen::VectorXd::Zero(target.ambient_dim());
    res.relative_residual = rhs_norm == 0.0 ? 0.0 : 1.0;
  } else {
    res.coefficients = min_norm_lstsq(system, source_vec, 1e-13, max_lsqr_iterations);
    res.vec = target.materialize(res.coefficients);
    res.relative_residual =
        rhs_norm == 0.0 ? 0.0 : (system.apply(res.coefficients) - source_vec).norm() / rhs_norm;
  }
  if (res.determined && res.relative_residual > 1e-8)
    throw NumericalError("extension inconsistency: restriction residual " +
                         std::to_string(res.relative_residual) +
                         " in the determined regime (target level " +
                         std::to_string(target.level()) + ")");
  return res;
}

// Restriction of a higher-level element onto a lower level (orthogonal
// coordinate projection), re-expressed in the lower-level basis.
inline ExtensionResult restrict_to_basis(const EqBasis& target, const Eigen::VectorXd& source_vec,
                                         Index source_level) {
  if (source_level <= target.level())
    throw ConfigError("restrict_to_basis: source level must lie above the target level");
  const SeqExpr space = detail::space_expr(target);
  const SparseOperator proj = project(space, source_level, target.level());
  if (proj.cols() != source_vec.size())
    throw ConfigError("restrict_to_basis: source vector has wrong dimension");
  ExtensionResult res;
  res.vec = proj.apply(source_vec);
  res.coefficients = target.coefficients_of(res.vec);
  const double n = res.vec.norm();
  res.relative_residual =
      n == 0.0 ? 0.0 : (res.vec - target.materialize(res.coefficients)).norm() / n;
  res.determined = true;
  if (res.relative_residual > 1e-6)
    throw NumericalError("restriction left the basis span (residual " +
                         std::to_string(res.relative_residual) + ")");
  return res;
}

// Direct route for cross-checks: solves the stacked system (equivariance
// constraints at the target level; restriction rows pinned to the source
// element) over the raw vec(W) unknowns with LSQR.
inline Eigen::VectorXd extend_map_raw(const SeqExpr& in_expr, const SeqExpr& out_expr,
                                      const GroupFamily& family, BasisMode mode,
                                      const Eigen::VectorXd& source_vec, Index source_level,
                                      Index target_level, Index max_lsqr_iterations = 50'000) {
  const SeqExpr product = SeqExpr::tensor({in_expr, out_expr});
  ConstraintSystem sys;
  sys.dim = product.dim(target_level);
  for (const auto& g : discrete_generator_perms(family, target_level))
    sys.invariance.push_back(action_signed(product, g, target_level));
  for (const auto& a : lie_algebra_basis(family, target_level))
    sys.linear.push_back(lie_action(product, a, target_level));
  if (mode == BasisMode::compatible) {
    // The kill sets apply blockwise; at cross-check scale the expressions are
    // sum-free, which keeps this direct.
    if (in_expr.kind() == SeqExpr::Kind::sum || out_expr.kind() == SeqExpr::Kind::sum)
      throw ConfigError("extend_map_raw handles sum-free expressions only");
    sys.vanishing = detail::compatibility_kill_set(in_expr, out_expr, target_level);
  }
  const SparseOperator constraints = sys.materialize();
  const SparseOperator restrict_op = project(product, target_level, source_level);
  const SparseOperator stacked = vstack({constraints, restrict_op});
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(stacked.rows());
  rhs.tail(source_vec.size()) = source_vec;
  return min_norm_lstsq(stacked, rhs, 1e-13, max_lsqr_iterations);
}

}  // namespace anydim
