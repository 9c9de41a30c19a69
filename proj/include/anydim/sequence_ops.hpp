#pragma once

#include <Eigen/Dense>
#include <vector>

#include "anydim/errors.hpp"
#include "anydim/group_family.hpp"
#include "anydim/seq_expr.hpp"
#include "anydim/sparse_operator.hpp"

namespace anydim {

// A sequence expression instantiated at a concrete level.
struct LevelSpace {
  SeqExpr expr;
  GroupFamily family;
  Index level = 1;
  Index dim = 1;

  static LevelSpace make(const SeqExpr& expr, const GroupFamily& family, Index level) {
    return {expr, family, level, expr.dim(level)};
  }
};

namespace detail {
inline constexpr Index kInternalKronCap = 1'000'000'000'000'000LL;
}

// Representation of a base-level group element g on the instantiated
// expression: scalars are fixed, the base space carries g itself, sums act
// block-diagonally and tensors by the Kronecker product of factor actions
// (most-significant factor first, matching the row-major layout).
inline SparseOperator action_operator(const SeqExpr& expr, const SparseOperator& g, Index level,
                                      Index cap = kDefaultKronCap) {
  switch (expr.kind()) {
    case SeqExpr::Kind::scalar:
      return SparseOperator::identity(1);
    case SeqExpr::Kind::base:
      if (g.rows() != level || g.cols() != level)
        throw ConfigError("action: group element size does not match level");
      return g;
    case SeqExpr::Kind::sum: {
      std::vector<SparseOperator> blocks;
      for (const auto& c : expr.children()) blocks.push_back(action_operator(c, g, level, cap));
      return block_diagonal(blocks);
    }
    case SeqExpr::Kind::tensor: {
      SparseOperator acc = action_operator(expr.children().front(), g, level, cap);
      for (std::size_t i = 1; i < expr.children().size(); ++i)
        acc = kron(acc, action_operator(expr.children()[i], g, level, cap), cap);
      return acc;
    }
  }
  throw ConfigError("unreachable expression kind");
}

// Same action for a monomial group element; stays monomial, O(dim) storage.
inline SignedPermutation action_signed(const SeqExpr& expr, const SignedPermutation& g, Index level) {
  switch (expr.kind()) {
    case SeqExpr::Kind::scalar:
      return SignedPermutation::identity(1);
    case SeqExpr::Kind::base:
      if (g.dim() != level) throw ConfigError("action: group element size does not match level");
      return g;
    case SeqExpr::Kind::sum: {
      std::vector<SignedPermutation> blocks;
      for (const auto& c : expr.children()) blocks.push_back(action_signed(c, g, level));
      return direct_sum(blocks);
    }
    case SeqExpr::Kind::tensor: {
      SignedPermutation acc = action_signed(expr.children().front(), g, level);
      for (std::size_t i = 1; i < expr.children().size(); ++i)
        acc = kron(acc, action_signed(expr.children()[i], g, level));
      return acc;
    }
  }
  throw ConfigError("unreachable expression kind");
}

// Applies the action of a dense group element to a coordinate vector without
// materializing the (possibly huge) action matrix: one mode-k product per
// tensor factor.
inline Eigen::VectorXd apply_action(const SeqExpr& expr, const Eigen::MatrixXd& g,
                                    Eigen::VectorXd x, Index level) {
  switch (expr.kind()) {
    case SeqExpr::Kind::scalar:
      return x;
    case SeqExpr::Kind::base:
      return g * x;
    case SeqExpr::Kind::sum: {
      Eigen::VectorXd out(x.size());
      Index off = 0;
      for (const auto& c : expr.children()) {
        const Index d = c.dim(level);
        out.segment(off, d) = apply_action(c, g, x.segment(off, d), level);
        off += d;
      }
      return out;
    }
    case SeqExpr::Kind::tensor: {
      const auto& factors = expr.children();
      std::vector<Index> dims;
      Index total = 1;
      for (const auto& f : factors) {
        dims.push_back(f.dim(level));
        total *= dims.back();
      }
      Eigen::VectorXd cur = std::move(x);
      Index left = 1;
      for (std::size_t j = 0; j < factors.size(); ++j) {
        const Index d = dims[j];
        const Index right = total / (left * d);
        Eigen::VectorXd next(total);
        Eigen::MatrixXd gj;  // dense action of the j-th factor
        if (factors[j].kind() == SeqExpr::Kind::base) {
          gj = g;
        } else {
          // Non-base tensor factors are sums; build their action densely.
          gj = Eigen::MatrixXd::Zero(d, d);
          for (Index col = 0; col < d; ++col) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
            e[col] = 1.0;
            gj.col(col) = apply_action(factors[j], g, e, level);
          }
        }
        for (Index a = 0; a < left; ++a)
          for (Index b = 0; b < right; ++b) {
            Eigen::VectorXd slice(d);
            for (Index i = 0; i < d; ++i) slice[i] = cur[(a * d + i) * right + b];
            Eigen::VectorXd mapped = gj * slice;
            for (Index i = 0; i < d; ++i) next[(a * d + i) * right + b] = mapped[i];
          }
        cur = std::move(next);
        left *= d;
      }
      return cur;
    }
  }
  throw ConfigError("unreachable expression kind");
}

// Infinitesimal action of a Lie-algebra element: zero on scalars, the element
// itself on the base space, block-diagonal on sums and the Leibniz sum
// I (x) ... (x) a (x) ... (x) I on tensors.
inline SparseOperator lie_action(const SeqExpr& expr, const SparseOperator& a, Index level) {
  switch (expr.kind()) {
    case SeqExpr::Kind::scalar:
      return SparseOperator(1, 1);
    case SeqExpr::Kind::base:
      if (a.rows() != level || a.cols() != level)
        throw ConfigError("lie_action: element size does not match level");
      return a;
    case SeqExpr::Kind::sum: {
      std::vector<SparseOperator> blocks;
      for (const auto& c : expr.children()) blocks.push_back(lie_action(c, a, level));
      return block_diagonal(blocks);
    }
    case SeqExpr::Kind::tensor: {
      const auto& factors = expr.children();
      std::vector<Index> dims;
      for (const auto& f : factors) dims.push_back(f.dim(level));
      SparseOperator total;
      for (std::size_t j = 0; j < factors.size(); ++j) {
        SparseOperator term = SparseOperator::identity(1);
        for (std::size_t i = 0; i < factors.size(); ++i) {
          const SparseOperator piece = (i == j) ? lie_action(factors[i], a, level)
                                                : SparseOperator::identity(dims[i]);
          term = kron(term, piece, detail::kInternalKronCap);
        }
        total = (j == 0) ? term : total + term;
      }
      return total;
    }
  }
  throw ConfigError("unreachable expression kind");
}

// Isometric embedding of level n into level n+1: identity on scalars,
// zero-padding on the base space, block-diagonal on sums, Kronecker on
// tensors. Columns are orthonormal by construction.
inline SparseOperator embed(const SeqExpr& expr, Index level) {
  switch (expr.kind()) {
    case SeqExpr::Kind::scalar:
      return SparseOperator::identity(1);
    case SeqExpr::Kind::base: {
      std::vector<Triplet> ts;
      for (Index i = 0; i < level; ++i) ts.push_back({i, i, 1.0});
      return SparseOperator::from_triplets(level + 1, level, ts);
    }
    case SeqExpr::Kind::sum: {
      std::vector<SparseOperator> blocks;
      for (const auto& c : expr.children()) blocks.push_back(embed(c, level));
      return block_diagonal(blocks);
    }
    case SeqExpr::Kind::tensor: {
      SparseOperator acc = embed(expr.children().front(), level);
      for (std::size_t i = 1; i < expr.children().size(); ++i)
        acc = kron(acc, embed(expr.children()[i], level), detail::kInternalKronCap);
      return acc;
    }
  }
  throw ConfigError("unreachable expression kind");
}

inline SparseOperator embed_chain(const SeqExpr& expr, Index from, Index to) {
  if (from > to) throw ConfigError("embed_chain: source level above target");
  SparseOperator acc = SparseOperator::identity(expr.dim(from));
  for (Index n = from; n < to; ++n) acc = embed(expr, n) * acc;
  return acc;
}

// Coordinate projection from a higher level onto a lower one; the transpose
// of the embedding chain.
inline SparseOperator project(const SeqExpr& expr, Index level_hi, Index level_lo) {
  if (level_lo > level_hi) throw ConfigError("project: target level above source");
  return embed_chain(expr, level_lo, level_hi).transpose();
}

// mask[i] = 1 iff coordinate i at `level` lies in the embedded copy of
// `sublevel`.
inline std::vector<char> embedded_mask(const SeqExpr& expr, Index level, Index sublevel) {
  if (sublevel > level) throw ConfigError("embedded_mask: sublevel above level");
  switch (expr.kind()) {
    case SeqExpr::Kind::scalar:
      return {1};
    case SeqExpr::Kind::base: {
      std::vector<char> m(static_cast<std::size_t>(level), 0);
      for (Index i = 0; i < sublevel; ++i) m[static_cast<std::size_t>(i)] = 1;
      return m;
    }
    case SeqExpr::Kind::sum: {
      std::vector<char> m;
      for (const auto& c : expr.children()) {
        const auto cm = embedded_mask(c, level, sublevel);
        m.insert(m.end(), cm.begin(), cm.end());
      }
      return m;
    }
    case SeqExpr::Kind::tensor: {
      std::vector<char> m{1};
      for (const auto& c : expr.children()) {
        const auto cm = embedded_mask(c, level, sublevel);
        std::vector<char> next(m.size() * cm.size());
        for (std::size_t a = 0; a < m.size(); ++a)
          for (std::size_t b = 0; b < cm.size(); ++b)
            next[a * cm.size() + b] = static_cast<char>(m[a] && cm[b]);
        m = std::move(next);
      }
      return m;
    }
  }
  throw ConfigError("unreachable expression kind");
}

}  // namespace anydim
