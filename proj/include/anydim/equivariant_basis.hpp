#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "anydim/errors.hpp"
#include "anydim/group_family.hpp"
#include "anydim/nullspace.hpp"
#include "anydim/seq_expr.hpp"
#include "anydim/sequence_ops.hpp"

namespace anydim {

enum class BasisMode { free, compatible };

inline std::string to_string(BasisMode m) { return m == BasisMode::free ? "free" : "compatible"; }
inline BasisMode basis_mode_from_string(const std::string& s) {
  if (s == "free") return BasisMode::free;
  if (s == "compatible") return BasisMode::compatible;
  throw ConfigError("unknown mode '" + s + "' (expected free or compatible)");
}

struct BasisOptions {
  double tol = -1.0;
  Index dense_cap = 4'000'000;
  bool use_cache = true;
};

// Orthonormal basis of an invariant-vector space or of an equivariant-map
// space at a fixed level. Map-space elements are stored vec'd with the input
// index most significant (column-stacking of the dim_out x dim_in matrix).
class EqBasis {
 public:
  enum class SpaceKind { invariant, map };

  EqBasis() = default;
  EqBasis(SpaceKind space, SeqExpr in, SeqExpr out, GroupFamily family, Index level,
          BasisMode mode, SparseOperator vectors)
      : space_(space), in_(std::move(in)), out_(std::move(out)), family_(family), level_(level),
        mode_(mode), vectors_(std::move(vectors)) {}

  SpaceKind space() const { return space_; }
  // For invariant spaces in_expr == out_expr == the space expression.
  const SeqExpr& in_expr() const { return in_; }
  const SeqExpr& out_expr() const { return out_; }
  const GroupFamily& family() const { return family_; }
  Index level() const { return level_; }
  BasisMode mode() const { return mode_; }

  Index ambient_dim() const { return vectors_.rows(); }
  Index count() const { return vectors_.cols(); }
  const SparseOperator& vectors() const { return vectors_; }

  Eigen::VectorXd vector(Index i) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(count());
    e[i] = 1.0;
    return vectors_.apply(e);
  }

  Eigen::VectorXd materialize(const Eigen::VectorXd& coefficients) const {
    if (coefficients.size() != count()) throw ConfigError("coefficient length mismatch");
    return vectors_.apply(coefficients);
  }

  Eigen::VectorXd coefficients_of(const Eigen::VectorXd& w) const {
    return vectors_.apply_transpose(w);
  }

  // || w - B B^T w || / || w ||; zero iff w lies in the span.
  double span_residual(const Eigen::VectorXd& w) const {
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    return (w - materialize(coefficients_of(w))).norm() / n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "anydim-basis";
    j["version"] = 1;
    j["family"] = family_.name();
    j["level"] = level_;
    j["mode"] = to_string(mode_);
    if (space_ == SpaceKind::invariant) {
      j["space"] = {{"kind", "invariant"}, {"expr", out_.to_string()}};
    } else {
      j["space"] = {{"kind", "map"}, {"in", in_.to_string()}, {"out", out_.to_string()}};
    }
    j["ambient_dim"] = ambient_dim();
    j["count"] = count();
    nlohmann::json vecs = nlohmann::json::array();
    std::vector<nlohmann::json> cols(static_cast<std::size_t>(count()));
    for (auto& c : cols) c = nlohmann::json::array();
    for (const auto& t : vectors_.entries())
      cols[static_cast<std::size_t>(t.col)].push_back({t.row, t.value});
    for (auto& c : cols) vecs.push_back(std::move(c));
    j["vectors"] = std::move(vecs);
    return j;
  }

  static EqBasis from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "anydim-basis")
      throw ConfigError("not a basis file");
    if (j.value("version", 0) != 1) throw ConfigError("unsupported basis file version");
    const GroupFamily family = GroupFamily::parse(j.at("family").get<std::string>());
    const Index level = j.at("level").get<Index>();
    const BasisMode mode = basis_mode_from_string(j.at("mode").get<std::string>());
    const auto& sp = j.at("space");
    SpaceKind kind;
    SeqExpr in, out;
    if (sp.at("kind") == "invariant") {
      kind = SpaceKind::invariant;
      in = out = SeqExpr::parse(sp.at("expr").get<std::string>());
    } else {
      kind = SpaceKind::map;
      in = SeqExpr::parse(sp.at("in").get<std::string>());
      out = SeqExpr::parse(sp.at("out").get<std::string>());
    }
    const Index dim = j.at("ambient_dim").get<Index>();
    const Index count = j.at("count").get<Index>();
    std::vector<Triplet> ts;
    const auto& vecs = j.at("vectors");
    for (Index c = 0; c < count; ++c)
      for (const auto& e : vecs.at(static_cast<std::size_t>(c)))
        ts.push_back({e.at(0).get<Index>(), c, e.at(1).get<double>()});
    return EqBasis(kind, in, out, family, level, mode,
                   SparseOperator::from_triplets(dim, count, ts));
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    f << to_json().dump();
  }

  static EqBasis load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json j;
    f >> j;
    return from_json(j);
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 1099511628211ULL;
    };
    mix(static_cast<std::uint64_t>(ambient_dim()));
    mix(static_cast<std::uint64_t>(count()));
    for (const auto& t : vectors_.entries()) {
      mix(static_cast<std::uint64_t>(t.row));
      mix(static_cast<std::uint64_t>(t.col));
      mix(static_cast<std::uint64_t>(std::llround(t.value * 1e10)));
    }
    return h;
  }

 private:
  SpaceKind space_ = SpaceKind::invariant;
  SeqExpr in_;
  SeqExpr out_;
  GroupFamily family_;
  Index level_ = 1;
  BasisMode mode_ = BasisMode::free;
  SparseOperator vectors_;
};

namespace detail {

// Process-wide cache of leaf computations, keyed by the canonical expression
// serialization. Guarded for concurrent readers; recomputation of the same
// key is deterministic so a rare duplicate insert is harmless.
class BasisCache {
 public:
  static BasisCache& instance() {
    static BasisCache cache;
    return cache;
  }

  std::shared_ptr<const SparseOperator> get_or_compute(
      const std::string& key, const std::function<SparseOperator()>& compute) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = entries_.find(key);
      if (it != entries_.end()) return it->second;
    }
    auto value = std::make_shared<const SparseOperator>(compute());
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = entries_.emplace(key, value);
    return it->second;
  }

  void clear() {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.clear();
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const SparseOperator>> entries_;
};

// Invariant vectors of a sum-free expression under the family at `level`,
// subject to optional coordinate-vanishing constraints. The constraint matrix
// stacks the Lie-algebra rows and (action(d) - I) rows for every discrete
// generator; below the cap it is materialized and factored densely, above it
// the monomial structure of the discrete part is exploited, with extra
// monomial subgroup elements thrown in to shrink the class basis.
inline SparseOperator leaf_invariant_vectors(const SeqExpr& expr, const GroupFamily& family,
                                             Index level, const std::vector<Index>& vanishing,
                                             const BasisOptions& opts) {
  ConstraintSystem sys;
  sys.dim = expr.dim(level);
  sys.vanishing = vanishing;
  for (const auto& g : discrete_generator_perms(family, level))
    sys.invariance.push_back(action_signed(expr, g, level));
  for (const auto& a : lie_algebra_basis(family, level))
    sys.linear.push_back(lie_action(expr, a, level));

  NullspaceOptions nopts;
  nopts.tol = opts.tol;
  nopts.dense_cap = opts.dense_cap;
  const bool dense = sys.spec_row_count() * sys.dim <= nopts.dense_cap;
  if (!dense) {
    for (const auto& g : monomial_subgroup_elements(family, level))
      sys.invariance.push_back(action_signed(expr, g, level));
  }
  return solve_constraint_system(sys, nopts);
}

inline std::string leaf_key(const char* tag, const SeqExpr& expr, const GroupFamily& family,
                            Index level, const BasisOptions& opts, const std::string& extra = "") {
  return std::string(tag) + "|" + family.name() + "|n" + std::to_string(level) + "|" +
         expr.to_string() + "|tol" + std::to_string(opts.tol) + "|cap" +
         std::to_string(opts.dense_cap) + (extra.empty() ? "" : "|" + extra);
}

inline std::shared_ptr<const SparseOperator> cached_leaf_invariants(
    const SeqExpr& expr, const GroupFamily& family, Index level,
    const std::vector<Index>& vanishing, const BasisOptions& opts, const std::string& extra) {
  auto compute = [&]() { return leaf_invariant_vectors(expr, family, level, vanishing, opts); };
  if (!opts.use_cache) return std::make_shared<const SparseOperator>(compute());
  return BasisCache::instance().get_or_compute(leaf_key("leaf", expr, family, level, opts, extra),
                                               compute);
}

struct ScatterPiece {
  std::shared_ptr<const SparseOperator> vectors;
  // big coordinate = row_scale * (row_offset + local_in) + col_offset + local_out
  // where the local product coordinate p splits as (local_in, local_out).
  Index local_out_dim = 1;
  Index row_offset = 0;
  Index col_offset = 0;
  Index row_scale = 1;
};

inline SparseOperator scatter_blocks(Index ambient_dim, const std::vector<ScatterPiece>& pieces) {
  std::vector<Triplet> ts;
  Index col = 0;
  for (const auto& piece : pieces) {
    const auto& v = *piece.vectors;
    for (const auto& t : v.entries()) {
      const Index local_in = t.row / piece.local_out_dim;
      const Index local_out = t.row % piece.local_out_dim;
      const Index big = piece.row_scale * (piece.row_offset + local_in) + piece.col_offset + local_out;
      ts.push_back({big, col + t.col, t.value});
    }
    col += v.cols();
  }
  return SparseOperator::from_triplets(ambient_dim, col, ts);
}

}  // namespace detail

// Orthonormal basis of the invariant vectors of `expr` at `level`,
// obtained as the kernel of the stacked generator constraints. Direct sums
// decompose into independent summand problems.
inline EqBasis invariant_basis(const SeqExpr& expr, const GroupFamily& family, Index level,
                               const BasisOptions& opts = {}) {
  const Index dim = expr.dim(level);
  std::vector<detail::ScatterPiece> pieces;
  Index offset = 0;
  for (const auto& part : expr.summands()) {
    detail::ScatterPiece piece;
    piece.vectors = detail::cached_leaf_invariants(part, family, level, {}, opts, "");
    piece.local_out_dim = 1;
    piece.row_offset = offset;
    piece.col_offset = 0;
    piece.row_scale = 1;
    pieces.push_back(std::move(piece));
    offset += part.dim(level);
  }
  return EqBasis(EqBasis::SpaceKind::invariant, expr, expr, family, level, BasisMode::free,
                 detail::scatter_blocks(dim, pieces));
}

// Orthonormal basis of the equivariant maps in_expr -> out_expr at `level`.
// Under the column-stacking vec convention these are exactly the invariant
// vectors of Tensor(in, out), and maps between direct sums decompose into
// independent (in-summand, out-summand) blocks.
inline EqBasis equivariant_map_basis(const SeqExpr& in_expr, const SeqExpr& out_expr,
                                     const GroupFamily& family, Index level,
                                     const BasisOptions& opts = {}) {
  const Index dim_in = in_expr.dim(level);
  const Index dim_out = out_expr.dim(level);
  if (dim_in > kDimCap / dim_out)
    throw DimensionOverflowError("map space dimension exceeds cap");
  std::vector<detail::ScatterPiece> pieces;
  Index in_offset = 0;
  for (const auto& in_part : in_expr.summands()) {
    const Index din = in_part.dim(level);
    Index out_offset = 0;
    for (const auto& out_part : out_expr.summands()) {
      const Index dout = out_part.dim(level);
      const SeqExpr product = SeqExpr::tensor({in_part, out_part});
      detail::ScatterPiece piece;
      piece.vectors = detail::cached_leaf_invariants(product, family, level, {}, opts, "");
      piece.local_out_dim = dout;
      piece.row_offset = in_offset;
      piece.col_offset = out_offset;
      piece.row_scale = dim_out;
      pieces.push_back(std::move(piece));
      out_offset += dout;
    }
    in_offset += din;
  }
  return EqBasis(EqBasis::SpaceKind::map, in_expr, out_expr, family, level, BasisMode::free,
                 detail::scatter_blocks(dim_in * dim_out, pieces));
}

}  // namespace anydim
