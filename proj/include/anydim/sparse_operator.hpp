#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "anydim/errors.hpp"

namespace anydim {

using Index = std::int64_t;

struct Triplet {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

inline constexpr Index kDefaultKronCap = 100'000'000;  // virtual rows*cols

// Sparse linear map between finite-dimensional coordinate spaces. This is the
// common currency for group actions, embeddings, projections and constraint
// rows. Instances are immutable after construction; entries are kept in
// compressed row-major order so that iteration order (and therefore every
// basis derived from it) is reproducible.
class SparseOperator {
 public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor, Index>;

  SparseOperator() : mat_(0, 0) {}
  SparseOperator(Index rows, Index cols) : mat_(rows, cols) { mat_.makeCompressed(); }
  explicit SparseOperator(Matrix m) : mat_(std::move(m)) { mat_.makeCompressed(); }

  // Duplicate (row, col) pairs are summed; exact zeros are dropped.
  static SparseOperator from_triplets(Index rows, Index cols, const std::vector<Triplet>& entries) {
    std::vector<Eigen::Triplet<double, Index>> ts;
    ts.reserve(entries.size());
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw ConfigError("sparse operator entry out of range");
      ts.emplace_back(t.row, t.col, t.value);
    }
    Matrix m(rows, cols);
    m.setFromTriplets(ts.begin(), ts.end());
    m.prune([](Index, Index, double v) { return v != 0.0; });
    m.makeCompressed();
    return SparseOperator(std::move(m));
  }

  static SparseOperator identity(Index n) {
    Matrix m(n, n);
    m.setIdentity();
    return SparseOperator(std::move(m));
  }

  static SparseOperator from_dense(const Eigen::MatrixXd& d) {
    std::vector<Triplet> ts;
    for (Index i = 0; i < d.rows(); ++i)
      for (Index j = 0; j < d.cols(); ++j)
        if (d(i, j) != 0.0) ts.push_back({i, j, d(i, j)});
    return from_triplets(d.rows(), d.cols(), ts);
  }

  Index rows() const { return mat_.rows(); }
  Index cols() const { return mat_.cols(); }
  Index nnz() const { return mat_.nonZeros(); }
  Index virtual_size() const { return rows() * cols(); }
  const Matrix& matrix() const { return mat_; }

  std::vector<Triplet> entries() const {
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(mat_.nonZeros()));
    for (Index i = 0; i < mat_.outerSize(); ++i)
      for (Matrix::InnerIterator it(mat_, i); it; ++it) out.push_back({it.row(), it.col(), it.value()});
    return out;
  }

  SparseOperator transpose() const { return SparseOperator(Matrix(mat_.transpose())); }

  SparseOperator operator*(const SparseOperator& rhs) const {
    if (cols() != rhs.rows()) throw ConfigError("sparse operator product: dimension mismatch");
    return SparseOperator(Matrix(mat_ * rhs.mat_));
  }

  SparseOperator operator+(const SparseOperator& rhs) const {
    if (rows() != rhs.rows() || cols() != rhs.cols())
      throw ConfigError("sparse operator sum: dimension mismatch");
    return SparseOperator(Matrix(mat_ + rhs.mat_));
  }

  SparseOperator scaled(double s) const { return SparseOperator(Matrix(mat_ * s)); }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return mat_ * x; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return mat_ * x; }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const { return mat_.transpose() * x; }
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& x) const { return mat_.transpose() * x; }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(mat_); }

  double frobenius_norm() const { return mat_.norm(); }

  bool is_zero() const { return mat_.nonZeros() == 0; }

 private:
  Matrix mat_;
};

// Kronecker product, row-major index convention: output coordinate
// (i_a * rows_b + i_b, j_a * cols_b + j_b) carries a(i_a, j_a) * b(i_b, j_b).
// The cap bounds the virtual size of the result and signals an infeasible
// level when exceeded.
inline SparseOperator kron(const SparseOperator& a, const SparseOperator& b,
                           Index cap = kDefaultKronCap) {
  const Index rows = a.rows() * b.rows();
  const Index cols = a.cols() * b.cols();
  if (a.rows() != 0 && b.rows() != 0 && (rows / b.rows() != a.rows()))
    throw DimensionOverflowError("kron: row count overflows");
  if (rows > 0 && cols > cap / rows)
    throw DimensionOverflowError("kron: virtual size " + std::to_string(rows) + "x" +
                                 std::to_string(cols) + " exceeds cap " + std::to_string(cap));
  std::vector<Triplet> ts;
  ts.reserve(static_cast<std::size_t>(a.nnz()) * static_cast<std::size_t>(b.nnz()));
  const auto ea = a.entries();
  const auto eb = b.entries();
  for (const auto& ta : ea)
    for (const auto& tb : eb)
      ts.push_back({ta.row * b.rows() + tb.row, ta.col * b.cols() + tb.col, ta.value * tb.value});
  return SparseOperator::from_triplets(rows, cols, ts);
}

inline SparseOperator vstack(const std::vector<SparseOperator>& blocks) {
  Index rows = 0;
  Index cols = blocks.empty() ? 0 : blocks.front().cols();
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw ConfigError("vstack: column mismatch");
    rows += b.rows();
  }
  std::vector<Triplet> ts;
  Index offset = 0;
  for (const auto& b : blocks) {
    for (const auto& t : b.entries()) ts.push_back({t.row + offset, t.col, t.value});
    offset += b.rows();
  }
  return SparseOperator::from_triplets(rows, cols, ts);
}

inline SparseOperator block_diagonal(const std::vector<SparseOperator>& blocks) {
  Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  std::vector<Triplet> ts;
  Index ro = 0, co = 0;
  for (const auto& b : blocks) {
    for (const auto& t : b.entries()) ts.push_back({t.row + ro, t.col + co, t.value});
    ro += b.rows();
    co += b.cols();
  }
  return SparseOperator::from_triplets(rows, cols, ts);
}

// Square monomial operator: column i holds the single entry sign[i] at row
// target[i]. Group elements acting on tensor-product coordinates stay in this
// form, which keeps their composition and Kronecker products O(dimension).
struct SignedPermutation {
  std::vector<Index> target;
  std::vector<double> sign;

  Index dim() const { return static_cast<Index>(target.size()); }

  static SignedPermutation identity(Index n) {
    SignedPermutation p;
    p.target.resize(static_cast<std::size_t>(n));
    p.sign.assign(static_cast<std::size_t>(n), 1.0);
    for (Index i = 0; i < n; ++i) p.target[static_cast<std::size_t>(i)] = i;
    return p;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(dim());
    for (Index i = 0; i < dim(); ++i)
      out[target[static_cast<std::size_t>(i)]] = sign[static_cast<std::size_t>(i)] * x[i];
    return out;
  }

  SparseOperator to_sparse() const {
    std::vector<Triplet> ts;
    ts.reserve(target.size());
    for (Index i = 0; i < dim(); ++i)
      ts.push_back({target[static_cast<std::size_t>(i)], i, sign[static_cast<std::size_t>(i)]});
    return SparseOperator::from_triplets(dim(), dim(), ts);
  }
};

inline SignedPermutation kron(const SignedPermutation& a, const SignedPermutation& b) {
  const Index na = a.dim(), nb = b.dim();
  SignedPermutation out;
  out.target.resize(static_cast<std::size_t>(na * nb));
  out.sign.resize(static_cast<std::size_t>(na * nb));
  for (Index i = 0; i < na; ++i)
    for (Index j = 0; j < nb; ++j) {
      const Index k = i * nb + j;
      out.target[static_cast<std::size_t>(k)] =
          a.target[static_cast<std::size_t>(i)] * nb + b.target[static_cast<std::size_t>(j)];
      out.sign[static_cast<std::size_t>(k)] =
          a.sign[static_cast<std::size_t>(i)] * b.sign[static_cast<std::size_t>(j)];
    }
  return out;
}

inline SignedPermutation direct_sum(const std::vector<SignedPermutation>& blocks) {
  Index n = 0;
  for (const auto& b : blocks) n += b.dim();
  SignedPermutation out;
  out.target.resize(static_cast<std::size_t>(n));
  out.sign.resize(static_cast<std::size_t>(n));
  Index offset = 0;
  for (const auto& b : blocks) {
    for (Index i = 0; i < b.dim(); ++i) {
      out.target[static_cast<std::size_t>(offset + i)] = offset + b.target[static_cast<std::size_t>(i)];
      out.sign[static_cast<std::size_t>(offset + i)] = b.sign[static_cast<std::size_t>(i)];
    }
    offset += b.dim();
  }
  return out;
}

// Recognizes square operators with exactly one +-1 entry per row and column.
inline std::optional<SignedPermutation> as_signed_permutation(const SparseOperator& op) {
  if (op.rows() != op.cols()) return std::nullopt;
  const Index n = op.rows();
  if (op.nnz() != n) return std::nullopt;
  SignedPermutation p;
  p.target.assign(static_cast<std::size_t>(n), -1);
  p.sign.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<char> row_hit(static_cast<std::size_t>(n), 0);
  for (const auto& t : op.entries()) {
    if (t.value != 1.0 && t.value != -1.0) return std::nullopt;
    if (p.target[static_cast<std::size_t>(t.col)] != -1) return std::nullopt;
    if (row_hit[static_cast<std::size_t>(t.row)]) return std::nullopt;
    row_hit[static_cast<std::size_t>(t.row)] = 1;
    p.target[static_cast<std::size_t>(t.col)] = t.row;
    p.sign[static_cast<std::size_t>(t.col)] = t.value;
  }
  return p;
}

}  // namespace anydim
