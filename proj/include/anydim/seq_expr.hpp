#pragma once

#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "anydim/errors.hpp"
#include "anydim/sparse_operator.hpp"

namespace anydim {

inline constexpr Index kDimCap = 10'000'000;

struct Degrees {
  Index generation = 1;
  Index presentation = 1;
  // Set when the presentation value is the conservative sum-of-generation
  // bound for a mixed product rather than a proven value.
  bool presentation_assumed = false;
};

// Algebraic description of a consistent sequence of spaces: scalars, the base
// sequence {R^n}, direct sums and tensor products. An expression fixes the
// coordinate layout at every level: sums concatenate summands in declared
// order, tensors use row-major multi-indices (index of (i_1, ..., i_k) is
// sum_j i_j * n^(k-j)). Construction canonicalizes by flattening nested sums
// and tensors and dropping scalar tensor factors, all of which preserve the
// layout; summand order is part of identity.
class SeqExpr {
 public:
  enum class Kind { scalar, base, sum, tensor };

  SeqExpr() : SeqExpr(scalar()) {}

  static SeqExpr scalar() { return SeqExpr(std::make_shared<Node>(Node{Kind::scalar, {}})); }
  static SeqExpr base() { return SeqExpr(std::make_shared<Node>(Node{Kind::base, {}})); }

  static SeqExpr sum(std::vector<SeqExpr> parts) {
    std::vector<SeqExpr> flat;
    for (auto& p : parts) {
      if (p.kind() == Kind::sum)
        for (const auto& c : p.children()) flat.push_back(c);
      else
        flat.push_back(p);
    }
    if (flat.empty()) throw ConfigError("sum of zero sequences");
    if (flat.size() == 1) return flat.front();
    return SeqExpr(std::make_shared<Node>(Node{Kind::sum, std::move(flat)}));
  }

  static SeqExpr tensor(std::vector<SeqExpr> parts) {
    std::vector<SeqExpr> flat;
    for (auto& p : parts) {
      if (p.kind() == Kind::tensor)
        for (const auto& c : p.children()) flat.push_back(c);
      else if (p.kind() == Kind::scalar)
        continue;  // a scalar factor does not change the layout
      else
        flat.push_back(p);
    }
    if (parts.empty()) throw ConfigError("tensor product of zero sequences");
    if (flat.empty()) return scalar();
    if (flat.size() == 1) return flat.front();
    return SeqExpr(std::make_shared<Node>(Node{Kind::tensor, std::move(flat)}));
  }

  static SeqExpr tensor_power(Index k) {
    if (k < 0) throw ConfigError("tensor power must be >= 0");
    if (k == 0) return scalar();
    return tensor(std::vector<SeqExpr>(static_cast<std::size_t>(k), base()));
  }

  static SeqExpr multiple(Index m, const SeqExpr& e) {
    if (m < 1) throw ConfigError("multiplicity must be >= 1");
    return sum(std::vector<SeqExpr>(static_cast<std::size_t>(m), e));
  }

  Kind kind() const { return node_->kind; }
  const std::vector<SeqExpr>& children() const { return node_->children; }

  // Summand list viewing every expression as a direct sum (possibly of one).
  std::vector<SeqExpr> summands() const {
    if (kind() == Kind::sum) return children();
    return {*this};
  }

  Index dim(Index level) const {
    if (level < 1) throw ConfigError("sequence level must be >= 1");
    return dim_guarded(level);
  }

  // Tensor order when the expression is a pure power of the base sequence
  // (0 for scalars); -1 otherwise.
  Index base_power_order() const {
    switch (kind()) {
      case Kind::scalar: return 0;
      case Kind::base: return 1;
      case Kind::tensor:
        for (const auto& c : children())
          if (c.kind() != Kind::base) return -1;
        return static_cast<Index>(children().size());
      case Kind::sum: return -1;
    }
    return -1;
  }

  Degrees degrees() const {
    switch (kind()) {
      case Kind::scalar:
      case Kind::base:
        return {1, 1, false};
      case Kind::sum: {
        Degrees d{0, 0, false};
        for (const auto& c : children()) {
          const Degrees cd = c.degrees();
          d.generation = std::max(d.generation, cd.generation);
          d.presentation = std::max(d.presentation, cd.presentation);
          d.presentation_assumed = d.presentation_assumed || cd.presentation_assumed;
        }
        return d;
      }
      case Kind::tensor: {
        const Index pure = base_power_order();
        if (pure >= 0) return {pure, pure, false};
        Degrees d{0, 0, true};
        for (const auto& c : children()) d.generation += c.degrees().generation;
        d.presentation = d.generation;
        return d;
      }
    }
    throw ConfigError("unreachable expression kind");
  }

  bool operator==(const SeqExpr& rhs) const {
    if (node_ == rhs.node_) return true;
    if (kind() != rhs.kind()) return false;
    if (children().size() != rhs.children().size()) return false;
    for (std::size_t i = 0; i < children().size(); ++i)
      if (!(children()[i] == rhs.children()[i])) return false;
    return true;
  }

  std::string to_string() const {
    switch (kind()) {
      case Kind::scalar: return "S";
      case Kind::base: return "V";
      case Kind::tensor: {
        const Index pure = base_power_order();
        if (pure >= 2) return "V^" + std::to_string(pure);
        std::string s;
        for (std::size_t i = 0; i < children().size(); ++i) {
          if (i) s += " (x) ";
          s += children()[i].atom_string();
        }
        return s;
      }
      case Kind::sum: {
        std::string s;
        std::size_t i = 0;
        bool first = true;
        while (i < children().size()) {
          std::size_t j = i;
          while (j < children().size() && children()[j] == children()[i]) ++j;
          const std::size_t run = j - i;
          if (!first) s += " + ";
          first = false;
          if (run > 1) s += std::to_string(run) + "*";
          s += children()[i].atom_string();
          i = j;
        }
        return s;
      }
    }
    throw ConfigError("unreachable expression kind");
  }

  static SeqExpr parse(const std::string& text);

 private:
  struct Node {
    Kind kind;
    std::vector<SeqExpr> children;
  };

  explicit SeqExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  std::string atom_string() const {
    const std::string s = to_string();
    const bool atom = kind() == Kind::scalar || kind() == Kind::base || base_power_order() >= 0;
    return atom ? s : "(" + s + ")";
  }

  Index dim_guarded(Index level) const {
    switch (kind()) {
      case Kind::scalar: return 1;
      case Kind::base: return level;
      case Kind::sum: {
        Index d = 0;
        for (const auto& c : children()) {
          d += c.dim_guarded(level);
          if (d > kDimCap) throw DimensionOverflowError("sequence dimension exceeds cap");
        }
        return d;
      }
      case Kind::tensor: {
        Index d = 1;
        for (const auto& c : children()) {
          const Index cd = c.dim_guarded(level);
          if (cd != 0 && d > kDimCap / cd)
            throw DimensionOverflowError("sequence dimension exceeds cap");
          d *= cd;
        }
        return d;
      }
    }
    throw ConfigError("unreachable expression kind");
  }

  std::shared_ptr<const Node> node_;
};

namespace detail {

// Grammar: expr := term ('+' term)* ; term := factor ('(x)' factor)* ;
// factor := [INT '*'] atom ; atom := 'S' | 'V' ['^' INT] | '(' expr ')'.
class ExprParser {
 public:
  explicit ExprParser(const std::string& s) : s_(s) {}

  SeqExpr parse() {
    SeqExpr e = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing input");
    return e;
  }

 private:
  SeqExpr parse_expr() {
    std::vector<SeqExpr> terms{parse_term()};
    while (true) {
      skip_ws();
      if (!consume('+')) break;
      terms.push_back(parse_term());
    }
    return terms.size() == 1 ? terms.front() : SeqExpr::sum(std::move(terms));
  }

  SeqExpr parse_term() {
    std::vector<SeqExpr> factors{parse_factor()};
    while (consume_tensor_sign()) factors.push_back(parse_factor());
    return factors.size() == 1 ? factors.front() : SeqExpr::tensor(std::move(factors));
  }

  SeqExpr parse_factor() {
    skip_ws();
    if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      const Index m = parse_int();
      skip_ws();
      if (!consume('*')) fail("expected '*' after multiplicity");
      return SeqExpr::multiple(m, parse_atom());
    }
    return parse_atom();
  }

  SeqExpr parse_atom() {
    skip_ws();
    if (consume('S')) return SeqExpr::scalar();
    if (consume('V')) {
      if (consume('^')) return SeqExpr::tensor_power(parse_int());
      return SeqExpr::base();
    }
    if (consume('(')) {
      SeqExpr e = parse_expr();
      skip_ws();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    fail("expected 'S', 'V', multiplicity or '('");
    return SeqExpr::scalar();
  }

  bool consume_tensor_sign() {
    skip_ws();
    if (s_.compare(pos_, 3, "(x)") == 0) {
      pos_ += 3;
      return true;
    }
    return false;
  }

  Index parse_int() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer");
    return static_cast<Index>(std::stoll(s_.substr(start, pos_ - start)));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& why) {
    throw ConfigError("cannot parse sequence expression '" + s_ + "' at position " +
                      std::to_string(pos_) + ": " + why);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline SeqExpr SeqExpr::parse(const std::string& text) { return detail::ExprParser(text).parse(); }

}  // namespace anydim
