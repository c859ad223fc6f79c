// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <nlohmann/json_fwd.hpp>
#include <utility>
#include <vector>

#include "otb/common.hpp"
#include "otb/sampleset.hpp"

namespace otb {

/// Tensor-product exponent vector (j_1, ..., j_d).
struct MultiIndex {
  std::vector<int> j;
  int total() const {
    int t = 0;
    for (int v : j) t += v;
    return t;
  }
};

/// All multi-indices with total degree <= max_total_degree, graded by total
/// degree and ascending lexicographic within a grade.  Size is C(p+d, d).
std::vector<MultiIndex> enumerate_multi_indices(int dim, int max_total_degree);

enum class FamilyKind { Hermite, Legendre, Laguerre, Empirical };

/// One-dimensional polynomial family evaluated in the standardized coordinate
/// u = (x - shift) / scale.
///
/// Hermite:  orthonormal for N(shift, scale^2).
/// Legendre: orthonormal for Uniform[shift - scale, shift + scale].
/// Laguerre: weight exponent alpha; orthonormal for Gamma(alpha + 1, scale).
/// Empirical: monomials in u, orthonormalized jointly via the spec transform.
struct Family1d {
  FamilyKind kind = FamilyKind::Hermite;
  double shift = 0.0;
  double scale = 1.0;
  double alpha = 0.0;
};

struct BasisEval {
  Vec phi;  // K values
  Mat jac;  // K x d partial derivatives
};

/// A truncated tensor-product polynomial basis.
class BasisSpec {
 public:
  BasisSpec() = default;

  static BasisSpec classical(std::vector<Family1d> families, int max_total_degree);
  /// Joint empirically-orthonormalized basis: phi(x) = R m(u) with m the
  /// graded monomials and R lower triangular.
  static BasisSpec empirical(Vec shift, Vec scale, int max_total_degree, Mat transform);

  int dim() const { return dim_; }
  int degree() const { return max_total_degree_; }
  int K() const { return static_cast<int>(indices_.size()); }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  const std::vector<Family1d>& families() const { return families_; }
  bool is_empirical() const { return !families_.empty() && families_[0].kind == FamilyKind::Empirical; }
  const Mat& transform() const { return transform_; }

  BasisEval eval(VecRef x) const;

  /// Position of the degree-one index along dimension a.
  int linear_index(int a) const;
  /// Rows E (d x K) with E phi(x) = x identically; requires degree >= 1.
  Mat identity_rows() const;

  nlohmann::json to_json() const;
  static BasisSpec from_json(const nlohmann::json& j);

 private:
  int dim_ = 0;
  int max_total_degree_ = 0;
  std::vector<Family1d> families_;
  std::vector<MultiIndex> indices_;
  Mat transform_;  // empirical only: K x K lower triangular
};

BasisEval eval_basis(const BasisSpec& spec, VecRef x);

/// Empirical Gram matrix (1/n) sum phi(X_i) phi(X_i)^T.
Mat orthonormality_gram(const BasisSpec& spec, const SampleSet& samples);

/// Orthonormalizes the graded monomials against the empirical measure of
/// `samples`; the returned spec's Gram on those same samples is the identity
/// to near machine precision.
BasisSpec gram_schmidt_empirical(const SampleSet& samples, int max_total_degree);

}  // namespace otb
