// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <utility>
#include <vector>

#include "otb/common.hpp"
#include "otb/polybasis.hpp"
#include "otb/sampleset.hpp"

namespace otb {

enum class PriorKind { Gaussian, UniformBox, Exponential, Laplace, Gamma };

/// Product-form (or jointly Gaussian) source distribution with closed-form
/// density, gradient, entropy, and inverse-CDF sampling.
class PriorModel {
 public:
  static PriorModel gaussian(Vec mean, Mat cov);
  static PriorModel uniform_box(Vec lo, Vec hi);
  static PriorModel exponential(Vec rates);
  static PriorModel laplace(Vec scales);
  static PriorModel gamma(Vec shapes, Vec scales);

  int dim() const { return dim_; }
  PriorKind kind() const { return kind_; }

  double log_density(VecRef x) const;
  Vec grad_log_density(VecRef x) const;
  Mat hess_log_density(VecRef x) const;
  bool in_support(VecRef x) const;
  /// Componentwise support bounds; +-inf entries mean unbounded.
  std::pair<Vec, Vec> support_box() const;
  /// Differential entropy, closed form.
  double entropy() const;

  /// i.i.d. draws by inverse CDF (or affine transform of standard normals for
  /// correlated Gaussians); identical seed gives identical bytes.
  SampleSet sample(std::size_t n, std::uint64_t seed,
                   std::string_view stream = "sample") const;

  /// Matched orthogonal family for dimension a; UnsupportedPrior when no
  /// classical family exists (Laplace, correlated Gaussian).
  Family1d family_for_dim(int a) const;

  /// sigma^2 if the prior is N(mean, sigma^2 I), otherwise UnsupportedPrior.
  double isotropic_variance() const;

  nlohmann::json descriptor() const;
  static PriorModel from_json(const nlohmann::json& j);

  // parameter access for models that need it
  const Vec& mean() const { return p1_; }
  const Mat& cov() const { return cov_; }
  const Vec& lo() const { return p1_; }
  const Vec& hi() const { return p2_; }
  const Vec& rates() const { return p1_; }
  const Vec& scales() const { return kind_ == PriorKind::Gamma ? p2_ : p1_; }
  const Vec& shapes() const { return p1_; }

 private:
  PriorKind kind_ = PriorKind::Gaussian;
  int dim_ = 0;
  Vec p1_, p2_;       // meaning depends on kind
  Mat cov_, cov_inv_, chol_;  // Gaussian only
  double cov_logdet_ = 0.0;
};

enum class LikelihoodKind { GaussianLinear, PoissonCount, Logistic, SpectralMagnitude };

/// Observation model giving log p(y | x) as a function of the parameter x,
/// with gradient and Hessian in x.
class LikelihoodModel {
 public:
  static LikelihoodModel gaussian_linear(Mat M, Mat noise_cov, Vec y);
  static LikelihoodModel poisson_counts(std::vector<long> counts);
  static LikelihoodModel logistic(Mat features, std::vector<int> labels,
                                  double offset = 0.0);
  /// Magnitudes grouped into sub-bands; component x_i is the common mean of
  /// group i under independent N(x_i, sigma2) noise.
  static LikelihoodModel spectral_magnitude(const std::vector<Vec>& group_magnitudes,
                                            double sigma2);

  LikelihoodKind kind() const { return kind_; }
  int dim() const { return dim_; }

  double log_likelihood(VecRef x) const;
  Vec grad_log_likelihood(VecRef x) const;
  Mat hess_log_likelihood(VecRef x) const;

  nlohmann::json descriptor() const;

  const Mat& features() const { return M_; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  LikelihoodKind kind_ = LikelihoodKind::GaussianLinear;
  int dim_ = 0;
  Mat M_, noise_inv_;   // GaussianLinear: forward operator; Logistic: features
  Vec y_;               // GaussianLinear observation
  double const_term_ = 0.0;
  std::vector<long> counts_;
  std::vector<int> labels_;
  double offset_ = 0.0;
  Vec group_sum_, group_n_;  // spectral sufficient statistics
  double sigma2_ = 1.0;
};

/// Log-concave target density, possibly unnormalized.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  virtual double log_density(VecRef x) const = 0;
  virtual Vec grad_log_density(VecRef x) const = 0;
  virtual Mat hess_log_density(VecRef x) const = 0;
  virtual bool in_support(VecRef x) const = 0;
  virtual std::pair<Vec, Vec> support_box() const = 0;
  virtual bool normalized() const = 0;
  virtual std::string describe() const = 0;
};

/// Unnormalized posterior: log prior + log likelihood.
class PosteriorTarget : public TargetDensity {
 public:
  PosteriorTarget(PriorModel prior, LikelihoodModel lik);
  int dim() const override { return prior_.dim(); }
  double log_density(VecRef x) const override;
  Vec grad_log_density(VecRef x) const override;
  Mat hess_log_density(VecRef x) const override;
  bool in_support(VecRef x) const override { return prior_.in_support(x); }
  std::pair<Vec, Vec> support_box() const override { return prior_.support_box(); }
  bool normalized() const override { return false; }
  std::string describe() const override;
  const PriorModel& prior() const { return prior_; }
  const LikelihoodModel& likelihood() const { return lik_; }

 private:
  PriorModel prior_;
  LikelihoodModel lik_;
};

/// A prior used directly as a (normalized) target.
class PriorTargetAdapter : public TargetDensity {
 public:
  explicit PriorTargetAdapter(PriorModel p) : prior_(std::move(p)) {}
  int dim() const override { return prior_.dim(); }
  double log_density(VecRef x) const override { return prior_.log_density(x); }
  Vec grad_log_density(VecRef x) const override { return prior_.grad_log_density(x); }
  Mat hess_log_density(VecRef x) const override { return prior_.hess_log_density(x); }
  bool in_support(VecRef x) const override { return prior_.in_support(x); }
  std::pair<Vec, Vec> support_box() const override { return prior_.support_box(); }
  bool normalized() const override { return true; }
  std::string describe() const override;
  const PriorModel& prior() const { return prior_; }

 private:
  PriorModel prior_;
};

/// Posterior mode by ascent on the unnormalized log density: projected Newton
/// with backtracking for smooth targets, coordinate descent with soft
/// thresholding for Laplace priors under Gaussian-linear likelihoods.
/// Converges when the (projected / minimal-norm sub-) gradient drops below
/// 1e-8; DidNotConverge after 500 iterations.
Vec map_estimate(const PosteriorTarget& target, VecRef x0);

/// Classical basis matched to the prior's per-dimension marginals.
BasisSpec basis_for_prior(const PriorModel& prior, int max_total_degree);

// spec-facing free-function aliases
inline double log_prior(const PriorModel& p, VecRef x) { return p.log_density(x); }
inline Vec grad_log_prior(const PriorModel& p, VecRef x) { return p.grad_log_density(x); }
inline double log_likelihood(const LikelihoodModel& l, VecRef x) { return l.log_likelihood(x); }
inline Vec grad_log_likelihood(const LikelihoodModel& l, VecRef x) { return l.grad_log_likelihood(x); }
inline SampleSet sample_prior(const PriorModel& p, std::size_t n, std::uint64_t seed) {
  return p.sample(n, seed);
}

}  // namespace otb
