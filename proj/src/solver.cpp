// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/solver.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>

#include "otb/parallel.hpp"

namespace otb {

using nlohmann::json;

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::MaxIters: return "MaxIters";
    case Termination::LineSearchStall: return "LineSearchStall";
  }
  return "?";
}

json SolveReport::to_json() const {
  json j;
  j["iterations"] = iterations;
  j["termination"] = termination_name(termination);
  j["final_grad_norm"] = final_grad_norm;
  j["wall_time_s"] = wall_time_s;
  j["objective"] = objective;
  return j;
}

FitCache FitCache::build(const BasisSpec& spec, const SampleSet& samples,
                         const PriorModel* source) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("fit cache: no samples");
  if (samples.dim() != spec.dim()) throw Error("fit cache: dimension mismatch");
  FitCache c;
  c.dim_ = spec.dim();
  c.Phi_.resize(static_cast<Eigen::Index>(n), spec.K());
  c.jacs_.resize(n);
  if (source) c.source_logp_.resize(static_cast<Eigen::Index>(n));
  par::parallel_for(n, [&](std::size_t i) {
    BasisEval e = spec.eval(samples.row(i));
    c.Phi_.row(static_cast<Eigen::Index>(i)) = e.phi.transpose();
    c.jacs_[i] = std::move(e.jac);
    if (source)
      c.source_logp_[static_cast<Eigen::Index>(i)] = source->log_density(samples.row(i));
  });
  return c;
}

namespace {
constexpr double kCondLimit = 1e12;

/// det and feasibility of A = W J_i; d == 1 short-circuits the eigensolve.
bool feasible_det(const Mat& A, double eps_det, double* det_out) {
  const double det = A.rows() == 1 ? A(0, 0) : A.determinant();
  *det_out = det;
  if (!(det > eps_det)) return false;
  if (A.rows() > 1) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
    if (!(es.eigenvalues().minCoeff() > 0.0)) return false;
  }
  return true;
}
}  // namespace

double objective(MatRef W, const FitCache& cache, const TargetDensity& target,
                 double eps_det) {
  struct Acc {
    double sum = 0.0;
    bool bad = false;
    Acc& operator+=(const Acc& o) {
      sum += o.sum;
      bad = bad || o.bad;
      return *this;
    }
  };
  const std::size_t n = cache.n();
  Acc acc = par::blocked_reduce(n, Acc{}, [&](std::size_t b, std::size_t e, Acc& a) {
    for (std::size_t i = b; i < e && !a.bad; ++i) {
      Vec S = W * cache.Phi().row(static_cast<Eigen::Index>(i)).transpose();
      Mat A = W * cache.jac(i);
      double det;
      if (!feasible_det(A, eps_det, &det)) {
        a.bad = true;
        return;
      }
      const double lq = target.log_density(S);
      if (lq == kNegInf) {
        a.bad = true;
        return;
      }
      a.sum += lq + std::log(det);
    }
  });
  if (acc.bad) return kNegInf;
  return acc.sum / static_cast<double>(n);
}

std::pair<double, Mat> objective_and_gradient(MatRef W, const FitCache& cache,
                                              const TargetDensity& target,
                                              double eps_det) {
  const std::size_t n = cache.n();
  const int d = cache.dim();
  const int K = cache.K();
  struct Acc {
    double sum = 0.0;
    Mat G;
    bool bad = false;
    bool singular = false;
    Acc& operator+=(const Acc& o) {
      sum += o.sum;
      if (G.size() == 0) G = o.G;
      else if (o.G.size() != 0) G += o.G;
      bad = bad || o.bad;
      singular = singular || o.singular;
      return *this;
    }
  };
  Acc zero;
  zero.G = Mat::Zero(d, K);
  Acc acc = par::blocked_reduce(n, zero, [&](std::size_t b, std::size_t e, Acc& a) {
    for (std::size_t i = b; i < e && !a.bad; ++i) {
      Vec phi = cache.Phi().row(static_cast<Eigen::Index>(i)).transpose();
      Vec S = W * phi;
      Mat A = W * cache.jac(i);
      double det;
      if (!feasible_det(A, eps_det, &det)) {
        a.bad = true;
        return;
      }
      const double lq = target.log_density(S);
      if (lq == kNegInf) {
        a.bad = true;
        return;
      }
      Mat Ainv = A.rows() == 1 ? Mat::Constant(1, 1, 1.0 / A(0, 0))
                               : A.inverse().eval();
      if (A.rows() > 1 &&
          A.cwiseAbs().rowwise().sum().maxCoeff() *
                  Ainv.cwiseAbs().rowwise().sum().maxCoeff() >
              kCondLimit) {
        a.singular = true;
        return;
      }
      a.sum += lq + std::log(det);
      a.G.noalias() += target.grad_log_density(S) * phi.transpose();
      a.G.noalias() += Ainv.transpose() * cache.jac(i).transpose();
    }
  });
  if (acc.singular)
    throw SingularJacobian("gradient: Jacobian condition number exceeds 1e12");
  if (acc.bad) return {kNegInf, Mat::Zero(d, K)};
  return {acc.sum / static_cast<double>(n), acc.G / static_cast<double>(n)};
}

Mat gradient(MatRef W, const FitCache& cache, const TargetDensity& target) {
  auto [f, G] = objective_and_gradient(W, cache, target);
  if (f == kNegInf)
    throw InfeasiblePoint("gradient: W is infeasible on the training samples");
  return G;
}

Mat objective_hessian(MatRef W, const FitCache& cache, const TargetDensity& target) {
  const std::size_t n = cache.n();
  const int d = cache.dim();
  const int K = cache.K();
  const int P = d * K;
  Mat H = par::blocked_reduce(
      n, Mat(Mat::Zero(P, P)),
      [&](std::size_t b, std::size_t e, Mat& acc) {
        for (std::size_t i = b; i < e; ++i) {
          Vec phi = cache.Phi().row(static_cast<Eigen::Index>(i)).transpose();
          Vec S = W * phi;
          Mat A = W * cache.jac(i);
          Mat Ainv = A.rows() == 1 ? Mat::Constant(1, 1, 1.0 / A(0, 0))
                                   : A.inverse().eval();
          Mat Hq = target.hess_log_density(S);
          Mat B = cache.jac(i) * Ainv;  // K x d
          Mat outer = phi * phi.transpose();
          for (int r = 0; r < d; ++r)
            for (int rp = 0; rp < d; ++rp) {
              auto blk = acc.block(r * K, rp * K, K, K);
              if (Hq(r, rp) != 0.0) blk.noalias() += Hq(r, rp) * outer;
              blk.noalias() -= B.col(rp) * B.col(r).transpose();
            }
        }
      },
      64);
  return H / static_cast<double>(n);
}

namespace {
Mat vec_to_mat(const Vec& v, int d, int K) {
  Mat W(d, K);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < K; ++c) W(r, c) = v[r * K + c];
  return W;
}

Vec mat_to_vec(const Mat& W) {
  Vec v(W.size());
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) v[r * W.cols() + c] = W(r, c);
  return v;
}

/// Affine start mapping the sample bounding box into the target support box,
/// for targets whose support does not contain the identity image.
bool affine_start(const BasisSpec& spec, const SampleSet& samples,
                  const TargetDensity& target, Mat* W_out) {
  auto [lo, hi] = target.support_box();
  const int d = spec.dim();
  for (int a = 0; a < d; ++a)
    if (!std::isfinite(lo[a]) || !std::isfinite(hi[a])) return false;
  Mat E = spec.identity_rows();
  Mat W = Mat::Zero(d, spec.K());
  for (int a = 0; a < d; ++a) {
    const double xmin = samples.X.col(a).minCoeff();
    const double xmax = samples.X.col(a).maxCoeff();
    if (!(xmax > xmin)) return false;
    const double width = hi[a] - lo[a];
    const double slope = 0.9 * width / (xmax - xmin);
    const double intercept = lo[a] + 0.05 * width - slope * xmin;
    W.row(a) = slope * E.row(a);
    W(a, 0) += intercept;  // phi_0 == 1 in every family
  }
  *W_out = W;
  return true;
}
}  // namespace

FitResult fit(const TargetDensity& target, const SampleSet& samples,
              const BasisSpec& spec, const FitOptions& opts, const Mat* W0) {
  const auto t0 = std::chrono::steady_clock::now();
  FitCache cache = FitCache::build(spec, samples);
  const int d = spec.dim();
  const int K = spec.K();
  if (target.dim() != d) throw Error("fit: target dimension mismatch");

  Mat W = W0 ? *W0 : spec.identity_rows();
  double f = objective(W, cache, target, opts.eps_det);
  if (f == kNegInf && !W0) {
    Mat Wa;
    if (affine_start(spec, samples, target, &Wa)) {
      W = Wa;
      f = objective(W, cache, target, opts.eps_det);
    }
  }
  if (f == kNegInf)
    throw InfeasiblePoint("fit: no feasible starting map for this target");

  SolveReport report;
  report.objective.push_back(f);
  const bool use_newton = d * K <= opts.newton_param_limit;
  Termination term = Termination::MaxIters;
  double gnorm = kPosInf;
  int it = 0;
  while (it < opts.max_iters) {
    auto [fv, G] = objective_and_gradient(W, cache, target, opts.eps_det);
    f = fv;
    gnorm = G.norm();
    if (gnorm < opts.grad_tol) {
      term = Termination::Converged;
      break;
    }

    Mat D = G;
    if (use_newton) {
      Mat H = objective_hessian(W, cache, target);
      Vec g = mat_to_vec(G);
      double ridge = 0.0;
      for (int tries = 0; tries < 6; ++tries) {
        Mat Hn = -H;
        if (ridge > 0.0) Hn.diagonal().array() += ridge;
        Eigen::LDLT<Mat> ldlt(Hn);
        if (ldlt.info() == Eigen::Success) {
          Vec dv = ldlt.solve(g);
          if (dv.allFinite() && dv.dot(g) > 0.0) {
            D = vec_to_mat(dv, d, K);
            break;
          }
        }
        ridge = ridge == 0.0 ? 1e-10 : ridge * 1e3;
      }
    }

    auto try_direction = [&](const Mat& dir, double* step_out) {
      const double slope = (dir.array() * G.array()).sum();
      if (!(slope > 0.0)) return false;
      double t = 1.0;
      while (t >= 1e-16) {
        const double fc = objective(W + t * dir, cache, target, opts.eps_det);
        if (fc > f + opts.armijo_c * t * slope) {
          W += t * dir;
          f = fc;
          *step_out = t;
          return true;
        }
        t *= opts.shrink;
      }
      return false;
    };

    double step = 0.0;
    bool ok = try_direction(D, &step);
    if (!ok && use_newton) ok = try_direction(G, &step);
    if (!ok) {
      term = Termination::LineSearchStall;
      break;
    }
    report.objective.push_back(f);
    ++it;
  }

  report.iterations = it;
  report.final_grad_norm = gnorm;
  report.termination = term;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return FitResult{TransportMap(spec, std::move(W), target.describe()),
                   std::move(report)};
}

ChainResult fit_chain(const PriorModel& base, const TargetDensity& intermediate,
                      const TargetDensity& final_target,
                      const SampleSet& base_samples, const BasisSpec& base_spec,
                      const FitOptions& opts) {
  if (base.dim() != base_spec.dim())
    throw Error("fit_chain: base and basis dimensions differ");
  FitResult r1 = fit(intermediate, base_samples, base_spec, opts);
  if (r1.report.termination != Termination::Converged)
    throw ChainStageError(1, r1.report.termination);
  SampleSet pushed = push_samples(r1.map, base_samples);
  BasisSpec spec2 = gram_schmidt_empirical(pushed, base_spec.degree());
  FitResult r2 = fit(final_target, pushed, spec2, opts);
  if (r2.report.termination != Termination::Converged)
    throw ChainStageError(2, r2.report.termination);
  return ChainResult{std::move(r1.map), std::move(r2.map), std::move(r1.report),
                     std::move(r2.report), std::move(pushed)};
}

}  // namespace otb
