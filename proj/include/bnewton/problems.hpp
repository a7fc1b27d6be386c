#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "bnewton/bundle.hpp"
#include "bnewton/oracle.hpp"
#include "bnewton/phase1.hpp"
#include "bnewton/types.hpp"

namespace bnewton {

// Relative gap below which a point is reported outside the smooth region D:
// on the top-two piece values (max-quart), on each |inner term| (euc-sum),
// and on the top-two eigenvalues (max-eig).
inline constexpr double kDefaultTieTolerance = 1e-10;

// f(x) = max_i [ g_i'x + 1/2 x'H_i x + (c_i/24)|x|^4 ].  Minimized at 0 by
// construction: positive simplex weights are sampled and the last gradient
// solved for so that sum_i lambda_i g_i = 0.
template <typename ScalarT>
struct MaxQuartProblem {
  using Scalar = ScalarT;
  Index n = 0;
  Index k = 0;
  std::uint64_t seed = 0;
  std::vector<VecX<Scalar>> g;
  std::vector<MatX<Scalar>> H;
  std::vector<Scalar> c;
  VecX<Scalar> true_lambda;
};

// f(x) = sum_i | g_i'x + 1/2 x'H_i x + (c_i/24)|x|^4 |.  Same ingredients as
// MaxQuartProblem; nonconvex but weakly convex near the minimizer 0.
template <typename ScalarT>
struct EucSumProblem {
  using Scalar = ScalarT;
  Index n = 0;
  Index k = 0;
  std::uint64_t seed = 0;
  std::vector<VecX<Scalar>> g;
  std::vector<MatX<Scalar>> H;
  std::vector<Scalar> c;
  VecX<Scalar> true_lambda;
};

// f(x) = lambda_max( A_0 + sum_i x_i A_i ) for symmetric m x m matrices.
template <typename ScalarT>
struct MaxEigProblem {
  using Scalar = ScalarT;
  Index m = 0;
  Index n = 0;
  std::uint64_t seed = 0;
  std::vector<MatX<Scalar>> A;  // n+1 matrices, A[0] is the constant term
  // The true minimum is unknown; multistart fills these as reference data.
  std::optional<Scalar> reference_value;
  std::optional<int> reference_multiplicity;
};

namespace detail {

template <typename Scalar>
VecX<Scalar> randomGaussian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v(i) = Scalar(normal(rng));
  return v;
}

template <typename Scalar>
MatX<Scalar> randomOrthogonal(Index n, std::mt19937_64& rng) {
  MatX<Scalar> X(n, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) X(i, j) = Scalar(normal(rng));
  Eigen::HouseholderQR<MatX<Scalar>> qr(X);
  MatX<Scalar> Q = qr.householderQ() * MatX<Scalar>::Identity(n, n);
  const MatX<Scalar> R = qr.matrixQR();
  for (Index j = 0; j < n; ++j)
    if (R(j, j) < Scalar(0)) Q.col(j) = -Q.col(j);
  return Q;
}

// Q' diag(u) Q with eigenvalues uniform in [0.5, 2]; mild conditioning.
template <typename Scalar>
MatX<Scalar> randomSpd(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  VecX<Scalar> eigs(n);
  for (Index i = 0; i < n; ++i) eigs(i) = Scalar(unif(rng));
  const MatX<Scalar> Q = randomOrthogonal<Scalar>(n, rng);
  MatX<Scalar> H = Q.transpose() * eigs.asDiagonal() * Q;
  return (H + H.transpose()) / Scalar(2);
}

// Uniform on the open simplex via normalized exponentials.
template <typename Scalar>
VecX<Scalar> randomPositiveSimplex(Index k, std::mt19937_64& rng) {
  std::exponential_distribution<double> exp1(1.0);
  VecX<Scalar> lambda(k);
  for (Index i = 0; i < k; ++i) {
    double draw = 0.0;
    while (draw <= 0.0) draw = exp1(rng);
    lambda(i) = Scalar(draw);
  }
  return lambda / lambda.sum();
}

template <typename Scalar>
void generateQuarticIngredients(Index n, Index k, std::uint64_t seed,
                                std::vector<VecX<Scalar>>& g,
                                std::vector<MatX<Scalar>>& H,
                                std::vector<Scalar>& c,
                                VecX<Scalar>& lambda) {
  if (k < 1 || k > n + 1)
    throw InvalidInputError(
        "bundle size k must satisfy 1 <= k <= n+1 (affine-independence bound)");
  std::mt19937_64 rng(seed);

  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    lambda = randomPositiveSimplex<Scalar>(k, rng);
    g.clear();
    for (Index i = 0; i + 1 < k; ++i) g.push_back(randomGaussian<Scalar>(n, rng));
    VecX<Scalar> balance = VecX<Scalar>::Zero(n);
    for (Index i = 0; i + 1 < k; ++i) balance += lambda(i) * g[i];
    g.push_back(-balance / lambda(k - 1));

    MatX<Scalar> G(n, k);
    for (Index i = 0; i < k; ++i) G.col(i) = g[static_cast<std::size_t>(i)];
    ok = sigmaCheck(G) > Scalar(1e-8);
  }
  if (!ok)
    throw GenerationFailureError(
        "could not sample affinely independent gradients");

  std::uniform_real_distribution<double> unif(0.5, 2.0);
  H.clear();
  c.clear();
  for (Index i = 0; i < k; ++i) {
    H.push_back(randomSpd<Scalar>(n, rng));
    c.push_back(Scalar(unif(rng)));
  }
}

// Value, gradient, Hessian of one inner term g'x + 1/2 x'Hx + (c/24)|x|^4.
template <typename Scalar>
Scalar quarticTermValue(const VecX<Scalar>& g, const MatX<Scalar>& H, Scalar c,
                        const VecX<Scalar>& x, Scalar xnorm2) {
  return g.dot(x) + Scalar(0.5) * x.dot(H * x) +
         (c / Scalar(24)) * xnorm2 * xnorm2;
}

template <typename Scalar>
VecX<Scalar> quarticTermGradient(const VecX<Scalar>& g, const MatX<Scalar>& H,
                                 Scalar c, const VecX<Scalar>& x,
                                 Scalar xnorm2) {
  return g + H * x + (c / Scalar(6)) * xnorm2 * x;
}

template <typename Scalar>
MatX<Scalar> quarticTermHessian(const MatX<Scalar>& H, Scalar c,
                                const VecX<Scalar>& x, Scalar xnorm2) {
  const Index n = x.size();
  return H + (c / Scalar(6)) *
                 (xnorm2 * MatX<Scalar>::Identity(n, n) +
                  Scalar(2) * x * x.transpose());
}

}  // namespace detail

template <typename Scalar = double>
MaxQuartProblem<Scalar> generateMaxQuart(Index n, Index k, std::uint64_t seed) {
  MaxQuartProblem<Scalar> p;
  p.n = n;
  p.k = k;
  p.seed = seed;
  detail::generateQuarticIngredients<Scalar>(n, k, seed, p.g, p.H, p.c,
                                             p.true_lambda);
  return p;
}

template <typename Scalar = double>
EucSumProblem<Scalar> generateEucSum(Index n, Index k, std::uint64_t seed) {
  EucSumProblem<Scalar> p;
  p.n = n;
  p.k = k;
  p.seed = seed;
  detail::generateQuarticIngredients<Scalar>(n, k, seed, p.g, p.H, p.c,
                                             p.true_lambda);
  return p;
}

// Symmetric Gaussian coefficient matrices; minimizers of the top eigenvalue
// typically occur at multiplicity > 1, which is what makes these nonsmooth.
template <typename Scalar = double>
MaxEigProblem<Scalar> generateMaxEig(Index m, Index n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw InvalidInputError("max-eig needs m >= 1, n >= 1");
  MaxEigProblem<Scalar> p;
  p.m = m;
  p.n = n;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index a = 0; a <= n; ++a) {
    MatX<Scalar> B(m, m);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) B(i, j) = Scalar(normal(rng));
    p.A.push_back((B + B.transpose()) / Scalar(2));
  }
  return p;
}

// Active-piece evaluation.  in_domain is false whenever the top two piece
// values are within the tie tolerance of each other.
template <typename Scalar>
Evaluation<Scalar> oracleEval(const MaxQuartProblem<Scalar>& p,
                              const VecX<Scalar>& x,
                              Scalar tie_tolerance = Scalar(kDefaultTieTolerance),
                              bool with_hessian = true) {
  if (!x.allFinite()) throw InvalidInputError("evaluation point is not finite");
  const Scalar xnorm2 = x.squaredNorm();

  Index active = 0;
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  Scalar second = -std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < p.k; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Scalar v =
        detail::quarticTermValue(p.g[ui], p.H[ui], p.c[ui], x, xnorm2);
    if (v > top) {
      second = top;
      top = v;
      active = i;
    } else if (v > second) {
      second = v;
    }
  }

  const auto ua = static_cast<std::size_t>(active);
  Evaluation<Scalar> ev;
  ev.sample.point = x;
  ev.sample.value = top;
  ev.sample.gradient =
      detail::quarticTermGradient(p.g[ua], p.H[ua], p.c[ua], x, xnorm2);
  if (with_hessian)
    ev.sample.hessian = detail::quarticTermHessian(p.H[ua], p.c[ua], x, xnorm2);
  ev.region = static_cast<int>(active);
  ev.in_domain = p.k == 1 || (top - second) >=
                                 tie_tolerance * (Scalar(1) + std::abs(top));
  return ev;
}

// Signed-sum evaluation.  The activity region is the sign pattern of the
// inner terms; in_domain is false whenever any |inner term| is within the tie
// tolerance of zero.
template <typename Scalar>
Evaluation<Scalar> oracleEval(const EucSumProblem<Scalar>& p,
                              const VecX<Scalar>& x,
                              Scalar tie_tolerance = Scalar(kDefaultTieTolerance),
                              bool with_hessian = true) {
  if (!x.allFinite()) throw InvalidInputError("evaluation point is not finite");
  const Index n = x.size();
  const Scalar xnorm2 = x.squaredNorm();

  Scalar largest = Scalar(0);
  std::vector<Scalar> values(static_cast<std::size_t>(p.k));
  for (Index i = 0; i < p.k; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    values[ui] = detail::quarticTermValue(p.g[ui], p.H[ui], p.c[ui], x, xnorm2);
    largest = std::max(largest, std::abs(values[ui]));
  }

  Evaluation<Scalar> ev;
  ev.sample.point = x;
  ev.sample.value = Scalar(0);
  ev.sample.gradient = VecX<Scalar>::Zero(n);
  if (with_hessian) ev.sample.hessian = MatX<Scalar>::Zero(n, n);
  ev.in_domain = true;

  int mask = 0;
  for (Index i = 0; i < p.k; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Scalar sign = values[ui] >= Scalar(0) ? Scalar(1) : Scalar(-1);
    ev.sample.value += std::abs(values[ui]);
    ev.sample.gradient +=
        sign * detail::quarticTermGradient(p.g[ui], p.H[ui], p.c[ui], x, xnorm2);
    if (with_hessian)
      ev.sample.hessian +=
          sign * detail::quarticTermHessian(p.H[ui], p.c[ui], x, xnorm2);
    if (std::abs(values[ui]) < tie_tolerance * (Scalar(1) + largest))
      ev.in_domain = false;
    if (i < 31 && sign > Scalar(0)) mask |= 1 << i;
  }
  ev.region = mask;
  return ev;
}

// Top-eigenvalue evaluation via simple-eigenvalue perturbation formulas.
// in_domain is false whenever the top two eigenvalues are within the tie
// tolerance of each other.
template <typename Scalar>
Evaluation<Scalar> oracleEval(const MaxEigProblem<Scalar>& p,
                              const VecX<Scalar>& x,
                              Scalar tie_tolerance = Scalar(kDefaultTieTolerance),
                              bool with_hessian = true) {
  if (!x.allFinite()) throw InvalidInputError("evaluation point is not finite");
  if (x.size() != p.n) throw InvalidInputError("dimension mismatch");

  MatX<Scalar> Ax = p.A[0];
  for (Index i = 0; i < p.n; ++i)
    Ax += x(i) * p.A[static_cast<std::size_t>(i + 1)];
  Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(Ax);
  const VecX<Scalar> evals = eig.eigenvalues();  // ascending
  const Scalar top = evals(p.m - 1);

  Evaluation<Scalar> ev;
  ev.sample.point = x;
  ev.sample.value = top;
  ev.in_domain =
      p.m == 1 || (top - evals(p.m - 2)) >=
                      tie_tolerance * (Scalar(1) + std::abs(top));
  ev.region = -1;

  const VecX<Scalar> v1 = eig.eigenvectors().col(p.m - 1);
  ev.sample.gradient.resize(p.n);
  MatX<Scalar> inner(p.n, p.m);  // inner(j, q) = v1' A_{j+1} v_q
  for (Index j = 0; j < p.n; ++j) {
    const VecX<Scalar> Ajv = p.A[static_cast<std::size_t>(j + 1)] * v1;
    ev.sample.gradient(j) = v1.dot(Ajv);
    if (with_hessian) inner.row(j) = (eig.eigenvectors().transpose() * Ajv).transpose();
  }
  if (with_hessian) {
    MatX<Scalar> Hs = MatX<Scalar>::Zero(p.n, p.n);
    for (Index q = 0; q + 1 < p.m; ++q) {
      const Scalar denom = top - evals(q);
      Hs += (Scalar(2) / denom) * inner.col(q) * inner.col(q).transpose();
    }
    ev.sample.hessian = (Hs + Hs.transpose()) / Scalar(2);
  }
  return ev;
}

// Adaptor exposing a problem through the black-box oracle interface.
template <typename Problem>
class ProblemOracle final : public Oracle<typename Problem::Scalar> {
 public:
  using Scalar = typename Problem::Scalar;

  explicit ProblemOracle(const Problem& problem,
                         Scalar tie_tolerance = Scalar(kDefaultTieTolerance))
      : problem_(&problem), tie_tolerance_(tie_tolerance) {}

  Index dimension() const override { return problem_->n; }

  Evaluation<Scalar> evaluate(const VecX<Scalar>& x,
                              bool with_hessian) const override {
    return oracleEval(*problem_, x, tie_tolerance_, with_hessian);
  }

 private:
  const Problem* problem_;
  Scalar tie_tolerance_;
};

template <typename Problem>
ProblemOracle<Problem> makeOracle(
    const Problem& problem,
    typename Problem::Scalar tie_tolerance =
        typename Problem::Scalar(kDefaultTieTolerance)) {
  return ProblemOracle<Problem>(problem, tie_tolerance);
}

template <typename Scalar>
int regionOf(const MaxQuartProblem<Scalar>& p, const VecX<Scalar>& x) {
  return oracleEval(p, x, Scalar(kDefaultTieTolerance), false).region;
}

template <typename Scalar>
int regionOf(const EucSumProblem<Scalar>& p, const VecX<Scalar>& x) {
  return oracleEval(p, x, Scalar(kDefaultTieTolerance), false).region;
}

// Rejection-sample a full bundle for a max-quart instance: exactly one
// reference point per activity region, with the farthest point at exactly
// `radius` from the minimizer 0.  Points are kept only when the active piece
// dominates with margin relative to the sampling radius, so the labels stay
// stable under the final rescale.
template <typename Scalar>
Bundle<Scalar> sampleFullBundle(const MaxQuartProblem<Scalar>& p, Scalar radius,
                                std::uint64_t seed,
                                Scalar tie_tolerance = Scalar(kDefaultTieTolerance)) {
  if (!(radius > Scalar(0))) throw InvalidInputError("radius must be positive");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unif(0.5, 1.0);

  const Scalar margin = Scalar(1e-3) * radius;
  std::vector<VecX<Scalar>> points(static_cast<std::size_t>(p.k));
  std::vector<bool> filled(static_cast<std::size_t>(p.k), false);

  auto marginAt = [&](const VecX<Scalar>& x) {
    const Scalar xnorm2 = x.squaredNorm();
    Scalar top = -std::numeric_limits<Scalar>::infinity();
    Scalar second = -std::numeric_limits<Scalar>::infinity();
    for (Index i = 0; i < p.k; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const Scalar v =
          detail::quarticTermValue(p.g[ui], p.H[ui], p.c[ui], x, xnorm2);
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    return p.k == 1 ? std::numeric_limits<Scalar>::infinity() : top - second;
  };

  for (int attempt = 0; attempt < 200000; ++attempt) {
    VecX<Scalar> dir = detail::randomGaussian<Scalar>(p.n, rng);
    const Scalar len = dir.norm();
    if (!(len > Scalar(0))) continue;
    const VecX<Scalar> x = (radius * Scalar(unif(rng)) / len) * dir;
    if (marginAt(x) < margin) continue;
    const int region = regionOf(p, x);
    const auto ur = static_cast<std::size_t>(region);
    if (filled[ur]) continue;
    points[ur] = x;
    filled[ur] = true;

    bool complete = true;
    for (bool b : filled) complete = complete && b;
    if (!complete) continue;

    // Rescale so the farthest point sits at exactly `radius`, then confirm
    // the labels survived.
    Scalar maxnorm = Scalar(0);
    for (const auto& pt : points) maxnorm = std::max(maxnorm, pt.norm());
    const Scalar scale = radius / maxnorm;
    bool stable = true;
    std::vector<OracleSample<Scalar>> samples;
    for (Index i = 0; i < p.k && stable; ++i) {
      const VecX<Scalar> sp = scale * points[static_cast<std::size_t>(i)];
      Evaluation<Scalar> ev = oracleEval(p, sp, tie_tolerance, true);
      stable = ev.in_domain && ev.region == static_cast<int>(i) &&
               marginAt(sp) >= margin / Scalar(2);
      samples.push_back(std::move(ev.sample));
    }
    if (stable) return Bundle<Scalar>(std::move(samples));
    std::fill(filled.begin(), filled.end(), false);
  }
  throw GenerationFailureError(
      "could not sample one reference point per activity region");
}

// Fill the max-eig reference fields from BFGS multistart: the best value
// found and the eigenvalue multiplicity at the winning point.
template <typename Scalar>
void estimateMaxEigReference(MaxEigProblem<Scalar>& p, int starts = 5,
                             int iterations = 200, std::uint64_t seed = 1,
                             Scalar cluster_tolerance = Scalar(1e-6)) {
  const ProblemOracle<MaxEigProblem<Scalar>> oracle(p);
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);

  Scalar best = std::numeric_limits<Scalar>::infinity();
  VecX<Scalar> best_point = VecX<Scalar>::Zero(p.n);
  for (int s = 0; s < starts; ++s) {
    const VecX<Scalar> start =
        s == 0 ? VecX<Scalar>::Ones(p.n)
               : VecX<Scalar>(detail::randomGaussian<Scalar>(p.n, rng));
    const BfgsResult<Scalar> run = runNonsmoothBfgs(oracle, start, iterations);
    if (run.final_value < best) {
      best = run.final_value;
      best_point = run.final_point;
    }
  }

  MatX<Scalar> Ax = p.A[0];
  for (Index i = 0; i < p.n; ++i)
    Ax += best_point(i) * p.A[static_cast<std::size_t>(i + 1)];
  Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(Ax);
  const VecX<Scalar> evals = eig.eigenvalues();
  const Scalar top = evals(p.m - 1);
  int multiplicity = 0;
  for (Index q = 0; q < p.m; ++q)
    if (top - evals(q) <= cluster_tolerance * (Scalar(1) + std::abs(top)))
      ++multiplicity;

  p.reference_value = best;
  p.reference_multiplicity = multiplicity;
}

}  // namespace bnewton
