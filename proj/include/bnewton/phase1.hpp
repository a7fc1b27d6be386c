#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "bnewton/bundle.hpp"
#include "bnewton/oracle.hpp"
#include "bnewton/subproblem.hpp"
#include "bnewton/types.hpp"

namespace bnewton {

template <typename Scalar>
struct BundleMethodConfig {
  Scalar rho = Scalar(1);           // proximal parameter
  Scalar beta = Scalar(1e-5);       // sufficient-decrease parameter in (0,1)
  Scalar epsilon_bar = Scalar(1e-6);  // stopping tolerance on the model gap
  int max_iterations = 1000;
  std::optional<int> cut_cap;  // drop the weakest cut beyond this many
};

enum class CandidateSource { kStronglyActiveCuts, kLastIterates };

// Points near the minimizer with their gradients; the raw material for
// bundle-size estimation and initial-bundle selection.
template <typename Scalar>
struct CandidateSet {
  std::vector<VecX<Scalar>> points;
  std::vector<VecX<Scalar>> gradients;
  CandidateSource source = CandidateSource::kStronglyActiveCuts;

  Index size() const { return static_cast<Index>(points.size()); }

  // Columns (gradient; 1): the lifted matrix whose approximate rank
  // estimates 1 + dim of the subdifferential.
  MatX<Scalar> liftedGradientMatrix() const {
    if (points.empty()) throw InvalidInputError("empty candidate set");
    const Index n = gradients.front().size();
    MatX<Scalar> M(n + 1, size());
    for (Index i = 0; i < size(); ++i) {
      M.col(i).head(n) = gradients[static_cast<std::size_t>(i)];
      M(n, i) = Scalar(1);
    }
    return M;
  }
};

template <typename Scalar>
struct Phase1Record {
  int iteration = 0;
  long oracle_calls = 0;
  Scalar center_value = Scalar(0);
  Scalar gap = Scalar(0);  // f(z) - max_s l_s(xhat); BFGS reports |grad| here
  bool serious = false;
};

template <typename Scalar>
struct BundleMethodResult {
  VecX<Scalar> center;
  Scalar center_value = Scalar(0);
  CandidateSet<Scalar> candidates;
  std::vector<Phase1Record<Scalar>> trace;
  bool converged = false;  // false when the iteration cap truncated the run
  long oracle_calls = 0;
};

// Multiple-cut proximal bundle method for a convex objective.  Accumulates
// cutting planes, takes the prox step against the current center, and accepts
// it as a serious step on sufficient decrease.  Stops when the model gap
// f(z) - max_s l_s(xhat) drops to epsilon_bar.  The candidate set holds the
// points whose cuts carried dual weight above 1e-8 in the final prox solve.
template <typename Scalar>
BundleMethodResult<Scalar> runBundleMethod(const Oracle<Scalar>& oracle,
                                           const VecX<Scalar>& start,
                                           const BundleMethodConfig<Scalar>& config) {
  if (!(config.rho > Scalar(0)))
    throw InvalidInputError("proximal parameter must be positive");
  if (!(config.beta > Scalar(0) && config.beta < Scalar(1)))
    throw InvalidInputError("sufficient-decrease parameter must be in (0,1)");
  if (config.epsilon_bar < Scalar(0))
    throw InvalidInputError("stopping tolerance must be nonnegative");
  if (!start.allFinite()) throw InvalidInputError("start point is not finite");

  CountingOracle<Scalar> counted(oracle);
  const Evaluation<Scalar> ev0 = counted.evaluate(start, /*with_hessian=*/false);

  std::vector<AffineModel<Scalar>> cuts;
  std::vector<VecX<Scalar>> cut_points;
  cuts.push_back(
      AffineModel<Scalar>{ev0.sample.value, ev0.sample.gradient, start});
  cut_points.push_back(start);

  BundleMethodResult<Scalar> result;
  result.center = start;
  result.center_value = ev0.sample.value;

  VecX<Scalar> weights = VecX<Scalar>::Ones(1);
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    const ProxCutSolution<Scalar> prox =
        solveProximalCutQp(cuts, result.center, config.rho);
    weights = prox.weights;

    Scalar model = -std::numeric_limits<Scalar>::infinity();
    for (const auto& cut : cuts) model = std::max(model, cut(prox.xhat));
    const Scalar gap = result.center_value - model;

    Phase1Record<Scalar> rec;
    rec.iteration = iter;
    rec.center_value = result.center_value;
    rec.gap = gap;

    if (gap <= config.epsilon_bar) {
      rec.oracle_calls = counted.calls();
      result.trace.push_back(rec);
      result.converged = true;
      break;
    }

    const Evaluation<Scalar> ev =
        counted.evaluate(prox.xhat, /*with_hessian=*/false);
    if (ev.sample.value <= result.center_value - config.beta * gap) {
      result.center = prox.xhat;
      result.center_value = ev.sample.value;
      rec.serious = true;
    }
    cuts.push_back(
        AffineModel<Scalar>{ev.sample.value, ev.sample.gradient, prox.xhat});
    cut_points.push_back(prox.xhat);

    if (config.cut_cap && static_cast<Index>(cuts.size()) > *config.cut_cap) {
      // Drop the cut the last prox solve leaned on least.  The newest cut has
      // no weight yet and is never dropped.
      Index victim = 0;
      weights.minCoeff(&victim);
      cuts.erase(cuts.begin() + victim);
      cut_points.erase(cut_points.begin() + victim);
      // weights are stale now; next solve recomputes them
    }

    rec.oracle_calls = counted.calls();
    rec.center_value = result.center_value;
    result.trace.push_back(rec);
  }

  result.oracle_calls = counted.calls();

  // On a truncated run the cached weights refer to the cut set before the
  // last append/eviction; one more prox solve re-prices the current cuts.
  if (!result.converged)
    weights = solveProximalCutQp(cuts, result.center, config.rho).weights;

  result.candidates.source = CandidateSource::kStronglyActiveCuts;
  for (Index s = 0; s < weights.size(); ++s) {
    if (weights(s) > Scalar(1e-8)) {
      result.candidates.points.push_back(cut_points[static_cast<std::size_t>(s)]);
      result.candidates.gradients.push_back(
          cuts[static_cast<std::size_t>(s)].gradient);
    }
  }
  // Degenerate but possible: all weight on cuts below threshold.  Keep the
  // heaviest cut so downstream selection always has a candidate.
  if (result.candidates.points.empty()) {
    Index heaviest = 0;
    weights.maxCoeff(&heaviest);
    result.candidates.points.push_back(
        cut_points[static_cast<std::size_t>(heaviest)]);
    result.candidates.gradients.push_back(
        cuts[static_cast<std::size_t>(heaviest)].gradient);
  }
  return result;
}

template <typename Scalar>
struct BfgsResult {
  VecX<Scalar> final_point;
  Scalar final_value = Scalar(0);
  CandidateSet<Scalar> candidates;
  std::vector<Phase1Record<Scalar>> trace;
  bool breakdown = false;  // line search failed; the usual nonsmooth exit
  long oracle_calls = 0;
};

// Inverse-Hessian BFGS with a weak-Wolfe bracketing line search, the standard
// workhorse for nonsmooth warm starts.  Curvature-violating updates are
// skipped; the run ends at the iteration cap or on line-search breakdown.
// Candidates are the last min(2n, visited) iterates.
template <typename Scalar>
BfgsResult<Scalar> runNonsmoothBfgs(const Oracle<Scalar>& oracle,
                                    const VecX<Scalar>& start,
                                    int max_iterations) {
  if (max_iterations < 1)
    throw InvalidInputError("max_iterations must be positive");
  if (!start.allFinite()) throw InvalidInputError("start point is not finite");

  CountingOracle<Scalar> counted(oracle);
  Evaluation<Scalar> ev = counted.evaluate(start, /*with_hessian=*/false);
  if (!ev.in_domain)
    throw InvalidInputError("BFGS start point lies outside the smooth region");

  const Index n = start.size();
  const Scalar c1 = Scalar(1e-4);  // sufficient decrease
  const Scalar c2 = Scalar(0.5);   // weak Wolfe curvature
  const int max_probes = 50;

  MatX<Scalar> Hinv = MatX<Scalar>::Identity(n, n);
  VecX<Scalar> x = start;
  Scalar f = ev.sample.value;
  VecX<Scalar> g = ev.sample.gradient;

  std::vector<VecX<Scalar>> visited_points{x};
  std::vector<VecX<Scalar>> visited_gradients{g};

  BfgsResult<Scalar> result;
  for (int iter = 1; iter <= max_iterations; ++iter) {
    if (g.norm() == Scalar(0)) break;  // smooth stationary point

    VecX<Scalar> d = -(Hinv * g);
    Scalar dg = g.dot(d);
    if (!(dg < Scalar(0))) {
      Hinv.setIdentity();
      d = -g;
      dg = -g.squaredNorm();
    }

    // Weak-Wolfe bracketing: expand until the curvature condition can hold,
    // bisect on the bracket.
    Scalar lo = Scalar(0);
    Scalar hi = std::numeric_limits<Scalar>::infinity();
    Scalar t = Scalar(1);
    bool accepted = false;
    Evaluation<Scalar> trial;
    for (int probe = 0; probe < max_probes; ++probe) {
      trial = counted.evaluate(x + t * d, /*with_hessian=*/false);
      if (trial.sample.value > f + c1 * t * dg) {
        hi = t;
      } else if (trial.sample.gradient.dot(d) < c2 * dg) {
        lo = t;
      } else {
        accepted = true;
        break;
      }
      t = std::isfinite(hi) ? (lo + hi) / Scalar(2) : Scalar(2) * t;
      if (!(t > Scalar(0)) || t < Scalar(1e-300)) break;
    }
    if (!accepted) {
      result.breakdown = true;
      break;
    }

    const VecX<Scalar> step = t * d;
    const VecX<Scalar> y = trial.sample.gradient - g;
    const Scalar sy = step.dot(y);
    if (sy > Scalar(1e-12) * step.norm() * y.norm()) {
      const Scalar rho_bfgs = Scalar(1) / sy;
      const MatX<Scalar> I = MatX<Scalar>::Identity(n, n);
      const MatX<Scalar> left = I - rho_bfgs * step * y.transpose();
      Hinv = left * Hinv * left.transpose() +
             rho_bfgs * step * step.transpose();
    }
    x += step;
    f = trial.sample.value;
    g = trial.sample.gradient;
    visited_points.push_back(x);
    visited_gradients.push_back(g);

    Phase1Record<Scalar> rec;
    rec.iteration = iter;
    rec.oracle_calls = counted.calls();
    rec.center_value = f;
    rec.gap = g.norm();
    result.trace.push_back(rec);
  }

  result.final_point = x;
  result.final_value = f;
  result.oracle_calls = counted.calls();

  const std::size_t keep = std::min<std::size_t>(
      static_cast<std::size_t>(2 * n), visited_points.size());
  result.candidates.source = CandidateSource::kLastIterates;
  for (std::size_t i = visited_points.size() - keep; i < visited_points.size();
       ++i) {
    result.candidates.points.push_back(visited_points[i]);
    result.candidates.gradients.push_back(visited_gradients[i]);
  }
  return result;
}

// Approximate rank of the lifted gradient matrix: the number of singular
// values above rank_tolerance relative to the largest.  This is the bundle
// size estimate 1 + dim of the subdifferential.
template <typename Scalar>
int estimateBundleSize(const CandidateSet<Scalar>& candidates,
                       Scalar rank_tolerance) {
  if (candidates.size() == 0) throw InvalidInputError("empty candidate set");
  if (!(rank_tolerance > Scalar(0)))
    throw InvalidInputError("rank tolerance must be positive");
  Eigen::JacobiSVD<MatX<Scalar>> svd(candidates.liftedGradientMatrix());
  const VecX<Scalar> sv = svd.singularValues();
  const Scalar cutoff = rank_tolerance * sv(0);
  int rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  return rank;
}

// Greedy rank-revealing column selection (pivoted orthogonalization) on the
// lifted gradient matrix: returns the indices of the k candidates whose
// gradients are most robustly affinely independent.
template <typename Scalar>
std::vector<Index> selectCandidateIndices(const CandidateSet<Scalar>& candidates,
                                          int k) {
  if (k < 1) throw InvalidInputError("bundle size must be positive");
  if (candidates.size() < static_cast<Index>(k))
    throw InsufficientCandidatesError(
        "fewer candidate points than the requested bundle size");

  Eigen::ColPivHouseholderQR<MatX<Scalar>> qr(
      candidates.liftedGradientMatrix());
  const auto perm = qr.colsPermutation().indices();
  std::vector<Index> chosen(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) chosen[static_cast<std::size_t>(i)] = perm(i);

  const Index n = candidates.gradients.front().size();
  MatX<Scalar> G(n, k);
  for (int i = 0; i < k; ++i)
    G.col(i) = candidates.gradients[static_cast<std::size_t>(chosen[i])];
  if (sigmaCheck(G) < Scalar(1e-12))
    throw DegenerateCandidatesError(
        "selected candidate gradients are affinely dependent");
  return chosen;
}

// Evaluate the selected candidates with the full oracle and assemble the
// initial bundle for the Newton phase.
template <typename Scalar>
Bundle<Scalar> selectInitialBundle(const CandidateSet<Scalar>& candidates,
                                   int k, const Oracle<Scalar>& oracle) {
  const std::vector<Index> chosen = selectCandidateIndices(candidates, k);
  std::vector<OracleSample<Scalar>> samples;
  samples.reserve(static_cast<std::size_t>(k));
  for (Index idx : chosen) {
    Evaluation<Scalar> ev = oracle.evaluate(
        candidates.points[static_cast<std::size_t>(idx)], /*with_hessian=*/true);
    samples.push_back(std::move(ev.sample));
  }
  return Bundle<Scalar>(std::move(samples));
}

}  // namespace bnewton
