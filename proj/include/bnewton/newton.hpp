#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bnewton/bundle.hpp"
#include "bnewton/oracle.hpp"
#include "bnewton/subproblem.hpp"
#include "bnewton/types.hpp"

namespace bnewton {

enum class Variant { kConvex, kSum, kWeaklyConvex };

template <typename Scalar>
struct NewtonConfig {
  Scalar epsilon_bar = Scalar(0);  // diameter tolerance
  Scalar delta_bar = Scalar(0);    // measure tolerance
  Scalar sigma = Scalar(1e-8);     // affine-dependence tolerance; 0 disables
  std::optional<Scalar> eta;       // weak-convexity shift; nullopt = dynamic
  int max_iterations = 200;
  std::optional<int> stall_window;  // nullopt selects 5k
  Variant variant = Variant::kConvex;
  // Any model Hessian above this condition number routes the subproblem to
  // the anchor-projected reduced solve.
  Scalar hessian_condition_switch = Scalar(1e8);
};

enum class Termination {
  kNearlyOptimal,
  kNonsmoothPoint,
  kAffineDependentGradients,
  kUnboundedSubproblem,
  kIterationCap,
  kStalled,
};

inline const char* terminationName(Termination t) {
  switch (t) {
    case Termination::kNearlyOptimal: return "NearlyOptimal";
    case Termination::kNonsmoothPoint: return "NonsmoothPoint";
    case Termination::kAffineDependentGradients:
      return "AffineDependentGradients";
    case Termination::kUnboundedSubproblem: return "UnboundedSubproblem";
    case Termination::kIterationCap: return "IterationCap";
    case Termination::kStalled: return "Stalled";
  }
  return "Unknown";
}

struct TerminationReason {
  Termination tag = Termination::kIterationCap;
  std::string detail;
};

template <typename Scalar>
struct IterationRecord {
  int iteration = 0;
  Scalar diameter = Scalar(0);
  Scalar theta = Scalar(0);
  Scalar best_value = Scalar(0);
  VecX<Scalar> lambda;
  Index replaced_index = -1;
  long oracle_calls = 0;
  VecX<Scalar> xhat;
  Scalar kkt_residual = Scalar(0);
  Scalar eta_used = Scalar(0);
};

template <typename Scalar>
struct ConvergenceTrace {
  std::vector<IterationRecord<Scalar>> iterations;
  TerminationReason termination;
  Bundle<Scalar> final_bundle;
  long oracle_calls = 0;  // new samples drawn during this run
  Scalar final_theta = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar final_diameter = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar best_value = std::numeric_limits<Scalar>::infinity();
};

namespace detail {

template <typename Scalar>
struct PointData {
  Evaluation<Scalar> objective;  // data of the objective being minimized
  AffineModel<Scalar> linear;    // source of l_s for this point
};

template <typename Scalar>
void validateNewtonConfig(const NewtonConfig<Scalar>& config,
                          Variant expected) {
  if (config.variant != expected)
    throw InvalidInputError("config variant does not match the driver");
  if (config.epsilon_bar < Scalar(0) || config.delta_bar < Scalar(0))
    throw InvalidInputError("tolerances must be nonnegative");
  if (config.sigma < Scalar(0))
    throw InvalidInputError("sigma must be nonnegative");
  if (config.max_iterations < 1)
    throw InvalidInputError("max_iterations must be positive");
  if (config.stall_window && *config.stall_window < 1)
    throw InvalidInputError("stall_window must be positive");
  if (config.eta && *config.eta < Scalar(0))
    throw InvalidInputError("eta must be nonnegative");
}

template <typename Scalar>
Scalar hessianCondition(const MatX<Scalar>& H) {
  Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(H);
  const VecX<Scalar> a = eig.eigenvalues().cwiseAbs();
  const Scalar lo = a.minCoeff();
  const Scalar hi = a.maxCoeff();
  if (!(lo > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
  return hi / lo;
}

// Shared driver loop.  The bundle always caches samples of the objective
// being minimized; base_linear carries the variant-specific affine data per
// reference point (rebuilt from the samples each iteration for the
// weakly-convex variant, where it depends on the current eta).
template <typename Scalar>
ConvergenceTrace<Scalar> runNewtonLoop(
    Bundle<Scalar> bundle, std::vector<AffineModel<Scalar>> base_linear,
    const std::function<PointData<Scalar>(const VecX<Scalar>&)>& sample,
    const std::function<long()>& calls, const NewtonConfig<Scalar>& config,
    bool eta_shifted) {
  const Index k = bundle.k();
  const Index n = bundle.dimension();
  if (k > n + 1)
    throw InvalidInputError("bundle size exceeds the n+1 upper bound");
  for (const auto& s : bundle.samples())
    if (!s.hasHessian())
      throw InvalidInputError("bundle Newton needs second-order samples");

  const int stall_window =
      config.stall_window ? *config.stall_window : 5 * static_cast<int>(k);

  ConvergenceTrace<Scalar> trace;
  for (const auto& s : bundle.samples())
    trace.best_value = std::min(trace.best_value, s.value);

  Scalar prev_diam = std::numeric_limits<Scalar>::infinity();
  int stall_streak = 0;
  auto finish = [&](Termination tag, std::string detail) {
    trace.termination = {tag, std::move(detail)};
    trace.final_bundle = std::move(bundle);
    trace.oracle_calls = calls();
    return std::move(trace);
  };

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    // Linear models for this iteration.
    Scalar eta_used = Scalar(0);
    std::vector<AffineModel<Scalar>> lmodels;
    lmodels.reserve(static_cast<std::size_t>(k));
    if (eta_shifted) {
      if (config.eta) {
        eta_used = *config.eta;
      } else {
        Scalar worst = -std::numeric_limits<Scalar>::infinity();
        for (const auto& s : bundle.samples()) {
          Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(s.hessian);
          worst = std::max(worst, -eig.eigenvalues()(0));
        }
        eta_used = worst + Scalar(1e-6) * (Scalar(1) + std::abs(worst));
      }
      for (const auto& s : bundle.samples()) {
        AffineModel<Scalar> l;
        l.value = s.value + Scalar(0.5) * eta_used * s.point.squaredNorm();
        l.gradient = s.gradient + eta_used * s.point;
        l.anchor = s.point;
        lmodels.push_back(std::move(l));
      }
    } else {
      lmodels = base_linear;
    }

    const Scalar diam = bundle.diameter();
    const MultiplierEstimate<Scalar> est = theta(bundle);
    trace.final_diameter = diam;
    trace.final_theta = est.theta;

    if (config.sigma > Scalar(0) && sigmaCheck(bundle) < config.sigma)
      return finish(Termination::kAffineDependentGradients,
                    "affine dependent gradients");

    if (diam < config.epsilon_bar && est.theta < config.delta_bar)
      return finish(Termination::kNearlyOptimal, "nearly optimal");

    NewtonSubproblem<Scalar> sp;
    sp.lambdas = est.lambda;
    sp.linear_models = lmodels;
    for (const auto& s : bundle.samples())
      sp.quadratic_models.push_back(
          QuadraticModel<Scalar>{s.value, s.gradient, s.hessian, s.point});

    SubproblemSolution<Scalar> sol;
    try {
      Scalar cond = Scalar(0);
      for (const auto& s : bundle.samples())
        cond = std::max(cond, hessianCondition(s.hessian));
      if (k > 1 && cond > config.hessian_condition_switch) {
        sol = solveKktReduced(sp, buildConstraints(sp),
                              /*project_anchors=*/true);
      } else {
        sol = solveKktFull(sp);
      }
    } catch (const UnboundedSubproblemError& e) {
      return finish(Termination::kUnboundedSubproblem, e.what());
    } catch (const DegenerateConstraintsError& e) {
      return finish(Termination::kAffineDependentGradients, e.what());
    } catch (const SingularSystemError& e) {
      return finish(Termination::kAffineDependentGradients, e.what());
    }
    if (!sol.bounded)
      return finish(Termination::kUnboundedSubproblem, "unbounded subproblem");

    const PointData<Scalar> pd = sample(sol.xhat);
    trace.best_value = std::min(trace.best_value, pd.objective.sample.value);
    if (!pd.objective.in_domain)
      return finish(Termination::kNonsmoothPoint, "nonsmooth point");

    ReplaceResult<Scalar> rr;
    try {
      rr = replaceReference(bundle, pd.objective.sample);
    } catch (const DegenerateBundleError& e) {
      return finish(Termination::kStalled, e.what());
    }
    bundle = std::move(rr.bundle);
    if (!eta_shifted)
      base_linear[static_cast<std::size_t>(rr.replaced_index)] = pd.linear;

    IterationRecord<Scalar> rec;
    rec.iteration = iter;
    rec.diameter = diam;
    rec.theta = est.theta;
    rec.best_value = trace.best_value;
    rec.lambda = est.lambda;
    rec.replaced_index = rr.replaced_index;
    rec.oracle_calls = calls();
    rec.xhat = sol.xhat;
    rec.kkt_residual = sol.kkt_residual;
    rec.eta_used = eta_used;
    trace.iterations.push_back(std::move(rec));

    // A window of iterations without meaningful diameter decrease means
    // rounding error is preventing further progress.
    if (diam > (Scalar(1) - Scalar(1e-3)) * prev_diam) {
      if (++stall_streak >= stall_window)
        return finish(Termination::kStalled, "no diameter progress");
    } else {
      stall_streak = 0;
    }
    prev_diam = diam;
  }
  return finish(Termination::kIterationCap, "iteration cap reached");
}

}  // namespace detail

// Bundle Newton iteration for a strongly convex objective: linear and
// quadratic models both come from the objective's own oracle data.
template <typename Scalar>
ConvergenceTrace<Scalar> runConvex(const Oracle<Scalar>& oracle,
                                   const Bundle<Scalar>& initial,
                                   const NewtonConfig<Scalar>& config) {
  detail::validateNewtonConfig(config, Variant::kConvex);
  CountingOracle<Scalar> counted(oracle);

  std::vector<AffineModel<Scalar>> base;
  for (const auto& s : initial.samples())
    base.push_back(AffineModel<Scalar>{s.value, s.gradient, s.point});

  auto sample = [&counted](const VecX<Scalar>& x) {
    detail::PointData<Scalar> pd;
    pd.objective = counted.evaluate(x, /*with_hessian=*/true);
    pd.linear = AffineModel<Scalar>{pd.objective.sample.value,
                                    pd.objective.sample.gradient, x};
    return pd;
  };
  return detail::runNewtonLoop<Scalar>(
      initial, std::move(base), sample, [&counted] { return counted.calls(); },
      config, /*eta_shifted=*/false);
}

// Bundle Newton iteration for an objective F = f + r with f strongly convex
// and nonsmooth, r smooth.  The subproblem constraints use linearizations of
// the component f only; the quadratic models and the optimality measure use
// full F data.  The caller's bundle must cache F samples; the driver fetches
// the f component at the initial reference points itself.
template <typename Scalar>
ConvergenceTrace<Scalar> runSum(const Oracle<Scalar>& oracle_f,
                                const Oracle<Scalar>& oracle_r,
                                const Bundle<Scalar>& initial,
                                const NewtonConfig<Scalar>& config) {
  detail::validateNewtonConfig(config, Variant::kSum);
  if (oracle_f.dimension() != oracle_r.dimension())
    throw InvalidInputError("component oracles live on different spaces");
  CountingOracle<Scalar> counted_f(oracle_f);
  CountingOracle<Scalar> counted_r(oracle_r);

  std::vector<AffineModel<Scalar>> base;
  for (const auto& s : initial.samples()) {
    const Evaluation<Scalar> evf =
        counted_f.evaluate(s.point, /*with_hessian=*/false);
    base.push_back(
        AffineModel<Scalar>{evf.sample.value, evf.sample.gradient, s.point});
  }

  auto sample = [&counted_f, &counted_r](const VecX<Scalar>& x) {
    const Evaluation<Scalar> evf = counted_f.evaluate(x, /*with_hessian=*/true);
    const Evaluation<Scalar> evr = counted_r.evaluate(x, /*with_hessian=*/true);
    detail::PointData<Scalar> pd;
    pd.objective.sample.point = x;
    pd.objective.sample.value = evf.sample.value + evr.sample.value;
    pd.objective.sample.gradient = evf.sample.gradient + evr.sample.gradient;
    pd.objective.sample.hessian = evf.sample.hessian + evr.sample.hessian;
    pd.objective.in_domain = evf.in_domain && evr.in_domain;
    pd.objective.region = evf.region;
    pd.linear =
        AffineModel<Scalar>{evf.sample.value, evf.sample.gradient, x};
    return pd;
  };
  return detail::runNewtonLoop<Scalar>(
      initial, std::move(base), sample,
      [&counted_f, &counted_r] {
        return counted_f.calls() + counted_r.calls();
      },
      config, /*eta_shifted=*/false);
}

// Bundle Newton iteration for a weakly convex objective: the linearizations
// are shifted by the weak-convexity parameter eta, recomputed each iteration
// from the bundle Hessians when config.eta is unset.
template <typename Scalar>
ConvergenceTrace<Scalar> runWeaklyConvex(const Oracle<Scalar>& oracle,
                                         const Bundle<Scalar>& initial,
                                         const NewtonConfig<Scalar>& config) {
  detail::validateNewtonConfig(config, Variant::kWeaklyConvex);
  CountingOracle<Scalar> counted(oracle);

  auto sample = [&counted](const VecX<Scalar>& x) {
    detail::PointData<Scalar> pd;
    pd.objective = counted.evaluate(x, /*with_hessian=*/true);
    return pd;
  };
  return detail::runNewtonLoop<Scalar>(
      initial, {}, sample, [&counted] { return counted.calls(); }, config,
      /*eta_shifted=*/true);
}

}  // namespace bnewton
