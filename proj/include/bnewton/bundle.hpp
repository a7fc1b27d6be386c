#pragma once

#include <Eigen/Dense>

#include <optional>
#include <type_traits>
#include <utility>

#include "bnewton/oracle.hpp"
#include "bnewton/simplex_qp.hpp"
#include "bnewton/types.hpp"

namespace bnewton {

namespace detail {

// Clamp slightly negative simplex weights to zero and renormalize; anything
// below -1e-12 means the QP kernel returned garbage.
template <typename Scalar>
void clampSimplexWeights(VecX<Scalar>& lambda) {
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < Scalar(0)) {
      if (lambda(i) < Scalar(-1e-12)) {
        std::vector<double> best(static_cast<std::size_t>(lambda.size()));
        for (Index j = 0; j < lambda.size(); ++j)
          best[static_cast<std::size_t>(j)] = static_cast<double>(lambda(j));
        throw SolverFailureError("simplex weights left the feasible set", best);
      }
      lambda(i) = Scalar(0);
    }
  }
  lambda /= lambda.sum();
}

}  // namespace detail

// Optimality measure of a gradient set: the norm of the minimum-norm point of
// conv(columns of `gradients`), together with the simplex weights attaining
// it.  Unique weights whenever the gradients are affinely independent.
template <typename Derived>
MultiplierEstimate<typename Derived::Scalar> theta(
    const Eigen::MatrixBase<Derived>& gradients) {
  using Scalar = typename Derived::Scalar;
  const MatX<Scalar> G = gradients;
  const Index k = G.cols();
  if (k < 1) throw InvalidInputError("theta needs at least one gradient");
  if (!G.allFinite())
    throw InvalidInputError("theta input contains non-finite entries");

  MultiplierEstimate<Scalar> est;
  if (k == 1) {
    est.lambda = VecX<Scalar>::Ones(1);
  } else {
    const MatX<Scalar> Q = G.transpose() * G;
    SimplexQpOptions<Scalar> opts;
    opts.gap_tolerance =
        Scalar(1e-12) * (Scalar(1) + Q.diagonal().maxCoeff());
    opts.max_iterations = 100 * k;
    est.lambda =
        solveSimplexQp<Scalar>(Q, VecX<Scalar>::Zero(k), opts).weights;
    detail::clampSimplexWeights(est.lambda);
  }
  est.aggregate_gradient = G * est.lambda;
  est.theta = est.aggregate_gradient.norm();
  return est;
}

// Same measure computed for a bundle; also fills the weighted center.
template <typename Scalar>
MultiplierEstimate<Scalar> theta(const Bundle<Scalar>& bundle) {
  MultiplierEstimate<Scalar> est = theta(bundle.gradientMatrix());
  est.center = bundle.pointMatrix() * est.lambda;
  return est;
}

// Robust affine-independence measure: the k-th largest singular value of the
// (n+1) x k matrix whose columns are the gradients with an appended 1.  Zero
// exactly when the gradient list is affinely dependent.
template <typename Derived>
typename Derived::Scalar sigmaCheck(const Eigen::MatrixBase<Derived>& gradients) {
  using Scalar = typename Derived::Scalar;
  const Index n = gradients.rows();
  const Index k = gradients.cols();
  if (k < 1) throw InvalidInputError("sigmaCheck needs at least one gradient");
  if (k > n + 1)
    throw InvalidInputError(
        "affine independence is impossible for more than n+1 gradients");
  if (!gradients.allFinite())
    throw InvalidInputError("sigmaCheck input contains non-finite entries");

  MatX<Scalar> lifted(n + 1, k);
  lifted.topRows(n) = gradients;
  lifted.row(n).setOnes();
  Eigen::JacobiSVD<MatX<Scalar>> svd(lifted);
  return svd.singularValues()(k - 1);
}

template <typename Scalar>
Scalar sigmaCheck(const Bundle<Scalar>& bundle) {
  return sigmaCheck(bundle.gradientMatrix());
}

template <typename Scalar>
struct ReplaceResult {
  Bundle<Scalar> bundle;
  Index replaced_index = -1;
  Scalar theta_after = Scalar(0);
};

// Swap the candidate into the bundle at the position minimizing the resulting
// optimality measure.  Ties within 1e-12 go to the lowest index so traces are
// reproducible.
template <typename Scalar>
ReplaceResult<Scalar> replaceReference(const Bundle<Scalar>& bundle,
                                       const OracleSample<Scalar>& candidate) {
  detail::validateSample(candidate, bundle.dimension());
  for (const auto& s : bundle.samples())
    if (Bundle<Scalar>::pointsCoincide(candidate.point, s.point))
      throw DegenerateBundleError(
          "candidate coincides with an existing reference point");

  const Index k = bundle.k();
  MatX<Scalar> G = bundle.gradientMatrix();
  VecX<Scalar> thetas(k);
  for (Index i = 0; i < k; ++i) {
    MatX<Scalar> swapped = G;
    swapped.col(i) = candidate.gradient;
    thetas(i) = theta(swapped).theta;
  }

  const Scalar best = thetas.minCoeff();
  Index chosen = 0;
  while (thetas(chosen) > best + Scalar(1e-12)) ++chosen;

  ReplaceResult<Scalar> result;
  result.replaced_index = chosen;
  result.theta_after = thetas(chosen);
  result.bundle = bundle.withReplaced(chosen, candidate);
  return result;
}

// Approximate optimality certificate: the weighted center with its objective
// value (one oracle call), the bundle diameter, and L * diam when a Lipschitz
// constant is supplied.
template <typename Scalar>
Certificate<Scalar> optimalityCertificate(
    const Bundle<Scalar>& bundle, const MultiplierEstimate<Scalar>& multipliers,
    const Oracle<Scalar>& oracle,
    std::type_identity_t<std::optional<Scalar>> lipschitz = std::nullopt) {
  if (multipliers.lambda.size() != bundle.k())
    throw InvalidInputError("multipliers were not computed from this bundle");

  Certificate<Scalar> cert;
  cert.center = bundle.pointMatrix() * multipliers.lambda;
  cert.theta = multipliers.theta;
  cert.diameter = bundle.diameter();
  const Evaluation<Scalar> ev =
      oracle.evaluate(cert.center, /*with_hessian=*/false);
  if (ev.in_domain) cert.upper_value = ev.sample.value;
  if (lipschitz) cert.gap_bound = *lipschitz * cert.diameter;
  return cert;
}

}  // namespace bnewton
