#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "bnewton/simplex_qp.hpp"
#include "bnewton/types.hpp"

namespace bnewton {

// Affine model l(x) = value + gradient'(x - anchor).
template <typename Scalar>
struct AffineModel {
  Scalar value = Scalar(0);
  VecX<Scalar> gradient;
  VecX<Scalar> anchor;

  Scalar operator()(const VecX<Scalar>& x) const {
    return value + gradient.dot(x - anchor);
  }
  // l(x) = offset() + gradient'x
  Scalar offset() const { return value - gradient.dot(anchor); }
};

// Quadratic model q(x) = value + gradient'(x-anchor) + 1/2 (x-anchor)'H(x-anchor).
template <typename Scalar>
struct QuadraticModel {
  Scalar value = Scalar(0);
  VecX<Scalar> gradient;
  MatX<Scalar> hessian;
  VecX<Scalar> anchor;

  Scalar operator()(const VecX<Scalar>& x) const {
    const VecX<Scalar> d = x - anchor;
    return value + gradient.dot(d) + Scalar(0.5) * d.dot(hessian * d);
  }
};

// The equality-constrained quadratic program of one bundle Newton iteration:
// minimize the lambda-weighted quadratic models over the active subspace where
// all affine models agree.
template <typename Scalar>
struct NewtonSubproblem {
  VecX<Scalar> lambdas;
  std::vector<AffineModel<Scalar>> linear_models;
  std::vector<QuadraticModel<Scalar>> quadratic_models;

  Index k() const { return static_cast<Index>(linear_models.size()); }
  Index dimension() const {
    return linear_models.empty() ? 0 : linear_models.front().gradient.size();
  }
};

// Equality constraints of the active subspace {x : Gx = b} with null/range
// bases of G and the particular solution p = V (GV)^{-1} b.
template <typename Scalar>
struct ReducedSystem {
  MatX<Scalar> constraint_matrix;  // G, (k-1) x n
  VecX<Scalar> rhs;                // b
  MatX<Scalar> null_basis;         // U, n x (n-k+1), GU = 0
  MatX<Scalar> range_basis;        // V, n x (k-1)
  VecX<Scalar> particular;         // p with Gp = b
};

template <typename Scalar>
struct SubproblemSolution {
  VecX<Scalar> xhat;
  Scalar t_value = Scalar(0);  // common value of the affine models at xhat
  VecX<Scalar> mu;             // multipliers with sum(mu) = 1
  Scalar kkt_residual = Scalar(0);
  bool bounded = true;
  Scalar reduced_hessian_min_eig = Scalar(0);
};

namespace detail {

template <typename Scalar>
void validateSubproblem(const NewtonSubproblem<Scalar>& sp) {
  const Index k = sp.k();
  if (k < 1) throw InvalidInputError("subproblem needs at least one model");
  if (sp.lambdas.size() != k ||
      static_cast<Index>(sp.quadratic_models.size()) != k)
    throw InvalidInputError("subproblem model/multiplier count mismatch");
  const Index n = sp.dimension();
  for (Index s = 0; s < k; ++s) {
    const auto& l = sp.linear_models[static_cast<std::size_t>(s)];
    const auto& q = sp.quadratic_models[static_cast<std::size_t>(s)];
    if (l.gradient.size() != n || l.anchor.size() != n ||
        q.gradient.size() != n || q.anchor.size() != n ||
        q.hessian.rows() != n || q.hessian.cols() != n)
      throw InvalidInputError("subproblem model dimensions are inconsistent");
  }
  if (!sp.lambdas.allFinite())
    throw InvalidInputError("subproblem multipliers are not finite");
}

// lambda-weighted Hessian of the quadratic models.
template <typename Scalar>
MatX<Scalar> weightedHessian(const NewtonSubproblem<Scalar>& sp) {
  const Index n = sp.dimension();
  MatX<Scalar> H = MatX<Scalar>::Zero(n, n);
  for (Index s = 0; s < sp.k(); ++s)
    H += sp.lambdas(s) * sp.quadratic_models[static_cast<std::size_t>(s)].hessian;
  return H;
}

// Scale used by the unboundedness tolerance: max_s |lambda_s H_s|.
template <typename Scalar>
Scalar hessianScale(const NewtonSubproblem<Scalar>& sp) {
  Scalar scale = Scalar(0);
  for (Index s = 0; s < sp.k(); ++s)
    scale = std::max(scale,
                     std::abs(sp.lambdas(s)) *
                         sp.quadratic_models[static_cast<std::size_t>(s)]
                             .hessian.cwiseAbs()
                             .maxCoeff());
  return scale;
}

// Residual of the full KKT conditions at (x, t, mu): stationarity with the
// constraint gradients, sum(mu) = 1, and l_s(x) = t.
template <typename Scalar>
Scalar kktResidual(const NewtonSubproblem<Scalar>& sp, const VecX<Scalar>& x,
                   Scalar t, const VecX<Scalar>& mu) {
  const Index n = sp.dimension();
  VecX<Scalar> stat = VecX<Scalar>::Zero(n);
  Scalar mu_sum = Scalar(0);
  Scalar cons = Scalar(0);
  for (Index s = 0; s < sp.k(); ++s) {
    const auto& l = sp.linear_models[static_cast<std::size_t>(s)];
    const auto& q = sp.quadratic_models[static_cast<std::size_t>(s)];
    stat += sp.lambdas(s) * (q.gradient + q.hessian * (x - q.anchor) -
                             l.gradient) +
            mu(s) * l.gradient;
    mu_sum += mu(s);
    cons = std::max(cons, std::abs(l(x) - t));
  }
  Scalar r = stat.cwiseAbs().maxCoeff();
  r = std::max(r, std::abs(mu_sum - Scalar(1)));
  return std::max(r, cons);
}

// Recover multipliers for a solved x by least squares on the stationarity
// conditions; exact whenever the constraint gradients are affinely
// independent and x solves the unmodified reduced system.
template <typename Scalar>
VecX<Scalar> recoverMultipliers(const NewtonSubproblem<Scalar>& sp,
                                const VecX<Scalar>& x) {
  const Index n = sp.dimension();
  const Index k = sp.k();
  MatX<Scalar> A(n + 1, k);
  VecX<Scalar> rhs = VecX<Scalar>::Zero(n + 1);
  for (Index s = 0; s < k; ++s) {
    const auto& l = sp.linear_models[static_cast<std::size_t>(s)];
    const auto& q = sp.quadratic_models[static_cast<std::size_t>(s)];
    A.col(s).head(n) = l.gradient;
    A(n, s) = Scalar(1);
    rhs.head(n) += sp.lambdas(s) *
                   (l.gradient - q.gradient - q.hessian * (x - q.anchor));
  }
  rhs(n) = Scalar(1);
  return A.completeOrthogonalDecomposition().solve(rhs);
}

}  // namespace detail

// Build the active-subspace constraints Gx = b from the affine models:
// row j-1 of G is grad l_1 - grad l_j, with matching offsets in b.
template <typename Scalar>
ReducedSystem<Scalar> buildConstraints(const NewtonSubproblem<Scalar>& sp) {
  detail::validateSubproblem(sp);
  const Index k = sp.k();
  const Index n = sp.dimension();
  if (k < 2)
    throw InvalidInputError(
        "active-subspace constraints need at least two models");

  ReducedSystem<Scalar> sys;
  sys.constraint_matrix.resize(k - 1, n);
  sys.rhs.resize(k - 1);
  const auto& l1 = sp.linear_models.front();
  for (Index j = 1; j < k; ++j) {
    const auto& lj = sp.linear_models[static_cast<std::size_t>(j)];
    sys.constraint_matrix.row(j - 1) = (l1.gradient - lj.gradient).transpose();
    sys.rhs(j - 1) = lj.offset() - l1.offset();
  }

  // Rank test on singular values, then bases from a pivoted QR of G'.
  Eigen::JacobiSVD<MatX<Scalar>> svd(sys.constraint_matrix);
  const VecX<Scalar> sv = svd.singularValues();
  const Scalar smax = sv(0);
  const Scalar smin = sv(sv.size() - 1);
  if (!(smax > Scalar(0)) || smin < Scalar(1e-10) * smax)
    throw DegenerateConstraintsError(
        "constraint matrix is numerically rank-deficient");

  Eigen::ColPivHouseholderQR<MatX<Scalar>> qr(
      sys.constraint_matrix.transpose());
  MatX<Scalar> Qfull = qr.householderQ() * MatX<Scalar>::Identity(n, n);
  sys.range_basis = Qfull.leftCols(k - 1);
  sys.null_basis = Qfull.rightCols(n - k + 1);

  const MatX<Scalar> GV = sys.constraint_matrix * sys.range_basis;
  sys.particular = sys.range_basis * GV.partialPivLu().solve(sys.rhs);
  return sys;
}

// Solve the square (n+1+k)-dimensional KKT system of the subproblem directly:
// stationarity, sum(mu) = 1, and the k equalities l_s(x) - t = 0.  The
// bounded flag reports whether the weighted Hessian is positive semidefinite
// on the active subspace.
template <typename Scalar>
SubproblemSolution<Scalar> solveKktFull(const NewtonSubproblem<Scalar>& sp) {
  detail::validateSubproblem(sp);
  const Index n = sp.dimension();
  const Index k = sp.k();
  const Index N = n + 1 + k;

  MatX<Scalar> K = MatX<Scalar>::Zero(N, N);
  VecX<Scalar> rhs = VecX<Scalar>::Zero(N);

  K.topLeftCorner(n, n) = detail::weightedHessian(sp);
  for (Index s = 0; s < k; ++s) {
    const auto& l = sp.linear_models[static_cast<std::size_t>(s)];
    const auto& q = sp.quadratic_models[static_cast<std::size_t>(s)];
    K.block(0, n + 1 + s, n, 1) = l.gradient;
    rhs.head(n) +=
        sp.lambdas(s) * (q.hessian * q.anchor + l.gradient - q.gradient);
    K(n, n + 1 + s) = Scalar(1);
    K.block(n + 1 + s, 0, 1, n) = l.gradient.transpose();
    K(n + 1 + s, n) = Scalar(-1);
    rhs(n + 1 + s) = -l.offset();
  }
  rhs(n) = Scalar(1);

  Eigen::FullPivLU<MatX<Scalar>> lu(K);
  if (!lu.isInvertible()) {
    const double cond = lu.rcond() > 0 ? 1.0 / static_cast<double>(lu.rcond())
                                       : std::numeric_limits<double>::infinity();
    throw SingularSystemError("singular KKT system", cond);
  }
  const VecX<Scalar> z = lu.solve(rhs);

  SubproblemSolution<Scalar> sol;
  sol.xhat = z.head(n);
  sol.t_value = z(n);
  sol.mu = z.tail(k);
  sol.kkt_residual = (K * z - rhs).cwiseAbs().maxCoeff();

  // Curvature diagnostics on the active subspace.
  const MatX<Scalar> Hbar = K.topLeftCorner(n, n);
  MatX<Scalar> projected;
  if (k == 1) {
    projected = Hbar;
  } else {
    const ReducedSystem<Scalar> sys = buildConstraints(sp);
    projected = sys.null_basis.transpose() * Hbar * sys.null_basis;
  }
  if (projected.rows() == 0) {
    sol.reduced_hessian_min_eig = std::numeric_limits<Scalar>::infinity();
  } else {
    Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(projected);
    sol.reduced_hessian_min_eig = eig.eigenvalues()(0);
  }
  sol.bounded = sol.reduced_hessian_min_eig >=
                Scalar(-1e-10) * (Scalar(1) + detail::hessianScale(sp));
  return sol;
}

// Null-space solve of the same subproblem.  With project_anchors the anchors
// are first projected onto the active subspace, so only the projected
// Hessians U'H U enter; that variant stays stable when the Hessians are
// ill-conditioned transversally to the active subspace.  The reported
// kkt_residual measures the system actually solved (plus the constraint
// residual), which for project_anchors=false coincides with the full KKT
// conditions.
template <typename Scalar>
SubproblemSolution<Scalar> solveKktReduced(const NewtonSubproblem<Scalar>& sp,
                                           const ReducedSystem<Scalar>& reduced,
                                           bool project_anchors) {
  detail::validateSubproblem(sp);
  const Index k = sp.k();
  if (k == 1) return solveKktFull(sp);  // no constraints; delegate

  const Index n = sp.dimension();
  const MatX<Scalar>& U = reduced.null_basis;
  const Index m = U.cols();

  MatX<Scalar> Hu = MatX<Scalar>::Zero(m, m);
  VecX<Scalar> rhs = VecX<Scalar>::Zero(m);
  for (Index s = 0; s < k; ++s) {
    const auto& q = sp.quadratic_models[static_cast<std::size_t>(s)];
    const MatX<Scalar> HsU = q.hessian * U;
    const MatX<Scalar> proj = U.transpose() * HsU;  // U'H_sU
    Hu += sp.lambdas(s) * proj;
    const VecX<Scalar> offset = q.anchor - reduced.particular;
    if (project_anchors) {
      rhs += sp.lambdas(s) *
             (proj * (U.transpose() * offset) - U.transpose() * q.gradient);
    } else {
      rhs += sp.lambdas(s) *
             (HsU.transpose() * offset - U.transpose() * q.gradient);
    }
  }

  SubproblemSolution<Scalar> sol;
  VecX<Scalar> xu = VecX<Scalar>::Zero(m);
  if (m == 0) {
    // k = n+1: the active subspace is the single point p.
    sol.reduced_hessian_min_eig = std::numeric_limits<Scalar>::infinity();
  } else {
    Eigen::SelfAdjointEigenSolver<MatX<Scalar>> eig(Hu);
    const VecX<Scalar> evals = eig.eigenvalues();
    sol.reduced_hessian_min_eig = evals(0);
    const Scalar unbounded_tol =
        Scalar(-1e-10) * (Scalar(1) + detail::hessianScale(sp));
    if (evals(0) < unbounded_tol)
      throw UnboundedSubproblemError(
          "weighted Hessian is indefinite on the active subspace");
    const Scalar emax = evals.cwiseAbs().maxCoeff();
    if (!(emax > Scalar(0)) || evals(0) <= Scalar(1e-14) * emax) {
      const double cond = emax > Scalar(0) && evals(0) > Scalar(0)
                              ? static_cast<double>(emax / evals(0))
                              : std::numeric_limits<double>::infinity();
      throw SingularSystemError("singular reduced Hessian", cond);
    }
    xu = eig.eigenvectors() *
         (eig.eigenvectors().transpose() * rhs).cwiseQuotient(evals);
  }

  sol.xhat = U * xu + reduced.particular;
  Scalar t = Scalar(0);
  for (Index s = 0; s < k; ++s)
    t += sp.linear_models[static_cast<std::size_t>(s)](sol.xhat);
  sol.t_value = t / Scalar(k);
  sol.mu = detail::recoverMultipliers(sp, sol.xhat);
  sol.bounded = true;

  const Scalar solve_residual =
      m == 0 ? Scalar(0) : (Hu * xu - rhs).cwiseAbs().maxCoeff();
  const Scalar constraint_residual =
      (reduced.constraint_matrix * sol.xhat - reduced.rhs)
          .cwiseAbs()
          .maxCoeff();
  if (project_anchors) {
    sol.kkt_residual = std::max(solve_residual, constraint_residual);
  } else {
    sol.kkt_residual = std::max(
        detail::kktResidual(sp, sol.xhat, sol.t_value, sol.mu),
        constraint_residual);
  }
  return sol;
}

template <typename Scalar>
struct ProxCutSolution {
  VecX<Scalar> xhat;
  VecX<Scalar> weights;  // simplex dual weights on the cuts
};

// Minimizer of  max_s l_s(.) + rho/2 |. - center|^2  via the k-variable dual
//   min_{a in simplex}  1/(2 rho) |G a|^2 - sum_s a_s l_s(center),
// solved by the same simplex kernel as the optimality measure.
template <typename Scalar>
ProxCutSolution<Scalar> solveProximalCutQp(
    const std::vector<AffineModel<Scalar>>& cuts, const VecX<Scalar>& center,
    Scalar rho) {
  if (cuts.empty()) throw InvalidInputError("need at least one cut");
  if (!(rho > Scalar(0)))
    throw InvalidInputError("proximal parameter must be positive");
  const Index n = center.size();
  const Index m = static_cast<Index>(cuts.size());

  MatX<Scalar> G(n, m);
  VecX<Scalar> values(m);
  for (Index s = 0; s < m; ++s) {
    const auto& cut = cuts[static_cast<std::size_t>(s)];
    if (cut.gradient.size() != n || cut.anchor.size() != n)
      throw InvalidInputError("cut dimension mismatch");
    G.col(s) = cut.gradient;
    values(s) = cut(center);
  }

  const MatX<Scalar> Q = (G.transpose() * G) / rho;
  SimplexQpOptions<Scalar> opts;
  opts.gap_tolerance =
      Scalar(1e-12) * (Scalar(1) + Q.diagonal().maxCoeff() +
                       values.cwiseAbs().maxCoeff());
  opts.max_iterations = 100 * m;
  auto result = solveSimplexQp<Scalar>(Q, -values, opts);
  detail::clampSimplexWeights(result.weights);

  ProxCutSolution<Scalar> sol;
  sol.weights = result.weights;
  sol.xhat = center - (G * result.weights) / rho;
  return sol;
}

}  // namespace bnewton
