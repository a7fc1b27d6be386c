#pragma once

#include <Eigen/Dense>

#include <sstream>
#include <vector>

#include "bnewton/types.hpp"

namespace bnewton {

// Active-set solver for the simplex-constrained quadratic program
//
//   minimize  1/2 w' Q w + c' w
//   subject to  sum(w) = 1,  w >= 0,
//
// with Q symmetric positive semidefinite.  With Q = G'G and c = 0 this is
// Wolfe's minimum-norm-point iteration for the convex hull of the columns of
// G, which is how the optimality measure uses it; the proximal cutting-plane
// QP reuses the same kernel through its dual.
//
// Terminates when the Frank-Wolfe duality gap  w'(Qw+c) - min_i (Qw+c)_i
// drops below gap_tolerance, or when the working-set solution is feasible and
// no multiplier is violated.  Exceeding max_iterations raises
// SolverFailureError carrying the best feasible iterate.

template <typename Scalar>
struct SimplexQpOptions {
  Scalar gap_tolerance = Scalar(1e-12);
  Index max_iterations = 0;  // 0 selects 100 * k
};

template <typename Scalar>
struct SimplexQpResult {
  VecX<Scalar> weights;
  Scalar objective = Scalar(0);
  Scalar gap = Scalar(0);
  Index iterations = 0;
};

template <typename Scalar>
SimplexQpResult<Scalar> solveSimplexQp(const MatX<Scalar>& Q,
                                       const VecX<Scalar>& c,
                                       const SimplexQpOptions<Scalar>& opts) {
  const Index k = Q.rows();
  if (k == 0 || Q.cols() != k)
    throw InvalidInputError("simplex QP needs a square nonempty Q");
  if (c.size() != k) throw InvalidInputError("simplex QP c/Q size mismatch");
  if (!Q.allFinite() || !c.allFinite())
    throw InvalidInputError("simplex QP data contains non-finite entries");

  const Index cap = opts.max_iterations > 0 ? opts.max_iterations : 100 * k;

  // Start from the best vertex of the simplex.
  Index start = 0;
  (Scalar(0.5) * Q.diagonal() + c).minCoeff(&start);

  VecX<Scalar> w = VecX<Scalar>::Zero(k);
  w(start) = Scalar(1);
  std::vector<bool> free(static_cast<std::size_t>(k), false);
  free[static_cast<std::size_t>(start)] = true;

  auto normalize = [](VecX<Scalar>& v) {
    v = v.cwiseMax(Scalar(0));
    const Scalar total = v.sum();
    if (total > Scalar(0)) v /= total;
  };

  SimplexQpResult<Scalar> result;
  bool converged = false;
  for (Index iter = 1; iter <= cap && !converged; ++iter) {
    result.iterations = iter;

    // Solve the equality-constrained problem on the free set W, with alpha
    // the multiplier of the sum constraint ((Qw + c)_i = alpha on W):
    //   [Q_WW  -1] [w_W  ]   [-c_W]
    //   [1'     0] [alpha] = [ 1  ]
    std::vector<Index> W;
    for (Index i = 0; i < k; ++i)
      if (free[static_cast<std::size_t>(i)]) W.push_back(i);
    const Index m = static_cast<Index>(W.size());

    MatX<Scalar> kkt = MatX<Scalar>::Zero(m + 1, m + 1);
    VecX<Scalar> rhs(m + 1);
    for (Index a = 0; a < m; ++a) {
      for (Index b = 0; b < m; ++b) kkt(a, b) = Q(W[a], W[b]);
      kkt(a, m) = Scalar(-1);
      kkt(m, a) = Scalar(1);
      rhs(a) = -c(W[a]);
    }
    rhs(m) = Scalar(1);

    Eigen::FullPivLU<MatX<Scalar>> lu(kkt);
    VecX<Scalar> sol;
    if (lu.isInvertible()) {
      sol = lu.solve(rhs);
    } else {
      // Affinely dependent columns make the bordered system singular; the
      // minimum-norm least-squares solution still advances the iteration.
      sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    }
    VecX<Scalar> candidate = VecX<Scalar>::Zero(k);
    for (Index a = 0; a < m; ++a) candidate(W[a]) = sol(a);
    const Scalar alpha = sol(m);

    const Scalar feas_tol = Scalar(1e-13);
    if (candidate.minCoeff() >= -feas_tol) {
      w = candidate;
      normalize(w);

      const VecX<Scalar> d = Q * w + c;
      Index worst = 0;
      const Scalar dmin = d.minCoeff(&worst);
      result.gap = w.dot(d) - dmin;
      if (result.gap <= opts.gap_tolerance) {
        converged = true;
      } else if (!free[static_cast<std::size_t>(worst)] &&
                 dmin < alpha - opts.gap_tolerance) {
        free[static_cast<std::size_t>(worst)] = true;
      } else {
        converged = true;  // optimal on the current active set to precision
      }
      continue;
    }

    // Partial step toward the candidate; drop the blocking coordinate.
    Scalar step = Scalar(1);
    Index blocking = -1;
    for (Index a = 0; a < m; ++a) {
      const Index i = W[a];
      if (candidate(i) < w(i)) {
        const Scalar limit = w(i) / (w(i) - candidate(i));
        if (limit < step) {
          step = limit;
          blocking = i;
        }
      }
    }
    w += step * (candidate - w);
    if (blocking >= 0) {
      w(blocking) = Scalar(0);
      free[static_cast<std::size_t>(blocking)] = false;
    }
    normalize(w);
  }

  const VecX<Scalar> d = Q * w + c;
  result.gap = w.dot(d) - d.minCoeff();
  if (!converged && result.gap > opts.gap_tolerance) {
    std::ostringstream msg;
    msg << "simplex QP did not converge within " << cap << " iterations (gap "
        << static_cast<double>(result.gap) << ")";
    std::vector<double> best(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i)
      best[static_cast<std::size_t>(i)] = static_cast<double>(w(i));
    throw SolverFailureError(msg.str(), best);
  }

  result.weights = w;
  result.objective = Scalar(0.5) * w.dot(Q * w) + c.dot(w);
  return result;
}

}  // namespace bnewton
