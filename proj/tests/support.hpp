#pragma once

// Test-only helpers: independent oracles (brute-force grids, finite
// differences, hand-assembled KKT systems) and small random generators.
// Everything here is deliberately independent of the implementation paths it
// is used to check.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>

#include "bnewton/oracle.hpp"
#include "bnewton/types.hpp"

namespace bnewton::testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Brute-force optimality measure, k <= 3: min over the simplex of |G lambda|
// by grid search with local refinement.  |G lambda| is convex in lambda, so
// zooming around the discrete argmin is sound.

inline double normAt2(const MatrixXd& G, double a) {
  return (a * G.col(0) + (1.0 - a) * G.col(1)).norm();
}

inline double normAt3(const MatrixXd& G, double a, double b) {
  return (a * G.col(0) + b * G.col(1) + (1.0 - a - b) * G.col(2)).norm();
}

inline double bruteForceTheta(const MatrixXd& G) {
  const Eigen::Index k = G.cols();
  if (k == 1) return G.col(0).norm();

  if (k == 2) {
    double best_a = 0.0;
    double best = normAt2(G, 0.0);
    const int steps = 10000;  // grid step 1e-4
    for (int i = 0; i <= steps; ++i) {
      const double a = static_cast<double>(i) / steps;
      const double v = normAt2(G, a);
      if (v < best) {
        best = v;
        best_a = a;
      }
    }
    // Ternary refinement on the bracketing cells.
    double lo = std::max(0.0, best_a - 2.0 / steps);
    double hi = std::min(1.0, best_a + 2.0 / steps);
    while (hi - lo > 1e-13) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (normAt2(G, m1) < normAt2(G, m2))
        hi = m2;
      else
        lo = m1;
    }
    return normAt2(G, 0.5 * (lo + hi));
  }

  // k == 3: coarse grid over the 2-simplex, then repeated zoom.
  double h = 1e-2;
  double ca = 0.0, cb = 0.0;  // window corner
  double wa = 1.0, wb = 1.0;  // window extent
  double best = normAt3(G, 0.0, 0.0);
  double best_a = 0.0, best_b = 0.0;
  for (int level = 0; level < 8; ++level) {
    const int na = static_cast<int>(wa / h) + 1;
    const int nb = static_cast<int>(wb / h) + 1;
    for (int i = 0; i < na; ++i) {
      const double a = ca + i * h;
      if (a < 0.0 || a > 1.0) continue;
      for (int j = 0; j < nb; ++j) {
        const double b = cb + j * h;
        if (b < 0.0 || a + b > 1.0) continue;
        const double v = normAt3(G, a, b);
        if (v < best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    ca = best_a - 3.0 * h;
    cb = best_b - 3.0 * h;
    wa = 6.0 * h;
    wb = 6.0 * h;
    h /= 8.0;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Finite differences.

inline VectorXd fdGradient(const std::function<double(const VectorXd&)>& f,
                           const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd e = VectorXd::Zero(x.size());
    e(i) = h;
    g(i) = (f(x + e) - f(x - e)) / (2.0 * h);
  }
  return g;
}

inline MatrixXd fdHessian(const std::function<VectorXd(const VectorXd&)>& grad,
                          const VectorXd& x, double h = 1e-5) {
  const Eigen::Index n = x.size();
  MatrixXd H(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    VectorXd e = VectorXd::Zero(n);
    e(j) = h;
    H.col(j) = (grad(x + e) - grad(x - e)) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Small deterministic generators for test instances.

inline VectorXd gaussianVector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline MatrixXd orthogonalMatrix(Eigen::Index n, std::mt19937_64& rng) {
  MatrixXd X(n, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) X(i, j) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(X);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
  const MatrixXd R = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

inline MatrixXd spdMatrix(Eigen::Index n, std::mt19937_64& rng, double lo = 0.5,
                          double hi = 2.0) {
  std::uniform_real_distribution<double> unif(lo, hi);
  VectorXd eigs(n);
  for (Eigen::Index i = 0; i < n; ++i) eigs(i) = unif(rng);
  const MatrixXd Q = orthogonalMatrix(n, rng);
  MatrixXd H = Q.transpose() * eigs.asDiagonal() * Q;
  return 0.5 * (H + H.transpose());
}

inline VectorXd simplexVector(Eigen::Index k, std::mt19937_64& rng) {
  std::exponential_distribution<double> exp1(1.0);
  VectorXd lambda(k);
  for (Eigen::Index i = 0; i < k; ++i) lambda(i) = exp1(rng) + 1e-12;
  return lambda / lambda.sum();
}

// ---------------------------------------------------------------------------
// Function oracles.

// f(x) = |x| + x^2 on the line; smooth region everywhere except the kink.
inline FunctionOracle<double> absPlusSquareOracle() {
  return FunctionOracle<double>(
      1, [](const VecX<double>& x, bool with_hessian) {
        Evaluation<double> ev;
        const double v = x(0);
        const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        ev.sample.point = x;
        ev.sample.value = std::abs(v) + v * v;
        ev.sample.gradient = VecX<double>::Constant(1, sign + 2.0 * v);
        if (with_hessian) ev.sample.hessian = MatX<double>::Constant(1, 1, 2.0);
        ev.in_domain = v != 0.0;
        ev.region = v >= 0.0 ? 0 : 1;
        return ev;
      });
}

// Smooth strongly convex quadratic f(x) = 1/2 x'Ax - b'x.
inline FunctionOracle<double> quadraticOracle(MatrixXd A, VectorXd b) {
  const Eigen::Index n = b.size();
  return FunctionOracle<double>(
      n, [A = std::move(A), b = std::move(b)](const VecX<double>& x,
                                              bool with_hessian) {
        Evaluation<double> ev;
        ev.sample.point = x;
        ev.sample.value = 0.5 * x.dot(A * x) - b.dot(x);
        ev.sample.gradient = A * x - b;
        if (with_hessian) ev.sample.hessian = A;
        ev.in_domain = true;
        ev.region = 0;
        return ev;
      });
}

// ---------------------------------------------------------------------------
// Hand-assembled 4x4 KKT system for f(x) = |x| + x^2 with bundle {a, -b},
// a, b > 0: unknowns (x, t, mu1, mu2).  Written out directly from the model
// data, independent of the library's assembly code.

struct AbsQuadKkt {
  double xhat;
  double t;
  double mu1;
  double mu2;
};

inline AbsQuadKkt solveAbsQuadKkt(double a, double b, double lambda1,
                                  double lambda2) {
  const double g1 = 1.0 + 2.0 * a;    // f'(a)
  const double g2 = -1.0 - 2.0 * b;   // f'(-b)
  const double f1 = a + a * a;        // f(a)
  const double f2 = b + b * b;        // f(-b)

  Eigen::Matrix4d K;
  Eigen::Vector4d rhs;
  K << 2.0 * (lambda1 + lambda2), 0.0, g1, g2,
       0.0, 0.0, 1.0, 1.0,
       g1, -1.0, 0.0, 0.0,
       g2, -1.0, 0.0, 0.0;
  rhs << 2.0 * (lambda1 * a + lambda2 * (-b)),
         1.0,
         g1 * a - f1,
         g2 * (-b) - f2;
  const Eigen::Vector4d z = K.fullPivLu().solve(rhs);
  return AbsQuadKkt{z(0), z(1), z(2), z(3)};
}

}  // namespace bnewton::testing
