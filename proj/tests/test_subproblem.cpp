#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bnewton/bundle.hpp"
#include "bnewton/subproblem.hpp"
#include "support.hpp"

using namespace bnewton;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

AffineModel<double> affine1d(double value, double gradient, double anchor) {
  return AffineModel<double>{value, VectorXd::Constant(1, gradient),
                             VectorXd::Constant(1, anchor)};
}

// Subproblem for f(x) = |x| + x^2 with bundle {a, -b}, a, b in (0, 0.5).
NewtonSubproblem<double> absQuadSubproblem(double a, double b) {
  NewtonSubproblem<double> sp;
  const double g1 = 1.0 + 2.0 * a;
  const double g2 = -1.0 - 2.0 * b;
  sp.linear_models = {affine1d(a + a * a, g1, a), affine1d(b + b * b, g2, -b)};
  for (const auto& l : sp.linear_models)
    sp.quadratic_models.push_back(QuadraticModel<double>{
        l.value, l.gradient, MatrixXd::Constant(1, 1, 2.0), l.anchor});
  MatrixXd G(1, 2);
  G << g1, g2;
  sp.lambdas = theta(G).lambda;
  return sp;
}

NewtonSubproblem<double> randomSubproblem(int n, int k, std::mt19937_64& rng,
                                          bool shared_gradients = true) {
  NewtonSubproblem<double> sp;
  sp.lambdas = testing::simplexVector(k, rng);
  for (int s = 0; s < k; ++s) {
    AffineModel<double> l;
    l.anchor = testing::gaussianVector(n, rng);
    l.gradient = testing::gaussianVector(n, rng);
    l.value = testing::gaussianVector(1, rng)(0);
    QuadraticModel<double> q;
    q.anchor = l.anchor;
    q.gradient = shared_gradients ? l.gradient : testing::gaussianVector(n, rng);
    q.value = l.value;
    q.hessian = testing::spdMatrix(n, rng);
    sp.linear_models.push_back(std::move(l));
    sp.quadratic_models.push_back(std::move(q));
  }
  return sp;
}

}  // namespace

TEST_CASE("constraints of a symmetric pair pin the origin") {
  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Constant(2, 0.5);
  sp.linear_models = {affine1d(0.5, 1.0, 0.5), affine1d(0.5, -1.0, -0.5)};
  for (const auto& l : sp.linear_models)
    sp.quadratic_models.push_back(QuadraticModel<double>{
        l.value, l.gradient, MatrixXd::Identity(1, 1), l.anchor});

  const auto sys = buildConstraints(sp);
  CHECK(sys.constraint_matrix(0, 0) == doctest::Approx(2.0));
  CHECK(sys.rhs(0) == doctest::Approx(0.0));
  CHECK(sys.null_basis.cols() == 0);
  CHECK(sys.particular(0) == doctest::Approx(0.0));
}

TEST_CASE("constraints of a planar pair give the diagonal line") {
  const VectorXd anchor = (VectorXd(2) << 0.3, 0.7).finished();
  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Constant(2, 0.5);
  AffineModel<double> l1{1.2, (VectorXd(2) << 1.0, 0.0).finished(), anchor};
  AffineModel<double> l2{1.2, (VectorXd(2) << 0.0, 1.0).finished(), anchor};
  sp.linear_models = {l1, l2};
  for (const auto& l : sp.linear_models)
    sp.quadratic_models.push_back(QuadraticModel<double>{
        l.value, l.gradient, MatrixXd::Identity(2, 2), l.anchor});

  const auto sys = buildConstraints(sp);
  // Hand elimination: (1,-1) x = w1 - w2.
  CHECK(sys.constraint_matrix(0, 0) == doctest::Approx(1.0));
  CHECK(sys.constraint_matrix(0, 1) == doctest::Approx(-1.0));
  CHECK(sys.rhs(0) == doctest::Approx(anchor(0) - anchor(1)));

  CHECK((sys.constraint_matrix * sys.null_basis).cwiseAbs().maxCoeff() <=
        1e-10);
  CHECK((sys.constraint_matrix * sys.particular - sys.rhs)
            .cwiseAbs()
            .maxCoeff() <= 1e-10);
  MatrixXd UV(2, 2);
  UV << sys.null_basis, sys.range_basis;
  CHECK((UV.transpose() * UV - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <=
        1e-12);
  // The anchor satisfies both models equally, so it lies on the subspace.
  CHECK((sys.constraint_matrix * anchor - sys.rhs).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("identical linear models are degenerate") {
  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Constant(2, 0.5);
  AffineModel<double> l = affine1d(0.5, 1.0, 0.5);
  sp.linear_models = {l, l};
  for (int i = 0; i < 2; ++i)
    sp.quadratic_models.push_back(QuadraticModel<double>{
        l.value, l.gradient, MatrixXd::Identity(1, 1), l.anchor});
  // Coinciding anchors aside, the zero row is what matters here.
  sp.linear_models[1].anchor = VectorXd::Constant(1, -0.5);
  sp.quadratic_models[1].anchor = VectorXd::Constant(1, -0.5);
  CHECK_THROWS_AS(buildConstraints(sp), DegenerateConstraintsError);
}

TEST_CASE("one-point subproblem on a centered quadratic returns the center") {
  const int n = 3;
  std::mt19937_64 rng(3);
  const VectorXd a = testing::gaussianVector(n, rng);
  const VectorXd s = testing::gaussianVector(n, rng);

  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Ones(1);
  const VectorXd grad = s - a;  // gradient of 1/2|x-a|^2 at s
  sp.linear_models = {AffineModel<double>{0.5 * (s - a).squaredNorm(), grad, s}};
  sp.quadratic_models = {QuadraticModel<double>{
      0.5 * (s - a).squaredNorm(), grad, MatrixXd::Identity(n, n), s}};

  const auto sol = solveKktFull(sp);
  CHECK((sol.xhat - a).norm() <= 1e-12);
  CHECK(sol.bounded);
  CHECK(sol.mu(0) == doctest::Approx(1.0));
}

TEST_CASE("one-point subproblem is the classical Newton step") {
  const int n = 4;
  std::mt19937_64 rng(5);
  const MatrixXd H = testing::spdMatrix(n, rng);
  const VectorXd g = testing::gaussianVector(n, rng);
  const VectorXd s = testing::gaussianVector(n, rng);

  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Ones(1);
  sp.linear_models = {AffineModel<double>{1.0, g, s}};
  sp.quadratic_models = {QuadraticModel<double>{1.0, g, H, s}};

  const auto sol = solveKktFull(sp);
  const VectorXd expected = s - H.ldlt().solve(g);
  CHECK((sol.xhat - expected).norm() <= 1e-10 * (1.0 + expected.norm()));
}

TEST_CASE("two-point kink subproblem matches the written-out 4x4 system") {
  for (auto [a, b] : {std::pair{0.3, 0.4}, std::pair{0.45, 0.1},
                      std::pair{0.05, 0.25}}) {
    const auto sp = absQuadSubproblem(a, b);
    const auto sol = solveKktFull(sp);
    const auto oracle =
        testing::solveAbsQuadKkt(a, b, sp.lambdas(0), sp.lambdas(1));
    CHECK(sol.xhat(0) == doctest::Approx(oracle.xhat).epsilon(1e-12));
    CHECK(sol.t_value == doctest::Approx(oracle.t).epsilon(1e-12));
    CHECK(sol.mu(0) == doctest::Approx(oracle.mu1).epsilon(1e-10));
    CHECK(sol.mu(1) == doctest::Approx(oracle.mu2).epsilon(1e-10));
    // Closed form from eliminating the constraint: the active subspace is a
    // single point.
    const double expected = (a * a - b * b) / (2.0 * (1.0 + a + b));
    CHECK(sol.xhat(0) == doctest::Approx(expected).epsilon(1e-12));
    // Reduced solve agrees bit-for-bit in spirit: x is pinned by p.
    const auto sys = buildConstraints(sp);
    const auto red = solveKktReduced(sp, sys, false);
    CHECK(red.xhat(0) == doctest::Approx(sol.xhat(0)).epsilon(1e-12));
    const auto red_proj = solveKktReduced(sp, sys, true);
    CHECK(red_proj.xhat(0) == doctest::Approx(sol.xhat(0)).epsilon(1e-12));
  }
}

TEST_CASE("full and reduced solvers agree on random instances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);
    const int k = 2 + static_cast<int>(rng() % std::min(n, 5));
    const auto sp = randomSubproblem(n, k, rng, trial % 2 == 0);

    const auto sys = buildConstraints(sp);
    const auto full = solveKktFull(sp);
    const auto reduced = solveKktReduced(sp, sys, false);

    CHECK((full.xhat - reduced.xhat).norm() <=
          1e-8 * (1.0 + full.xhat.norm()));
    const double scale =
        1.0 + std::abs(full.t_value) + full.xhat.cwiseAbs().maxCoeff();
    CHECK(full.kkt_residual <= 1e-8 * scale);
    CHECK(reduced.kkt_residual <= 1e-8 * scale);

    // All linear models agree at the solution.
    for (const auto& l : sp.linear_models)
      CHECK(std::abs(l(full.xhat) - full.t_value) <=
            1e-9 * (1.0 + full.xhat.norm() + std::abs(full.t_value)));
    CHECK(full.mu.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("indefinite curvature on the active subspace is flagged unbounded") {
  // Gradients (1,0) and (-1,0): the active subspace is the x2-axis.  Both
  // Hessians are diag(1,-1), so the projected curvature is -1.
  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Constant(2, 0.5);
  MatrixXd H(2, 2);
  H << 1.0, 0.0, 0.0, -1.0;
  AffineModel<double> l1{0.0, (VectorXd(2) << 1.0, 0.0).finished(),
                         VectorXd::Zero(2)};
  AffineModel<double> l2{0.0, (VectorXd(2) << -1.0, 0.0).finished(),
                         VectorXd::Zero(2)};
  sp.linear_models = {l1, l2};
  sp.quadratic_models = {
      QuadraticModel<double>{0.0, l1.gradient, H, l1.anchor},
      QuadraticModel<double>{0.0, l2.gradient, H, l2.anchor}};
  // Distinct anchors to keep the models honest.
  sp.linear_models[0].anchor = VectorXd::Constant(2, 0.1);
  sp.quadratic_models[0].anchor = VectorXd::Constant(2, 0.1);

  const auto sys = buildConstraints(sp);
  CHECK_THROWS_AS(solveKktReduced(sp, sys, false), UnboundedSubproblemError);
  const auto full = solveKktFull(sp);
  CHECK_FALSE(full.bounded);
  CHECK(full.reduced_hessian_min_eig == doctest::Approx(-1.0));
}

TEST_CASE("flat curvature on the active subspace is singular") {
  NewtonSubproblem<double> sp;
  sp.lambdas = VectorXd::Constant(2, 0.5);
  MatrixXd H(2, 2);
  H << 1.0, 0.0, 0.0, 0.0;
  AffineModel<double> l1{0.1, (VectorXd(2) << 1.0, 0.0).finished(),
                         VectorXd::Constant(2, 0.1)};
  AffineModel<double> l2{0.0, (VectorXd(2) << -1.0, 0.0).finished(),
                         VectorXd::Zero(2)};
  sp.linear_models = {l1, l2};
  sp.quadratic_models = {
      QuadraticModel<double>{0.1, l1.gradient, H, l1.anchor},
      QuadraticModel<double>{0.0, l2.gradient, H, l2.anchor}};
  const auto sys = buildConstraints(sp);
  CHECK_THROWS_AS(solveKktReduced(sp, sys, false), SingularSystemError);
}

TEST_CASE("prox step over a single cut") {
  const int n = 3;
  std::mt19937_64 rng(13);
  const VectorXd z = testing::gaussianVector(n, rng);
  const VectorXd g = testing::gaussianVector(n, rng);
  std::vector<AffineModel<double>> cuts{AffineModel<double>{0.0, g, VectorXd::Zero(n)}};
  const auto sol = solveProximalCutQp(cuts, z, 1.0);
  CHECK((sol.xhat - (z - g)).norm() <= 1e-12);
  CHECK(sol.weights(0) == doctest::Approx(1.0));
}

TEST_CASE("prox step balances a symmetric pair of cuts") {
  std::vector<AffineModel<double>> cuts{
      affine1d(0.0, 1.0, 0.0),   // l(x) = x
      affine1d(0.0, -1.0, 0.0)}; // l(x) = -x
  const auto at0 = solveProximalCutQp(cuts, VectorXd::Zero(1), 1.0);
  CHECK(std::abs(at0.xhat(0)) <= 1e-12);
  CHECK(at0.weights(0) == doctest::Approx(0.5).epsilon(1e-9));

  // Hand-solved KKT at z = 0.3: the minimizer sits at the kink with
  // alpha = (0.65, 0.35).
  const auto at03 = solveProximalCutQp(cuts, VectorXd::Constant(1, 0.3), 1.0);
  CHECK(std::abs(at03.xhat(0)) <= 1e-12);
  CHECK(at03.weights(0) == doctest::Approx(0.65).epsilon(1e-9));
  CHECK(at03.weights(1) == doctest::Approx(0.35).epsilon(1e-9));
}

TEST_CASE("prox solution satisfies stationarity and beats random probes") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4;
    const int m = 1 + static_cast<int>(rng() % 6);
    const double rho = 0.5 + 2.0 * (trial % 3);
    std::vector<AffineModel<double>> cuts;
    for (int s = 0; s < m; ++s)
      cuts.push_back(AffineModel<double>{testing::gaussianVector(1, rng)(0),
                                         testing::gaussianVector(n, rng),
                                         testing::gaussianVector(n, rng)});
    const VectorXd z = testing::gaussianVector(n, rng);
    const auto sol = solveProximalCutQp(cuts, z, rho);

    VectorXd stat = rho * (sol.xhat - z);
    for (int s = 0; s < m; ++s) stat += sol.weights(s) * cuts[s].gradient;
    CHECK(stat.cwiseAbs().maxCoeff() <= 1e-8);

    auto objective = [&](const VectorXd& x) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& cut : cuts) best = std::max(best, cut(x));
      return best + 0.5 * rho * (x - z).squaredNorm();
    };
    const double at_sol = objective(sol.xhat);
    for (int probe = 0; probe < 1000; ++probe) {
      const VectorXd x = sol.xhat + 0.5 * testing::gaussianVector(n, rng);
      CHECK(at_sol <= objective(x) + 1e-10);
    }
  }
}

TEST_CASE("prox rejects bad input") {
  std::vector<AffineModel<double>> none;
  CHECK_THROWS_AS(solveProximalCutQp(none, VectorXd::Zero(1), 1.0),
                  InvalidInputError);
  std::vector<AffineModel<double>> cuts{affine1d(0.0, 1.0, 0.0)};
  CHECK_THROWS_AS(solveProximalCutQp(cuts, VectorXd::Zero(1), 0.0),
                  InvalidInputError);
}
