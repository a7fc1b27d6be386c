#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "bnewton/errors.hpp"

namespace bnewton {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// One full oracle response at a reference point.  The hessian may be left
// empty (0x0) by first-order evaluations.
template <typename Scalar>
struct OracleSample {
  VecX<Scalar> point;
  Scalar value = Scalar(0);
  VecX<Scalar> gradient;
  MatX<Scalar> hessian;

  bool hasHessian() const { return hessian.size() > 0; }
};

// Oracle response plus smooth-region membership and the activity-region
// label (-1 when the objective has no region structure).
template <typename Scalar>
struct Evaluation {
  OracleSample<Scalar> sample;
  bool in_domain = true;
  int region = -1;
};

namespace detail {

template <typename Scalar>
void validateSample(const OracleSample<Scalar>& s, Index expected_dim) {
  const Index n = s.point.size();
  if (n == 0) throw InvalidInputError("oracle sample has an empty point");
  if (expected_dim >= 0 && n != expected_dim)
    throw InvalidInputError("oracle sample dimension mismatch");
  if (!s.point.allFinite() || !std::isfinite(static_cast<double>(s.value)) ||
      !s.gradient.allFinite())
    throw InvalidInputError("oracle sample contains non-finite entries");
  if (s.gradient.size() != n)
    throw InvalidInputError("gradient length does not match point dimension");
  if (s.hasHessian()) {
    if (s.hessian.rows() != n || s.hessian.cols() != n)
      throw InvalidInputError("hessian shape does not match point dimension");
    if (!s.hessian.allFinite())
      throw InvalidInputError("hessian contains non-finite entries");
    const Scalar scale = Scalar(1) + s.hessian.cwiseAbs().maxCoeff();
    const Scalar asym =
        (s.hessian - s.hessian.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-12) * scale)
      throw InvalidInputError("hessian is not symmetric");
  }
}

}  // namespace detail

// Ordered set of k distinct reference points with cached oracle data.  The
// cardinality is fixed for the lifetime of a Newton run; updates go through
// withReplaced so the distinctness invariant is re-checked.
template <typename Scalar>
class Bundle {
 public:
  Bundle() = default;

  explicit Bundle(std::vector<OracleSample<Scalar>> samples)
      : samples_(std::move(samples)) {
    if (samples_.empty()) throw InvalidInputError("bundle must be nonempty");
    const Index n = samples_.front().point.size();
    for (const auto& s : samples_) detail::validateSample(s, n);
    for (std::size_t i = 0; i < samples_.size(); ++i)
      for (std::size_t j = i + 1; j < samples_.size(); ++j)
        if (pointsCoincide(samples_[i].point, samples_[j].point))
          throw DegenerateBundleError("bundle reference points coincide");
  }

  Index k() const { return static_cast<Index>(samples_.size()); }
  Index dimension() const {
    return samples_.empty() ? 0 : samples_.front().point.size();
  }
  bool empty() const { return samples_.empty(); }

  const std::vector<OracleSample<Scalar>>& samples() const { return samples_; }
  const OracleSample<Scalar>& operator[](Index i) const {
    return samples_[static_cast<std::size_t>(i)];
  }

  // Columns are the reference points, in bundle order.
  MatX<Scalar> pointMatrix() const {
    MatX<Scalar> P(dimension(), k());
    for (Index i = 0; i < k(); ++i) P.col(i) = samples_[i].point;
    return P;
  }

  // Columns are the cached gradients, in bundle order.
  MatX<Scalar> gradientMatrix() const {
    MatX<Scalar> G(dimension(), k());
    for (Index i = 0; i < k(); ++i) G.col(i) = samples_[i].gradient;
    return G;
  }

  // Max pairwise Euclidean distance between reference points.
  Scalar diameter() const {
    Scalar d = Scalar(0);
    for (Index i = 0; i < k(); ++i)
      for (Index j = i + 1; j < k(); ++j)
        d = std::max(d, (samples_[i].point - samples_[j].point).norm());
    return d;
  }

  Bundle withReplaced(Index index, OracleSample<Scalar> sample) const {
    if (index < 0 || index >= k())
      throw InvalidInputError("replacement index out of range");
    std::vector<OracleSample<Scalar>> next = samples_;
    next[static_cast<std::size_t>(index)] = std::move(sample);
    return Bundle(std::move(next));
  }

  // Distinctness rule shared by all bundle operations.
  static bool pointsCoincide(const VecX<Scalar>& a, const VecX<Scalar>& b) {
    return (a - b).norm() <= Scalar(1e-14) * (Scalar(1) + a.norm());
  }

 private:
  std::vector<OracleSample<Scalar>> samples_;
};

// Simplex weights attaining the optimality measure, with the aggregate
// gradient they produce and (when computed from a bundle) the weighted
// center of the reference points.
template <typename Scalar>
struct MultiplierEstimate {
  VecX<Scalar> lambda;
  Scalar theta = Scalar(0);
  VecX<Scalar> aggregate_gradient;
  VecX<Scalar> center;  // empty when the estimate was built from gradients only
};

// Approximate optimality certificate extracted from a bundle.
template <typename Scalar>
struct Certificate {
  VecX<Scalar> center;
  std::optional<Scalar> upper_value;  // absent when center lies outside D
  Scalar theta = Scalar(0);
  Scalar diameter = Scalar(0);
  std::optional<Scalar> gap_bound;  // L * diam S, when L was supplied
};

}  // namespace bnewton
