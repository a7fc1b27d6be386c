#pragma once

#include <atomic>
#include <functional>
#include <utility>

#include "bnewton/types.hpp"

namespace bnewton {

// Black-box objective: value, gradient, Hessian and smooth-region membership
// at a point.  Implementations must be reentrant; evaluate is const.
template <typename Scalar>
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual Index dimension() const = 0;

  // Pass with_hessian=false to skip Hessian assembly; the returned sample
  // then carries an empty hessian.
  virtual Evaluation<Scalar> evaluate(const VecX<Scalar>& x,
                                      bool with_hessian = true) const = 0;
};

// Adapts a callable for tests and ad-hoc objectives.
template <typename Scalar>
class FunctionOracle final : public Oracle<Scalar> {
 public:
  using Fn = std::function<Evaluation<Scalar>(const VecX<Scalar>&, bool)>;

  FunctionOracle(Index dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  Index dimension() const override { return dim_; }

  Evaluation<Scalar> evaluate(const VecX<Scalar>& x,
                              bool with_hessian) const override {
    return fn_(x, with_hessian);
  }

 private:
  Index dim_;
  Fn fn_;
};

// Counts evaluations so one budget can be billed across phases.  The counter
// is atomic: independent runs may share a problem but each run should own its
// own counter.
template <typename Scalar>
class CountingOracle final : public Oracle<Scalar> {
 public:
  explicit CountingOracle(const Oracle<Scalar>& base) : base_(&base) {}

  Index dimension() const override { return base_->dimension(); }

  Evaluation<Scalar> evaluate(const VecX<Scalar>& x,
                              bool with_hessian) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return base_->evaluate(x, with_hessian);
  }

  long calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  const Oracle<Scalar>* base_;
  mutable std::atomic<long> calls_{0};
};

// First-order analogue: identical value/gradient/membership, but the Hessian
// is reported as scale * I everywhere.
template <typename Scalar>
class IdentityHessianOracle final : public Oracle<Scalar> {
 public:
  IdentityHessianOracle(const Oracle<Scalar>& base, Scalar scale)
      : base_(&base), scale_(scale) {
    if (!(scale > Scalar(0)))
      throw InvalidInputError("identity Hessian scale must be positive");
  }

  Index dimension() const override { return base_->dimension(); }

  Evaluation<Scalar> evaluate(const VecX<Scalar>& x,
                              bool with_hessian) const override {
    Evaluation<Scalar> ev = base_->evaluate(x, /*with_hessian=*/false);
    if (with_hessian) {
      const Index n = x.size();
      ev.sample.hessian = scale_ * MatX<Scalar>::Identity(n, n);
    }
    return ev;
  }

  Scalar scale() const { return scale_; }

 private:
  const Oracle<Scalar>* base_;
  Scalar scale_;
};

template <typename Scalar>
IdentityHessianOracle<Scalar> identityHessianWrapper(const Oracle<Scalar>& base,
                                                     Scalar scale) {
  return IdentityHessianOracle<Scalar>(base, scale);
}

}  // namespace bnewton
