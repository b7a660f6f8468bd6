#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "otseg/plan.hpp"

namespace otseg {

template <typename Scalar = double>
struct SinkhornOptions {
  Scalar tol = Scalar(1e-9);
  Eigen::Index max_iter = 10000;
  // Overrelaxation factor in [1,2): potentials move theta times the plain update.
  // Leaves the fixed point unchanged; values near 2 cut iteration counts at small epsilon.
  Scalar theta = Scalar(1);
  // Convergence is tested every check_every sweeps (the test costs about half a sweep).
  Eigen::Index check_every = 1;
  // Warm-start potentials (phi/psi units).
  std::optional<Eigen::Vector<Scalar, Eigen::Dynamic>> phi0, psi0;
};

namespace detail {

// out_i = log sum_j exp(M(i,j) + w_j) over columns of Mt (Mt is M transposed so the
// reduction runs down contiguous columns). Tolerates -inf entries.
template <typename Scalar>
void lse_cols(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Mt,
              const Eigen::Vector<Scalar, Eigen::Dynamic>& w,
              Eigen::Vector<Scalar, Eigen::Dynamic>& out,
              Eigen::Vector<Scalar, Eigen::Dynamic>& tmp) {
  const Eigen::Index n = Mt.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    tmp = Mt.col(i) + w;
    const Scalar m = tmp.maxCoeff();
    if (!std::isfinite(m)) {
      out[i] = m; // all -inf (or an overflow already upstream)
      continue;
    }
    out[i] = m + std::log((tmp.array() - m).exp().sum());
  }
}

// Truncated log-sum-exp over the columns of a fixed matrix. An entry more than 45
// nats below its column max cannot move a double-precision sum, so each output keeps
// a candidate set built with extra margin (60) and rebuilt once the weight vector
// drifts past the slack (7); 60 - 2*7 > 45 keeps every discarded entry negligible.
// Results match the dense reduction in double precision for every input. At small
// bandwidths the sets shrink to the near-diagonal band and the sweep cost drops with
// them; at large bandwidths the sets cover whole columns and nothing changes.
template <typename Scalar>
class TruncatedLse {
public:
  explicit TruncatedLse(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& mt)
      : mt_(mt), sets_(static_cast<size_t>(mt.cols())) {}

  const std::vector<Eigen::Index>& set(Eigen::Index i) const {
    return sets_[static_cast<size_t>(i)];
  }

  // Rebuild candidate sets if w moved too far from the snapshot they were built on.
  void ensure(const Eigen::Vector<Scalar, Eigen::Dynamic>& w) {
    if (w_build_.size() == w.size() &&
        (w - w_build_).template lpNorm<Eigen::Infinity>() <= drift_budget)
      return;
    w_build_ = w;
    const Eigen::Index rows = mt_.rows(), cols = mt_.cols();
    for (Eigen::Index i = 0; i < cols; ++i) {
      scratch_ = mt_.col(i) + w;
      const Scalar m = scratch_.maxCoeff();
      auto& s = sets_[static_cast<size_t>(i)];
      s.clear();
      if (!std::isfinite(m)) { // degenerate column: keep the dense behavior
        for (Eigen::Index j = 0; j < rows; ++j) s.push_back(j);
        continue;
      }
      const Scalar cut = m - build_margin;
      for (Eigen::Index j = 0; j < rows; ++j)
        if (scratch_[j] >= cut) s.push_back(j);
    }
  }

  void eval(const Eigen::Vector<Scalar, Eigen::Dynamic>& w,
            Eigen::Vector<Scalar, Eigen::Dynamic>& out) {
    ensure(w);
    const Eigen::Index cols = mt_.cols();
    for (Eigen::Index i = 0; i < cols; ++i) {
      const auto& s = sets_[static_cast<size_t>(i)];
      buf_.resize(s.size());
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      for (size_t k = 0; k < s.size(); ++k) {
        const Scalar v = mt_(s[k], i) + w[s[k]];
        buf_[k] = v;
        if (v > m) m = v;
      }
      if (!std::isfinite(m)) {
        out[i] = m;
        continue;
      }
      out[i] = m + std::log((Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
                                 buf_.data(), static_cast<Eigen::Index>(s.size())) -
                             m)
                                .exp()
                                .sum());
    }
  }

private:
  static constexpr Scalar build_margin = Scalar(60);
  static constexpr Scalar drift_budget = Scalar(7);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& mt_;
  std::vector<std::vector<Eigen::Index>> sets_;
  Eigen::Vector<Scalar, Eigen::Dynamic> w_build_;
  Eigen::Vector<Scalar, Eigen::Dynamic> scratch_;
  std::vector<Scalar> buf_;
};

} // namespace detail

// Balanced entropic OT by log-domain Sinkhorn. Minimizes <c,pi> + eps*KL(pi, mu x nu)
// over couplings of mu and nu. Convergence: max absolute marginal violation <= tol.
// Non-convergence is reported through the converged flag, not an exception.
template <typename Scalar>
TransportPlan<Scalar> solve_sinkhorn(const DiscreteMeasure<Scalar>& mu,
                                     const DiscreteMeasure<Scalar>& nu,
                                     const CostMatrix<Scalar>& c, Scalar epsilon,
                                     const SinkhornOptions<Scalar>& opt = {}) {
  using Matrix = typename TransportPlan<Scalar>::Matrix;
  using Vector = typename TransportPlan<Scalar>::Vector;
  const Eigen::Index m = mu.size(), n = nu.size();
  if (c.entries.rows() != m || c.entries.cols() != n)
    throw Error(errc::dimension_mismatch, "cost matrix shape does not match measures");
  if (!(epsilon > Scalar(0))) throw Error(errc::parameter, "epsilon must be positive");
  if (!(opt.theta >= Scalar(1)) || !(opt.theta < Scalar(2)))
    throw Error(errc::parameter, "overrelaxation factor must lie in [1,2)");
  if (opt.check_every < 1) throw Error(errc::parameter, "check_every must be >= 1");
  if ((mu.weights.array() <= Scalar(0)).any() || (nu.weights.array() <= Scalar(0)).any())
    throw Error(errc::zero_weight, "zero-weight atom: mask before solving");
  if (std::abs(mu.total_mass() - nu.total_mass()) > Scalar(1e-9))
    throw Error(errc::mass_mismatch, "balanced solver requires equal total masses");

  const Matrix lk = (-c.entries / epsilon).eval();
  const Matrix lkt = lk.transpose().eval();
  const Vector logmu = mu.weights.array().log().matrix();
  const Vector lognu = nu.weights.array().log().matrix();

  Vector al = opt.phi0 ? (*opt.phi0 / epsilon).eval() : Vector::Zero(m).eval();
  Vector be = opt.psi0 ? (*opt.psi0 / epsilon).eval() : Vector::Zero(n).eval();
  if (al.size() != m || be.size() != n)
    throw Error(errc::dimension_mismatch, "warm-start potential length mismatch");

  Vector lse_m(m), lse_n(n);
  Vector row_sum(m), col_sum(n), amu(m), bnu(n);
  detail::TruncatedLse<Scalar> row_lse(lkt), col_lse(lk);
  const Scalar theta = opt.theta;
  Eigen::Index it = 0;
  bool converged = false;
  while (it < opt.max_iter) {
    ++it;
    row_lse.eval((be + lognu).eval(), lse_m);
    al = (Scalar(1) - theta) * al - theta * lse_m;
    col_lse.eval((al + logmu).eval(), lse_n);
    be = (Scalar(1) - theta) * be - theta * lse_n;

    if (it % opt.check_every == 0 || it == opt.max_iter) {
      amu = al + logmu;
      bnu = be + lognu;
      // marginals through the column sets: entries outside them are exact zeros in
      // double, so both sums come out identical to the dense assembly
      col_lse.ensure(amu);
      row_sum.setZero();
      for (Eigen::Index j = 0; j < n; ++j) {
        Scalar cs = Scalar(0);
        for (const Eigen::Index i : col_lse.set(j)) {
          const Scalar e = std::exp(lk(i, j) + amu[i] + bnu[j]);
          cs += e;
          row_sum[i] += e;
        }
        col_sum[j] = cs;
      }
      const Scalar err = std::max((row_sum - mu.weights).template lpNorm<Eigen::Infinity>(),
                                  (col_sum - nu.weights).template lpNorm<Eigen::Infinity>());
      if (err <= opt.tol) {
        converged = true;
        break;
      }
    }
  }

  TransportPlan<Scalar> plan;
  plan.mu_ref = mu;
  plan.nu_ref = nu;
  plan.epsilon = epsilon;
  plan.iterations = it;
  plan.converged = converged;
  Vector phi = epsilon * al, psi = epsilon * be;
  // Gauge: the balanced duals are unique up to phi+t, psi-t; pin <phi,mu> = 0.
  const Scalar shift = phi.dot(mu.weights) / mu.total_mass();
  phi.array() -= shift;
  psi.array() += shift;
  al = phi / epsilon;
  be = psi / epsilon;
  amu = al + logmu;
  bnu = be + lognu;
  plan.matrix.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    plan.matrix.col(j) = ((lk.col(j) + amu).array() + bnu[j]).exp();
  plan.dual_phi = std::move(phi);
  plan.dual_psi = std::move(psi);
  plan.transport_cost = plan.matrix.cwiseProduct(c.entries).sum();
  return plan;
}

// Unbalanced entropic OT: marginal constraints replaced by kappa * KL penalties.
// Same log-domain sweeps with the proximal exponent kappa/(kappa+eps) on each update.
// Convergence: fixed-point residual of the potentials (phi units) <= tol.
template <typename Scalar>
TransportPlan<Scalar> solve_unbalanced(const DiscreteMeasure<Scalar>& mu,
                                       const DiscreteMeasure<Scalar>& nu,
                                       const CostMatrix<Scalar>& c, Scalar epsilon, Scalar kappa,
                                       const SinkhornOptions<Scalar>& opt = {}) {
  using Matrix = typename TransportPlan<Scalar>::Matrix;
  using Vector = typename TransportPlan<Scalar>::Vector;
  const Eigen::Index m = mu.size(), n = nu.size();
  if (c.entries.rows() != m || c.entries.cols() != n)
    throw Error(errc::dimension_mismatch, "cost matrix shape does not match measures");
  if (!(epsilon > Scalar(0))) throw Error(errc::parameter, "epsilon must be positive");
  if (!(kappa > Scalar(0))) throw Error(errc::parameter, "kappa must be positive");
  if (!(opt.theta >= Scalar(1)) || !(opt.theta < Scalar(2)))
    throw Error(errc::parameter, "overrelaxation factor must lie in [1,2)");
  if (!(mu.total_mass() > Scalar(0)) || !(nu.total_mass() > Scalar(0)))
    throw Error(errc::zero_mass, "a measure with zero total mass");

  const Scalar lambda = kappa / (kappa + epsilon);
  const Matrix lk = (-c.entries / epsilon).eval();
  const Matrix lkt = lk.transpose().eval();
  const Vector logmu = mu.weights.array().log().matrix(); // -inf on zero atoms is fine
  const Vector lognu = nu.weights.array().log().matrix();

  Vector al = opt.phi0 ? (*opt.phi0 / epsilon).eval() : Vector::Zero(m).eval();
  Vector be = opt.psi0 ? (*opt.psi0 / epsilon).eval() : Vector::Zero(n).eval();
  if (al.size() != m || be.size() != n)
    throw Error(errc::dimension_mismatch, "warm-start potential length mismatch");

  Vector tmp_n(n), tmp_m(m), target_m(m), target_n(n);
  const Scalar theta = opt.theta;
  Eigen::Index it = 0;
  bool converged = false;
  while (it < opt.max_iter) {
    ++it;
    detail::lse_cols(lkt, (be + lognu).eval(), target_m, tmp_n);
    target_m *= -lambda;
    const Scalar res_a = epsilon * (target_m - al).template lpNorm<Eigen::Infinity>();
    al = (Scalar(1) - theta) * al + theta * target_m;
    detail::lse_cols(lk, (al + logmu).eval(), target_n, tmp_m);
    target_n *= -lambda;
    const Scalar res_b = epsilon * (target_n - be).template lpNorm<Eigen::Infinity>();
    be = (Scalar(1) - theta) * be + theta * target_n;
    if (std::max(res_a, res_b) <= opt.tol) {
      converged = true;
      break;
    }
  }

  TransportPlan<Scalar> plan;
  plan.mu_ref = mu;
  plan.nu_ref = nu;
  plan.epsilon = epsilon;
  plan.kappa = kappa;
  plan.iterations = it;
  plan.converged = converged;
  plan.matrix.resize(m, n);
  const Vector amu = al + logmu, bnu = be + lognu;
  for (Eigen::Index j = 0; j < n; ++j)
    plan.matrix.col(j) = ((lk.col(j) + amu).array() + bnu[j]).exp();
  // vectorized exp clamps -inf to the smallest finite exponent, leaving subnormals
  // where zero-weight atoms must carry exactly zero mass
  for (Eigen::Index i = 0; i < m; ++i)
    if (mu.weights[i] == Scalar(0)) plan.matrix.row(i).setZero();
  for (Eigen::Index j = 0; j < n; ++j)
    if (nu.weights[j] == Scalar(0)) plan.matrix.col(j).setZero();
  plan.dual_phi = (epsilon * al).eval();
  plan.dual_psi = (epsilon * be).eval();
  plan.transport_cost = plan.matrix.cwiseProduct(c.entries).sum();
  return plan;
}

} // namespace otseg
