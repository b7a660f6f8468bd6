#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "otseg/plan.hpp"

namespace otseg {

// Transition kernel of a transfer operator: matrix[i][j] is a density relative to
// mu_ref x nu_ref, column-stochastic against mu_ref and row-stochastic against nu_ref.
template <typename Scalar = double>
struct TransitionKernel {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix;
  DiscreteMeasure<Scalar> mu_ref, nu_ref;
};

enum class BlurShape { gaussian, ball };

struct BlurSpec {
  BlurShape shape{BlurShape::gaussian};
  double width{1};          // grid cells
  double truncation{1e-4};  // gaussian tail cutoff, applied before normalization
};

// Discrete blur weights on integer offsets, symmetric and summing to 1.
template <typename Scalar = double>
std::vector<std::pair<int, Scalar>> make_blur(const BlurSpec& spec) {
  if (!(spec.width > 0)) throw Error(errc::parameter, "blur width must be positive");
  std::vector<std::pair<int, Scalar>> out;
  if (spec.shape == BlurShape::ball) {
    const int r = static_cast<int>(std::floor(spec.width));
    const Scalar w = Scalar(1) / Scalar(2 * r + 1);
    for (int k = -r; k <= r; ++k) out.emplace_back(k, w);
    return out;
  }
  const Scalar w2 = Scalar(spec.width) * Scalar(spec.width);
  int r = 0;
  while (std::exp(-Scalar((r + 1)) * Scalar((r + 1)) / (2 * w2)) >= Scalar(spec.truncation)) ++r;
  Scalar total = 0;
  for (int k = -r; k <= r; ++k) {
    const Scalar wk = std::exp(-Scalar(k) * Scalar(k) / (2 * w2));
    if (wk < Scalar(spec.truncation)) continue; // only possible if truncation > 1
    out.emplace_back(k, wk);
    total += wk;
  }
  if (out.empty()) return {{0, Scalar(1)}}; // degenerate truncation: identity blur
  for (auto& kv : out) kv.second /= total;
  return out;
}

// K(i,j) = plan(i,j) / (mu_i nu_j) for a balanced regularized plan.
template <typename Scalar>
TransitionKernel<Scalar> kernel_from_regularized(const TransportPlan<Scalar>& plan) {
  if (!(plan.epsilon > Scalar(0)) || plan.kappa)
    throw Error(errc::parameter, "expected a balanced regularized plan");
  if ((plan.mu_ref.weights.array() <= Scalar(0)).any() ||
      (plan.nu_ref.weights.array() <= Scalar(0)).any())
    throw Error(errc::zero_weight, "zero marginal weight: mask before building kernels");
  TransitionKernel<Scalar> k;
  k.matrix = plan.matrix.array().colwise() / plan.mu_ref.weights.array();
  k.matrix = k.matrix.array().rowwise() / plan.nu_ref.weights.transpose().array();
  k.mu_ref = plan.mu_ref;
  k.nu_ref = plan.nu_ref;
  return k;
}

// K(i,j) = plan(i,j) / (mt_i nt_j) where mt, nt are the plan's own marginals; the
// stochasticity identities then hold exactly with respect to those marginals.
template <typename Scalar>
TransitionKernel<Scalar> kernel_from_unbalanced(const TransportPlan<Scalar>& plan) {
  auto [mt, nt] = plan_marginals(plan);
  if ((mt.weights.array() <= Scalar(0)).any() || (nt.weights.array() <= Scalar(0)).any())
    throw Error(errc::degenerate_plan, "plan has a zero row or column sum");
  TransitionKernel<Scalar> k;
  k.matrix = plan.matrix.array().colwise() / mt.weights.array();
  k.matrix = k.matrix.array().rowwise() / nt.weights.transpose().array();
  k.mu_ref = std::move(mt);
  k.nu_ref = std::move(nt);
  return k;
}

namespace detail {

// Row-normalized blur matrix on {0..n-1}: B(r, j) = blur(j - r) / sum_{k in range} blur(k - r).
// Out-of-range offsets are dropped and the remaining weights renormalized, so rows sum to 1.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
blur_matrix(Eigen::Index n, const std::vector<std::pair<int, Scalar>>& blur) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> b =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    Scalar s = 0;
    for (const auto& [k, w] : blur) {
      const Eigen::Index j = r + k;
      if (j >= 0 && j < n) {
        b(r, j) = w;
        s += w;
      }
    }
    b.row(r) /= s;
  }
  return b;
}

} // namespace detail

// Blur-smoothed kernel from an exact (unregularized) plan on 1-D sorted supports.
// The plan rows are first normalized by mu and smoothed across target indices with
// partial-sum renormalization at the boundary, then smoothed across source indices,
// and finally column-normalized by the smoothed marginal so the stochasticity
// identities hold exactly. Smoothing acts in index space, not coordinate space.
template <typename Scalar>
TransitionKernel<Scalar> smooth_plan_kernel(const TransportPlan<Scalar>& plan,
                                            const BlurSpec& spec) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (plan.epsilon != Scalar(0))
    throw Error(errc::parameter, "smoothed kernels are built from exact plans");
  const auto& mu = plan.mu_ref;
  const auto& nu = plan.nu_ref;
  auto sorted_1d = [](const DiscreteMeasure<Scalar>& d) {
    if (d.dim() != 1) return false;
    for (Eigen::Index i = 0; i + 1 < d.size(); ++i)
      if (!(d.points(i, 0) < d.points(i + 1, 0))) return false;
    return true;
  };
  if (!sorted_1d(mu) || !sorted_1d(nu))
    throw Error(errc::unsupported_structure,
                "smoothed kernels need strictly increasing 1-D supports");
  if ((mu.weights.array() <= Scalar(0)).any())
    throw Error(errc::zero_weight, "zero source weight: mask before smoothing");

  const auto blur = make_blur<Scalar>(spec);
  const Eigen::Index m = plan.rows(), n = plan.cols();
  const Matrix bj = detail::blur_matrix<Scalar>(n, blur); // smoothing across targets
  const Matrix bi = detail::blur_matrix<Scalar>(m, blur); // smoothing across sources

  // k1 = diag(1/mu) plan bj: plan rows sum to mu_i and bj rows sum to 1, so k1 rows
  // sum to 1; k2 = bi k1 keeps rows summing to 1 for the same reason.
  Matrix k1 = plan.matrix.array().colwise() / mu.weights.array();
  k1 = (k1 * bj).eval();
  Matrix k2 = bi * k1;

  Eigen::Vector<Scalar, Eigen::Dynamic> nu_eps = k2.transpose() * mu.weights;
  TransitionKernel<Scalar> k;
  k.matrix = k2.array().rowwise() / nu_eps.transpose().array();
  k.mu_ref = mu;
  k.nu_ref = {nu.points, std::move(nu_eps), nu.index_map};
  return k;
}

// Worst-case deviation of a kernel from its two stochasticity identities.
template <typename Scalar>
std::pair<Scalar, Scalar> kernel_residuals(const TransitionKernel<Scalar>& k) {
  const auto col = (k.matrix.transpose() * k.mu_ref.weights).eval();
  const auto row = (k.matrix * k.nu_ref.weights).eval();
  return {(col.array() - Scalar(1)).abs().maxCoeff(),
          (row.array() - Scalar(1)).abs().maxCoeff()};
}

} // namespace otseg
