#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "otseg/errors.hpp"

namespace otseg {

// Weighted point cloud in R^d. Rows of `points` are atoms.
template <typename Scalar = double>
struct DiscreteMeasure {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;

  Matrix points;  // m x d
  Vector weights; // m, nonnegative
  // Empty means identity; filled by mask_zero_atoms with positions in the unmasked input.
  std::vector<Eigen::Index> index_map;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  Scalar total_mass() const { return weights.sum(); }
};

template <typename Scalar>
DiscreteMeasure<Scalar> make_measure(typename DiscreteMeasure<Scalar>::Matrix points,
                                     typename DiscreteMeasure<Scalar>::Vector weights) {
  if (points.rows() != weights.size())
    throw Error(errc::dimension_mismatch, "points and weights differ in length");
  if ((weights.array() < Scalar(0)).any())
    throw Error(errc::parameter, "negative weight");
  return {std::move(points), std::move(weights), {}};
}

// Uniform weights 1/m.
template <typename Scalar>
DiscreteMeasure<Scalar> uniform_measure(typename DiscreteMeasure<Scalar>::Matrix points) {
  const Eigen::Index m = points.rows();
  if (m == 0) throw Error(errc::empty_input, "measure with no atoms");
  typename DiscreteMeasure<Scalar>::Vector w =
      DiscreteMeasure<Scalar>::Vector::Constant(m, Scalar(1) / Scalar(m));
  return {std::move(points), std::move(w), {}};
}

template <typename Scalar>
DiscreteMeasure<Scalar> normalize(const DiscreteMeasure<Scalar>& m) {
  const Scalar total = m.total_mass();
  if (!(total > Scalar(0))) throw Error(errc::zero_mass, "total mass is zero");
  DiscreteMeasure<Scalar> out = m;
  out.weights /= total;
  return out;
}

// Drop zero-weight atoms, remembering original indices.
template <typename Scalar>
DiscreteMeasure<Scalar> mask_zero_atoms(const DiscreteMeasure<Scalar>& m) {
  std::vector<Eigen::Index> keep;
  keep.reserve(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m.weights[i] > Scalar(0)) keep.push_back(i);
  if (keep.empty()) throw Error(errc::zero_mass, "all weights are zero");

  DiscreteMeasure<Scalar> out;
  out.points.resize(static_cast<Eigen::Index>(keep.size()), m.dim());
  out.weights.resize(static_cast<Eigen::Index>(keep.size()));
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(keep.size()); ++k) {
    out.points.row(k) = m.points.row(keep[static_cast<size_t>(k)]);
    out.weights[k] = m.weights[keep[static_cast<size_t>(k)]];
  }
  // Compose with an existing map so double masking still points at the original.
  if (m.index_map.empty()) {
    out.index_map = std::move(keep);
  } else {
    out.index_map.reserve(keep.size());
    for (Eigen::Index i : keep) out.index_map.push_back(m.index_map[static_cast<size_t>(i)]);
  }
  return out;
}

// Pairwise ground cost ||x_i - y_j||_2^p.
template <typename Scalar = double>
struct CostMatrix {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> entries; // m x n
  Scalar exponent{2};
};

template <typename Scalar>
CostMatrix<Scalar> cost_matrix(const DiscreteMeasure<Scalar>& mu,
                               const DiscreteMeasure<Scalar>& nu, Scalar p = Scalar(2)) {
  if (mu.dim() != nu.dim()) throw Error(errc::dimension_mismatch, "point dimensions differ");
  if (!(p >= Scalar(1))) throw Error(errc::parameter, "cost exponent must be >= 1");
  const Eigen::Index m = mu.size(), n = nu.size();
  CostMatrix<Scalar> c;
  c.exponent = p;
  c.entries.resize(m, n);
  // entrywise difference form: each entry depends only on its own pair of points, so
  // the matrix is exactly symmetric on identical supports, has an exactly zero
  // diagonal, and permuting atoms permutes entries bitwise
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      c.entries(i, j) = (mu.points.row(i) - nu.points.row(j)).squaredNorm();
  if (p != Scalar(2)) c.entries = c.entries.array().pow(p / Scalar(2)).matrix();
  return c;
}

// Mean distance over all unordered pairs.
template <typename Scalar>
Scalar mean_pairwise_distance(const DiscreteMeasure<Scalar>& m) {
  const Eigen::Index n = m.size();
  if (n < 2) throw Error(errc::parameter, "need at least 2 atoms");
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      sum += (m.points.row(i) - m.points.row(j)).norm();
  return sum / (Scalar(n) * Scalar(n - 1) / Scalar(2));
}

// Bandwidth choice: Gibbs factor exp(-d^2/eps) is a Gaussian with std sqrt(eps/2);
// pick eps so that std equals one third of the mean pairwise distance.
template <typename Scalar>
Scalar epsilon_heuristic(const DiscreteMeasure<Scalar>& m) {
  const Scalar dbar = mean_pairwise_distance(m);
  const Scalar eps = Scalar(2) * (dbar / Scalar(3)) * (dbar / Scalar(3));
  if (!(eps > Scalar(0)))
    throw Error(errc::degenerate_epsilon, "mean pairwise distance is zero");
  return eps;
}

// KL(a,b) = sum a.log(a/b) + sum b - sum a, with 0 log 0 = 0 and +inf when a charges
// an index where b vanishes.
template <typename DA, typename DB>
typename DA::Scalar kl_divergence(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(errc::dimension_mismatch, "KL shapes differ");
  Scalar acc = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const Scalar ai = a(i, j), bi = b(i, j);
      if (ai > Scalar(0)) {
        if (!(bi > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
        acc += ai * std::log(ai / bi);
      }
    }
  return acc + b.sum() - a.sum();
}

template <typename Scalar>
Scalar kl_divergence(const DiscreteMeasure<Scalar>& a, const DiscreteMeasure<Scalar>& b) {
  return kl_divergence(a.weights, b.weights);
}

} // namespace otseg
