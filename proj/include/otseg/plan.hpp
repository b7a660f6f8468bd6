#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>

#include "otseg/measures.hpp"

namespace otseg {

// Coupling matrix plus solver metadata. epsilon == 0 marks an exact plan (no duals);
// kappa present marks an unbalanced plan whose marginals may differ from the inputs.
template <typename Scalar = double>
struct TransportPlan {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;

  Matrix matrix; // m x n, nonnegative
  DiscreteMeasure<Scalar> mu_ref, nu_ref;
  Scalar epsilon{0};
  std::optional<Scalar> kappa;
  std::optional<Vector> dual_phi, dual_psi;
  Eigen::Index iterations{0};
  bool converged{true};
  Scalar transport_cost{0};

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
};

// Row/column sums as measures on the plan's support points.
template <typename Scalar>
std::pair<DiscreteMeasure<Scalar>, DiscreteMeasure<Scalar>>
plan_marginals(const TransportPlan<Scalar>& p) {
  DiscreteMeasure<Scalar> row{p.mu_ref.points, p.matrix.rowwise().sum(), p.mu_ref.index_map};
  DiscreteMeasure<Scalar> col{p.nu_ref.points, p.matrix.colwise().sum().transpose(),
                              p.nu_ref.index_map};
  return {std::move(row), std::move(col)};
}

} // namespace otseg
