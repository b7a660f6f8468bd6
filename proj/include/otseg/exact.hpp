#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "otseg/plan.hpp"

namespace otseg {

// Exact transportation LP via the network simplex on the dense bipartite graph.
// Basis is a spanning tree over m supply + n demand nodes; Bland's rule (lexicographic
// entering arc, lowest-index leaving arc) prevents cycling under degeneracy.
template <typename Scalar>
TransportPlan<Scalar> solve_exact(const DiscreteMeasure<Scalar>& mu,
                                  const DiscreteMeasure<Scalar>& nu,
                                  const CostMatrix<Scalar>& c) {
  const Eigen::Index m = mu.size(), n = nu.size();
  if (c.entries.rows() != m || c.entries.cols() != n)
    throw Error(errc::dimension_mismatch, "cost matrix shape does not match measures");
  if ((mu.weights.array() <= Scalar(0)).any() || (nu.weights.array() <= Scalar(0)).any())
    throw Error(errc::zero_weight, "zero-weight atom: mask before solving");
  if (std::abs(mu.total_mass() - nu.total_mass()) > Scalar(1e-9))
    throw Error(errc::mass_mismatch, "exact solver requires equal total masses");

  struct Arc {
    Eigen::Index r, col;
    Scalar flow;
  };
  std::vector<Arc> basis;
  basis.reserve(static_cast<size_t>(m + n - 1));
  Eigen::MatrixXi basic_id = Eigen::MatrixXi::Constant(m, n, -1);

  // Northwest-corner start: advances one index per placed arc, so the basis has
  // exactly m+n-1 arcs (with zero flows on degenerate ties).
  {
    Eigen::Vector<Scalar, Eigen::Dynamic> a = mu.weights, b = nu.weights;
    Eigen::Index i = 0, j = 0;
    while (true) {
      const Scalar x = std::min(a[i], b[j]);
      basic_id(i, j) = static_cast<int>(basis.size());
      basis.push_back({i, j, x});
      a[i] -= x;
      b[j] -= x;
      if (i == m - 1 && j == n - 1) break;
      if (j == n - 1) ++i;
      else if (i == m - 1) ++j;
      else if (a[i] <= b[j]) ++i;
      else ++j;
    }
  }

  const Eigen::Index nodes = m + n; // rows 0..m-1, columns m..m+n-1
  std::vector<Eigen::Index> parent(nodes), depth(nodes), parent_arc(nodes), order(nodes);
  std::vector<std::vector<Eigen::Index>> adj(nodes);
  Eigen::Vector<Scalar, Eigen::Dynamic> u(m), v(n);

  auto rebuild_tree = [&]() {
    for (auto& lst : adj) lst.clear();
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(basis.size()); ++k) {
      adj[basis[static_cast<size_t>(k)].r].push_back(k);
      adj[m + basis[static_cast<size_t>(k)].col].push_back(k);
    }
    // BFS from row node 0: parents, depths, and dual potentials u_i + v_j = c_ij.
    std::fill(parent.begin(), parent.end(), Eigen::Index(-2));
    parent[0] = -1;
    depth[0] = 0;
    parent_arc[0] = -1;
    u[0] = Scalar(0);
    Eigen::Index head = 0, tail = 0;
    order[tail++] = 0;
    while (head < tail) {
      const Eigen::Index x = order[head++];
      for (Eigen::Index k : adj[x]) {
        const Arc& arc = basis[static_cast<size_t>(k)];
        const Eigen::Index y = (x == arc.r) ? m + arc.col : arc.r;
        if (parent[y] != Eigen::Index(-2)) continue;
        parent[y] = x;
        parent_arc[y] = k;
        depth[y] = depth[x] + 1;
        if (y >= m) v[y - m] = c.entries(arc.r, arc.col) - u[arc.r];
        else u[y] = c.entries(arc.r, arc.col) - v[arc.col];
        order[tail++] = y;
      }
    }
    if (tail != nodes) throw Error(errc::solver_failure, "basis lost tree structure");
  };

  const Scalar pivot_tol =
      Scalar(1e-12) * std::max(Scalar(1), c.entries.cwiseAbs().maxCoeff());
  const Eigen::Index max_pivots = 64 * nodes * std::max<Eigen::Index>(m, n) + 1024;
  std::vector<Eigen::Index> cycle; // arc ids, alternating +,-,+,... from the entering arc
  bool optimal = false;

  for (Eigen::Index pivot = 0; pivot < max_pivots; ++pivot) {
    rebuild_tree();

    Eigen::Index er = -1, ec = -1;
    for (Eigen::Index i = 0; i < m && er < 0; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (basic_id(i, j) >= 0) continue;
        if (c.entries(i, j) - u[i] - v[j] < -pivot_tol) {
          er = i;
          ec = j;
          break;
        }
      }
    if (er < 0) {
      optimal = true;
      break;
    }

    // Unique basis cycle closed by the entering arc: climb to the common ancestor.
    cycle.clear();
    std::vector<Eigen::Index> side_j, side_i;
    Eigen::Index x = m + ec, y = er;
    while (depth[x] > depth[y]) {
      side_j.push_back(parent_arc[x]);
      x = parent[x];
    }
    while (depth[y] > depth[x]) {
      side_i.push_back(parent_arc[y]);
      y = parent[y];
    }
    while (x != y) {
      side_j.push_back(parent_arc[x]);
      x = parent[x];
      side_i.push_back(parent_arc[y]);
      y = parent[y];
    }
    for (Eigen::Index k : side_j) cycle.push_back(k);
    for (auto it = side_i.rbegin(); it != side_i.rend(); ++it) cycle.push_back(*it);

    // Entering arc takes +t; tree arcs alternate starting with - right after it.
    Scalar t = std::numeric_limits<Scalar>::max();
    Eigen::Index leave_pos = -1;
    std::int64_t leave_key = 0;
    for (size_t p = 0; p < cycle.size(); p += 2) {
      const Arc& arc = basis[static_cast<size_t>(cycle[p])];
      const std::int64_t key = static_cast<std::int64_t>(arc.r) * n + arc.col;
      if (arc.flow < t || (arc.flow == t && key < leave_key)) {
        t = arc.flow;
        leave_pos = static_cast<Eigen::Index>(p);
        leave_key = key;
      }
    }
    if (leave_pos < 0) throw Error(errc::solver_failure, "cycle without a leaving arc");

    for (size_t p = 0; p < cycle.size(); ++p) {
      Arc& arc = basis[static_cast<size_t>(cycle[p])];
      arc.flow += (p % 2 == 0) ? -t : t;
    }
    Arc& leaving = basis[static_cast<size_t>(cycle[static_cast<size_t>(leave_pos)])];
    basic_id(leaving.r, leaving.col) = -1;
    basic_id(er, ec) = static_cast<int>(cycle[static_cast<size_t>(leave_pos)]);
    leaving = {er, ec, t};
  }
  if (!optimal) throw Error(errc::solver_failure, "pivot safeguard exceeded");

  TransportPlan<Scalar> plan;
  plan.mu_ref = mu;
  plan.nu_ref = nu;
  plan.epsilon = Scalar(0);
  plan.matrix.setZero(m, n);
  for (const Arc& arc : basis) plan.matrix(arc.r, arc.col) = std::max(arc.flow, Scalar(0));
  plan.transport_cost = plan.matrix.cwiseProduct(c.entries).sum();
  plan.iterations = 0;
  plan.converged = true;
  return plan;
}

} // namespace otseg
