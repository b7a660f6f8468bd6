#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "otseg/errors.hpp"
#include "otseg/rng.hpp"

namespace otseg {

template <typename Scalar = double>
struct ClusterResult {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix membership;          // n x k, rows sum to 1
  Eigen::ArrayXi hard_labels; // argmax per row, first index on ties
  Matrix centers;             // k x d
  // Cluster indices are shared across time slices when the clustered rows stack both
  // slices of one embedding, so the correspondence is the identity by construction.
  std::vector<int> correspondence;
  Eigen::Index iterations{0};
};

struct FcmOptions {
  double fuzzifier = 2.0;
  std::uint64_t seed = 0;
  double tol = 1e-8; // max center movement
  Eigen::Index max_iter = 300;
};

// Standard fuzzy c-means with a k-means++-style seeded start.
template <typename Scalar>
ClusterResult<Scalar> fuzzy_cmeans(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x, Eigen::Index k,
    const FcmOptions& opt = {}) {
  using Matrix = typename ClusterResult<Scalar>::Matrix;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;
  const Eigen::Index n = x.rows(), d = x.cols();
  if (k < 1) throw Error(errc::parameter, "need at least one cluster");
  if (!(opt.fuzzifier > 1)) throw Error(errc::parameter, "fuzzifier must exceed 1");
  if (n == 0) throw Error(errc::empty_input, "no points to cluster");

  {
    Eigen::Index distinct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      bool fresh = true;
      for (Eigen::Index j = 0; j < i && fresh; ++j)
        if ((x.row(i) - x.row(j)).norm() == Scalar(0)) fresh = false;
      if (fresh && ++distinct >= k) break;
    }
    if (distinct < k)
      throw Error(errc::degenerate_cluster, "more clusters than distinct points");
  }

  // k-means++ seeding: first center uniform, then proportional to squared distance.
  Matrix centers(k, d);
  Vector d2 = Vector::Constant(n, std::numeric_limits<Scalar>::max());
  centers.row(0) = x.row(static_cast<Eigen::Index>(bounded(counter_hash(opt.seed, 0, 0, 0),
                                                           static_cast<std::uint64_t>(n))));
  for (Eigen::Index c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (x.row(i) - centers.row(c - 1)).squaredNorm());
    const Scalar total = d2.sum();
    Eigen::Index pick = 0;
    if (total > Scalar(0)) {
      const Scalar u = Scalar(to_unit(counter_hash(opt.seed, 0, static_cast<std::uint64_t>(c), 0))) * total;
      Scalar acc = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= u) {
          pick = i;
          break;
        }
      }
    } else {
      // all points coincide with chosen centers; distinct-point check makes this
      // unreachable, but fall back deterministically anyway
      pick = static_cast<Eigen::Index>(bounded(counter_hash(opt.seed, 1, static_cast<std::uint64_t>(c), 0),
                                               static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
  }

  const Scalar expo = Scalar(2) / (Scalar(opt.fuzzifier) - Scalar(1));
  Matrix u(n, k), dist(n, k);
  Eigen::Index it = 0;
  for (; it < opt.max_iter; ++it) {
    for (Eigen::Index c = 0; c < k; ++c)
      dist.col(c) = (x.rowwise() - centers.row(c)).rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index zero_at = -1;
      for (Eigen::Index c = 0; c < k; ++c)
        if (dist(i, c) == Scalar(0)) {
          zero_at = c;
          break;
        }
      if (zero_at >= 0) {
        u.row(i).setZero();
        u(i, zero_at) = Scalar(1);
        continue;
      }
      for (Eigen::Index c = 0; c < k; ++c) {
        Scalar s = 0;
        for (Eigen::Index l = 0; l < k; ++l)
          s += std::pow(dist(i, c) / dist(i, l), expo);
        u(i, c) = Scalar(1) / s;
      }
    }
    Scalar moved = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const Vector w = u.col(c).array().pow(Scalar(opt.fuzzifier)).matrix();
      const Scalar total = w.sum();
      Eigen::RowVector<Scalar, Eigen::Dynamic> fresh =
          (w.transpose() * x) / (total > Scalar(0) ? total : Scalar(1));
      moved = std::max(moved, (fresh - centers.row(c)).norm());
      centers.row(c) = fresh;
    }
    if (moved <= Scalar(opt.tol)) {
      ++it;
      break;
    }
  }

  ClusterResult<Scalar> out;
  out.membership = std::move(u);
  out.centers = std::move(centers);
  out.iterations = it;
  out.hard_labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < k; ++c)
      if (out.membership(i, c) > out.membership(i, best)) best = c;
    out.hard_labels[i] = static_cast<int>(best);
  }
  out.correspondence.resize(static_cast<size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) out.correspondence[static_cast<size_t>(c)] = static_cast<int>(c);
  return out;
}

} // namespace otseg
