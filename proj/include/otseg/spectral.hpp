#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <utility>
#include <vector>

#include "otseg/kernels.hpp"
#include "otseg/plan.hpp"
#include "otseg/rng.hpp"
#include "otseg/sinkhorn.hpp"

namespace otseg {

// Top-K singular triplets of the normalized plan matrix plus the derived partition
// vectors f_k = u_k / sqrt(mu), g_k = v_k / sqrt(nu) (filled by attach_partition_vectors).
template <typename Scalar = double>
struct SpectralDecomposition {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;

  Vector singular_values; // descending
  Matrix U, V;            // orthonormal columns
  Matrix F, G;            // partition vectors, same column layout as U/V
  bool degenerate_gap{false}; // leading value not isolated: sigma1 - sigma2 < 1e-10
};

struct SvdOptions {
  std::uint64_t seed = 0;
  // Instances at or below this size go through a dense SVD; larger ones through
  // seeded Lanczos bidiagonalization. Tests lower it to force the iterative path.
  Eigen::Index dense_threshold = 2000;
  double tol = 1e-10; // Lanczos residual tolerance, relative to sigma1
};

namespace detail {

// Largest-|entry| coordinate of each left vector made positive (first index on ties),
// flipping u_k and v_k together so the product U S V^T is untouched.
template <typename Scalar>
void fix_signs(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& u,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& v) {
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < u.rows(); ++i)
      if (std::abs(u(i, k)) > std::abs(u(best, k))) best = i;
    if (u(best, k) < Scalar(0)) {
      u.col(k) = -u.col(k);
      v.col(k) = -v.col(k);
    }
  }
}

template <typename Scalar>
Eigen::Vector<Scalar, Eigen::Dynamic> seeded_unit_vector(Eigen::Index n, std::uint64_t seed,
                                                         std::uint64_t stream) {
  Eigen::Vector<Scalar, Eigen::Dynamic> v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v[i] = Scalar(2) * Scalar(to_unit(counter_hash(seed, stream, static_cast<std::uint64_t>(i), 0))) -
           Scalar(1);
  const Scalar norm = v.norm();
  if (norm > Scalar(0)) v /= norm;
  else v[0] = Scalar(1);
  return v;
}

// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization (CGS twice).
// Expands the Krylov space until the top-K Ritz residuals ||Q v - s u|| pass tol.
template <typename Scalar>
void lanczos_svd(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q, Eigen::Index K,
                 const SvdOptions& opt, Eigen::Vector<Scalar, Eigen::Dynamic>& sigma,
                 Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& u_out,
                 Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& v_out) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;
  const Eigen::Index m = q.rows(), n = q.cols();
  const Eigen::Index r = std::min(m, n);

  Matrix vbase(n, r), ubase(m, r);
  std::vector<Scalar> alpha, beta; // B diagonal / superdiagonal
  std::uint64_t replenish = 1;

  auto reorth = [](const Matrix& basis, Eigen::Index cols, Vector& w) {
    if (cols == 0) return;
    auto b = basis.leftCols(cols);
    w.noalias() -= b * (b.transpose() * w).eval();
    w.noalias() -= b * (b.transpose() * w).eval();
  };
  // Replace a vanished direction with a random one orthogonal to the current basis.
  auto replenish_dir = [&](const Matrix& basis, Eigen::Index cols, Eigen::Index dim, Vector& w) {
    do {
      w = seeded_unit_vector<Scalar>(dim, opt.seed, replenish++);
      reorth(basis, cols, w);
    } while (w.norm() < Scalar(0.5)); // random vector nearly inside the span: redraw
    w /= w.norm();
  };

  Vector v = seeded_unit_vector<Scalar>(n, opt.seed, 0);
  Vector w = q * v;
  Scalar a = w.norm();
  const Scalar breakdown = Scalar(1e-14) * std::max(Scalar(1), q.cwiseAbs().maxCoeff());
  if (a > breakdown) w /= a;
  else {
    a = Scalar(0);
    replenish_dir(ubase, 0, m, w);
  }
  vbase.col(0) = v;
  ubase.col(0) = w;
  alpha.push_back(a);

  Eigen::JacobiSVD<Matrix> bsvd;
  Matrix b;
  for (Eigen::Index k = 1; k <= r; ++k) {
    const Eigen::Index kc = k; // current basis size
    // converged?
    b.setZero(kc, kc);
    for (Eigen::Index i = 0; i < kc; ++i) {
      b(i, i) = alpha[static_cast<size_t>(i)];
      if (i + 1 < kc) b(i, i + 1) = beta[static_cast<size_t>(i)];
    }
    if (kc >= std::min<Eigen::Index>(K, r)) {
      bsvd.compute(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Eigen::Index have = std::min<Eigen::Index>(K, kc);
      bool ok = true;
      const Scalar s1 = bsvd.singularValues()[0];
      for (Eigen::Index i = 0; i < have && ok; ++i) {
        const Vector rv = vbase.leftCols(kc) * bsvd.matrixV().col(i);
        const Vector ru = ubase.leftCols(kc) * bsvd.matrixU().col(i);
        const Scalar s = bsvd.singularValues()[i];
        // the forward relation holds by construction, so the adjoint residual is the
        // one that actually measures convergence; keep both for fp honesty
        const Scalar res = std::max((q * rv - s * ru).norm(),
                                    (q.transpose() * ru - s * rv).norm());
        ok = res <= Scalar(opt.tol) * std::max(s1, Scalar(1e-30));
      }
      if ((ok && kc >= K) || kc == r) {
        sigma.resize(K);
        u_out.resize(m, K);
        v_out.resize(n, K);
        for (Eigen::Index i = 0; i < K; ++i) {
          if (i < kc) {
            sigma[i] = bsvd.singularValues()[i];
            u_out.col(i) = ubase.leftCols(kc) * bsvd.matrixU().col(i);
            v_out.col(i) = vbase.leftCols(kc) * bsvd.matrixV().col(i);
          }
        }
        return;
      }
    }

    // extend: new right direction
    Vector vn = q.transpose() * ubase.col(k - 1) - alpha[static_cast<size_t>(k - 1)] * vbase.col(k - 1);
    reorth(vbase, k, vn);
    Scalar bk = vn.norm();
    if (bk > breakdown) vn /= bk;
    else {
      bk = Scalar(0);
      replenish_dir(vbase, k, n, vn);
    }
    vbase.col(k) = vn;
    beta.push_back(bk);
    // new left direction
    Vector un = q * vn - bk * ubase.col(k - 1);
    reorth(ubase, k, un);
    Scalar ak = un.norm();
    if (ak > breakdown) un /= ak;
    else {
      ak = Scalar(0);
      replenish_dir(ubase, k, m, un);
    }
    ubase.col(k) = un;
    alpha.push_back(ak);
  }
  throw Error(errc::solver_failure, "bidiagonalization failed to converge");
}

} // namespace detail

// Top-K singular triplets, descending, with the deterministic sign convention.
template <typename Scalar>
SpectralDecomposition<Scalar>
truncated_svd(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q, Eigen::Index K,
              const SvdOptions& opt = {}) {
  using Matrix = typename SpectralDecomposition<Scalar>::Matrix;
  const Eigen::Index r = std::min(q.rows(), q.cols());
  if (K < 1 || K > r) throw Error(errc::parameter, "triplet count out of range");

  SpectralDecomposition<Scalar> dec;
  if (r <= opt.dense_threshold) {
    Eigen::BDCSVD<Matrix> svd(q, Eigen::ComputeThinU | Eigen::ComputeThinV);
    dec.singular_values = svd.singularValues().head(K);
    dec.U = svd.matrixU().leftCols(K);
    dec.V = svd.matrixV().leftCols(K);
  } else {
    detail::lanczos_svd(q, K, opt, dec.singular_values, dec.U, dec.V);
  }
  detail::fix_signs(dec.U, dec.V);
  if (K >= 2) dec.degenerate_gap = dec.singular_values[0] - dec.singular_values[1] < Scalar(1e-10);
  return dec;
}

// Q = diag(mu)^(-1/2) plan diag(nu)^(-1/2); unbalanced plans use their own marginals.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
normalized_plan_matrix(const TransportPlan<Scalar>& plan) {
  using Vector = typename TransportPlan<Scalar>::Vector;
  Vector mu_w, nu_w;
  if (plan.kappa) {
    auto [mt, nt] = plan_marginals(plan);
    if ((mt.weights.array() <= Scalar(0)).any() || (nt.weights.array() <= Scalar(0)).any())
      throw Error(errc::degenerate_plan, "plan has a zero row or column sum");
    mu_w = std::move(mt.weights);
    nu_w = std::move(nt.weights);
  } else {
    if ((plan.mu_ref.weights.array() <= Scalar(0)).any() ||
        (plan.nu_ref.weights.array() <= Scalar(0)).any())
      throw Error(errc::zero_weight, "zero reference weight");
    mu_w = plan.mu_ref.weights;
    nu_w = plan.nu_ref.weights;
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> q =
      plan.matrix.array().colwise() / mu_w.array().sqrt();
  q = q.array().rowwise() / nu_w.transpose().array().sqrt();
  return q;
}

// Kernel form: Q = diag(mu)^(1/2) K diag(nu)^(1/2) (the kernel already divides by both).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
normalized_plan_matrix(const TransitionKernel<Scalar>& kernel) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> q =
      kernel.matrix.array().colwise() * kernel.mu_ref.weights.array().sqrt();
  q = q.array().rowwise() * kernel.nu_ref.weights.transpose().array().sqrt();
  return q;
}

template <typename Scalar>
void attach_partition_vectors(SpectralDecomposition<Scalar>& dec,
                              const Eigen::Vector<Scalar, Eigen::Dynamic>& mu_w,
                              const Eigen::Vector<Scalar, Eigen::Dynamic>& nu_w) {
  dec.F = dec.U.array().colwise() / mu_w.array().sqrt();
  dec.G = dec.V.array().colwise() / nu_w.array().sqrt();
}

// End-to-end segmentation: solve (balanced or unbalanced by kappa presence), normalize,
// decompose, and attach partition vectors. The solved plan is exposed through plan_out.
template <typename Scalar>
SpectralDecomposition<Scalar>
segment(const DiscreteMeasure<Scalar>& mu, const DiscreteMeasure<Scalar>& nu,
        const CostMatrix<Scalar>& c, Scalar epsilon, std::optional<Scalar> kappa, Eigen::Index K,
        const SinkhornOptions<Scalar>& solver_opt = {}, const SvdOptions& svd_opt = {},
        TransportPlan<Scalar>* plan_out = nullptr) {
  TransportPlan<Scalar> plan = kappa ? solve_unbalanced(mu, nu, c, epsilon, *kappa, solver_opt)
                                     : solve_sinkhorn(mu, nu, c, epsilon, solver_opt);
  auto q = normalized_plan_matrix(plan);
  auto dec = truncated_svd(q, K, svd_opt);
  if (plan.kappa) {
    auto [mt, nt] = plan_marginals(plan);
    attach_partition_vectors(dec, mt.weights, nt.weights);
  } else {
    attach_partition_vectors(dec, mu.weights, nu.weights);
  }
  if (plan_out) *plan_out = std::move(plan);
  return dec;
}

// Hard split by sign: 1 where f >= 0, else 0.
template <typename Scalar>
Eigen::ArrayXi threshold_partition(const Eigen::Vector<Scalar, Eigen::Dynamic>& f) {
  return (f.array() >= Scalar(0)).template cast<int>();
}

// Rows (f_2 .. f_K)_i and (g_2 .. g_K)_i: the leading pair carries no information.
template <typename Scalar>
std::pair<typename SpectralDecomposition<Scalar>::Matrix,
          typename SpectralDecomposition<Scalar>::Matrix>
embed(const SpectralDecomposition<Scalar>& dec, Eigen::Index K) {
  if (K < 2 || K > dec.F.cols())
    throw Error(errc::parameter, "embedding needs 2 <= K <= computed triplets");
  return {dec.F.middleCols(1, K - 1).eval(), dec.G.middleCols(1, K - 1).eval()};
}

// Streaming fold of the per-step normalized matrices, for chains too long to keep
// every plan in memory. push() consumes plans in time order.
template <typename Scalar = double>
class ChainAccumulator {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ChainAccumulator(Scalar tol = Scalar(1e-6)) : tol_(tol) {}

  void push(const TransportPlan<Scalar>& plan) {
    if (steps_ > 0) {
      if (plan.rows() != prev_nu_.size() ||
          (plan.mu_ref.weights - prev_nu_).template lpNorm<Eigen::Infinity>() > tol_)
        throw Error(errc::chain_mismatch, "plan marginals disagree with the chain");
      acc_ = (acc_ * normalized_plan_matrix(plan)).eval();
    } else {
      acc_ = normalized_plan_matrix(plan);
    }
    prev_nu_ = plan.nu_ref.weights;
    ++steps_;
  }

  Eigen::Index steps() const { return steps_; }

  const Matrix& matrix() const {
    if (steps_ == 0) throw Error(errc::parameter, "empty plan chain");
    return acc_;
  }

 private:
  Scalar tol_;
  Matrix acc_;
  Eigen::Vector<Scalar, Eigen::Dynamic> prev_nu_;
  Eigen::Index steps_ = 0;
};

// Product of per-step normalized matrices in time order. measures[t] must match the
// marginals plan t was solved against.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
concat_normalized(const std::vector<TransportPlan<Scalar>>& plans,
                  const std::vector<DiscreteMeasure<Scalar>>& measures, Scalar tol = Scalar(1e-6)) {
  if (plans.empty()) throw Error(errc::parameter, "empty plan chain");
  if (measures.size() != plans.size() + 1)
    throw Error(errc::chain_mismatch, "need one measure per chain endpoint");
  for (size_t t = 0; t < plans.size(); ++t) {
    const auto& p = plans[t];
    if (p.rows() != measures[t].size() || p.cols() != measures[t + 1].size())
      throw Error(errc::chain_mismatch, "plan shape breaks the chain");
    if ((p.mu_ref.weights - measures[t].weights).template lpNorm<Eigen::Infinity>() > tol ||
        (p.nu_ref.weights - measures[t + 1].weights).template lpNorm<Eigen::Infinity>() > tol)
      throw Error(errc::chain_mismatch, "plan marginals disagree with the chain measures");
  }
  auto acc = normalized_plan_matrix(plans[0]);
  for (size_t t = 1; t < plans.size(); ++t)
    acc = (acc * normalized_plan_matrix(plans[t])).eval();
  return acc;
}

} // namespace otseg
