#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "otseg/exact.hpp"
#include "otseg/kernels.hpp"
#include "otseg/sinkhorn.hpp"

using namespace otseg;

namespace {

// strictly increasing 1-D supports with a two-bump weight profile
DiscreteMeasure<double> bumpy_line(Eigen::Index n, double shift) {
  Eigen::MatrixXd pts(n, 1);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) + shift;
    pts(i, 0) = x;
    const double xi = static_cast<double>(i);
    w[i] = std::exp(-(xi - 4) * (xi - 4) / 4.0) + std::exp(-(xi - 10) * (xi - 10) / 4.0);
  }
  return normalize(make_measure<double>(pts, w));
}

TransportPlan<double> fake_plan(const DiscreteMeasure<double>& mu,
                                const DiscreteMeasure<double>& nu, Eigen::MatrixXd pi,
                                double eps) {
  TransportPlan<double> plan;
  plan.mu_ref = mu;
  plan.nu_ref = nu;
  plan.matrix = std::move(pi);
  plan.epsilon = eps;
  return plan;
}

} // namespace

TEST_CASE("ball blur enumerates integer offsets inside the radius") {
  const auto narrow = make_blur<double>({BlurShape::ball, 0.5, 1e-4});
  REQUIRE(narrow.size() == 1);
  CHECK(narrow[0].first == 0);
  CHECK(narrow[0].second == doctest::Approx(1.0));

  const auto unit = make_blur<double>({BlurShape::ball, 1.0, 1e-4});
  REQUIRE(unit.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(unit[static_cast<size_t>(k)].first == k - 1);
    CHECK(unit[static_cast<size_t>(k)].second == doctest::Approx(1.0 / 3.0));
  }

  const auto wide = make_blur<double>({BlurShape::ball, 2.7, 1e-4});
  CHECK(wide.size() == 5);
}

TEST_CASE("gaussian blur is symmetric, normalized, and truncated at the stated tail") {
  const auto blur = make_blur<double>({BlurShape::gaussian, 1.0, 1e-4});
  REQUIRE(blur.size() == 9); // offsets -4..4
  CHECK(blur.front().first == -4);
  CHECK(blur.back().first == 4);
  double total = 0;
  for (const auto& [k, w] : blur) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  // center weight approaches 1/sqrt(2 pi) as the tails vanish
  CHECK(blur[4].second == doctest::Approx(0.3989422).epsilon(1e-4));
  for (size_t p = 0; p < blur.size(); ++p)
    CHECK(blur[p].second == doctest::Approx(blur[blur.size() - 1 - p].second));
  CHECK(blur[5].second / blur[4].second == doctest::Approx(std::exp(-0.5)));

  CHECK_THROWS_AS(make_blur<double>({BlurShape::gaussian, 0.0, 1e-4}), Error);
  CHECK_THROWS_AS(make_blur<double>({BlurShape::ball, -1.0, 1e-4}), Error);
}

TEST_CASE("product coupling yields the all-ones kernel") {
  const auto mu = testutil::random_measure(5, 2, 1);
  const auto nu = testutil::random_measure(4, 2, 2);
  const auto plan = fake_plan(mu, nu, mu.weights * nu.weights.transpose(), 0.5);
  const auto k = kernel_from_regularized(plan);
  CHECK((k.matrix.array() - 1.0).abs().maxCoeff() <= 1e-14);
  const auto [r1, r2] = kernel_residuals(k);
  CHECK(r1 <= 1e-14);
  CHECK(r2 <= 1e-14);
}

TEST_CASE("diagonal coupling of uniform measures doubles along the diagonal") {
  Eigen::MatrixXd pts(2, 1);
  pts << 0, 1;
  const auto m = make_measure<double>(pts, Eigen::Vector2d(0.5, 0.5));
  Eigen::MatrixXd pi = Eigen::Matrix2d::Zero();
  pi(0, 0) = pi(1, 1) = 0.5;
  const auto k = kernel_from_regularized(fake_plan(m, m, pi, 0.1));
  CHECK(k.matrix(0, 0) == doctest::Approx(2.0));
  CHECK(k.matrix(1, 1) == doctest::Approx(2.0));
  CHECK(k.matrix(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("regularized kernel guards") {
  const auto mu = testutil::random_measure(3, 1, 7);
  auto plan = fake_plan(mu, mu, Eigen::MatrixXd::Ones(3, 3) / 9.0, 0.0);
  CHECK_THROWS_AS(kernel_from_regularized(plan), Error); // exact plan, not regularized
  plan.epsilon = 0.2;
  plan.kappa = 1.0;
  CHECK_THROWS_AS(kernel_from_regularized(plan), Error); // unbalanced plan
  plan.kappa.reset();
  plan.mu_ref.weights[0] = 0.0;
  CHECK_THROWS_AS(kernel_from_regularized(plan), Error);
}

TEST_CASE("regularized kernel meets both stochasticity identities on solver output") {
  for (std::uint64_t inst = 0; inst < 8; ++inst) {
    const auto mu = testutil::random_measure(6 + inst % 3, 2, 200 + inst);
    const auto nu = testutil::random_measure(5 + inst % 4, 2, 300 + inst);
    SinkhornOptions<double> opt;
    opt.tol = 1e-12;
    const auto plan = solve_sinkhorn(mu, nu, cost_matrix(mu, nu), 0.3, opt);
    REQUIRE(plan.converged);
    const auto [r1, r2] = kernel_residuals(kernel_from_regularized(plan));
    CHECK(r1 <= 1e-8);
    CHECK(r2 <= 1e-8);
  }
}

TEST_CASE("unbalanced kernel normalizes by its own marginals exactly") {
  const auto mu = testutil::random_measure(6, 2, 800);
  const auto nu = testutil::random_measure(5, 2, 801, 1.4);
  const auto plan = solve_unbalanced(mu, nu, cost_matrix(mu, nu), 0.4, 1.2);
  REQUIRE(plan.converged);
  const auto k = kernel_from_unbalanced(plan);
  const auto [r1, r2] = kernel_residuals(k);
  CHECK(r1 <= 1e-13);
  CHECK(r2 <= 1e-13);
  // reference marginals are the plan's own row/column sums, not the inputs
  CHECK((k.mu_ref.weights - plan.matrix.rowwise().sum()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((k.nu_ref.weights - plan.matrix.colwise().sum().transpose()).cwiseAbs().maxCoeff() <=
        1e-15);
}

TEST_CASE("one-atom unbalanced kernel is the reciprocal mass") {
  Eigen::MatrixXd p(1, 1);
  p << 0;
  const auto mu = make_measure<double>(p, Eigen::VectorXd::Ones(1));
  auto plan = fake_plan(mu, mu, Eigen::MatrixXd::Constant(1, 1, 0.37), 0.2);
  plan.kappa = 1.0;
  const auto k = kernel_from_unbalanced(plan);
  CHECK(k.matrix(0, 0) == doctest::Approx(1.0 / 0.37));
  CHECK(k.mu_ref.weights[0] == doctest::Approx(0.37));
}

TEST_CASE("unbalanced kernel rejects plans with an empty row or column") {
  const auto mu = testutil::random_measure(3, 1, 9);
  Eigen::MatrixXd pi = Eigen::MatrixXd::Ones(3, 3) / 9.0;
  pi.row(1).setZero();
  auto plan = fake_plan(mu, mu, pi, 0.2);
  plan.kappa = 0.5;
  CHECK_THROWS_AS(kernel_from_unbalanced(plan), Error);
}

TEST_CASE("kappa to infinity matches the balanced regularized kernel") {
  const auto mu = testutil::random_measure(5, 2, 555);
  const auto nu = testutil::random_measure(5, 2, 556);
  const auto c = cost_matrix(mu, nu);
  SinkhornOptions<double> opt;
  opt.tol = 1e-13;
  const auto kb = kernel_from_regularized(solve_sinkhorn(mu, nu, c, 0.5, opt));
  const auto ku = kernel_from_unbalanced(solve_unbalanced(mu, nu, c, 0.5, 1e6, opt));
  CHECK((kb.matrix - ku.matrix).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("identity blur reduces the smoothed kernel to the plain density ratio") {
  const auto mu = bumpy_line(8, 0.0);
  const auto nu = bumpy_line(8, 0.3);
  const auto plan = solve_exact(mu, nu, cost_matrix(mu, nu));
  const auto k = smooth_plan_kernel(plan, {BlurShape::ball, 0.9, 1e-4});
  const Eigen::MatrixXd ref =
      (plan.matrix.array().colwise() / mu.weights.array()).rowwise() /
      nu.weights.transpose().array();
  CHECK((k.matrix - ref).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((k.nu_ref.weights - nu.weights).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("smoothed kernel satisfies both identities to machine precision") {
  const auto mu = bumpy_line(15, 0.0);
  const auto nu = bumpy_line(15, 0.3);
  const auto plan = solve_exact(mu, nu, cost_matrix(mu, nu));
  for (const BlurSpec spec : {BlurSpec{BlurShape::gaussian, 1.0, 1e-4},
                              BlurSpec{BlurShape::gaussian, 2.5, 1e-4},
                              BlurSpec{BlurShape::ball, 2.0, 1e-4}}) {
    const auto k = smooth_plan_kernel(plan, spec);
    const auto [r1, r2] = kernel_residuals(k);
    CHECK(r1 <= 1e-12);
    CHECK(r2 <= 1e-12);
    CHECK(k.nu_ref.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k.matrix.minCoeff() >= 0.0);
  }
}

TEST_CASE("smoothed and regularized kernels agree on band structure at matched widths") {
  // gaussian blur of width w in index space corresponds to epsilon = 2 w^2 on the
  // squared index distance
  const auto mu = bumpy_line(15, 0.0);
  const auto nu = bumpy_line(15, 0.3);
  const auto c = cost_matrix(mu, nu);
  const auto ks = smooth_plan_kernel(solve_exact(mu, nu, c), {BlurShape::gaussian, 1.0, 1e-4});
  SinkhornOptions<double> opt;
  opt.tol = 1e-12;
  const auto kr = kernel_from_regularized(solve_sinkhorn(mu, nu, c, 2.0, opt));
  for (Eigen::Index i = 0; i < 15; ++i) {
    Eigen::Index js, jr;
    ks.matrix.row(i).maxCoeff(&js);
    kr.matrix.row(i).maxCoeff(&jr);
    CHECK(std::abs(static_cast<long>(js - jr)) <= 1);
  }
}

TEST_CASE("smoothed kernel input guards") {
  const auto mu = bumpy_line(6, 0.0);
  auto plan = solve_exact(mu, mu, cost_matrix(mu, mu));
  auto reg = plan;
  reg.epsilon = 0.1;
  CHECK_THROWS_AS(smooth_plan_kernel(reg, {}), Error); // regularized input

  auto flat = plan;
  flat.mu_ref.points(2, 0) = flat.mu_ref.points(1, 0); // not strictly increasing
  CHECK_THROWS_AS(smooth_plan_kernel(flat, {}), Error);

  const auto planar = testutil::random_measure(4, 2, 5);
  auto plan2d = fake_plan(planar, planar, Eigen::MatrixXd::Ones(4, 4) / 16.0, 0.0);
  CHECK_THROWS_AS(smooth_plan_kernel(plan2d, {}), Error);

  auto holed = plan;
  holed.mu_ref.weights[0] = 0.0;
  CHECK_THROWS_AS(smooth_plan_kernel(holed, {}), Error);
}
