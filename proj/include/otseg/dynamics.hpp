#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "otseg/measures.hpp"
#include "otseg/rng.hpp"

namespace otseg {

// Time-indexed particle positions; positions[t] is n x d.
struct TrajectoryEnsemble {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> positions;

  Eigen::Index n_times() const { return static_cast<Eigen::Index>(times.size()); }
  Eigen::Index n_particles() const {
    return positions.empty() ? 0 : positions.front().rows();
  }
};

// ---- double gyre -----------------------------------------------------------------

// Domain [0,2] x [0,1]: the stream function below has zero normal velocity exactly on
// that rectangle's walls.
struct GyreConfig {
  double A = 0.25;
  double alpha = 0.25;
  double omega = 2 * std::numbers::pi;
  double dt = 0.02;
  Eigen::Index steps = 500;
  Eigen::Index nx = 30, ny = 15;
};

inline Eigen::Vector2d double_gyre_velocity(double t, const Eigen::Vector2d& p,
                                            const GyreConfig& cfg = {}) {
  const double pi = std::numbers::pi;
  const double a = cfg.alpha * std::sin(cfg.omega * t);
  const double b = 1 - 2 * a;
  const double x = p[0], y = p[1];
  const double f = a * x * x + b * x;
  const double fx = 2 * a * x + b;
  return {-pi * cfg.A * std::sin(pi * f) * std::cos(pi * y),
          pi * cfg.A * std::cos(pi * f) * std::sin(pi * y) * fx};
}

// One classical Runge-Kutta step for dx/dt = vel(t, x).
template <typename Field, typename Vec>
Vec rk4_step(const Field& vel, double t, const Vec& x, double dt) {
  const Vec k1 = vel(t, x);
  const Vec k2 = vel(t + dt / 2, Vec(x + (dt / 2) * k1));
  const Vec k3 = vel(t + dt / 2, Vec(x + (dt / 2) * k2));
  const Vec k4 = vel(t + dt, Vec(x + dt * k3));
  return x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

// Cell-centered nx x ny grid advected through the gyre; returns steps+1 time slices.
// Cell centers keep every particle strictly inside the domain (the walls are stagnation
// lines of the velocity field in the normal direction).
inline TrajectoryEnsemble integrate_gyre(const GyreConfig& cfg) {
  if (!(cfg.A > 0) || !(cfg.omega > 0)) throw Error(errc::parameter, "A and omega must be positive");
  if (!(cfg.dt > 0)) throw Error(errc::parameter, "dt must be positive");
  if (cfg.steps < 0 || cfg.nx < 1 || cfg.ny < 1) throw Error(errc::parameter, "bad grid/steps");

  const Eigen::Index n = cfg.nx * cfg.ny;
  Eigen::MatrixXd p(n, 2);
  for (Eigen::Index i = 0; i < cfg.nx; ++i)
    for (Eigen::Index j = 0; j < cfg.ny; ++j) {
      p(i * cfg.ny + j, 0) = (static_cast<double>(i) + 0.5) * 2.0 / static_cast<double>(cfg.nx);
      p(i * cfg.ny + j, 1) = (static_cast<double>(j) + 0.5) / static_cast<double>(cfg.ny);
    }

  TrajectoryEnsemble out;
  out.times.reserve(static_cast<size_t>(cfg.steps) + 1);
  out.positions.reserve(static_cast<size_t>(cfg.steps) + 1);
  out.times.push_back(0);
  out.positions.push_back(p);
  auto vel = [&cfg](double t, const Eigen::Vector2d& x) {
    return double_gyre_velocity(t, x, cfg);
  };
  for (Eigen::Index s = 0; s < cfg.steps; ++s) {
    const double t = static_cast<double>(s) * cfg.dt;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2d xi = p.row(i);
      p.row(i) = rk4_step(vel, t, xi, cfg.dt);
    }
    out.times.push_back(t + cfg.dt);
    out.positions.push_back(p);
  }
  return out;
}

// ---- three-well potential --------------------------------------------------------

struct WellsConfig {
  double beta = 2.0;
  double dt = 0.01;
  Eigen::Index steps = 300;       // forward steps with the circular drive
  Eigen::Index n_particles = 1000;
  std::uint64_t seed = 0;
  Eigen::Index equil_steps = 50000; // burn-in steps without the drive
  double noise_scale = 1.0;
};

// W = cos(3 phi) + 10 (r - 1)^2 in polar coordinates.
inline double wells_potential(const Eigen::Vector2d& p) {
  const double r = p.norm();
  const double phi = std::atan2(p[1], p[0]);
  return std::cos(3 * phi) + 10 * (r - 1) * (r - 1);
}

// -grad W, converted from the polar gradient; undefined at the origin.
inline Eigen::Vector2d wells_gradient_force(const Eigen::Vector2d& p) {
  const double r = p.norm();
  if (r == 0) throw Error(errc::singular_point, "force undefined at the origin");
  const double phi = std::atan2(p[1], p[0]);
  const double wr = 20 * (r - 1);          // dW/dr
  const double wphi = -3 * std::sin(3 * phi); // dW/dphi
  const Eigen::Vector2d er(p[0] / r, p[1] / r);
  const Eigen::Vector2d ephi(-p[1] / r, p[0] / r);
  return -(wr * er + (wphi / r) * ephi);
}

// Gradient force plus the clockwise drive e^{-beta W} (y, -x).
inline Eigen::Vector2d wells_force(const Eigen::Vector2d& p, double beta) {
  const Eigen::Vector2d drive = std::exp(-beta * wells_potential(p)) * Eigen::Vector2d(p[1], -p[0]);
  return wells_gradient_force(p) + drive;
}

// x_{k+1} = x_k + F(x_k) dt + noise_scale sqrt(2 dt / beta) xi_k. The noise stream is
// keyed by (seed, stream, step), so per-particle streams are schedule-independent.
template <typename Force>
Eigen::MatrixXd euler_maruyama(const Force& force, double beta, const Eigen::Vector2d& x0,
                               double dt, Eigen::Index steps, std::uint64_t seed,
                               double noise_scale = 1.0, std::uint64_t stream = 0) {
  if (!(dt > 0)) throw Error(errc::parameter, "dt must be positive");
  if (!(beta > 0)) throw Error(errc::parameter, "beta must be positive");
  Eigen::MatrixXd out(steps + 1, 2);
  Eigen::Vector2d x = x0;
  out.row(0) = x;
  const double amp = noise_scale * std::sqrt(2 * dt / beta);
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Vector2d f = force(x);
    const auto [gx, gy] = box_muller(counter_hash(seed, stream, static_cast<std::uint64_t>(s), 0),
                                     counter_hash(seed, stream, static_cast<std::uint64_t>(s), 1));
    x += f * dt + amp * Eigen::Vector2d(gx, gy);
    out.row(s + 1) = x;
  }
  return out;
}

struct WellsDataset {
  DiscreteMeasure<double> initial, final_;
  TrajectoryEnsemble trajectory;
};

// Two-stage protocol: burn in one long trajectory without the circular drive starting
// from (1,0), subsample n_particles points without replacement, then integrate each
// forward with the drive switched on.
inline WellsDataset sample_wells_dataset(const WellsConfig& cfg) {
  if (!(cfg.beta > 0)) throw Error(errc::parameter, "beta must be positive");
  if (cfg.n_particles < 1 || cfg.n_particles > cfg.equil_steps)
    throw Error(errc::parameter, "n_particles must lie in [1, equil_steps]");

  const auto burn = euler_maruyama([](const Eigen::Vector2d& p) { return wells_gradient_force(p); },
                                   cfg.beta, Eigen::Vector2d(1, 0), cfg.dt, cfg.equil_steps,
                                   cfg.seed, cfg.noise_scale, /*stream=*/0);

  // Partial Fisher-Yates over the post-start rows 1..equil_steps.
  std::vector<Eigen::Index> pool(static_cast<size_t>(cfg.equil_steps));
  for (Eigen::Index i = 0; i < cfg.equil_steps; ++i) pool[static_cast<size_t>(i)] = i + 1;
  for (Eigen::Index i = 0; i < cfg.n_particles; ++i) {
    const std::uint64_t left = static_cast<std::uint64_t>(cfg.equil_steps - i);
    const Eigen::Index j =
        i + static_cast<Eigen::Index>(bounded(counter_hash(cfg.seed, 1, static_cast<std::uint64_t>(i), 0), left));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }

  const Eigen::Index n = cfg.n_particles;
  WellsDataset out;
  out.trajectory.times.resize(static_cast<size_t>(cfg.steps) + 1);
  for (Eigen::Index s = 0; s <= cfg.steps; ++s)
    out.trajectory.times[static_cast<size_t>(s)] = static_cast<double>(s) * cfg.dt;
  out.trajectory.positions.assign(static_cast<size_t>(cfg.steps) + 1, Eigen::MatrixXd(n, 2));

  const double beta = cfg.beta;
  auto drive = [beta](const Eigen::Vector2d& p) { return wells_force(p, beta); };
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d start = burn.row(pool[static_cast<size_t>(i)]);
    const auto path = euler_maruyama(drive, cfg.beta, start, cfg.dt, cfg.steps, cfg.seed,
                                     cfg.noise_scale, /*stream=*/2 + static_cast<std::uint64_t>(i));
    for (Eigen::Index s = 0; s <= cfg.steps; ++s)
      out.trajectory.positions[static_cast<size_t>(s)].row(i) = path.row(s);
  }
  out.initial = uniform_measure<double>(out.trajectory.positions.front());
  out.final_ = uniform_measure<double>(out.trajectory.positions.back());
  return out;
}

} // namespace otseg
