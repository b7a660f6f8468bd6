#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "otseg/measures.hpp"
#include "otseg/rng.hpp"

namespace testutil {

inline std::filesystem::path test_dir() {
  static const std::filesystem::path p = [] {
    auto d = std::filesystem::temp_directory_path() /
             ("otseg_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(d);
    return d;
  }();
  return p;
}

inline std::string write_file(const std::string& name, const std::string& content) {
  const auto path = test_dir() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

// Deterministic uniform in [lo, hi) from a counter.
inline double urand(std::uint64_t seed, std::uint64_t a, std::uint64_t b, double lo = 0,
                    double hi = 1) {
  return lo + (hi - lo) * otseg::to_unit(otseg::counter_hash(seed, a, b, 0));
}

// Random measure with weights bounded away from zero and total mass `mass`.
inline otseg::DiscreteMeasure<double> random_measure(Eigen::Index n, Eigen::Index d,
                                                     std::uint64_t seed, double mass = 1.0) {
  Eigen::MatrixXd pts(n, d);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k)
      pts(i, k) = urand(seed, 1000 + static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k), -1, 1);
    w[i] = 0.2 + urand(seed, 2000, static_cast<std::uint64_t>(i));
  }
  w *= mass / w.sum();
  return otseg::make_measure<double>(std::move(pts), std::move(w));
}

} // namespace testutil
