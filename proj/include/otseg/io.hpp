#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "otseg/dynamics.hpp"
#include "otseg/measures.hpp"
#include "otseg/plan.hpp"

namespace otseg {

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    std::string_view tok = (comma == std::string_view::npos)
                               ? line.substr(start)
                               : line.substr(start, comma - start);
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
      tok.remove_suffix(1);
    out.push_back(tok);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view tok, const std::string& path, size_t line_no) {
  double v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw Error(errc::parse, path + ":" + std::to_string(line_no) + ": bad number '" +
                                 std::string(tok) + "'");
  return v;
}

inline bool is_weight_name(std::string_view name) {
  std::string low(name);
  for (char& ch : low) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return low == "w" || low == "weight";
}

// Shortest-ish deterministic float formatting with full round-trip precision.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // trim to the shortest representation that still round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof probe, "%.*g", prec, v);
    double back = 0;
    std::from_chars(probe, probe + std::strlen(probe), back);
    if (back == v) return probe;
  }
  return buf;
}

} // namespace detail

// Snapshot CSV: header row, coordinate columns in file order, optional trailing
// weight column named "w" or "weight" (case-insensitive). Uniform weights otherwise.
inline DiscreteMeasure<double> load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(errc::empty_input, path + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.empty() || header.front().empty())
    throw Error(errc::parse, path + ":1: empty header");
  const bool has_weight = detail::is_weight_name(header.back());
  const size_t dim = header.size() - (has_weight ? 1 : 0);
  if (dim == 0) throw Error(errc::parse, path + ":1: no coordinate columns");

  std::vector<double> coords, weights;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto toks = detail::split_csv(line);
    if (toks.size() != header.size())
      throw Error(errc::dimension_mismatch,
                  path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " columns, got " +
                      std::to_string(toks.size()));
    for (size_t k = 0; k < dim; ++k)
      coords.push_back(detail::parse_double(toks[k], path, line_no));
    if (has_weight) {
      const double w = detail::parse_double(toks.back(), path, line_no);
      if (w < 0)
        throw Error(errc::parameter,
                    path + ":" + std::to_string(line_no) + ": negative weight");
      weights.push_back(w);
    }
  }
  const size_t m = coords.size() / dim;
  if (m == 0) throw Error(errc::empty_input, path + ": no data rows");

  DiscreteMeasure<double> out;
  out.points.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim));
  for (size_t i = 0; i < m; ++i)
    for (size_t k = 0; k < dim; ++k)
      out.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          coords[i * dim + k];
  if (has_weight) {
    out.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                    static_cast<Eigen::Index>(m));
  } else {
    out.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m),
                                            1.0 / static_cast<double>(m));
  }
  return out;
}

inline std::string coordinate_header(Eigen::Index dim) {
  if (dim == 1) return "x";
  if (dim == 2) return "x,y";
  if (dim == 3) return "x,y,z";
  std::string h;
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (k) h += ',';
    h += "x" + std::to_string(k);
  }
  return h;
}

inline void save_snapshot(const std::string& path, const DiscreteMeasure<double>& m,
                          bool include_weights = false) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  out << coordinate_header(m.dim());
  if (include_weights) out << ",w";
  out << '\n';
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (Eigen::Index k = 0; k < m.dim(); ++k) {
      if (k) out << ',';
      out << detail::fmt_double(m.points(i, k));
    }
    if (include_weights) out << ',' << detail::fmt_double(m.weights[i]);
    out << '\n';
  }
  if (!out) throw Error(errc::io, "write failed on " + path);
}

// Trajectory CSV: t,id,<coordinates>; rows grouped by time, ids dense from 0.
inline void write_trajectory(const std::string& path, const TrajectoryEnsemble& ens) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  const Eigen::Index dim = ens.positions.empty() ? 0 : ens.positions.front().cols();
  out << "t,id";
  for (Eigen::Index k = 0; k < dim; ++k) out << ",x" << k;
  out << '\n';
  for (size_t t = 0; t < ens.times.size(); ++t) {
    for (Eigen::Index i = 0; i < ens.positions[t].rows(); ++i) {
      out << detail::fmt_double(ens.times[t]) << ',' << i;
      for (Eigen::Index k = 0; k < dim; ++k)
        out << ',' << detail::fmt_double(ens.positions[t](i, k));
      out << '\n';
    }
  }
  if (!out) throw Error(errc::io, "write failed on " + path);
}

inline TrajectoryEnsemble read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(errc::empty_input, path + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.size() < 3)
    throw Error(errc::parse, path + ":1: expected t,id and coordinate columns");
  const size_t dim = header.size() - 2;

  TrajectoryEnsemble ens;
  std::vector<std::vector<std::pair<long long, std::vector<double>>>> groups;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto toks = detail::split_csv(line);
    if (toks.size() != header.size())
      throw Error(errc::dimension_mismatch,
                  path + ":" + std::to_string(line_no) + ": ragged row");
    const double t = detail::parse_double(toks[0], path, line_no);
    const double idf = detail::parse_double(toks[1], path, line_no);
    std::vector<double> c(dim);
    for (size_t k = 0; k < dim; ++k) c[k] = detail::parse_double(toks[2 + k], path, line_no);
    if (ens.times.empty() || t != ens.times.back()) {
      if (!ens.times.empty() && t <= ens.times.back())
        throw Error(errc::chain_mismatch, path + ": time slices not increasing");
      ens.times.push_back(t);
      groups.emplace_back();
    }
    groups.back().emplace_back(static_cast<long long>(idf), std::move(c));
  }
  if (groups.empty()) throw Error(errc::empty_input, path + ": no data rows");
  const size_t n = groups.front().size();
  for (size_t t = 0; t < groups.size(); ++t) {
    if (groups[t].size() != n)
      throw Error(errc::chain_mismatch, path + ": slice " + std::to_string(t) + " has " +
                                            std::to_string(groups[t].size()) +
                                            " particles, expected " + std::to_string(n));
    std::stable_sort(groups[t].begin(), groups[t].end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    Eigen::MatrixXd p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < dim; ++k)
        p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = groups[t][i].second[k];
    ens.positions.push_back(std::move(p));
  }
  return ens;
}

// Dense plan export, row-major.
inline void write_plan_csv(const std::string& path, const TransportPlan<double>& plan) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  out << "i,j,mass\n";
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
      out << i << ',' << j << ',' << detail::fmt_double(plan.matrix(i, j)) << '\n';
  if (!out) throw Error(errc::io, "write failed on " + path);
}

inline nlohmann::json plan_record(const TransportPlan<double>& plan) {
  nlohmann::json j;
  j["epsilon"] = plan.epsilon;
  if (plan.kappa) j["kappa"] = *plan.kappa;
  j["iterations"] = plan.iterations;
  j["converged"] = plan.converged;
  j["transport_cost"] = plan.transport_cost;
  if (plan.dual_phi) j["dual_phi"] = std::vector<double>(plan.dual_phi->begin(), plan.dual_phi->end());
  if (plan.dual_psi) j["dual_psi"] = std::vector<double>(plan.dual_psi->begin(), plan.dual_psi->end());
  return j;
}

inline void write_plan_json(const std::string& path, const TransportPlan<double>& plan) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  out << plan_record(plan).dump(2) << '\n';
  if (!out) throw Error(errc::io, "write failed on " + path);
}

} // namespace otseg
