// Command line front end: pairwise and chained segmentation, synthetic dynamics
// datasets, and transfer-kernel comparison on 1-D densities.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "otseg/clustering.hpp"
#include "otseg/dynamics.hpp"
#include "otseg/exact.hpp"
#include "otseg/io.hpp"
#include "otseg/kernels.hpp"
#include "otseg/measures.hpp"
#include "otseg/sinkhorn.hpp"
#include "otseg/spectral.hpp"
#include "otseg/svg.hpp"

namespace {

using json = nlohmann::json;
using namespace otseg;

struct SolveSettings {
  std::string epsilon_text = "auto";
  std::optional<double> kappa;
  long clusters = 2;
  std::uint64_t seed = 0;
  double tol = 1e-9;
  long max_iter = 10000;
  double theta = 1.0;
  long check_every = 1;
  std::string out_dir = ".";
  bool svg = false;
};

void validate_solve_settings(const SolveSettings& s) {
  if (s.kappa && !(*s.kappa > 0)) throw Error(errc::parameter, "--kappa must be positive");
  if (s.clusters < 1) throw Error(errc::parameter, "--clusters must be at least 1");
  if (!(s.tol > 0)) throw Error(errc::parameter, "--tol must be positive");
  if (s.max_iter < 1) throw Error(errc::parameter, "--max-iter must be at least 1");
  if (!(s.theta >= 1.0) || !(s.theta < 2.0))
    throw Error(errc::parameter, "--theta must lie in [1, 2)");
  if (s.check_every < 1) throw Error(errc::parameter, "--check-every must be at least 1");
}

double resolve_epsilon(const std::string& text, const DiscreteMeasure<double>& first) {
  if (text == "auto") return epsilon_heuristic(first);
  double v = 0;
  const char* b = text.data();
  const auto [p, ec] = std::from_chars(b, b + text.size(), v);
  if (ec != std::errc() || p != b + text.size() || !(v > 0))
    throw Error(errc::parameter, "--epsilon expects a positive number or 'auto'");
  return v;
}

std::filesystem::path ensure_out_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error(errc::io, "cannot create output directory " + dir);
  return p;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json columns_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k) a.push_back(vector_json(m.col(k)));
  return a;
}

json rows_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

json labels_json(const Eigen::ArrayXi& l) {
  json a = json::array();
  for (Eigen::Index i = 0; i < l.size(); ++i) a.push_back(l[i]);
  return a;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(errc::io, "write failed on " + path.string());
}

struct StepInfo {
  Eigen::Index iterations;
  bool converged;
  double transport_cost;
};

struct Analysis {
  SpectralDecomposition<double> dec;
  std::vector<StepInfo> steps;
  Eigen::VectorXd mu_w, nu_w; // weights the partition vectors are scaled by
  std::optional<ClusterResult<double>> clusters;
  std::optional<TransportPlan<double>> single_plan; // kept only for 2-measure runs
  double epsilon{0};
};

// Shared pipeline: per-step plans (warm-started along the chain), streamed
// concatenation, truncated SVD, then fuzzy clustering on the stacked embeddings of
// the first and last slices.
Analysis run_pipeline(const std::vector<DiscreteMeasure<double>>& ms, const SolveSettings& s,
                      double eps) {
  Analysis out;
  out.epsilon = eps;
  SinkhornOptions<double> base;
  base.tol = s.tol;
  base.max_iter = s.max_iter;
  base.theta = s.theta;
  base.check_every = s.check_every;

  ChainAccumulator<double> acc;
  std::optional<Eigen::VectorXd> phi_prev, psi_prev;
  const size_t n_steps = ms.size() - 1;
  for (size_t t = 0; t < n_steps; ++t) {
    const auto& a = ms[t];
    const auto& b = ms[t + 1];
    const auto c = cost_matrix(a, b);
    SinkhornOptions<double> opt = base;
    if (phi_prev && phi_prev->size() == a.size() && psi_prev && psi_prev->size() == b.size()) {
      opt.phi0 = *phi_prev;
      opt.psi0 = *psi_prev;
    }
    TransportPlan<double> plan = s.kappa ? solve_unbalanced(a, b, c, eps, *s.kappa, opt)
                                         : solve_sinkhorn(a, b, c, eps, opt);
    if (!plan.converged)
      throw Error(errc::non_convergence,
                  "transport solve at step " + std::to_string(t) + " did not converge in " +
                      std::to_string(plan.iterations) + " iterations; raise --max-iter or --tol");
    out.steps.push_back({plan.iterations, plan.converged, plan.transport_cost});
    phi_prev = plan.dual_phi;
    psi_prev = plan.dual_psi;
    if (t == 0)
      out.mu_w = s.kappa ? Eigen::VectorXd(plan.matrix.rowwise().sum()) : a.weights;
    if (t + 1 == n_steps)
      out.nu_w = s.kappa ? Eigen::VectorXd(plan.matrix.colwise().sum().transpose()) : b.weights;
    acc.push(plan);
    if (n_steps == 1) out.single_plan = std::move(plan);
  }

  const auto& q = acc.matrix();
  const Eigen::Index rank_cap = std::min(q.rows(), q.cols());
  if (s.clusters > 1 && s.clusters > rank_cap)
    throw Error(errc::parameter, "--clusters exceeds the available spectral rank");
  const Eigen::Index want = std::min<Eigen::Index>(std::max<long>(s.clusters + 1, 3), rank_cap);
  SvdOptions svd;
  svd.seed = s.seed;
  out.dec = truncated_svd(q, want, svd);
  attach_partition_vectors(out.dec, out.mu_w, out.nu_w);

  if (s.clusters >= 2) {
    const auto [fe, ge] = embed(out.dec, s.clusters);
    Eigen::MatrixXd stacked(fe.rows() + ge.rows(), fe.cols());
    stacked << fe, ge;
    FcmOptions fcm;
    fcm.seed = s.seed;
    out.clusters = fuzzy_cmeans(stacked, s.clusters, fcm);
  }
  return out;
}

json solve_parameters_json(const SolveSettings& s, double eps) {
  json p;
  p["epsilon"] = eps;
  p["epsilon_auto"] = (s.epsilon_text == "auto");
  if (s.kappa) p["kappa"] = *s.kappa;
  p["clusters"] = s.clusters;
  p["seed"] = s.seed;
  p["tol"] = s.tol;
  p["max_iter"] = s.max_iter;
  p["theta"] = s.theta;
  p["check_every"] = s.check_every;
  return p;
}

json analysis_json(const Analysis& an, const SolveSettings& s) {
  json r;
  r["parameters"] = solve_parameters_json(s, an.epsilon);
  r["singular_values"] = vector_json(an.dec.singular_values);
  r["f"] = columns_json(an.dec.F);
  r["g"] = columns_json(an.dec.G);
  if (an.dec.F.cols() >= 2) {
    r["threshold_mu"] = labels_json(threshold_partition<double>(an.dec.F.col(1)));
    r["threshold_nu"] = labels_json(threshold_partition<double>(an.dec.G.col(1)));
  }
  if (an.clusters) {
    const Eigen::Index n = an.mu_w.size();
    const auto& cl = *an.clusters;
    json c;
    c["membership_mu"] = rows_json(cl.membership.topRows(n));
    c["membership_nu"] = rows_json(cl.membership.bottomRows(cl.membership.rows() - n));
    c["hard_labels_mu"] = labels_json(cl.hard_labels.head(n));
    c["hard_labels_nu"] = labels_json(cl.hard_labels.tail(cl.hard_labels.size() - n));
    c["correspondence"] = cl.correspondence;
    c["iterations"] = cl.iterations;
    r["clustering"] = std::move(c);
  }
  json steps = json::array();
  bool all_conv = true;
  for (const auto& st : an.steps) {
    steps.push_back({{"iterations", st.iterations},
                     {"converged", st.converged},
                     {"transport_cost", st.transport_cost}});
    all_conv = all_conv && st.converged;
  }
  r["steps"] = std::move(steps);

  Eigen::VectorXd rmu = an.mu_w.array().sqrt();
  Eigen::VectorXd rnu = an.nu_w.array().sqrt();
  json d;
  d["sigma1"] = an.dec.singular_values[0];
  d["leading_alignment_mu"] = an.dec.U.col(0).dot(rmu) / rmu.norm();
  d["leading_alignment_nu"] = an.dec.V.col(0).dot(rnu) / rnu.norm();
  d["degenerate_gap"] = an.dec.degenerate_gap;
  d["converged"] = all_conv;
  d["epsilon"] = an.epsilon;
  r["diagnostics"] = std::move(d);
  return r;
}

void write_analysis_outputs(const std::filesystem::path& out_dir, json result,
                            const Analysis& an, const SolveSettings& s,
                            const DiscreteMeasure<double>& first,
                            const DiscreteMeasure<double>& last) {
  write_json_file(out_dir / "result.json", result);
  if (an.single_plan) {
    write_plan_csv((out_dir / "plan.csv").string(), *an.single_plan);
    write_plan_json((out_dir / "plan.json").string(), *an.single_plan);
  }
  if (s.svg) {
    Eigen::ArrayXi lmu, lnu;
    if (an.clusters) {
      const Eigen::Index n = first.size();
      lmu = an.clusters->hard_labels.head(n);
      lnu = an.clusters->hard_labels.tail(an.clusters->hard_labels.size() - n);
    } else if (an.dec.F.cols() >= 2) {
      lmu = threshold_partition<double>(an.dec.F.col(1));
      lnu = threshold_partition<double>(an.dec.G.col(1));
    } else {
      lmu = Eigen::ArrayXi::Zero(first.size());
      lnu = Eigen::ArrayXi::Zero(last.size());
    }
    write_scatter_svg((out_dir / "scatter_mu.svg").string(), first.points, lmu);
    write_scatter_svg((out_dir / "scatter_nu.svg").string(), last.points, lnu);
  }
  std::cout << "wrote " << (out_dir / "result.json").string() << '\n';
}

void print_summary(const Analysis& an) {
  std::cout << "singular values:";
  for (Eigen::Index k = 0; k < an.dec.singular_values.size(); ++k)
    std::cout << ' ' << detail::fmt_double(an.dec.singular_values[k]);
  std::cout << '\n';
}

// ---- segment ----------------------------------------------------------------------

void cmd_segment(const std::string& mu_path, const std::string& nu_path,
                 const SolveSettings& s) {
  validate_solve_settings(s);
  const auto out_dir = ensure_out_dir(s.out_dir);

  const auto mu_loaded = load_snapshot(mu_path);
  const auto nu_loaded = load_snapshot(nu_path);
  auto mu_raw = mask_zero_atoms(mu_loaded);
  auto nu_raw = mask_zero_atoms(nu_loaded);
  const bool mu_dropped = mu_raw.size() != mu_loaded.size();
  const bool nu_dropped = nu_raw.size() != nu_loaded.size();

  DiscreteMeasure<double> mu, nu;
  if (!s.kappa) {
    const double ma = mu_raw.weights.sum(), mb = nu_raw.weights.sum();
    if (std::abs(ma - mb) > 1e-9 * std::max({1.0, ma, mb}))
      throw Error(errc::mass_mismatch,
                  "total masses differ (" + detail::fmt_double(ma) + " vs " +
                      detail::fmt_double(mb) +
                      "); pass --kappa to run the unbalanced solver");
    mu = normalize(mu_raw);
    nu = normalize(nu_raw);
  } else {
    mu = std::move(mu_raw);
    nu = std::move(nu_raw);
  }

  const double eps = resolve_epsilon(s.epsilon_text, mu);
  const auto an = run_pipeline({mu, nu}, s, eps);

  json result = analysis_json(an, s);
  result["command"] = "segment";
  result["inputs"] = {{"mu", mu_path}, {"nu", nu_path}};
  if (mu_dropped) result["kept_mu"] = mu.index_map;
  if (nu_dropped) result["kept_nu"] = nu.index_map;
  write_analysis_outputs(out_dir, std::move(result), an, s, mu, nu);
  print_summary(an);
}

// ---- concat-segment ---------------------------------------------------------------

void cmd_concat_segment(const std::string& traj_path, const SolveSettings& s) {
  validate_solve_settings(s);
  const auto out_dir = ensure_out_dir(s.out_dir);

  const auto ens = read_trajectory(traj_path);
  if (ens.n_times() < 2)
    throw Error(errc::parameter, "need at least 2 time slices, got " +
                                     std::to_string(ens.n_times()));

  std::vector<DiscreteMeasure<double>> ms;
  ms.reserve(ens.positions.size());
  for (const auto& p : ens.positions) {
    auto m = uniform_measure<double>(p);
    ms.push_back(s.kappa ? std::move(m) : normalize(m));
  }

  const double eps = resolve_epsilon(s.epsilon_text, ms.front());
  const auto an = run_pipeline(ms, s, eps);

  json result = analysis_json(an, s);
  result["command"] = "concat-segment";
  result["inputs"] = {{"trajectory", traj_path},
                      {"slices", ens.n_times()},
                      {"t_first", ens.times.front()},
                      {"t_last", ens.times.back()},
                      {"particles", ens.n_particles()}};
  write_analysis_outputs(out_dir, std::move(result), an, s, ms.front(), ms.back());
  print_summary(an);
}

// ---- simulate -----------------------------------------------------------------------

struct SimulateSettings {
  std::string system;
  long steps = -1;   // -1: per-system default
  double dt = 0;     // 0: per-system default
  std::string grid = "30x15";
  double beta = 2.0;
  long particles = 1000;
  long equil_steps = 50000;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
  long every = 1;
  std::string out_dir = ".";
};

std::pair<Eigen::Index, Eigen::Index> parse_grid(const std::string& text) {
  const size_t x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == text.size())
    throw Error(errc::parameter, "--grid expects WxH, e.g. 30x15");
  long w = 0, h = 0;
  const char* b = text.data();
  const auto r1 = std::from_chars(b, b + x, w);
  const auto r2 = std::from_chars(b + x + 1, b + text.size(), h);
  if (r1.ec != std::errc() || r1.ptr != b + x || r2.ec != std::errc() ||
      r2.ptr != b + text.size() || w < 1 || h < 1)
    throw Error(errc::parameter, "--grid expects positive integers WxH");
  return {w, h};
}

TrajectoryEnsemble subsample(const TrajectoryEnsemble& ens, long every) {
  if (every <= 1) return ens;
  TrajectoryEnsemble out;
  const size_t n = ens.times.size();
  for (size_t t = 0; t < n; t += static_cast<size_t>(every)) {
    out.times.push_back(ens.times[t]);
    out.positions.push_back(ens.positions[t]);
  }
  if ((n - 1) % static_cast<size_t>(every) != 0) { // keep the final slice
    out.times.push_back(ens.times.back());
    out.positions.push_back(ens.positions.back());
  }
  return out;
}

void cmd_simulate(const SimulateSettings& s) {
  if (s.every < 1) throw Error(errc::parameter, "--every must be at least 1");
  const auto out_dir = ensure_out_dir(s.out_dir);

  TrajectoryEnsemble traj;
  DiscreteMeasure<double> initial, final_;
  json params;
  params["command"] = "simulate";
  params["system"] = s.system;
  params["seed"] = s.seed;
  params["every"] = s.every;

  if (s.system == "double-gyre") {
    GyreConfig cfg;
    if (s.steps >= 0) cfg.steps = s.steps;
    if (s.dt != 0) cfg.dt = s.dt;
    if (cfg.steps < 1) throw Error(errc::parameter, "--steps must be at least 1");
    if (!(cfg.dt > 0)) throw Error(errc::parameter, "--dt must be positive");
    std::tie(cfg.nx, cfg.ny) = parse_grid(s.grid);
    traj = integrate_gyre(cfg);
    initial = uniform_measure<double>(traj.positions.front());
    final_ = uniform_measure<double>(traj.positions.back());
    params["A"] = cfg.A;
    params["alpha"] = cfg.alpha;
    params["omega"] = cfg.omega;
    params["dt"] = cfg.dt;
    params["steps"] = cfg.steps;
    params["grid"] = {cfg.nx, cfg.ny};
  } else if (s.system == "wells") {
    WellsConfig cfg;
    cfg.beta = s.beta;
    if (s.steps >= 0) cfg.steps = s.steps;
    if (s.dt != 0) cfg.dt = s.dt;
    if (cfg.steps < 1) throw Error(errc::parameter, "--steps must be at least 1");
    if (!(cfg.dt > 0)) throw Error(errc::parameter, "--dt must be positive");
    cfg.n_particles = s.particles;
    cfg.equil_steps = s.equil_steps;
    cfg.noise_scale = s.noise_scale;
    cfg.seed = s.seed;
    auto ds = sample_wells_dataset(cfg);
    traj = std::move(ds.trajectory);
    initial = std::move(ds.initial);
    final_ = std::move(ds.final_);
    params["beta"] = cfg.beta;
    params["dt"] = cfg.dt;
    params["steps"] = cfg.steps;
    params["particles"] = cfg.n_particles;
    params["equil_steps"] = cfg.equil_steps;
    params["noise_scale"] = cfg.noise_scale;
  } else {
    throw Error(errc::parameter, "unknown system '" + s.system +
                                     "'; expected double-gyre or wells");
  }

  const auto stored = subsample(traj, s.every);
  write_trajectory((out_dir / "trajectory.csv").string(), stored);
  save_snapshot((out_dir / "initial.csv").string(), initial);
  save_snapshot((out_dir / "final.csv").string(), final_);
  write_json_file(out_dir / "params.json", params);
  std::cout << "wrote " << (out_dir / "trajectory.csv").string() << " (" << stored.n_times()
            << " slices, " << stored.n_particles() << " particles)\n";
}

// ---- kernel-compare -----------------------------------------------------------------

struct KernelCompareSettings {
  std::string mu_path, nu_path;
  std::vector<double> widths;
  double tol = 1e-9;
  long max_iter = 10000;
  std::string out_dir = ".";
};

DiscreteMeasure<double> sorted_density(const std::string& path) {
  auto m = mask_zero_atoms(load_snapshot(path));
  if (m.dim() != 1)
    throw Error(errc::unsupported_structure,
                path + ": kernel comparison handles 1-D densities only");
  std::vector<Eigen::Index> order(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return m.points(a, 0) < m.points(b, 0); });
  DiscreteMeasure<double> out;
  out.points.resize(m.size(), 1);
  out.weights.resize(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out.points(i, 0) = m.points(order[static_cast<size_t>(i)], 0);
    out.weights[i] = m.weights[order[static_cast<size_t>(i)]];
  }
  for (Eigen::Index i = 0; i + 1 < out.size(); ++i)
    if (out.points(i, 0) == out.points(i + 1, 0))
      throw Error(errc::unsupported_structure, path + ": duplicate support points");
  return normalize(out);
}

CostMatrix<double> index_cost(Eigen::Index m, Eigen::Index n) {
  CostMatrix<double> c;
  c.exponent = 2;
  c.entries.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      c.entries(i, j) = static_cast<double>((i - j) * (i - j));
  return c;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << detail::fmt_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw Error(errc::io, "write failed on " + path.string());
}

void cmd_kernel_compare(const KernelCompareSettings& s) {
  if (s.widths.empty())
    throw Error(errc::parameter, "--widths needs at least one blur width");
  for (double w : s.widths)
    if (!(w > 0)) throw Error(errc::parameter, "blur widths must be positive");
  if (!(s.tol > 0)) throw Error(errc::parameter, "--tol must be positive");
  if (s.max_iter < 1) throw Error(errc::parameter, "--max-iter must be at least 1");
  const auto out_dir = ensure_out_dir(s.out_dir);

  const auto mu = sorted_density(s.mu_path);
  const auto nu = sorted_density(s.nu_path);
  const auto c = index_cost(mu.size(), nu.size());
  const auto exact = solve_exact(mu, nu, c);

  json summary;
  summary["command"] = "kernel-compare";
  summary["inputs"] = {{"mu", s.mu_path}, {"nu", s.nu_path}};
  summary["widths"] = s.widths;
  json per_width = json::array();

  for (double w : s.widths) {
    const double eps = 2 * w * w;
    SinkhornOptions<double> opt;
    opt.tol = s.tol;
    opt.max_iter = s.max_iter;
    const auto plan = solve_sinkhorn(mu, nu, c, eps, opt);
    if (!plan.converged)
      throw Error(errc::non_convergence, "regularized solve at width " + detail::fmt_double(w) +
                                             " did not converge; raise --max-iter");
    const auto reg = kernel_from_regularized(plan);
    const auto gau = smooth_plan_kernel(exact, {BlurShape::gaussian, w});
    const auto bal = smooth_plan_kernel(exact, {BlurShape::ball, w});

    const std::string tag = detail::fmt_double(w);
    const auto reg_path = out_dir / ("kernel_regularized_w" + tag + ".csv");
    const auto gau_path = out_dir / ("kernel_gaussian_w" + tag + ".csv");
    const auto bal_path = out_dir / ("kernel_ball_w" + tag + ".csv");
    write_matrix_csv(reg_path, reg.matrix);
    write_matrix_csv(gau_path, gau.matrix);
    write_matrix_csv(bal_path, bal.matrix);

    json entry;
    entry["width"] = w;
    entry["epsilon"] = eps;
    entry["iterations"] = plan.iterations;
    entry["files"] = {{"regularized", reg_path.filename().string()},
                      {"gaussian", gau_path.filename().string()},
                      {"ball", bal_path.filename().string()}};
    const auto [r1, r2] = kernel_residuals(reg);
    const auto [g1, g2] = kernel_residuals(gau);
    const auto [b1, b2] = kernel_residuals(bal);
    entry["residuals"] = {{"regularized", {r1, r2}},
                          {"gaussian", {g1, g2}},
                          {"ball", {b1, b2}}};
    per_width.push_back(std::move(entry));
  }
  summary["results"] = std::move(per_width);
  write_json_file(out_dir / "kernel_compare.json", summary);
  std::cout << "wrote " << (out_dir / "kernel_compare.json").string() << '\n';
}

void emit_error(const char* code, const std::string& message, int exit_code) {
  json j;
  j["error"] = {{"code", code}, {"message", message}, {"exit_code", exit_code}};
  std::cerr << j.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"coherent set detection from transport plans"};
  app.require_subcommand(1);

  SolveSettings seg;
  std::string seg_mu, seg_nu;
  auto* seg_cmd = app.add_subcommand("segment", "segment a pair of weighted snapshots");
  seg_cmd->add_option("mu", seg_mu, "source snapshot CSV")->required();
  seg_cmd->add_option("nu", seg_nu, "target snapshot CSV")->required();

  SolveSettings cat;
  std::string cat_traj;
  auto* cat_cmd =
      app.add_subcommand("concat-segment", "segment a trajectory via chained plans");
  cat_cmd->add_option("trajectory", cat_traj, "trajectory CSV (t,id,coords)")->required();

  for (auto [cmd, st] : {std::pair{seg_cmd, &seg}, std::pair{cat_cmd, &cat}}) {
    cmd->add_option("--epsilon", st->epsilon_text,
                    "entropic regularization, a positive number or 'auto'")
        ->capture_default_str();
    cmd->add_option("--kappa", st->kappa, "marginal relaxation; enables the unbalanced solver");
    cmd->add_option("--clusters", st->clusters, "number of coherent sets")->capture_default_str();
    cmd->add_option("--seed", st->seed, "seed for SVD and clustering starts")
        ->capture_default_str();
    cmd->add_option("--tol", st->tol, "solver tolerance")->capture_default_str();
    cmd->add_option("--max-iter", st->max_iter, "solver iteration cap")->capture_default_str();
    cmd->add_option("--theta", st->theta, "Sinkhorn overrelaxation in [1,2)")
        ->capture_default_str();
    cmd->add_option("--check-every", st->check_every, "sweeps between convergence checks")
        ->capture_default_str();
    cmd->add_option("--out", st->out_dir, "output directory")->capture_default_str();
    cmd->add_flag("--svg", st->svg, "write scatter SVGs colored by cluster");
  }

  SimulateSettings sim;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->add_option("system", sim.system, "double-gyre or wells")->required();
  sim_cmd->add_option("--steps", sim.steps, "integration steps (default per system)");
  sim_cmd->add_option("--dt", sim.dt, "time step (default per system)");
  auto* grid_opt =
      sim_cmd->add_option("--grid", sim.grid, "WxH seeding grid (double-gyre)")
          ->capture_default_str();
  auto* beta_opt = sim_cmd->add_option("--beta", sim.beta, "inverse temperature (wells)")
                       ->capture_default_str();
  auto* part_opt = sim_cmd->add_option("--particles", sim.particles, "ensemble size (wells)")
                       ->capture_default_str();
  auto* equil_opt =
      sim_cmd->add_option("--equil-steps", sim.equil_steps, "burn-in steps (wells)")
          ->capture_default_str();
  auto* noise_opt =
      sim_cmd->add_option("--noise-scale", sim.noise_scale, "diffusion scaling (wells)")
          ->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "noise seed (wells)")->capture_default_str();
  sim_cmd->add_option("--every", sim.every, "store every n-th slice")->capture_default_str();
  sim_cmd->add_option("--out", sim.out_dir, "output directory")->capture_default_str();

  KernelCompareSettings kc;
  auto* kc_cmd =
      app.add_subcommand("kernel-compare", "regularized vs blurred kernels on 1-D densities");
  kc_cmd->add_option("mu", kc.mu_path, "source density CSV")->required();
  kc_cmd->add_option("nu", kc.nu_path, "target density CSV")->required();
  kc_cmd->add_option("--widths", kc.widths, "comma-separated blur widths")->delimiter(',');
  kc_cmd->add_option("--tol", kc.tol, "solver tolerance")->capture_default_str();
  kc_cmd->add_option("--max-iter", kc.max_iter, "solver iteration cap")->capture_default_str();
  kc_cmd->add_option("--out", kc.out_dir, "output directory")->capture_default_str();

  seg_cmd->callback([&] { cmd_segment(seg_mu, seg_nu, seg); });
  cat_cmd->callback([&] { cmd_concat_segment(cat_traj, cat); });
  sim_cmd->callback([&] {
    // reject flags that belong to the other system
    if (sim.system == "wells" && grid_opt->count())
      throw Error(errc::parameter, "--grid applies to double-gyre only");
    if (sim.system == "double-gyre")
      for (const auto* o : {beta_opt, part_opt, equil_opt, noise_opt})
        if (o->count())
          throw Error(errc::parameter, o->get_name() + " applies to wells only");
    cmd_simulate(sim);
  });
  kc_cmd->callback([&] { cmd_kernel_compare(kc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    emit_error(errc_name(e.code()), e.what(), e.exit_code());
    return e.exit_code();
  } catch (const std::exception& e) {
    emit_error("internal", e.what(), 4);
    return 4;
  }
  return 0;
}
