#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "helpers.hpp"
#include "otseg/io.hpp"

using json = nlohmann::json;

namespace {

struct CliRun {
  int exit_code;
  std::string out, err;
};

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun run_cli(const std::string& args) {
  static int counter = 0;
  const std::string base = (testutil::test_dir() / ("cli_io_" + std::to_string(counter++))).string();
  const std::string cmd = std::string(OTSEG_CLI_PATH) + " " + args + " >" + base + ".out 2>" +
                          base + ".err";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  CliRun r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp_file(base + ".out");
  r.err = slurp_file(base + ".err");
  return r;
}

std::string fresh_dir(const std::string& name) {
  const std::string d = (testutil::test_dir() / name).string();
  std::filesystem::create_directories(d);
  return d;
}

json load_json(const std::string& path) { return json::parse(slurp_file(path)); }

json error_of(const CliRun& r) {
  const json j = json::parse(r.err);
  REQUIRE(j.contains("error"));
  REQUIRE(j["error"].contains("code"));
  REQUIRE(j["error"].contains("message"));
  REQUIRE(j["error"].contains("exit_code"));
  return j["error"];
}

// 2-D snapshot with two separated groups of 4 points each, uniform weights.
// the gap is kept small enough that the cross-group plan mass stays well above
// rounding noise at the bandwidths used here; fully disconnected groups make the
// leading singular pair degenerate and its vectors an arbitrary rotation
std::string pair_snapshot(const std::string& name, double shift) {
  std::ostringstream ss;
  ss << "x,y\n";
  for (int i = 0; i < 4; ++i) ss << (0.1 * i + shift) << "," << (0.05 * i) << "\n";
  for (int i = 0; i < 4; ++i) ss << (2.0 + 0.1 * i + shift) << "," << (0.05 * i) << "\n";
  return testutil::write_file(name, ss.str());
}

} // namespace

TEST_CASE("cli segment produces the documented result schema") {
  const auto mu = pair_snapshot("cli_seg_mu.csv", 0.0);
  const auto nu = pair_snapshot("cli_seg_nu.csv", 0.02);
  const auto out = fresh_dir("seg_out");
  const auto r =
      run_cli("segment " + mu + " " + nu + " --epsilon 0.5 --clusters 2 --seed 1 --svg --out " + out);
  CHECK(r.exit_code == 0);
  CHECK(r.err.empty());

  const json res = load_json(out + "/result.json");
  CHECK(res["command"] == "segment");
  CHECK(res["parameters"]["epsilon"] == doctest::Approx(0.5));
  CHECK(res["parameters"]["epsilon_auto"] == false);
  CHECK(!res["parameters"].contains("kappa"));

  REQUIRE(res.contains("diagnostics"));
  const auto& d = res["diagnostics"];
  CHECK(d["sigma1"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(d["sigma1"].get<double>() == res["singular_values"][0].get<double>());
  CHECK(d["leading_alignment_mu"].get<double>() >= 1 - 1e-8);
  CHECK(d["leading_alignment_nu"].get<double>() >= 1 - 1e-8);
  CHECK(d["converged"] == true);

  REQUIRE(res["singular_values"].size() >= 3);
  REQUIRE(res["f"].size() == res["singular_values"].size());
  REQUIRE(res["f"][0].size() == 8);
  REQUIRE(res["g"][0].size() == 8);

  // two separated groups: the sign split and the clusters both recover them
  const auto& thr = res["threshold_mu"];
  REQUIRE(thr.size() == 8);
  for (int i = 1; i < 4; ++i) {
    CHECK(thr[i] == thr[0]);
    CHECK(thr[4 + i] == thr[4]);
  }
  CHECK(thr[0] != thr[4]);

  REQUIRE(res.contains("clustering"));
  const auto& cl = res["clustering"];
  REQUIRE(cl["hard_labels_mu"].size() == 8);
  REQUIRE(cl["hard_labels_nu"].size() == 8);
  CHECK(cl["correspondence"] == json::array({0, 1}));
  for (int i = 1; i < 4; ++i) CHECK(cl["hard_labels_mu"][i] == cl["hard_labels_mu"][0]);
  CHECK(cl["hard_labels_mu"][0] != cl["hard_labels_mu"][4]);
  double row0 = 0;
  for (const auto& v : cl["membership_mu"][0]) row0 += v.get<double>();
  CHECK(row0 == doctest::Approx(1.0).epsilon(1e-9));

  REQUIRE(res["steps"].size() == 1);
  CHECK(res["steps"][0]["converged"] == true);

  CHECK(std::filesystem::exists(out + "/plan.csv"));
  CHECK(std::filesystem::exists(out + "/plan.json"));
  const auto svg = slurp_file(out + "/scatter_mu.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(std::filesystem::exists(out + "/scatter_nu.svg"));
}

TEST_CASE("cli segment rejects unequal masses and suggests the unbalanced path") {
  const auto mu = testutil::write_file("cli_mass_mu.csv", "x,w\n0,0.5\n1,0.5\n");
  const auto nu = testutil::write_file("cli_mass_nu.csv", "x,w\n0,0.5\n1,0.8\n");
  const auto out = fresh_dir("mass_out");
  const auto r = run_cli("segment " + mu + " " + nu + " --epsilon 0.5 --out " + out);
  CHECK(r.exit_code == 2);
  const json e = error_of(r);
  CHECK(e["code"] == "mass_mismatch");
  CHECK(e["exit_code"] == 2);
  CHECK(e["message"].get<std::string>().find("--kappa") != std::string::npos);
  CHECK(!std::filesystem::exists(out + "/result.json"));

  // same pair goes through once the marginal relaxation is on
  const auto r2 = run_cli("segment " + mu + " " + nu + " --epsilon 0.5 --kappa 1 --out " + out);
  CHECK(r2.exit_code == 0);
  const json res = load_json(out + "/result.json");
  CHECK(res["parameters"]["kappa"] == doctest::Approx(1.0));
  CHECK(res["diagnostics"]["sigma1"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res["diagnostics"]["leading_alignment_mu"].get<double>() >= 1 - 1e-8);
}

TEST_CASE("cli segment of a symmetric pair with automatic bandwidth splits the blobs") {
  const auto a = pair_snapshot("cli_sym_a.csv", 0.0);
  const auto out = fresh_dir("sym_out");
  const auto r = run_cli("segment " + a + " " + a + " --epsilon auto --out " + out);
  CHECK(r.exit_code == 0);
  const json res = load_json(out + "/result.json");
  CHECK(res["parameters"]["epsilon_auto"] == true);
  CHECK(res["parameters"]["epsilon"].get<double>() > 0);
  const auto& tm = res["threshold_mu"];
  const auto& tn = res["threshold_nu"];
  REQUIRE(tm.size() == 8);
  CHECK(tm == tn); // identical snapshots give identical halves
  for (int i = 1; i < 4; ++i) {
    CHECK(tm[i] == tm[0]);
    CHECK(tm[4 + i] == tm[4]);
  }
  CHECK(tm[0] != tm[4]);
}

TEST_CASE("cli concat-segment on a 2-slice trajectory matches segment on the pair") {
  std::ostringstream traj, snap_a, snap_b;
  traj << "t,id,x0,x1\n";
  snap_a << "x,y\n";
  snap_b << "x,y\n";
  const double xs[6] = {0.0, 0.15, 0.3, 5.0, 5.15, 5.3};
  const double ys[6] = {0.0, 0.2, 0.1, 0.05, 0.25, 0.15};
  for (int i = 0; i < 6; ++i) {
    traj << "0," << i << "," << xs[i] << "," << ys[i] << "\n";
    snap_a << xs[i] << "," << ys[i] << "\n";
  }
  for (int i = 0; i < 6; ++i) {
    traj << "1," << i << "," << (xs[i] + 0.07) << "," << (ys[i] - 0.03) << "\n";
    snap_b << (xs[i] + 0.07) << "," << (ys[i] - 0.03) << "\n";
  }
  const auto traj_path = testutil::write_file("cli_pair_traj.csv", traj.str());
  const auto a_path = testutil::write_file("cli_pair_a.csv", snap_a.str());
  const auto b_path = testutil::write_file("cli_pair_b.csv", snap_b.str());

  const auto out_seg = fresh_dir("pair_seg");
  const auto out_cat = fresh_dir("pair_cat");
  const std::string flags = " --epsilon 0.5 --clusters 2 --seed 3 --out ";
  CHECK(run_cli("segment " + a_path + " " + b_path + flags + out_seg).exit_code == 0);
  CHECK(run_cli("concat-segment " + traj_path + flags + out_cat).exit_code == 0);

  const json rs = load_json(out_seg + "/result.json");
  const json rc = load_json(out_cat + "/result.json");
  CHECK(rc["command"] == "concat-segment");
  CHECK(rc["inputs"]["slices"] == 2);
  CHECK(rc["inputs"]["t_first"] == 0.0);
  CHECK(rc["inputs"]["t_last"] == 1.0);
  // identical pipeline, so the analytic payload agrees to the last bit
  for (const char* key : {"singular_values", "f", "g", "threshold_mu", "threshold_nu",
                          "clustering", "steps", "diagnostics", "parameters"}) {
    INFO(key);
    CHECK(rs[key] == rc[key]);
  }
  CHECK(slurp_file(out_seg + "/plan.csv") == slurp_file(out_cat + "/plan.csv"));
}

TEST_CASE("cli concat-segment rejects ragged trajectories") {
  const auto bad = testutil::write_file("cli_ragged.csv",
                                        "t,id,x\n0,0,0\n0,1,1\n1,0,0.5\n");
  const auto r = run_cli("concat-segment " + bad + " --epsilon 0.5 --out " +
                         fresh_dir("ragged_out"));
  CHECK(r.exit_code == 2);
  CHECK(error_of(r)["code"] == "chain_mismatch");
}

TEST_CASE("cli simulate wells is reproducible byte for byte") {
  const auto d1 = fresh_dir("wells_a");
  const auto d2 = fresh_dir("wells_b");
  const auto d3 = fresh_dir("wells_c");
  const std::string base = "simulate wells --steps 5 --particles 8 --equil-steps 200 ";
  CHECK(run_cli(base + "--seed 7 --out " + d1).exit_code == 0);
  CHECK(run_cli(base + "--seed 7 --out " + d2).exit_code == 0);
  CHECK(run_cli(base + "--seed 8 --out " + d3).exit_code == 0);
  for (const char* f : {"trajectory.csv", "initial.csv", "final.csv", "params.json"}) {
    INFO(f);
    CHECK(slurp_file(d1 + "/" + f) == slurp_file(d2 + "/" + f));
  }
  CHECK(slurp_file(d1 + "/trajectory.csv") != slurp_file(d3 + "/trajectory.csv"));

  const json params = load_json(d1 + "/params.json");
  CHECK(params["system"] == "wells");
  CHECK(params["seed"] == 7);
  CHECK(params["beta"] == doctest::Approx(2.0));
}

TEST_CASE("cli simulate rejects a non-positive inverse temperature") {
  const auto r = run_cli("simulate wells --beta 0 --out " + fresh_dir("beta_out"));
  CHECK(r.exit_code == 2);
  CHECK(error_of(r)["code"] == "parameter");
}

TEST_CASE("cli simulate double-gyre writes a readable trajectory") {
  const auto out = fresh_dir("gyre_out");
  const auto r = run_cli("simulate double-gyre --steps 4 --dt 0.05 --grid 6x3 --out " + out);
  CHECK(r.exit_code == 0);
  const auto ens = otseg::read_trajectory(out + "/trajectory.csv");
  CHECK(ens.n_times() == 5);
  CHECK(ens.n_particles() == 18);
  CHECK(ens.times.back() == doctest::Approx(0.2));
  const auto init = otseg::load_snapshot(out + "/initial.csv");
  CHECK(init.size() == 18);
  CHECK(init.dim() == 2);
  const json params = load_json(out + "/params.json");
  CHECK(params["grid"] == json::array({6, 3}));

  // wells-only flags are rejected on the gyre
  const auto r2 = run_cli("simulate double-gyre --beta 1 --out " + out);
  CHECK(r2.exit_code == 2);
  CHECK(error_of(r2)["code"] == "parameter");
}

TEST_CASE("cli simulate honors slice thinning") {
  const auto out = fresh_dir("every_out");
  const auto r =
      run_cli("simulate double-gyre --steps 5 --dt 0.05 --grid 4x2 --every 2 --out " + out);
  CHECK(r.exit_code == 0);
  const auto ens = otseg::read_trajectory(out + "/trajectory.csv");
  // slices 0,2,4 plus the forced final slice 5
  CHECK(ens.n_times() == 4);
  CHECK(ens.times.back() == doctest::Approx(0.25));
}

TEST_CASE("cli kernel-compare concentrates on the diagonal for tiny widths") {
  std::ostringstream ss;
  ss << "x,w\n";
  const double w[8] = {0.05, 0.1, 0.2, 0.15, 0.1, 0.15, 0.1, 0.15};
  for (int i = 0; i < 8; ++i) ss << i << "," << w[i] << "\n";
  const auto mu = testutil::write_file("cli_kc_mu.csv", ss.str());
  const auto out = fresh_dir("kc_out");
  const auto r = run_cli("kernel-compare " + mu + " " + mu + " --widths 0.05 --out " + out);
  CHECK(r.exit_code == 0);

  for (const char* stem : {"kernel_regularized_w0.05", "kernel_gaussian_w0.05",
                           "kernel_ball_w0.05"}) {
    const auto text = slurp_file(out + "/" + std::string(stem) + ".csv");
    std::istringstream lines(text);
    std::string line;
    int row = 0;
    while (std::getline(lines, line)) {
      std::istringstream cells(line);
      std::string cell;
      int col = 0, best = -1;
      double best_v = -1;
      while (std::getline(cells, cell, ',')) {
        const double v = std::stod(cell);
        if (v > best_v) {
          best_v = v;
          best = col;
        }
        ++col;
      }
      INFO(stem << " row " << row);
      CHECK(col == 8);
      CHECK(best == row);
      ++row;
    }
    CHECK(row == 8);
  }
  const json summary = load_json(out + "/kernel_compare.json");
  REQUIRE(summary["results"].size() == 1);
  CHECK(summary["results"][0]["epsilon"].get<double>() == doctest::Approx(2 * 0.05 * 0.05));
}

TEST_CASE("cli kernel-compare input validation") {
  const auto mu1 = testutil::write_file("cli_kc_v1.csv", "x,w\n0,0.5\n1,0.5\n");
  const auto out = fresh_dir("kc_err");
  const auto r = run_cli("kernel-compare " + mu1 + " " + mu1 + " --out " + out);
  CHECK(r.exit_code == 2);
  CHECK(error_of(r)["code"] == "parameter"); // no widths

  const auto mu2 = testutil::write_file("cli_kc_v2.csv", "x,y\n0,0\n1,1\n");
  const auto r2 =
      run_cli("kernel-compare " + mu2 + " " + mu2 + " --widths 1 --out " + out);
  CHECK(r2.exit_code == 2);
  CHECK(error_of(r2)["code"] == "unsupported_structure"); // 2-D density
}

TEST_CASE("cli flag validation emits machine-readable errors") {
  const auto mu = pair_snapshot("cli_flag_mu.csv", 0.0);
  const auto out = fresh_dir("flag_out");

  auto expect_param = [&](const std::string& args) {
    const auto r = run_cli(args);
    CHECK(r.exit_code == 2);
    CHECK(error_of(r)["code"] == "parameter");
  };
  expect_param("segment " + mu + " " + mu + " --epsilon nope --out " + out);
  expect_param("segment " + mu + " " + mu + " --epsilon=-1 --out " + out);
  expect_param("segment " + mu + " " + mu + " --epsilon 0.5 --theta 2.5 --out " + out);
  expect_param("segment " + mu + " " + mu + " --epsilon 0.5 --kappa 0 --out " + out);
  expect_param("segment " + mu + " " + mu + " --epsilon 0.5 --clusters 0 --out " + out);
  expect_param("simulate vortex --out " + out);

  // missing a required positional: the parser reports it on the input-error code
  const auto r = run_cli("segment " + mu + " --out " + out);
  CHECK(r.exit_code == 2);

  // a run that cannot converge surfaces the non-convergence exit code
  const auto r2 = run_cli("segment " + mu + " " + mu +
                          " --epsilon 0.001 --max-iter 2 --tol 1e-14 --out " + out);
  CHECK(r2.exit_code == 3);
  CHECK(error_of(r2)["code"] == "non_convergence");
  CHECK(error_of(r2)["exit_code"] == 3);
}
