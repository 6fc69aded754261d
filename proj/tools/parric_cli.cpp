// Command-line front end: generate, solve, verify and benchmark problems.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "parric/bench.hpp"
#include "parric/json_io.hpp"
#include "parric/kkt.hpp"
#include "parric/random.hpp"
#include "parric/riccati.hpp"
#include "parric/tree.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

int run_solve(const std::string& path, const std::string& backend, int ns,
              int pmin, int workers, const std::string& out_path) {
  const parric::MpcProblem p = parric::parse_problem(read_file(path));
  parric::Solution sol;
  if (backend == "serial") {
    sol = parric::solve_serial(p);
  } else if (backend == "parallel") {
    parric::ParallelConfig cfg;
    cfg.Ns = ns;
    cfg.p_min = pmin;
    cfg.workers = workers;
    sol = parric::solve_parallel(p, cfg).first;
  } else {
    std::cerr << "unknown backend: " << backend << "\n";
    return 1;
  }
  const std::string doc = parric::serialize_solution(sol);
  if (out_path.empty()) {
    std::cout << doc << "\n";
  } else {
    write_file(out_path, doc);
    std::cout << "objective " << sol.objective << " written to " << out_path
              << "\n";
  }
  return 0;
}

int run_verify(const std::string& path, int ns) {
  const parric::MpcProblem p = parric::parse_problem(read_file(path));
  bool ok = true;
  auto report = [&](const std::string& name, bool pass,
                    const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    ok = ok && pass;
  };

  const parric::ValidationReport vr = parric::validate_problem(p);
  report("assumptions", vr.ok,
         vr.ok ? "" : std::to_string(vr.violations.size()) + " violations");
  if (!vr.ok) return 1;

  const parric::Solution serial = parric::solve_serial(p);

  const parric::ResidualReport serial_res = parric::kkt_residual(p, serial);
  const double res_tol =
      1e-8 * (1.0 + parric::detail::max_abs(p.x0));
  report("serial KKT residual",
         serial_res.stationarity <= res_tol &&
             serial_res.feasibility <= res_tol,
         "stationarity " + std::to_string(serial_res.stationarity));

  parric::ParallelConfig cfg;
  cfg.Ns = ns;
  const parric::Solution parallel = parric::solve_parallel(p, cfg).first;
  const double par_diff = parric::solution_rel_diff(parallel, serial);
  report("parallel matches serial", par_diff <= 1e-9,
         "rel diff " + std::to_string(par_diff));

  int max_nu = 0;
  for (const auto& s : p.stages) max_nu = std::max(max_nu, s.nu());
  if (static_cast<long>(p.N()) * (p.nx() + max_nu) <= 5000) {
    const parric::Solution dense = parric::solve_kkt_dense(p);
    const double dense_diff = parric::solution_rel_diff(serial, dense);
    report("serial matches dense KKT", dense_diff <= 1e-8,
           "rel diff " + std::to_string(dense_diff));
  } else {
    std::cout << "SKIP dense KKT (problem too large)\n";
  }

  const parric::RiccatiFactorization f =
      parric::riccati_factorize(p, p.QxN);
  const double value_gap =
      std::abs(serial.objective - 0.5 * p.x0.dot(f.P[0] * p.x0)) /
      (1.0 + std::abs(serial.objective));
  report("objective identity", value_gap <= 1e-10,
         "rel gap " + std::to_string(value_gap));

  if (p.N() >= 2) {
    const parric::HorizonSplit split = parric::split_horizon(p.N(), ns);
    const parric::Batch batch =
        parric::make_batch(p, 0, split.boundaries[1]);
    const parric::ReductionIdentityReport idr =
        parric::check_reduction_identities(batch);
    report("condensation identities",
           idr.b_hat_residual <= 1e-9 && idr.a_hat_residual <= 1e-9 &&
               idr.qx_hat_residual <= 1e-9 && idr.rank_Qu <= idr.nx,
           "B residual " + std::to_string(idr.b_hat_residual));
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riccati-based solver for linear-quadratic MPC steps"};
  app.require_subcommand(1);

  std::string problem_path, out_path, backend = "serial";
  int ns = 2, pmin = 1, workers = 1;

  CLI::App* solve = app.add_subcommand("solve", "solve a problem file");
  solve->add_option("problem", problem_path, "problem JSON file")
      ->required();
  solve->add_option("--backend", backend, "serial or parallel")
      ->check(CLI::IsMember({"serial", "parallel"}));
  solve->add_option("--ns", ns, "batch length for the tree backend");
  solve->add_option("--pmin", pmin, "horizon at which reduction stops");
  solve->add_option("--workers", workers, "worker threads");
  solve->add_option("--out", out_path, "solution output file");

  CLI::App* verify =
      app.add_subcommand("verify", "run oracle cross-checks on a problem");
  verify->add_option("problem", problem_path, "problem JSON file")
      ->required();
  verify->add_option("--ns", ns, "batch length for the tree backend");

  parric::BenchConfig bench_cfg;
  bench_cfg.horizons = {4, 8, 16, 32, 64, 128, 256, 512};
  std::string csv_path;
  CLI::App* bench =
      app.add_subcommand("bench", "serial vs parallel timing study");
  bench->add_option("--nx", bench_cfg.nx, "state dimension");
  bench->add_option("--nu", bench_cfg.nu, "control dimension");
  bench->add_option("--ns", bench_cfg.Ns, "batch length");
  bench->add_option("--seeds", bench_cfg.seeds, "random systems per horizon");
  bench->add_option("--horizons", bench_cfg.horizons, "horizon list")
      ->delimiter(',');
  bench->add_option("--repeats", bench_cfg.repeats, "timing repeats");
  bench->add_option("--pmin", bench_cfg.p_min, "reduction stop horizon");
  bench->add_option("--workers", bench_cfg.workers, "worker threads");
  bench->add_option("--out", csv_path, "CSV output file");

  int gen_nx = 7, gen_nu = 5, gen_N = 16;
  std::uint64_t gen_seed = 0;
  CLI::App* gen = app.add_subcommand("gen", "generate a random problem");
  gen->add_option("--nx", gen_nx, "state dimension")->required();
  gen->add_option("--nu", gen_nu, "control dimension")->required();
  gen->add_option("--N", gen_N, "horizon")->required();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", out_path, "problem output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed())
      return run_solve(problem_path, backend, ns, pmin, workers, out_path);
    if (verify->parsed()) return run_verify(problem_path, ns);
    if (bench->parsed()) {
      const std::vector<parric::BenchRow> rows =
          parric::run_benchmark(bench_cfg);
      int failed = 0;
      for (const parric::BenchRow& row : rows) {
        if (!row.ok) {
          ++failed;
          std::cerr << "N=" << row.N << " seed=" << row.seed
                    << " failed: " << row.error << "\n";
        }
      }
      if (csv_path.empty()) {
        parric::write_csv(rows, std::cout);
      } else {
        std::ofstream out(csv_path);
        parric::write_csv(rows, out);
        std::cout << "wrote " << csv_path << "\n";
      }
      return failed == 0 ? 0 : 1;
    }
    if (gen->parsed()) {
      const parric::MpcProblem p =
          parric::generate_random_stable(gen_nx, gen_nu, gen_N, gen_seed);
      write_file(out_path, parric::serialize_problem(p));
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
