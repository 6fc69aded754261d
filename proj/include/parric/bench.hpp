// Benchmark harness comparing the serial recursion against the tree solver
// over a range of horizons. Simulated parallel time follows the
// ideal-machine model (sum over tree levels of the slowest node, measured
// on single-worker runs so per-node times are contention free); wall time
// is measured with a real worker pool. Every run is checked against the
// serial solution before its timing is recorded.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "parric/random.hpp"
#include "parric/riccati.hpp"
#include "parric/tree.hpp"

namespace parric {

struct BenchConfig {
  int nx = 7;
  int nu = 5;
  int Ns = 2;
  std::vector<int> horizons;  // ascending
  int repeats = 3;
  int seeds = 10;
  int p_min = 1;
  int workers = 2;
};

struct BenchRow {
  int N = 0;
  int seed = 0;
  double serial_s = 0.0;
  double sim_parallel_s = 0.0;
  double wall_parallel_s = 0.0;
  int depth = 0;
  double max_residual = 0.0;
  bool ok = false;
  std::string error;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-node medians across repeated runs of the same tree schedule.
inline LevelTimings merge_timings(const std::vector<LevelTimings>& runs) {
  LevelTimings merged = runs.front();
  for (std::size_t level = 0; level < merged.levels.size(); ++level) {
    for (std::size_t node = 0; node < merged.levels[level].size(); ++node) {
      std::vector<double> samples;
      samples.reserve(runs.size());
      for (const LevelTimings& run : runs)
        samples.push_back(run.levels[level][node]);
      merged.levels[level][node] = median(std::move(samples));
    }
  }
  return merged;
}

inline void check_bench_config(const BenchConfig& cfg) {
  if (cfg.horizons.empty())
    throw std::invalid_argument("no horizons to benchmark");
  if (!std::is_sorted(cfg.horizons.begin(), cfg.horizons.end()))
    throw std::invalid_argument("horizons must be ascending");
  if (cfg.repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (cfg.seeds < 1) throw std::invalid_argument("seeds must be >= 1");
}

}  // namespace detail

inline std::vector<BenchRow> run_benchmark(const BenchConfig& cfg) {
  detail::check_bench_config(cfg);
  using clock = std::chrono::steady_clock;

  WorkerPool pool(cfg.workers);
  std::vector<BenchRow> rows;
  for (int N : cfg.horizons) {
    for (int seed = 0; seed < cfg.seeds; ++seed) {
      BenchRow row;
      row.N = N;
      row.seed = seed;
      try {
        const MpcProblem p = generate_random_stable(cfg.nx, cfg.nu, N,
                                                    static_cast<std::uint64_t>(seed));

        std::vector<double> serial_times;
        Solution serial_sol;
        for (int r = 0; r < cfg.repeats; ++r) {
          const auto start = clock::now();
          serial_sol = solve_serial(p);
          serial_times.push_back(detail::seconds_since(start));
        }
        row.serial_s = detail::median(std::move(serial_times));

        // Single-worker runs drive the ideal-machine estimate.
        std::vector<LevelTimings> sim_runs;
        Solution parallel_sol;
        for (int r = 0; r < cfg.repeats; ++r) {
          LevelTimings t;
          ReductionTree tree =
              build_tree(p, cfg.Ns, cfg.p_min, nullptr, &t);
          parallel_sol = propagate_solution(tree, nullptr, &t);
          if (r == 0) row.depth = tree.depth();
          sim_runs.push_back(std::move(t));
        }
        row.sim_parallel_s =
            simulated_parallel_time(detail::merge_timings(sim_runs));

        std::vector<double> wall_times;
        for (int r = 0; r < cfg.repeats; ++r) {
          const auto start = clock::now();
          ReductionTree tree = build_tree(p, cfg.Ns, cfg.p_min, &pool);
          const Solution s = propagate_solution(tree, &pool);
          wall_times.push_back(detail::seconds_since(start));
          (void)s;
        }
        row.wall_parallel_s = detail::median(std::move(wall_times));

        row.max_residual = solution_rel_diff(parallel_sol, serial_sol);
        if (row.max_residual > 1e-9) {
          row.error = "parallel solution deviates from serial";
        } else {
          row.ok = true;
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Fixed schema; rows that failed verification are omitted.
inline void write_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "N,seed,serial_s,sim_parallel_s,wall_parallel_s,depth,max_residual\n";
  char line[256];
  for (const BenchRow& row : rows) {
    if (!row.ok) continue;
    std::snprintf(line, sizeof(line), "%d,%d,%.9e,%.9e,%.9e,%d,%.3e\n",
                  row.N, row.seed, row.serial_s, row.sim_parallel_s,
                  row.wall_parallel_s, row.depth, row.max_residual);
    out << line;
  }
}

}  // namespace parric
