// Data model for finite-horizon linear-quadratic optimal control problems:
// stage-wise quadratic costs, linear dynamics, fixed initial state. The
// solvers in this library operate on these types only; they never touch
// files or global state.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace parric {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when the input-cost block of the backward recursion cannot be
/// factored as positive definite. `stage` is the offending stage index.
struct NotPositiveDefinite : std::runtime_error {
  int stage;
  explicit NotPositiveDefinite(int stage_index)
      : std::runtime_error("input-cost block at stage " +
                           std::to_string(stage_index) +
                           " is not positive definite"),
        stage(stage_index) {}
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// A required field is missing or has the wrong shape in a problem document.
struct SchemaError : std::runtime_error {
  std::string field;
  explicit SchemaError(std::string field_name)
      : std::runtime_error("missing or malformed field: " + field_name),
        field(std::move(field_name)) {}
};

/// The document is not valid JSON. `byte` is the offset reported by the
/// parser.
struct ParseError : std::runtime_error {
  std::size_t byte;
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what), byte(byte_offset) {}
};

struct SingularKkt : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Adjacent batch solutions disagree at a split point during propagation.
struct StitchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MaxIterExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyTimings : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Problem data

/// One stage of the horizon: dynamics x+ = A x + B u and cost
/// 1/2 [x;u]' [Qx Qxu; Qxu' Qu] [x;u]. The number of controls may differ
/// between stages (removing fixed controls shrinks B, Qxu, Qu).
struct StageData {
  Matrix A;    // nx x nx
  Matrix B;    // nx x nu
  Matrix Qx;   // nx x nx
  Matrix Qxu;  // nx x nu
  Matrix Qu;   // nu x nu

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
};

/// Equality-constrained problem over horizon N: sum of stage costs plus the
/// terminal cost 1/2 x_N' QxN x_N, subject to the dynamics and x_0 = x0.
struct MpcProblem {
  std::vector<StageData> stages;
  Matrix QxN;  // nx x nx
  Vector x0;   // nx

  int N() const { return static_cast<int>(stages.size()); }
  int nx() const { return static_cast<int>(x0.size()); }
};

/// Adds lower bounds 0 <= u on selected control indices of each stage.
/// `bounded[t]` holds the constrained indices, sorted ascending.
struct BoundConstrainedProblem {
  MpcProblem base;
  std::vector<std::vector<int>> bounded;
};

// ---------------------------------------------------------------------------
// Validation

enum class CostAssumption {
  JointStageCostPsd,  // [Qx Qxu; Qxu' Qu] must be positive semidefinite
  InputCostPd,        // Qu must be positive definite
  TerminalCostPsd,    // QxN must be positive semidefinite
};

inline const char* to_string(CostAssumption a) {
  switch (a) {
    case CostAssumption::JointStageCostPsd: return "joint stage cost PSD";
    case CostAssumption::InputCostPd: return "input cost PD";
    case CostAssumption::TerminalCostPsd: return "terminal cost PSD";
  }
  return "?";
}

struct ValidationReport {
  struct Violation {
    int stage;  // N designates the terminal cost
    CostAssumption assumption;
    double min_eigenvalue;
  };
  bool ok = true;
  std::vector<Violation> violations;
};

namespace detail {

inline Matrix symmetrize(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

inline double min_symmetric_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Throws DimensionMismatch if any matrix shape is inconsistent with the
/// stage layout or the state dimension implied by x0.
inline void check_dimensions(const MpcProblem& p) {
  const int nx = p.nx();
  if (p.N() < 1) throw DimensionMismatch("horizon must be at least 1");
  if (nx < 1) throw DimensionMismatch("state dimension must be at least 1");
  for (int t = 0; t < p.N(); ++t) {
    const StageData& s = p.stages[static_cast<std::size_t>(t)];
    const std::string at = " at stage " + std::to_string(t);
    if (s.A.rows() != nx || s.A.cols() != nx)
      throw DimensionMismatch("A must be nx x nx" + at);
    if (s.B.rows() != nx) throw DimensionMismatch("B must have nx rows" + at);
    const int nu = s.nu();
    if (s.Qx.rows() != nx || s.Qx.cols() != nx)
      throw DimensionMismatch("Qx must be nx x nx" + at);
    if (s.Qxu.rows() != nx || s.Qxu.cols() != nu)
      throw DimensionMismatch("Qxu must be nx x nu" + at);
    if (s.Qu.rows() != nu || s.Qu.cols() != nu)
      throw DimensionMismatch("Qu must be nu x nu" + at);
  }
  if (p.QxN.rows() != nx || p.QxN.cols() != nx)
    throw DimensionMismatch("QxN must be nx x nx");
}

/// Checks the cost assumptions every solver in this library relies on:
/// each joint stage cost PSD, each input cost PD, terminal cost PSD.
/// Eigenvalues of the symmetrized blocks are tested against `tol`.
inline ValidationReport validate_problem(const MpcProblem& p,
                                         double tol = 1e-10) {
  check_dimensions(p);
  ValidationReport report;
  auto flag = [&](int stage, CostAssumption a, double eig) {
    report.ok = false;
    report.violations.push_back({stage, a, eig});
  };
  for (int t = 0; t < p.N(); ++t) {
    const StageData& s = p.stages[static_cast<std::size_t>(t)];
    const int nx = s.nx(), nu = s.nu();
    Matrix joint(nx + nu, nx + nu);
    joint.topLeftCorner(nx, nx) = s.Qx;
    joint.topRightCorner(nx, nu) = s.Qxu;
    joint.bottomLeftCorner(nu, nx) = s.Qxu.transpose();
    joint.bottomRightCorner(nu, nu) = s.Qu;
    const double joint_min = detail::min_symmetric_eigenvalue(joint);
    if (joint_min < -tol) flag(t, CostAssumption::JointStageCostPsd, joint_min);
    if (nu > 0) {
      const double qu_min = detail::min_symmetric_eigenvalue(s.Qu);
      if (qu_min <= tol) flag(t, CostAssumption::InputCostPd, qu_min);
    }
  }
  const double term_min = detail::min_symmetric_eigenvalue(p.QxN);
  if (term_min < -tol)
    flag(p.N(), CostAssumption::TerminalCostPsd, term_min);
  return report;
}

// ---------------------------------------------------------------------------
// Exact comparison (used by round-trip and determinism checks)

inline bool exact_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.size() == 0) return true;
  return (a.array() == b.array()).all();
}

inline bool exact_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  if (a.size() == 0) return true;
  return (a.array() == b.array()).all();
}

inline bool operator==(const StageData& a, const StageData& b) {
  return exact_equal(a.A, b.A) && exact_equal(a.B, b.B) &&
         exact_equal(a.Qx, b.Qx) && exact_equal(a.Qxu, b.Qxu) &&
         exact_equal(a.Qu, b.Qu);
}

inline bool operator==(const MpcProblem& a, const MpcProblem& b) {
  return a.stages == b.stages && exact_equal(a.QxN, b.QxN) &&
         exact_equal(a.x0, b.x0);
}

}  // namespace parric
